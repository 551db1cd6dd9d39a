"""Covariance models, Volterra kernels, and exact-covariance path sampling.

Three driving processes are supported on a finite horizon [0, T]:

* Brownian motion, R(s, t) = min(s, t);
* fractional Brownian motion, R(s, t) = (s^2H + t^2H - |t-s|^2H) / 2;
* the Riemann-Liouville process built from the power kernel
  K(t, s) = c (t - s)^(H - 1/2) on {s < t}.

Covariances are exact; sampling draws each i.i.d. component with the exact
joint law on the grid via a Cholesky factor of the Gram matrix.  Paths are
reproducible per (seed, path_index) through counter-based RNG streams, so
results do not depend on batching or thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

__all__ = [
    "CovarianceModel",
    "VolterraKernel",
    "GridSample",
    "brownian_motion",
    "fbm",
    "riemann_liouville",
    "brownian_kernel",
    "riemann_liouville_kernel",
    "covariance",
    "rect_increments",
    "sample_paths",
    "sample_path_array",
]

MAX_GRID = 2**12  # Gram factorization is O(N^3); larger grids are refused


@dataclass(frozen=True)
class CovarianceModel:
    """Evaluator for the common covariance function R(s, t) of the components."""

    kind: str  # "bm" | "fbm" | "rl"
    T: float = 1.0
    H: float = 0.5
    c: float = 1.0  # kernel constant, only used by the "rl" kind

    def __post_init__(self):
        if self.kind not in ("bm", "fbm", "rl"):
            raise ValueError("unknown covariance kind %r" % (self.kind,))
        if self.kind in ("fbm", "rl") and not 0.0 < self.H < 1.0:
            raise ValueError("H must lie in (0, 1)")

    def __call__(self, s, t):
        return covariance(self, s, t)

    def variance(self, t):
        """R(t) := R(t, t)."""
        t = np.asarray(t, dtype=float)
        if self.kind == "bm":
            return t.copy()
        if self.kind == "fbm":
            return t ** (2.0 * self.H)
        return self.c**2 * t ** (2.0 * self.H) / (2.0 * self.H)

    def sigma_sq(self, s, t):
        """Variance of the increment, sigma^2(s, t) = E[(X_t - X_s)^2]."""
        return self.variance(s) + self.variance(t) - 2.0 * covariance(self, s, t)

    def gram(self, times: np.ndarray) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        return covariance(self, times[:, None], times[None, :])

    def rho(self) -> float:
        """Heuristic 2D variation exponent of R: 1 for BM, 1/(2H) otherwise."""
        if self.kind == "bm":
            return 1.0
        return max(1.0, 1.0 / (2.0 * self.H))


def brownian_motion(T: float = 1.0) -> CovarianceModel:
    return CovarianceModel("bm", T=T)


def fbm(H: float, T: float = 1.0) -> CovarianceModel:
    return CovarianceModel("fbm", T=T, H=H)


def riemann_liouville(H: float, T: float = 1.0, c: float = 1.0) -> CovarianceModel:
    return CovarianceModel("rl", T=T, H=H, c=c)


def _rl_cov(H: float, c: float, s, t):
    """integral_0^min(s,t) K(t,r) K(s,r) dr for the power kernel, via the
    Euler-integral representation (Gauss hypergeometric in min/max)."""
    shape = np.broadcast(np.asarray(s, dtype=float), np.asarray(t, dtype=float)).shape
    lo = np.atleast_1d(np.minimum(s, t)).astype(float)
    hi = np.atleast_1d(np.maximum(s, t)).astype(float)
    lo, hi = np.broadcast_arrays(lo, hi)
    out = np.zeros(lo.shape)
    mask = lo > 0.0
    if np.any(mask):
        lo_m, hi_m = lo[mask], hi[mask]
        out[mask] = (
            lo_m ** (H + 0.5)
            * hi_m ** (H - 0.5)
            * special.hyp2f1(0.5 - H, 1.0, H + 1.5, lo_m / hi_m)
            / (H + 0.5)
        )
    return c**2 * out.reshape(shape)


def covariance(model: CovarianceModel, s, t):
    """R(s, t); symmetric, with R(0, t) = 0 for every supported kind."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < -1e-12) or np.any(t < -1e-12) or np.any(s > model.T + 1e-12) or np.any(t > model.T + 1e-12):
        raise ValueError("times out of range [0, T]")
    if model.kind == "bm":
        return np.minimum(s, t)
    if model.kind == "fbm":
        H2 = 2.0 * model.H
        return 0.5 * (s**H2 + t**H2 - np.abs(t - s) ** H2)
    return _rl_cov(model.H, model.c, s, t)


def rect_increments(model: CovarianceModel, sgrid: np.ndarray, tgrid: np.ndarray | None = None) -> np.ndarray:
    """Matrix of rectangular increments of R over the cells of the grids.

    Entry (i, j) is R evaluated on the corners of
    [sgrid_i, sgrid_{i+1}] x [tgrid_j, tgrid_{j+1}], which equals
    E[X_{cell_i} X_{cell_j}] for the increment process.
    """
    if tgrid is None:
        tgrid = sgrid
    corners = covariance(model, np.asarray(sgrid)[:, None], np.asarray(tgrid)[None, :])
    return corners[1:, 1:] - corners[1:, :-1] - corners[:-1, 1:] + corners[:-1, :-1]


@dataclass(frozen=True)
class VolterraKernel:
    """K(t, s) together with its t-derivative and singularity exponent.

    K vanishes on {s >= t}; the power kernel obeys
    |K(t,s)| <= C s^(-alpha) (t-s)^(-alpha) and
    |dK/dt| <= C (t-s)^(-(alpha+1)) with alpha = max(0, 1/2 - H).
    """

    kind: str  # "bm" | "rl"
    T: float = 1.0
    H: float = 0.5
    c: float = 1.0

    @property
    def alpha(self) -> float:
        if self.kind == "bm":
            return 0.0
        return max(0.0, 0.5 - self.H)

    def __call__(self, t, s):
        return kernel_eval(self, t, s)

    def dt(self, t, s):
        return kernel_dt(self, t, s)

    def measure_increment(self, r_lo, r_hi, s):
        """integral of K(dr, s) over [r_lo, r_hi], exact: K(r_hi,s) - K(r_lo,s).

        Valid for cells with s <= r_lo (the only ones the quadratures use).
        """
        return kernel_eval(self, r_hi, s) - kernel_eval(self, r_lo, s)


def brownian_kernel(T: float = 1.0) -> VolterraKernel:
    return VolterraKernel("bm", T=T)


def riemann_liouville_kernel(H: float, T: float = 1.0, c: float = 1.0) -> VolterraKernel:
    if not 0.0 < H < 1.0:
        raise ValueError("H must lie in (0, 1)")
    return VolterraKernel("rl", T=T, H=H, c=c)


def kernel_eval(k: VolterraKernel, t, s):
    """K(t, s); zero on {s > t}, and the s -> t limit on the diagonal
    (infinite for the power kernel with H < 1/2)."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if k.kind == "bm":
        return np.where(s < t, 1.0, np.where(s == t, 1.0, 0.0))
    diff = t - s
    with np.errstate(divide="ignore", invalid="ignore"):
        val = k.c * np.where(diff > 0, diff, np.nan) ** (k.H - 0.5)
    if k.H < 0.5:
        val = np.where(diff == 0, np.inf, val)
    else:
        val = np.where(diff == 0, 0.0 if k.H > 0.5 else k.c, val)
    return np.where(diff < 0, 0.0, val)


def kernel_dt(k: VolterraKernel, t, s):
    """dK/dt; zero for the Brownian kernel away from the jump."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if k.kind == "bm":
        return np.zeros(np.broadcast(t, s).shape)
    diff = t - s
    with np.errstate(divide="ignore", invalid="ignore"):
        val = k.c * (k.H - 0.5) * np.where(diff > 0, diff, np.nan) ** (k.H - 1.5)
    return np.where(diff <= 0, 0.0, val)


def kernel_antideriv(k: VolterraKernel, t, s):
    """integral_s^t K(r, s) dr, closed form; zero for t <= s."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    diff = np.maximum(t - s, 0.0)
    if k.kind == "bm":
        return diff
    return k.c * diff ** (k.H + 0.5) / (k.H + 0.5)


def model_for_kernel(kernel: VolterraKernel) -> CovarianceModel:
    """The covariance model of the Volterra process this kernel generates."""
    if kernel.kind == "bm":
        return brownian_motion(kernel.T)
    return riemann_liouville(kernel.H, kernel.T, kernel.c)


@dataclass(frozen=True)
class GridSample:
    """One d-dimensional sample path on a time grid; values[0] == 0."""

    grid: np.ndarray
    values: np.ndarray  # (len(grid), d)
    seed: int
    path_index: int = 0

    @property
    def dim(self) -> int:
        return self.values.shape[-1]


@dataclass
class _Factor:
    """Cholesky-like factor of the Gram matrix on grid[1:]."""

    grid: np.ndarray
    L: np.ndarray
    jitter: float
    spectral_fallback: bool = False


_FACTOR_CACHE: dict = {}


def _factorize(model: CovarianceModel, grid: np.ndarray) -> _Factor:
    key = (model.kind, model.T, model.H, model.c, grid.shape[0], float(grid[1]), float(grid[-1]))
    hit = _FACTOR_CACHE.get(key)
    if hit is not None and np.array_equal(hit.grid, grid):
        return hit
    gram = model.gram(grid[1:])
    tr = float(np.trace(gram))
    n = gram.shape[0]
    jitters = [0.0] + [tr * 10.0**e for e in range(-14, -9)]
    for jit in jitters:
        try:
            L = np.linalg.cholesky(gram + jit * np.eye(n))
            fac = _Factor(grid=grid.copy(), L=L, jitter=jit)
            _FACTOR_CACHE[key] = fac
            return fac
        except np.linalg.LinAlgError:
            continue
    w, U = np.linalg.eigh(gram)
    if np.min(w) < -1e-8 * max(tr, 1.0):
        raise np.linalg.LinAlgError(
            "Gram matrix is not PSD even after jitter escalation"
        )
    L = U * np.sqrt(np.clip(w, 0.0, None))
    fac = _Factor(grid=grid.copy(), L=L, jitter=jitters[-1], spectral_fallback=True)
    _FACTOR_CACHE[key] = fac
    return fac


def _path_rng(seed: int, path_index: int) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, path_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_path_array(
    model: CovarianceModel,
    grid: np.ndarray,
    d: int,
    n_paths: int,
    seed: int,
    path_offset: int = 0,
) -> np.ndarray:
    """Sample paths with the exact joint law; returns (n_paths, len(grid), d).

    Path k of a call with path_offset=o is identical to path k+o of a call
    with path_offset=0: the stream only depends on (seed, global path index).
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.shape[0] < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing with >= 2 points")
    if abs(grid[0]) > 1e-15:
        raise ValueError("grid must start at 0")
    if grid.shape[0] - 1 > MAX_GRID:
        raise ValueError("grid larger than %d cells" % MAX_GRID)
    fac = _factorize(model, grid)
    n = grid.shape[0] - 1
    out = np.zeros((n_paths, n + 1, d))
    for k in range(n_paths):
        z = _path_rng(seed, path_offset + k).standard_normal((n, d))
        out[k, 1:, :] = fac.L @ z
    return out


def sample_paths(
    model: CovarianceModel,
    grid: np.ndarray,
    d: int,
    n_paths: int,
    seed: int,
) -> list[GridSample]:
    values = sample_path_array(model, grid, d, n_paths, seed)
    grid = np.asarray(grid, dtype=float)
    return [
        GridSample(grid=grid, values=values[k], seed=seed, path_index=k)
        for k in range(n_paths)
    ]


def dyadic_grid(level: int, T: float = 1.0) -> np.ndarray:
    """t_i = i T / 2^level for i = 0 .. 2^level."""
    return np.linspace(0.0, T, 2**level + 1)
