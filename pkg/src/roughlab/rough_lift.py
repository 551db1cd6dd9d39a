"""Level-3 lifts of piecewise-linear paths, variation norms, and the greedy
interval count used to bound Jacobian growth.

A lifted path stores one group increment per grid interval (the signature of
the straight chord, exp of the increment) plus cached running products from
time zero, so that the increment over any pair of grid times is available
through one inverse and one product.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gaussian_model import GridSample
from .tensor_algebra import (
    TruncatedTensor,
    group_inverse,
    homogeneous_norm,
    tensor_mul,
    unit,
)

__all__ = [
    "GridRoughPath",
    "VariationReport",
    "lift_piecewise_linear",
    "lift_values",
    "coarsen",
    "p_variation",
    "p_variation_values",
    "variation_2d",
    "greedy_count",
]

MAX_PVAR_POINTS = 2**12


@dataclass
class GridRoughPath:
    """Rough path on a grid: per-interval group increments in G^3(R^d).

    Increment arrays carry optional leading batch axes followed by
    (n_intervals, d, ...).  ``cum*`` are the running products from 0, with
    one more time slot than the increments.
    """

    grid: np.ndarray
    inc1: np.ndarray  # (..., N, d)
    inc2: np.ndarray  # (..., N, d, d)
    inc3: np.ndarray  # (..., N, d, d, d)
    cum1: np.ndarray = field(repr=False, default=None)
    cum2: np.ndarray = field(repr=False, default=None)
    cum3: np.ndarray = field(repr=False, default=None)

    @property
    def dim(self) -> int:
        return self.inc1.shape[-1]

    @property
    def n_intervals(self) -> int:
        return self.inc1.shape[-2]

    @property
    def batch_shape(self) -> tuple:
        return self.inc1.shape[:-2]

    def point(self, i: int) -> TruncatedTensor:
        """Running product x_{0, t_i} as a group element."""
        ones = np.ones(self.batch_shape)
        return TruncatedTensor(ones, self.cum1[..., i, :],
                               self.cum2[..., i, :, :], self.cum3[..., i, :, :, :])

    def increment(self, i: int, j: int) -> TruncatedTensor:
        """Group increment x_{t_i, t_j} = x_{0,t_i}^{-1} (x) x_{0,t_j}."""
        if i == j:
            return unit(self.dim, self.batch_shape)
        return tensor_mul(group_inverse(self.point(i)), self.point(j))

    def interval_tensor(self, i: int) -> TruncatedTensor:
        ones = np.ones(self.batch_shape)
        return TruncatedTensor(ones, self.inc1[..., i, :],
                               self.inc2[..., i, :, :], self.inc3[..., i, :, :, :])

    def select_path(self, k) -> "GridRoughPath":
        """Extract one path from a batched lift."""
        return GridRoughPath(
            grid=self.grid, inc1=self.inc1[k], inc2=self.inc2[k], inc3=self.inc3[k],
            cum1=self.cum1[k], cum2=self.cum2[k], cum3=self.cum3[k],
        )


def lift_values(values: np.ndarray, grid: np.ndarray) -> GridRoughPath:
    """Lift sampled path values (..., N+1, d) along their straight chords.

    Each interval contributes exp(dX); running products are accumulated with
    the truncated tensor product, so multiplicativity over grid points holds
    by construction.
    """
    values = np.asarray(values, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if values.shape[-2] != grid.shape[0]:
        raise ValueError("values and grid length mismatch")
    if grid.shape[0] < 2:
        raise ValueError("need at least 2 grid points")
    dx = np.diff(values, axis=-2)
    inc2 = 0.5 * np.einsum("...i,...j->...ij", dx, dx)
    inc3 = np.einsum("...i,...j,...k->...ijk", dx, dx, dx) / 6.0
    batch = values.shape[:-2]
    n = dx.shape[-2]
    d = dx.shape[-1]
    cum1 = np.zeros(batch + (n + 1, d))
    cum2 = np.zeros(batch + (n + 1, d, d))
    cum3 = np.zeros(batch + (n + 1, d, d, d))
    c1 = np.zeros(batch + (d,))
    c2 = np.zeros(batch + (d, d))
    c3 = np.zeros(batch + (d, d, d))
    for i in range(n):
        a1 = dx[..., i, :]
        a2 = inc2[..., i, :, :]
        a3 = inc3[..., i, :, :, :]
        c3 = c3 + np.einsum("...ij,...k->...ijk", c2, a1) \
            + np.einsum("...i,...jk->...ijk", c1, a2) + a3
        c2 = c2 + np.einsum("...i,...j->...ij", c1, a1) + a2
        c1 = c1 + a1
        cum1[..., i + 1, :] = c1
        cum2[..., i + 1, :, :] = c2
        cum3[..., i + 1, :, :, :] = c3
    return GridRoughPath(grid=grid, inc1=dx, inc2=inc2, inc3=inc3,
                         cum1=cum1, cum2=cum2, cum3=cum3)


def lift_piecewise_linear(sample: GridSample) -> GridRoughPath:
    return lift_values(sample.values, sample.grid)


def coarsen(path: GridRoughPath, stride: int) -> GridRoughPath:
    """Restrict a lift to every stride-th grid point (stride a power of 2).

    Coarse increments are the exact group products of the fine ones, so the
    result is the same rough path viewed on the coarser partition.
    """
    if stride < 1 or (stride & (stride - 1)) != 0:
        raise ValueError("stride must be a positive power of 2")
    if path.n_intervals % stride != 0:
        raise ValueError("stride does not divide the number of intervals")
    i1, i2, i3 = path.inc1, path.inc2, path.inc3
    s = stride
    while s > 1:
        a1, b1 = i1[..., 0::2, :], i1[..., 1::2, :]
        a2, b2 = i2[..., 0::2, :, :], i2[..., 1::2, :, :]
        a3, b3 = i3[..., 0::2, :, :, :], i3[..., 1::2, :, :, :]
        i3 = (
            a3 + b3
            + np.einsum("...i,...jk->...ijk", a1, b2)
            + np.einsum("...ij,...k->...ijk", a2, b1)
        )
        i2 = a2 + b2 + np.einsum("...i,...j->...ij", a1, b1)
        i1 = a1 + b1
        s //= 2
    return GridRoughPath(
        grid=path.grid[::stride],
        inc1=i1,
        inc2=i2,
        inc3=i3,
        cum1=path.cum1[..., ::stride, :],
        cum2=path.cum2[..., ::stride, :, :],
        cum3=path.cum3[..., ::stride, :, :, :],
    )


@dataclass(frozen=True)
class VariationReport:
    p: float
    value: float
    partition: np.ndarray  # indices into the stored grid achieving the sup


def _pvar_dp(dist_pow, n: int):
    """Maximize sum of d(i,j)^p over subpartitions by dynamic programming.

    dist_pow(i, j) must return d(t_i, t_j)^p for i < j.  O(n^2) evaluations.
    """
    best = np.full(n + 1, -np.inf)
    best[0] = 0.0
    prev = np.zeros(n + 1, dtype=int)
    for j in range(1, n + 1):
        cand = best[:j] + dist_pow(np.arange(j), j)
        k = int(np.argmax(cand))
        best[j] = cand[k]
        prev[j] = k
    points = [n]
    while points[-1] > 0:
        points.append(int(prev[points[-1]]))
    return best[n], np.array(points[::-1], dtype=int)


def p_variation_values(values: np.ndarray, p: float, interval=None) -> VariationReport:
    """Exact p-variation of discrete path values over grid subpartitions."""
    if p < 1.0:
        raise ValueError("p must be >= 1")
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    i0, i1 = (0, values.shape[0] - 1) if interval is None else interval
    if i1 <= i0:
        raise ValueError("empty interval")
    seg = values[i0 : i1 + 1]
    n = seg.shape[0] - 1
    if n + 1 > MAX_PVAR_POINTS:
        stride = int(np.ceil((n + 1) / MAX_PVAR_POINTS))
        seg = seg[::stride]
        n = seg.shape[0] - 1

    def dist_pow(ii, j):
        return np.linalg.norm(seg[j] - seg[ii], axis=-1) ** p

    val, pts = _pvar_dp(dist_pow, n)
    return VariationReport(p=p, value=float(val ** (1.0 / p)), partition=pts + i0)


def _stacked_points(path: GridRoughPath, i0: int, i1: int) -> TruncatedTensor:
    """Running products x_{0, t_i} for i0 <= i <= i1, batched over time."""
    if path.batch_shape:
        raise ValueError("variation norms operate on a single path; use select_path")
    sl = slice(i0, i1 + 1)
    ones = np.ones(i1 - i0 + 1)
    return TruncatedTensor(ones, path.cum1[sl], path.cum2[sl], path.cum3[sl])


def _tt_take(t: TruncatedTensor, idx) -> TruncatedTensor:
    return TruncatedTensor(
        np.asarray(t.level0)[idx], t.level1[idx], t.level2[idx], t.level3[idx]
    )


def _group_dist_matrix_column(inv_pts: TruncatedTensor, pts: TruncatedTensor, j: int):
    """Distances d(x_{t_i}, x_{t_j}) for all i < j, in one batched product."""
    target = _tt_take(pts, slice(j, j + 1))
    return homogeneous_norm(tensor_mul(_tt_take(inv_pts, slice(0, j)), target))


def p_variation(path, p: float, interval=None) -> VariationReport:
    """p-variation of a lifted rough path (homogeneous-norm distance) or of
    raw path values (Euclidean distance)."""
    if isinstance(path, np.ndarray):
        return p_variation_values(path, p, interval)
    if not isinstance(path, GridRoughPath):
        raise TypeError("expected GridRoughPath or value array")
    if p < 1.0:
        raise ValueError("p must be >= 1")
    i0, i1 = (0, path.n_intervals) if interval is None else interval
    if i1 <= i0:
        raise ValueError("empty interval")
    if i1 - i0 + 1 > MAX_PVAR_POINTS:
        stride = int(np.ceil((i1 - i0 + 1) / MAX_PVAR_POINTS))
        idx_map = np.arange(i0, i1 + 1, stride)
        if idx_map[-1] != i1:
            idx_map = np.append(idx_map, i1)
    else:
        idx_map = np.arange(i0, i1 + 1)
    pts = _stacked_points(path, 0, path.n_intervals)
    pts = _tt_take(pts, idx_map)
    inv_pts = group_inverse(pts)
    n = idx_map.shape[0] - 1

    def dist_pow(ii, j):
        return _group_dist_matrix_column(inv_pts, pts, j) ** p

    val, idx = _pvar_dp(dist_pow, n)
    return VariationReport(p=p, value=float(val ** (1.0 / p)), partition=idx_map[idx])


def variation_2d(values: np.ndarray, rho: float, sgrid=None, tgrid=None) -> float:
    """2D rho-variation of a grid function from its rectangular increments.

    The supremum is restricted to dyadic coarsenings of the stored grid
    (independent strides along the two axes), which makes the result a
    documented lower bound of the true supremum over all partitions.
    """
    if rho < 1.0:
        raise ValueError("rho must be >= 1")
    f = np.asarray(values, dtype=float)
    ns, nt = f.shape[0] - 1, f.shape[1] - 1
    best = 0.0
    stride_s = 1
    while stride_s <= ns:
        stride_t = 1
        while stride_t <= nt:
            idx_s = np.arange(0, ns + 1, stride_s)
            if idx_s[-1] != ns:
                idx_s = np.append(idx_s, ns)
            idx_t = np.arange(0, nt + 1, stride_t)
            if idx_t[-1] != nt:
                idx_t = np.append(idx_t, nt)
            sub = f[np.ix_(idx_s, idx_t)]
            rect = sub[1:, 1:] - sub[1:, :-1] - sub[:-1, 1:] + sub[:-1, :-1]
            best = max(best, float(np.sum(np.abs(rect) ** rho) ** (1.0 / rho)))
            stride_t *= 2
        stride_s *= 2
    return best


def greedy_count(path: GridRoughPath, beta: float, p: float, interval=None) -> int:
    """Number of unit-budget intervals: repeatedly stop when the p-variation
    (to the power p) since the last stop first reaches beta.

    Counts threshold crossings; a final segment that never reaches beta does
    not count.  Computed over grid points only.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    i0, i1 = (0, path.n_intervals) if interval is None else interval
    pts = _stacked_points(path, i0, i1)
    inv_pts = group_inverse(pts)
    n = i1 - i0
    count = 0
    start = 0
    while start < n:
        # extend the right endpoint until the budget is reached
        best = np.full(n + 1, -np.inf)
        best[start] = 0.0
        hit = None
        for j in range(start + 1, n + 1):
            d_pow = _group_dist_matrix_column(inv_pts, pts, j)[start:] ** p
            best[j] = np.max(best[start:j] + d_pow)
            if best[j] >= beta:
                hit = j
                break
        if hit is None:
            break
        count += 1
        start = hit
    return count
