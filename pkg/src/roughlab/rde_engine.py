"""Step-3 Euler solver for RDEs driven by level-3 rough paths, Jacobian
flows, controlled rough paths, and the rough integral.

Index conventions (everything broadcasts over leading batch axes):

* vector fields: ``V(y)`` has shape (e, d); ``dV[a, j, c]`` is the
  derivative of ``V[a, j]`` in state direction ``c``, and so on for the
  higher derivatives (state axes appended on the right);
* driver levels contract in chronological order: the level-2 block
  ``x2[j, k]`` has ``j`` the earlier index, the level-3 block ``x3[j, k, l]``
  runs ``j`` earliest to ``l`` latest;
* controlled paths store derivative axes in front of the value shape, so
  ``phi_prime[t, j, ...]`` is the Gubinelli derivative in direction ``j``.

The local step combines the field tensors

    step2[a, j, k] = sum_c dV[a, k, c] V[c, j]
    step3[a, j, k, l] = dV(step2) + d2V(V, V)

with the driver levels; the Jacobian is advanced multiplicatively with the
matching expansion of the linear equation it satisfies.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .rough_lift import GridRoughPath

__all__ = [
    "VectorFieldSet",
    "FlowSolution",
    "ControlledPath",
    "ScalarMap",
    "SmoothVectorMap",
    "solve_rde",
    "malliavin_kernel",
    "rough_integral",
    "RoughIntegralResult",
    "controlled_product",
    "controlled_compose",
    "controlled_from_flow",
    "controlled_from_driver",
    "controlled_field_of_flow",
    "field_step_tensors",
    "constant_field",
    "linear_field",
    "sincos_field",
    "ito_augmented_field",
    "commuting_field",
    "get_field",
    "scalar_map",
]

COND_LIMIT = 1e10


@dataclass(frozen=True)
class VectorFieldSet:
    """Vector fields with analytic derivatives up to third order."""

    e: int
    d: int
    v: callable  # y (..., e) -> (..., e, d)
    dv: callable  # -> (..., e, d, e)
    d2v: callable  # -> (..., e, d, e, e)
    d3v: callable  # -> (..., e, d, e, e, e)
    name: str = "field"
    smooth_order: int = 4

    def __call__(self, y):
        return self.v(y)


def field_step_tensors(vf: VectorFieldSet, y: np.ndarray, with_step3: bool = True):
    """The composed tensors contracting against driver levels 2 and 3."""
    V = vf.v(y)
    dV = vf.dv(y)
    step2 = np.einsum("...akc,...cj->...ajk", dV, V)
    if not with_step3:
        return V, step2, None
    d2V = vf.d2v(y)
    step3 = np.einsum("...alc,...cjk->...ajkl", dV, step2) + np.einsum(
        "...alcm,...cj,...mk->...ajkl", d2V, V, V, optimize=True
    )
    return V, step2, step3


def _assemble_step(vf: VectorFieldSet, y, x1, x2, x3):
    """State increment and Jacobian multiplier for one grid interval.

    The multiplier is the exact derivative of the discrete state update
    (equivalently, the matching expansion of the linear Jacobian equation).
    Driver levels are contracted in early to keep every product a small
    two-operand contraction.
    """
    V = vf.v(y)
    dV = vf.dv(y)
    d2V = vf.d2v(y)
    d3V = vf.d3v(y)
    step2 = np.einsum("...akc,...cj->...ajk", dV, V)

    # shared partial contractions of the level-3 block
    r = np.einsum("...mj,...jkl->...mkl", V, x3)  # V on the earliest slot
    z1 = np.einsum("...mjk,...jkl->...ml", step2, x3)
    z2 = np.einsum("...nk,...mkl->...mnl", V, r)

    # state increment: V x1 + step2 x2 + step3 x3
    dy = (
        np.einsum("...aj,...j->...a", V, x1)
        + np.einsum("...ajk,...jk->...a", step2, x2)
        + np.einsum("...alc,...cl->...a", dV, z1)
        + np.einsum("...alcm,...cml->...a", d2V, np.einsum("...mk,...ckl->...cml", V, r))
    )

    # Jacobian multiplier: identity + level-1/2/3 blocks
    eye = np.eye(vf.e)
    B1 = np.einsum("...ajc,...j->...ac", dV, x1)
    w1 = np.einsum("...bjc,...jk->...bck", dV, x2)
    t_gg = np.einsum("...akb,...bck->...ac", dV, w1)
    q = np.einsum("...mj,...jk->...mk", V, x2)
    t_h = np.einsum("...akcm,...mk->...ac", d2V, q)
    B2 = t_gg + t_h
    u = np.einsum("...xjc,...jkl->...xckl", dV, x3)
    w = np.einsum("...bkx,...xckl->...bcl", dV, u)
    t_ggg = np.einsum("...alb,...bcl->...ac", dV, w)
    s = np.einsum("...bkcm,...mkl->...bcl", d2V, r)
    t_gh = np.einsum("...alb,...bcl->...ac", dV, s)
    H = np.einsum("...albm,...mj->...abjl", d2V, V)
    v1 = np.einsum("...bkc,...jkl->...bcjl", dV, x3)
    t_hg1 = np.einsum("...abjl,...bcjl->...ac", H, v1)
    v2 = np.einsum("...bjc,...jkl->...bckl", dV, x3)
    t_hg2 = np.einsum("...abkl,...bckl->...ac", H, v2)
    t_k1 = np.einsum("...alcm,...ml->...ac", d2V, z1)
    t_k2 = np.einsum("...alcmn,...mnl->...ac", d3V, z2)
    B3 = t_ggg + t_gh + t_hg1 + t_hg2 + t_k1 + t_k2
    return dy, eye + B1 + B2 + B3


@dataclass
class FlowSolution:
    """Grid-sampled state, Jacobian, and inverse Jacobian of an RDE solve."""

    grid: np.ndarray
    Y: np.ndarray  # (..., N+1, e)
    J: np.ndarray  # (..., N+1, e, e)
    J_inv: np.ndarray
    cond_max: float
    driver: GridRoughPath = field(repr=False, default=None)
    ill_conditioned: bool = False

    @property
    def e(self) -> int:
        return self.Y.shape[-1]

    def jacobian_between(self, s_idx: int, t_idx: int) -> np.ndarray:
        """J_{t<-s} = J_t J_s^{-1}."""
        return self.J[..., t_idx, :, :] @ self.J_inv[..., s_idx, :, :]


def solve_rde(vf: VectorFieldSet, driver: GridRoughPath, y0) -> FlowSolution:
    """Solve dY = V(Y) dX and the Jacobian flow along a lifted driver.

    Each grid interval advances the state by the degree-3 local expansion
    V x + step2 x2 + step3 x3; the Jacobian uses the matching multiplicative
    update and is inverted per node, with condition monitoring.
    """
    if driver.dim != vf.d:
        raise ValueError("driver dimension %d != field driver dim %d" % (driver.dim, vf.d))
    n = driver.n_intervals
    batch = driver.batch_shape
    y0 = np.asarray(y0, dtype=float)
    if y0.shape[-1] != vf.e:
        raise ValueError("y0 has dim %d, field expects %d" % (y0.shape[-1], vf.e))
    Y = np.zeros(batch + (n + 1, vf.e))
    J = np.zeros(batch + (n + 1, vf.e, vf.e))
    Y[..., 0, :] = y0
    J[..., 0, :, :] = np.eye(vf.e)
    for i in range(n):
        y = Y[..., i, :]
        x1 = driver.inc1[..., i, :]
        x2 = driver.inc2[..., i, :, :]
        x3 = driver.inc3[..., i, :, :, :]
        dy, M = _assemble_step(vf, y, x1, x2, x3)
        Y[..., i + 1, :] = y + dy
        J[..., i + 1, :, :] = M @ J[..., i, :, :]
    if not np.all(np.isfinite(Y)) or not np.all(np.isfinite(J)):
        raise FloatingPointError("RDE solve produced non-finite values")
    J_inv = np.linalg.inv(J)
    cond_max = float(np.max(np.linalg.cond(J)))
    ill = cond_max > COND_LIMIT
    if ill:
        warnings.warn(
            "Jacobian condition number %.3g exceeds %.1g; transported "
            "quantities are untrustworthy" % (cond_max, COND_LIMIT)
        )
    return FlowSolution(grid=driver.grid, Y=Y, J=J, J_inv=J_inv,
                        cond_max=cond_max, driver=driver, ill_conditioned=ill)


def malliavin_kernel(fs: FlowSolution, vf: VectorFieldSet, s_idx: int, t_idx: int):
    """First-variation kernel at grid times: zero for s >= t, otherwise the
    flow Jacobian from s to t applied to V at the time-s state."""
    if fs.ill_conditioned:
        warnings.warn("using flow Jacobian flagged as ill-conditioned")
    batch = fs.Y.shape[:-2]
    if s_idx >= t_idx:
        return np.zeros(batch + (fs.e, vf.d))
    V_s = vf.v(fs.Y[..., s_idx, :])
    return fs.jacobian_between(s_idx, t_idx) @ V_s


# ---------------------------------------------------------------------------
# controlled rough paths


@dataclass
class ControlledPath:
    """Path controlled by a driver, with first and second derivative
    processes; remainders are residuals of the defining relations.

    ``phi`` has shape (N+1,) + S; ``phi_prime`` (N+1, d) + S;
    ``phi_second`` (N+1, d, d) + S.
    """

    grid: np.ndarray
    phi: np.ndarray
    phi_prime: np.ndarray
    phi_second: np.ndarray

    @property
    def value_shape(self) -> tuple:
        return self.phi.shape[1:]

    @property
    def d(self) -> int:
        return self.phi_prime.shape[1]

    def remainders(self, driver: GridRoughPath):
        """Per-interval residuals (R_phi, R_phi_prime) of the controlled
        relations; identically the difference between increments and their
        driver expansions."""
        x1, x2 = driver.inc1, driver.inc2
        d_phi = np.diff(self.phi, axis=0)
        d_prime = np.diff(self.phi_prime, axis=0)
        lead = self.phi_prime[:-1]
        second = self.phi_second[:-1]
        r_phi = (
            d_phi
            - np.einsum("tj...,tj->t...", lead, x1)
            - np.einsum("tjk...,tjk->t...", second, x2)
        )
        r_prime = d_prime - np.einsum("tjk...,tj->tk...", second, x1)
        return r_phi, r_prime


@dataclass(frozen=True)
class RoughIntegralResult:
    grid: np.ndarray
    z: np.ndarray  # running integral at grid points, (N+1,) + S'
    z_prime: np.ndarray
    z_second: np.ndarray
    remainder: np.ndarray  # per-interval third-level residual

    @property
    def value(self):
        return self.z[-1] - self.z[0]


def rough_integral(phi: ControlledPath, driver: GridRoughPath, interval=None) -> RoughIntegralResult:
    """Compensated-sum rough integral of a controlled integrand.

    The integrand's value shape must end with a driver axis; each interval
    contributes phi x + phi' x2 + phi'' x3.  The running sums telescope, so
    the result is additive over adjacent intervals by construction.
    """
    if phi.value_shape[-1:] != (driver.dim,):
        raise ValueError("integrand value shape must end with the driver dimension")
    i0, i1 = (0, driver.n_intervals) if interval is None else interval
    sl = slice(i0, i1)
    x1 = driver.inc1[sl]
    x2 = driver.inc2[sl]
    x3 = driver.inc3[sl]
    t1 = np.einsum("t...d,td->t...", phi.phi[i0:i1], x1)
    t2 = np.einsum("tj...d,tjd->t...", phi.phi_prime[i0:i1], x2)
    t3 = np.einsum("tjk...d,tjkd->t...", phi.phi_second[i0:i1], x3)
    steps = t1 + t2 + t3
    z = np.zeros((i1 - i0 + 1,) + steps.shape[1:])
    np.cumsum(steps, axis=0, out=z[1:])
    return RoughIntegralResult(
        grid=driver.grid[i0 : i1 + 1],
        z=z,
        z_prime=phi.phi[i0 : i1 + 1],
        z_second=phi.phi_prime[i0 : i1 + 1],
        remainder=t3,
    )


def controlled_from_driver(driver: GridRoughPath) -> ControlledPath:
    """The driver's level-1 path as a controlled path (identity derivative)."""
    n = driver.n_intervals
    d = driver.dim
    phi = driver.cum1
    prime = np.broadcast_to(np.eye(d), (n + 1, d, d)).copy()
    second = np.zeros((n + 1, d, d, d))
    return ControlledPath(driver.grid, phi, prime, second)


def controlled_from_flow(fs: FlowSolution, vf: VectorFieldSet, m: int | None = None) -> ControlledPath:
    """Controlled triple of an RDE solution viewed as an integrand.

    The state is reshaped to (m, d) blocks; the derivative processes are the
    composed field tensors with their driver axes moved in front.
    """
    if fs.Y.ndim != 2:
        raise ValueError("controlled_from_flow expects a single (unbatched) solution")
    e, d = vf.e, vf.d
    if m is None:
        if e % d:
            raise ValueError("state dim %d is not a multiple of driver dim %d" % (e, d))
        m = e // d
    V, step2, _ = field_step_tensors(vf, fs.Y)
    n1 = fs.Y.shape[0]
    phi = fs.Y.reshape(n1, m, d)
    # phi'[t, j_drv, block, slot] = V[t, d*block + slot, j_drv]
    vr = V.reshape(n1, m, d, d)
    prime = np.moveaxis(vr, -1, 1)
    v2r = step2.reshape(n1, m, d, d, d)
    second = np.moveaxis(v2r, (-2, -1), (1, 2))
    return ControlledPath(fs.grid, phi, prime, second)


def controlled_field_of_flow(fs: FlowSolution, vf: VectorFieldSet) -> ControlledPath:
    """V(Y) as a controlled integrand; its compensated rough sums telescope
    to the solution increments of the same grid by construction."""
    if fs.Y.ndim != 2:
        raise ValueError("controlled_field_of_flow expects a single solution")
    V, step2, step3 = field_step_tensors(vf, fs.Y)
    prime = np.moveaxis(step2, -2, 1)  # derivative axis in front
    second = np.moveaxis(step3, (-3, -2), (1, 2))
    return ControlledPath(fs.grid, V, prime, second)


def controlled_product(phi: ControlledPath, psi: ControlledPath, driver: GridRoughPath) -> ControlledPath:
    """Leibniz product of controlled paths.

    Supports scalar * scalar and matrix (v, u) * vector (u,) composition.
    Second derivative follows the product rule with the symmetrized cross
    term phi'[j] psi'[k] + phi'[k] psi'[j].
    """
    s_phi, s_psi = phi.value_shape, psi.value_shape
    if s_phi == () and s_psi == ():
        comp = lambda a, b, spec="t,t->t": np.einsum(spec, a, b)
        spec_00 = "t...,t...->t..."
    elif len(s_phi) == 2 and s_psi == (s_phi[1],):
        spec_00 = "t...vu,t...u->t...v"
    else:
        raise ValueError("incompatible composition shapes %r and %r" % (s_phi, s_psi))

    def mul(a, b, extra_a=0, extra_b=0):
        # align derivative axes of both factors, broadcasting missing ones
        spec_a = "t" + "jk"[:extra_a] + ("...vu" if len(s_phi) == 2 else "...")
        spec_b = "t" + "jk"[extra_a : extra_a + extra_b] + ("...u" if len(s_phi) == 2 else "...")
        out = "t" + "jk"[: extra_a + extra_b] + ("...v" if len(s_phi) == 2 else "...")
        return np.einsum(spec_a + "," + spec_b + "->" + out, a, b)

    val = mul(phi.phi, psi.phi)
    prime = mul(phi.phi_prime, psi.phi, extra_a=1) + mul(phi.phi, psi.phi_prime, extra_b=1)
    cross = mul(phi.phi_prime, psi.phi_prime, extra_a=1, extra_b=1)
    second = (
        mul(phi.phi_second, psi.phi, extra_a=2)
        + cross
        + np.swapaxes(cross, 1, 2)
        + mul(phi.phi, psi.phi_second, extra_b=2)
    )
    return ControlledPath(phi.grid, val, prime, second)


@dataclass(frozen=True)
class SmoothVectorMap:
    """Map between state spaces with two derivatives, for composition."""

    value: callable  # (..., u) -> (..., *out)
    grad: callable  # -> (..., *out, u)
    hess: callable  # -> (..., *out, u, u)


def controlled_compose(mapping: SmoothVectorMap, y: ControlledPath, driver: GridRoughPath) -> ControlledPath:
    """Compose a smooth map with a controlled path:
    z = f(y), z' = Df(y) y', z'' = Df(y) y'' + D^2 f(y)(y', y')."""
    vals = mapping.value(y.phi)
    g = mapping.grad(y.phi)
    h = mapping.hess(y.phi)
    prime = np.einsum("t...u,tju->tj...", g, y.phi_prime)
    second = np.einsum("t...u,tjku->tjk...", g, y.phi_second) + np.einsum(
        "t...uw,tju,tkw->tjk...", h, y.phi_prime, y.phi_prime
    )
    return ControlledPath(y.grid, vals, prime, second)


# ---------------------------------------------------------------------------
# field catalog


def _zeros_like_shape(y, shape):
    return np.zeros(y.shape[:-1] + shape)


def constant_field(B: np.ndarray, name: str = "constant") -> VectorFieldSet:
    B = np.asarray(B, dtype=float)
    e, d = B.shape
    return VectorFieldSet(
        e=e,
        d=d,
        v=lambda y: np.broadcast_to(B, y.shape[:-1] + (e, d)).copy(),
        dv=lambda y: _zeros_like_shape(y, (e, d, e)),
        d2v=lambda y: _zeros_like_shape(y, (e, d, e, e)),
        d3v=lambda y: _zeros_like_shape(y, (e, d, e, e, e)),
        name=name,
        smooth_order=99,
    )


def linear_field(A: np.ndarray, B: np.ndarray | None = None) -> VectorFieldSet:
    """V(y)[a, j] = sum_c A[a, j, c] y[c] + B[a, j]."""
    A = np.asarray(A, dtype=float)
    e, d, _ = A.shape
    B = np.zeros((e, d)) if B is None else np.asarray(B, dtype=float)
    return VectorFieldSet(
        e=e,
        d=d,
        v=lambda y: np.einsum("ajc,...c->...aj", A, y) + B,
        dv=lambda y: np.broadcast_to(A, y.shape[:-1] + (e, d, e)).copy(),
        d2v=lambda y: _zeros_like_shape(y, (e, d, e, e)),
        d3v=lambda y: _zeros_like_shape(y, (e, d, e, e, e)),
        name="linear",
        smooth_order=99,
    )


def sincos_field(e: int, d: int) -> VectorFieldSet:
    """Bounded smooth field V[a, j](y) = sin(y[(a + j) % e] + phase[a, j]).

    Fully non-commuting in general; all derivatives are bounded by one.
    """
    a_idx, j_idx = np.meshgrid(np.arange(e), np.arange(d), indexing="ij")
    pick = (a_idx + j_idx) % e  # (e, d) index of the active state coordinate
    phase = 0.7 * a_idx + 1.3 * j_idx + 0.35
    sel = np.zeros((e, d, e))
    sel[a_idx, j_idx, pick] = 1.0  # indicator of the active coordinate

    def arg(y):
        return y[..., pick] + phase

    def v(y):
        return np.sin(arg(y))

    def dv(y):
        return np.einsum("...aj,ajc->...ajc", np.cos(arg(y)), sel)

    def d2v(y):
        return np.einsum("...aj,ajc,ajm->...ajcm", -np.sin(arg(y)), sel, sel)

    def d3v(y):
        return np.einsum("...aj,ajc,ajm,ajn->...ajcmn", -np.cos(arg(y)), sel, sel, sel)

    return VectorFieldSet(e=e, d=d, v=v, dv=dv, d2v=d2v, d3v=d3v,
                          name="sincos", smooth_order=99)


@dataclass(frozen=True)
class ScalarMap:
    """Scalar function of the driver state with derivatives up to order 5."""

    name: str
    f: callable  # (..., d) -> (...)
    grad: callable  # -> (..., d)
    hess: callable  # -> (..., d, d)
    d3: callable
    d4: callable
    d5: callable


def _diag_tensor(vals: np.ndarray, order: int) -> np.ndarray:
    """Embed per-coordinate values on the diagonal of an order-k tensor."""
    d = vals.shape[-1]
    out = np.zeros(vals.shape[:-1] + (d,) * order)
    idx = (Ellipsis,) + (np.arange(d),) * order
    out[idx] = vals
    return out


def scalar_map(name: str, d: int, quad_matrix: np.ndarray | None = None) -> ScalarMap:
    """Catalog of test functions: 'square' (|x|^2), 'sin' (sum of sines),
    'quadratic' (x.Ax/2 for a symmetric A)."""
    if name == "square":
        return ScalarMap(
            name="square",
            f=lambda x: np.sum(x**2, axis=-1),
            grad=lambda x: 2.0 * x,
            hess=lambda x: np.broadcast_to(2.0 * np.eye(d), x.shape[:-1] + (d, d)).copy(),
            d3=lambda x: np.zeros(x.shape[:-1] + (d,) * 3),
            d4=lambda x: np.zeros(x.shape[:-1] + (d,) * 4),
            d5=lambda x: np.zeros(x.shape[:-1] + (d,) * 5),
        )
    if name == "sin":
        return ScalarMap(
            name="sin",
            f=lambda x: np.sum(np.sin(x), axis=-1),
            grad=lambda x: np.cos(x),
            hess=lambda x: _diag_tensor(-np.sin(x), 2),
            d3=lambda x: _diag_tensor(-np.cos(x), 3),
            d4=lambda x: _diag_tensor(np.sin(x), 4),
            d5=lambda x: _diag_tensor(np.cos(x), 5),
        )
    if name == "quadratic":
        A = quad_matrix
        if A is None:
            A = np.eye(d) + 0.3 * (np.ones((d, d)) - np.eye(d))
        A = 0.5 * (A + A.T)
        return ScalarMap(
            name="quadratic",
            f=lambda x: 0.5 * np.einsum("...i,ij,...j->...", x, A, x),
            grad=lambda x: np.einsum("ij,...j->...i", A, x),
            hess=lambda x: np.broadcast_to(A, x.shape[:-1] + (d, d)).copy(),
            d3=lambda x: np.zeros(x.shape[:-1] + (d,) * 3),
            d4=lambda x: np.zeros(x.shape[:-1] + (d,) * 4),
            d5=lambda x: np.zeros(x.shape[:-1] + (d,) * 5),
        )
    raise ValueError("unknown scalar map %r" % (name,))


def ito_augmented_field(fmap: ScalarMap, d: int) -> VectorFieldSet:
    """State (u, x) in R^{2d} with du = Hess f(x) dX and dx = dX.

    The component fields commute; the Jacobian flow transports V forward
    exactly, which makes the trace correction integrand vanish.
    """
    e = 2 * d

    def split(y):
        return y[..., d:]

    def v(y):
        x = split(y)
        out = np.zeros(y.shape[:-1] + (e, d))
        out[..., :d, :] = fmap.hess(x)
        out[..., d:, :] = np.eye(d)
        return out

    def dv(y):
        x = split(y)
        out = np.zeros(y.shape[:-1] + (e, d, e))
        out[..., :d, :, d:] = fmap.d3(x)
        return out

    def d2v(y):
        x = split(y)
        out = np.zeros(y.shape[:-1] + (e, d, e, e))
        out[..., :d, :, d:, d:] = fmap.d4(x)
        return out

    def d3v(y):
        x = split(y)
        out = np.zeros(y.shape[:-1] + (e, d, e, e, e))
        out[..., :d, :, d:, d:, d:] = fmap.d5(x)
        return out

    return VectorFieldSet(e=e, d=d, v=v, dv=dv, d2v=d2v, d3v=d3v,
                          name="ito:" + fmap.name, smooth_order=99)


def commuting_field(d: int) -> VectorFieldSet:
    """Commuting catalog entry: the augmented field of a quadratic function.

    V is constant, so the discrete Jacobian is exactly the identity and
    trace-correction integrands cancel bit-exactly.
    """
    vf = ito_augmented_field(scalar_map("quadratic", d), d)
    return VectorFieldSet(e=vf.e, d=vf.d, v=vf.v, dv=vf.dv, d2v=vf.d2v,
                          d3v=vf.d3v, name="commuting", smooth_order=99)


def default_y0(vf: VectorFieldSet) -> np.ndarray:
    """Canonical initial state: grad f(0) stacked on 0 for augmented fields,
    a fixed small deterministic vector otherwise."""
    if vf.name.startswith("ito:") or vf.name == "commuting":
        d = vf.d
        name = vf.name.split(":", 1)[1] if ":" in vf.name else "quadratic"
        fmap = scalar_map(name, d)
        y0 = np.zeros(2 * d)
        y0[:d] = fmap.grad(np.zeros(d))
        return y0
    return 0.1 * (1.0 + np.arange(vf.e)) / vf.e


def get_field(key: str, d: int, m: int) -> VectorFieldSet:
    """Construct a catalog field for an m-by-d block-structured state."""
    e = m * d
    if key == "constant":
        a = np.arange(e)[:, None]
        j = np.arange(d)[None, :]
        return constant_field(0.4 + 0.2 * np.sin(1.0 + a + 2.0 * j))
    if key == "linear":
        A = np.zeros((e, d, e))
        for a in range(e):
            for j in range(d):
                A[a, j, (a + j) % e] = 0.5
        return linear_field(A, 0.1 * np.ones((e, d)))
    if key == "sincos":
        return sincos_field(e, d)
    if key == "commuting":
        if m != 2:
            raise ValueError("the commuting catalog field needs m == 2")
        return commuting_field(d)
    if key.startswith("ito:"):
        if m != 2:
            raise ValueError("augmented fields need m == 2")
        return ito_augmented_field(scalar_map(key.split(":", 1)[1], d), d)
    raise ValueError("unknown field catalog key %r" % (key,))
