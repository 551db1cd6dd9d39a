"""Arithmetic in the truncated tensor algebra of degree 3 over R^d.

Elements are stored as dense coefficient blocks, one per tensor level.  All
operations broadcast over arbitrary leading batch axes, so a whole family of
group elements (e.g. the increments of a lifted path) can be manipulated in
one call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "TruncatedTensor",
    "LieElement",
    "unit",
    "from_level1",
    "tensor_mul",
    "tensor_exp",
    "tensor_log",
    "group_inverse",
    "lie_bracket",
    "homogeneous_norm",
    "group_distance",
    "dilate",
]


def _sc(x, ndim):
    """Reshape a batch of scalars so it broadcasts against a level block."""
    x = np.asarray(x, dtype=float)
    return x.reshape(x.shape + (1,) * ndim)


@dataclass(frozen=True)
class TruncatedTensor:
    """Element of the degree-3 truncated tensor algebra over R^d.

    Blocks have shapes (..., ), (..., d), (..., d, d) and (..., d, d, d);
    the leading axes are shared batch axes.
    """

    level0: np.ndarray
    level1: np.ndarray
    level2: np.ndarray
    level3: np.ndarray

    @property
    def dim(self) -> int:
        return self.level1.shape[-1]

    @property
    def batch_shape(self) -> tuple:
        return self.level1.shape[:-1]

    def __post_init__(self):
        d = self.level1.shape[-1]
        if self.level2.shape[-2:] != (d, d) or self.level3.shape[-3:] != (d, d, d):
            raise ValueError("inconsistent block shapes for dim %d" % d)

    def mul(self, other: "TruncatedTensor") -> "TruncatedTensor":
        return tensor_mul(self, other)

    def inverse(self) -> "TruncatedTensor":
        return group_inverse(self)

    def is_group(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(np.asarray(self.level0) - 1.0) <= tol))

    def norm(self) -> np.ndarray:
        return homogeneous_norm(self)


@dataclass(frozen=True)
class LieElement:
    """Element of the free nilpotent Lie algebra of step 3 over R^d.

    level2 is antisymmetric, level3 lies in the span of nested brackets;
    both facts are consequences of construction via ``tensor_log``.
    """

    level1: np.ndarray
    level2: np.ndarray
    level3: np.ndarray

    @property
    def dim(self) -> int:
        return self.level1.shape[-1]

    def as_tensor(self) -> TruncatedTensor:
        z = np.zeros(self.level1.shape[:-1])
        return TruncatedTensor(z, self.level1, self.level2, self.level3)

    def exp(self) -> TruncatedTensor:
        return tensor_exp(self)


def unit(dim: int, batch_shape: tuple = ()) -> TruncatedTensor:
    """The algebra unit e = (1, 0, 0, 0)."""
    return TruncatedTensor(
        np.ones(batch_shape),
        np.zeros(batch_shape + (dim,)),
        np.zeros(batch_shape + (dim, dim)),
        np.zeros(batch_shape + (dim, dim, dim)),
    )


def from_level1(v: np.ndarray) -> LieElement:
    """Embed a (batch of) vector(s) in R^d as a level-1 Lie element."""
    v = np.asarray(v, dtype=float)
    d = v.shape[-1]
    b = v.shape[:-1]
    return LieElement(v, np.zeros(b + (d, d)), np.zeros(b + (d, d, d)))


def tensor_mul(a: TruncatedTensor, b: TruncatedTensor) -> TruncatedTensor:
    """Truncated tensor product: level k of the result collects all
    products of an a-level-i block with a b-level-(k-i) block."""
    if a.dim != b.dim:
        raise ValueError("dimension mismatch: %d vs %d" % (a.dim, b.dim))
    a0, a1, a2, a3 = np.asarray(a.level0, dtype=float), a.level1, a.level2, a.level3
    b0, b1, b2, b3 = np.asarray(b.level0, dtype=float), b.level1, b.level2, b.level3
    c0 = a0 * b0
    c1 = _sc(a0, 1) * b1 + a1 * _sc(b0, 1)
    c2 = (
        _sc(a0, 2) * b2
        + np.einsum("...i,...j->...ij", a1, b1)
        + a2 * _sc(b0, 2)
    )
    c3 = (
        _sc(a0, 3) * b3
        + np.einsum("...i,...jk->...ijk", a1, b2)
        + np.einsum("...ij,...k->...ijk", a2, b1)
        + a3 * _sc(b0, 3)
    )
    return TruncatedTensor(c0, c1, c2, c3)


def tensor_exp(a: LieElement | TruncatedTensor) -> TruncatedTensor:
    """exp(a) = e + a + a^{(x)2}/2 + a^{(x)3}/6, truncated at level 3."""
    if isinstance(a, LieElement):
        t = a.as_tensor()
    else:
        if np.any(np.asarray(a.level0) != 0.0):
            raise ValueError("exp expects a tangent element (level0 == 0)")
        t = a
    sq = tensor_mul(t, t)
    cu = tensor_mul(sq, t)
    d = t.dim
    e = unit(d, t.batch_shape)
    return TruncatedTensor(
        e.level0,
        t.level1 + sq.level1 / 2.0 + cu.level1 / 6.0,
        t.level2 + sq.level2 / 2.0 + cu.level2 / 6.0,
        t.level3 + sq.level3 / 2.0 + cu.level3 / 6.0,
    )


def tensor_log(g: TruncatedTensor) -> LieElement:
    """log(g) = l - l^{(x)2}/2 + l^{(x)3}/3 with l = g - e; needs level0 == 1."""
    if np.any(np.asarray(g.level0) != 1.0):
        raise ValueError("log requires a group element (level0 == 1)")
    z = np.zeros(g.batch_shape)
    ell = TruncatedTensor(z, g.level1, g.level2, g.level3)
    sq = tensor_mul(ell, ell)
    cu = tensor_mul(sq, ell)
    return LieElement(
        ell.level1 - sq.level1 / 2.0 + cu.level1 / 3.0,
        ell.level2 - sq.level2 / 2.0 + cu.level2 / 3.0,
        ell.level3 - sq.level3 / 2.0 + cu.level3 / 3.0,
    )


def group_inverse(g: TruncatedTensor) -> TruncatedTensor:
    """Inverse in the truncated algebra via the finite Neumann series
    (e + l)^{-1} = e - l + l^2 - l^3; exact for level0 == 1."""
    if np.any(np.asarray(g.level0) != 1.0):
        raise ValueError("inverse requires a group element (level0 == 1)")
    z = np.zeros(g.batch_shape)
    ell = TruncatedTensor(z, g.level1, g.level2, g.level3)
    sq = tensor_mul(ell, ell)
    cu = tensor_mul(sq, ell)
    e = unit(g.dim, g.batch_shape)
    return TruncatedTensor(
        e.level0,
        -ell.level1 + sq.level1 - cu.level1,
        -ell.level2 + sq.level2 - cu.level2,
        -ell.level3 + sq.level3 - cu.level3,
    )


def lie_bracket(a: LieElement | TruncatedTensor, b: LieElement | TruncatedTensor):
    """[a, b] = a (x) b - b (x) a, truncated at level 3."""
    ta = a.as_tensor() if isinstance(a, LieElement) else a
    tb = b.as_tensor() if isinstance(b, LieElement) else b
    ab = tensor_mul(ta, tb)
    ba = tensor_mul(tb, ta)
    return TruncatedTensor(
        ab.level0 - ba.level0,
        ab.level1 - ba.level1,
        ab.level2 - ba.level2,
        ab.level3 - ba.level3,
    )


def _l1(block: np.ndarray, nlvl: int) -> np.ndarray:
    axes = tuple(range(-nlvl, 0))
    return np.sum(np.abs(block), axis=axes)


def homogeneous_norm(g: TruncatedTensor) -> np.ndarray:
    """Scaled-l1 homogeneous norm: max over levels k of (k! * |level k|_1)^(1/k).

    Symmetric and sub-additive, and scales linearly under the dilation
    that multiplies level k by lambda^k.
    """
    n1 = _l1(g.level1, 1)
    n2 = (2.0 * _l1(g.level2, 2)) ** 0.5
    n3 = (6.0 * _l1(g.level3, 3)) ** (1.0 / 3.0)
    return np.maximum(np.maximum(n1, n2), n3)


def group_distance(a: TruncatedTensor, b: TruncatedTensor) -> np.ndarray:
    """Left-invariant distance d(a, b) = |a^{-1} (x) b|."""
    return homogeneous_norm(tensor_mul(group_inverse(a), b))


def dilate(g: TruncatedTensor, lam: float) -> TruncatedTensor:
    """Dilation: multiplies the level-k block by lam^k."""
    return TruncatedTensor(
        np.asarray(g.level0, dtype=float).copy(),
        lam * g.level1,
        lam**2 * g.level2,
        lam**3 * g.level3,
    )
