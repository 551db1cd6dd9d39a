import numpy as np
import pytest

from roughlab.tensor_algebra import (
    LieElement,
    TruncatedTensor,
    dilate,
    from_level1,
    group_distance,
    group_inverse,
    homogeneous_norm,
    lie_bracket,
    tensor_exp,
    tensor_log,
    tensor_mul,
    unit,
)

RNG = np.random.default_rng(12345)


def random_group(d, n_segments=5, rng=RNG):
    """Signature-style group element: product of exponentials of vectors."""
    g = unit(d)
    for _ in range(n_segments):
        g = tensor_mul(g, tensor_exp(from_level1(rng.standard_normal(d))))
    return g


def max_block_err(a: TruncatedTensor, b: TruncatedTensor) -> float:
    return max(
        np.max(np.abs(np.asarray(a.level0) - np.asarray(b.level0))),
        np.max(np.abs(a.level1 - b.level1)),
        np.max(np.abs(a.level2 - b.level2)),
        np.max(np.abs(a.level3 - b.level3)),
    )


def test_unit_is_neutral():
    for d in (1, 2, 3):
        a = random_group(d)
        e = unit(d)
        assert max_block_err(tensor_mul(e, a), a) == 0.0
        assert max_block_err(tensor_mul(a, e), a) == 0.0


def test_mul_dimension_mismatch():
    with pytest.raises(ValueError):
        tensor_mul(unit(2), unit(3))


def test_associativity_random_triples():
    for d in (1, 2, 3):
        for _ in range(20):
            a, b, c = (random_group(d, 3) for _ in range(3))
            lhs = tensor_mul(tensor_mul(a, b), c)
            rhs = tensor_mul(a, tensor_mul(b, c))
            assert max_block_err(lhs, rhs) < 1e-12


def test_exp_of_zero_is_unit():
    for d in (1, 2, 3):
        z = from_level1(np.zeros(d))
        assert max_block_err(tensor_exp(z), unit(d)) == 0.0


def test_exp_single_generator_series():
    # exp(v) = (1, v, v^(x)2 / 2, v^(x)3 / 6) for a level-1 element
    v = np.array([0.7, -1.3, 0.4])
    g = tensor_exp(from_level1(v))
    assert np.allclose(g.level1, v)
    assert np.allclose(g.level2, np.einsum("i,j->ij", v, v) / 2.0)
    assert np.allclose(g.level3, np.einsum("i,j,k->ijk", v, v, v) / 6.0)


def test_log_exp_roundtrip_level1():
    rng = np.random.default_rng(7)
    for _ in range(20):
        v = rng.standard_normal(3)
        a = from_level1(v)
        back = tensor_log(tensor_exp(a))
        assert np.max(np.abs(back.level1 - v)) < 1e-12
        assert np.max(np.abs(back.level2)) < 1e-12
        assert np.max(np.abs(back.level3)) < 1e-12


def test_log_exp_mutual_inverse_random():
    rng = np.random.default_rng(99)
    for d in (1, 2, 3):
        for _ in range(100):
            g = random_group(d, 4, rng)
            assert max_block_err(tensor_exp(tensor_log(g)), g) < 1e-12
            a = tensor_log(g)
            b = tensor_log(tensor_exp(a))
            assert np.max(np.abs(a.level1 - b.level1)) < 1e-12
            assert np.max(np.abs(a.level2 - b.level2)) < 1e-12
            assert np.max(np.abs(a.level3 - b.level3)) < 1e-12


def test_log_level2_antisymmetric():
    for d in (2, 3):
        a = tensor_log(random_group(d))
        assert np.max(np.abs(a.level2 + np.swapaxes(a.level2, -1, -2))) < 1e-12


def test_requires_group_element():
    bad = TruncatedTensor(
        np.array(0.5), np.zeros(2), np.zeros((2, 2)), np.zeros((2, 2, 2))
    )
    with pytest.raises(ValueError):
        tensor_log(bad)
    with pytest.raises(ValueError):
        group_inverse(bad)


def test_inverse_of_unit():
    for d in (1, 2, 3):
        assert max_block_err(group_inverse(unit(d)), unit(d)) == 0.0


def test_inverse_one_parameter_subgroup():
    v = np.array([1.2, -0.3])
    lhs = group_inverse(tensor_exp(from_level1(v)))
    rhs = tensor_exp(from_level1(-v))
    assert max_block_err(lhs, rhs) < 1e-14


def test_inverse_of_random_signature():
    for d in (1, 2, 3):
        g = random_group(d, 5)
        err = max_block_err(tensor_mul(g, group_inverse(g)), unit(d))
        assert err <= 1e-12


def test_group_product_expansion_bracket_terms():
    # exp(f) (x) exp(g) has level 2 = (f+g)^(x)2 / 2 + [f,g]/2 and
    # level 3 = (f+g)^(x)3 / 6 + N(f,g) with
    # N = ((f+g)(x)[f,g] + [f,g](x)(f+g))/4 + ([f,[f,g]] + [g,[g,f]])/12.
    rng = np.random.default_rng(2024)
    for _ in range(50):
        d = int(rng.integers(1, 4))
        f = rng.standard_normal(d)
        g = rng.standard_normal(d)
        prod = tensor_mul(tensor_exp(from_level1(f)), tensor_exp(from_level1(g)))
        s = f + g
        br = lie_bracket(from_level1(f), from_level1(g)).level2
        lvl2 = np.einsum("i,j->ij", s, s) / 2.0 + br / 2.0
        assert np.max(np.abs(prod.level2 - lvl2)) < 1e-12

        ffg = np.einsum("i,jk->ijk", f, br) - np.einsum("ij,k->ijk", br, f)
        gg_f = -np.einsum("i,jk->ijk", g, br) + np.einsum("ij,k->ijk", br, g)
        n_fg = (
            (np.einsum("i,jk->ijk", s, br) + np.einsum("ij,k->ijk", br, s)) / 4.0
            + (ffg + gg_f) / 12.0
        )
        lvl3 = np.einsum("i,j,k->ijk", s, s, s) / 6.0 + n_fg
        assert np.max(np.abs(prod.level3 - lvl3)) < 1e-12


def test_shuffle_symmetry_of_group_elements():
    # geometric elements: symmetrized level 2 and 3 are powers of level 1
    rng = np.random.default_rng(31)
    for d in (1, 2, 3):
        for _ in range(30):
            g = random_group(d, 4, rng)
            v = g.level1
            sym2 = (g.level2 + np.swapaxes(g.level2, -1, -2)) / 2.0
            assert np.max(np.abs(sym2 - np.einsum("i,j->ij", v, v) / 2.0)) < 1e-12
            perms = ["ijk", "ikj", "jik", "jki", "kij", "kji"]
            sym3 = sum(np.einsum("ijk->" + p, g.level3) for p in perms) / 6.0
            assert (
                np.max(np.abs(sym3 - np.einsum("i,j,k->ijk", v, v, v) / 6.0)) < 1e-12
            )


def test_homogeneous_norm_values():
    assert homogeneous_norm(unit(3)) == 0.0
    g = tensor_exp(from_level1(np.array([2.0])))
    assert abs(homogeneous_norm(g) - 2.0) < 1e-14


def test_homogeneous_norm_dilation_homogeneity():
    g = random_group(3)
    for lam in (0.1, 0.5, 2.0, 7.5):
        assert np.isclose(
            homogeneous_norm(dilate(g, lam)), lam * homogeneous_norm(g)
        )


def test_homogeneous_norm_symmetry_subadditivity():
    rng = np.random.default_rng(5)
    for _ in range(20):
        a = random_group(3, 3, rng)
        b = random_group(3, 3, rng)
        na, nb = homogeneous_norm(a), homogeneous_norm(b)
        assert np.isclose(homogeneous_norm(group_inverse(a)), na, rtol=1e-10)
        assert homogeneous_norm(tensor_mul(a, b)) <= na + nb + 1e-12


def test_group_distance_left_invariance():
    rng = np.random.default_rng(6)
    a, b, c = (random_group(2, 3, rng) for _ in range(3))
    lhs = group_distance(tensor_mul(c, a), tensor_mul(c, b))
    assert np.isclose(lhs, group_distance(a, b), rtol=1e-10)


def test_batched_operations_match_scalar():
    rng = np.random.default_rng(8)
    vs = rng.standard_normal((4, 3))
    ws = rng.standard_normal((4, 3))
    batched = tensor_mul(tensor_exp(from_level1(vs)), tensor_exp(from_level1(ws)))
    for i in range(4):
        single = tensor_mul(
            tensor_exp(from_level1(vs[i])), tensor_exp(from_level1(ws[i]))
        )
        assert np.allclose(batched.level3[i], single.level3)
        assert np.allclose(batched.level2[i], single.level2)
