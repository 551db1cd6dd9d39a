import numpy as np
import pytest

from roughlab.gaussian_model import (
    brownian_motion,
    covariance,
    dyadic_grid,
    fbm,
    sample_path_array,
)
from roughlab.rough_lift import (
    GridRoughPath,
    greedy_count,
    lift_values,
    p_variation,
    p_variation_values,
    variation_2d,
)
from roughlab.tensor_algebra import unit


def line_path(n, direction, T=1.0):
    grid = np.linspace(0.0, T, n + 1)
    values = grid[:, None] * np.asarray(direction, dtype=float)[None, :]
    return grid, values


def test_single_segment_lift_levels():
    grid = np.array([0.0, 1.0])
    a = 0.7
    lp = lift_values(np.array([[0.0], [a]]), grid)
    assert lp.cum2[-1, 0, 0] == pytest.approx(a**2 / 2.0)
    assert lp.cum3[-1, 0, 0, 0] == pytest.approx(a**3 / 6.0)


def test_two_segments_iterated_integral():
    # e1 then e2: area integral dx1 dx2 over r1 < r2 is 1, the reverse is 0
    grid = np.array([0.0, 0.5, 1.0])
    values = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
    lp = lift_values(values, grid)
    full = lp.point(2)
    assert full.level2[0, 1] == pytest.approx(1.0)
    assert full.level2[1, 0] == pytest.approx(0.0)


def test_level1_matches_sampled_increments():
    rng = np.random.default_rng(0)
    values = rng.standard_normal((9, 3)).cumsum(axis=0)
    values -= values[0]
    grid = np.linspace(0, 1, 9)
    lp = lift_values(values, grid)
    assert np.allclose(lp.inc1, np.diff(values, axis=0))
    assert np.allclose(lp.cum1, values - values[0])


def test_chen_multiplicativity_random_path():
    rng = np.random.default_rng(1)
    values = rng.standard_normal((9, 2)).cumsum(axis=0)
    grid = np.linspace(0, 1, 9)
    lp = lift_values(values, grid)
    left = lp.increment(0, 4)
    right = lp.increment(4, 8)
    prod = left.mul(right)
    whole = lp.increment(0, 8)
    for blk in ("level1", "level2", "level3"):
        assert np.max(np.abs(getattr(prod, blk) - getattr(whole, blk))) <= 1e-12
    # every triple of grid times
    for i, u, j in [(1, 3, 6), (0, 2, 7), (2, 5, 8)]:
        p = lp.increment(i, u).mul(lp.increment(u, j))
        w = lp.increment(i, j)
        assert np.max(np.abs(p.level3 - w.level3)) <= 1e-12


def test_batched_lift_matches_per_path():
    rng = np.random.default_rng(2)
    values = rng.standard_normal((3, 6, 2)).cumsum(axis=1)
    grid = np.linspace(0, 1, 6)
    lp = lift_values(values, grid)
    for k in range(3):
        single = lift_values(values[k], grid)
        sel = lp.select_path(k)
        assert np.allclose(sel.cum3, single.cum3)


def test_p_variation_monotone_path():
    grid, values = line_path(16, [1.0])
    rep = p_variation_values(3.0 * values[:, 0], 1.0)
    assert rep.value == pytest.approx(3.0)


def test_p_variation_zigzag():
    values = np.array([0.0, 1.0, 0.0, 1.0])
    rep = p_variation_values(values, 1.0)
    assert rep.value == pytest.approx(3.0)
    assert list(rep.partition) == [0, 1, 2, 3]


def test_p_variation_constant_path():
    values = np.zeros(10)
    for p in (1.0, 2.0, 3.5):
        assert p_variation_values(values, p).value == 0.0


def test_p_variation_monotone_in_p():
    rng = np.random.default_rng(3)
    values = rng.standard_normal(33).cumsum()
    vals = [p_variation_values(values, p).value for p in (1.0, 1.5, 2.0, 3.0, 4.0)]
    assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))


def test_p_variation_group_path_superadditive():
    rng = np.random.default_rng(4)
    values = rng.standard_normal((17, 2)).cumsum(axis=0)
    lp = lift_values(values, np.linspace(0, 1, 17))
    p = 2.5
    whole = p_variation(lp, p, (0, 16)).value ** p
    left = p_variation(lp, p, (0, 9)).value ** p
    right = p_variation(lp, p, (9, 16)).value ** p
    assert left + right <= whole + 1e-10


def test_p_variation_errors():
    with pytest.raises(ValueError):
        p_variation_values(np.arange(4.0), 0.5)
    with pytest.raises(ValueError):
        p_variation_values(np.arange(4.0), 2.0, (2, 2))


def test_variation_2d_brownian_telescopes_to_horizon():
    model = brownian_motion()
    grid = dyadic_grid(5)
    R = covariance(model, grid[:, None], grid[None, :])
    assert variation_2d(R, 1.0) == pytest.approx(1.0)


def test_variation_2d_additive_function_vanishes():
    grid = np.linspace(0, 1, 17)
    f = np.sin(grid)[:, None] + np.cos(3 * grid)[None, :]
    assert variation_2d(f, 1.5) <= 1e-12


def test_variation_2d_fbm_stable_under_refinement():
    H = 0.4
    model = fbm(H)
    vals = []
    for level in (6, 7, 8):
        grid = dyadic_grid(level)
        R = covariance(model, grid[:, None], grid[None, :])
        vals.append(variation_2d(R, 1.0 / (2 * H)))
    assert vals[2] == pytest.approx(vals[0], rel=0.05)
    assert np.isfinite(vals[2])


def test_greedy_count_constant_and_small_paths():
    grid = np.linspace(0, 1, 9)
    lp = lift_values(np.zeros((9, 1)), grid)
    assert greedy_count(lp, beta=1.0, p=1.0) == 0
    # total variation below budget: first stopping time runs to the end
    _, values = line_path(8, [0.5])
    lp2 = lift_values(values, grid)
    assert greedy_count(lp2, beta=1.0, p=1.0) == 0


def test_greedy_count_line_in_thirds():
    # grid containing the exact thirds: budget L/3 is spent exactly 3 times
    grid, values = line_path(12, [2.0])
    lp = lift_values(values, grid)
    assert greedy_count(lp, beta=2.0 / 3.0, p=1.0) == 3


def test_coarsen_matches_chen_increments():
    from roughlab.rough_lift import coarsen

    rng = np.random.default_rng(17)
    values = rng.standard_normal((17, 2)).cumsum(axis=0)
    lp = lift_values(values, np.linspace(0, 1, 17))
    coarse = coarsen(lp, 4)
    assert coarse.n_intervals == 4
    for i in range(4):
        expect = lp.increment(4 * i, 4 * (i + 1))
        assert np.allclose(coarse.inc3[i], expect.level3)
        assert np.allclose(coarse.inc2[i], expect.level2)
        assert np.allclose(coarse.inc1[i], expect.level1)
    with pytest.raises(ValueError):
        coarsen(lp, 3)


def test_greedy_count_monotone_in_beta():
    rng = np.random.default_rng(5)
    values = rng.standard_normal((33, 2)).cumsum(axis=0) * 0.4
    lp = lift_values(values, np.linspace(0, 1, 33))
    counts = [greedy_count(lp, beta=b, p=2.2) for b in (0.25, 0.5, 1.0, 2.0)]
    assert all(a >= b for a, b in zip(counts, counts[1:]))
