import numpy as np
import pytest

from roughlab.gaussian_model import brownian_motion, dyadic_grid, sample_path_array
from roughlab.rough_lift import lift_values
from roughlab.rde_engine import (
    ControlledPath,
    ScalarMap,
    SmoothVectorMap,
    commuting_field,
    constant_field,
    controlled_compose,
    controlled_from_driver,
    controlled_from_flow,
    controlled_product,
    default_y0,
    field_step_tensors,
    get_field,
    ito_augmented_field,
    linear_field,
    malliavin_kernel,
    rough_integral,
    scalar_map,
    sincos_field,
    solve_rde,
)


def smooth_driver(n, d=1, T=1.0):
    grid = np.linspace(0.0, T, n + 1)
    if d == 1:
        values = np.sin(3.0 * grid)[:, None]
    else:
        values = np.stack(
            [np.sin((k + 1) * grid + 0.2 * k) for k in range(d)], axis=-1
        )
    return grid, values


def bm_driver(level, d, seed=0, n_paths=1):
    grid = dyadic_grid(level)
    vals = sample_path_array(brownian_motion(), grid, d, n_paths, seed=seed)
    if n_paths == 1:
        vals = vals[0]
    return lift_values(vals, grid)


# ---------------------------------------------------------------------------
# vector field catalog


def fd_check_derivatives(vf, y, h=1e-4, tol=1e-5):
    base_dv = vf.dv(y)
    num_dv = np.zeros_like(base_dv)
    for c in range(vf.e):
        dy = np.zeros(vf.e)
        dy[c] = h
        num_dv[..., c] = (vf.v(y + dy) - vf.v(y - dy)) / (2 * h)
    assert np.max(np.abs(num_dv - base_dv)) < tol
    base_d2v = vf.d2v(y)
    num_d2v = np.zeros_like(base_d2v)
    for c in range(vf.e):
        dy = np.zeros(vf.e)
        dy[c] = h
        num_d2v[..., c] = (vf.dv(y + dy) - vf.dv(y - dy)) / (2 * h)
    assert np.max(np.abs(num_d2v - np.swapaxes(base_d2v, -1, -2))) < tol
    assert np.max(np.abs(num_d2v - base_d2v)) < tol  # symmetric in state axes


def test_catalog_fields_match_finite_differences():
    rng = np.random.default_rng(0)
    for key, d, m in [("sincos", 2, 2), ("linear", 2, 2), ("constant", 3, 1)]:
        vf = get_field(key, d, m)
        for _ in range(5):
            fd_check_derivatives(vf, rng.standard_normal(vf.e))


def test_augmented_field_matches_finite_differences():
    rng = np.random.default_rng(1)
    vf = ito_augmented_field(scalar_map("sin", 2), 2)
    for _ in range(5):
        fd_check_derivatives(vf, rng.standard_normal(vf.e))


def test_field_step_tensors_scalar_exponential_case():
    A = np.ones((1, 1, 1))
    vf = linear_field(A)  # V(y) = y
    y = np.array([2.0])
    V, s2, s3 = field_step_tensors(vf, y)
    assert V[0, 0] == 2.0 and s2[0, 0, 0] == 2.0 and s3[0, 0, 0, 0] == 2.0


# ---------------------------------------------------------------------------
# RDE solve


def test_scalar_linear_rde_matches_exponential():
    grid, values = smooth_driver(2**12)
    driver = lift_values(values, grid)
    vf = linear_field(np.ones((1, 1, 1)))
    sol = solve_rde(vf, driver, np.array([1.7]))
    exact = 1.7 * np.exp(values[:, 0] - values[0, 0])
    assert np.max(np.abs(sol.Y[:, 0] - exact)) <= 1e-6
    # Jacobian of the scalar linear flow is the same exponential over y0
    assert np.max(np.abs(sol.J[:, 0, 0] - exact / 1.7)) <= 1e-6


def test_constant_field_is_exact():
    driver = bm_driver(5, 2, seed=3)
    B = np.array([[1.0, -2.0], [0.5, 0.25], [0.0, 3.0]])
    sol = solve_rde(constant_field(B), driver, np.zeros(3))
    expect = np.einsum("aj,tj->ta", B, driver.cum1)
    assert np.max(np.abs(sol.Y - expect)) < 1e-14
    assert np.max(np.abs(sol.J - np.eye(3))) == 0.0


def test_jacobian_matches_flow_map_finite_differences():
    # independent oracle: bump y0 and differentiate the numerical flow
    driver = bm_driver(6, 2, seed=7)
    vf = sincos_field(4, 2)
    y0 = default_y0(vf)
    sol = solve_rde(vf, driver, y0)
    h = 1e-6
    for c in range(4):
        dy = np.zeros(4)
        dy[c] = h
        up = solve_rde(vf, driver, y0 + dy).Y
        dn = solve_rde(vf, driver, y0 - dy).Y
        fd_col = (up - dn) / (2 * h)
        assert np.max(np.abs(sol.J[:, :, c] - fd_col)) < 5e-8


def test_jacobian_inverse_and_cocycle():
    driver = bm_driver(6, 2, seed=11)
    vf = sincos_field(4, 2)
    sol = solve_rde(vf, driver, default_y0(vf))
    eye_err = np.max(np.abs(sol.J @ sol.J_inv - np.eye(4)))
    assert eye_err <= 1e-8
    for s, u, t in [(3, 17, 40), (0, 30, 64), (10, 11, 12)]:
        lhs = sol.jacobian_between(u, t) @ sol.jacobian_between(s, u)
        assert np.max(np.abs(lhs - sol.jacobian_between(s, t))) <= 1e-6


def test_step3_local_error_order_four():
    # Richardson: one step vs two over a shrinking smooth interval
    vf = sincos_field(2, 1)
    y0 = np.array([0.3, -0.2])
    errs = []
    for n in (8, 16, 32, 64):
        grid, values = smooth_driver(2 * n)
        d2 = lift_values(values[: 2 * 1 + 1], grid[: 2 * 1 + 1])
        # single interval [0, 2/n]: coarse = 1 step, fine = 2 steps
        coarse = lift_values(values[[0, 2]], grid[[0, 2]])
        y_c = solve_rde(vf, coarse, y0).Y[-1]
        fine = lift_values(values[[0, 1, 2]], grid[[0, 1, 2]])
        y_f = solve_rde(vf, fine, y0).Y[-1]
        errs.append(np.max(np.abs(y_c - y_f)))
    rates = [np.log2(errs[i] / errs[i + 1]) for i in range(len(errs) - 1)]
    assert all(r > 3.5 for r in rates)


def test_batched_solve_matches_single():
    grid = dyadic_grid(5)
    vals = sample_path_array(brownian_motion(), grid, 2, 3, seed=1)
    driver = lift_values(vals, grid)
    vf = sincos_field(4, 2)
    y0 = default_y0(vf)
    sol = solve_rde(vf, driver, y0)
    for k in range(3):
        single = solve_rde(vf, driver.select_path(k), y0)
        assert np.allclose(sol.Y[k], single.Y)
        assert np.allclose(sol.J[k], single.J)


def test_solve_rejects_bad_shapes():
    driver = bm_driver(3, 2)
    vf = sincos_field(4, 2)
    with pytest.raises(ValueError):
        solve_rde(vf, driver, np.zeros(3))
    with pytest.raises(ValueError):
        solve_rde(sincos_field(4, 3), driver, np.zeros(4))


# ---------------------------------------------------------------------------
# flow transport identities


def test_commuting_flow_transport_identity():
    # augmented field of a non-quadratic function: J_{t<-s} V(Y_s) = V(Y_t)
    grid, values = smooth_driver(2**8, d=2)
    driver = lift_values(values, grid)
    vf = ito_augmented_field(scalar_map("sin", 2), 2)
    sol = solve_rde(vf, driver, default_y0(vf))
    V_all = vf.v(sol.Y)
    for s, t in [(0, 100), (37, 200), (100, 256)]:
        lhs = sol.jacobian_between(s, t) @ V_all[s]
        assert np.max(np.abs(lhs - V_all[t])) <= 1e-6
    # rough driver: identity holds at the discretization scale
    rough = bm_driver(8, 2, seed=5)
    sol_r = solve_rde(vf, rough, default_y0(vf))
    V_r = vf.v(sol_r.Y)
    lhs = sol_r.jacobian_between(37, 200) @ V_r[37]
    assert np.max(np.abs(lhs - V_r[200])) <= 1e-3


def test_malliavin_kernel_indicator_and_adjacent():
    driver = bm_driver(6, 2, seed=9)
    vf = sincos_field(4, 2)
    sol = solve_rde(vf, driver, default_y0(vf))
    assert np.all(malliavin_kernel(sol, vf, 10, 10) == 0.0)
    assert np.all(malliavin_kernel(sol, vf, 12, 10) == 0.0)
    # adjacent grid points: J_{t<-s} is identity up to the increment scale
    V10 = vf.v(sol.Y[10])
    k = malliavin_kernel(sol, vf, 10, 11)
    inc_scale = np.linalg.norm(driver.inc1[10])
    assert 0.0 < np.max(np.abs(k - V10)) < 4.0 * inc_scale


def test_malliavin_kernel_commuting_trace_identity():
    driver = bm_driver(6, 2, seed=13)
    vf = commuting_field(2)
    sol = solve_rde(vf, driver, default_y0(vf))
    V_all = vf.v(sol.Y)
    d = 2
    for s, t in [(3, 40), (0, 64), (20, 21)]:
        k = malliavin_kernel(sol, vf, s, t)
        for j in range(2):
            tr_k = np.trace(k[j * d : (j + 1) * d, :])
            tr_v = np.trace(V_all[t, j * d : (j + 1) * d, :])
            assert tr_k == pytest.approx(tr_v, abs=1e-12)


# ---------------------------------------------------------------------------
# rough integral and controlled calculus


def test_rough_integral_constant_integrand():
    driver = bm_driver(5, 2, seed=21)
    n = driver.n_intervals
    A = np.array([[0.7, -0.3], [0.1, 0.9], [2.0, 0.0]])
    phi = ControlledPath(
        grid=driver.grid,
        phi=np.broadcast_to(A, (n + 1, 3, 2)).copy(),
        phi_prime=np.zeros((n + 1, 2, 3, 2)),
        phi_second=np.zeros((n + 1, 2, 2, 3, 2)),
    )
    res = rough_integral(phi, driver)
    assert np.allclose(res.value, A @ driver.cum1[-1])


def test_rough_integral_additivity_on_grid():
    driver = bm_driver(5, 2, seed=22)
    vf = sincos_field(4, 2)
    sol = solve_rde(vf, driver, default_y0(vf))
    cp = controlled_from_flow(sol, vf)
    whole = rough_integral(cp, driver, (0, 32)).value
    parts = rough_integral(cp, driver, (0, 20)).value + rough_integral(
        cp, driver, (20, 32)
    ).value
    assert np.allclose(whole, parts)


def test_rough_integral_of_field_recovers_solution():
    # integral of V(Y) on the solve grid telescopes to Y_T - y0 exactly;
    # on coarsened partitions of the same path the error decays dyadically
    from roughlab.rough_lift import coarsen
    from roughlab.rde_engine import controlled_field_of_flow

    vf = sincos_field(2, 2)
    y0 = default_y0(vf)
    grid, values = smooth_driver(2**10, d=2)
    driver = lift_values(values, grid)
    sol = solve_rde(vf, driver, y0)
    cp = controlled_field_of_flow(sol, vf)
    same = rough_integral(cp, driver).value
    assert np.max(np.abs(same - (sol.Y[-1] - y0))) < 1e-12
    errs = []
    for lev in (4, 6, 8):
        stride = 2 ** (10 - lev)
        coarse = coarsen(driver, stride)
        sub = ControlledPath(
            coarse.grid,
            cp.phi[::stride],
            cp.phi_prime[::stride],
            cp.phi_second[::stride],
        )
        got = rough_integral(sub, coarse).value
        errs.append(np.max(np.abs(got - (sol.Y[-1] - y0))))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] <= 1e-6


def test_rough_integral_smooth_matches_riemann_stieltjes():
    # smooth integrand g(x_t) against smooth x: classical RS oracle
    n_fine = 2**16
    grid_f, values_f = smooth_driver(n_fine)
    x_f = values_f[:, 0]
    g = np.cos  # integrand g(x)
    rs = float(np.sum(0.5 * (g(x_f[:-1]) + g(x_f[1:])) * np.diff(x_f)))
    n = 2**10
    grid, values = smooth_driver(n)
    driver = lift_values(values, grid)
    x = values[:, 0]
    phi = ControlledPath(
        grid=grid,
        phi=g(x)[:, None],
        phi_prime=(-np.sin(x))[:, None, None],
        phi_second=(-np.cos(x))[:, None, None, None],
    )
    got = rough_integral(phi, driver).value
    assert abs(got - rs) <= 1e-6


def test_controlled_remainder_decay_rate():
    # R_phi over dyadic spans shrinks like mesh^(3/p) for lifted smooth input
    vf = sincos_field(1, 1)
    norms = []
    for level in (6, 8):
        grid, values = smooth_driver(2**level)
        driver = lift_values(values, grid)
        sol = solve_rde(vf, driver, np.array([0.1]))
        cp = controlled_from_flow(sol, vf)
        r_phi, r_prime = cp.remainders(driver)
        norms.append(np.max(np.abs(r_phi)))
    assert norms[1] < norms[0] / 6.0  # ~ mesh^3 for smooth drivers


def test_controlled_product_with_one_is_identity():
    driver = bm_driver(4, 1, seed=30)
    x = controlled_from_driver(driver)
    xs = ControlledPath(x.grid, x.phi[:, 0], x.phi_prime[:, :, 0], x.phi_second[:, :, :, 0])
    n1 = x.phi.shape[0]
    one = ControlledPath(
        x.grid, np.ones(n1), np.zeros((n1, 1)), np.zeros((n1, 1, 1))
    )
    prod = controlled_product(xs, one, driver)
    assert np.allclose(prod.phi, xs.phi)
    assert np.allclose(prod.phi_prime, xs.phi_prime)
    assert np.allclose(prod.phi_second, xs.phi_second)


def test_controlled_product_driver_coordinates_symmetrized_second():
    driver = bm_driver(4, 2, seed=31)
    x = controlled_from_driver(driver)
    x0 = ControlledPath(x.grid, x.phi[:, 0], x.phi_prime[:, :, 0], x.phi_second[:, :, :, 0])
    x1 = ControlledPath(x.grid, x.phi[:, 1], x.phi_prime[:, :, 1], x.phi_second[:, :, :, 1])
    prod = controlled_product(x0, x1, driver)
    # second derivative = e_0 (x) e_1 + e_1 (x) e_0
    expect = np.zeros((2, 2))
    expect[0, 1] = expect[1, 0] = 1.0
    assert np.allclose(prod.phi_second[5], expect)
    # defining relations hold with the expected remainder sizes
    r_phi, r_prime = prod.remainders(driver)
    assert np.all(np.isfinite(r_phi)) and np.all(np.isfinite(r_prime))


def test_controlled_product_shape_mismatch():
    driver = bm_driver(3, 2, seed=32)
    x = controlled_from_driver(driver)
    with pytest.raises(ValueError):
        controlled_product(x, x, driver)


def test_controlled_compose_identity_and_linear():
    driver = bm_driver(4, 2, seed=33)
    y = controlled_from_driver(driver)
    ident = SmoothVectorMap(
        value=lambda v: v,
        grad=lambda v: np.broadcast_to(np.eye(2), v.shape[:-1] + (2, 2)).copy(),
        hess=lambda v: np.zeros(v.shape[:-1] + (2, 2, 2)),
    )
    z = controlled_compose(ident, y, driver)
    assert np.allclose(z.phi, y.phi)
    assert np.allclose(z.phi_prime, y.phi_prime)
    A = np.array([[2.0, 1.0], [0.0, -1.0], [0.5, 0.5]])
    lin = SmoothVectorMap(
        value=lambda v: np.einsum("ou,...u->...o", A, v),
        grad=lambda v: np.broadcast_to(A, v.shape[:-1] + (3, 2)).copy(),
        hess=lambda v: np.zeros(v.shape[:-1] + (3, 2, 2)),
    )
    z = controlled_compose(lin, y, driver)
    assert np.allclose(z.phi_prime, np.einsum("ou,tju->tjo", A, y.phi_prime))
    assert np.allclose(
        z.phi_second, np.einsum("ou,tjku->tjko", A, y.phi_second)
    )


def test_controlled_compose_square_formula():
    driver = bm_driver(4, 1, seed=34)
    y = controlled_from_driver(driver)
    square = SmoothVectorMap(
        value=lambda v: np.sum(v**2, axis=-1),
        grad=lambda v: 2.0 * v,
        hess=lambda v: np.broadcast_to(2.0 * np.eye(1), v.shape[:-1] + (1, 1)).copy(),
    )
    z = controlled_compose(square, y, driver)
    yv = y.phi[:, 0]
    # z'' = 2 (y y'' + y' (x) y'); here y'' = 0 and y' = 1
    assert np.allclose(z.phi_second[:, 0, 0], 2.0)
    assert np.allclose(z.phi_prime[:, 0], 2.0 * yv)
