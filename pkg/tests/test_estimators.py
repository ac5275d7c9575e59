import numpy as np
import pytest

from eigbound import estimators as E
from eigbound import fields as F
from eigbound.dg import element_energy_sq
from eigbound.mesh import build_partition, build_quadrature

TWO_PI = 2 * np.pi


@pytest.fixture(scope="module")
def grid2d():
    return build_quadrature(build_partition(2, [TWO_PI, 3.0], [3, 4]), 16)


def smooth_field(grid, k=2.0):
    """u = sin(k x) with all derivatives, on a 1D grid."""
    x = grid.points[..., 0]
    return F.GridFunction.from_elements(
        grid, np.sin(k * x), (k * np.cos(k * x))[..., None], -k * k * np.sin(k * x),
        (-k ** 3 * np.cos(k * x))[..., None])


# -- bubble ---------------------------------------------------------------

def test_bubble_range_and_boundary(small_grid, grid2d):
    for grid in (small_grid[0], grid2d):
        part = grid.partition
        for k in range(part.n_elements):
            g, dg = E.bubble(grid, k)
            assert g.max() <= 1.0 and g.min() >= -1e-30
            assert g.max() >= 0.95
            x = grid.points[k] - part.lower[k]
            on_bdry = np.any(np.isclose(x, 0.0, atol=1e-12) | np.isclose(x, part.h, atol=1e-12), axis=1)
            assert np.abs(g[on_bdry]).max() <= 1e-28


def test_bubble_gradient_finite_difference(grid2d):
    part = grid2d.partition
    k = 5
    h = part.h
    lo = part.lower[k]

    def g_at(p):
        return np.prod(np.sin(np.pi * (p - lo) / h) ** 2, axis=-1)

    _, dg = E.bubble(grid2d, k)
    pts = grid2d.points[k]
    eps = 1e-6
    for j in range(2):
        step = np.zeros(2)
        step[j] = eps
        fd = (g_at(pts + step) - g_at(pts - step)) / (2 * eps)
        assert np.abs(fd - dg[:, j]).max() <= 1e-7


@pytest.mark.parametrize("dim", [1, 2])
def test_single_mode_bubble_solve(dim, small_grid, grid2d):
    grid = small_grid[0] if dim == 1 else grid2d
    part = grid.partition
    k = 1
    x = grid.points[k] - part.lower[k]
    mode = np.prod(np.sin(np.pi * x / part.h), axis=1)
    sol = E.solve_bubble(grid, k, mode)
    expect = 1.0 / np.sum((np.pi / part.h) ** 2)
    assert sol.coeffs.flat[0] == pytest.approx(expect, rel=1e-10)
    # modes up to q/2 are resolved by the element quadrature; the top ones alias
    low = np.abs(sol.coeffs[tuple(slice(0, grid.order // 2) for _ in range(dim))]).ravel()
    assert low[1:].max() <= 1e-9 * expect
    vals, grads = sol.evaluate(grid.points[k], derivatives=True)
    assert np.abs(vals - expect * mode).max() <= (1e-6 if dim == 1 else 1e-2) * expect
    if dim == 1:
        h = part.h[0]
        assert expect == pytest.approx((h / np.pi) ** 2)
        assert np.abs(grads[:, 0] - expect * np.pi / h * np.cos(np.pi * x[:, 0] / h)).max() <= 1e-5 * expect


def test_bubble_solve_is_laplace_inverse(small_grid):
    """A polynomial right-hand side vanishing on the boundary: -phi'' = f."""
    grid = small_grid[0]
    part = grid.partition
    k, h = 3, part.h[0]
    t = grid.points[k][:, 0] - part.lower[k, 0]
    f = t * (h - t)
    phi_exact = t ** 4 / 12 - h * t ** 3 / 6 + h ** 3 * t / 12
    sol = E.solve_bubble(grid, k, f)
    assert np.abs(sol.evaluate(grid.points[k]) - phi_exact).max() <= 1e-5 * phi_exact.max()


def test_sine_mode_doubling(setup_1d, run_1d_n6):
    """Doubling the sine modes changes the bubble gradient norm by < 0.5%."""
    grid, V = setup_1d.grid, setup_1d.V
    sol = run_1d_n6.solution
    q = grid.order
    for i in range(3):
        R, gR = E.residual_field(sol.field(i), sol.eigenvalues[i], (V, setup_1d.dV))
        for k in range(grid.partition.n_elements):
            a = E.bubble_quantities(grid, k, R[k], gR[k], V[k], modes=q)[2]
            b = E.bubble_quantities(grid, k, R[k], gR[k], V[k], modes=2 * q)[2]
            assert abs(a - b) <= 0.005 * b


# -- residual -------------------------------------------------------------

def test_residual_closed_form(small_grid):
    grid = small_grid[0]
    x = grid.points[..., 0]
    u = smooth_field(grid)
    V, dV = np.cos(x), (-np.sin(x))[..., None]
    lam = 1.7
    R, gR = E.residual_field(u, lam, (V, dV))

    def R_at(s):
        return lam * np.sin(2 * s) - 4 * np.sin(2 * s) - np.cos(s) * np.sin(2 * s)

    assert np.abs(R - R_at(x)).max() <= 1e-12
    eps = 1e-6
    fd = (R_at(x + eps) - R_at(x - eps)) / (2 * eps)
    assert np.abs(gR[..., 0] - fd).max() <= 1e-7


def test_residual_zero_for_eigenfunction(small_grid, small_basis):
    grid = small_grid[0]
    _, const = small_basis
    u = smooth_field(grid, k=1.0)
    zero = np.zeros((grid.partition.n_elements, grid.n_nodes))
    R, gR = E.residual_field(u, 1.0, (zero, zero[..., None]))
    assert np.abs(R).max() <= 1e-13
    eR, eF, eJ, *_ = E.eta_terms(u, 1.0, const, (zero, zero[..., None]))
    assert np.abs(eR).max() <= 1e-12
    # smooth, periodic: no jumps either
    assert np.abs(eF).max() <= 1e-11 and np.abs(eJ).max() <= 1e-11
    cR, *_, zflag = E.lower_constants(grid, const, R, gR, zero, np.zeros(len(R)))
    assert np.all(zflag) and np.all(cR == 0.0)


def test_sign_flip_makes_jump_estimator_large(small_grid, small_basis):
    grid = small_grid[0]
    _, const = small_basis
    u = smooth_field(grid, k=1.0)
    flip = np.ones((grid.partition.n_elements, 1))
    flip[2] = -1.0
    v = F.GridFunction.from_elements(grid, u.values * flip, u.grads * flip[..., None],
                                     u.laps * flip, u.grad_laps * flip[..., None])
    zero = np.zeros_like(u.values)
    _, _, eJ0, *_ = E.eta_terms(u, 1.0, const, (zero, zero[..., None]))
    _, _, eJ1, *_ = E.eta_terms(v, 1.0, const, (zero, zero[..., None]))
    # element 2 and its neighbours see O(1) jumps
    for k in (1, 2, 3):
        assert eJ1[k] > 0.1 and eJ1[k] > 1e6 * max(eJ0[k], 1e-300)
    assert eJ1[0] <= 1e-10


# -- estimator bundle ------------------------------------------------------

def test_lower_constant_formulas(run_1d_n6_surrogate):
    res = run_1d_n6_surrogate
    b, c = res.bundle, res.constants
    part = res.basis.grid.partition
    cJ = np.sqrt(2.0 / c.gamma) * (c.b * c.gamma_hat + 0.5 * c.c)
    assert np.allclose(b.c_J, cJ[None, :], rtol=1e-13)
    sizes = np.array([len(p) for p in part.patches])
    cF = c.b * np.sqrt(sizes / 2.0) * np.array([c.d_u[p].max() for p in part.patches])
    assert np.allclose(b.c_F, cF[None, :], rtol=1e-13)
    assert np.allclose(b.eta_R, c.a * b.res_norm, rtol=1e-13)
    assert np.allclose(b.eta, np.sqrt(np.sum(b.eta_local ** 2, axis=1)))


def test_local_xi_is_mediant(run_1d_n6, run_2d_n11):
    for res in (run_1d_n6, run_2d_n11):
        b = res.bundle
        ratios = []
        for eta, c in ((b.eta_R, b.c_R), (b.eta_F, b.c_F), (b.eta_J, b.c_J)):
            ratios.append(np.where(c > 0, eta / np.where(c > 0, c, 1.0), 0.0))
        assert np.all(b.xi_local <= np.max(ratios, axis=0) * (1 + 1e-12))
        assert np.all(b.xi_local >= 0)
        assert not np.any(b.xi_flag)


def test_b_omega():
    part = build_partition(1, [5.0], [5])
    b = np.array([1.0, 2.0, 3.0, 1.0, 1.0])
    got = E.b_omega(part, b)
    # element 0 touches elements 4 and 1, element 2 touches 1 and 3
    assert got[0] == pytest.approx(np.sqrt(2.5))
    assert got[2] == pytest.approx(np.sqrt(6.5))
    assert got[4] == pytest.approx(1.0)


def test_hot_ub():
    assert E.hot_ub(0.0, 0.0, 1.0, 1.0) == 0.0
    assert E.hot_ub(0.0, 1e-3, 1.0, 1.0) == 0.0
    assert E.hot_ub(0.1, 0.5, 2.0, 4.0) == pytest.approx(3.0 * 0.01 / 0.5)


def test_xi_global_flag():
    z = np.zeros(3)
    xi, flag = E.xi_global(z, z, z, z, z, z, z)
    assert xi == 0.0 and flag


# -- error representation and bounds --------------------------------------

def test_error_representation_exact(setup_1d, reference_1d, run_1d_n6):
    u = reference_1d.fields[0]
    res, en = E.error_representation_check(u, reference_1d.eigenvalues[0], u,
                                           reference_1d.eigenvalues[0], run_1d_n6.basis,
                                           run_1d_n6.constants.gamma, 1.0, setup_1d.V, setup_1d.V_m)
    assert res == 0.0 and en == 0.0


def test_error_representation_sensitivity(setup_1d, reference_1d, run_1d_n6):
    """Correct data gives a tiny residual; a 10% change in lambda_N does not."""
    res = run_1d_n6
    u, lam = reference_1d.fields[0], reference_1d.eigenvalues[0]
    v = res.solution.field(0)
    v = v * (1.0 if F.inner(u, v) >= 0 else -1.0)
    lam_N = res.solution.eigenvalues[0]
    args = (res.basis, res.constants.gamma, 1.0, setup_1d.V, setup_1d.V_m)
    ok, en = E.error_representation_check(u, lam, v, lam_N, *args)
    bad, _ = E.error_representation_check(u, lam, v, 1.1 * lam_N, *args)
    assert ok <= 1e-6 * en
    assert bad >= 0.01 * en


def test_error_representation_jump_perturbation(setup_1d, reference_1d, run_1d_n6):
    """Scaling the penalty jump term by 1 + t moves the residual linearly in t."""
    res = run_1d_n6
    u, lam = reference_1d.fields[0], reference_1d.eigenvalues[0]
    v = res.solution.field(0)
    v = v * (1.0 if F.inner(u, v) >= 0 else -1.0)
    args = (u, lam, v, res.solution.eigenvalues[0], res.basis, res.constants.gamma, 1.0,
            setup_1d.V, setup_1d.V_m)
    base, en = E.error_representation_check(*args)
    r10, _ = E.error_representation_check(*args, jump_factor=1.1)
    r20, _ = E.error_representation_check(*args, jump_factor=1.2)
    assert base <= 1e-6 * en
    assert r10 > 1e3 * base
    assert r20 / r10 == pytest.approx(2.0, rel=1e-3)


def test_bounds_vanish_for_exact_solution():
    bd = E.eigenvalue_bounds(0.0, 0.0)
    assert bd == {"upper_numerical": 0.0, "lower_numerical": 0.0}


def test_xi_single_dominant_element():
    z = np.zeros(4)
    eta_R = np.array([0.0, 2.0, 0.0, 0.0])
    c_R = np.array([0.0, 5.0, 0.0, 0.0])
    xi, flag = E.xi_global(eta_R, z, z, c_R, z, z, z)
    assert not flag
    assert xi == pytest.approx(2.0 / (np.sqrt(3.0) * 5.0))


def test_hot_terms_decay_1d(run_1d_n6, run_1d_n10):
    b6, b10 = run_1d_n6.bundle, run_1d_n10.bundle
    assert np.all(b10.hot_ub / b10.eta < b6.hot_ub / b6.eta)
    assert np.all(b10.hot_lb / b10.xi < b6.hot_lb / b6.xi)


@pytest.mark.slow
def test_hot_terms_decay_2d(setup_2d, run_2d_n11):
    from eigbound.pipeline import run_single

    fine = run_single(setup_2d, 41, reference=run_2d_n11.reference)
    b11, b41 = run_2d_n11.bundle, fine.bundle
    assert np.all(b41.hot_ub / b41.eta < b11.hot_ub / b11.eta)
    assert np.all(b41.hot_lb / b41.xi < b11.hot_lb / b11.xi)
    assert fine.violations == []


def test_local_lower_bounds_true_du(setup_1d, run_1d_n6, run_1d_n10):
    """Each local contribution is bounded by the local error, with hot_lb for R."""
    part = setup_1d.grid.partition
    Vs = setup_1d.V - setup_1d.V_m
    for res in (run_1d_n6, run_1d_n10):
        b = res.bundle
        for i in range(res.solution.m):
            e = res.reference.fields[i] - res.errors.aligned[i]
            loc = np.sqrt(element_energy_sq(e, res.constants.gamma, Vs))
            patch = np.array([np.sqrt(np.sum(loc[p] ** 2)) for p in part.patches])
            assert np.all(b.eta_J[i] / b.c_J[i] <= loc)
            assert np.all(b.eta_F[i] / b.c_F[i] <= patch)
            cR = np.where(b.c_R[i] > 0, b.c_R[i], np.inf)
            assert np.all(b.eta_R[i] / cR <= loc + b.hot_lb_local[i])


def test_bound_inequalities(run_1d_n6, run_1d_n10, run_2d_n11):
    for res in (run_1d_n6, run_1d_n10, run_2d_n11):
        e = res.errors.err_energy
        b = res.bundle
        assert np.all(b.eta + b.hot_ub >= e)
        assert np.all(b.xi <= e + b.hot_lb)
        for i, bd in enumerate(res.bounds):
            assert bd["upper_theorem"] >= res.errors.err_lambda[i]
            assert bd["lower_theorem_lhs"] <= bd["lower_theorem_rhs"]


def test_bundle_serialization(run_1d_n6):
    b = run_1d_n6.bundle
    lines = b.to_csv().strip().split("\n")
    assert lines[0] == "pair,element,eta_R,eta_F,eta_J,c_R,c_F,c_J,xi_k,hot_lb_k,zero_residual"
    assert len(lines) == 1 + b.m * b.eta_R.shape[1]
    import json
    d = json.loads(b.to_json())
    assert len(d["pairs"]) == b.m
    assert d["pairs"][0]["eta"] == pytest.approx(b.eta[0])
