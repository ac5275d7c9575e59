import numpy as np
import pytest

from eigbound.basis import basis_from_samples, generate_alb
from eigbound.constants import (build_fine_space, c_kappa, complement_basis, compute_ab,
                                compute_constants, compute_d, compute_gamma, gamma_hat,
                                normal_gradient_gram)
from eigbound.mesh import build_partition, build_quadrature

TWO_PI = 2 * np.pi


def linear_basis(h, order=10):
    part = build_partition(1, [3 * h], [3])
    grid = build_quadrature(part, order)
    x = grid.points[..., 0]
    vals = [np.column_stack([np.ones_like(x[k]), x[k] - part.lower[k, 0]]) for k in range(3)]
    grads = [np.stack([np.zeros_like(x[k]), np.ones_like(x[k])], -1)[:, None, :] for k in range(3)]
    laps = [np.zeros_like(v) for v in vals]
    return grid, basis_from_samples(grid, vals, grads, laps)


@pytest.mark.parametrize("h", [1.0, 0.5, 2.7])
def test_d_linear_closed_form(h):
    grid, basis = linear_basis(h)
    assert abs(compute_d(grid, basis.elements[0], 0) - np.sqrt(2.0 / h)) <= 1e-10


def test_d_constants_only_is_zero():
    part = build_partition(1, [3.0], [3])
    grid = build_quadrature(part, 6)
    ones = [np.ones((6, 1)) for _ in range(3)]
    b = basis_from_samples(grid, ones, [np.zeros((6, 1, 1))] * 3, [np.zeros((6, 1))] * 3)
    assert compute_d(grid, b.elements[1], 1) == 0.0


def _random_members(eb, rng, n):
    return rng.standard_normal((eb.size, n))


def test_trace_inequality_sampled_and_attained(setup_1d):
    grid = setup_1d.grid
    basis = generate_alb(grid, setup_1d.spec, 6, setup_1d.cfg.alb_wavecount)
    rng = np.random.default_rng(0)
    for k, eb in enumerate(basis.elements):
        d = compute_d(grid, eb, k)
        assert np.isfinite(d) and d > 0
        B = normal_gradient_gram(grid, eb, k)
        C = _random_members(eb, rng, 1000)
        num = np.sqrt(np.einsum("in,ij,jn->n", C, B, C))
        den = np.sqrt(np.einsum("in,ij,jn->n", C, eb.gram, C))
        assert np.all(num <= d * den * (1 + 1e-10))
        # the maximiser of the generalized problem attains d
        import scipy.linalg
        w, V = scipy.linalg.eigh(B, eb.gram)
        v = V[:, -1]
        assert np.sqrt(v @ B @ v) / np.sqrt(v @ eb.gram @ v) >= 0.99 * d


def test_ab_monotone_under_enrichment(setup_1d):
    grid = setup_1d.grid
    prev = None
    for N in (4, 6, 8):
        c = compute_constants(generate_alb(grid, setup_1d.spec, N, setup_1d.cfg.alb_wavecount))
        if prev is not None:
            assert np.all(c.a <= prev.a * (1 + 1e-8))
            assert np.all(c.b <= prev.b * (1 + 1e-8))
        prev = c


def test_ab_inequalities_on_complement(setup_1d):
    grid = setup_1d.grid
    basis = generate_alb(grid, setup_1d.spec, 6, setup_1d.cfg.alb_wavecount)
    fine = build_fine_space(grid)
    rng = np.random.default_rng(1)
    for eb in basis.elements[:3]:
        a, b = compute_ab(fine, eb)
        Z = complement_basis(fine, eb)
        X = Z @ rng.standard_normal((Z.shape[1], 1000))
        inner = np.sqrt(np.einsum("in,ij,jn->n", X, fine.inner, X))
        l2 = np.sqrt(np.einsum("in,ij,jn->n", X, fine.mass, X))
        bd = np.sqrt(np.einsum("in,ij,jn->n", X, fine.boundary_mass, X))
        assert np.all(l2 <= a * inner * (1 + 1e-10))
        assert np.all(bd <= b * inner * (1 + 1e-10))
        # complement members are <<.,.>>-orthogonal to the basis
        assert np.abs(eb.values.T @ fine.inner @ Z).max() <= 1e-8 * np.abs(fine.inner).max()


def test_a_poincare_oracle(setup_1d):
    basis = generate_alb(setup_1d.grid, setup_1d.spec, 6, setup_1d.cfg.alb_wavecount)
    c = compute_constants(basis)
    h = setup_1d.grid.partition.h[0]
    assert np.all(c.a <= max(1.0, h / np.pi))
    assert np.all(c.a > 0) and np.all(c.b > 0) and np.all(c.d > 0)


def test_empty_complement_rejected():
    part = build_partition(1, [3.0], [3])
    grid = build_quadrature(part, 4)
    x = grid.points[..., 0]
    vals = [np.column_stack([x[k] ** j for j in range(4)]) for k in range(3)]
    grads = [np.column_stack([j * x[k] ** max(j - 1, 0) for j in range(4)])[:, None, :] for k in range(3)]
    b = basis_from_samples(grid, vals, grads, [np.zeros_like(v) for v in vals])
    with pytest.raises(ValueError):
        compute_ab(build_fine_space(grid), b.elements[0])


def test_fine_space_matrices(small_grid):
    grid, _ = small_grid
    fine = build_fine_space(grid)
    for M in (fine.inner, fine.mass, fine.boundary_mass, fine.normal_grad):
        assert np.allclose(M, M.T)
        assert np.linalg.eigvalsh(M).min() >= -1e-9 * np.abs(M).max()
    assert np.linalg.eigvalsh(fine.inner).min() > 0
    assert fine.degree == grid.order - 1


def test_embedding_error_preset(run_1d_n6, run_2d_n11):
    assert run_1d_n6.constants.embedding_error <= 1e-8
    assert run_2d_n11.constants.embedding_error <= 1e-8


def test_fine_space_convergence(setup_1d):
    spec, cfg = setup_1d.spec, setup_1d.cfg
    part = setup_1d.grid.partition
    res = []
    for q in (cfg.quad_order, cfg.quad_order + 4):
        grid = build_quadrature(part, q)
        res.append(compute_constants(generate_alb(grid, spec, 6, cfg.alb_wavecount)))
    assert np.all(np.abs(res[1].a / res[0].a - 1) < 0.01)
    assert np.all(np.abs(res[1].b / res[0].b - 1) < 0.01)


def test_formulas():
    assert compute_gamma(2.0, 1.0) == 8.0
    assert np.allclose(compute_gamma([1.0, 3.0], 0.0), [0.5, 4.5])
    assert np.allclose(c_kappa(np.array([1.5]), np.array([1.5]), 1.0), [3.0])
    part = build_partition(2, [1.0, 1.0], [3, 4])
    g = np.full(part.n_elements, 7.5)
    assert np.array_equal(gamma_hat(part, g), g)
    g[0] = 9.5
    gh = gamma_hat(part, g)
    for k in part.patches[0][1:]:
        assert gh[k] == pytest.approx(8.5)


def test_constants_consistent(run_1d_n6_surrogate):
    c = run_1d_n6_surrogate.constants
    assert np.allclose(c.gamma, 0.5 * (1 + c.theta) ** 2 * c.d ** 2)
    assert np.allclose(c.c, 2 * c.d)
    part = run_1d_n6_surrogate.basis.grid.partition
    for k in range(part.n_elements):
        nb = part.face_elements[part.element_faces[k]].ravel()
        assert c.gamma[nb].min() - 1e-12 <= c.gamma_hat[k] <= c.gamma[nb].max() + 1e-12


def test_constants_csv(run_1d_n6_surrogate):
    text = run_1d_n6_surrogate.constants.to_csv()
    lines = text.strip().split("\n")
    assert lines[0] == "element,a,b,d,gamma,gamma_hat,c"
    assert len(lines) == 8
