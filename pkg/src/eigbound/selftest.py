"""Quick property checks on small problems, run by ``eigbound selftest``."""

from __future__ import annotations

import numpy as np

from . import fields as F
from .basis import generate_alb, project_N
from .constants import compute_constants
from .dg import assemble, evaluate_bilinear, potential_on_grid, solve_eig
from .mesh import build_partition, build_quadrature
from .report import align
from .spectral import PotentialSpec, reference_solution, solve_planewave

L = 2 * np.pi


def _small_problem():
    part = build_partition(1, [L], [5])
    grid = build_quadrature(part, 40)
    spec = PotentialSpec([[1.0], [4.0]], 0.3, [-10.0, -8.0], (L,))
    return grid, spec


def check_free_spectrum():
    lam = solve_planewave(PotentialSpec.zero((L,)), (L,), 33, 9).eigenvalues
    err = np.abs(lam - np.array([0, 1, 1, 4, 4, 9, 9, 16, 16])).max()
    return err <= 1e-12, f"max deviation {err:.1e}"


def check_shift():
    spec = PotentialSpec([[1.0]], 0.4, [-5.0], (L,))
    shifted = PotentialSpec([[1.0]], 0.4, [-5.0], (L,), offset=2.5)
    a = solve_planewave(spec, (L,), 63, 6).eigenvalues
    b = solve_planewave(shifted, (L,), 63, 6).eigenvalues
    err = np.abs(b - a - 2.5).max()
    return err <= 1e-10, f"max deviation {err:.1e}"


def check_integration_by_parts():
    grid, spec = _small_problem()
    basis = generate_alb(grid, spec, 5, 31)
    rng = np.random.default_rng(0)
    v = basis.field(rng.standard_normal(basis.n_dof))
    w = F.GridFunction.from_callable(grid, lambda x: np.sin(x[..., 0]),
                                     lambda x: np.cos(x[..., 0])[..., None],
                                     lambda x: -np.sin(x[..., 0]))
    res = max(F.check_integration_by_parts(v, w), F.check_integration_by_parts(w, v))
    scale = F.inner(v, v) + 1.0
    return res <= 1e-8 * scale, f"residual {res:.1e}"


def check_projection():
    grid, spec = _small_problem()
    basis = generate_alb(grid, spec, 5, 31)
    eb = basis.elements[0]
    x = grid.points[0][:, 0]
    vals, grads = np.exp(np.sin(3 * x)), (3 * np.cos(3 * x) * np.exp(np.sin(3 * x)))[:, None]
    c = project_N(vals, grads, eb)
    err_mean = abs(eb.weights @ (vals - eb.values @ c))
    gerr = grads - eb.grads @ c
    orth = np.abs(np.einsum("n,nd,ndi->i", eb.weights, gerr, eb.grads)).max()
    return max(err_mean, orth) <= 1e-10, f"mean {err_mean:.1e}, orthogonality {orth:.1e}"


def check_identity():
    grid, spec = _small_problem()
    basis = generate_alb(grid, spec, 6, 31)
    const = compute_constants(basis)
    V = potential_on_grid(spec, grid)
    sol = solve_eig(assemble(basis, spec, const), 3)
    ref = reference_solution(spec, grid, 127, 3)
    worst = 0.0
    for i in range(3):
        u = ref.fields[i]
        uN = sol.field(i)
        uN = uN * (1.0 if F.inner(u, uN) >= 0 else -1.0)
        e = u - uN
        lhs = evaluate_bilinear(e, e, const.gamma, 1.0, V)
        rhs = sol.eigenvalues[i] - ref.eigenvalues[i] + ref.eigenvalues[i] * F.inner(e, e)
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(sol.eigenvalues[i])))
    return worst <= 1e-7, f"worst relative residual {worst:.1e}"


def check_alignment():
    rng = np.random.default_rng(1)
    W = rng.uniform(0.5, 1.5, 40)
    U, _ = np.linalg.qr(rng.standard_normal((40, 3)) * np.sqrt(W)[:, None])
    U = U / np.sqrt(W)[:, None]
    Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    err = np.abs(align(U @ Q, U, W) - U).max()
    return err <= 1e-10, f"recovery error {err:.1e}"


CHECKS = {
    "free_spectrum": check_free_spectrum,
    "shift_covariance": check_shift,
    "integration_by_parts": check_integration_by_parts,
    "projection": check_projection,
    "eigenvalue_identity": check_identity,
    "alignment": check_alignment,
}


def run_all(echo=print):
    ok_all = True
    for name, fn in CHECKS.items():
        try:
            ok, msg = fn()
        except Exception as exc:  # report and continue
            ok, msg = False, f"error: {exc}"
        ok_all &= bool(ok)
        echo(f"{'PASS' if ok else 'FAIL'} {name}: {msg}")
    return ok_all
