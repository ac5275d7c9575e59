"""End-to-end experiment: basis, constants, solve, estimate, report."""

from __future__ import annotations

from dataclasses import dataclass, field
import csv
import json
import logging
import math
import os
import time

import numpy as np

from . import estimators as E
from . import fields as F
from .basis import generate_alb, load_basis
from .constants import compute_constants
from .dg import assemble, solve_eig, evaluate_bilinear, energy_norm
from .mesh import build_partition, build_quadrature
from .report import build_report, degenerate_groups, measure_errors
from .spectral import reference_solution, sample_potential

log = logging.getLogger("eigbound")


def resolve_threads(threads=None):
    """Explicit value, else EIGBOUND_THREADS, else 1."""
    if threads is None:
        env = os.environ.get("EIGBOUND_THREADS")
        threads = int(env) if env else 1
    if threads < 1:
        raise ValueError("threads must be >= 1")
    return threads


@dataclass
class Setup:
    """Discretization shared by all runs of a config."""

    cfg: object
    spec: object
    grid: object
    V: np.ndarray = field(repr=False)
    dV: np.ndarray = field(repr=False)

    @property
    def V_m(self):
        return float(self.V.min())


def setup(cfg):
    part = build_partition(cfg.dim, cfg.lengths, cfg.counts)
    grid = build_quadrature(part, cfg.quad_order)
    spec = cfg.potential_spec()
    V, dV = sample_potential(spec, grid.points, gradient=True)
    return Setup(cfg, spec, grid, V, dV)


def build_basis(st, N, threads=1):
    cfg = st.cfg
    if cfg.basis_file:
        return load_basis(cfg.basis_file, st.grid)
    return generate_alb(st.grid, st.spec, N, cfg.alb_wavecount, cfg.drop_tol, threads)


def compute_reference(st):
    cfg = st.cfg
    return reference_solution(st.spec, st.grid, cfg.reference_wavecount, cfg.m)


@dataclass
class RunResult:
    N: int
    basis: object = field(repr=False)
    constants: object = field(repr=False)
    solution: object = field(repr=False)
    bundle: object = field(repr=False)
    report: object = field(repr=False)
    reference: object = field(default=None, repr=False)
    errors: object = field(default=None, repr=False)
    bounds: list = field(default_factory=list, repr=False)
    diagnostics: dict = field(default_factory=dict, repr=False)
    timings: dict = field(default_factory=dict)

    @property
    def violations(self):
        return self.report.violations


def phase_fixed(u_N, u):
    """Discrete eigenfunctions with the sign chosen to match the reference."""
    return [v * (1.0 if F.inner(v, w) >= 0 else -1.0) for v, w in zip(u_N, u)]


def run_single(st, N, threads=1, diagnostics=None, skip_reference=None, reference=None):
    """Run the whole pipeline for one N; nothing is written to disk."""
    cfg = st.cfg
    diagnostics = cfg.diagnostics if diagnostics is None else diagnostics
    skip_reference = cfg.skip_reference if skip_reference is None else skip_reference
    timings = {}
    t0 = time.perf_counter()

    basis = build_basis(st, N, threads)
    timings["basis"] = time.perf_counter() - t0
    constants = compute_constants(basis, cfg.theta, cfg.gamma, threads)
    timings["constants"] = time.perf_counter() - t0 - sum(timings.values())
    op = assemble(basis, st.spec, constants, cfg.theta, potential=st.V)
    m = min(cfg.m, basis.n_dof)
    sol = solve_eig(op, m)
    timings["solve"] = time.perf_counter() - t0 - sum(timings.values())
    log.info("N=%d: %d dof, lambda_N[0]=%.10g", N, basis.n_dof, sol.eigenvalues[0])

    ref = None
    if not skip_reference:
        ref = reference if reference is not None else compute_reference(st)
        if ref.m < m:
            raise ValueError("reference has fewer pairs than requested")
        timings["reference"] = time.perf_counter() - t0 - sum(timings.values())

    u_N = sol.fields()
    d_u = None
    diag = {}
    if ref is not None:
        V_s = st.V - st.V_m
        groups = degenerate_groups(ref.eigenvalues[:m], cfg.degeneracy_tol)
        errors = measure_errors(u_N, sol.eigenvalues, _truncate(ref, m), constants.gamma, V_s, groups)
        if diagnostics:
            d_u = np.array([E.true_d_u(u, ua) for u, ua in zip(ref.fields, errors.aligned)])
    bundle = E.estimate(sol, constants, (st.V, st.dV), d_u=d_u, modes=cfg.bubble_modes)
    timings["estimate"] = time.perf_counter() - t0 - sum(timings.values())

    hot_ub = hot_lb = None
    bounds = []
    if ref is not None:
        lam = ref.eigenvalues[:m]
        hot_ub = np.zeros(m)
        hot_lb = np.zeros(m)
        hot_lb_local = np.zeros_like(bundle.eta_R)
        for i in range(m):
            hot_ub[i] = E.hot_ub(errors.err_l2[i], errors.err_energy[i],
                                 lam[i] - st.V_m, sol.eigenvalues[i] - st.V_m)
            hot_lb_local[i] = E.hot_lb_local(st.grid, ref.fields[i], lam[i], errors.aligned[i],
                                             sol.eigenvalues[i], bundle.res_bubble[i],
                                             bundle.bubble_grad[i])
            hot_lb[i] = math.sqrt(np.sum(hot_lb_local[i] ** 2))
        bundle.hot_ub, bundle.hot_lb, bundle.hot_lb_local = hot_ub, hot_lb, hot_lb_local
    for i in range(m):
        kw = {}
        if ref is not None and (cfg.theorem_bounds or diagnostics):
            cons_i = constants if d_u is None else constants.with_d_u(st.grid.partition, d_u[i])
            kw = dict(hot_ub_val=hot_ub[i], hot_lb_val=hot_lb[i], constants=cons_i,
                      lam_shifted=ref.eigenvalues[i] - st.V_m, e_l2=errors.err_l2[i],
                      err_lambda=errors.err_lambda[i])
        bounds.append({k: float(v) for k, v in
                       E.eigenvalue_bounds(bundle.eta[i], bundle.xi[i], **kw).items()})

    if ref is not None and diagnostics:
        diag = _diagnostics(st, cfg, constants, sol, ref, u_N, d_u)
        timings["diagnostics"] = time.perf_counter() - t0 - sum(timings.values())

    meta = {
        "config_hash": cfg.digest(),
        "source": cfg.source,
        "N": int(N),
        "local_sizes": basis.sizes.tolist(),
        "counts": list(cfg.counts),
        "dim": cfg.dim,
        "quad_order": cfg.quad_order,
        "reference_wavecount": None if ref is None else cfg.reference_wavecount,
        "alb_wavecount": cfg.alb_wavecount,
        "theta": cfg.theta,
        "V_min": st.V_m,
        "embedding_error": constants.embedding_error,
        "reference": ref is not None,
        "d_u": "true" if d_u is not None else "surrogate",
    }
    report = build_report(sol.eigenvalues, bundle.eta, bundle.xi,
                          None if ref is None else ref.eigenvalues[:m],
                          errors if ref is not None else None, hot_ub, hot_lb, meta)
    timings["total"] = time.perf_counter() - t0
    return RunResult(N, basis, constants, sol, bundle, report, ref,
                     errors if ref is not None else None, bounds, diag, timings)


def _truncate(ref, m):
    from .spectral import ReferenceSolution
    return ReferenceSolution(ref.eigenvalues[:m], ref.fields[:m], ref.planewave)


def _diagnostics(st, cfg, constants, sol, ref, u_N, d_u):
    """Identity residuals, error-representation residuals and coercivity margin."""
    fixed = phase_fixed(u_N, ref.fields)
    out = {"identity_residual": [], "error_representation_residual": [], "true_d_u": d_u.tolist()}
    for i, (u, v) in enumerate(zip(ref.fields, fixed)):
        lam, lam_N = ref.eigenvalues[i], sol.eigenvalues[i]
        e = u - v
        lhs = evaluate_bilinear(e, e, constants.gamma, cfg.theta, st.V)
        out["identity_residual"].append(abs(lhs - (lam_N - lam + lam * F.inner(e, e))))
        res, en = E.error_representation_check(u, lam, v, lam_N, sol.basis, constants.gamma,
                                               cfg.theta, st.V, st.V_m)
        out["error_representation_residual"].append(res / en if en > 0 else 0.0)
    out["coercivity_margin"] = coercivity_margin(sol.basis, constants, st, cfg.seed)
    return out


def coercivity_margin(basis, constants, st, seed=0, samples=1000):
    """min over random v_N of a(v_N, v_N) - |||v_N|||^2 / 2, relative to |||v_N|||^2.

    a(.,.) here carries the shifted potential V - V_m, the same one as the
    energy norm.
    """
    rng = np.random.default_rng(seed)
    op = assemble(basis, st.spec, constants, constants.theta, potential=st.V - st.V_m)
    # energy-norm Gram: grad, shifted potential and jump terms
    E2 = energy_gram(basis, constants.gamma, st.V - st.V_m)
    X = rng.standard_normal((basis.n_dof, samples))
    a = np.einsum("ij,ik,kj->j", X, op.A, X)
    e = np.einsum("ij,ik,kj->j", X, E2, X)
    return float(np.min((a - 0.5 * e) / e))


def energy_gram(basis, gamma, V_shifted):
    """Matrix of the squared broken energy norm over the global basis."""
    grid = basis.grid
    part = grid.partition
    n = basis.n_dof
    G = np.zeros((n, n))
    for k, eb in enumerate(basis.elements):
        w = grid.weights[k]
        sl = basis.element_slice(k)
        G[sl, sl] += np.einsum("n,ndi,ndj->ij", w, eb.grads, eb.grads)
        G[sl, sl] += eb.values.T @ ((w * V_shifted[k])[:, None] * eb.values)
    gamma = np.asarray(gamma, dtype=float)
    for f in range(part.n_faces):
        axis = part.face_axis[f]
        fw = grid.face_weights[f]
        l, r = part.face_elements[f]
        # each face enters the norm through both elements: (gamma_l + gamma_r)/2 * |[[v]]|^2
        coef = 0.5 * (gamma[l] + gamma[r])
        jl = basis.elements[l].values[grid.face_nodes[axis][1]]
        jr = -basis.elements[r].values[grid.face_nodes[axis][0]]
        for rs, jrow in ((basis.element_slice(l), jl), (basis.element_slice(r), jr)):
            for cs, jcol in ((basis.element_slice(l), jl), (basis.element_slice(r), jr)):
                G[rs, cs] += coef * (jrow.T @ (fw[:, None] * jcol))
    return 0.5 * (G + G.T)


# -- output ---------------------------------------------------------------

def write_outputs(result, out_dir, save_basis=False):
    """Write every report file for ``result`` into ``out_dir``; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    def path(name):
        paths[name] = os.path.join(out_dir, name)
        return paths[name]

    result.constants.to_csv(path("constants.csv"))
    result.bundle.to_csv(path("estimators.csv"))
    result.bundle.to_json(path("estimators.json"))
    result.report.to_csv(path("report.csv"))
    meta = dict(result.report.meta)
    meta["timings"] = result.timings
    result.report.meta = meta
    result.report.to_json(path("report.json"))
    with open(path("plot_data.txt"), "w") as fh:
        fh.write(result.report.plot_data())
    with open(path("bounds.csv"), "w") as fh:
        keys = sorted({k for b in result.bounds for k in b})
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["i"] + keys)
        for i, b in enumerate(result.bounds):
            writer.writerow([i + 1] + [repr(b[k]) if k in b else "NA" for k in keys])
    if result.diagnostics:
        with open(path("diagnostics.json"), "w") as fh:
            json.dump(result.diagnostics, fh, indent=1, default=float)
    if save_basis:
        result.basis.save(path("basis.npz"))
    return paths


SUMMARY_COLUMNS = ["N", "i", "err_lambda", "err_energy", "eta", "xi", "hot_ub_over_eta",
                   "hot_lb_over_xi", "C_eta", "C_xi"]


def sweep_summary(results):
    """Rows of the convergence table over N."""
    rows = []
    for res in results:
        for r in res.report.rows:
            hu = None if r["hot_ub"] is None or r["eta"] == 0 else r["hot_ub"] / r["eta"]
            hl = None if r["hot_lb"] is None or r["xi"] == 0 else r["hot_lb"] / r["xi"]
            rows.append({"N": res.N, "i": r["i"], "err_lambda": r["err_lambda"],
                         "err_energy": r["err_energy"], "eta": r["eta"], "xi": r["xi"],
                         "hot_ub_over_eta": hu, "hot_lb_over_xi": hl,
                         "C_eta": r["C_eta"], "C_xi": r["C_xi"]})
    return rows


def write_summary(rows, path):
    with open(path, "w") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for r in rows:
            writer.writerow(["NA" if r[c] is None else (str(r[c]) if isinstance(r[c], int) else repr(float(r[c])))
                             for c in SUMMARY_COLUMNS])
