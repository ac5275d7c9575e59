"""Residual-type a posteriori estimators for the DG eigenpairs.

Upper bound terms per element ``k`` (R = lambda_N u_N + lap u_N - V u_N):

    eta_R = a_k ||R||_k
    eta_F = b_k / 2 ||[[grad u_N]]||_dk
    eta_J = (b_k gamma_hat_k + c_k / 2) ||[[u_N]]||_dk

and ``eta = (sum_k (eta_R + eta_F + eta_J)^2)^(1/2)``.  The lower bound uses the
bubble ``g_k = prod_j sin^2(pi (x_j - a_j) / h_j)`` and the local Dirichlet
problem ``-lap phi_k = V g_k R`` solved with a sine series.

Conventions: ``R`` and the bubble problem use the unshifted potential, so the
term ``||lambda_N u_N - lambda u||_k`` in hot_lb uses unshifted eigenvalues.
The energy norm carries ``V - V_m``; the term hot_ub, which comes from the
same identity as the energy norm, therefore uses the shifted eigenvalues
``lambda - V_m`` and ``lambda_N - V_m``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import csv
import io
import json

import numpy as np

from . import fields as F
from .basis import project_N
from .dg import element_energy_sq


# -- bubble machinery ---------------------------------------------------------

def bubble(grid, k):
    """Bubble samples and gradients on element ``k``: (n_nodes,), (n_nodes, dim)."""
    part = grid.partition
    x = grid.points[k] - part.lower[k]
    h = part.h
    s = np.sin(np.pi * x / h)
    c = np.cos(np.pi * x / h)
    g = np.prod(s ** 2, axis=1)
    grad = np.empty_like(x)
    for j in range(part.dim):
        others = np.prod(np.delete(s, j, axis=1) ** 2, axis=1)
        grad[:, j] = 2.0 * s[:, j] * c[:, j] * (np.pi / h[j]) * others
    return g, grad


@dataclass(frozen=True, eq=False)
class SineSolution:
    """phi = sum_k coeffs[k] prod_j sin(k_j pi (x_j - a_j) / h_j) on one element."""

    coeffs: np.ndarray
    lower: np.ndarray
    h: np.ndarray

    def evaluate(self, points, derivatives=False):
        x = np.atleast_2d(points) - self.lower
        d = x.shape[1]
        M = self.coeffs.shape[0]
        freq = np.arange(1, M + 1)
        S = [np.sin(np.outer(x[:, j], freq) * np.pi / self.h[j]) for j in range(d)]
        C = [np.cos(np.outer(x[:, j], freq) * np.pi / self.h[j]) * (freq * np.pi / self.h[j])
             for j in range(d)]
        letters = "abc"[:d]
        spec = ",".join(f"n{a}" for a in letters) + f",{letters}->n"
        vals = np.einsum(spec, *S, self.coeffs)
        if not derivatives:
            return vals
        grads = []
        for j in range(d):
            ops = [C[i] if i == j else S[i] for i in range(d)]
            grads.append(np.einsum(spec, *ops, self.coeffs))
        return vals, np.stack(grads, axis=1)


def solve_bubble(grid, k, rhs, modes=None):
    """Solve ``-lap phi = rhs`` on element ``k`` with phi = 0 on its boundary.

    ``rhs`` holds node samples; its sine coefficients are obtained by LGL
    quadrature and divided by |freq|^2.  ``modes`` defaults to the grid order.
    """
    part = grid.partition
    d, q = part.dim, grid.order
    M = q if modes is None else int(modes)
    h = part.h
    freq = np.arange(1, M + 1)
    lower = part.lower[k]
    # separable projection: b_m = prod_j (2/h_j) * int rhs * prod sin
    r = np.asarray(rhs, dtype=float).reshape((q,) * d)
    proj = r
    for j in range(d):
        xj = grid.axis_coords[j][part.multi_index[k, j]] - lower[j]
        wj = grid.ref_weights * 0.5 * h[j]
        P = (2.0 / h[j]) * np.sin(np.outer(freq, xj) * np.pi / h[j]) * wj[None, :]
        proj = np.moveaxis(np.tensordot(P, proj, axes=([1], [j])), 0, j)
    k2 = sum(np.meshgrid(*[(freq * np.pi / h[j]) ** 2 for j in range(d)], indexing="ij"))
    return SineSolution(proj / k2, lower, h)


# -- residual and estimator bundle ----------------------------------------

def residual_field(u_N, lam_N, potential):
    """Samples of R = lambda_N u_N + lap u_N - V u_N and, if available, grad R.

    ``potential`` is a pair (V node values, grad V node values).
    """
    if u_N.laps is None:
        raise F.MissingDataError("residual needs Laplacian samples")
    V, dV = potential
    R = lam_N * u_N.values + u_N.laps - V * u_N.values
    gR = None
    if u_N.grad_laps is not None:
        gR = lam_N * u_N.grads + u_N.grad_laps - dV * u_N.values[..., None] - V[..., None] * u_N.grads
    return R, gR


@dataclass
class EstimatorBundle:
    """Estimator quantities; per-element arrays are (m, n_elements), globals (m,)."""

    eta_R: np.ndarray
    eta_F: np.ndarray
    eta_J: np.ndarray
    c_R: np.ndarray
    c_F: np.ndarray
    c_J: np.ndarray
    xi_local: np.ndarray
    res_norm: np.ndarray
    res_bubble_half: np.ndarray
    res_bubble: np.ndarray
    bubble_grad: np.ndarray
    eta: np.ndarray
    xi: np.ndarray
    b_omega: np.ndarray
    zero_residual: np.ndarray
    hot_lb_local: np.ndarray | None = None
    hot_ub: np.ndarray | None = None
    hot_lb: np.ndarray | None = None
    xi_flag: np.ndarray = field(default=None)

    @property
    def eta_local(self):
        return self.eta_R + self.eta_F + self.eta_J

    @property
    def m(self):
        return self.eta.shape[0]

    def rows(self):
        for i in range(self.m):
            for k in range(self.eta_R.shape[1]):
                row = {
                    "pair": i + 1, "element": k,
                    "eta_R": self.eta_R[i, k], "eta_F": self.eta_F[i, k], "eta_J": self.eta_J[i, k],
                    "c_R": self.c_R[i, k], "c_F": self.c_F[i, k], "c_J": self.c_J[i, k],
                    "xi_k": self.xi_local[i, k],
                    "hot_lb_k": (None if self.hot_lb_local is None else self.hot_lb_local[i, k]),
                    "zero_residual": bool(self.zero_residual[i, k]),
                }
                yield row

    def to_csv(self, path=None):
        buf = io.StringIO()
        cols = ["pair", "element", "eta_R", "eta_F", "eta_J", "c_R", "c_F", "c_J", "xi_k",
                "hot_lb_k", "zero_residual"]
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for row in self.rows():
            writer.writerow([_fmt(row[c]) for c in cols])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def to_dict(self):
        def arr(x):
            return None if x is None else np.asarray(x).tolist()

        pairs = []
        for i in range(self.m):
            pairs.append({
                "pair": i + 1,
                "eta": float(self.eta[i]),
                "xi": float(self.xi[i]),
                "hot_ub": None if self.hot_ub is None else float(self.hot_ub[i]),
                "hot_lb": None if self.hot_lb is None else float(self.hot_lb[i]),
                "elements": {
                    "eta_R": arr(self.eta_R[i]), "eta_F": arr(self.eta_F[i]),
                    "eta_J": arr(self.eta_J[i]), "c_R": arr(self.c_R[i]),
                    "c_F": arr(self.c_F[i]), "c_J": arr(self.c_J[i]),
                    "xi": arr(self.xi_local[i]),
                    "hot_lb": None if self.hot_lb_local is None else arr(self.hot_lb_local[i]),
                    "zero_residual": arr(self.zero_residual[i]),
                },
            })
        return {"b_omega": arr(self.b_omega), "pairs": pairs}

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=1)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def b_omega(partition, b):
    """b_omega(k) = sqrt(max over faces of k of (b_k^2 + b_k'^2) / 2)."""
    b2 = np.asarray(b) ** 2
    face = 0.5 * (b2[partition.face_elements[:, 0]] + b2[partition.face_elements[:, 1]])
    return np.sqrt(face[partition.element_faces].max(axis=1))


def eta_terms(u_N, lam_N, constants, potential):
    """Per-element (eta_R, eta_F, eta_J) and the residual samples."""
    grid = u_N.grid
    part = grid.partition
    R, gR = residual_field(u_N, lam_N, potential)
    res_norm = np.sqrt(np.sum(grid.weights * R ** 2, axis=1))
    jump_dn = F.element_boundary_sums(part, F.face_integrals(grid, F.normal_gradient_jumps(u_N)))
    jump_v = F.element_boundary_sums(part, F.face_integrals(grid, F.value_jumps(u_N)))
    eta_R = constants.a * res_norm
    eta_F = 0.5 * constants.b * np.sqrt(jump_dn)
    eta_J = (constants.b * constants.gamma_hat + 0.5 * constants.c) * np.sqrt(jump_v)
    return eta_R, eta_F, eta_J, R, gR, res_norm


def global_eta(eta_R, eta_F, eta_J):
    return float(np.sqrt(np.sum((eta_R + eta_F + eta_J) ** 2)))


def bubble_quantities(grid, k, R_k, gR_k, V_k, modes=None):
    """Norms ||g^(1/2) R||_k, ||g R||_k, ||grad(g R - phi)||_k on element ``k``."""
    w = grid.weights[k]
    g, dg = bubble(grid, k)
    half = np.sqrt(np.sum(w * g * R_k ** 2))
    full = np.sqrt(np.sum(w * (g * R_k) ** 2))
    sol = solve_bubble(grid, k, V_k * g * R_k, modes=modes)
    _, dphi = sol.evaluate(grid.points[k], derivatives=True)
    d_gR = dg * R_k[:, None] + g[:, None] * gR_k
    grad_norm = np.sqrt(np.sum(w[:, None] * (d_gR - dphi) ** 2))
    return half, full, grad_norm


def lower_constants(grid, constants, R, gR, V, res_norm, d_u=None, modes=None):
    """(c_R, c_F, c_J, bubble norms, zero flags) for one eigenpair.

    ``d_u`` is the per-element d^u used in c_F; defaults to ``constants.d_u``.
    """
    part = grid.partition
    d_u = constants.d_u if d_u is None else np.asarray(d_u)
    n_el = part.n_elements
    half = np.zeros(n_el)
    full = np.zeros(n_el)
    gnorm = np.zeros(n_el)
    for k in range(n_el):
        half[k], full[k], gnorm[k] = bubble_quantities(grid, k, R[k], gR[k], V[k], modes)
    zero = half <= 1e-300
    c_R = np.where(zero, 0.0, constants.a * res_norm * gnorm / np.where(zero, 1.0, half ** 2))
    patch_max = np.array([d_u[p].max() for p in part.patches])
    sizes = np.array([len(p) for p in part.patches])
    c_F = constants.b * np.sqrt(sizes / 2.0) * patch_max
    c_J = np.sqrt(2.0 / constants.gamma) * (constants.b * constants.gamma_hat + 0.5 * constants.c)
    return c_R, c_F, c_J, half, full, gnorm, zero


def xi_local(eta_R, eta_F, eta_J, c_R, c_F, c_J):
    """Robust local lower bound (eta_R + eta_F + eta_J) / (c_R + c_F + c_J)."""
    den = c_R + c_F + c_J
    num = eta_R + eta_F + eta_J
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


def xi_global(eta_R, eta_F, eta_J, c_R, c_J, b_om, d_u):
    """Global lower bound xi and a flag set when every denominator vanishes."""
    den = 3.0 * np.max(c_R ** 2 + (b_om * d_u) ** 2 + c_J ** 2)
    if den <= 0:
        return 0.0, True
    return float(np.sqrt(np.sum((eta_R + eta_F + eta_J) ** 2) / den)), False


def hot_ub(e_l2, e_energy, lam_shifted, lam_N_shifted):
    """(lambda + lambda_N)/2 * ||e||^2 / |||e|||, using shifted eigenvalues."""
    if e_energy == 0.0:
        return 0.0
    return 0.5 * (lam_shifted + lam_N_shifted) * e_l2 ** 2 / e_energy


def hot_lb_local(grid, u, lam, u_N, lam_N, res_bubble, bubble_grad):
    """Per-element ||lambda_N u_N - lambda u||_k ||g R||_k / ||grad(g R - phi)||_k."""
    diff = lam_N * u_N.values - lam * u.values
    nrm = np.sqrt(np.sum(grid.weights * diff ** 2, axis=1))
    return np.where(bubble_grad > 0, nrm * res_bubble / np.where(bubble_grad > 0, bubble_grad, 1.0), 0.0)


def estimate(solution, constants, potential, d_u=None, modes=None):
    """Estimator bundle for every pair of ``solution`` (reference-free part).

    ``potential`` is (V, grad V) node samples.  ``d_u`` (per pair and element,
    shape (m, n_el), or per element) replaces the surrogate in c_F and in xi.
    """
    basis = solution.basis
    grid = basis.grid
    part = grid.partition
    V, _ = potential
    m, n_el = solution.m, part.n_elements
    out = {key: np.zeros((m, n_el)) for key in (
        "eta_R", "eta_F", "eta_J", "c_R", "c_F", "c_J", "xi_local",
        "res_norm", "res_bubble_half", "res_bubble", "bubble_grad")}
    zero = np.zeros((m, n_el), dtype=bool)
    eta = np.zeros(m)
    xi = np.zeros(m)
    xi_flag = np.zeros(m, dtype=bool)
    b_om = b_omega(part, constants.b)
    for i in range(m):
        du_i = constants.d_u if d_u is None else np.broadcast_to(d_u, (m, n_el))[i]
        cons_i = constants if d_u is None else constants.with_d_u(part, du_i)
        u_N = solution.field(i)
        lam_N = solution.eigenvalues[i]
        eR, eF, eJ, R, gR, rn = eta_terms(u_N, lam_N, cons_i, potential)
        cR, cF, cJ, half, full, gnorm, z = lower_constants(grid, cons_i, R, gR, V, rn, du_i, modes)
        out["eta_R"][i], out["eta_F"][i], out["eta_J"][i] = eR, eF, eJ
        out["c_R"][i], out["c_F"][i], out["c_J"][i] = cR, cF, cJ
        out["res_norm"][i] = rn
        out["res_bubble_half"][i], out["res_bubble"][i], out["bubble_grad"][i] = half, full, gnorm
        out["xi_local"][i] = xi_local(eR, eF, eJ, cR, cF, cJ)
        zero[i] = z
        eta[i] = global_eta(eR, eF, eJ)
        xi[i], xi_flag[i] = xi_global(eR, eF, eJ, cR, cJ, b_om, du_i)
    return EstimatorBundle(eta=eta, xi=xi, b_omega=b_om, zero_residual=zero, xi_flag=xi_flag, **out)


def true_d_u(u, u_N):
    """Per-element d^u = ||grad(u - u_N) . n||_dk / ||grad(u - u_N)||_k."""
    e = u - u_N
    grid = e.grid
    part = grid.partition
    out = np.zeros(part.n_elements)
    for k in range(part.n_elements):
        num = 0.0
        for face, side, _ in grid.element_boundary_nodes(k):
            axis = part.face_axis[face]
            num += np.sum(grid.face_weights[face] * e.face_grads[face, side, :, axis] ** 2)
        den = np.sum(grid.weights[k] * np.sum(e.grads[k] ** 2, axis=1))
        out[k] = np.sqrt(num / den) if den > 0 else 0.0
    return out


def eigenvalue_bounds(eta, xi, hot_ub_val=None, hot_lb_val=None, constants=None,
                      lam_shifted=None, e_l2=None, err_lambda=None):
    """Eigenvalue error bounds.

    Always returns the numerical bounds ``upper_numerical = eta^2`` and
    ``lower_numerical = xi^2``.  With reference data (``lam_shifted``,
    ``e_l2``, hot terms and constants) it also returns the theorem forms:

    ``upper_theorem``
        ``max_k(1 + d^u |1+theta| / (8 gamma)^(1/2)) (eta + hot_ub)^2 + lambda ||e||^2``;
    ``upper_theorem_statement``
        the same with ``2 gamma^(1/2)`` in place of ``(8 gamma)^(1/2)``;
    ``lower_theorem_lhs``, ``lower_theorem_rhs``
        ``xi^2 / 2`` and ``|lambda_N - lambda| + lambda ||e||^2 + hot_lb^2 / 2``
        (the latter only when ``err_lambda`` is given).

    ``lambda`` is the shifted eigenvalue, matching the shifted energy norm.
    """
    out = {"upper_numerical": eta ** 2, "lower_numerical": xi ** 2}
    if constants is not None and lam_shifted is not None and e_l2 is not None:
        th = abs(1.0 + constants.theta)
        du = constants.d_u
        f_proof = np.max(1.0 + du * th / np.sqrt(8.0 * constants.gamma))
        f_stmt = np.max(1.0 + du * th / (2.0 * np.sqrt(constants.gamma)))
        hu = 0.0 if hot_ub_val is None else hot_ub_val
        hl = 0.0 if hot_lb_val is None else hot_lb_val
        l2 = lam_shifted * e_l2 ** 2
        out["upper_theorem"] = f_proof * (eta + hu) ** 2 + l2
        out["upper_theorem_statement"] = f_stmt * (eta + hu) ** 2 + l2
        out["lower_theorem_lhs"] = 0.5 * xi ** 2
        if err_lambda is not None:
            out["lower_theorem_rhs"] = err_lambda + l2 + 0.5 * hl ** 2
    return out


def error_representation_check(u, lam, u_N, lam_N, basis, gamma, theta, V, V_m, jump_factor=1.0):
    """Independent evaluation of the error representation formula.

    Evaluates, element by element, with ``phi = e / |||e|||`` and
    ``phi_N = Pi_N phi``::

        sum_k [ (R, phi - phi_N)_k - 1/2 ([[grad u_N]], phi - phi_N)_dk
                - ({gamma} [[u_N]], (phi - phi_N) n_k)_dk
                - 1/2 ([[u_N]], grad phi + theta grad phi_N)_dk ]
        + (lambda u - lambda_N u_N, phi)

    with shifted eigenvalues in the last term, and returns
    ``(|rhs - |||e|||, |||e|||)``.  ``jump_factor`` scales the penalty jump
    term; values other than 1 serve as a sensitivity check.
    """
    grid = u.grid
    part = grid.partition
    Vs = V - V_m
    e = u - u_N
    enorm = float(np.sqrt(np.sum(element_energy_sq(e, gamma, Vs))))
    if enorm == 0.0:
        return 0.0, 0.0
    phi = e * (1.0 / enorm)
    coeffs = np.concatenate([
        project_N(phi.values[k], phi.grads[k], basis.elements[k])
        for k in range(part.n_elements)])
    phi_N = basis.field(coeffs)
    psi = phi - phi_N
    R = lam_N * u_N.values + u_N.laps - V * u_N.values

    gamma = np.asarray(gamma, dtype=float)
    jv = F.value_jumps(u_N)
    jdn = F.normal_gradient_jumps(u_N)
    total = float(np.sum(grid.weights * R * psi.values))
    for k in range(part.n_elements):
        for face, side, _ in grid.element_boundary_nodes(k):
            axis = part.face_axis[face]
            fw = grid.face_weights[face]
            n_k = 1.0 if side == 0 else -1.0       # outward normal of k, along e_axis
            l, r = part.face_elements[face]
            g_avg = 0.5 * (gamma[l] + gamma[r])
            psi_k = psi.face_values[face, side]
            dphi = phi.face_grads[face, side, :, axis]
            dphi_N = phi_N.face_grads[face, side, :, axis]
            total -= 0.5 * np.sum(fw * jdn[face] * psi_k)
            total -= jump_factor * np.sum(fw * g_avg * jv[face] * psi_k * n_k)
            total -= 0.5 * np.sum(fw * jv[face] * (dphi + theta * dphi_N))
    lam_s, lamN_s = lam - V_m, lam_N - V_m
    total += float(np.sum(grid.weights * (lam_s * u.values - lamN_s * u_N.values) * phi.values))
    return abs(total - enorm), enorm
