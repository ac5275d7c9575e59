"""Interior penalty DG operator over a BasisSet.

The bilinear form is

    a(w, v) = sum_k (grad w, grad v)_k + (V w, v)_k
              + 1/2 sum_k [ -(grad w, [[v]])_dk - theta ([[w]], grad v)_dk
                            + gamma_k ([[w]], [[v]])_dk ]

where inside (.)_dk the non-jump factor is the trace from element k.  Summing
both sides of a face F gives the face-wise form
``-({grad w}, [[v]])_F - theta ([[w]], {grad v})_F + {gamma} ([[w]], [[v]])_F``
that is assembled here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import fields as F
from .spectral import sample_potential


def potential_on_grid(spec, grid):
    """Potential samples (n_el, n_nodes) on all element nodes."""
    return sample_potential(spec, grid.points)


def potential_minimum(spec, grid):
    """V_m, the minimum of the potential over the quadrature nodes."""
    return float(potential_on_grid(spec, grid).min())


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Stiffness ``A[i, j] = a(phi_j, phi_i)`` and mass ``M`` over the global basis."""

    A: np.ndarray = field(repr=False)
    M: np.ndarray = field(repr=False)
    basis: object = field(repr=False)
    theta: float = 1.0
    gamma: np.ndarray = field(default=None, repr=False)
    potential: np.ndarray = field(default=None, repr=False)

    @property
    def n_dof(self):
        return self.A.shape[0]


def assemble(basis, spec, constants, theta=1.0, potential=None):
    """Assemble the DG stiffness and mass matrices.

    Parameters
    ----------
    basis : BasisSet
    spec : PotentialSpec
        Potential entering ``(V w, v)`` (unshifted).
    constants : LocalConstants
        Supplies the penalty ``gamma``.
    theta : float
        Symmetrization parameter; 1 gives the symmetric method.
    potential : ndarray, optional
        Precomputed node values of V; overrides ``spec``.
    """
    grid = basis.grid
    part = grid.partition
    V = potential_on_grid(spec, grid) if potential is None else potential
    gamma = np.asarray(constants.gamma, dtype=float)
    n = basis.n_dof
    A = np.zeros((n, n))
    M = np.zeros((n, n))

    for k, eb in enumerate(basis.elements):
        if eb.grads is None or eb.values is None:
            raise F.MissingDataError("basis lacks gradient samples")
        w = grid.weights[k]
        sl = basis.element_slice(k)
        A[sl, sl] += np.einsum("n,ndi,ndj->ij", w, eb.grads, eb.grads)
        A[sl, sl] += eb.values.T @ ((w * V[k])[:, None] * eb.values)
        M[sl, sl] += eb.values.T @ (w[:, None] * eb.values)

    for f in range(part.n_faces):
        axis = part.face_axis[f]
        fw = grid.face_weights[f]
        g_avg = 0.5 * (gamma[part.face_elements[f, 0]] + gamma[part.face_elements[f, 1]])
        sides = []
        for s, (elem, upper) in enumerate(((part.face_elements[f, 0], 1),
                                           (part.face_elements[f, 1], 0))):
            eb = basis.elements[elem]
            nodes = grid.face_nodes[axis][upper]
            sign = 1.0 if s == 0 else -1.0
            jump = sign * eb.values[nodes]            # e_axis component of [[phi]]
            avg_dn = 0.5 * eb.grads[nodes, axis, :]   # e_axis component of {grad phi}
            sides.append((basis.element_slice(elem), jump, avg_dn))
        for row_sl, jr, gr in sides:          # test function v = phi_i
            for col_sl, jc, gc in sides:      # trial function w = phi_j
                block = -(jr.T @ (fw[:, None] * gc))           # -({grad w}, [[v]])
                block -= theta * (gr.T @ (fw[:, None] * jc))   # -theta([[w]], {grad v})
                block += g_avg * (jr.T @ (fw[:, None] * jc))
                A[row_sl, col_sl] += block

    if not np.all(np.isfinite(A)):
        raise FloatingPointError("non-finite entries in the DG matrix")
    return DiscreteOperator(A, 0.5 * (M + M.T), basis, float(theta), gamma, V)


@dataclass(frozen=True, eq=False)
class EigenSolution:
    """Discrete eigenpairs; ``coeffs[:, i]`` is M-orthonormal."""

    eigenvalues: np.ndarray
    coeffs: np.ndarray = field(repr=False)
    basis: object = field(repr=False)

    @property
    def m(self):
        return len(self.eigenvalues)

    def field(self, i):
        return self.basis.field(self.coeffs[:, i])

    def fields(self):
        return [self.field(i) for i in range(self.m)]


def solve_eig(op, m):
    """The ``m`` lowest generalized eigenpairs of ``A c = lambda M c``."""
    if m < 1 or m > op.n_dof:
        raise ValueError(f"m={m} outside [1, {op.n_dof}]")
    A = op.A
    if op.theta == 1.0:
        A = 0.5 * (A + A.T)
    try:
        evals, evecs = scipy.linalg.eigh(A, op.M, subset_by_index=[0, m - 1])
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"DG eigensolve failed (is M positive definite?): {exc}") from exc
    return EigenSolution(evals, evecs, op.basis)


def evaluate_bilinear(w, v, gamma, theta=1.0, potential=None):
    """Quadrature value of a(w, v) for arbitrary broken fields.

    ``potential`` holds node values of V (default 0); ``gamma`` is per element.
    """
    for f in (w, v):
        if f.grads is None or f.face_grads is None or f.face_values is None:
            raise F.MissingDataError("a(w, v) needs gradients and traces")
    grid = w.grid
    part = grid.partition
    vol = np.sum(w.grads * v.grads, axis=2)
    if potential is not None:
        vol = vol + potential * w.values * v.values
    total = np.sum(grid.weights * vol)
    gamma = np.asarray(gamma, dtype=float)
    g_avg = 0.5 * (gamma[part.face_elements[:, 0]] + gamma[part.face_elements[:, 1]])
    jw, jv = F.value_jumps(w), F.value_jumps(v)
    aw, av = F.normal_gradient_avgs(w), F.normal_gradient_avgs(v)
    face = -aw * jv - theta * jw * av + g_avg[:, None] * jw * jv
    return float(total + np.sum(grid.face_weights * face))


def element_energy_sq(v, gamma, potential_shifted=None):
    """Per-element squared energy norm
    ``||grad v||_k^2 + gamma_k/2 ||[[v]]||_dk^2 + ||(V - V_m)^(1/2) v||_k^2``."""
    grid = v.grid
    part = grid.partition
    gamma = np.asarray(gamma, dtype=float)
    grad2 = np.sum(grid.weights * np.sum(v.grads ** 2, axis=2), axis=1)
    jump2 = F.element_boundary_sums(part, F.face_integrals(grid, F.value_jumps(v)))
    out = grad2 + 0.5 * gamma * jump2
    if potential_shifted is not None:
        out = out + np.sum(grid.weights * potential_shifted * v.values ** 2, axis=1)
    return out


def energy_norm(v, gamma, potential_shifted=None):
    """Broken energy norm; ``potential_shifted`` holds node values of V - V_m."""
    if v.grads is None or v.face_values is None:
        raise F.MissingDataError("energy norm needs gradients and traces")
    return float(np.sqrt(np.sum(element_energy_sq(v, gamma, potential_shifted))))
