"""Local scaling constants from small generalized eigenproblems.

``d_k`` is the best constant in ``||grad v . n||_dk <= d_k <<v>>`` over the
local basis, while ``a_k`` and ``b_k`` bound the L2 norms on the element and on
its boundary of functions that are <<.,.>>-orthogonal to the local basis.  The
latter are computed in a fine space of tensor Lagrange polynomials on the
element's LGL nodes.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import csv
import io

import numpy as np
import scipy.linalg

from .mesh import differentiation_matrix


@dataclass(frozen=True, eq=False)
class FineSpace:
    """Nodal Lagrange space of degree ``order - 1`` per axis on one element.

    Matrices (all on nodal coefficient vectors):

    ``inner`` -- <<.,.>>;  ``mass`` -- (.,.)_k;  ``boundary_mass`` -- (.,.)_dk;
    ``normal_grad`` -- (grad . n, grad . n)_dk.
    """

    derivs: list = field(repr=False)
    weights: np.ndarray = field(repr=False)
    inner: np.ndarray = field(repr=False)
    mass: np.ndarray = field(repr=False)
    boundary_mass: np.ndarray = field(repr=False)
    normal_grad: np.ndarray = field(repr=False)

    @property
    def degree(self):
        return int(round(len(self.weights) ** (1.0 / len(self.derivs)))) - 1

    def embedding_error(self, eb):
        """Largest relative <<.,.>>-norm error of interpolating ``eb`` into the space."""
        errs = []
        for i in range(eb.size):
            g_interp = np.stack([D @ eb.values[:, i] for D in self.derivs], axis=1)
            diff = g_interp - eb.grads[:, :, i]
            err = np.sqrt(np.sum(self.weights[:, None] * diff ** 2))
            errs.append(err / np.sqrt(eb.gram[i, i]))
        return float(max(errs))


def build_fine_space(grid, k=0):
    """Fine space on element ``k`` of ``grid`` (congruent for all elements)."""
    part = grid.partition
    d, q = part.dim, grid.order
    D1 = differentiation_matrix(grid.ref_nodes)
    derivs = []
    for j in range(d):
        op = D1 * (2.0 / part.h[j])
        left = np.eye(q ** j)
        right = np.eye(q ** (d - j - 1))
        derivs.append(np.kron(np.kron(left, op), right))
    w = grid.weights[k]
    vol = w.sum()
    stiff = sum(Dj.T @ (w[:, None] * Dj) for Dj in derivs)
    inner = stiff + np.outer(w, w) / vol
    mass = np.diag(w)
    n = q ** d
    bmass = np.zeros((n, n))
    ngrad = np.zeros((n, n))
    for face, side, nodes in grid.element_boundary_nodes(k):
        axis = part.face_axis[face]
        fw = grid.face_weights[face]
        bmass[nodes, nodes] += fw
        Dn = derivs[axis][nodes]
        ngrad += Dn.T @ (fw[:, None] * Dn)
    sym = lambda A: 0.5 * (A + A.T)
    return FineSpace(derivs, w, sym(inner), mass, bmass, sym(ngrad))


def normal_gradient_gram(grid, eb, k):
    """(grad phi_i . n, grad phi_j . n)_dk for the functions of ``eb``."""
    part = grid.partition
    B = np.zeros((eb.size, eb.size))
    for face, side, nodes in grid.element_boundary_nodes(k):
        axis = part.face_axis[face]
        dn = eb.grads[nodes, axis, :]
        B += dn.T @ (grid.face_weights[face][:, None] * dn)
    return 0.5 * (B + B.T)


def _largest_generalized(A, B):
    n = A.shape[0]
    mu = scipy.linalg.eigh(A, B, eigvals_only=True, subset_by_index=[n - 1, n - 1])[0]
    if not np.isfinite(mu):
        raise FloatingPointError("non-finite generalized eigenvalue")
    return max(float(mu), 0.0)


def compute_d(grid, eb, k):
    """Trace inverse constant: sqrt of the top eigenvalue of (normal grad) vs <<.,.>>."""
    return float(np.sqrt(_largest_generalized(normal_gradient_gram(grid, eb, k), eb.gram)))


def complement_basis(fine, eb):
    """Columns spanning the <<.,.>>-orthogonal complement of ``eb`` in the fine space."""
    AX = fine.inner @ eb.values
    n, r = AX.shape
    if r >= n:
        raise ValueError("fine space is not richer than the local basis; increase its degree")
    Qfull, _ = np.linalg.qr(AX, mode="complete")
    return Qfull[:, r:]


def compute_ab(fine, eb):
    """Constants (a_k, b_k) on the complement of the local basis."""
    Z = complement_basis(fine, eb)
    A = Z.T @ fine.inner @ Z
    A = 0.5 * (A + A.T)
    a2 = _largest_generalized(Z.T @ fine.mass @ Z, A)
    b2 = _largest_generalized(Z.T @ fine.boundary_mass @ Z, A)
    return float(np.sqrt(a2)), float(np.sqrt(b2))


def compute_gamma(d, theta=1.0):
    """Penalty at the coercivity threshold 0.5 (1 + theta)^2 d^2."""
    return 0.5 * (1.0 + theta) ** 2 * np.asarray(d, dtype=float) ** 2


def gamma_hat(partition, gamma):
    """max over the faces of each element of the face average of gamma."""
    gamma = np.asarray(gamma, dtype=float)
    face_avg = 0.5 * (gamma[partition.face_elements[:, 0]] + gamma[partition.face_elements[:, 1]])
    return face_avg[partition.element_faces].max(axis=1)


def c_kappa(d_u, d, theta=1.0):
    return np.asarray(d_u, dtype=float) + np.asarray(d, dtype=float) * abs(theta)


@dataclass(frozen=True, eq=False)
class LocalConstants:
    """Per-element constants; every field is an (n_elements,) array."""

    a: np.ndarray
    b: np.ndarray
    d: np.ndarray
    gamma: np.ndarray
    gamma_hat: np.ndarray
    c: np.ndarray
    d_u: np.ndarray
    theta: float = 1.0
    embedding_error: float = 0.0

    def with_d_u(self, partition, d_u):
        """Copy with a different d^u (e.g. the true one in diagnostics mode)."""
        d_u = np.asarray(d_u, dtype=float)
        return LocalConstants(self.a, self.b, self.d, self.gamma, self.gamma_hat,
                              c_kappa(d_u, self.d, self.theta), d_u, self.theta,
                              self.embedding_error)

    def to_csv(self, path=None):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["element", "a", "b", "d", "gamma", "gamma_hat", "c"])
        for k in range(len(self.a)):
            writer.writerow([k] + [repr(float(x[k])) for x in
                                   (self.a, self.b, self.d, self.gamma, self.gamma_hat, self.c)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def compute_constants(basis, theta=1.0, gamma=None, threads=1):
    """All local constants for ``basis``.

    ``gamma`` overrides the penalty (array or scalar); by default it sits at
    the coercivity threshold.  The surrogate d^u = d is used.
    """
    grid = basis.grid
    part = grid.partition
    fine = build_fine_space(grid)

    def work(k):
        eb = basis.elements[k]
        a, b = compute_ab(fine, eb)
        return a, b, compute_d(grid, eb, k)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(work, range(part.n_elements)))
    else:
        rows = [work(k) for k in range(part.n_elements)]
    a, b, d = (np.array(col) for col in zip(*rows))
    g = compute_gamma(d, theta) if gamma is None else np.broadcast_to(
        np.asarray(gamma, dtype=float), d.shape).copy()
    emb = max(fine.embedding_error(eb) for eb in basis.elements)
    return LocalConstants(a, b, d, g, gamma_hat(part, g), c_kappa(d, d, theta), d.copy(),
                          float(theta), emb)
