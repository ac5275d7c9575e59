"""Adaptive local basis (ALB) functions and the local projections.

For every element the operator is solved with periodic boundary conditions on
the extended element (the element plus its ``3**d - 1`` neighbours).  The
lowest eigenfunctions are restricted to the element, the constant function is
added, and the set is orthonormalized in L2 of the element with linearly
dependent candidates removed.  All samples (values, gradients, Laplacians and
gradients of Laplacians) are exact derivatives of the extended-element
trigonometric interpolants.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
import json

import numpy as np
import scipy.linalg

from .spectral import evaluate_tensor, solve_planewave

DROP_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class ElementBasis:
    """Orthonormal functions on one element.

    ``values`` is (n_nodes, n_funcs); ``grads`` and ``grad_laps`` are
    (n_nodes, dim, n_funcs); ``laps`` is (n_nodes, n_funcs).
    """

    values: np.ndarray = field(repr=False)
    grads: np.ndarray = field(repr=False)
    laps: np.ndarray = field(repr=False)
    grad_laps: np.ndarray | None = field(default=None, repr=False)
    weights: np.ndarray = field(default=None, repr=False)
    dropped: tuple = ()

    @property
    def size(self):
        return self.values.shape[1]

    @cached_property
    def volume(self):
        return float(self.weights.sum())

    @cached_property
    def means(self):
        return self.weights @ self.values / self.volume

    @cached_property
    def gram(self):
        """Gram matrix of <<v, w>> = |k| mean(v) mean(w) + (grad v, grad w)_k."""
        G = self.volume * np.outer(self.means, self.means)
        G += np.einsum("n,ndi,ndj->ij", self.weights, self.grads, self.grads)
        return 0.5 * (G + G.T)

    @cached_property
    def gram_factor(self):
        try:
            return scipy.linalg.cho_factor(self.gram)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(
                "singular <<.,.>> Gram matrix: basis has dependent functions") from exc

    @cached_property
    def mass(self):
        return np.einsum("n,ni,nj->ij", self.weights, self.values, self.values)


@dataclass(frozen=True, eq=False)
class BasisSet:
    """Per-element bases over a quadrature grid."""

    grid: object = field(repr=False)
    elements: list = field(repr=False)
    meta: dict = field(default_factory=dict)

    @property
    def sizes(self):
        """The vector N = (N_k)_k of local dimensions."""
        return np.array([e.size for e in self.elements])

    @cached_property
    def offsets(self):
        return np.concatenate([[0], np.cumsum(self.sizes)])

    @property
    def n_dof(self):
        return int(self.offsets[-1])

    def element_slice(self, k):
        return slice(int(self.offsets[k]), int(self.offsets[k + 1]))

    def field(self, coeffs):
        """GridFunction of the global coefficient vector ``coeffs``."""
        from .fields import GridFunction

        grid = self.grid
        n_el = grid.partition.n_elements
        vals = np.empty((n_el, grid.n_nodes))
        grads = np.empty((n_el, grid.n_nodes, grid.dim))
        laps = np.empty((n_el, grid.n_nodes))
        has_third = all(e.grad_laps is not None for e in self.elements)
        gl = np.empty((n_el, grid.n_nodes, grid.dim)) if has_third else None
        for k, eb in enumerate(self.elements):
            c = coeffs[self.element_slice(k)]
            vals[k] = eb.values @ c
            grads[k] = eb.grads @ c
            laps[k] = eb.laps @ c
            if has_third:
                gl[k] = eb.grad_laps @ c
        return GridFunction.from_elements(grid, vals, grads, laps, gl)

    def save(self, path):
        """Write the basis to an ``.npz`` container (see README for keys)."""
        arrays = {}
        for k, eb in enumerate(self.elements):
            arrays[f"e{k}_values"] = eb.values
            arrays[f"e{k}_grads"] = eb.grads
            arrays[f"e{k}_laps"] = eb.laps
            if eb.grad_laps is not None:
                arrays[f"e{k}_grad_laps"] = eb.grad_laps
            arrays[f"e{k}_dropped"] = np.asarray(eb.dropped, dtype=int)
        part = self.grid.partition
        header = {
            "format": "eigbound-basis/1",
            "dim": part.dim,
            "lengths": list(part.lengths),
            "counts": list(part.counts),
            "order": self.grid.order,
            "n_elements": part.n_elements,
            "meta": self.meta,
        }
        np.savez_compressed(path, header=np.array(json.dumps(header)), **arrays)


def load_basis(path, grid):
    """Read a basis written by :meth:`BasisSet.save` for a matching grid."""
    with np.load(path) as data:
        header = json.loads(str(data["header"]))
        part = grid.partition
        if (header["counts"] != list(part.counts) or header["order"] != grid.order
                or not np.allclose(header["lengths"], part.lengths)):
            raise ValueError("stored basis does not match the grid")
        elements = []
        for k in range(header["n_elements"]):
            gl = data[f"e{k}_grad_laps"] if f"e{k}_grad_laps" in data else None
            elements.append(ElementBasis(
                data[f"e{k}_values"], data[f"e{k}_grads"], data[f"e{k}_laps"], gl,
                grid.weights[k], tuple(int(i) for i in data[f"e{k}_dropped"]),
            ))
    return BasisSet(grid, elements, header.get("meta", {}))


def orthonormalize(candidates, weights, drop_tol=DROP_TOL):
    """Weighted Gram-Schmidt with re-orthogonalization and rank detection.

    Candidates are processed in order; a candidate whose component orthogonal
    to the already accepted functions has relative norm below ``drop_tol`` is
    dropped.

    Parameters
    ----------
    candidates : (n_nodes, n_cand) array
    weights : (n_nodes,) quadrature weights

    Returns
    -------
    Q : (n_nodes, k) orthonormal samples, ``Q = candidates @ T``
    T : (n_cand, k) transformation
    kept : list of accepted candidate indices
    """
    X = np.asarray(candidates, dtype=float)
    if X.ndim != 2 or X.shape[1] == 0:
        raise ValueError("need at least one candidate")
    w = np.asarray(weights, dtype=float)
    n_cand = X.shape[1]
    Q = np.zeros((X.shape[0], 0))
    T = np.zeros((n_cand, 0))
    kept = []
    for j in range(n_cand):
        v = X[:, j].copy()
        t = np.zeros(n_cand)
        t[j] = 1.0
        norm0 = np.sqrt(w @ v ** 2)
        if norm0 == 0.0:
            continue
        for _ in range(2):
            proj = Q.T @ (w * v)
            v -= Q @ proj
            t -= T @ proj
        norm = np.sqrt(w @ v ** 2)
        if norm < drop_tol * norm0:
            continue
        Q = np.column_stack([Q, v / norm])
        T = np.column_stack([T, t / norm])
        kept.append(j)
    return Q, T, kept


def _element_basis(k, grid, spec, n_funcs, wavecount, drop_tol):
    part = grid.partition
    h = part.h
    origin = part.lower[k] - h
    sol = solve_planewave(spec, 3 * h, wavecount, n_funcs, origin=origin)
    axes = [grid.axis_coords[j][part.multi_index[k, j]] for j in range(part.dim)]
    s = evaluate_tensor(sol, axes, third=True)
    n_nodes = grid.n_nodes
    d = part.dim
    vals = s["value"].reshape(n_nodes, n_funcs)
    grads = s["grad"].reshape(n_nodes, d, n_funcs)
    laps = s["lap"].reshape(n_nodes, n_funcs)
    gls = s["grad_lap"].reshape(n_nodes, d, n_funcs)

    # constant first, so it is always represented exactly
    cand_v = np.column_stack([np.ones(n_nodes), vals])
    cand_g = np.concatenate([np.zeros((n_nodes, d, 1)), grads], axis=2)
    cand_l = np.column_stack([np.zeros(n_nodes), laps])
    cand_gl = np.concatenate([np.zeros((n_nodes, d, 1)), gls], axis=2)
    w = grid.weights[k]
    Q, T, kept = orthonormalize(cand_v, w, drop_tol)
    dropped = tuple(sorted(set(range(cand_v.shape[1])) - set(kept)))
    return ElementBasis(Q, cand_g @ T, cand_l @ T, cand_gl @ T, w, dropped), sol.eigenvalues


def generate_alb(grid, spec, n_funcs, wavecount, drop_tol=DROP_TOL, threads=1):
    """Generate the adaptive local basis on every element of ``grid``.

    Parameters
    ----------
    grid : QuadGrid
    spec : PotentialSpec
    n_funcs : int
        Number of extended-element eigenfunctions per element (N >= 2).
    wavecount : int or sequence of int
        Odd planewave count per axis on the extended element.
    """
    if n_funcs < 2:
        raise ValueError("need at least 2 basis functions per element")
    part = grid.partition
    if min(part.counts) < 3:
        raise ValueError("extended elements need at least 3 elements per axis")

    def work(k):
        return _element_basis(k, grid, spec, n_funcs, wavecount, drop_tol)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, range(part.n_elements)))
    else:
        results = [work(k) for k in range(part.n_elements)]
    elements = [r[0] for r in results]
    meta = {"N": n_funcs, "wavecount": list(np.broadcast_to(wavecount, (part.dim,)).tolist()),
            "drop_tol": drop_tol}
    return BasisSet(grid, elements, meta)


def basis_from_samples(grid, values, grads, laps, drop_tol=DROP_TOL):
    """Orthonormalize arbitrary per-element candidate samples into a BasisSet.

    ``values[k]`` is (n_nodes, n_cand), ``grads[k]`` (n_nodes, dim, n_cand),
    ``laps[k]`` (n_nodes, n_cand).
    """
    elements = []
    for k in range(grid.partition.n_elements):
        w = grid.weights[k]
        Q, T, kept = orthonormalize(values[k], w, drop_tol)
        dropped = tuple(sorted(set(range(values[k].shape[1])) - set(kept)))
        elements.append(ElementBasis(Q, grads[k] @ T, laps[k] @ T, None, w, dropped))
    return BasisSet(grid, elements, {})


def project_constant(values, weights):
    """Mean value of samples on an element."""
    return float(np.dot(weights, values) / np.sum(weights))


def project_N(values, grads, eb):
    """Coefficients of the <<.,.>>-projection onto span of ``eb``.

    ``values`` is (n_nodes,) and ``grads`` (n_nodes, dim) for one element.
    """
    mean = project_constant(values, eb.weights)
    rhs = eb.volume * mean * eb.means
    rhs += np.einsum("n,nd,ndi->i", eb.weights, grads, eb.grads)
    return scipy.linalg.cho_solve(eb.gram_factor, rhs)
