"""Sampled fields on the broken space and the jump/average operators.

A :class:`GridFunction` holds element samples (values and, optionally,
gradients, Laplacians and gradients of the Laplacian) together with face
traces taken from both incident elements.  Along a face normal to axis ``a``
with left element ``l`` and right element ``r``,

    [[v]]      = (v_l - v_r) e_a
    [[grad v]] = d_a v_l - d_a v_r
    {v}        = (v_l + v_r) / 2

so the vector jump does not depend on which element's normal is stored.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class MissingDataError(ValueError):
    """A field lacks derivative or trace data an operation needs."""


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Broken field sampled on a :class:`~eigbound.mesh.QuadGrid`.

    ``face_values`` has shape (n_faces, 2, n_face_nodes) with side 0 the
    left element and side 1 the right element; ``face_grads`` appends a
    trailing ``dim`` axis.
    """

    grid: object = field(repr=False)
    values: np.ndarray = field(repr=False)
    grads: np.ndarray | None = field(default=None, repr=False)
    laps: np.ndarray | None = field(default=None, repr=False)
    grad_laps: np.ndarray | None = field(default=None, repr=False)
    face_values: np.ndarray | None = field(default=None, repr=False)
    face_grads: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        shape = (self.grid.partition.n_elements, self.grid.n_nodes)
        if self.values.shape != shape:
            raise ValueError(f"values shape {self.values.shape} != {shape}")
        if self.grads is not None and self.grads.shape != shape + (self.grid.dim,):
            raise ValueError("gradient shape does not match the grid")
        if self.laps is not None and self.laps.shape != shape:
            raise ValueError("Laplacian shape does not match the grid")

    @classmethod
    def from_elements(cls, grid, values, grads=None, laps=None, grad_laps=None):
        """Build a field from element samples; traces are read off the
        boundary nodes of each element."""
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.partition.n_elements, grid.n_nodes):
            raise ValueError(f"values shape {values.shape} does not match the grid")
        face_values = extract_traces(grid, values)
        face_grads = None if grads is None else extract_traces(grid, grads)
        return cls(grid, values, grads, laps, grad_laps, face_values, face_grads)

    @classmethod
    def from_callable(cls, grid, func, grad=None, lap=None):
        """Sample closed-form callables taking points shaped (..., dim)."""
        pts = grid.points
        values = np.asarray(func(pts), dtype=float)
        grads = None if grad is None else np.asarray(grad(pts), dtype=float)
        laps = None if lap is None else np.asarray(lap(pts), dtype=float)
        return cls.from_elements(grid, values, grads, laps)

    # -- linear structure -------------------------------------------------
    def _combine(self, other, a, b):
        def mix(x, y):
            if x is None or y is None:
                return None
            return a * x + b * y

        return GridFunction(
            self.grid,
            mix(self.values, other.values),
            mix(self.grads, other.grads),
            mix(self.laps, other.laps),
            mix(self.grad_laps, other.grad_laps),
            mix(self.face_values, other.face_values),
            mix(self.face_grads, other.face_grads),
        )

    def __add__(self, other):
        return self._combine(other, 1.0, 1.0)

    def __sub__(self, other):
        return self._combine(other, 1.0, -1.0)

    def __mul__(self, scalar):
        return self._combine(self, float(scalar), 0.0)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def zeros_like(self):
        return self * 0.0


def extract_traces(grid, arr):
    """Face traces (n_faces, 2, n_face_nodes, ...) of element samples ``arr``."""
    part = grid.partition
    out = np.empty((part.n_faces, 2, grid.n_face_nodes) + arr.shape[2:])
    for f in range(part.n_faces):
        axis = part.face_axis[f]
        left, right = part.face_elements[f]
        out[f, 0] = arr[left][grid.face_nodes[axis][1]]
        out[f, 1] = arr[right][grid.face_nodes[axis][0]]
    return out


def combine(fields, coeffs):
    """Linear combination ``sum_i coeffs[i] * fields[i]``."""
    coeffs = np.asarray(coeffs, dtype=float)
    out = fields[0] * coeffs[0]
    for f, c in zip(fields[1:], coeffs[1:]):
        out = out + f * c
    return out


def _require(f, *names):
    for name in names:
        if getattr(f, name) is None:
            raise MissingDataError(f"field has no {name}")


def _unit(grid, face):
    e = np.zeros(grid.dim)
    e[grid.partition.face_axis[face]] = 1.0
    return e


# -- single-face operators ---------------------------------------------------

def jump_value(f, face):
    """Vector jump [[f]] at the nodes of ``face``, shape (n_face_nodes, dim)."""
    _require(f, "face_values")
    jv = f.face_values[face, 0] - f.face_values[face, 1]
    return jv[:, None] * _unit(f.grid, face)[None, :]


def avg_value(f, face):
    _require(f, "face_values")
    return 0.5 * (f.face_values[face, 0] + f.face_values[face, 1])


def jump_normal_gradient(f, face):
    """Scalar jump of the normal derivative at the nodes of ``face``."""
    _require(f, "face_grads")
    a = f.grid.partition.face_axis[face]
    return f.face_grads[face, 0, :, a] - f.face_grads[face, 1, :, a]


def avg_gradient(f, face):
    _require(f, "face_grads")
    return 0.5 * (f.face_grads[face, 0] + f.face_grads[face, 1])


# -- all-face operators (scalar components along the face axis) -------------

def value_jumps(f):
    """(n_faces, n_face_nodes) coefficient of e_axis in [[f]]."""
    _require(f, "face_values")
    return f.face_values[:, 0] - f.face_values[:, 1]


def _axis_component(f):
    axes = f.grid.partition.face_axis
    return np.take_along_axis(
        f.face_grads, axes[:, None, None, None], axis=3
    )[..., 0]


def normal_gradient_jumps(f):
    _require(f, "face_grads")
    g = _axis_component(f)
    return g[:, 0] - g[:, 1]


def normal_gradient_avgs(f):
    """(n_faces, n_face_nodes) axis component of {grad f}."""
    _require(f, "face_grads")
    g = _axis_component(f)
    return 0.5 * (g[:, 0] + g[:, 1])


def face_integrals(grid, a, b=None):
    """Per-face integrals of ``a * b`` (or ``a**2``), shape (n_faces,)."""
    b = a if b is None else b
    return np.sum(grid.face_weights * a * b, axis=1)


def element_boundary_sums(partition, per_face):
    """Sum a per-face quantity over the faces of every element."""
    return per_face[partition.element_faces].sum(axis=1)


# -- norms and inner products ---------------------------------------------

def inner_elem(f, g, k):
    if f.values.shape != g.values.shape:
        raise ValueError("shape mismatch")
    w = f.grid.weights[k]
    return float(np.sum(w * f.values[k] * g.values[k]))


def l2_norm_elem(f, k):
    return float(np.sqrt(inner_elem(f, f, k)))


def l2_norm_face(f, k):
    """L2 norm over the boundary of element ``k`` of the trace from ``k``."""
    _require(f, "face_values")
    grid = f.grid
    total = 0.0
    for face, side, _ in grid.element_boundary_nodes(k):
        total += np.sum(grid.face_weights[face] * f.face_values[face, side] ** 2)
    return float(np.sqrt(total))


def element_norms(grid, arr):
    """Per-element L2 norms of scalar (n_el, n_nodes) or vector (n_el, n_nodes, d) samples."""
    sq = arr ** 2
    if sq.ndim == 3:
        sq = sq.sum(axis=2)
    return np.sqrt(np.sum(grid.weights * sq, axis=1))


def inner(f, g):
    """Global L2 inner product (f, g)_Omega."""
    return float(np.sum(f.grid.weights * f.values * g.values))


def check_integration_by_parts(v, w):
    """Residual of the broken integration-by-parts identity.

    Returns ``|sum_k [(lap v, w)_k + (grad v, grad w)_k]
    - 1/2 sum_k [([[grad v]], w)_dk + (grad v, [[w]])_dk]|``.  Summing the
    boundary terms of both incident elements turns the right-hand side into
    ``sum_F ([[grad v]], {w})_F + ({grad v}, [[w]])_F``.
    """
    _require(v, "grads", "laps", "face_grads", "face_values")
    _require(w, "grads", "face_values")
    grid = v.grid
    lhs = np.sum(grid.weights * (v.laps * w.values + np.sum(v.grads * w.grads, axis=2)))
    rhs = np.sum(
        grid.face_weights
        * (normal_gradient_jumps(v) * 0.5 * (w.face_values[:, 0] + w.face_values[:, 1])
           + normal_gradient_avgs(v) * value_jumps(w))
    )
    return float(abs(lhs - rhs))
