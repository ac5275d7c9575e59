"""Periodic tensor-product partitions and Legendre-Gauss-Lobatto grids.

Elements are axis-aligned boxes indexed lexicographically (C order) by their
multi-index.  Every face is stored once, as the boundary between a *left*
element (the face is its upper boundary along ``axis``) and a *right* element
(the face is its lower boundary).  Faces on the boundary of the domain wrap
around periodically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
import itertools

import numpy as np


def lgl_nodes(n, tol=1e-15):
    """Legendre-Gauss-Lobatto nodes and weights on [-1, 1].

    Parameters
    ----------
    n : int
        Number of nodes (``n >= 2``).  The rule integrates polynomials of
        degree ``2n - 3`` exactly.

    Returns
    -------
    x, w : ndarray
        Ascending nodes and the matching weights.
    """
    if n < 2:
        raise ValueError("LGL rule needs at least 2 nodes")
    deg = n - 1
    x = -np.cos(np.pi * np.arange(n) / deg)
    P = np.zeros((n, n))
    for _ in range(200):
        x_old = x.copy()
        P[:, 0] = 1.0
        P[:, 1] = x
        for k in range(2, n):
            P[:, k] = ((2 * k - 1) * x * P[:, k - 1] - (k - 1) * P[:, k - 2]) / k
        x = x_old - (x * P[:, deg] - P[:, deg - 1]) / (n * P[:, deg])
        if np.max(np.abs(x - x_old)) < tol:
            break
    P[:, 0] = 1.0
    P[:, 1] = x
    for k in range(2, n):
        P[:, k] = ((2 * k - 1) * x * P[:, k - 1] - (k - 1) * P[:, k - 2]) / k
    w = 2.0 / (deg * n * P[:, deg] ** 2)
    x[0], x[-1] = -1.0, 1.0
    return x, w


def differentiation_matrix(x):
    """Collocation derivative matrix of the Lagrange interpolant on nodes ``x``."""
    x = np.asarray(x, dtype=float)
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    bary = 1.0 / np.prod(diff, axis=1)
    D = (bary[None, :] / bary[:, None]) / diff
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


@dataclass(frozen=True)
class Partition:
    """Uniform periodic partition of ``prod_j [0, lengths[j])``.

    Attributes
    ----------
    multi_index : (n_elements, dim) int array
    lower : (n_elements, dim) lower corners of the element boxes
    face_elements : (n_faces, 2) int array of (left, right) elements
    face_axis : (n_faces,) axis normal to each face
    face_normal : (n_faces, dim) outward unit normal of the lower-indexed
        element of the face
    element_faces : (n_elements, 2*dim) faces of each element, ordered
        (axis 0 lower, axis 0 upper, axis 1 lower, ...)
    element_face_side : (n_elements, 2*dim) 0 if the element is the left
        element of that face, 1 if it is the right one
    patches : list of int arrays, ``patches[k]`` is omega(k) (k first)
    """

    dim: int
    lengths: tuple
    counts: tuple
    multi_index: np.ndarray = field(repr=False)
    lower: np.ndarray = field(repr=False)
    face_elements: np.ndarray = field(repr=False)
    face_axis: np.ndarray = field(repr=False)
    face_normal: np.ndarray = field(repr=False)
    element_faces: np.ndarray = field(repr=False)
    element_face_side: np.ndarray = field(repr=False)
    patches: list = field(repr=False)

    @property
    def h(self):
        return np.asarray(self.lengths, dtype=float) / np.asarray(self.counts)

    @property
    def n_elements(self):
        return len(self.multi_index)

    @property
    def n_faces(self):
        return len(self.face_elements)

    @property
    def volume(self):
        return float(np.prod(self.h))

    @property
    def domain_volume(self):
        return float(np.prod(self.lengths))

    def face_measure(self, axis):
        h = self.h
        return float(np.prod(np.delete(h, axis))) if self.dim > 1 else 1.0

    def element_index(self, multi):
        return int(np.ravel_multi_index(tuple(np.mod(multi, self.counts)), self.counts))

    def neighbors(self, k):
        return self.patches[k][1:]


def build_partition(dim, lengths, counts):
    """Build a uniform periodic partition.

    ``counts`` must be at least 3 along every axis so that each element has
    distinct face neighbours on both sides.
    """
    if dim not in (1, 2, 3):
        raise ValueError(f"dim must be 1, 2 or 3, got {dim}")
    lengths = tuple(float(v) for v in np.broadcast_to(lengths, (dim,)))
    counts = tuple(int(v) for v in np.broadcast_to(counts, (dim,)))
    if any(v <= 0 for v in lengths):
        raise ValueError("domain lengths must be positive")
    if any(c < 3 for c in counts):
        raise ValueError("need at least 3 elements per dimension for periodic patches")

    h = np.asarray(lengths) / np.asarray(counts)
    multi = np.array(list(itertools.product(*[range(c) for c in counts])), dtype=int)
    multi = multi.reshape(-1, dim)
    lower = multi * h
    n_el = len(multi)

    face_elements, face_axis = [], []
    element_faces = np.zeros((n_el, 2 * dim), dtype=int)
    element_face_side = np.zeros((n_el, 2 * dim), dtype=int)
    for k in range(n_el):
        for axis in range(dim):
            nb = multi[k].copy()
            nb[axis] += 1
            right = int(np.ravel_multi_index(tuple(np.mod(nb, counts)), counts))
            f = len(face_elements)
            face_elements.append((k, right))
            face_axis.append(axis)
            element_faces[k, 2 * axis + 1] = f
            element_face_side[k, 2 * axis + 1] = 0
            element_faces[right, 2 * axis] = f
            element_face_side[right, 2 * axis] = 1
    face_elements = np.array(face_elements, dtype=int)
    face_axis = np.array(face_axis, dtype=int)
    face_normal = np.zeros((len(face_elements), dim))
    for f, (left, right) in enumerate(face_elements):
        face_normal[f, face_axis[f]] = 1.0 if left < right else -1.0

    patches = []
    for k in range(n_el):
        nbs = []
        for f, side in zip(element_faces[k], element_face_side[k]):
            other = face_elements[f, 1 - side]
            if other != k and other not in nbs:
                nbs.append(int(other))
        patches.append(np.array([k] + nbs, dtype=int))

    return Partition(
        dim=dim,
        lengths=lengths,
        counts=counts,
        multi_index=multi,
        lower=lower,
        face_elements=face_elements,
        face_axis=face_axis,
        face_normal=face_normal,
        element_faces=element_faces,
        element_face_side=element_face_side,
        patches=patches,
    )


@dataclass(frozen=True)
class QuadGrid:
    """Tensor LGL grids on every element and on every face.

    Element nodes are the tensor product of ``order`` LGL points per axis,
    flattened in C order.  Because LGL nodes contain the interval end points,
    the nodes of a face are a subset of the element nodes; ``face_nodes[axis][side]``
    indexes them (side 0 = lower boundary, side 1 = upper boundary) in the same
    tangential order for both incident elements.
    """

    partition: Partition
    order: int
    ref_nodes: np.ndarray = field(repr=False)
    ref_weights: np.ndarray = field(repr=False)
    axis_coords: list = field(repr=False)
    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    face_nodes: list = field(repr=False)
    face_weights: np.ndarray = field(repr=False)

    @property
    def dim(self):
        return self.partition.dim

    @property
    def n_nodes(self):
        return self.order ** self.dim

    @property
    def n_face_nodes(self):
        return self.order ** (self.dim - 1)

    @cached_property
    def element_weights(self):
        """Weights of a single element (all elements are congruent)."""
        return self.weights[0]

    def integrate(self, values):
        """Integral over the domain of node values shaped (n_elements, n_nodes)."""
        return float(np.sum(self.weights * values))

    def element_boundary_nodes(self, k):
        """(face index, side, node indices) for every face of element ``k``."""
        part = self.partition
        out = []
        for slot, (f, side) in enumerate(zip(part.element_faces[k], part.element_face_side[k])):
            axis, upper = divmod(slot, 2)
            out.append((int(f), int(side), self.face_nodes[axis][upper]))
        return out


def build_quadrature(partition, order):
    """Tensor LGL quadrature with ``order`` nodes per axis on every element."""
    if order < 2:
        raise ValueError("quadrature order must be at least 2")
    dim = partition.dim
    r, w = lgl_nodes(order)
    h = partition.h

    axis_coords = []
    for j in range(dim):
        starts = np.arange(partition.counts[j]) * h[j]
        axis_coords.append(starts[:, None] + 0.5 * (r[None, :] + 1.0) * h[j])

    ref_points = np.array(list(itertools.product(*[r] * dim))).reshape(-1, dim)
    ref_w = np.ones(order ** dim)
    for j, idx in enumerate(np.array(list(itertools.product(*[range(order)] * dim))).reshape(-1, dim).T):
        ref_w = ref_w * w[idx] * 0.5 * h[j]
    points = partition.lower[:, None, :] + 0.5 * (ref_points[None, :, :] + 1.0) * h
    weights = np.broadcast_to(ref_w, (partition.n_elements, order ** dim)).copy()

    grid_idx = np.arange(order ** dim).reshape((order,) * dim)
    face_nodes = []
    for axis in range(dim):
        lower = np.take(grid_idx, 0, axis=axis).ravel()
        upper = np.take(grid_idx, order - 1, axis=axis).ravel()
        face_nodes.append((lower, upper))

    face_weights = np.zeros((partition.n_faces, order ** (dim - 1)))
    for f in range(partition.n_faces):
        axis = partition.face_axis[f]
        tang = [j for j in range(dim) if j != axis]
        fw = np.ones(order ** (dim - 1))
        if tang:
            multi = np.array(list(itertools.product(*[range(order)] * len(tang)))).reshape(-1, len(tang))
            for col, j in enumerate(tang):
                fw = fw * w[multi[:, col]] * 0.5 * h[j]
        face_weights[f] = fw

    return QuadGrid(
        partition=partition,
        order=order,
        ref_nodes=r,
        ref_weights=w,
        axis_coords=axis_coords,
        points=points,
        weights=weights,
        face_nodes=face_nodes,
        face_weights=face_weights,
    )
