"""Planewave solver for -Laplace + V on periodic boxes.

The operator is discretized by Fourier collocation on an odd, symmetric set of
frequencies: with ``n`` grid points per axis the unknowns are the values of a
trigonometric polynomial of degree ``(n-1)/2`` at the uniform grid, the
Laplacian acts diagonally in frequency space and ``V`` acts pointwise.  For odd
``n`` this matrix is real symmetric, so eigenfunctions come out real.  The
resulting eigenvectors are kept as Fourier coefficients, which makes
interpolation and exact differentiation at arbitrary points straightforward.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import itertools

import numpy as np
import scipy.linalg


@dataclass(frozen=True)
class PotentialSpec:
    """Sum of periodized Gaussian bumps.

    ``V(x) = offset + sum_b sum_images magnitude_b * exp(-|x - c_b - image|^2 / (2 width_b^2))``
    where images run over ``lengths * z`` for integer vectors ``z`` with
    ``max|z| <= image_radius``.
    """

    centers: np.ndarray
    widths: np.ndarray
    magnitudes: np.ndarray
    lengths: tuple
    image_radius: int = 2
    offset: float = 0.0

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        if centers.shape[1] != len(self.lengths):
            centers = centers.reshape(-1, len(self.lengths))
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "widths", np.broadcast_to(
            np.asarray(self.widths, dtype=float), (len(centers),)).copy())
        object.__setattr__(self, "magnitudes", np.broadcast_to(
            np.asarray(self.magnitudes, dtype=float), (len(centers),)).copy())
        object.__setattr__(self, "lengths", tuple(float(v) for v in self.lengths))
        if np.any(self.widths <= 0):
            raise ValueError("Gaussian widths must be positive")

    @property
    def dim(self):
        return len(self.lengths)

    @classmethod
    def zero(cls, lengths):
        d = len(lengths)
        return cls(np.zeros((1, d)), [1.0], [0.0], tuple(lengths))

    def to_dict(self):
        return {
            "centers": self.centers.tolist(),
            "widths": self.widths.tolist(),
            "magnitudes": self.magnitudes.tolist(),
            "lengths": list(self.lengths),
            "image_radius": self.image_radius,
            "offset": self.offset,
        }


def sample_potential(spec, points, gradient=False):
    """Evaluate the potential (and optionally its gradient) at ``points`` (..., dim)."""
    pts = np.asarray(points, dtype=float)
    d = spec.dim
    if pts.shape[-1] != d:
        raise ValueError(f"points must have trailing dimension {d}")
    L = np.asarray(spec.lengths)
    images = np.array(list(itertools.product(range(-spec.image_radius, spec.image_radius + 1), repeat=d)))
    values = np.full(pts.shape[:-1], float(spec.offset))
    grads = np.zeros(pts.shape) if gradient else None
    for c, w, mag in zip(spec.centers, spec.widths, spec.magnitudes):
        if mag == 0.0:
            continue
        for z in images:
            diff = pts - c - z * L
            g = mag * np.exp(-np.sum(diff ** 2, axis=-1) / (2.0 * w * w))
            values += g
            if gradient:
                grads -= diff * (g / (w * w))[..., None]
    return (values, grads) if gradient else values


def _frequencies(n, length):
    if n % 2 == 0:
        raise ValueError("wavecount must be odd")
    return 2.0 * np.pi / length * np.fft.fftfreq(n, d=1.0 / n)


def _laplacian_1d(n, length):
    """Real symmetric circulant matrix of -d^2/dx^2 on n uniform points."""
    k2 = _frequencies(n, length) ** 2
    col = np.real(np.fft.ifft(k2))
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return col[idx]


@dataclass(frozen=True)
class PlanewaveSolution:
    """Lowest eigenpairs of -Laplace + V on ``origin + prod [0, lengths)``.

    ``coeffs`` has shape ``(n_1, ..., n_d, m)`` in numpy FFT ordering, with
    ``u(x) = sum_k coeffs[k] exp(i k.(x - origin))`` and unit L2 norm.
    """

    eigenvalues: np.ndarray
    coeffs: np.ndarray = field(repr=False)
    lengths: tuple
    origin: np.ndarray
    wavecount: tuple

    @property
    def m(self):
        return len(self.eigenvalues)

    def wavenumbers(self):
        return [_frequencies(n, L) for n, L in zip(self.wavecount, self.lengths)]


def solve_planewave(spec, lengths, wavecount, m, origin=None):
    """Lowest ``m`` eigenpairs of -Laplace + V on a periodic box.

    Parameters
    ----------
    spec : PotentialSpec
        Potential; sampled at the collocation points (it is periodic on the
        domain it was defined on, not necessarily on this box).
    lengths : sequence of float
        Box side lengths.
    wavecount : int or sequence of int
        Odd number of planewaves per axis.
    m : int
        Number of eigenpairs.
    origin : sequence of float, optional
        Lower corner of the box (default 0).
    """
    d = len(lengths)
    lengths = tuple(float(v) for v in lengths)
    wavecount = tuple(int(v) for v in np.broadcast_to(wavecount, (d,)))
    origin = np.zeros(d) if origin is None else np.asarray(origin, dtype=float)
    size = int(np.prod(wavecount))
    if m < 1 or m > size:
        raise ValueError(f"m={m} outside [1, {size}]")

    axes = [origin[j] + lengths[j] * np.arange(wavecount[j]) / wavecount[j] for j in range(d)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    V = sample_potential(spec, mesh).ravel()

    H = np.zeros((size, size))
    for j in range(d):
        op = _laplacian_1d(wavecount[j], lengths[j])
        left = np.eye(int(np.prod(wavecount[:j])))
        right = np.eye(int(np.prod(wavecount[j + 1:])))
        H += np.kron(np.kron(left, op), right)
    # centre the diagonal so that a constant shift of V leaves H unchanged
    v_mean = float(np.mean(V))
    H[np.diag_indices(size)] += V - v_mean

    try:
        evals, evecs = scipy.linalg.eigh(H, subset_by_index=[0, m - 1], driver="evr")
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"planewave eigensolve failed: {exc}") from exc
    evals = evals + v_mean

    # unit L2 norm on the box: sum |u_j|^2 * cell = 1
    cell = float(np.prod(np.asarray(lengths) / np.asarray(wavecount)))
    grid_vals = evecs.reshape(wavecount + (m,)) / np.sqrt(cell)
    coeffs = np.fft.fftn(grid_vals, axes=tuple(range(d))) / size
    return PlanewaveSolution(evals, coeffs, lengths, origin, wavecount)


def _eval_matrices(k, x, origin, max_order):
    phase = np.exp(1j * np.outer(np.asarray(x) - origin, k))
    return [phase * (1j * k[None, :]) ** p for p in range(max_order + 1)]


def evaluate_tensor(sol, axis_points, third=False):
    """Evaluate every eigenfunction on the tensor grid ``prod_j axis_points[j]``.

    Returns a dict with ``value`` of shape (n_1, ..., n_d, m), ``grad``
    (..., d, m), ``lap`` (..., m) and, if ``third``, ``grad_lap`` (..., d, m).
    Derivatives are exact derivatives of the trigonometric interpolant.
    """
    d = len(axis_points)
    ks = sol.wavenumbers()
    order = 3 if third else 2
    mats = [_eval_matrices(ks[j], axis_points[j], sol.origin[j], order) for j in range(d)]
    letters = "abc"[:d]
    out_letters = "xyz"[:d]
    spec = ",".join(f"{o}{a}" for o, a in zip(out_letters, letters))
    spec = f"{spec},{letters}m->{out_letters}m"

    def apply(orders):
        ops = [mats[j][orders[j]] for j in range(d)]
        return np.real(np.einsum(spec, *ops, sol.coeffs, optimize=True))

    zero = (0,) * d
    value = apply(zero)
    grads, laps_parts, grad_laps = [], [], []
    for j in range(d):
        o = list(zero)
        o[j] = 1
        grads.append(apply(tuple(o)))
        o[j] = 2
        laps_parts.append(apply(tuple(o)))
    lap = sum(laps_parts)
    result = {"value": value, "grad": np.stack(grads, axis=-2), "lap": lap}
    if third:
        for j in range(d):
            total = 0.0
            for i in range(d):
                o = [0] * d
                o[i] += 2
                o[j] += 1
                total = total + apply(tuple(o))
            grad_laps.append(total)
        result["grad_lap"] = np.stack(grad_laps, axis=-2)
    return result


def fourier_interpolate(sol, points, derivatives=False):
    """Evaluate the eigenfunctions at scattered ``points`` (n, d).

    Returns values (n, m), or (values, grads (n, d, m), laps (n, m)) when
    ``derivatives`` is set.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    d = pts.shape[1]
    ks = np.meshgrid(*sol.wavenumbers(), indexing="ij")
    kvec = np.stack([k.ravel() for k in ks], axis=-1)
    C = sol.coeffs.reshape(-1, sol.m)
    phase = np.exp(1j * (pts - sol.origin) @ kvec.T)
    values = np.real(phase @ C)
    if not derivatives:
        return values
    grads = np.stack([np.real((phase * (1j * kvec[:, j])) @ C) for j in range(d)], axis=1)
    laps = np.real((phase * -(kvec ** 2).sum(axis=1)) @ C)
    return values, grads, laps


@dataclass(frozen=True)
class ReferenceSolution:
    """Reference eigenpairs sampled on the element grids."""

    eigenvalues: np.ndarray
    fields: list = field(repr=False)
    planewave: PlanewaveSolution = field(repr=False)

    @property
    def m(self):
        return len(self.eigenvalues)


def sample_on_grid(sol, grid, third=False):
    """Sample every eigenfunction of ``sol`` on all element grids.

    Returns arrays value (n_el, n_nodes, m), grad (n_el, n_nodes, d, m),
    lap (n_el, n_nodes, m) and optionally grad_lap.
    """
    part = grid.partition
    d = part.dim
    axes = [grid.axis_coords[j].ravel() for j in range(d)]
    full = evaluate_tensor(sol, axes, third=third)
    q = grid.order
    out = {}
    for key, arr in full.items():
        tail = arr.shape[d:]
        # (c_0, q, c_1, q, ...) -> (c_0, c_1, ..., q, q, ...)
        shape = []
        for j in range(d):
            shape += [part.counts[j], q]
        arr = arr.reshape(tuple(shape) + tail)
        perm = [2 * j for j in range(d)] + [2 * j + 1 for j in range(d)]
        perm += list(range(2 * d, arr.ndim))
        arr = arr.transpose(perm).reshape((part.n_elements, q ** d) + tail)
        out[key] = arr
    return out


def reference_solution(spec, grid, wavecount, m):
    """Global planewave eigenpairs sampled as :class:`GridFunction` objects."""
    from .fields import GridFunction

    sol = solve_planewave(spec, grid.partition.lengths, wavecount, m)
    s = sample_on_grid(sol, grid)
    fields = []
    for i in range(m):
        f = GridFunction.from_elements(grid, s["value"][..., i], s["grad"][..., i], s["lap"][..., i])
        nrm = np.sqrt(grid.integrate(f.values ** 2))
        fields.append(f * (1.0 / nrm))
    return ReferenceSolution(sol.eigenvalues, fields, sol)
