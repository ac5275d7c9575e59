"""Subspace alignment, error measurement and effectivity reports."""

from __future__ import annotations

from dataclasses import dataclass, field
import csv
import io
import json
import math

import numpy as np

from . import fields as F
from .dg import energy_norm

CSV_COLUMNS = ["i", "lambda_ref", "lambda_dg", "err_lambda", "err_energy", "eta", "xi",
               "hot_ub", "hot_lb", "C_eta", "C_xi", "Clam_eta", "Clam_xi"]
DEGENERACY_TOL = 1e-8


def degenerate_groups(eigenvalues, rel_tol=DEGENERACY_TOL):
    """Consecutive index groups whose eigenvalues agree to ``rel_tol * |lambda|``."""
    lam = np.asarray(eigenvalues, dtype=float)
    groups = [[0]] if len(lam) else []
    for i in range(1, len(lam)):
        scale = max(abs(lam[i]), abs(lam[i - 1]), 1e-300)
        if abs(lam[i] - lam[i - 1]) < rel_tol * scale:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def alignment_matrix(U_N, U, W, groups=None):
    """Block matrix ``S`` with ``U_N @ S`` the aligned eigenvectors.

    ``S = U_N^T W U`` restricted to the diagonal blocks given by ``groups``
    (all columns in one group when ``groups`` is None).
    """
    U_N = np.asarray(U_N, dtype=float)
    U = np.asarray(U, dtype=float)
    if U_N.shape != U.shape:
        raise ValueError(f"shape mismatch: {U_N.shape} vs {U.shape}")
    W = np.asarray(W, dtype=float)
    if W.shape != (U.shape[0],):
        raise ValueError("weights must match the number of nodes")
    m = U.shape[1]
    groups = [list(range(m))] if groups is None else groups
    S = np.zeros((m, m))
    for g in groups:
        idx = np.ix_(g, g)
        S[idx] = U_N[:, g].T @ (W[:, None] * U[:, g])
    return S


def align(U_N, U, W, groups=None):
    """Aligned eigenvectors ``U_N (U_N^T W U)``, jointly within each group."""
    return np.asarray(U_N, dtype=float) @ alignment_matrix(U_N, U, W, groups)


def align_fields(u_N, u, groups=None):
    """Align lists of GridFunctions; returns the aligned list."""
    grid = u[0].grid
    flat = lambda fs: np.stack([f.values.ravel() for f in fs], axis=1)
    S = alignment_matrix(flat(u_N), flat(u), grid.weights.ravel(), groups)
    return [F.combine(u_N, S[:, j]) for j in range(len(u))]


@dataclass
class PairErrors:
    err_lambda: np.ndarray
    err_energy: np.ndarray
    err_l2: np.ndarray
    aligned: list = field(repr=False)


def measure_errors(u_N, lam_N, reference, gamma, V_shifted, groups=None):
    """Energy-norm and eigenvalue errors after alignment.

    ``V_shifted`` are node values of V - V_m.  ``groups`` defaults to the
    degeneracy groups of the reference eigenvalues.
    """
    lam = np.asarray(reference.eigenvalues, dtype=float)
    groups = degenerate_groups(lam) if groups is None else groups
    aligned = align_fields(u_N, reference.fields, groups)
    err_e, err_l2 = [], []
    for u, ua in zip(reference.fields, aligned):
        e = u - ua
        err_e.append(energy_norm(e, gamma, V_shifted))
        err_l2.append(math.sqrt(max(F.inner(e, e), 0.0)))
    return PairErrors(np.abs(np.asarray(lam_N) - lam), np.array(err_e), np.array(err_l2), aligned)


@dataclass
class EffectivityReport:
    """Per-pair table; ``None`` marks unavailable or undefined entries."""

    rows: list
    meta: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)

    def column(self, name):
        return np.array([np.nan if r[name] is None else r[name] for r in self.rows], dtype=float)

    def to_csv(self, path=None):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow([_cell(r[c]) for c in CSV_COLUMNS])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def to_json(self, path=None):
        doc = {"meta": self.meta, "violations": self.violations,
               "pairs": [{k: r[k] for k in CSV_COLUMNS + ["flags"]} for r in self.rows]}
        text = json.dumps(doc, indent=1, sort_keys=True, default=_jsonable)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def plot_data(self):
        """Whitespace-separated table of i, err_lambda, err_energy, eta, xi, hot_ub, hot_lb."""
        cols = ["i", "err_lambda", "err_energy", "eta", "xi", "hot_ub", "hot_lb"]
        lines = ["# " + " ".join(cols)]
        for r in self.rows:
            lines.append(" ".join("nan" if r[c] is None else _cell(r[c]) for c in cols))
        return "\n".join(lines) + "\n"


def _cell(x):
    if x is None:
        return "NA"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


def _ratio(num, den):
    if num is None or den is None or den == 0.0:
        return None
    r = num / den
    return float(r) if math.isfinite(r) else None


def build_report(lam_N, eta, xi, lam_ref=None, errors=None, hot_ub=None, hot_lb=None, meta=None):
    """Assemble the effectivity table and bound-violation flags.

    Without a reference (``lam_ref`` None) only the estimator columns are
    filled.  A pair with zero error gets the flag ``zero_error`` and no ratios.
    A pair is a violation when C_eta < 1 or C_xi > 1.
    """
    rows, violations = [], []
    m = len(lam_N)
    for i in range(m):
        r = {c: None for c in CSV_COLUMNS}
        r["i"] = i + 1
        r["lambda_dg"] = float(lam_N[i])
        r["eta"] = float(eta[i])
        r["xi"] = float(xi[i])
        flags = []
        if lam_ref is not None:
            r["lambda_ref"] = float(lam_ref[i])
        if errors is not None:
            r["err_lambda"] = float(errors.err_lambda[i])
            r["err_energy"] = float(errors.err_energy[i])
            if r["err_energy"] == 0.0:
                flags.append("zero_error")
            r["C_eta"] = _ratio(r["eta"], r["err_energy"])
            r["C_xi"] = _ratio(r["xi"], r["err_energy"])
            r["Clam_eta"] = _ratio(r["eta"] ** 2, r["err_lambda"])
            r["Clam_xi"] = _ratio(r["xi"] ** 2, r["err_lambda"])
            if r["C_eta"] is not None and r["C_eta"] < 1.0:
                flags.append("upper_violation")
            if r["C_xi"] is not None and r["C_xi"] > 1.0:
                flags.append("lower_violation")
        if hot_ub is not None:
            r["hot_ub"] = float(hot_ub[i])
        if hot_lb is not None:
            r["hot_lb"] = float(hot_lb[i])
        for key in CSV_COLUMNS[1:]:
            if r[key] is not None and not math.isfinite(r[key]):
                r[key] = None
                flags.append(f"nonfinite_{key}")
        r["flags"] = flags
        if any(f.endswith("violation") for f in flags):
            violations.append({"i": i + 1, "flags": flags})
        rows.append(r)
    return EffectivityReport(rows, dict(meta or {}), violations)
