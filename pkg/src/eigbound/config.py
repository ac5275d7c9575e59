"""Run configuration: YAML files, builtin presets and validation."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict, replace
from importlib import resources
import hashlib
import json
import math
import os
import re

import numpy as np
import yaml

from .spectral import PotentialSpec

PRESETS = ("paper-1d", "paper-2d")
_PI = re.compile(r"^\s*([0-9.eE+-]*)\s*\*?\s*pi\s*$")


class ConfigError(ValueError):
    """Invalid configuration; the message carries ``source:line`` when known."""


@dataclass
class RunConfig:
    dim: int
    lengths: list
    counts: list
    potential: dict
    N: object
    quad_order: int
    reference_wavecount: int
    alb_wavecount: object
    m: int = 11
    theta: float = 1.0
    p_fine: int | None = None
    drop_tol: float = 1e-8
    gamma: float | None = None
    bubble_modes: int | None = None
    degeneracy_tol: float = 1e-8
    basis_file: str | None = None
    out: str | None = None
    seed: int = 0
    diagnostics: bool = False
    theorem_bounds: bool = False
    skip_reference: bool = False
    source: str = field(default="<config>", compare=False)

    @property
    def N_list(self):
        return list(self.N) if isinstance(self.N, (list, tuple)) else [int(self.N)]

    def with_N(self, n):
        return replace(self, N=int(n))

    def potential_spec(self):
        p = self.potential
        centers = np.asarray(p["centers"], dtype=float).reshape(-1, self.dim)
        if p.get("center_units", "absolute") == "fraction":
            centers = centers * np.asarray(self.lengths)
        return PotentialSpec(centers, p["widths"], p["magnitudes"], tuple(self.lengths),
                             int(p.get("image_radius", 2)), float(p.get("offset", 0.0)))

    def to_dict(self):
        d = asdict(self)
        d.pop("source")
        return d

    def digest(self):
        """SHA-256 of the canonical JSON of the physical and numerical settings."""
        d = self.to_dict()
        for key in ("out", "diagnostics", "theorem_bounds", "skip_reference"):
            d.pop(key)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def _number(x, what):
    if isinstance(x, str):
        m = _PI.match(x)
        if not m:
            raise ValueError(f"{what}: cannot read {x!r} as a number")
        coef = m.group(1)
        return (float(coef) if coef else 1.0) * math.pi
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ValueError(f"{what}: expected a number, got {x!r}")
    return float(x)


def _line_of(node, key):
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            if k.value == key:
                return k.start_mark.line + 1
    return None


def _fail(msg, source, node=None, key=None):
    line = _line_of(node, key) if key is not None else None
    where = f"{source}:{line}" if line else source
    raise ConfigError(f"{where}: {msg}")


def parse_config(text, source="<config>"):
    """Parse and validate YAML ``text`` into a :class:`RunConfig`."""
    try:
        node = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark else source
        raise ConfigError(f"{where}: YAML syntax error: {getattr(exc, 'problem', exc)}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be a mapping")

    known = {f for f in RunConfig.__dataclass_fields__ if f != "source"}
    for key in raw:
        if key not in known:
            _fail(f"unknown key {key!r}", source, node, key)
    for key in ("dim", "lengths", "counts", "potential", "N", "quad_order",
                "reference_wavecount", "alb_wavecount"):
        if key not in raw:
            raise ConfigError(f"{source}: missing required key {key!r}")

    def check(key, fn):
        try:
            return fn(raw[key])
        except (TypeError, ValueError) as exc:
            _fail(f"{key}: {exc}", source, node, key)

    dim = check("dim", int)
    if dim not in (1, 2, 3):
        _fail("dim must be 1, 2 or 3", source, node, "dim")

    def per_dim(v, conv):
        vals = [conv(x) for x in (v if isinstance(v, list) else [v] * dim)]
        if len(vals) != dim:
            raise ValueError(f"need {dim} entries")
        return vals

    lengths = check("lengths", lambda v: per_dim(v, lambda x: _number(x, "lengths")))
    counts = check("counts", lambda v: per_dim(v, int))
    if any(L <= 0 for L in lengths):
        _fail("lengths must be positive", source, node, "lengths")
    if any(c < 3 for c in counts):
        _fail("counts must be at least 3 per dimension", source, node, "counts")

    pot = raw["potential"]
    if not isinstance(pot, dict) or not {"centers", "widths", "magnitudes"} <= set(pot):
        _fail("potential needs centers, widths and magnitudes", source, node, "potential")
    if pot.get("center_units", "absolute") not in ("absolute", "fraction"):
        _fail("potential.center_units must be 'absolute' or 'fraction'", source, node, "potential")

    N = raw["N"]
    N_vals = N if isinstance(N, list) else [N]
    if not N_vals or any(isinstance(n, bool) or not isinstance(n, int) or n < 2 for n in N_vals):
        _fail("N must be an integer >= 2 or a list of them", source, node, "N")

    kw = {k: raw[k] for k in raw if k not in ("lengths", "counts", "dim")}
    kw.update(dim=dim, lengths=lengths, counts=counts)
    cfg = RunConfig(source=source, **kw)

    positive_int = ["m", "quad_order", "reference_wavecount"]
    for key in positive_int:
        v = getattr(cfg, key)
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            _fail(f"{key} must be a positive integer", source, node, key)
    if cfg.reference_wavecount % 2 == 0:
        _fail("reference_wavecount must be odd", source, node, "reference_wavecount")
    alb = cfg.alb_wavecount if isinstance(cfg.alb_wavecount, list) else [cfg.alb_wavecount]
    if any(not isinstance(n, int) or n < 1 or n % 2 == 0 for n in alb):
        _fail("alb_wavecount must be odd positive integer(s)", source, node, "alb_wavecount")
    if cfg.quad_order < 2:
        _fail("quad_order must be at least 2", source, node, "quad_order")
    if cfg.p_fine is not None and cfg.p_fine != cfg.quad_order - 1:
        _fail("p_fine must equal quad_order - 1 (the fine space lives on the element grid)",
              source, node, "p_fine")
    if not cfg.drop_tol > 0:
        _fail("drop_tol must be positive", source, node, "drop_tol")
    if cfg.gamma is not None and not cfg.gamma > 0:
        _fail("gamma must be positive", source, node, "gamma")
    if cfg.m > cfg.reference_wavecount ** dim:
        _fail("m exceeds the reference basis size", source, node, "m")
    try:
        cfg.potential_spec()
    except (ValueError, TypeError) as exc:
        _fail(f"potential: {exc}", source, node, "potential")
    return cfg


def load_config(name_or_path):
    """Load a config from a file path or a builtin preset name."""
    if name_or_path in PRESETS:
        text = resources.files("eigbound.presets").joinpath(f"{name_or_path}.yaml").read_text()
        return parse_config(text, source=f"preset:{name_or_path}")
    if not os.path.exists(name_or_path):
        raise ConfigError(f"{name_or_path}: no such file or preset (presets: {', '.join(PRESETS)})")
    with open(name_or_path) as fh:
        return parse_config(fh.read(), source=name_or_path)
