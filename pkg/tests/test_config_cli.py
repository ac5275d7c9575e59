import csv
import json
import os

import numpy as np
import pytest

from eigbound import cli, pipeline
from eigbound.config import PRESETS, ConfigError, load_config, parse_config

SMALL = """\
dim: 1
lengths: [2pi]
counts: [5]
potential:
  centers: [[1.0], [4.0]]
  widths: 0.3
  magnitudes: [-10.0, -8.0]
N: [4, 6]
m: 4
quad_order: 30
reference_wavecount: 127
alb_wavecount: 31
"""


@pytest.fixture()
def small_cfg(tmp_path):
    p = tmp_path / "small.yaml"
    p.write_text(SMALL)
    return str(p)


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


# -- config -----------------------------------------------------------------

@pytest.mark.parametrize("name", PRESETS)
def test_presets_parse(name):
    cfg = load_config(name)
    assert cfg.theta == 1.0 and cfg.m == 11
    assert cfg.lengths[0] == pytest.approx(2 * np.pi)
    spec = cfg.potential_spec()
    assert spec.dim == cfg.dim
    assert len(cfg.digest()) == 64


def test_pi_numbers():
    for text, val in (("2pi", 2 * np.pi), ("pi", np.pi), ("0.5*pi", 0.5 * np.pi), ("3", 3.0)):
        cfg = parse_config(SMALL.replace("[2pi]", f"[{text}]"))
        assert cfg.lengths[0] == pytest.approx(val)


@pytest.mark.parametrize("text, line, fragment", [
    (SMALL + "colour: blue\n", 13, "unknown key"),
    (SMALL + "p_fine: 10\n", 13, "p_fine"),
    (SMALL.replace("alb_wavecount: 31", "alb_wavecount: 30"), 12, "odd"),
    (SMALL.replace("N: [4, 6]", "N: [4, 1]"), 8, "N must"),
])
def test_errors_carry_line_numbers(text, line, fragment):
    with pytest.raises(ConfigError) as exc:
        parse_config(text, source="small.yaml")
    assert f"small.yaml:{line}" in str(exc.value)
    assert fragment in str(exc.value)


def test_missing_key_and_syntax():
    with pytest.raises(ConfigError, match="missing required key 'potential'"):
        parse_config("\n".join(l for l in SMALL.splitlines() if not l.startswith(("potential", "  "))))
    with pytest.raises(ConfigError, match=r"x.yaml:3: YAML syntax"):
        parse_config("dim: 1\nlengths: 1\n  counts: 3\nN: 2\n", source="x.yaml")
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config(SMALL.replace("[2pi]", "[two]"))
    with pytest.raises(ConfigError):
        load_config("no-such-preset")


def test_center_units():
    cfg = load_config("paper-1d")
    spec = cfg.potential_spec()
    assert spec.centers[1, 0] == pytest.approx(0.345 * 2 * np.pi)


def test_threads_env(monkeypatch):
    monkeypatch.delenv("EIGBOUND_THREADS", raising=False)
    assert pipeline.resolve_threads() == 1
    monkeypatch.setenv("EIGBOUND_THREADS", "3")
    assert pipeline.resolve_threads() == 3
    assert pipeline.resolve_threads(2) == 2
    with pytest.raises(ValueError):
        pipeline.resolve_threads(0)


# -- CLI --------------------------------------------------------------------

def test_cli_run_writes_outputs(small_cfg, tmp_path, capsys):
    out = tmp_path / "run"
    assert cli.main(["run", "-c", small_cfg, "--out", str(out), "--diagnostics",
                     "--theorem-bounds", "--save-basis"]) == 0
    for name in ("constants.csv", "estimators.csv", "estimators.json", "report.csv",
                 "report.json", "plot_data.txt", "bounds.csv", "diagnostics.json", "basis.npz"):
        assert (out / name).exists(), name
    rows = read_csv(out / "report.csv")
    assert len(rows) == 4
    assert all(float(r["C_eta"]) >= 1.0 for r in rows)
    meta = json.loads((out / "report.json").read_text())["meta"]
    assert meta["N"] == 4 and "timings" in meta
    assert "upper_theorem" in read_csv(out / "bounds.csv")[0]
    assert "lambda_dg" in capsys.readouterr().out


def test_cli_skip_reference(small_cfg, tmp_path):
    out = tmp_path / "noref"
    assert cli.main(["run", "-c", small_cfg, "--out", str(out), "--skip-reference", "--N", "6"]) == 0
    rows = read_csv(out / "report.csv")
    assert all(r["err_energy"] == "NA" and r["C_eta"] == "NA" for r in rows)
    assert all(float(r["eta"]) > 0 for r in rows)


def test_cli_deterministic(small_cfg, tmp_path):
    texts = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        assert cli.main(["run", "-c", small_cfg, "--out", str(out)]) == 0
        texts.append((out / "report.csv").read_bytes() + (out / "estimators.csv").read_bytes())
    assert texts[0] == texts[1]


def test_cli_sweep(small_cfg, tmp_path):
    out = tmp_path / "sweep"
    assert cli.main(["sweep", "-c", small_cfg, "--out", str(out)]) == 0
    rows = read_csv(out / "summary.csv")
    assert sorted({int(r["N"]) for r in rows}) == [4, 6]
    assert (out / "N6" / "report.csv").exists()
    assert cli.main(["sweep", "-c", small_cfg, "--out", str(out), "--N", "6"]) == 2


def test_cli_constants_and_reference(small_cfg, tmp_path, capsys):
    out = tmp_path / "c"
    assert cli.main(["constants", "-c", small_cfg, "--out", str(out)]) == 0
    rows = read_csv(out / "constants.csv")
    assert len(rows) == 5 and float(rows[0]["gamma"]) > 0
    assert cli.main(["reference", "-c", small_cfg, "--out", str(out)]) == 0
    lam = [float(r["lambda"]) for r in read_csv(out / "reference.csv")]
    assert len(lam) == 4 and lam == sorted(lam)


def test_cli_selftest(capsys):
    assert cli.main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 6 and "FAIL" not in out


def test_cli_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(SMALL + "colour: blue\n")
    assert cli.main(["run", "-c", str(bad)]) == 2
    assert "bad.yaml:13" in capsys.readouterr().err
    assert cli.main(["run", "-c", str(tmp_path / "missing.yaml")]) == 2


def test_cli_violation_exit(small_cfg, tmp_path, monkeypatch):
    real = pipeline.build_report

    def forced(*args, **kw):
        rep = real(*args, **kw)
        rep.violations.append({"i": 1, "flags": ["upper_violation"]})
        return rep

    monkeypatch.setattr(pipeline, "build_report", forced)
    assert cli.main(["run", "-c", small_cfg, "--out", str(tmp_path / "v")]) == 1


def test_cli_basis_file_roundtrip(small_cfg, tmp_path):
    out = tmp_path / "b"
    assert cli.main(["constants", "-c", small_cfg, "--out", str(out), "--save-basis"]) == 0
    cfg_path = tmp_path / "with_basis.yaml"
    cfg_path.write_text(SMALL + f"basis_file: {out / 'basis.npz'}\n")
    assert cli.main(["constants", "-c", str(cfg_path), "--out", str(tmp_path / "b2")]) == 0
    assert (out / "constants.csv").read_text() == (tmp_path / "b2" / "constants.csv").read_text()


def test_cli_thread_count_invariant(small_cfg, tmp_path, monkeypatch):
    texts = []
    for n in ("1", "3"):
        monkeypatch.setenv("EIGBOUND_THREADS", n)
        out = tmp_path / f"t{n}"
        assert cli.main(["run", "-c", small_cfg, "--out", str(out)]) == 0
        texts.append((out / "report.csv").read_bytes() + (out / "constants.csv").read_bytes())
    assert texts[0] == texts[1]
