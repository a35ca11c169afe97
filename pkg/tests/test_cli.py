from __future__ import annotations

import io
import json
import re
import subprocess
import sys

import pytest

from surrotune.cli import main
from surrotune.designspace import DEFAULT_LATTICE, Config
from surrotune.io import load_report
from surrotune.optimizer import ObjectiveSpec, objective


def run(argv, capsys, stdin: str | None = None, monkeypatch=None):
    if stdin is not None:
        monkeypatch.setattr(sys, "stdin", io.StringIO(stdin))
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def noiseless(tmp_path, capsys):
    path = tmp_path / "s0.csv"
    assert run(["synth", "--sigma", "0", "--out", path], capsys)[0] == 0
    return path


def test_synth_to_stdout(capsys):
    code, out, _ = run(["synth", "--seed", "2"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "b,h,miou,latency_ms,power_w" and len(lines) == 17


def test_synth_repeats(capsys):
    code, out, _ = run(["synth", "--repeats", "3"], capsys)
    assert code == 0 and len(out.splitlines()) == 1 + 48


def test_synth_pipe_fit_noiseless(capsys, monkeypatch):
    _, samples, _ = run(["synth", "--sigma", "0"], capsys)
    code, out, _ = run(["fit", "-"], capsys, stdin=samples, monkeypatch=monkeypatch)
    assert code == 0
    table = {line.split()[0]: line.split()[1:] for line in out.splitlines()[1:]}
    assert table["latency_ms"][0] == "1.000" and table["power_w"][0] == "1.000"


def test_fit_writes_partial_report(noiseless, tmp_path, capsys):
    out = tmp_path / "r.json"
    assert run(["fit", noiseless, "--out", out], capsys)[0] == 0
    report = load_report(out)
    assert report.optimization is None
    assert report.provenance["n_configs"] == 16 and len(report.provenance["input_sha256"]) == 64


def test_optimize_noiseless(noiseless, tmp_path, capsys):
    out = tmp_path / "o.json"
    code, text, _ = run(["optimize", noiseless, "--weights", "1,1,1", "--out", out], capsys)
    assert code == 0 and "snapped config" in text
    report = load_report(out)
    res = report.optimization
    assert DEFAULT_LATTICE.contains(res.snapped)
    spec = ObjectiveSpec(report.bounds, *report.weights, box=report.box)
    sampled = [Config(b, h) for b, h in report.provenance["sampled_configs"]]
    assert all(res.snapped_objective <= objective(c.as_point(), report.models, spec) for c in sampled)


def test_optimize_from_report_matches_samples(noiseless, tmp_path, capsys):
    rep = tmp_path / "r.json"
    run(["fit", noiseless, "--out", rep], capsys)
    _, from_samples, _ = run(["optimize", noiseless], capsys)
    _, from_report, _ = run(["optimize", rep], capsys)
    assert from_samples == from_report


def test_optimize_flags(noiseless, capsys):
    code, out, _ = run(
        ["optimize", noiseless, "--weights", "0,0,1", "--bounds", "box", "--lattice", "4,16,64,2,4,32"], capsys
    )
    assert code == 0
    m = re.search(r"snapped config:\s+b=(\d+) h=(\d+)", out)
    assert int(m.group(1)) == 64  # mIoU alone pushes b to its upper edge


def test_optimize_explicit_bounds(noiseless, capsys):
    code, _, _ = run(["optimize", noiseless, "--bounds", "80,180,5,7.5,40,52"], capsys)
    assert code == 0


def test_predict_baseline_energy(noiseless, tmp_path, capsys):
    rep = tmp_path / "r.json"
    run(["fit", noiseless, "--out", rep], capsys)
    code, out, _ = run(["predict", rep, "64", "32"], capsys)
    assert code == 0
    values = dict(line.split() for line in out.splitlines())
    assert float(values["energy_mj"]) == pytest.approx(1287.92, rel=0.005)


def test_contour(noiseless, tmp_path, capsys, monkeypatch):
    rep = tmp_path / "r.json"
    run(["fit", noiseless, "--out", rep], capsys)
    prefix = tmp_path / "grid"
    code, _, _ = run(["contour", "-", "--resolution", "5,4", "--out", prefix], capsys, rep.read_text(), monkeypatch)
    assert code == 0
    for name in ("miou", "latency", "power"):
        assert len((tmp_path / f"grid_{name}.csv").read_text().splitlines()) == 21


def test_validate(noiseless, capsys):
    code, out, _ = run(["validate", noiseless], capsys)
    assert code == 0
    assert out.splitlines()[0].split() == ["surrogate", "R2", "RMSE", "PRESS", "Q2"]


def test_run_config_file(noiseless, tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"weights": [1, 0, 0], "label": "demo"}))
    out = tmp_path / "o.json"
    assert run(["optimize", noiseless, "--config", cfg, "--out", out], capsys)[0] == 0
    report = load_report(out)
    assert report.weights == (1.0, 0.0, 0.0) and report.provenance["label"] == "demo"
    assert report.optimization.snapped == Config(16, 4)


def test_identical_invocations_identical_bytes(tmp_path, capsys):
    samples = tmp_path / "s.csv"
    run(["synth", "--seed", "5", "--out", samples], capsys)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run(["optimize", samples, "--out", a], capsys)
    run(["optimize", samples, "--out", b], capsys)
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize(
    "argv,category",
    [
        (["fit", "/nonexistent/samples.csv"], "io"),
        (["optimize", "{samples}", "--weights", "0,0,0"], "domain"),
        (["optimize", "{samples}", "--weights", "1,1"], "format"),
        (["predict", "{report}", "80", "8"], "domain"),
        (["synth", "--sigma", "-1"], "domain"),
    ],
)
def test_errors_are_single_line(argv, category, noiseless, tmp_path, capsys):
    rep = tmp_path / "r.json"
    run(["fit", noiseless, "--out", rep], capsys)
    argv = [a.format(samples=noiseless, report=rep) for a in argv]
    code, _, err = run(argv, capsys)
    assert code != 0
    assert len(err.strip().splitlines()) == 1
    assert err.startswith(f"error[{category}]: ")


def test_bad_sample_file(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("b,h,miou\n16,4,40\n")
    code, _, err = run(["fit", path], capsys)
    assert code == 1 and err.startswith("error[format]:") and "latency_ms" in err


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "surrotune", "synth", "--sigma", "0"], capture_output=True, text=True, check=True
    )
    assert proc.stdout.startswith("b,h,miou")
