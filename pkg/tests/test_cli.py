import json
import subprocess
import sys

import numpy as np
import pytest

from tswls.cli import main
from tswls.experiments import read_csv


@pytest.fixture
def files(tmp_path):
    sc = tmp_path / "scene.json"
    sc.write_text(json.dumps({"bs": [10, 12, 12], "ris": [[2, 20, 2], [-12, -16, 58], [-10, -10, 50]], "mu": [3, -4, 30]}))
    zero = tmp_path / "zero.json"
    zero.write_text(json.dumps({"sigma_a": 0, "sigma_t": 0}))
    noisy = tmp_path / "noisy.json"
    noisy.write_text(json.dumps({"sigma_a": 1e-2, "sigma_t": 1e-2}))
    return tmp_path, sc, zero, noisy


def test_estimate_zero_noise(files, capsys):
    _, sc, zero, _ = files
    assert main(["estimate", "--scenario", str(sc), "--noise", str(zero), "--seed", "1"]) == 0
    doc = json.loads(capsys.readouterr().out)
    np.testing.assert_allclose(doc["q_hat"], [3, -4, 30], atol=1e-9)
    for key in ("u_breve", "xi_breve", "Pi", "clamped_components", "iterations"):
        assert key in doc


def test_estimate_noisy_with_bias(files, capsys):
    _, sc, _, noisy = files
    assert main(["estimate", "--scenario", str(sc), "--noise", str(noisy), "--seed", "2", "--bias"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert len(doc["bias"]["bias_q"]) == 3


def test_estimate_parse_errors(files, capsys):
    d, sc, zero, _ = files
    bad = d / "bad.json"
    bad.write_text('{"bs": [1, 2, 3],\n "ris": [,]}')
    assert main(["estimate", "--scenario", str(bad), "--noise", str(zero)]) == 1
    assert "line 2" in capsys.readouterr().err
    assert main(["estimate", "--scenario", str(d / "missing.json"), "--noise", str(zero)]) == 1


def test_estimate_solver_error(files, tmp_path):
    d, _, zero, _ = files
    flat = d / "flat.json"
    flat.write_text(json.dumps({"bs": [10, 12, 12], "ris": [[2, 20, 2], [-12, -16, 58], [-10, -10, 50]], "mu": [10, -4, 30]}))
    assert main(["estimate", "--scenario", str(flat), "--noise", str(zero)]) == 2


def _config(d, **kw):
    cfg = {"schema_version": 1, "axis": "sigma_a", "values": [1e-1, 1e-2], "sigma_t": 1e-2,
           "ris_subsets": [2], "trials": 200, "seed": 3, "algorithms": ["tswls"]}
    cfg.update(kw)
    p = d / "cfg.json"
    p.write_text(json.dumps(cfg))
    return p


def test_sweep_writes_csv(files, capsys):
    d = files[0]
    out = d / "out.csv"
    assert main(["sweep", "--config", str(_config(d, bias_validation=True)), "--out", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == 2 and all(r.theo_bias is not None for r in rows)
    assert "mse" in capsys.readouterr().out


def test_sweep_four_series_over_sigma_t(files):
    d = files[0]
    out = d / "series.csv"
    cfgs = []
    for st in (1e-1, 1e-2, 1e-3, 1e-4):
        assert main(["sweep", "--config", str(_config(d, sigma_t=st, values=[1.0, 1e-1, 1e-2, 1e-3], trials=50)),
                     "--out", str(out), "--quiet"]) == 0
        cfgs.append(read_csv(out))
    assert all(len(c) == 4 for c in cfgs)


def test_sweep_errors(files, monkeypatch):
    d = files[0]
    assert main(["sweep", "--config", str(_config(d, values=[])), "--out", str(d / "x.csv")]) == 1
    assert main(["sweep", "--config", str(d / "nope.json"), "--out", str(d / "x.csv")]) == 1
    assert main(["sweep", "--config", str(_config(d)), "--out", str(d / "no" / "dir" / "x.csv")]) == 3
    monkeypatch.setenv("TSWLS_THREADS", "zero")
    assert main(["sweep", "--config", str(_config(d)), "--out", str(d / "x.csv")]) == 1


def test_threads_env_fallback(files, monkeypatch):
    d = files[0]
    monkeypatch.setenv("TSWLS_THREADS", "2")
    a, b = d / "a.csv", d / "b.csv"
    assert main(["sweep", "--config", str(_config(d, trials=5000)), "--out", str(a), "--quiet"]) == 0
    assert main(["sweep", "--config", str(_config(d, trials=5000)), "--out", str(b), "--quiet", "--threads", "1"]) == 0
    assert a.read_text() == b.read_text()


def test_module_entry_point(files):
    _, sc, zero, _ = files
    res = subprocess.run([sys.executable, "-m", "tswls", "estimate", "--scenario", str(sc), "--noise", str(zero)],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "q_hat" in res.stdout
