from __future__ import annotations

import csv
import json
import subprocess
import sys

import pytest

from varlex import __version__
from varlex.cli import dumps, main

NORM = """\
seed = 3

[domain]
lo = -1.0
hi = 1.0
resolution = 256

[exponent]
kind = "piecewise"
breaks = [0.0]
values = [2.0, 3.0]

[[functions]]
kind = "constant"
value = 1.0

[norm]
expect = 1.324717957244746
rel_tol = 1e-6
"""

STRONG = """\
seed = 1

[domain]
lo = -1.0
hi = 2.0
resolution = 384

[exponent]
kind = "constant"
value = {p}

[kernel]
matrices = [[[1.0]]]
alpha = 0.5

[tests]
size = 4
support_lo = 0.0
support_hi = 1.0
"""


def run(tmp_path, cmd, text, *extra):
    cfg = tmp_path / "c.toml"
    cfg.write_text(text)
    out = tmp_path / "out"
    code = main([cmd, "--config", str(cfg), "--out", str(out), *extra])
    return code, out


def test_norm_pass_and_report_fields(tmp_path):
    code, out = run(tmp_path, "norm", NORM)
    assert code == 0
    r = json.loads((out / "norm.json").read_text())
    assert r["pass"] is True and r["version"] == __version__
    assert r["resolution"] == [256] and r["seed"] == 3
    assert len(r["configHash"]) == 16 and r["skippedMass"] == {"max": 0.0}
    rows = list(csv.reader(open(out / "norm_norms.csv")))
    assert rows[0] == ["index", "kind", "norm", "modularAtNorm", "relativeError"]


def test_failed_check_exits_2(tmp_path):
    code, out = run(tmp_path, "norm", NORM.replace("1.324717957244746", "1.4"))
    assert code == 2
    assert json.loads((out / "norm.json").read_text())["pass"] is False


def test_verify_strong_identity_riesz(tmp_path):
    code, out = run(tmp_path, "verify-strong", STRONG.format(p=4 / 3))
    assert code == 0
    r = json.loads((out / "verify-strong.json").read_text())
    assert r["result"]["stableUnderRefinement"] is True
    assert r["result"]["maxRatio"] > 0 and "skippedMassMax" in r["result"]


def test_sobolev_undefined_exits_1(tmp_path, capsys):
    code, _ = run(tmp_path, "verify-strong", STRONG.format(p=2.5))
    assert code == 1
    err = capsys.readouterr().err
    assert "Sobolev exponent undefined" in err
    assert "c.toml:" in err and "[exponent]" in err


def test_invalid_config_is_line_anchored(tmp_path, capsys):
    code, _ = run(tmp_path, "norm", NORM.replace('kind = "constant"', 'kind = "sawtooth"'))
    assert code == 1
    line = NORM.splitlines().index('kind = "constant"') + 1
    assert f"c.toml:{line}:" in capsys.readouterr().err


def test_seed_and_resolution_overrides(tmp_path):
    code, out = run(tmp_path, "norm", NORM, "--seed", "11", "--resolution", "128")
    r = json.loads((out / "norm.json").read_text())
    assert code == 0 and r["seed"] == 11 and r["resolution"] == [128]


def test_threads_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("VARLEX_THREADS", "zero")
    code, _ = run(tmp_path, "norm", NORM)
    assert code == 1
    monkeypatch.setenv("VARLEX_THREADS", "3")
    code, _ = run(tmp_path, "norm", NORM)
    assert code == 0


def test_reports_identical_across_thread_counts(tmp_path):
    text = STRONG.format(p=1.5)
    cfg = tmp_path / "c.toml"
    cfg.write_text(text)
    blobs = []
    for t in ("1", "8"):
        out = tmp_path / f"o{t}"
        assert main(["verify-strong", "--config", str(cfg), "--out", str(out), "--threads", t]) == 0
        blobs.append(((out / "verify-strong.json").read_bytes(), (out / "verify-strong_ratios.csv").read_bytes()))
    assert blobs[0] == blobs[1]


def test_report_merges(tmp_path):
    run(tmp_path, "norm", NORM)
    out = tmp_path / "out"
    assert main(["report", "--out", str(out)]) == 0
    rows = list(csv.reader(open(out / "summary.csv")))
    assert rows[0] == [
        "file", "command", "configHash", "seed", "resolution", "pass", "metric", "value", "skippedMassMax", "version",
    ]
    assert rows[1][1] == "norm" and rows[1][5] == "true"


def test_report_without_inputs_errors(tmp_path):
    assert main(["report", "--out", str(tmp_path / "empty")]) == 1


def test_dumps_non_finite():
    s = dumps({"a": float("inf"), "b": [float("nan"), 1.5], "c": -float("inf")})
    assert json.loads(s) == {"a": "inf", "b": ["nan", 1.5], "c": "-inf"}


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "varlex", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and __version__ in r.stdout


def test_unknown_command_exits_nonzero():
    with pytest.raises(SystemExit) as e:
        main(["bogus"])
    assert e.value.code != 0
