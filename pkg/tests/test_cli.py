import contextlib
import csv
import io
import json
import shutil
from pathlib import Path

import pytest

from odi_solve.cli import run, run_id

from conftest import config_path


def call(argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = run([str(a) for a in argv])
    return code, out.getvalue().strip(), err.getvalue()


@pytest.fixture
def cfg1(tmp_path):
    dst = tmp_path / "example1.json"
    shutil.copy(config_path(1), dst)
    return dst


def small(cfg, tmp_path, n=32):
    return ["--config", cfg, "--n", n, "--out", tmp_path / "out"]


def test_check_and_window(cfg1, tmp_path):
    code, out, _ = call(["check", *small(cfg1, tmp_path)])
    assert code == 0
    assert json.loads((Path(out) / "check.json").read_text())["passed"] is True
    code, out, _ = call(["window", *small(cfg1, tmp_path)])
    assert code == 0
    data = json.loads((Path(out) / "window.json").read_text())
    assert data["lambda_window"] == [8.0, 15.0]
    assert data["test_function"]["phi_bar"] == pytest.approx(4 / 3)


def test_solve_outputs(cfg1, tmp_path):
    code, out, err = call(["solve", *small(cfg1, tmp_path), "--require-three"])
    assert code == 0, err
    d = Path(out)
    rows = list(csv.DictReader(open(d / "summary.csv")))
    assert len(rows) >= 3 and all(r["verdict"] == "pass" for r in rows)
    for k in range(1, len(rows) + 1):
        for name in (f"report-{k}.json", f"profile-{k}.csv", f"certificate-{k}.json", f"multipliers-{k}.csv"):
            assert (d / name).exists()
    assert next(csv.reader(open(d / "profile-1.csv"))) == ["x", "u", "du_left"]


def test_certify_mode_reads_solve(cfg1, tmp_path):
    assert call(["solve", *small(cfg1, tmp_path)])[0] == 0
    code, out, err = call(["certify", *small(cfg1, tmp_path)])
    assert code == 0, err
    rows = list(csv.DictReader(open(Path(out) / "summary.csv")))
    assert rows and all(r["verdict"] == "pass" for r in rows)


def test_sweep(cfg1, tmp_path):
    cfg = json.loads(cfg1.read_text())
    cfg["lambda"] = {"lo": 9, "hi": 12, "count": 2}
    cfg1.write_text(json.dumps(cfg, indent=2))
    code, out, err = call(["sweep", *small(cfg1, tmp_path), "--require-three"])
    assert code == 0, err
    rows = list(csv.DictReader(open(Path(out) / "summary.csv")))
    assert [float(r["lambda"]) for r in rows] == [9.0, 12.0]
    assert all(int(r["n_certified"]) >= 3 for r in rows)
    assert (Path(out) / "lambda-000").is_dir()


def test_bad_config_anchored_to_line(cfg1, tmp_path):
    cfg = json.loads(cfg1.read_text())
    cfg["problem"]["c"] = 2
    cfg1.write_text(json.dumps(cfg, indent=2))
    code, _, err = call(["check", *small(cfg1, tmp_path)])
    assert code == 2
    line = next(i for i, t in enumerate(cfg1.read_text().splitlines(), 1) if '"c"' in t)
    assert f"{cfg1}:{line}:" in err and "0 < c < d" in err


def test_malformed_json(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text('{"name": "x",\n  "problem": }')
    code, _, err = call(["check", "--config", p, "--out", tmp_path])
    assert code == 2 and f"{p}:2:" in err


@pytest.mark.parametrize("extra", [["--n", "0"], ["--lambda", "-1"], ["--lambda", "abc"]])
def test_bad_overrides(cfg1, tmp_path, extra):
    code, _, _ = call(["solve", "--config", cfg1, "--out", tmp_path, *extra])
    assert code == 2


def test_inside_window(cfg1, tmp_path):
    code, _, err = call(["solve", *small(cfg1, tmp_path), "--lambda", "20", "--inside-window"])
    assert code == 2 and "outside the multiplicity window" in err


def test_failed_hypotheses_exit_1(cfg1, tmp_path):
    cfg = json.loads(cfg1.read_text())
    cfg["problem"]["c"] = "3/16"
    cfg1.write_text(json.dumps(cfg, indent=2))
    assert call(["check", *small(cfg1, tmp_path)])[0] == 1
    code, _, err = call(["window", *small(cfg1, tmp_path)])
    assert code == 1 and "window inequality" in err


def test_run_id_ignores_output_section():
    cfg = json.loads(config_path(1).read_text())
    a = run_id(cfg, "solve")
    cfg["output"]["dir"] = "elsewhere"
    assert run_id(cfg, "solve") == a
    cfg["lambda"] = 11
    assert run_id(cfg, "solve") != a
    assert run_id(cfg, "check") != run_id(cfg, "solve")


def test_deterministic_outputs(cfg1, tmp_path):
    outs = []
    for sub in ("a", "b"):
        code, out, _ = call(["solve", "--config", cfg1, "--n", 32, "--out", tmp_path / sub])
        assert code == 0
        outs.append(Path(out))
    names = sorted(p.name for p in outs[0].iterdir())
    assert names == sorted(p.name for p in outs[1].iterdir())
    for n in names:
        assert (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes(), n


def test_sweep_independent_of_thread_count(cfg1, tmp_path, monkeypatch):
    cfg = json.loads(cfg1.read_text())
    cfg["lambda"] = {"lo": 9, "hi": 14, "count": 3}
    cfg1.write_text(json.dumps(cfg, indent=2))
    texts = []
    for threads in ("1", "3"):
        monkeypatch.setenv("ODI_SOLVE_THREADS", threads)
        code, out, _ = call(["sweep", "--config", cfg1, "--n", 16, "--out", tmp_path / threads])
        assert code == 0
        texts.append((Path(out) / "summary.csv").read_text())
    assert texts[0] == texts[1]


def test_sweep_spec_rejected_in_solve_mode(cfg1, tmp_path):
    cfg = json.loads(cfg1.read_text())
    cfg["lambda"] = {"lo": 9, "hi": 12, "count": 2}
    cfg1.write_text(json.dumps(cfg, indent=2))
    assert call(["solve", *small(cfg1, tmp_path)])[0] == 2
