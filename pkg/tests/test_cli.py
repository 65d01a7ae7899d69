import csv
import json
import subprocess
import sys

import pytest

from sampler_smith import __version__
from sampler_smith.cli import SEED_ENV, run_cli
from sampler_smith.expr import parse_program

NORMAL = json.dumps({"kind": "moment", "moments": [0.0, 1.0, 0.0, 0.0], "noise": 0.001})


def read_csv(path):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    header = [ln for ln in lines if ln.startswith("#")]
    rows = list(csv.reader(ln for ln in lines if not ln.startswith("#")))
    return header, rows


def test_version_and_help(capsys):
    assert run_cli(["--version"]) == 0
    assert __version__ in capsys.readouterr().out
    assert run_cli(["--help"]) == 0


def test_usage_errors_exit_2(capsys):
    assert run_cli([]) == 2
    assert run_cli(["frobnicate"]) == 2
    assert run_cli(["generate", "--count", "1"]) == 2  # no seed
    err = capsys.readouterr().err
    assert all(line.startswith("ERR:2:") for line in err.strip().splitlines())


def test_bad_inputs_exit_2(tmp_path, capsys):
    assert run_cli(["score", "--seed", "1", "--program", "(fn [] (+ 1.0", "--target", NORMAL]) == 2
    assert run_cli(["score", "--seed", "1", "--program", "(fn [] 0.0)", "--target", "{not json"]) == 2
    assert run_cli(["generate", "--seed", "1", "--count", "-3"]) == 2
    assert run_cli(["generate", "--seed", "x"]) == 2
    assert run_cli(["lg", "pipeline", "--seed", "1", "--train", "jagged", "--out-dir", str(tmp_path)]) == 2
    assert "ERR:2:" in capsys.readouterr().err


def test_bad_network_file_exits_2(tmp_path, capsys):
    ep = tmp_path / "ep.csv"
    ep.write_text("t,y\n1,0\n2,0\n", encoding="utf-8")
    net = tmp_path / "net.json"
    net.write_text(json.dumps({"sizes": [3, 2, 2], "W1": [0.0] * 6, "b1": [0.0] * 2, "W2": [0.0] * 4, "b2": [0.0] * 2}))
    args = ["lg", "smc", "--seed", "1", "--episode", str(ep), "--proposal", "data-driven", "--params", str(net)]
    assert run_cli(args) == 2
    assert capsys.readouterr().err.startswith("ERR:2:")


def test_runtime_failure_exits_1(tmp_path, capsys):
    d = tmp_path / "eps"
    assert run_cli(["lg", "episodes", "--seed", "1", "--group", "step", "--out-dir", str(d)]) == 0
    # a huge step diverges even after every halving
    args = ["lg", "train", "--seed", "1", "--episodes", str(d / "train-step-0.csv"), "--particles", "5", "--epochs", "3", "--lr", "1e12"]
    assert run_cli(args + ["--out", str(tmp_path / "net.json")]) == 1
    assert capsys.readouterr().err.startswith("ERR:1: TrainingError")


def test_generate_zero_count_writes_header_only(tmp_path):
    out = tmp_path / "g.csv"
    assert run_cli(["generate", "--seed", "3", "--count", "0", "--out", str(out)]) == 0
    header, rows = read_csv(out)
    assert rows == [["index", "logprior", "cap_fraction", "nonfinite", "program"]]
    assert header[0] == f"# sampler-smith {__version__}"
    assert header[1].startswith("# config: ")
    assert header[2] == "# seed: 3"


def test_generate_is_deterministic_and_parsable(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert run_cli(["generate", "--seed", "4", "--count", "5", "--draws", "20", "--out", str(p)]) == 0
    assert read_csv(a)[1] == read_csv(b)[1]
    _, rows = read_csv(a)
    assert len(rows) == 6
    for r in rows[1:]:
        parse_program(r[-1])


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(SEED_ENV, "4")
    out = tmp_path / "env.csv"
    assert run_cli(["generate", "--count", "5", "--draws", "20", "--out", str(out)]) == 0
    ref = tmp_path / "flag.csv"
    run_cli(["generate", "--seed", "4", "--count", "5", "--draws", "20", "--out", str(ref)])
    assert read_csv(out)[1] == read_csv(ref)[1]


def test_score_and_weights(tmp_path):
    out = tmp_path / "s.csv"
    assert run_cli(["score", "--seed", "0", "--program", "(fn [] 0.0)", "--target", NORMAL, "--out", str(out)]) == 0
    _, rows = read_csv(out)
    assert abs(float(rows[1][2]) - 5e5) < 1e-3
    w = tmp_path / "w.json"
    assert run_cli(["weights", "estimate", "--holdout", "bernoulli", "--out", str(w)]) == 0
    d = json.loads(w.read_text())
    assert d["meta"]["version"] == __version__
    assert d["meta"]["config"]["holdout"] == ["bernoulli"]


def test_synth_mh_outputs(tmp_path):
    d = tmp_path / "mh"
    args = ["synth", "mh", "--seed", "2", "--target", NORMAL, "--iterations", "20", "--n-samples", "30", "--out-dir", str(d)]
    assert run_cli(args) == 0
    _, rows = read_csv(d / "trace.csv")
    assert len(rows) == 22
    best = json.loads((d / "best.json").read_text())
    parse_program(best["program"])
    assert (d / "best.psmp").read_text().startswith("; sampler-smith")


def test_synth_gp_outputs(tmp_path):
    d = tmp_path / "gp"
    args = ["synth", "gp", "--seed", "2", "--target", NORMAL, "--population", "8", "--generations", "2", "--n-samples", "30"]
    assert run_cli(args + ["--out-dir", str(d)]) == 0
    _, rows = read_csv(d / "generations.csv")
    assert len(rows) == 4
    assert run_cli(args + ["--tournament", "0", "--out-dir", str(d)]) == 2


def test_abc_toy(tmp_path):
    out = tmp_path / "abc.csv"
    target = json.dumps({"kind": "moment", "moments": [0.0, 0.0, 0.0, 0.0], "noise": 0.1})
    assert run_cli(["abc", "reject", "--seed", "1", "--target", target, "--toy", "0,1", "--epsilon", "0", "--max-draws", "50", "--n-samples", "5", "--out", str(out)]) == 0
    _, rows = read_csv(out)
    assert [r[0] for r in rows[1:]] == ["(fn [] 0.0)"]


def test_pipeline_row_count(tmp_path):
    d = tmp_path / "lg"
    args = ["lg", "pipeline", "--seed", "5", "--p-train", "5", "--p-test", "5", "--repeats", "2", "--epochs", "1", "--out-dir", str(d)]
    assert run_cli(args) == 0
    _, rows = read_csv(d / "metrics.csv")
    # two proposals per test episode per repeat
    assert len(rows) - 1 == 2 * 8 * 2
    first = (d / "metrics.csv").read_text()
    assert run_cli(args) == 0
    assert (d / "metrics.csv").read_text() == first


def test_episodes_and_smc(tmp_path):
    d = tmp_path / "eps"
    assert run_cli(["lg", "episodes", "--seed", "1", "--group", "step", "--split", "test", "--out-dir", str(d)]) == 0
    _, index = read_csv(d / "index.csv")
    assert len(index) == 5
    out = tmp_path / "smc.csv"
    assert run_cli(["lg", "smc", "--seed", "1", "--episode", str(d / "test-step-0.csv"), "--particles", "10", "--out", str(out)]) == 0
    _, rows = read_csv(out)
    assert len(rows) == 200


def test_config_file_supplies_defaults(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"count": 2, "draws": 10}), encoding="utf-8")
    out = tmp_path / "g.csv"
    assert run_cli(["generate", "--seed", "1", "--config", str(cfg), "--out", str(out)]) == 0
    assert len(read_csv(out)[1]) == 3
    cfg.write_text(json.dumps({"bogus": 1}), encoding="utf-8")
    assert run_cli(["generate", "--seed", "1", "--config", str(cfg)]) == 2


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "sampler_smith.cli", "generate"], capture_output=True, text=True)
    assert proc.returncode == 2
    assert proc.stderr.startswith("ERR:2:")
