import subprocess
import sys

import pytest

from activeid.cli import build_parser, main

CONFIG = """
seed = 3

[system]
kind = "jordan"
d = 2
rho = 0.8

[experiment]
policies = ["active", "iso_noise"]
trials = 2
epochs = 1
gamma2 = 2.0

[simulate]
T = 50
sigma = 1.0
sigma_u = 0.5

[design]
k = 16
gamma2 = 2.0
sigma2 = 1.0
horizon = 100.0
"""


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "cfg.toml"
    p.write_text(CONFIG)
    return p


def run(*argv):
    return subprocess.run([sys.executable, "-m", "activeid.cli", *map(str, argv)],
                          capture_output=True, text=True)


RERUN_CASES = [
    ("simulate", (), ["trajectory.csv"]),
    ("design", (), ["design.json", "input.csv"]),
    ("run-active", (), ["active.csv", "active.json"]),
    ("run-active", ("--policy", "oracle"), ["oracle.csv"]),
    ("run-baseline", (), ["iso_noise.csv"]),
    ("run-baseline", ("--policy", "opt_noise"), ["opt_noise.csv"]),
    ("experiment", (), ["runs.csv", "errors.svg"]),
]


@pytest.mark.parametrize("cmd,extra,files", RERUN_CASES, ids=[c[0] + "".join(c[1][1:]) for c in RERUN_CASES])
def test_rerun_byte_identical(tmp_path, config, cmd, extra, files):
    outs = []
    for name in ("a", "b"):
        res = run(cmd, "--config", config, "--out", tmp_path / name, *extra)
        assert res.returncode == 0, res.stderr
        outs.append([(tmp_path / name / f).read_bytes() for f in files])
    assert outs[0] == outs[1]


def test_seed_flag_changes_output(tmp_path, config):
    assert run("simulate", "--config", config, "--out", tmp_path / "a").returncode == 0
    assert run("simulate", "--config", config, "--out", tmp_path / "b", "--seed", 4).returncode == 0
    assert (tmp_path / "a/trajectory.csv").read_bytes() != (tmp_path / "b/trajectory.csv").read_bytes()


def test_threads_do_not_change_results(tmp_path, config):
    main(["experiment", "--config", str(config), "--out", str(tmp_path / "a")])
    main(["experiment", "--config", str(config), "--out", str(tmp_path / "b"), "--threads", "2"])
    assert (tmp_path / "a/runs.csv").read_bytes() == (tmp_path / "b/runs.csv").read_bytes()


def test_plot_from_report(tmp_path, config):
    assert main(["experiment", "--config", str(config), "--out", str(tmp_path)]) == 0
    out = tmp_path / "replot"
    assert main(["plot", "--report", str(tmp_path / "report.json"), "--out", str(out)]) == 0
    assert (out / "errors.svg").read_bytes() == (tmp_path / "errors.svg").read_bytes()


def test_design_from_problem_json(tmp_path, config):
    assert main(["design", "--config", str(config), "--out", str(tmp_path)]) == 0
    import json

    from activeid.cli import _load, _problem_from_config
    from activeid.design import DesignProblem

    prob = _problem_from_config(_load(config), 3)
    (tmp_path / "p.json").write_text(json.dumps(prob.to_json()))
    assert main(["design", "--problem", str(tmp_path / "p.json"), "--seed", "3",
                 "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "b/design.json").read_bytes() == (tmp_path / "design.json").read_bytes()
    assert isinstance(DesignProblem.from_json(prob.to_json()), DesignProblem)


@pytest.mark.parametrize("body", [
    "[system]\nkind = 'jordan'\nd = 2\nrho = 1.5\n",
    "[system]\nkind = 'jordan'\nd = 2\nrho = 0.5\n[simulate]\nTT = 3\n",
    "this is not toml = = =",
])
def test_bad_config_exit_2(tmp_path, body):
    p = tmp_path / "bad.toml"
    p.write_text(body)
    res = run("simulate", "--config", p, "--out", tmp_path)
    assert res.returncode == 2 and "config error" in res.stderr


def test_missing_inputs_exit_2(tmp_path):
    assert main(["simulate", "--out", str(tmp_path)]) == 2
    assert main(["plot", "--out", str(tmp_path)]) == 2
    assert main(["plot", "--report", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 2
    assert main(["simulate", "--config", str(tmp_path / "none.toml")]) == 2
    (tmp_path / "p.json").write_text("{}")
    assert main(["design", "--problem", str(tmp_path / "p.json"), "--out", str(tmp_path)]) == 2


def test_verify_failure_exit_1(tmp_path, monkeypatch):
    import activeid.cli as cli
    from activeid.bench.verify import CheckResult, VerifyReport

    def fake(level, seed, config, progress):
        rep = VerifyReport(level, seed, [CheckResult("x", False, 1.0, 0.0)])
        progress(rep.checks[0])
        return rep

    monkeypatch.setattr(cli, "verify_suite", fake)
    assert main(["verify", "--out", str(tmp_path)]) == 1
    assert (tmp_path / "verify.csv").read_text().startswith("# schema=1")

    def good(level, seed, config, progress):
        return VerifyReport(level, seed, [CheckResult("x", True, 0.0, 1.0)])

    monkeypatch.setattr(cli, "verify_suite", good)
    assert main(["verify"]) == 0


def test_parser_lists_all_commands():
    text = build_parser().format_help()
    for cmd in ("simulate", "design", "run-active", "run-baseline", "experiment", "verify", "plot"):
        assert cmd in text
