import math

import numpy as np
import pytest

from activeid.bench import verify as V
from activeid.errors import ConfigError

CHEAP = {"parseval", "gamma_k_u_oracle", "scalar_design", "gradient"}


def test_config_rejects_unknown_keys():
    assert V.VerifyConfig.from_dict({"tail_trials": 5}).tail_trials == 5
    with pytest.raises(ConfigError):
        V.VerifyConfig.from_dict({"tail_trails": 5})
    with pytest.raises(ConfigError):
        V.verify_suite("medium")


def test_cheap_checks_pass_and_report_format():
    seen = []
    rep = V.verify_suite("fast", seed=0, only=CHEAP, progress=seen.append)
    assert [c.name for c in rep.checks] == [c.name for c in seen]
    assert {c.name for c in rep.checks} == CHEAP and rep.passed
    text = rep.to_csv()
    lines = text.splitlines()
    assert lines[0] == "# schema=1" and lines[1] == "name,passed,measured,threshold,detail"
    assert len(lines) == 2 + len(CHEAP)
    # no timings, so a rerun is byte-identical
    assert V.verify_suite("fast", seed=0, only=CHEAP).to_csv() == text
    assert rep.to_json()["passed"] is True


def test_zero_tolerance_fails():
    ok, measured, thr, _ = V.check_scalar_design(0.0, 0)
    assert not ok and thr == 0.0
    assert not V.VerifyReport("fast", 0, [V.CheckResult("x", False, 1.0, 0.0)]).passed


def test_tail_bound_formula():
    rng = np.random.default_rng(0)
    freq, bound = V.tail_frequency(np.array([[0.5]]), np.array([[1.0]]), 100, 50, rng)
    assert bound == pytest.approx(math.exp(-200 / 81))
    assert 0.0 <= freq <= 1.0


def test_batch_errors_shrink_with_data():
    A, B = V.RATE_A, np.eye(2)
    u = np.zeros((4000, 2))
    e1 = np.median(V.batch_errors(A, B, u, 250, 40, np.random.default_rng(1)))
    e2 = np.median(V.batch_errors(A, B, u, 4000, 40, np.random.default_rng(2)))
    assert e2 < e1 / 2


def test_rate_inputs_equal_power_and_better_design():
    (poor, good), lam = V.rate_inputs()
    assert poor.power() == pytest.approx(good.power(), rel=1e-6)
    assert lam[1] > 2 * lam[0]


def test_determinism_check():
    ok, *_ = V.check_determinism(1)
    assert ok
