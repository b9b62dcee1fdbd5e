import json

import numpy as np
import pytest

from activeid.active import (
    CSV_FIELDS,
    ActiveConfig,
    run_active,
    run_noise_baseline,
    run_oracle,
)
from activeid.bench.systems import SystemSpec, gen_system
from activeid.errors import ConfigError
from activeid.lds import LinSys, NoiseModel
from activeid.rng import derive_seed

JORDAN = gen_system(SystemSpec("jordan", d=4, rho=0.9))
SMALL = LinSys(np.array([[0.8, 0.3], [0.0, 0.5]]), np.eye(2))


@pytest.mark.parametrize("kw", [
    dict(T0=10, k0=20), dict(k0=1), dict(delta=0.0), dict(delta=1.0), dict(gamma2=0.0),
    dict(mode="fast"), dict(epochs=-1), dict(k_cap=10), dict(sigma_u2=-1.0),
])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        ActiveConfig(**kw)


def test_epoch_laws():
    cfg = ActiveConfig(T0=100, k0=20, k_cap=1280)
    assert [cfg.epoch_length(i) for i in range(4)] == [100, 300, 900, 2700]
    assert [cfg.cumulative_T(i) for i in range(4)] == [100, 400, 1300, 4000]
    assert [cfg.period(i) for i in range(8)] == [20, 40, 80, 160, 320, 640, 1280, 1280]


def test_record_bookkeeping():
    cfg = ActiveConfig(gamma2=2.0, epochs=3)
    rec = run_active(SMALL, NoiseModel(1.0), cfg, seed=4, keep_trajectory=True)
    assert [e.T for e in rec.epochs] == [cfg.cumulative_T(i) for i in range(4)]
    assert [e.k for e in rec.epochs] == [20, 40, 80, 160]
    assert rec.trajectory.T == cfg.cumulative_T(3)
    assert rec.epochs[0].sigma_u2 == pytest.approx(1.0)  # gamma2 / p warmup
    assert all(e.sigma_u2 == pytest.approx(0.5) for e in rec.epochs[1:])  # gamma2 / (2p)
    rows = rec.csv_rows(7)
    assert len(rows) == 4 and all(len(r) == len(CSV_FIELDS) and r[0] == 7 for r in rows)
    json.dumps(rec.to_json(), allow_nan=False)


def test_seeded_replay_identical():
    cfg = ActiveConfig(gamma2=2.0, epochs=2)
    a = run_active(SMALL, NoiseModel(1.0), cfg, seed=11)
    b = run_active(SMALL, NoiseModel(1.0), cfg, seed=11)
    dump = lambda r: json.dumps(r.to_json(), allow_nan=False, sort_keys=True)
    assert dump(a) == dump(b)
    c = run_oracle(SMALL, NoiseModel(1.0), cfg, seed=11)
    assert dump(c) == dump(run_oracle(SMALL, NoiseModel(1.0), cfg, seed=11))


def test_noiseless_run_is_exact_after_warmup():
    rec = run_active(SMALL, NoiseModel(0.0), ActiveConfig(gamma2=2.0, epochs=2), seed=0)
    assert all(e.spectral_error < 1e-9 for e in rec.epochs)


def test_common_random_numbers_across_policies():
    cfg = ActiveConfig(gamma2=2.0, epochs=2)
    a = run_active(SMALL, NoiseModel(1.0), cfg, seed=5, keep_trajectory=True)
    b = run_noise_baseline(SMALL, NoiseModel(1.0), np.eye(2), cfg, seed=5, keep_trajectory=True)
    np.testing.assert_array_equal(a.trajectory.noise, b.trajectory.noise)
    assert [e.T for e in a.epochs] == [e.T for e in b.epochs]


def test_unstable_truth_rejected():
    from activeid.errors import StabilityError

    with pytest.raises(StabilityError):
        run_active(LinSys([[1.2]], [[1.0]]), NoiseModel(1.0), ActiveConfig())


def test_isotropic_baseline_power():
    cfg = ActiveConfig(T0=10_000, k0=20, epochs=0, gamma2=3.0)
    rec = run_noise_baseline(SMALL, NoiseModel(1.0), np.eye(2) * 1.5, cfg, seed=0)
    assert rec.epochs[0].power == pytest.approx(3.0, rel=0.05)


def test_noise_free_inputs_still_learn():
    cfg = ActiveConfig(T0=100, epochs=3)
    errs = [run_noise_baseline(SMALL, NoiseModel(1.0), np.zeros((2, 2)), cfg, seed=s).epochs
            for s in range(20)]
    med = np.median([[e.spectral_error for e in run] for run in errs], axis=0)
    T = np.array([e.T for e in errs[0]])
    # roughly 1/sqrt(T): the constant stays within a factor of 2
    c = med * np.sqrt(T)
    assert c.max() / c.min() < 2


def test_optimal_noise_beats_isotropic_on_diagonal_system():
    from activeid.design import noise_objective, optimal_noise_cov

    A = np.diag([0.9, 0.0])
    g2 = 2.0
    opt = optimal_noise_cov(A, np.eye(2), g2, 0.0)
    assert opt.objective > noise_objective(A, np.eye(2), np.eye(2) * g2 / 2)


def test_oracle_design_dominates_active_design():
    cfg = ActiveConfig(gamma2=2.0, epochs=3, track_oracle=True)
    for seed in range(3):
        rec = run_active(SMALL, NoiseModel(1.0), cfg, seed=seed)
        for e in rec.epochs[1:]:
            if e.fallback is None:
                assert e.oracle_objective >= e.true_objective - 1e-6 * abs(e.true_objective)


def _median_final(fn, trials, cfg, noise, *args):
    return np.median([fn(JORDAN, noise, *args, cfg, seed=derive_seed(0, "trial", t)).final_error
                      for t in range(trials)])


def test_all_sinusoidal_active_tracks_oracle():
    cfg = ActiveConfig(gamma2=4.0, epochs=2, sigma_u2=0.0)
    act = _median_final(run_active, 20, cfg, NoiseModel(1.0))
    orc = _median_final(run_oracle, 20, cfg, NoiseModel(1.0))
    assert abs(act - orc) <= 0.3 * orc


def test_joint_estimation_close_to_known_input_matrix():
    known = ActiveConfig(gamma2=4.0, epochs=4)
    joint = ActiveConfig(gamma2=4.0, epochs=4, estimate_B=True)
    a = _median_final(run_active, 15, known, NoiseModel(1.0))
    b = _median_final(run_active, 15, joint, NoiseModel(1.0))
    assert b <= 2 * a


def test_median_error_decreases_over_epochs():
    cfg = ActiveConfig(gamma2=2.0, epochs=4)
    runs = [run_active(SMALL, NoiseModel(1.0), cfg, seed=s).epochs for s in range(50)]
    med = np.median([[e.spectral_error for e in r] for r in runs], axis=0)
    assert np.all(np.diff(med) < 0)
