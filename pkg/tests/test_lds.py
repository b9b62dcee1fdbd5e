import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from activeid.errors import DimensionError, StabilityError
from activeid.lds import (
    LinSys,
    NoiseModel,
    StableLinSys,
    Trajectory,
    beta_bound,
    gram_eta,
    gram_input,
    gram_noise,
    matrix_powers,
    propagate,
    simulate,
    simulate_batch,
    spectral_radius,
    truncation_horizon,
)

from conftest import random_stable

JORDAN2 = np.array([[0.9, 1.0], [0.0, 0.9]])


@pytest.mark.parametrize("A, want", [
    (np.zeros((2, 2)), 0.0),
    (np.diag([0.9, -0.5]), 0.9),
    (JORDAN2, 0.9),
])
def test_spectral_radius_examples(A, want):
    assert spectral_radius(A) == pytest.approx(want, abs=1e-10)


def test_spectral_radius_rejects_non_square():
    with pytest.raises(DimensionError):
        spectral_radius(np.zeros((2, 3)))


def test_linsys_shape_checks():
    with pytest.raises(DimensionError):
        LinSys(np.eye(2), np.eye(3))
    with pytest.raises(StabilityError):
        StableLinSys(np.eye(2), np.eye(2))
    s = LinSys(np.eye(2) * 0.5, np.ones((2, 1)))
    assert (s.d, s.p) == (2, 1)


def test_beta_bound_zero_matrix():
    beta, rho_bar = beta_bound(np.zeros((2, 2)))
    assert beta >= 1 and rho_bar == pytest.approx(0.5)


def test_beta_bound_scalar():
    beta, rho_bar = beta_bound(np.array([[0.9]]))
    assert rho_bar == pytest.approx(0.95)
    ks = np.arange(101)
    assert np.all(0.9**ks <= beta * 0.95**ks * (1 + 1e-12))


def test_beta_bound_jordan_against_power_sequence():
    A = 0.9 * np.eye(4) + np.eye(4, k=1)
    beta, rho_bar = beta_bound(A)
    P = matrix_powers(A, 501)
    ratios = np.linalg.norm(P, 2, axis=(1, 2)) / rho_bar ** np.arange(501)
    assert ratios.max() <= beta * (1 + 1e-9)


def test_beta_bound_unstable():
    with pytest.raises(StabilityError):
        beta_bound(np.array([[1.2]]))


def test_gram_noise_examples():
    np.testing.assert_allclose(gram_noise(np.zeros((2, 2)), 5), np.eye(2))
    assert gram_noise(np.array([[0.5]]), 3)[0, 0] == pytest.approx(1.3125)
    np.testing.assert_allclose(gram_noise(np.diag([0.9, 0.5]), 2), np.diag([1.81, 1.25]))


def test_gram_input_examples():
    np.testing.assert_allclose(gram_input(np.zeros((2, 2)), np.eye(2), 7), np.eye(2))
    np.testing.assert_allclose(gram_input(np.zeros((2, 2)), np.array([[1.0], [0.0]]), 3),
                               np.diag([1.0, 0.0]))
    assert gram_input(np.array([[0.5]]), np.array([[2.0]]), 2)[0, 0] == pytest.approx(5.0)


def test_gram_eta_examples(rng):
    A, B = random_stable(rng, 3, 2, 0.7)
    np.testing.assert_allclose(gram_eta(A, B, 1.0, 0.0, 6), gram_noise(A, 6))
    np.testing.assert_allclose(gram_eta(A, B, 0.0, 1.0, 6), gram_input(A, B, 6))
    np.testing.assert_allclose(gram_eta(np.zeros((2, 2)), np.eye(2), 2.0, 3.0, 1), 5 * np.eye(2))


@given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 5), t=st.integers(1, 40))
def test_gram_monotone_and_converging(seed, d, t):
    A, _ = random_stable(np.random.default_rng(seed), d, 1, 0.8)
    g1, g2 = gram_noise(A, t), gram_noise(A, t + 1)
    assert np.linalg.eigvalsh(g2 - g1)[0] >= -1e-10
    assert np.linalg.eigvalsh(g1)[0] >= 1 - 1e-10
    beta, rho_bar = beta_bound(A)
    tail = np.linalg.norm(gram_noise(A, t + 60) - g1, 2)
    assert tail <= beta**2 * rho_bar ** (2 * t) / (1 - rho_bar**2) * (1 + 1e-9) + 1e-12


def test_truncation_horizon_small_tail():
    A = 0.9 * np.eye(3) + np.eye(3, k=1)
    K = truncation_horizon(A)
    beta, rho_bar = beta_bound(A)
    assert beta**2 * rho_bar ** (2 * K) < 1e-10


def test_simulate_zero_dynamics():
    sys_ = LinSys(np.zeros((2, 2)), np.eye(2))
    u = np.tile([1.0, 0.0], (5, 1))
    tr = simulate(sys_, NoiseModel(0, 0), u, 5)
    np.testing.assert_array_equal(tr.states[1:], u)


def test_simulate_geometric_sum():
    tr = simulate(LinSys([[0.5]], [[1.0]]), NoiseModel(0, 0), np.ones((3, 1)), 3)
    np.testing.assert_allclose(tr.states[:, 0], [0, 1, 1.5, 1.75])


def test_simulate_replay_is_bit_exact():
    sys_ = LinSys(0.5 * np.eye(2), np.eye(2))
    a = simulate(sys_, NoiseModel(1.0, 0.3), None, 200, seed=7)
    b = simulate(sys_, NoiseModel(1.0, 0.3), None, 200, seed=7)
    assert np.array_equal(a.states, b.states) and np.array_equal(a.inputs, b.inputs)
    c = simulate(sys_, NoiseModel(1.0, 0.3), None, 200, seed=8)
    assert not np.array_equal(a.states, c.states)


def test_simulate_signal_dimension_mismatch():
    with pytest.raises(DimensionError):
        simulate(LinSys(np.eye(2) * 0.5, np.eye(2)), NoiseModel(), np.ones((4, 3)), 4)


def test_process_and_input_streams_are_independent():
    sys_ = LinSys(0.5 * np.eye(2), np.eye(2))
    a = simulate(sys_, NoiseModel(1.0, 0.0), None, 50, seed=3)
    b = simulate(sys_, NoiseModel(1.0, 2.0), None, 50, seed=3)
    np.testing.assert_array_equal(a.noise, b.noise)


@given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 4), T=st.integers(1, 150))
def test_noiseless_free_response(seed, d, T):
    rng = np.random.default_rng(seed)
    A, B = random_stable(rng, d, 2, 0.95)
    x0 = rng.standard_normal(d)
    tr = simulate(LinSys(A, B), NoiseModel(0, 0), None, T, x0=x0)
    P = matrix_powers(A, T + 1)
    want = np.einsum("tij,j->ti", P, x0)
    scale = np.max(np.abs(want)) + 1e-300
    assert np.max(np.abs(tr.states - want)) <= 1e-12 * scale * 10


@given(seed=st.integers(0, 2**32 - 1), T=st.integers(1, 300))
def test_propagate_matches_loop(seed, T):
    rng = np.random.default_rng(seed)
    A, _ = random_stable(rng, 3, 1, 0.9)
    drive = rng.standard_normal((T, 3))
    x = rng.standard_normal(3)
    want = [x]
    for t in range(T):
        x = A @ x + drive[t]
        want.append(x)
    np.testing.assert_allclose(propagate(A, want[0], drive), np.array(want), atol=1e-10)


def test_monte_carlo_state_covariance():
    A = np.array([[0.7, 0.4], [0.0, 0.5]])
    X = simulate_batch(LinSys(A, np.eye(2)), 1.0, 6, 20000, np.random.default_rng(0))
    emp = np.einsum("nd,ne->de", X[:, 6], X[:, 6]) / len(X)
    want = gram_noise(A, 6)
    assert np.linalg.norm(emp - want, 2) <= 0.05 * np.linalg.norm(want, 2)


def test_trajectory_length_invariant():
    with pytest.raises(DimensionError):
        Trajectory(states=np.zeros((3, 1)), inputs=np.zeros((3, 1)))
