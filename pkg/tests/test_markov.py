"""Backoff-chain fixed point: hand-computed values, derivative oracle,
uniqueness via solver cross-agreement, monotone comparative statics."""

import numpy as np
import pytest

from wlangame import markov
from wlangame.markov import (MacProfile, StationaryState, gamma,
                             gamma_derivative, residual, solve_stationary,
                             solve_stationary_damped)


def macs(ws, m=5):
    return [MacProfile(w, m) for w in ws]


def test_mac_profile_validation():
    with pytest.raises(ValueError):
        MacProfile(3)
    with pytest.raises(ValueError):
        MacProfile(32, 0)
    MacProfile(4, 1)


def test_gamma_hand_values():
    assert gamma(0.0, 31) == pytest.approx(2.0 / 32.0)          # sum term vanishes
    assert gamma(0.5, 15, 5) == pytest.approx(2.0 / 53.5)       # 2q=1, sum = m
    assert gamma(1.0, 15, 5) == pytest.approx(2.0 / 481.0)      # sum = 31


def test_gamma_derivative_at_zero():
    for w in (8, 31, 128):
        assert gamma_derivative(0.0, w) == pytest.approx(-2.0 * w / (w + 1) ** 2)


def test_gamma_derivative_sign_and_fd_agreement():
    rng = np.random.default_rng(11)
    h = 1e-7
    for _ in range(100):
        q = rng.uniform(h, 1.0 - h)
        w = int(rng.integers(4, 1024))
        m = int(rng.integers(1, 8))
        d = gamma_derivative(q, w, m)
        assert d <= 0.0
        fd = (gamma(q + h, w, m) - gamma(q - h, w, m)) / (2.0 * h)
        assert d == pytest.approx(fd, rel=1e-6)


def test_single_user_error_free():
    state = solve_stationary(macs([31]), [0.0])
    assert state.p[0] == pytest.approx(0.0, abs=1e-12)
    assert state.q[0] == pytest.approx(0.0, abs=1e-12)
    assert state.tau[0] == pytest.approx(2.0 / 32.0, abs=1e-11)


def reference_two_user_symmetric(w=31, m=5, iters=20000):
    # plain damped fixed point written out locally, independent of the
    # packaged solvers
    tau = 0.01
    for _ in range(iters):
        q = tau  # e=0, two users: q_i = 1 - (1 - tau_other)
        tau = 0.5 * tau + 0.5 * gamma(q, w, m)
    return tau


def test_two_user_symmetric_against_local_iteration():
    state = solve_stationary(macs([31, 31]), [0.0, 0.0])
    ref = reference_two_user_symmetric()
    assert state.tau[0] == pytest.approx(ref, abs=1e-10)
    assert state.tau[1] == pytest.approx(ref, abs=1e-10)
    assert state.q[0] == pytest.approx(state.tau[1], abs=1e-10)


def test_symmetric_inputs_give_symmetric_state():
    state = solve_stationary(macs([64] * 7), [0.2] * 7)
    assert np.max(state.tau) - np.min(state.tau) < 1e-12
    assert np.max(state.p) - np.min(state.p) < 1e-12


def test_residual_contract_and_sensitivity():
    profiles = macs([31, 64, 128])
    pers = [0.0, 0.1, 0.3]
    state = solve_stationary(profiles, pers)
    assert residual(state, profiles, pers) <= markov.RESIDUAL_TOL
    bumped = StationaryState(tau=state.tau.copy(), p=state.p.copy(),
                             q=state.q.copy(), c=state.c,
                             residual=state.residual)
    bumped.tau[1] += 1e-3
    assert residual(bumped, profiles, pers) >= 1e-4


def test_residual_of_zero_state_single_user():
    zero = StationaryState(tau=np.zeros(1), p=np.zeros(1), q=np.zeros(1),
                           c=1.0, residual=0.0)
    w = 31
    assert residual(zero, macs([w]), [0.0]) == pytest.approx(2.0 / (w + 1))


def test_occupancy_map_strictly_decreasing():
    # (1-x)(1 - gamma(x)) decreases on [0, 1] whenever w > 3
    for w in (4, 8, 31, 301, 1024):
        xs = np.linspace(0.0, 1.0, 1000)
        vals = [(1.0 - x) * (1.0 - gamma(x, w)) for x in xs]
        assert all(b < a for a, b in zip(vals, vals[1:]))


def test_tau_bounds_from_existence_argument():
    rng = np.random.default_rng(5)
    for _ in range(25):
        n = int(rng.integers(1, 20))
        ws = rng.integers(4, 1024, n)
        m = int(rng.integers(1, 7))
        es = rng.uniform(0.0, 0.9, n)
        state = solve_stationary(macs(ws, m), es)
        for i in range(n):
            hi = 2.0 / (ws[i] + 1.0)
            lo = 2.0 / (ws[i] + 1.0 + ws[i] * (2.0 ** m - 1.0))
            assert lo - 1e-12 <= state.tau[i] <= hi + 1e-12
            assert 0.0 < state.tau[i] < 1.0


def test_solver_agreement_with_damped_iteration():
    rng = np.random.default_rng(17)
    for _ in range(20):
        n = int(rng.integers(1, 30))
        profiles = macs(rng.integers(8, 1024, n))
        es = rng.uniform(0.0, 0.5, n)
        a = solve_stationary(profiles, es)
        b = solve_stationary_damped(profiles, es, start="zero")
        c = solve_stationary_damped(profiles, es, start="gamma")
        assert np.max(np.abs(a.tau - b.tau)) < 1e-8
        assert np.max(np.abs(b.tau - c.tau)) < 1e-10
        assert np.max(np.abs(a.q - b.q)) < 1e-8


def test_monotone_comparative_statics():
    # raising one user's error rate weakly raises its q, lowers its tau
    rng = np.random.default_rng(23)
    for _ in range(10):
        n = int(rng.integers(2, 10))
        profiles = macs(rng.integers(8, 256, n))
        es = rng.uniform(0.0, 0.4, n)
        state = solve_stationary(profiles, es)
        k = int(rng.integers(0, n))
        bumped = es.copy()
        bumped[k] = min(0.95, bumped[k] + 0.2)
        after = solve_stationary(profiles, bumped)
        assert after.q[k] >= state.q[k] - 1e-12
        assert after.tau[k] <= state.tau[k] + 1e-12


def test_precondition_errors():
    with pytest.raises(ValueError):
        solve_stationary(macs([31]), [1.0])
    with pytest.raises(ValueError):
        solve_stationary(macs([31, 31]), [0.0])  # dimension mismatch
