"""Slot-duration and effective-throughput accounting."""

import numpy as np
import pytest

from wlangame.markov import StationaryState
from wlangame.throughput import (TimingParams, aggregate_throughput,
                                 slot_duration, user_throughput)

TIMING = TimingParams(airtime=1e-3)  # sigma 20us, sifs 10us, difs 50us, ack 0


def state_of(taus):
    taus = np.asarray(taus, dtype=np.float64)
    return StationaryState(tau=taus, p=np.zeros_like(taus),
                           q=np.zeros_like(taus), c=float(np.prod(1 - taus)),
                           residual=0.0)


def test_timing_validation_and_busy_durations():
    with pytest.raises(ValueError):
        TimingParams(airtime=0.0)
    with pytest.raises(ValueError):
        TimingParams(airtime=1e-3, sigma=-1e-6)
    assert TIMING.t_success == pytest.approx(1e-3 + 10e-6 + 50e-6)
    assert TIMING.t_failure == pytest.approx(1e-3 + 10e-6)


def test_all_idle_slot_is_sigma():
    st = state_of([0.0, 0.0, 0.0])
    for mode in ("approx", "exact"):
        assert slot_duration(st, TIMING, [0.0] * 3, mode) == pytest.approx(TIMING.sigma)


def test_single_saturated_user_slot_is_success_time():
    st = state_of([1.0])
    assert slot_duration(st, TIMING, [0.0], "exact") == pytest.approx(TIMING.t_success)
    assert slot_duration(st, TIMING, [0.0], "approx") == pytest.approx(TIMING.airtime)


def test_two_user_exact_vs_approx_frozen():
    # tau = 0.1 each, no channel errors: idle 0.81, single-tx 0.18, clash 0.01
    st = state_of([0.1, 0.1])
    approx = slot_duration(st, TIMING, [0.0, 0.0], "approx")
    exact = slot_duration(st, TIMING, [0.0, 0.0], "exact")
    assert approx == pytest.approx(0.19 * 1e-3 + 0.81 * 20e-6, rel=1e-12)
    expected_exact = (0.81 * 20e-6 + 0.18 * TIMING.t_success
                      + 0.01 * TIMING.t_failure)
    assert exact == pytest.approx(expected_exact, rel=1e-12)
    # difference is bounded by the slot-overhead ratio sigma/T + |Ts-Tu|/T
    bound = TIMING.sigma / TIMING.airtime + (TIMING.t_success - TIMING.t_failure) / TIMING.airtime
    assert abs(exact - approx) / approx <= bound
    # with success/failure overheads switched off the two formulas coincide
    bare = TimingParams(airtime=1e-3, sigma=20e-6, sifs=0.0, difs=0.0, ack=0.0)
    assert slot_duration(st, bare, [0.0, 0.0], "exact") == pytest.approx(
        slot_duration(st, bare, [0.0, 0.0], "approx"), rel=1e-12)
    # and with only a 10us uniform overhead the gap stays below 2.2%
    mild = TimingParams(airtime=1e-3, sigma=20e-6, sifs=10e-6, difs=0.0, ack=0.0)
    a2 = slot_duration(st, mild, [0.0, 0.0], "approx")
    e2 = slot_duration(st, mild, [0.0, 0.0], "exact")
    assert abs(e2 - a2) / a2 < 0.022


def test_single_user_share_equals_goodput():
    for tau in (0.05, 0.3, 0.9):
        st = state_of([tau])
        assert user_throughput(st, 0, 1e7) == pytest.approx(1e7, rel=1e-12)


def test_symmetric_users_equal_throughput():
    st = state_of([0.07] * 5)
    vals = [user_throughput(st, i, 2e7) for i in range(5)]
    assert max(vals) - min(vals) < 1e-6


def test_two_user_frozen_value():
    st = state_of([0.05, 0.05])
    s = user_throughput(st, 0, 1e7)
    assert s == pytest.approx(0.05 * 0.95 * 1e7 / (1.0 - 0.95 ** 2), rel=1e-12)
    assert s == pytest.approx(4871794.871794871, rel=1e-9)


def test_degenerate_all_idle_returns_zero():
    st = state_of([0.0, 0.0])
    assert user_throughput(st, 0, 1e7) == 0.0


def test_share_never_exceeds_goodput():
    rng = np.random.default_rng(2)
    for _ in range(50):
        n = int(rng.integers(1, 12))
        st = state_of(rng.uniform(0.0, 0.5, n))
        if st.c >= 1.0:
            continue
        gs = 10 ** rng.uniform(6, 8, n)
        for i in range(n):
            assert user_throughput(st, i, gs[i]) <= gs[i] * (1 + 1e-12)


def test_permutation_equivariance():
    rng = np.random.default_rng(9)
    taus = rng.uniform(0.01, 0.4, 6)
    gs = 10 ** rng.uniform(6, 8, 6)
    perm = rng.permutation(6)
    st = state_of(taus)
    st_p = state_of(taus[perm])
    for i in range(6):
        a = user_throughput(st, perm[i], gs[perm[i]], TIMING, np.zeros(6), "exact")
        b = user_throughput(st_p, i, gs[perm][i], TIMING, np.zeros(6), "exact")
        assert a == pytest.approx(b, rel=1e-12)


def test_aggregate_is_brute_sum():
    rng = np.random.default_rng(4)
    taus = rng.uniform(0.01, 0.3, 8)
    gs = 10 ** rng.uniform(6, 8, 8)
    st = state_of(taus)
    total = aggregate_throughput(st, gs)
    assert total == pytest.approx(sum(user_throughput(st, i, gs[i]) for i in range(8)))
    st1 = state_of([0.2])
    assert aggregate_throughput(st1, [1e7]) == pytest.approx(user_throughput(st1, 0, 1e7))
    sym = state_of([0.1] * 4)
    assert aggregate_throughput(sym, [1e7] * 4) == pytest.approx(
        4 * user_throughput(sym, 0, 1e7), rel=1e-12)


def test_timed_throughput_decays_with_idle_time():
    # with the idle cost in, a nearly idle network carries almost nothing
    busy = state_of([0.05] * 3)
    lazy = state_of([0.0005] * 3)
    s_busy = user_throughput(busy, 0, 1e7, TIMING, [0.0] * 3)
    s_lazy = user_throughput(lazy, 0, 1e7, TIMING, [0.0] * 3)
    assert s_lazy < s_busy
    # whereas the bare busy-time share hides the idle cost entirely
    assert user_throughput(lazy, 0, 1e7) >= user_throughput(busy, 0, 1e7)


def test_exact_vs_approx_agreement_band():
    rng = np.random.default_rng(14)
    for _ in range(30):
        n = int(rng.integers(1, 10))
        st = state_of(rng.uniform(0.005, 0.4, n))
        pers = rng.uniform(0.0, 0.6, n)
        a = slot_duration(st, TIMING, pers, "approx")
        e = slot_duration(st, TIMING, pers, "exact")
        bound = (TIMING.sigma / TIMING.airtime
                 + (TIMING.t_success - TIMING.airtime) / TIMING.airtime
                 + (TIMING.t_failure - TIMING.airtime) / TIMING.airtime)
        assert abs(e - a) / a <= bound
