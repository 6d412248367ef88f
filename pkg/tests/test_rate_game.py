"""Rate game: score sign identity, best-response cases, dynamics, squeeze."""

import numpy as np
import pytest

from wlangame import channel, markov
from wlangame.rate_game import (CertificationError, GameContext, a_value,
                                best_response, br_dynamics, certify_unique_ne,
                                stationary_at)
from wlangame.scenario import asymmetric, symmetric

HI_SNR = 60.0  # error-free for every admissible rate


def ctx_of(scenario):
    return scenario.context()


def frozen_objective(ctx, i, rate, prod_others, mode):
    """User i's own utility with the others' attempt rates frozen.

    mode 'full' keeps the busy-time denominator; 'non_atomic' treats it as
    constant, leaving tau(R) * G(R) up to a constant factor.
    """
    u = ctx.users[i]
    e = channel.packet_error_rate(u.link, rate, u.window.airtime)
    q = 1.0 - (1.0 - e) * prod_others
    tau = markov.gamma(q, u.mac.cw, u.mac.max_stage)
    g = channel.goodput(u.link, rate, u.window.airtime)
    if mode == "full":
        return tau * prod_others * g / (1.0 - (1.0 - tau) * prod_others)
    return tau * g


def prod_others_at(ctx, rates, i):
    state, _ = stationary_at(ctx, rates)
    prod = 1.0
    for j in range(ctx.n):
        if j != i:
            prod *= state.rho[j]
    return prod


def test_error_free_score_is_inverse_rate():
    ctx = ctx_of(symmetric(3, snr_db=HI_SNR))
    rates = np.full(3, 5e6)
    for r in (2e6, 1e7, 5e7):
        assert a_value(ctx, 0, r, rates) == pytest.approx(1.0 / r, rel=1e-9)
        assert a_value(ctx, 0, r, rates) > 0.0


def test_score_strictly_decreasing_on_grid():
    ctx = ctx_of(symmetric(4))
    rates = np.full(4, 8e6)
    state, _ = stationary_at(ctx, rates)
    grid = np.geomspace(1e6, 1e8, 200)
    for mode in ("non_atomic", "full"):
        vals = [a_value(ctx, 0, r, rates, mode=mode, state=state) for r in grid]
        assert all(b < a for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("mode", ["non_atomic", "full"])
def test_score_sign_matches_frozen_objective_slope(mode):
    rng = np.random.default_rng(31)
    hits = 0
    while hits < 50:
        n = int(rng.integers(2, 8))
        ctx = ctx_of(asymmetric(rng.uniform(5, 25, n), cw=int(rng.integers(8, 256))))
        rates = 10 ** rng.uniform(6.0, 7.8, n)
        i = int(rng.integers(0, n))
        r = float(rates[i])
        if channel.packet_error_rate(ctx.users[i].link, r,
                                     ctx.users[i].window.airtime) > 0.9:
            continue  # saturated: the objective is below double resolution
        prod = prod_others_at(ctx, rates, i)
        a = a_value(ctx, i, r, rates, mode=mode)
        h = 1e-4 * r
        up = frozen_objective(ctx, i, r + h, prod, mode)
        dn = frozen_objective(ctx, i, r - h, prod, mode)
        slope = (up - dn) / (2.0 * h)
        if abs(a) < 1e-10 or abs(slope) * r < 1e-9 * max(up, dn):
            continue  # too close to the peak for a meaningful sign
        assert np.sign(a) == np.sign(slope), (n, r, a, slope)
        hits += 1


def test_best_response_boundary_cases():
    # saturated even at the lowest admissible rate -> pinned to r_min
    low = ctx_of(symmetric(2, snr_db=-10.0))
    rates = np.full(2, 2e6)
    assert a_value(low, 0, low.users[0].window.r_min, rates) <= 0.0
    assert best_response(low, 0, rates) == low.users[0].window.r_min
    # error-free -> always worth raising the rate -> pinned to r_max
    hi = ctx_of(symmetric(2, snr_db=HI_SNR))
    assert best_response(hi, 0, np.full(2, 5e6)) == hi.users[0].window.r_max


def test_best_response_matches_grid_argmax():
    rng = np.random.default_rng(41)
    for _ in range(10):
        n = int(rng.integers(2, 6))
        ctx = ctx_of(asymmetric(rng.uniform(8, 22, n)))
        rates = 10 ** rng.uniform(6.2, 7.5, n)
        i = int(rng.integers(0, n))
        br = best_response(ctx, i, rates)
        prod = prod_others_at(ctx, rates, i)
        grid = np.linspace(ctx.users[i].window.r_min,
                           ctx.users[i].window.r_max, 10000)
        vals = [frozen_objective(ctx, i, r, prod, "non_atomic") for r in grid]
        g_star = grid[int(np.argmax(vals))]
        assert abs(br - g_star) <= grid[1] - grid[0]


def test_single_user_best_response_is_goodput_argmax():
    ctx = ctx_of(symmetric(1))
    br = best_response(ctx, 0, np.array([5e6]))
    r_star, _ = channel.goodput_max(ctx.users[0].link, ctx.users[0].window)
    assert br == pytest.approx(r_star, rel=1e-4)
    ne = certify_unique_ne(ctx)
    assert ne.rates[0] == pytest.approx(br, rel=1e-9)
    assert ne.gap == 0.0


def test_dynamics_single_user_is_one_best_response():
    ctx = ctx_of(symmetric(1))
    out = br_dynamics(ctx, ctx.r_min())
    assert out.converged
    assert out.rates[0] == pytest.approx(best_response(ctx, 0, out.rates), rel=1e-9)


def test_symmetric_equilibrium_is_symmetric():
    ctx = ctx_of(symmetric(6))
    ne = certify_unique_ne(ctx)
    spread = float(np.max(ne.rates) - np.min(ne.rates))
    assert spread <= 1e-8 * ctx.users[0].window.r_max


# Monotonicity of best responses holds only up to the second-order coupling
# that the frozen-others evaluation leaves in (observed wiggles ~5e-5
# relative near equilibrium); the slack below absorbs that skin.
MONOTONE_SLACK = 1e-4


def test_monotone_trajectories_from_extremes():
    ctx = ctx_of(symmetric(4, snr_db=12.0))
    slack = MONOTONE_SLACK * ctx.users[0].window.r_max
    _, hist_lo = br_dynamics(ctx, ctx.r_min(), trace=True)
    for a, b in zip(hist_lo, hist_lo[1:]):
        assert np.all(b >= a - slack)
    _, hist_hi = br_dynamics(ctx, ctx.r_max(), trace=True)
    for a, b in zip(hist_hi, hist_hi[1:]):
        assert np.all(b <= a + slack)


def test_squeeze_orders_arbitrary_start():
    ctx = ctx_of(asymmetric([9.0, 14.0, 19.0]))
    rng = np.random.default_rng(8)
    start = 10 ** rng.uniform(6.1, 7.9, 3)
    out_lo, lo = br_dynamics(ctx, ctx.r_min(), trace=True)
    out_mid, mid = br_dynamics(ctx, start, trace=True)
    out_hi, hi = br_dynamics(ctx, ctx.r_max(), trace=True)
    # transient ordering holds up to the same coupling skin (here ~1.2e-4)
    slack = 5 * MONOTONE_SLACK * ctx.users[0].window.r_max
    for k in range(min(len(lo), len(mid), len(hi))):
        assert np.all(lo[k] <= mid[k] + slack)
        assert np.all(mid[k] <= hi[k] + slack)
    # all three trajectories share one limit to the certification tolerance
    tol = 1e-6 * ctx.users[0].window.r_max
    assert np.max(np.abs(out_lo.rates - out_hi.rates)) <= tol
    assert np.max(np.abs(out_mid.rates - out_hi.rates)) <= tol


def test_certification_and_fixed_point():
    ctx = ctx_of(symmetric(10))
    ne = certify_unique_ne(ctx)
    tol = 1e-6 * ctx.users[0].window.r_max
    assert ne.gap <= tol
    for i in range(ctx.n):
        assert abs(best_response(ctx, i, ne.rates) - ne.rates[i]) <= tol


def test_certify_random_asymmetric_instances():
    rng = np.random.default_rng(77)
    for _ in range(5):
        n = int(rng.integers(2, 8))
        ctx = ctx_of(asymmetric(rng.uniform(5, 25, n)))
        ne = certify_unique_ne(ctx)
        assert ne.gap <= 1e-6 * ctx.users[0].window.r_max


def test_boundary_logic_at_equilibrium():
    # error-free: NE sits on r_max and the score is still nonnegative there
    ctx = ctx_of(symmetric(3, snr_db=HI_SNR))
    ne = certify_unique_ne(ctx)
    eps = 1e-9
    for i in range(3):
        assert ne.rates[i] == ctx.users[i].window.r_max
        assert a_value(ctx, i, ne.rates[i], ne.rates) >= -eps


def test_best_response_monotone_in_others():
    # raising any one opponent rate never lowers the best response
    rng = np.random.default_rng(13)
    for _ in range(12):
        n = int(rng.integers(2, 6))
        ctx = ctx_of(asymmetric(rng.uniform(8, 22, n)))
        rates = 10 ** rng.uniform(6.2, 7.3, n)
        i, j = rng.choice(n, 2, replace=False)
        base = best_response(ctx, int(i), rates)
        bumped = rates.copy()
        bumped[j] = min(bumped[j] * 1.5, ctx.users[j].window.r_max)
        higher = best_response(ctx, int(i), bumped)
        assert higher >= base - 1e-7 * ctx.users[int(i)].window.r_max


def test_schedule_validation_and_custom_order():
    ctx = ctx_of(symmetric(3))
    with pytest.raises(ValueError):
        br_dynamics(ctx, ctx.r_min(), schedule=[0, 1])  # never visits 2
    out = br_dynamics(ctx, ctx.r_min(), schedule=[2, 0, 1, 1])
    ref = br_dynamics(ctx, ctx.r_min())
    assert np.allclose(out.rates, ref.rates, rtol=0, atol=1e-5 * 1e8)


def test_context_airtime_mismatch_rejected():
    bad = symmetric(2)
    from wlangame.throughput import TimingParams
    with pytest.raises(ValueError):
        GameContext(bad.users, TimingParams(airtime=2e-3))
