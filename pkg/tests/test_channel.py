"""Link-model tests: frozen values, formula reductions, shape properties."""

import math

import mpmath
import numpy as np
import pytest

from wlangame import channel
from wlangame.channel import LinkParams, Modulation, RateWindow

QAM64 = Modulation.mqam(64)
DEFAULT_LINK = LinkParams(15.0, 20e6, QAM64)
T = 1e-3


def test_modulation_validation():
    with pytest.raises(ValueError):
        Modulation.mqam(8)
    with pytest.raises(ValueError):
        Modulation.mqam(64, alpha=0.0)
    assert Modulation.mqam(256).order == 256
    assert Modulation.dpsk().order == 0


def test_rate_window_validation():
    with pytest.raises(ValueError):
        RateWindow(2e6, 1e6, T)
    with pytest.raises(ValueError):
        RateWindow(100.0, 1e6, T)  # under one bit per packet
    RateWindow(1e6, 1e8, T)


def test_ebn0_trivial_cases():
    assert channel.ebn0(LinkParams(0.0, 1e6, QAM64), 1e6) == pytest.approx(1.0)
    link = LinkParams(15.0, 2e7, QAM64)
    assert channel.ebn0(link, 2e7) == pytest.approx(10.0 ** 1.5)
    # direct formula evaluation cross-checked by hand: 10^1.5 * 2
    assert channel.ebn0(link, 1e7) == pytest.approx(63.24555320336759, rel=1e-12)
    with pytest.raises(ValueError):
        channel.ebn0(link, 0.0)


def test_qam4_reduces_to_2q():
    # M=4, alpha=1: BER = 2 Q(sqrt(2 Eb/N0))
    link = LinkParams(3.0, 1e6, Modulation.mqam(4))
    rate = 0.7e6
    g = channel.ebn0(link, rate)
    expected = 2.0 * 0.5 * math.erfc(math.sqrt(2.0 * g) / math.sqrt(2.0))
    assert channel.bit_error_rate(link, rate) == pytest.approx(expected, rel=1e-12)


def test_ber_vanishes_at_high_ebn0():
    link = LinkParams(40.0, 20e6, QAM64)
    assert channel.bit_error_rate(link, 1e6) == 0.0


def test_dpsk_closed_form():
    # Eb/N0 = 1 at 0 dB and rate = bandwidth
    link = LinkParams(0.0, 1e6, Modulation.dpsk())
    assert channel.bit_error_rate(link, 1e6) == pytest.approx(0.5 * math.exp(-1.0), rel=1e-12)


def test_ber_clamped_below_one():
    # 16-QAM prefactor is 3; at terrible SNR the raw formula would exceed 1
    link = LinkParams(-30.0, 1e6, Modulation.mqam(16))
    b = channel.bit_error_rate(link, 1e8)
    assert 0.0 <= b < 1.0


def test_per_error_free_channel():
    link = LinkParams(60.0, 20e6, QAM64)
    assert channel.packet_error_rate(link, 1e6, T) == 0.0


def test_per_single_bit_packet_equals_ber():
    link = LinkParams(8.0, 1e6, Modulation.dpsk())
    rate = 1e3
    airtime = 1e-3  # exactly one bit
    assert channel.packet_error_rate(link, rate, airtime) == pytest.approx(
        channel.bit_error_rate(link, rate), rel=1e-12)


def test_per_frozen_high_precision_value():
    # independent oracle: 1 - (1 - 1e-5)^12000 at 50 digits
    mpmath.mp.dps = 50
    expected = float(1 - (1 - mpmath.mpf("1e-5")) ** 12000)
    got = -math.expm1(12000 * math.log1p(-1e-5))
    assert got == pytest.approx(expected, rel=1e-12)
    assert got == pytest.approx(0.11308009543849257, rel=1e-12)
    # the implementation reproduces it through a link whose BER is 1e-5:
    # DPSK with Eb/N0 = ln(1/2e-5) has BER exactly 1e-5
    g = math.log(0.5 / 1e-5)
    snr_db = 10.0 * math.log10(g)  # bandwidth == rate
    link = LinkParams(snr_db, 12e6, Modulation.dpsk())
    e = channel.packet_error_rate(link, 12e6, T)
    assert e == pytest.approx(expected, rel=1e-9)


def test_per_always_in_unit_interval():
    rng = np.random.default_rng(3)
    for _ in range(200):
        link = LinkParams(rng.uniform(-10, 40), 20e6,
                          Modulation.mqam(int(rng.choice([4, 16, 64, 256]))))
        rate = 10 ** rng.uniform(4, 9)
        e = channel.packet_error_rate(link, rate, T)
        assert 0.0 <= e < 1.0


def test_goodput_linear_when_error_free():
    link = LinkParams(60.0, 20e6, QAM64)
    for rate in (1e6, 5e6, 2e7):
        assert channel.goodput(link, rate, T) == pytest.approx(rate)
        assert channel.goodput_derivative(link, rate, T) == pytest.approx(1.0, rel=1e-9)


def test_goodput_collapses_at_saturated_rates():
    assert channel.goodput(DEFAULT_LINK, 1e8, T) < 1.0  # bits/s, essentially zero


GRID = np.geomspace(1e6, 1e8, 1000)


def test_per_nondecreasing_on_grid():
    es = [channel.packet_error_rate(DEFAULT_LINK, r, T) for r in GRID]
    assert all(b >= a - 1e-15 for a, b in zip(es, es[1:]))


def test_per_slope_positive_and_nondecreasing_where_meaningful():
    # the slope grows on the convex branch (below the ~0.57 inflection) and
    # must stay positive until the packet error rate saturates
    slopes_all = []
    slopes_convex = []
    for r in GRID:
        e = channel.packet_error_rate(DEFAULT_LINK, r, T)
        if 1e-12 < e < 0.999:
            s = channel.per_derivative(DEFAULT_LINK, r, T)
            slopes_all.append(s)
            if e < 0.5:
                slopes_convex.append(s)
    assert all(s > 0.0 for s in slopes_all)
    assert all(b >= a * (1.0 - 1e-6)
               for a, b in zip(slopes_convex, slopes_convex[1:]))


def test_goodput_concavity_on_grid():
    # uniform grid, restricted to the convex branch of the error curve; the
    # saturated tail decays to zero convexly, where concavity cannot hold
    rs = np.linspace(1e6, 1e8, 1000)
    es = np.array([channel.packet_error_rate(DEFAULT_LINK, r, T) for r in rs])
    gs = np.array([channel.goodput(DEFAULT_LINK, r, T) for r in rs])
    second = gs[2:] - 2.0 * gs[1:-1] + gs[:-2]
    mask = es[1:-1] < 0.5
    assert np.max(second[mask]) <= 1e-9 * np.max(gs)


def test_goodput_unimodal_with_interior_peak():
    # dense scan: rises to a single interior maximizer, then falls
    rs = np.geomspace(1e6, 1e8, 10000)
    gs = np.array([channel.goodput(DEFAULT_LINK, r, T) for r in rs])
    k = int(np.argmax(gs))
    assert 0 < k < len(rs) - 1
    rises = np.flatnonzero(np.diff(gs) > 1e-9 * gs[:-1].max())
    assert rises.size == 0 or rises.max() < k  # no rise after the peak
    window = RateWindow(1e6, 1e8, T)
    r_star, g_star = channel.goodput_max(DEFAULT_LINK, window)
    assert abs(r_star - rs[k]) <= rs[k] * 2e-3
    assert g_star >= gs[k] * (1.0 - 1e-9)


def test_dpsk_per_slope_matches_analytic():
    # closed-form derivative for DPSK: p = exp(-K/R)/2, e = 1 - (1-p)^(RT)
    link = LinkParams(9.0, 5e6, Modulation.dpsk())
    K = 10.0 ** 0.9 * 5e6

    def analytic(rate):
        p = 0.5 * math.exp(-K / rate)
        surv = math.exp(rate * T * math.log1p(-p))
        dp = p * K / rate ** 2
        dlog = T * math.log1p(-p) + rate * T * (-dp / (1.0 - p))
        return -surv * dlog

    for rate in (1e6, 2e6, 4e6, 8e6):
        fd = channel.per_derivative(link, rate, T)
        assert fd == pytest.approx(analytic(rate), rel=1e-4)
