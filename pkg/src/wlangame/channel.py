"""AWGN link model: modulation, bit/packet error rates and goodput.

Maps (SNR, modulation, rate, packet airtime) to error probabilities and the
goodput G(R) = (1 - e(R)) * R together with its finite-difference slope.
All functions are pure and safe for concurrent evaluation.
"""

import math
from dataclasses import dataclass

from .backend import MOD_DPSK, MOD_MQAM, kernels as _k

_QAM_ORDERS = (4, 16, 64, 256)


@dataclass(frozen=True)
class Modulation:
    """Square M-QAM (with amplitude scale alpha) or binary DPSK."""

    kind: int            # MOD_MQAM or MOD_DPSK
    order: int = 0       # constellation size M, M-QAM only
    alpha: float = 1.0   # dimensionless amplitude scale, M-QAM only

    def __post_init__(self):
        if self.kind == MOD_MQAM:
            if self.order not in _QAM_ORDERS:
                raise ValueError(f"QAM order must be one of {_QAM_ORDERS}, got {self.order}")
            if not self.alpha > 0.0:
                raise ValueError(f"alpha must be positive, got {self.alpha}")
        elif self.kind != MOD_DPSK:
            raise ValueError(f"unknown modulation kind {self.kind}")

    @classmethod
    def mqam(cls, order, alpha=1.0):
        return cls(MOD_MQAM, order, alpha)

    @classmethod
    def dpsk(cls):
        return cls(MOD_DPSK)


@dataclass(frozen=True)
class LinkParams:
    """Receiver-side link quality: SNR, unspread bandwidth, modulation."""

    snr_db: float         # dB
    bandwidth_hz: float   # Hz
    modulation: Modulation

    def __post_init__(self):
        if not self.bandwidth_hz > 0.0:
            raise ValueError(f"bandwidth_hz must be positive, got {self.bandwidth_hz}")
        if not math.isfinite(self.snr_db):
            raise ValueError(f"snr_db must be finite, got {self.snr_db}")


@dataclass(frozen=True)
class RateWindow:
    """Admissible rate range and the fixed packet transmission time."""

    r_min: float    # bits/s
    r_max: float    # bits/s
    airtime: float  # seconds per packet

    def __post_init__(self):
        if not 0.0 < self.r_min < self.r_max:
            raise ValueError(f"need 0 < r_min < r_max, got [{self.r_min}, {self.r_max}]")
        if not self.airtime > 0.0:
            raise ValueError(f"airtime must be positive, got {self.airtime}")
        if self.r_min * self.airtime < 1.0:
            raise ValueError(
                f"r_min*airtime = {self.r_min * self.airtime} < 1: packets below one bit"
            )


# Defaults used by scenario builders: 20 MHz channel, 1 ms packets, 1-100 Mbps.
DEFAULT_BANDWIDTH_HZ = 20e6
DEFAULT_AIRTIME_S = 1e-3
DEFAULT_R_MIN = 1e6
DEFAULT_R_MAX = 100e6


def _args(link):
    m = link.modulation
    return link.snr_db, link.bandwidth_hz, m.kind, m.order, m.alpha


def ebn0(link, rate):
    """Bit-energy-to-noise ratio at the given data rate (linear)."""
    if not rate > 0.0:
        raise ValueError(f"rate must be positive, got {rate}")
    return _k.ebn0(link.snr_db, link.bandwidth_hz, rate)


def bit_error_rate(link, rate):
    """BER at the given rate, clamped to [0, 1)."""
    if not rate > 0.0:
        raise ValueError(f"rate must be positive, got {rate}")
    snr, bw, kind, order, alpha = _args(link)
    return _k.ber(snr, bw, rate, kind, order, alpha)


def packet_error_rate(link, rate, airtime):
    """Probability that a rate*airtime-bit packet is corrupted, in [0, 1)."""
    if rate * airtime < 1.0:
        raise ValueError(f"rate*airtime = {rate * airtime} < 1 bit per packet")
    snr, bw, kind, order, alpha = _args(link)
    return _k.per(snr, bw, rate, airtime, kind, order, alpha)


def per_derivative(link, rate, airtime):
    """Central-difference slope of the packet error rate in the rate."""
    snr, bw, kind, order, alpha = _args(link)
    return _k.per_slope(snr, bw, rate, airtime, kind, order, alpha)


def goodput(link, rate, airtime):
    """Error-discounted rate (1 - e(R)) * R in bits/s."""
    snr, bw, kind, order, alpha = _args(link)
    return _k.goodput(snr, bw, rate, airtime, kind, order, alpha)


def goodput_derivative(link, rate, airtime):
    """Central-difference slope of the goodput in the rate."""
    snr, bw, kind, order, alpha = _args(link)
    return _k.goodput_slope(snr, bw, rate, airtime, kind, order, alpha)


def goodput_max(link, window, n_grid=4096):
    """Grid + local-refinement maximum of the goodput over the rate window."""
    lo, hi = window.r_min, window.r_max
    ratio = (hi / lo) ** (1.0 / (n_grid - 1))
    best_r, best_g = lo, goodput(link, lo, window.airtime)
    r = lo
    for _ in range(n_grid - 1):
        r *= ratio
        g = goodput(link, r, window.airtime)
        if g > best_g:
            best_r, best_g = r, g
    a = max(lo, best_r / ratio)
    b = min(hi, best_r * ratio)
    for _ in range(60):
        m1 = a + (b - a) / 3.0
        m2 = b - (b - a) / 3.0
        if goodput(link, m1, window.airtime) >= goodput(link, m2, window.airtime):
            b = m2
        else:
            a = m1
    r = 0.5 * (a + b)
    return r, goodput(link, r, window.airtime)
