"""Per-user effective throughput and virtual-slot duration accounting."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TimingParams:
    """Slot-type durations; the busy-slot overheads are small next to airtime."""

    airtime: float        # packet transmission time T, seconds
    sigma: float = 20e-6  # empty-slot duration
    sifs: float = 10e-6
    difs: float = 50e-6
    ack: float = 0.0      # ACK airtime, absorbed into the success overhead

    def __post_init__(self):
        if not self.airtime > 0.0:
            raise ValueError(f"airtime must be positive, got {self.airtime}")
        for name in ("sigma", "sifs", "difs", "ack"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def t_success(self):
        return self.airtime + self.sifs + self.ack + self.difs

    @property
    def t_failure(self):
        return self.airtime + self.sifs


def _idle_and_loo(state):
    rho = state.rho
    idle = float(np.prod(rho))
    n = len(rho)
    loo = np.empty(n)
    acc = 1.0
    for i in range(n):
        loo[i] = acc
        acc *= rho[i]
    acc = 1.0
    for i in range(n - 1, -1, -1):
        loo[i] *= acc
        acc *= rho[i]
    return idle, loo


def slot_duration(state, timing, pers, mode="approx"):
    """Average virtual-slot duration.

    approx: (1 - prod rho) * T + (prod rho) * sigma, keeping the idle term.
    exact:  mutually exclusive slot types (idle / per-user success /
            per-user channel error / collision) weighted by t_success and
            t_failure.  The collision probability is the complement of the
            idle and single-transmitter events, so the weights sum to one.
    """
    idle, loo = _idle_and_loo(state)
    tau = state.tau
    if mode == "approx":
        return (1.0 - idle) * timing.airtime + idle * timing.sigma
    if mode != "exact":
        raise ValueError(f"mode must be 'approx' or 'exact', got {mode!r}")
    pers = np.asarray(pers, dtype=np.float64)
    single = tau * loo                       # exactly user i transmits
    p_succ = single * (1.0 - pers)
    p_err = single * pers
    p_coll = 1.0 - idle - float(np.sum(single))
    if p_coll < 0.0:  # rounding guard
        p_coll = 0.0
    return (idle * timing.sigma
            + float(np.sum(p_succ)) * timing.t_success
            + (float(np.sum(p_err)) + p_coll) * timing.t_failure)


def user_throughput(state, i, goodput_i, timing=None, pers=None, mode="approx"):
    """Effective throughput of user i in bits/s.

    Without timing this is the busy-time share
    (1 - rho_i) prod_{j != i} rho_j * G_i / (1 - prod_j rho_j), which ignores
    the idle-slot cost.  With timing, the successful-slot probability is
    converted to bits per second of real time using slot_duration(mode); this
    is the form in which long backoffs actually hurt.
    """
    idle, loo = _idle_and_loo(state)
    num = state.tau[i] * loo[i] * goodput_i
    if timing is None:
        if idle >= 1.0:
            return 0.0  # degenerate: nobody ever transmits
        return num / (1.0 - idle)
    if mode == "exact" and pers is None:
        raise ValueError("exact mode needs the per-user error rates")
    t_slot = slot_duration(state, timing, pers, mode)
    return num * timing.airtime / t_slot


def aggregate_throughput(state, goodputs, timing=None, pers=None, mode="approx"):
    """Social welfare: sum of user throughputs."""
    return float(sum(
        user_throughput(state, i, goodputs[i], timing, pers, mode)
        for i in range(state.n)
    ))
