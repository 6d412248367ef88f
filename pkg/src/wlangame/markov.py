"""Stationary state of the heterogeneous exponential-backoff chain.

Each user i is described by a contention window W_i (> 3) and a maximum
backoff stage m.  Given per-user packet error rates the coupled equations

    q_i = 1 - (1 - p_i)(1 - e_i)
    tau_i = Gamma_i(q_i)
    p_i = 1 - prod_{j != i} (1 - tau_j)

have a unique solution, found here by a nested bisection: for a candidate
all-idle probability c each q_i is the root of the strictly decreasing map
q -> (1-q)(1-Gamma_i(q)) = c (1-e_i), and c itself solves a scalar fixed
point.  A damped fixed-point iteration is kept as an independent cross-check.
"""

from dataclasses import dataclass, field

import numpy as np

from .backend import kernels as _k

DEFAULT_MAX_STAGE = 5  # 802.11-style CWmax = 2^5 CWmin

RESIDUAL_TOL = 1e-10


class SolverError(RuntimeError):
    """Stationary-state solver failed to reach its residual target."""


@dataclass(frozen=True)
class MacProfile:
    """Contention window and maximum backoff stage of one user."""

    cw: int
    max_stage: int = DEFAULT_MAX_STAGE

    def __post_init__(self):
        if int(self.cw) != self.cw or self.cw <= 3:
            raise ValueError(f"cw must be an integer > 3, got {self.cw}")
        if int(self.max_stage) != self.max_stage or self.max_stage < 1:
            raise ValueError(f"max_stage must be an integer >= 1, got {self.max_stage}")


@dataclass
class StationaryState:
    """Per-user fixed point (tau, p, q) plus derived quantities."""

    tau: np.ndarray        # per-slot attempt probabilities
    p: np.ndarray          # conditional collision probabilities
    q: np.ndarray          # per-attempt failure probabilities
    c: float               # all-idle probability prod_j (1 - tau_j)
    residual: float        # max defining-equation violation
    rho: np.ndarray = field(init=False)

    def __post_init__(self):
        self.rho = 1.0 - self.tau

    @property
    def n(self):
        return len(self.tau)


def gamma(q, cw, max_stage=DEFAULT_MAX_STAGE):
    """Attempt probability of a user with failure probability q."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    if cw < 1:
        raise ValueError(f"cw must be >= 1, got {cw}")
    return _k.gamma_tau(q, cw, max_stage)


def gamma_derivative(q, cw, max_stage=DEFAULT_MAX_STAGE):
    """Analytic d(gamma)/dq; non-positive on [0, 1]."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    if cw < 1:
        raise ValueError(f"cw must be >= 1, got {cw}")
    return _k.gamma_tau_slope(q, cw, max_stage)


def _unpack(macs, pers):
    w = np.asarray([mp.cw for mp in macs], dtype=np.int64)
    m = np.asarray([mp.max_stage for mp in macs], dtype=np.int64)
    e = np.asarray(pers, dtype=np.float64)
    if len(e) != len(w):
        raise ValueError(f"{len(w)} profiles but {len(e)} error rates")
    if np.any(e < 0.0) or np.any(e >= 1.0):
        raise ValueError("packet error rates must lie in [0, 1)")
    return w, m, e


def solve_stationary(macs, pers, max_outer=200):
    """Unique stationary state for the given profiles and error rates."""
    w, m, e = _unpack(macs, pers)
    tau, p, q, c, resid, _ = _k.solve_stationary(w, m, e, 1e-12, max_outer)
    if resid > RESIDUAL_TOL:
        raise SolverError(
            f"stationary solve stalled: residual {resid:.3e} > {RESIDUAL_TOL:.0e} "
            f"after {max_outer} outer bisections"
        )
    return StationaryState(tau=np.asarray(tau), p=np.asarray(p),
                           q=np.asarray(q), c=c, residual=resid)


def solve_stationary_damped(macs, pers, lam=0.5, step_tol=1e-13,
                            max_iters=500000, start="zero"):
    """Cross-check solver: damped iteration tau <- (1-lam) tau + lam T(tau)."""
    w, m, e = _unpack(macs, pers)
    if start not in ("zero", "gamma"):
        raise ValueError(f"start must be 'zero' or 'gamma', got {start!r}")
    tau, p, q, _ = _k.solve_damped(w, m, e, lam, step_tol, max_iters,
                                   1 if start == "gamma" else 0)
    tau = np.asarray(tau)
    c = float(np.prod(1.0 - tau))
    state = StationaryState(tau=tau, p=np.asarray(p), q=np.asarray(q),
                            c=c, residual=0.0)
    state.residual = residual(state, macs, pers)
    return state


def residual(state, macs, pers):
    """Maximum absolute violation of the three defining equations."""
    w, m, e = _unpack(macs, pers)
    if state.n != len(w):
        raise ValueError(f"state has {state.n} users, profiles have {len(w)}")
    rho = 1.0 - state.tau
    worst = 0.0
    for i in range(state.n):
        loo = 1.0
        for j in range(state.n):
            if j != i:
                loo *= rho[j]
        worst = max(
            worst,
            abs(state.q[i] - (1.0 - (1.0 - state.p[i]) * (1.0 - e[i]))),
            abs(state.tau[i] - _k.gamma_tau(state.q[i], w[i], m[i])),
            abs(state.p[i] - (1.0 - loo)),
        )
    return worst
