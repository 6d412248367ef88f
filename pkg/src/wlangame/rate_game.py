"""Rate-adaptation game under a fixed contention-window profile.

Every user picks a data rate in its window to maximize its own throughput.
The first-order score A_i(R_i) (goodput log-slope plus the collision-coupled
error term) is strictly decreasing in R_i, so the best response is either a
boundary rate or the bisection root of A_i.  Asynchronous best-response
dynamics converge to the unique equilibrium; running them from the all-min
and all-max rate vectors brackets it, which is used as a uniqueness
certificate.
"""

from dataclasses import dataclass, field

import numpy as np

from .backend import kernels as _k
from .channel import LinkParams, RateWindow, goodput
from .markov import MacProfile, solve_stationary
from .throughput import TimingParams, aggregate_throughput, user_throughput

DEFAULT_BR_REL_TOL = 1e-9        # bisection tolerance for the A_i root
DEFAULT_STEP_REL_TOL = 1e-6      # dynamics stop when sup step < tol * r_max
DEFAULT_MAX_ROUNDS = 10000


class ConvergenceError(RuntimeError):
    """Best-response dynamics exceeded the round budget."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class CertificationError(RuntimeError):
    """Two-sided squeeze did not collapse to a single profile."""

    def __init__(self, message, lower=None, upper=None, gap=None):
        super().__init__(message)
        self.lower = lower
        self.upper = upper
        self.gap = gap


@dataclass(frozen=True)
class UserProfile:
    """One user's medium-access and link configuration."""

    mac: MacProfile
    link: LinkParams
    window: RateWindow
    label: str = ""


@dataclass
class GameContext:
    """Player set plus the shared timing and evaluation conventions.

    non_atomic selects the large-population form of A_i (single-user games
    always use the exact form, where the approximation is meaningless).
    slot_mode picks the slot-duration formula used when reporting
    throughputs.
    """

    users: list
    timing: TimingParams
    non_atomic: bool = True
    slot_mode: str = "approx"

    def __post_init__(self):
        if not self.users:
            raise ValueError("need at least one user")
        for i, u in enumerate(self.users):
            if abs(u.window.airtime - self.timing.airtime) > 1e-12 * self.timing.airtime:
                raise ValueError(
                    f"users[{i}].window.airtime={u.window.airtime} differs from "
                    f"timing.airtime={self.timing.airtime}"
                )

    @property
    def n(self):
        return len(self.users)

    def with_cw(self, cw):
        """Copy of the context with every user's contention window replaced."""
        cws = [cw] * self.n if np.isscalar(cw) else list(cw)
        users = [
            UserProfile(MacProfile(int(cws[i]), u.mac.max_stage), u.link, u.window, u.label)
            for i, u in enumerate(self.users)
        ]
        return GameContext(users, self.timing, self.non_atomic, self.slot_mode)

    def r_min(self):
        return np.asarray([u.window.r_min for u in self.users])

    def r_max(self):
        return np.asarray([u.window.r_max for u in self.users])


@dataclass
class RateProfile:
    """A rate vector plus convergence metadata from the dynamics."""

    rates: np.ndarray
    converged: bool = True
    iterations: int = 0
    gap: float = 0.0  # sup-norm distance between the two squeeze limits

    def __post_init__(self):
        self.rates = np.asarray(self.rates, dtype=np.float64)


def _macs(ctx):
    return [u.mac for u in ctx.users]


def context_pers(ctx, rates):
    """Per-user packet error rates at the given rate vector."""
    return np.asarray([
        _k.per(u.link.snr_db, u.link.bandwidth_hz, rates[i], u.window.airtime,
               u.link.modulation.kind, u.link.modulation.order,
               u.link.modulation.alpha)
        for i, u in enumerate(ctx.users)
    ])


def stationary_at(ctx, rates):
    """Stationary state plus the error rates it was solved with."""
    pers = context_pers(ctx, rates)
    state = solve_stationary(_macs(ctx), pers)
    return state, pers


def profile_throughputs(ctx, rates, state=None, pers=None):
    """Real per-user throughputs (idle time included) at a rate profile."""
    if state is None:
        state, pers = stationary_at(ctx, rates)
    out = np.empty(ctx.n)
    for i, u in enumerate(ctx.users):
        g = goodput(u.link, rates[i], u.window.airtime)
        out[i] = user_throughput(state, i, g, ctx.timing, pers, ctx.slot_mode)
    return out


def profile_welfare(ctx, rates, state=None, pers=None):
    if state is None:
        state, pers = stationary_at(ctx, rates)
    gs = [goodput(u.link, rates[i], u.window.airtime) for i, u in enumerate(ctx.users)]
    return aggregate_throughput(state, gs, ctx.timing, pers, ctx.slot_mode)


def _prod_rho_others(state, i):
    prod = 1.0
    for j in range(state.n):
        if j != i:
            prod *= state.rho[j]
    return prod


def _mode_flag(ctx, mode):
    if mode is None:
        mode = "non_atomic" if ctx.non_atomic else "full"
    if mode not in ("non_atomic", "full"):
        raise ValueError(f"mode must be 'non_atomic' or 'full', got {mode!r}")
    # the large-population form is undefined for a single user
    if ctx.n == 1:
        return 1
    return 0 if mode == "non_atomic" else 1


def a_value(ctx, i, rate, rates, mode=None, state=None):
    """Throughput-slope score for user i at the candidate rate.

    Other users' attempt probabilities are frozen at the stationary state of
    the supplied profile (rates with entry i replaced by the candidate);
    user i's own failure and attempt probabilities are re-derived at the
    candidate rate.
    """
    u = ctx.users[i]
    if not u.window.r_min <= rate <= u.window.r_max:
        raise ValueError(f"rate {rate} outside window [{u.window.r_min}, {u.window.r_max}]")
    if state is None:
        probe = np.array(rates, dtype=np.float64)
        probe[i] = rate
        state, _ = stationary_at(ctx, probe)
    prod = _prod_rho_others(state, i)
    if prod >= 1.0 and ctx.n > 1:
        raise ValueError("degenerate all-idle state")
    return _k.a_value(rate, prod, u.mac.cw, u.mac.max_stage, u.link.snr_db,
                      u.link.bandwidth_hz, u.link.modulation.kind,
                      u.link.modulation.order, u.link.modulation.alpha,
                      u.window.airtime, _mode_flag(ctx, mode))


def best_response(ctx, i, rates, mode=None, rel_tol=DEFAULT_BR_REL_TOL):
    """Maximizer of user i's throughput given the others' current rates."""
    state, _ = stationary_at(ctx, np.asarray(rates, dtype=np.float64))
    return _best_response_at(ctx, i, state, mode, rel_tol)


def _best_response_at(ctx, i, state, mode=None, rel_tol=DEFAULT_BR_REL_TOL):
    u = ctx.users[i]
    prod = _prod_rho_others(state, i)
    return _k.br_root(prod, u.mac.cw, u.mac.max_stage, u.link.snr_db,
                      u.link.bandwidth_hz, u.link.modulation.kind,
                      u.link.modulation.order, u.link.modulation.alpha,
                      u.window.airtime, u.window.r_min, u.window.r_max,
                      rel_tol, _mode_flag(ctx, mode))


def _schedule_cycle(ctx, schedule):
    if schedule is None or schedule == "round_robin":
        return list(range(ctx.n))
    order = [int(i) for i in schedule]
    missing = set(range(ctx.n)) - set(order)
    if missing:
        raise ValueError(f"schedule never visits players {sorted(missing)}")
    return order


def br_dynamics(ctx, initial, schedule="round_robin", tol=None,
                max_rounds=DEFAULT_MAX_ROUNDS, trace=False):
    """Asynchronous best-response dynamics to the rate equilibrium.

    One round applies the best response once per schedule entry, each update
    seeing all earlier ones.  Stops when the sup-norm change over a full
    round drops below tol (default 1e-6 * max r_max).
    """
    rates = np.asarray(getattr(initial, "rates", initial), dtype=np.float64)
    if len(rates) != ctx.n:
        raise ValueError(f"initial profile has {len(rates)} entries for {ctx.n} users")
    order = _schedule_cycle(ctx, schedule)
    if tol is None:
        tol = DEFAULT_STEP_REL_TOL * float(np.max(ctx.r_max()))
    history = [rates.copy()] if trace else None
    for rnd in range(1, max_rounds + 1):
        step = 0.0
        for i in order:
            state, _ = stationary_at(ctx, rates)
            new_rate = _best_response_at(ctx, i, state)
            step = max(step, abs(new_rate - rates[i]))
            rates[i] = new_rate
            if trace:
                history.append(rates.copy())
        if step < tol:
            profile = RateProfile(rates, converged=True, iterations=rnd)
            if trace:
                return profile, history
            return profile
    raise ConvergenceError(
        f"best-response dynamics still moving after {max_rounds} rounds "
        f"(last sup step {step:.3e}, tol {tol:.3e})",
        trace=history,
    )


def certify_unique_ne(ctx, tol=None, max_rounds=DEFAULT_MAX_ROUNDS):
    """Two-sided squeeze: dynamics from all-min and all-max rates.

    The two limits bracket every trajectory; if they agree within tol the
    equilibrium is certified unique and their average is returned.
    """
    if tol is None:
        tol = DEFAULT_STEP_REL_TOL * float(np.max(ctx.r_max()))
    lower = br_dynamics(ctx, ctx.r_min(), tol=tol, max_rounds=max_rounds)
    upper = br_dynamics(ctx, ctx.r_max(), tol=tol, max_rounds=max_rounds)
    gap = float(np.max(np.abs(lower.rates - upper.rates)))
    if gap > tol:
        raise CertificationError(
            f"squeeze limits disagree: sup gap {gap:.3e} > tol {tol:.3e}",
            lower=lower, upper=upper, gap=gap,
        )
    rates = 0.5 * (lower.rates + upper.rates)
    return RateProfile(rates, converged=True,
                       iterations=lower.iterations + upper.iterations, gap=gap)
