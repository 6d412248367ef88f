"""Contention-window game played on top of the rate equilibrium.

For a common window W the utility of user i is its throughput at the rate
equilibrium under W.  The reactive min-matching of windows makes every
running-maximum point of that curve an equilibrium; the refinement keeps the
largest one shared by all users.  An analytic throughput-share bound turns
the open-ended scan into a finite one, and a deterministic round-based
message harness runs the distributed search that the refinement describes.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import goodput_max
from .rate_game import certify_unique_ne, profile_throughputs

DEFAULT_SCAN_CAP = 4096
_SOLVABLE_MIN_CW = 4  # the chain solver needs W > 3; smaller windows score 0


@dataclass(frozen=True)
class Message:
    """One broadcast on the search bus."""

    round: int
    sender: int
    kind: str            # StartSearch | IncreaseW | SearchStop
    payload: float = math.nan  # the sender's best W for SearchStop

    def record(self):
        payload = "" if math.isnan(self.payload) else repr(self.payload)
        return f"{self.round},{self.sender},{self.kind},{payload}"


@dataclass
class AgentState:
    """Per-player bookkeeping while searching the efficient window."""

    index: int
    eps: float = 0.0
    role: str = "follower"
    w: int = 0
    s_max: float = 0.0
    w_star: int = 0
    w_max: float = math.inf
    w_hat: set = field(default_factory=lambda: {0, 1})
    stopped: bool = False


@dataclass
class WHatSet:
    """Windows at which a user would not gain by dropping to a smaller one.

    Membership: W is in the set iff its utility is >= the utility of every
    smaller sampled W.  0 and 1 are always members (utility 0 there).
    """

    members: list
    curve: dict
    w_star: int

    @classmethod
    def from_curve(cls, curve):
        curve = dict(curve)
        curve.setdefault(0, 0.0)
        curve.setdefault(1, 0.0)
        members = []
        best = -math.inf
        best_w = 0
        for w in sorted(curve):
            s = curve[w]
            if s >= best:
                members.append(w)
            if s > best:
                best = s
                best_w = w
        return cls(members=members, curve=curve, w_star=best_w)

    def __contains__(self, w):
        return w in set(self.members)

    def largest_below(self, w):
        """Largest member strictly smaller than w."""
        below = [m for m in self.members if m < w]
        if not below:
            raise ValueError(f"no member below {w}")
        return max(below)


@dataclass
class EquilibriumReport:
    """Refined window, the rate equilibrium there, and the scan evidence."""

    w_star: int
    equilibria: list            # sorted common members
    rates: np.ndarray           # rate equilibrium at w_star (None if degenerate)
    throughputs: np.ndarray     # per-user utility at w_star
    w_hats: list                # per-user WHatSet
    stop_w: int                 # last scanned window
    step: int
    poa: float = math.nan       # filled in by the optimum oracle when asked


def _t_share(x, n):
    # (1-x)^(n-1) x / (1 - (1-x)^n), the per-user busy-time share when every
    # user attempts with probability x; decreasing from 1/n to 0 on (0, 1]
    if x <= 0.0:
        return 1.0 / n
    return (1.0 - x) ** (n - 1) * x / -math.expm1(n * math.log1p(-x))


def search_bound(s_current, g_max, n):
    """Smallest window beyond which utility cannot beat s_current.

    Solves (1-x)^(n-1) x / (1-(1-x)^n) = s_current/g_max for x and returns
    ceil(2/x).  Returns inf when the ratio reaches the 1/n supremum.
    """
    if n < 2:
        raise ValueError("search bound needs at least two users")
    if not 0.0 < s_current <= g_max:
        raise ValueError(f"need 0 < s_current <= g_max, got {s_current} vs {g_max}")
    ratio = s_current / g_max
    if ratio >= 1.0 / n:
        return math.inf
    lo, hi = 0.0, 1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if _t_share(mid, n) > ratio:
            lo = mid
        else:
            hi = mid
    raw = 2.0 / (0.5 * (lo + hi))
    nearest = round(raw)
    if abs(raw - nearest) < 1e-6:  # analytic roots land on integers
        return int(nearest)
    return int(math.ceil(raw))


def utility_at(ctx, cws, cache=None):
    """Per-user throughput at the rate equilibrium under a window profile."""
    cws = [int(c) for c in (cws if not np.isscalar(cws) else [cws] * ctx.n)]
    sub = ctx.with_cw(cws)
    ne = certify_unique_ne(sub)
    return profile_throughputs(sub, ne.rates), ne.rates


def utility_hat(ctx, w, cache=None):
    """Utility vector when everyone runs window w; 0 below the solvable range."""
    w = int(w)
    if w < _SOLVABLE_MIN_CW:
        return np.zeros(ctx.n)
    if cache is not None and w in cache:
        return cache[w][0]
    thr, rates = utility_at(ctx, w)
    if cache is not None:
        cache[w] = (thr, rates)
    return thr


class _Scan:
    """Shared bounded-scan bookkeeping for the refinement and the harness."""

    def __init__(self, ctx, step, scan_cap, measure=None, cache=None):
        if step < 1 or int(step) != step:
            raise ValueError(f"step must be a positive integer, got {step}")
        self.ctx = ctx
        self.step = int(step)
        self.scan_cap = int(scan_cap)
        self.cache = {} if cache is None else cache
        self.measure = measure or (lambda w: utility_hat(ctx, w, self.cache))
        self.g_max = np.asarray(
            [goodput_max(u.link, u.window)[1] for u in ctx.users]
        )
        self.curves = [dict() for _ in range(ctx.n)]
        self.s_max = np.zeros(ctx.n)
        self.w_star = np.zeros(ctx.n, dtype=np.int64)
        self.w_max = np.full(ctx.n, math.inf)

    def visit(self, w):
        """Measure one window; returns the indices whose bound tripped."""
        utilities = np.asarray(self.measure(w))
        tripped = []
        for i in range(self.ctx.n):
            s = float(utilities[i])
            self.curves[i][w] = s
            if s > self.s_max[i]:
                self.s_max[i] = s
                self.w_star[i] = w
                if self.ctx.n >= 2:
                    self.w_max[i] = search_bound(s, self.g_max[i], self.ctx.n)
            if w >= min(self.w_max[i], self.scan_cap):
                tripped.append(i)
        return tripped

    def grid(self):
        w = 0
        while True:
            w += self.step
            yield w

    def w_hats(self):
        return [WHatSet.from_curve(c) for c in self.curves]


def build_w_hat(ctx, i, scan_limit, step=1, cache=None):
    """Scan utilities up to scan_limit and keep user i's running-max windows."""
    scan = _Scan(ctx, step, scan_limit, cache=cache)
    for w in scan.grid():
        if w > scan_limit:
            break
        scan.visit(w)
    return scan.w_hats()[i]


def refined_equilibrium(ctx, step=1, scan_cap=DEFAULT_SCAN_CAP, cache=None):
    """Bounded ascending scan, then the largest window everyone would keep.

    The scan stops once the current window passes some user's running
    bound; the refined window is the largest member common to all users'
    running-maximum sets.
    """
    scan = _Scan(ctx, step, scan_cap, cache=cache)
    stop_w = 0
    for w in scan.grid():
        stop_w = w
        if scan.visit(w):
            break
    w_hats = scan.w_hats()
    common = set(w_hats[0].members)
    for wh in w_hats[1:]:
        common &= set(wh.members)
    equilibria = sorted(common)
    w_star = max(equilibria)
    if w_star >= _SOLVABLE_MIN_CW:
        thr, rates = scan.cache.get(w_star) or (None, None)
        if thr is None:
            thr, rates = utility_at(ctx, w_star)
    else:
        thr, rates = np.zeros(ctx.n), None
    return EquilibriumReport(w_star=w_star, equilibria=equilibria, rates=rates,
                             throughputs=thr, w_hats=w_hats, stop_w=stop_w,
                             step=scan.step)


def tft_mac_reaction(observed_ws, own_w):
    """Window reaction: adopt the smallest observed window, never raise."""
    return min(list(observed_ws) + [own_w])


def is_system_equilibrium(ctx, w, step=1, scan_cap=DEFAULT_SCAN_CAP, cache=None):
    """True iff w is a running-max window for every user in the bounded scan."""
    report = refined_equilibrium(ctx, step=step, scan_cap=scan_cap, cache=cache)
    return w in report.equilibria


def settle_down(initial_ws, w_hats, eps=0.0, max_rounds=100000):
    """Reactive descent through the per-user sets until windows agree.

    Each round every agent whose window exceeds the observed minimum by more
    than eps steps down to its next-smaller member.  Ends at the largest
    common member at or below the start.
    """
    ws = [int(w) for w in initial_ws]
    rounds = 0
    while True:
        rounds += 1
        if rounds > max_rounds:
            raise RuntimeError("settle-down failed to terminate")
        mn = min(ws)
        moved = False
        nxt = list(ws)
        for i, w in enumerate(ws):
            if mn < w - eps:
                nxt[i] = w_hats[i].largest_below(w)
                moved = True
        ws = nxt
        if not moved:
            return ws, rounds


@dataclass
class Algorithm1Result:
    final_ws: list
    w_star: int
    trace: list
    agents: list
    search_rounds: int
    settle_rounds: int

    def trace_records(self):
        """Line-delimited trace: round,sender,kind,payload."""
        return [m.record() for m in self.trace]


def algorithm1_run(ctx, step=1, eps=0.0, coordinator=0, measurement="analytic",
                   scan_cap=DEFAULT_SCAN_CAP, cache=None):
    """Distributed efficient-window search on a deterministic round bus.

    Loop 1: the coordinator paces synchronized window increments; every agent
    tracks its running best utility, the matching window, and its search
    bound, and broadcasts SearchStop when the scan passes that bound.
    Loop 2: reactive settle-down through the recorded sets.  measurement may
    be "analytic", or a callable w -> per-user utility vector (used to inject
    empirical or scripted utilities).
    """
    if callable(measurement):
        measure = measurement
    elif measurement == "analytic":
        measure = None
    else:
        raise ValueError(f"measurement must be 'analytic' or callable, got {measurement!r}")
    scan = _Scan(ctx, step, scan_cap, measure=measure, cache=cache)
    agents = [AgentState(index=i, eps=eps) for i in range(ctx.n)]
    agents[coordinator].role = "coordinator"
    trace = [Message(0, coordinator, "StartSearch")]
    rnd = 0
    stopped = False
    for w in scan.grid():
        rnd += 1
        tripped = scan.visit(w)
        for agent in agents:
            agent.w = w
            i = agent.index
            if scan.w_star[i] == w:  # this window improved agent i's best
                agent.s_max = float(scan.s_max[i])
                agent.w_star = w
                agent.w_max = float(scan.w_max[i])
                agent.w_hat.add(w)
        if tripped:
            for i in tripped:
                agents[i].w = agents[i].w_star
                agents[i].stopped = True
                trace.append(Message(rnd, i, "SearchStop", float(agents[i].w_star)))
            stopped = True
            break
        trace.append(Message(rnd, coordinator, "IncreaseW"))
    if not stopped:
        raise RuntimeError("search loop left without a SearchStop")
    w_hats = [WHatSet.from_curve(scan.curves[i]) for i in range(ctx.n)]
    final_ws, settle_rounds = settle_down([a.w for a in agents], w_hats, eps)
    spread = max(final_ws) - min(final_ws)
    if spread > eps:
        raise RuntimeError(
            f"agents settled at different windows {final_ws} (eps={eps}); "
            f"trace: {[m.record() for m in trace]}"
        )
    for agent, w in zip(agents, final_ws):
        agent.w = w
    return Algorithm1Result(final_ws=final_ws, w_star=min(final_ws), trace=trace,
                            agents=agents, search_rounds=rnd,
                            settle_rounds=settle_rounds)
