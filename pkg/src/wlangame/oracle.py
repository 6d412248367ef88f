"""Brute-force optimization oracles: social optimum, PoA, grid cross-checks.

Everything here deliberately avoids the game-side solution path: welfare is
evaluated on the damped fixed-point solver, optima come from grid scans,
golden-section and coordinate ascent, and the refinement cross-check
re-emulates the bounded scan from scratch.  Deterministic given its inputs.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import goodput, goodput_max
from .markov import solve_stationary_damped
from .mac_game import WHatSet, search_bound, utility_hat
from .rate_game import certify_unique_ne, context_pers, profile_throughputs
from .throughput import user_throughput

DEFAULT_MULTI_STARTS = 5
DEFAULT_W_CAP = 2000
_REL_TOL = 1e-6


class DegenerateEquilibriumError(RuntimeError):
    """Equilibrium welfare is zero; the anarchy ratio is undefined."""


@dataclass
class OptimumReport:
    """Best (window, rates) found, with a probe trace for auditability."""

    w_opt: int
    rates_opt: np.ndarray
    welfare_opt: float
    trace: dict = field(default_factory=dict)


@dataclass
class PoAReport:
    poa: float
    welfare_opt: float
    welfare_eq: float
    level: str
    optimum: OptimumReport = None


def _welfare(ctx, cws, rates):
    """Welfare via the damped solver; independent of the bisection path."""
    sub = ctx.with_cw(cws)
    pers = context_pers(sub, rates)
    state = solve_stationary_damped([u.mac for u in sub.users], pers)
    total = 0.0
    for i, u in enumerate(sub.users):
        g = goodput(u.link, rates[i], u.window.airtime)
        total += user_throughput(state, i, g, sub.timing, pers, sub.slot_mode)
    return total


def _is_symmetric(ctx):
    first = (ctx.users[0].mac, ctx.users[0].link, ctx.users[0].window)
    return all((u.mac, u.link, u.window) == first for u in ctx.users[1:])


def _log_grid(lo, hi, points):
    ratio = (hi / lo) ** (1.0 / (points - 1))
    out = np.empty(points)
    r = lo
    for i in range(points):
        out[i] = r
        r *= ratio
    out[-1] = hi
    return out


def _best_common_rate(ctx, cws, grid_points=129):
    """Symmetric welfare maximizer over a common rate: grid then ternary."""
    lo = max(u.window.r_min for u in ctx.users)
    hi = min(u.window.r_max for u in ctx.users)
    grid = _log_grid(lo, hi, grid_points)
    vals = [_welfare(ctx, cws, np.full(ctx.n, r)) for r in grid]
    k = int(np.argmax(vals))
    a = grid[max(0, k - 1)]
    b = grid[min(len(grid) - 1, k + 1)]
    for _ in range(60):
        m1 = a + (b - a) / 3.0
        m2 = b - (b - a) / 3.0
        w1 = _welfare(ctx, cws, np.full(ctx.n, m1))
        w2 = _welfare(ctx, cws, np.full(ctx.n, m2))
        if w1 >= w2:  # ties move left, away from the zero-goodput plateau
            b = m2
        else:
            a = m1
    r = 0.5 * (a + b)
    return np.full(ctx.n, r), _welfare(ctx, cws, np.full(ctx.n, r))


def _line_search(ctx, cws, rates, i, grid_points=33):
    lo, hi = ctx.users[i].window.r_min, ctx.users[i].window.r_max
    grid = _log_grid(lo, hi, grid_points)
    probe = rates.copy()
    best_v = -1.0
    best_r = rates[i]
    for r in grid:
        probe[i] = r
        v = _welfare(ctx, cws, probe)
        if v > best_v:
            best_v, best_r = v, r
    ratio = (hi / lo) ** (1.0 / (grid_points - 1))
    a = max(lo, best_r / ratio)
    b = min(hi, best_r * ratio)
    for _ in range(40):
        m1 = a + (b - a) / 3.0
        m2 = b - (b - a) / 3.0
        probe[i] = m1
        w1 = _welfare(ctx, cws, probe)
        probe[i] = m2
        w2 = _welfare(ctx, cws, probe)
        if w1 >= w2:
            b = m2
        else:
            a = m1
    probe[i] = 0.5 * (a + b)
    return probe[i], _welfare(ctx, cws, probe)


def _coordinate_ascent(ctx, cws, start, max_sweeps=30):
    rates = np.asarray(start, dtype=np.float64).copy()
    best = _welfare(ctx, cws, rates)
    sweeps = 0
    for _ in range(max_sweeps):
        sweeps += 1
        before = best
        for i in range(ctx.n):
            rates[i], best = _line_search(ctx, cws, rates, i)
        if best - before <= _REL_TOL * max(best, 1.0):
            break
    return rates, best, sweeps


def _starts(ctx, multi_starts, rng, hints):
    starts = [np.asarray(h, dtype=np.float64) for h in hints if h is not None]
    argmax = np.asarray([goodput_max(u.link, u.window)[0] for u in ctx.users])
    starts.append(argmax)
    starts.append(ctx.r_min().astype(np.float64))
    starts.append(ctx.r_max().astype(np.float64))
    while len(starts) < multi_starts:
        u = rng.random(ctx.n)
        starts.append(ctx.r_min() * (ctx.r_max() / ctx.r_min()) ** u)
    keep = max(multi_starts, len([h for h in hints if h is not None]))
    return starts[:keep]


def rate_optimum(ctx, multi_starts=DEFAULT_MULTI_STARTS, seed=0, hints=()):
    """Welfare maximum over rates at the context's own window profile."""
    cws = [u.mac.cw for u in ctx.users]
    trace = {"starts": 0, "sweeps": 0, "symmetric": _is_symmetric(ctx)}
    if trace["symmetric"]:
        rates, best = _best_common_rate(ctx, cws)
        rates, best = _perturb_check(ctx, cws, rates, best, trace)
        trace["starts"] = 1
    else:
        rng = np.random.default_rng(seed)
        rates, best = None, -1.0
        for start in _starts(ctx, multi_starts, rng, list(hints)):
            r, v, sweeps = _coordinate_ascent(ctx, cws, start)
            trace["starts"] += 1
            trace["sweeps"] += sweeps
            if v > best:
                rates, best = r, v
    for h in hints:
        if h is not None:
            best = max(best, _welfare(ctx, cws, np.asarray(h)))
    return OptimumReport(w_opt=int(cws[0]), rates_opt=rates, welfare_opt=best,
                         trace=trace)


def _perturb_check(ctx, cws, rates, best, trace, rel=1e-3):
    """Verify the symmetric optimum against single-user perturbations."""
    improved = False
    for i in range(ctx.n):
        for sgn in (-1.0, 1.0):
            probe = rates.copy()
            probe[i] = min(max(probe[i] * (1.0 + sgn * rel),
                               ctx.users[i].window.r_min),
                           ctx.users[i].window.r_max)
            if _welfare(ctx, cws, probe) > best * (1.0 + 1e-9):
                improved = True
    trace["symmetry_perturbation_ok"] = not improved
    if improved:  # symmetry assumption failed; fall back to coordinate ascent
        rates, best, sweeps = _coordinate_ascent(ctx, cws, rates)
        trace["sweeps"] = trace.get("sweeps", 0) + sweeps
    return rates, best


def _w_grid(lo, hi):
    ws = []
    w = lo
    while w <= hi:
        ws.append(w)
        w += max(1, w // 16)
    if ws[-1] != hi:
        ws.append(hi)
    return ws


def social_optimum(ctx, w_values=None, multi_starts=DEFAULT_MULTI_STARTS,
                   seed=0, w_cap=DEFAULT_W_CAP, hints=()):
    """Joint (window, rates) welfare maximum.

    With no explicit w_values, scans windows on a coarsening grid, keeps a
    running stop bound at 4x the throughput-share bound, then refines the
    winning window with unit steps.  Symmetric scenarios optimize a common
    rate (checked by perturbation); otherwise multi-start coordinate ascent.
    """
    symmetric = _is_symmetric(ctx)
    rng = np.random.default_rng(seed)
    trace = {"symmetric": symmetric, "probes": 0, "starts": 0}

    def eval_w(w, warm=None, full=False):
        if symmetric:
            rates, best = _best_common_rate(ctx, [w] * ctx.n)
        else:
            starts = [] if warm is None else [warm]
            if full:
                starts = _starts(ctx, multi_starts, rng, starts + list(hints))
            elif warm is None:
                starts = _starts(ctx, 2, rng, list(hints))
            rates, best = None, -1.0
            for start in starts:
                r, v, sweeps = _coordinate_ascent(ctx, [w] * ctx.n, start)
                trace["starts"] += 1
                if v > best:
                    rates, best = r, v
        trace["probes"] += 1
        return rates, best

    best_w, best_rates, best_val = None, None, -1.0
    stop = None
    if w_values is not None:
        candidates = [int(w) for w in w_values]
        for w in candidates:
            rates, val = eval_w(w, warm=best_rates, full=True)
            if val > best_val:
                best_w, best_rates, best_val = w, rates, val
    else:
        g_maxes = np.asarray([goodput_max(u.link, u.window)[1] for u in ctx.users])
        stop = w_cap
        warm = None
        coarse = []
        w = 4
        while w <= stop:
            rates, val = eval_w(w, warm=warm)
            warm = rates
            coarse.append((w, rates, val))
            if val > best_val:
                best_w, best_rates, best_val = w, rates, val
                if ctx.n >= 2:
                    per_user = val / ctx.n if symmetric else None
                    if symmetric:
                        bound = search_bound(per_user, float(g_maxes[0]), ctx.n)
                    else:
                        thr = profile_welfare_split(ctx, w, rates)
                        bound = min(
                            search_bound(max(thr[i], 1e-12), float(g_maxes[i]), ctx.n)
                            for i in range(ctx.n)
                        )
                    stop = min(w_cap, 4 * bound) if math.isfinite(bound) else w_cap
            w += max(1, w // 16)
        # unit-step refinement around the coarse winner
        idx = [k for k, (w, _, _) in enumerate(coarse) if w == best_w][0]
        lo = coarse[idx - 1][0] + 1 if idx > 0 else 4
        hi = coarse[idx + 1][0] - 1 if idx + 1 < len(coarse) else best_w
        for w in range(lo, hi + 1):
            if w == best_w:
                continue
            rates, val = eval_w(w, warm=best_rates, full=not symmetric)
            if val > best_val:
                best_w, best_rates, best_val = w, rates, val
    for h in hints:
        if h is not None and best_w is not None:
            v = _welfare(ctx, [best_w] * ctx.n, np.asarray(h))
            best_val = max(best_val, v)
    trace["w_stop"] = stop
    return OptimumReport(w_opt=int(best_w), rates_opt=best_rates,
                         welfare_opt=best_val, trace=trace)


def profile_welfare_split(ctx, w, rates):
    """Per-user throughputs at (common window, rates) via the damped solver."""
    sub = ctx.with_cw([w] * ctx.n)
    pers = context_pers(sub, rates)
    state = solve_stationary_damped([u.mac for u in sub.users], pers)
    return np.asarray([
        user_throughput(state, i, goodput(u.link, rates[i], u.window.airtime),
                        sub.timing, pers, sub.slot_mode)
        for i, u in enumerate(sub.users)
    ])


def price_of_anarchy(ctx, level="system", equilibrium=None, step=1,
                     multi_starts=DEFAULT_MULTI_STARTS, seed=0):
    """Optimal welfare over equilibrium welfare (>= 1 up to solver noise).

    level="rate": equilibrium and optimum both under the context's fixed
    windows.  level="system": the refined window equilibrium against the
    joint (window, rates) optimum.
    """
    if level == "rate":
        ne = equilibrium if equilibrium is not None else certify_unique_ne(ctx)
        eq_welfare = float(np.sum(profile_throughputs(ctx, ne.rates)))
        opt = rate_optimum(ctx, multi_starts=multi_starts, seed=seed,
                           hints=[ne.rates])
    elif level == "system":
        from .mac_game import refined_equilibrium
        rep = equilibrium if equilibrium is not None else refined_equilibrium(ctx, step=step)
        eq_welfare = float(np.sum(rep.throughputs))
        hint = rep.rates if rep.rates is not None else None
        opt = social_optimum(ctx, multi_starts=multi_starts, seed=seed,
                             hints=[hint])
    else:
        raise ValueError(f"level must be 'rate' or 'system', got {level!r}")
    if eq_welfare <= 0.0:
        raise DegenerateEquilibriumError("equilibrium welfare is zero")
    return PoAReport(poa=opt.welfare_opt / eq_welfare,
                     welfare_opt=opt.welfare_opt, welfare_eq=eq_welfare,
                     level=level, optimum=opt)


def grid_best_response(ctx, i, rates, n_points=10000, mode=None):
    """Argmax of user i's own objective on a uniform rate grid.

    The objective matches the best-response mode: others' attempt rates are
    frozen and, in the large-population form, so is the busy-time
    denominator, leaving tau_i(R) * G_i(R) up to constants.  Used as the
    cross-check for the bisection best response.
    """
    from .backend import kernels as _k
    from .rate_game import _mode_flag, stationary_at

    u = ctx.users[i]
    state, _ = stationary_at(ctx, np.asarray(rates, dtype=np.float64))
    prod = 1.0
    for j in range(ctx.n):
        if j != i:
            prod *= state.rho[j]
    full = _mode_flag(ctx, mode)
    grid = np.linspace(u.window.r_min, u.window.r_max, n_points)
    best_r, best_v = grid[0], -1.0
    for r in grid:
        e = _k.per(u.link.snr_db, u.link.bandwidth_hz, r, u.window.airtime,
                   u.link.modulation.kind, u.link.modulation.order,
                   u.link.modulation.alpha)
        qi = 1.0 - (1.0 - e) * prod
        tau = _k.gamma_tau(qi, u.mac.cw, u.mac.max_stage)
        g = (1.0 - e) * r
        if full:
            v = tau * prod * g / (1.0 - (1.0 - tau) * prod)
        else:
            v = tau * g
        if v > best_v:
            best_r, best_v = r, v
    return best_r


def exhaustive_refinement(ctx, step=1, factor=4, scan_cap=4096):
    """Re-derive the refined window from exhaustively precomputed curves.

    Recomputes the utility curve on a fresh cache out to factor times the
    bounded scan's stop point, re-emulates the running-bound stop rule on
    the precomputed values with plain loops, and returns the largest common
    running-max window.  Cross-checks the incremental scan bookkeeping.
    """
    from .mac_game import refined_equilibrium

    rep = refined_equilibrium(ctx, step=step, scan_cap=scan_cap)
    limit = min(factor * rep.stop_w, factor * scan_cap)
    cache = {}
    grid = list(range(step, limit + 1, step))
    curves = [dict() for _ in range(ctx.n)]
    for w in grid:
        utilities = utility_hat(ctx, w, cache)
        for i in range(ctx.n):
            curves[i][w] = float(utilities[i])
    g_maxes = [goodput_max(u.link, u.window)[1] for u in ctx.users]
    s_best = [0.0] * ctx.n
    bounds = [math.inf] * ctx.n
    stop_w = grid[-1]
    for w in grid:
        hit = False
        for i in range(ctx.n):
            if curves[i][w] > s_best[i]:
                s_best[i] = curves[i][w]
                if ctx.n >= 2:
                    bounds[i] = search_bound(s_best[i], g_maxes[i], ctx.n)
            if w >= min(bounds[i], scan_cap):
                hit = True
        if hit:
            stop_w = w
            break
    sets = [
        WHatSet.from_curve({w: curves[i][w] for w in grid if w <= stop_w})
        for i in range(ctx.n)
    ]
    common = set(sets[0].members)
    for s in sets[1:]:
        common &= set(s.members)
    return max(common), stop_w, curves
