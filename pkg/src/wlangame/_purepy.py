"""Pure-Python implementation of the numeric kernels.

This module mirrors the compiled extension ``wlangame._speed`` function by
function; :mod:`wlangame.backend` picks one of the two at import time.  The
formulas here are the single source of truth for what the fast path must
compute, so the two implementations are kept textually parallel: same
operation order, same tolerances, same RNG.  Cross-backend tests assert
bit-level agreement.
"""

import math

import numpy as np

MOD_MQAM = 0
MOD_DPSK = 1

_BER_CAP = 1.0 - 1e-15  # keeps log1p(-ber) finite
_PER_CAP = 1.0 - 1e-15  # packet error rate stays strictly below 1
_REL_STEP = 1e-6        # relative step for central differences

_U64 = (1 << 64) - 1


# ---------------------------------------------------------------------------
# channel kernels
# ---------------------------------------------------------------------------

def qfunc(x):
    """Gaussian tail probability Q(x)."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def ebn0(snr_db, bandwidth_hz, rate):
    return 10.0 ** (snr_db / 10.0) * bandwidth_hz / rate


def ber(snr_db, bandwidth_hz, rate, mod_kind, mod_m, mod_alpha):
    g = ebn0(snr_db, bandwidth_hz, rate)
    if mod_kind == MOD_DPSK:
        p = 0.5 * math.exp(-g)
    else:
        arg = 3.0 * mod_alpha * mod_alpha * math.log2(mod_m) / (mod_m - 1.0) * g
        p = 4.0 * (1.0 - 1.0 / math.sqrt(mod_m)) * qfunc(math.sqrt(arg))
    if p < 0.0:
        return 0.0
    if p > _BER_CAP:
        return _BER_CAP
    return p


def per(snr_db, bandwidth_hz, rate, airtime, mod_kind, mod_m, mod_alpha):
    p = ber(snr_db, bandwidth_hz, rate, mod_kind, mod_m, mod_alpha)
    bits = rate * airtime
    e = -math.expm1(bits * math.log1p(-p))
    return e if e < _PER_CAP else _PER_CAP


def per_slope(snr_db, bandwidth_hz, rate, airtime, mod_kind, mod_m, mod_alpha):
    h = _REL_STEP * rate
    ep = per(snr_db, bandwidth_hz, rate + h, airtime, mod_kind, mod_m, mod_alpha)
    em = per(snr_db, bandwidth_hz, rate - h, airtime, mod_kind, mod_m, mod_alpha)
    return (ep - em) / (2.0 * h)


def goodput(snr_db, bandwidth_hz, rate, airtime, mod_kind, mod_m, mod_alpha):
    e = per(snr_db, bandwidth_hz, rate, airtime, mod_kind, mod_m, mod_alpha)
    return (1.0 - e) * rate


def goodput_slope(snr_db, bandwidth_hz, rate, airtime, mod_kind, mod_m, mod_alpha):
    h = _REL_STEP * rate
    gp = goodput(snr_db, bandwidth_hz, rate + h, airtime, mod_kind, mod_m, mod_alpha)
    gm = goodput(snr_db, bandwidth_hz, rate - h, airtime, mod_kind, mod_m, mod_alpha)
    return (gp - gm) / (2.0 * h)


# ---------------------------------------------------------------------------
# backoff-chain kernels
# ---------------------------------------------------------------------------

def gamma_tau(q, w, m):
    """Per-slot attempt probability for failure probability q, window w."""
    s = 0.0
    pw = 1.0  # (2q)^l
    for _ in range(m):
        s += q * pw
        pw *= 2.0 * q
    return 2.0 / (w + 1.0 + w * s)


def gamma_tau_slope(q, w, m):
    """Analytic derivative of gamma_tau with respect to q (always <= 0)."""
    s = 0.0
    ds = 0.0
    pw = 1.0  # (2q)^l
    for l in range(m):
        s += q * pw
        ds += (l + 1.0) * pw
        pw *= 2.0 * q
    den = w + 1.0 + w * s
    return -2.0 * w * ds / (den * den)


def _occupancy(q, w, m):
    # (1-q)*(1-gamma(q)); strictly decreasing on [0,1] for w > 3
    return (1.0 - q) * (1.0 - gamma_tau(q, w, m))


def _inner_root(target, w, m):
    # unique q in [0,1] with (1-q)(1-gamma(q)) = target, 0 clamp when the
    # left side already starts below the target
    if _occupancy(0.0, w, m) <= target:
        return 0.0
    lo = 0.0
    hi = 1.0
    for _ in range(47):
        mid = 0.5 * (lo + hi)
        if _occupancy(mid, w, m) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _leave_one_out(values, out):
    # out[i] = prod over j != i of values[j], via prefix/suffix products
    n = len(values)
    acc = 1.0
    for i in range(n):
        out[i] = acc
        acc *= values[i]
    acc = 1.0
    for i in range(n - 1, -1, -1):
        out[i] *= acc
        acc *= values[i]


def solve_stationary(w, m, e, f_tol=1e-12, max_outer=200):
    """Nested-bisection solution of the coupled attempt/failure equations.

    Outer bisection runs on the all-idle probability c; for each candidate c
    every user's failure probability is the root of a strictly decreasing
    scalar equation.  Returns (tau, p, q, c, residual, outer_iters).
    """
    n = len(w)
    tau = np.empty(n)
    q = np.empty(n)
    lo = 0.0
    hi = 1.0
    iters = 0
    mid = 0.5
    for _ in range(max_outer):
        iters += 1
        mid = 0.5 * (lo + hi)
        prod = 1.0
        for i in range(n):
            qi = _inner_root(mid * (1.0 - e[i]), w[i], m[i])
            q[i] = qi
            tau[i] = gamma_tau(qi, w[i], m[i])
            prod *= 1.0 - tau[i]
        f = prod - mid
        if abs(f) < f_tol:
            break
        if f > 0.0:
            lo = mid
        else:
            hi = mid
    rho = 1.0 - tau
    p = np.empty(n)
    _leave_one_out(rho, p)
    loo = p.copy()
    p[:] = 1.0 - loo
    c = 1.0
    for i in range(n):
        c *= rho[i]
    resid = 0.0
    for i in range(n):
        r1 = abs(q[i] - (1.0 - (1.0 - p[i]) * (1.0 - e[i])))
        r2 = abs(tau[i] - gamma_tau(q[i], w[i], m[i]))
        r3 = abs(p[i] - (1.0 - loo[i]))
        resid = max(resid, r1, r2, r3)
    return tau, p, q, c, resid, iters


def solve_damped(w, m, e, lam=0.5, step_tol=1e-13, max_iters=500000,
                 start_gamma=0):
    """Damped fixed-point iteration on tau; independent of the bisection path.

    start_gamma selects the initial vector: 0 starts from all zeros, 1 from
    gamma evaluated at the channel error rates.
    """
    n = len(w)
    tau = np.empty(n)
    if start_gamma:
        for i in range(n):
            tau[i] = gamma_tau(e[i], w[i], m[i])
    else:
        tau[:] = 0.0
    rho = np.empty(n)
    loo = np.empty(n)
    new = np.empty(n)
    iters = 0
    for _ in range(max_iters):
        iters += 1
        for i in range(n):
            rho[i] = 1.0 - tau[i]
        _leave_one_out(rho, loo)
        step = 0.0
        for i in range(n):
            qi = 1.0 - (1.0 - e[i]) * loo[i]
            new[i] = (1.0 - lam) * tau[i] + lam * gamma_tau(qi, w[i], m[i])
            step = max(step, abs(new[i] - tau[i]))
        tau, new = new, tau
        if step < step_tol:
            break
    for i in range(n):
        rho[i] = 1.0 - tau[i]
    _leave_one_out(rho, loo)
    p = 1.0 - loo
    q = np.empty(n)
    for i in range(n):
        q[i] = 1.0 - (1.0 - e[i]) * loo[i]
    return tau, p, q, iters


# ---------------------------------------------------------------------------
# rate-game kernels
# ---------------------------------------------------------------------------

def _log_survival(snr_db, bandwidth_hz, rate, airtime, mod_kind, mod_m,
                  mod_alpha):
    # log of the packet survival probability; finite even deep in saturation
    p = ber(snr_db, bandwidth_hz, rate, mod_kind, mod_m, mod_alpha)
    return rate * airtime * math.log1p(-p)


def a_value(rate, prod_others, w, m, snr_db, bandwidth_hz, mod_kind, mod_m,
            mod_alpha, airtime, full):
    """Sign of the throughput slope in own rate, others' attempt rates frozen.

    The goodput term is the log-goodput slope (equal to G'/G and immune to
    goodput underflow at saturated rates).  ``full`` keeps the exact
    occupancy factor; otherwise the large-population simplification
    (factor ~ 1) is used.
    """
    h = _REL_STEP * rate
    ls0 = _log_survival(snr_db, bandwidth_hz, rate, airtime, mod_kind, mod_m, mod_alpha)
    lsp = _log_survival(snr_db, bandwidth_hz, rate + h, airtime, mod_kind, mod_m, mod_alpha)
    lsm = _log_survival(snr_db, bandwidth_hz, rate - h, airtime, mod_kind, mod_m, mod_alpha)
    e_slope = (-math.expm1(lsp) + math.expm1(lsm)) / (2.0 * h)
    logg_slope = (math.log(rate + h) + lsp - math.log(rate - h) - lsm) / (2.0 * h)
    qi = 1.0 - math.exp(ls0) * prod_others
    tau = gamma_tau(qi, w, m)
    weight = prod_others / tau
    if full:
        weight *= (1.0 - prod_others) / (1.0 - (1.0 - tau) * prod_others)
    return logg_slope + weight * gamma_tau_slope(qi, w, m) * e_slope


def br_root(prod_others, w, m, snr_db, bandwidth_hz, mod_kind, mod_m,
            mod_alpha, airtime, r_min, r_max, rel_tol, full):
    """Three-case best response: boundary checks then bisection on a_value."""
    a_lo = a_value(r_min, prod_others, w, m, snr_db, bandwidth_hz, mod_kind,
                   mod_m, mod_alpha, airtime, full)
    if a_lo <= 0.0:
        return r_min
    a_hi = a_value(r_max, prod_others, w, m, snr_db, bandwidth_hz, mod_kind,
                   mod_m, mod_alpha, airtime, full)
    if a_hi >= 0.0:
        return r_max
    lo = r_min
    hi = r_max
    tol = rel_tol * r_max
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        a = a_value(mid, prod_others, w, m, snr_db, bandwidth_hz, mod_kind,
                    mod_m, mod_alpha, airtime, full)
        if a > 0.0:
            lo = mid
        elif a < 0.0:
            hi = mid
        else:
            return mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# slot-level simulator kernel
# ---------------------------------------------------------------------------

def _splitmix64(state):
    state = (state + 0x9E3779B97F4A7C15) & _U64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _U64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _U64
    return state, z ^ (z >> 31)


def rng_seed(seed):
    """Expand a 64-bit seed into the four xoshiro256** state words."""
    s = np.empty(4, dtype=np.uint64)
    state = seed & _U64
    for i in range(4):
        state, word = _splitmix64(state)
        s[i] = word
    return s


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & _U64


def _next_u64(s):
    s0, s1, s2, s3 = int(s[0]), int(s[1]), int(s[2]), int(s[3])
    result = (_rotl((s1 * 5) & _U64, 7) * 9) & _U64
    t = (s1 << 17) & _U64
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, 45)
    s[0], s[1], s[2], s[3] = s0, s1, s2, s3
    return result


def _next_unit(s):
    return (_next_u64(s) >> 11) * (2.0 ** -53)


def _next_below(s, bound):
    return _next_u64(s) % bound


def sim_slots(stage, counter, w, m, e, airtime, sigma, succ_over,
              fail_over, n_slots, rng_state, attempts, successes, collisions,
              channel_errors):
    """Advance the backoff chains by n_slots virtual slots.

    stage/counter/rng_state are updated in place so windows can be chained;
    a counter of -1 requests a fresh uniform draw on [0, w-1] at stage 0.
    Counters tick every virtual slot regardless of channel state (the chain
    has no freeze state).  Returns (elapsed_seconds, idle, success, error,
    collision) slot counts.
    """
    n = len(w)
    for i in range(n):
        if counter[i] < 0:
            stage[i] = 0
            counter[i] = _next_below(rng_state, int(w[i]))
    idle_slots = 0
    succ_slots = 0
    err_slots = 0
    coll_slots = 0
    elapsed = 0.0
    tx = [0] * n
    for _ in range(n_slots):
        ntx = 0
        for i in range(n):
            if counter[i] == 0:
                tx[ntx] = i
                ntx += 1
        if ntx == 0:
            idle_slots += 1
            elapsed += sigma
        elif ntx == 1:
            i = tx[0]
            attempts[i] += 1
            u = _next_unit(rng_state)
            if u < 1.0 - e[i]:
                successes[i] += 1
                succ_slots += 1
                elapsed += airtime[i] + succ_over
                stage[i] = 0
            else:
                channel_errors[i] += 1
                err_slots += 1
                elapsed += airtime[i] + fail_over
                if stage[i] < m[i]:
                    stage[i] += 1
            counter[i] = _next_below(rng_state, (1 << int(stage[i])) * int(w[i]))
        else:
            coll_slots += 1
            longest = 0.0
            for j in range(ntx):
                if airtime[tx[j]] > longest:
                    longest = airtime[tx[j]]
            elapsed += longest + fail_over
            for j in range(ntx):
                i = tx[j]
                attempts[i] += 1
                collisions[i] += 1
                if stage[i] < m[i]:
                    stage[i] += 1
                counter[i] = _next_below(rng_state, (1 << int(stage[i])) * int(w[i]))
        # decrement everyone who did not transmit this slot
        for i in range(n):
            if not _was_tx(tx, ntx, i):
                counter[i] -= 1
    return elapsed, idle_slots, succ_slots, err_slots, coll_slots


def _was_tx(tx, ntx, i):
    for j in range(ntx):
        if tx[j] == i:
            return True
    return False
