# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled numeric kernels.

Function-by-function mirror of wlangame._purepy (which documents the
contracts); operation order and tolerances are kept identical so the two
backends agree to the last bit.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, erfc, exp, expm1, fabs, log, log1p, log2, pow, sqrt
from libc.stdint cimport int64_t, uint64_t

MOD_MQAM = 0
MOD_DPSK = 1

cdef int C_MQAM = 0
cdef int C_DPSK = 1

cdef double BER_CAP = 1.0 - 1e-15
cdef double PER_CAP = 1.0 - 1e-15
cdef double REL_STEP = 1e-6
cdef double SQRT2 = sqrt(2.0)


# ---------------------------------------------------------------------------
# channel kernels
# ---------------------------------------------------------------------------

cdef inline double c_qfunc(double x) noexcept:
    return 0.5 * erfc(x / SQRT2)


cdef inline double c_ebn0(double snr_db, double bw, double rate) noexcept:
    return pow(10.0, snr_db / 10.0) * bw / rate


cdef double c_ber(double snr_db, double bw, double rate, int kind,
                  double m, double alpha) noexcept:
    cdef double g = c_ebn0(snr_db, bw, rate)
    cdef double p, arg
    if kind == C_DPSK:
        p = 0.5 * exp(-g)
    else:
        arg = 3.0 * alpha * alpha * log2(m) / (m - 1.0) * g
        p = 4.0 * (1.0 - 1.0 / sqrt(m)) * c_qfunc(sqrt(arg))
    if p < 0.0:
        return 0.0
    if p > BER_CAP:
        return BER_CAP
    return p


cdef double c_per(double snr_db, double bw, double rate, double airtime,
                  int kind, double m, double alpha) noexcept:
    cdef double p = c_ber(snr_db, bw, rate, kind, m, alpha)
    cdef double bits = rate * airtime
    cdef double e = -expm1(bits * log1p(-p))
    return e if e < PER_CAP else PER_CAP


def qfunc(double x):
    return c_qfunc(x)


def ebn0(double snr_db, double bw, double rate):
    return c_ebn0(snr_db, bw, rate)


def ber(double snr_db, double bw, double rate, int kind, double m, double alpha):
    return c_ber(snr_db, bw, rate, kind, m, alpha)


def per(double snr_db, double bw, double rate, double airtime, int kind,
        double m, double alpha):
    return c_per(snr_db, bw, rate, airtime, kind, m, alpha)


def per_slope(double snr_db, double bw, double rate, double airtime, int kind,
              double m, double alpha):
    cdef double h = REL_STEP * rate
    cdef double ep = c_per(snr_db, bw, rate + h, airtime, kind, m, alpha)
    cdef double em = c_per(snr_db, bw, rate - h, airtime, kind, m, alpha)
    return (ep - em) / (2.0 * h)


def goodput(double snr_db, double bw, double rate, double airtime, int kind,
            double m, double alpha):
    cdef double e = c_per(snr_db, bw, rate, airtime, kind, m, alpha)
    return (1.0 - e) * rate


def goodput_slope(double snr_db, double bw, double rate, double airtime,
                  int kind, double m, double alpha):
    cdef double h = REL_STEP * rate
    cdef double gp = (1.0 - c_per(snr_db, bw, rate + h, airtime, kind, m, alpha)) * (rate + h)
    cdef double gm = (1.0 - c_per(snr_db, bw, rate - h, airtime, kind, m, alpha)) * (rate - h)
    return (gp - gm) / (2.0 * h)


# ---------------------------------------------------------------------------
# backoff-chain kernels
# ---------------------------------------------------------------------------

cdef double c_gamma_tau(double q, double w, long m) noexcept:
    cdef double s = 0.0
    cdef double pw = 1.0
    cdef long l
    for l in range(m):
        s += q * pw
        pw *= 2.0 * q
    return 2.0 / (w + 1.0 + w * s)


cdef double c_gamma_tau_slope(double q, double w, long m) noexcept:
    cdef double s = 0.0
    cdef double ds = 0.0
    cdef double pw = 1.0
    cdef double den
    cdef long l
    for l in range(m):
        s += q * pw
        ds += (l + 1.0) * pw
        pw *= 2.0 * q
    den = w + 1.0 + w * s
    return -2.0 * w * ds / (den * den)


def gamma_tau(double q, double w, long m):
    return c_gamma_tau(q, w, m)


def gamma_tau_slope(double q, double w, long m):
    return c_gamma_tau_slope(q, w, m)


cdef inline double c_occupancy(double q, double w, long m) noexcept:
    return (1.0 - q) * (1.0 - c_gamma_tau(q, w, m))


cdef double c_inner_root(double target, double w, long m) noexcept:
    cdef double lo = 0.0
    cdef double hi = 1.0
    cdef double mid
    cdef int it
    if c_occupancy(0.0, w, m) <= target:
        return 0.0
    for it in range(47):
        mid = 0.5 * (lo + hi)
        if c_occupancy(mid, w, m) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


cdef void c_leave_one_out(double[:] values, double[:] out, Py_ssize_t n) noexcept:
    cdef double acc = 1.0
    cdef Py_ssize_t i
    for i in range(n):
        out[i] = acc
        acc *= values[i]
    acc = 1.0
    for i in range(n - 1, -1, -1):
        out[i] *= acc
        acc *= values[i]


def solve_stationary(int64_t[:] w, int64_t[:] m, double[:] e,
                     double f_tol=1e-12, int max_outer=200):
    cdef Py_ssize_t n = w.shape[0]
    tau_arr = np.empty(n)
    q_arr = np.empty(n)
    p_arr = np.empty(n)
    rho_arr = np.empty(n)
    loo_arr = np.empty(n)
    cdef double[:] tau = tau_arr
    cdef double[:] q = q_arr
    cdef double[:] p = p_arr
    cdef double[:] rho = rho_arr
    cdef double[:] loo = loo_arr
    cdef double lo = 0.0
    cdef double hi = 1.0
    cdef double mid = 0.5, prod, f, qi, c, resid, r1, r2, r3
    cdef int iters = 0
    cdef int outer
    cdef Py_ssize_t i
    for outer in range(max_outer):
        iters += 1
        mid = 0.5 * (lo + hi)
        prod = 1.0
        for i in range(n):
            qi = c_inner_root(mid * (1.0 - e[i]), <double>w[i], m[i])
            q[i] = qi
            tau[i] = c_gamma_tau(qi, <double>w[i], m[i])
            prod *= 1.0 - tau[i]
        f = prod - mid
        if fabs(f) < f_tol:
            break
        if f > 0.0:
            lo = mid
        else:
            hi = mid
    for i in range(n):
        rho[i] = 1.0 - tau[i]
    c_leave_one_out(rho, loo, n)
    c = 1.0
    for i in range(n):
        p[i] = 1.0 - loo[i]
        c *= rho[i]
    resid = 0.0
    for i in range(n):
        r1 = fabs(q[i] - (1.0 - (1.0 - p[i]) * (1.0 - e[i])))
        r2 = fabs(tau[i] - c_gamma_tau(q[i], <double>w[i], m[i]))
        r3 = fabs(p[i] - (1.0 - loo[i]))
        if r1 > resid: resid = r1
        if r2 > resid: resid = r2
        if r3 > resid: resid = r3
    return tau_arr, p_arr, q_arr, c, resid, iters


def solve_damped(int64_t[:] w, int64_t[:] m, double[:] e, double lam=0.5,
                 double step_tol=1e-13, long max_iters=500000,
                 int start_gamma=0):
    cdef Py_ssize_t n = w.shape[0]
    tau_arr = np.empty(n)
    new_arr = np.empty(n)
    rho_arr = np.empty(n)
    loo_arr = np.empty(n)
    q_arr = np.empty(n)
    p_arr = np.empty(n)
    cdef double[:] tau = tau_arr
    cdef double[:] new = new_arr
    cdef double[:] rho = rho_arr
    cdef double[:] loo = loo_arr
    cdef double[:] q = q_arr
    cdef double[:] p = p_arr
    cdef double[:] tmp
    cdef double step, qi, d
    cdef long iters = 0
    cdef long it
    cdef Py_ssize_t i
    for i in range(n):
        if start_gamma:
            tau[i] = c_gamma_tau(e[i], <double>w[i], m[i])
        else:
            tau[i] = 0.0
    for it in range(max_iters):
        iters += 1
        for i in range(n):
            rho[i] = 1.0 - tau[i]
        c_leave_one_out(rho, loo, n)
        step = 0.0
        for i in range(n):
            qi = 1.0 - (1.0 - e[i]) * loo[i]
            new[i] = (1.0 - lam) * tau[i] + lam * c_gamma_tau(qi, <double>w[i], m[i])
            d = fabs(new[i] - tau[i])
            if d > step:
                step = d
        tmp = tau
        tau = new
        new = tmp
        if step < step_tol:
            break
    for i in range(n):
        rho[i] = 1.0 - tau[i]
    c_leave_one_out(rho, loo, n)
    for i in range(n):
        p[i] = 1.0 - loo[i]
        q[i] = 1.0 - (1.0 - e[i]) * loo[i]
    # tau may reference either buffer after the swaps
    out_tau = np.empty(n)
    for i in range(n):
        out_tau[i] = tau[i]
    return out_tau, p_arr, q_arr, iters


# ---------------------------------------------------------------------------
# rate-game kernels
# ---------------------------------------------------------------------------

cdef inline double c_log_survival(double snr_db, double bw, double rate,
                                  double airtime, int kind, double mod_m,
                                  double alpha) noexcept:
    cdef double p = c_ber(snr_db, bw, rate, kind, mod_m, alpha)
    return rate * airtime * log1p(-p)


cdef double c_a_value(double rate, double prod_others, double w, long m,
                      double snr_db, double bw, int kind, double mod_m,
                      double alpha, double airtime, int full) noexcept:
    cdef double h = REL_STEP * rate
    cdef double ls0 = c_log_survival(snr_db, bw, rate, airtime, kind, mod_m, alpha)
    cdef double lsp = c_log_survival(snr_db, bw, rate + h, airtime, kind, mod_m, alpha)
    cdef double lsm = c_log_survival(snr_db, bw, rate - h, airtime, kind, mod_m, alpha)
    cdef double e_slope = (-expm1(lsp) + expm1(lsm)) / (2.0 * h)
    cdef double logg_slope = (log(rate + h) + lsp - log(rate - h) - lsm) / (2.0 * h)
    cdef double qi = 1.0 - exp(ls0) * prod_others
    cdef double tau = c_gamma_tau(qi, w, m)
    cdef double weight = prod_others / tau
    if full:
        weight *= (1.0 - prod_others) / (1.0 - (1.0 - tau) * prod_others)
    return logg_slope + weight * c_gamma_tau_slope(qi, w, m) * e_slope


def a_value(double rate, double prod_others, double w, long m, double snr_db,
            double bw, int kind, double mod_m, double alpha, double airtime,
            int full):
    return c_a_value(rate, prod_others, w, m, snr_db, bw, kind, mod_m, alpha,
                     airtime, full)


def br_root(double prod_others, double w, long m, double snr_db, double bw,
            int kind, double mod_m, double alpha, double airtime,
            double r_min, double r_max, double rel_tol, int full):
    cdef double a_lo = c_a_value(r_min, prod_others, w, m, snr_db, bw, kind,
                                 mod_m, alpha, airtime, full)
    if a_lo <= 0.0:
        return r_min
    cdef double a_hi = c_a_value(r_max, prod_others, w, m, snr_db, bw, kind,
                                 mod_m, alpha, airtime, full)
    if a_hi >= 0.0:
        return r_max
    cdef double lo = r_min
    cdef double hi = r_max
    cdef double tol = rel_tol * r_max
    cdef double mid, a
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        a = c_a_value(mid, prod_others, w, m, snr_db, bw, kind, mod_m, alpha,
                      airtime, full)
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

cdef inline uint64_t c_rotl(uint64_t x, int k) noexcept:
    return (x << k) | (x >> (64 - k))


cdef uint64_t c_next_u64(uint64_t[:] s) noexcept:
    cdef uint64_t result = c_rotl(s[1] * <uint64_t>5, 7) * <uint64_t>9
    cdef uint64_t t = s[1] << 17
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = c_rotl(s[3], 45)
    return result


cdef inline double c_next_unit(uint64_t[:] s) noexcept:
    return <double>(c_next_u64(s) >> 11) * (2.0 ** -53)


cdef inline uint64_t c_next_below(uint64_t[:] s, uint64_t bound) noexcept:
    return c_next_u64(s) % bound


def rng_seed(object seed):
    """Expand a 64-bit seed into the four xoshiro256** state words."""
    s = np.empty(4, dtype=np.uint64)
    cdef uint64_t[:] sv = s
    cdef uint64_t state = <uint64_t>(int(seed) & ((1 << 64) - 1))
    cdef uint64_t z
    cdef int i
    for i in range(4):
        state = state + <uint64_t>0x9E3779B97F4A7C15
        z = state
        z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
        z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
        sv[i] = z ^ (z >> 31)
    return s


def sim_slots(int64_t[:] stage, int64_t[:] counter, int64_t[:] w,
              int64_t[:] m, double[:] e, double[:] airtime, double sigma,
              double succ_over, double fail_over, long n_slots,
              uint64_t[:] rng_state, int64_t[:] attempts,
              int64_t[:] successes, int64_t[:] collisions,
              int64_t[:] channel_errors):
    cdef Py_ssize_t n = w.shape[0]
    cdef long idle_slots = 0, succ_slots = 0, err_slots = 0, coll_slots = 0
    cdef double elapsed = 0.0
    cdef double u, longest
    cdef Py_ssize_t i, j, ntx
    cdef long slot
    tx_arr = np.zeros(n, dtype=np.int64)
    is_tx_arr = np.zeros(n, dtype=np.int64)
    cdef int64_t[:] tx = tx_arr
    cdef int64_t[:] is_tx = is_tx_arr
    for i in range(n):
        if counter[i] < 0:
            stage[i] = 0
            counter[i] = <int64_t>c_next_below(rng_state, <uint64_t>w[i])
    for slot in range(n_slots):
        ntx = 0
        for i in range(n):
            if counter[i] == 0:
                tx[ntx] = i
                is_tx[i] = 1
                ntx += 1
        if ntx == 0:
            idle_slots += 1
            elapsed += sigma
        elif ntx == 1:
            i = tx[0]
            attempts[i] += 1
            u = c_next_unit(rng_state)
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
            counter[i] = <int64_t>c_next_below(
                rng_state, (<uint64_t>1 << stage[i]) * <uint64_t>w[i])
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
                counter[i] = <int64_t>c_next_below(
                    rng_state, (<uint64_t>1 << stage[i]) * <uint64_t>w[i])
        for i in range(n):
            if is_tx[i]:
                is_tx[i] = 0
            else:
                counter[i] -= 1
    return elapsed, idle_slots, succ_slots, err_slots, coll_slots
