"""Jitted inner loops: lazy environments and walk stepping on CSR arrays.

The RNG arithmetic mirrors ``rwre.rng`` on numpy uint64 (wraparound is the
point; keep every integer operand uint64, since mixing with int64 would
promote to float64 and break bit-exactness).  Environments are sampled
lazily: the resistance of edge ``e`` is a pure function of (env_seed, e), so
a trial touches only the edges its walk actually probes.

Walk stepping consumes exactly one uniform per time index ``t`` regardless
of which chains are still alive; the coupled classifier repartitions that
same uniform for the truncated chain.  ``rwre.walk`` contains the pure
Python mirror of this stepping logic and the tests pin the two paths to
each other exactly.
"""

import numpy as np
from numba import njit

U64 = np.uint64
GOLDEN = U64(0x9E3779B97F4A7C15)
_M1 = U64(0xBF58476D1CE4E5B9)
_M2 = U64(0x94D049BB133111EB)
STREAM_ENV = U64(0x45E5000000000001)
STREAM_WALK = U64(0x57A1000000000002)
_INV53 = 1.0 / 9007199254740992.0

KIND_ATOMIC = 0
KIND_EXPONENTIAL = 1
KIND_ARRAY = 2

# first_return statuses
RETURNED = 0
ISOLATED = 1
ABSORBED = 2
CENSORED = 3

INF = np.inf


@njit(cache=True, nogil=True, inline="always")
def _mix(seed, index):
    x = seed + GOLDEN * (index + U64(1))
    x = (x ^ (x >> U64(30))) * _M1
    x = (x ^ (x >> U64(27))) * _M2
    return x ^ (x >> U64(31))


@njit(cache=True, nogil=True, inline="always")
def _unit(seed, index):
    return np.float64(_mix(seed, index) >> U64(11)) * _INV53


@njit(cache=True, nogil=True, inline="always")
def _edge_resistance(kind, values, cum, param, resist, env_seed, e):
    if kind == KIND_ARRAY:
        return resist[e]
    u = _unit(env_seed, U64(e))
    if kind == KIND_EXPONENTIAL:
        return -param * np.log1p(-u)
    for i in range(cum.shape[0]):
        if u < cum[i]:
            return values[i]
    return values[cum.shape[0] - 1]


@njit(cache=True, nogil=True, inline="always")
def _fill_incident(indptr, nbr_e, kind, values, cum, param, resist,
                   env_seed, cur, rscr, cscr):
    """Resistances/conductances of cur's incident edges, in CSR order.
    Returns total conductance."""
    lo = indptr[cur]
    hi = indptr[cur + 1]
    w = 0.0
    for k in range(lo, hi):
        r = _edge_resistance(kind, values, cum, param, resist, env_seed,
                             nbr_e[k])
        c = 0.0 if r == INF else 1.0 / r
        rscr[k - lo] = r
        cscr[k - lo] = c
        w += c
    return w


@njit(cache=True, nogil=True, inline="always")
def _pick(cscr, deg, x):
    """Index (0-based within the incident list) whose conductance interval
    contains x; falls back to the last positive-conductance slot when x sits
    on the rounded-up total."""
    acc = 0.0
    last = -1
    for k in range(deg):
        c = cscr[k]
        if c > 0.0:
            acc += c
            last = k
            if x < acc:
                return k
    return last


@njit(cache=True, nogil=True)
def _one_first_return(indptr, nbr_e, nbr_v, kind, values, cum, param, resist,
                      env_seed, wseed, start, sink, max_steps, rscr, cscr):
    w0 = _fill_incident(indptr, nbr_e, kind, values, cum, param, resist,
                        env_seed, start, rscr, cscr)
    if w0 <= 0.0:
        return ISOLATED, 0
    cur = start
    for t in range(max_steps):
        w = _fill_incident(indptr, nbr_e, kind, values, cum, param, resist,
                           env_seed, cur, rscr, cscr)
        deg = indptr[cur + 1] - indptr[cur]
        u = _unit(wseed, U64(t))
        k = _pick(cscr, deg, u * w)
        cur = nbr_v[indptr[cur] + k]
        if cur == start:
            return RETURNED, t + 1
        if cur == sink:
            return ABSORBED, t + 1
    return CENSORED, max_steps


@njit(cache=True, nogil=True)
def first_return_batch(indptr, nbr_e, nbr_v, kind, values, cum, param, resist,
                       base_seed, lo_trial, hi_trial, start, sink, max_steps,
                       max_deg, out_status, out_step):
    """Fresh environment + walk per trial; records first-return outcomes."""
    rscr = np.empty(max_deg, np.float64)
    cscr = np.empty(max_deg, np.float64)
    for i in range(lo_trial, hi_trial):
        tseed = _mix(base_seed, U64(i))
        eseed = _mix(tseed, STREAM_ENV)
        wseed = _mix(tseed, STREAM_WALK)
        status, step = _one_first_return(
            indptr, nbr_e, nbr_v, kind, values, cum, param, resist,
            eseed, wseed, start, sink, max_steps, rscr, cscr)
        out_status[i] = status
        out_step[i] = step


@njit(cache=True, nogil=True)
def rerun_censored_batch(indptr, nbr_e, nbr_v, kind, values, cum, param,
                         resist, base_seed, trial_ids, start, sink, max_steps,
                         max_deg, out_status, out_step):
    """Re-run selected trials at a longer horizon.  Per-trial streams are
    functions of the trial index alone, so the longer walk extends the
    shorter one exactly."""
    rscr = np.empty(max_deg, np.float64)
    cscr = np.empty(max_deg, np.float64)
    for j in range(trial_ids.shape[0]):
        i = trial_ids[j]
        tseed = _mix(base_seed, U64(i))
        eseed = _mix(tseed, STREAM_ENV)
        wseed = _mix(tseed, STREAM_WALK)
        status, step = _one_first_return(
            indptr, nbr_e, nbr_v, kind, values, cum, param, resist,
            eseed, wseed, start, sink, max_steps, rscr, cscr)
        out_status[i] = status
        out_step[i] = step


@njit(cache=True, nogil=True)
def _classify_one(indptr, nbr_e, nbr_v, kind, values, cum, param, resist,
                  eseed, wseed, v, sink, n_steps, gamma_k, gamma_k1,
                  rscr, cscr):
    """One coupled trial at truncation level gamma_k.

    Returns (iso, A, B, C, G, T, gap, base_ret, trunc_ret, babs, tabs).
    T = -1 when the walk never crosses an edge above gamma_k;
    base_ret / trunc_ret = -1 when there is no return within n_steps.
    """
    lo = indptr[v]
    hi = indptr[v + 1]
    all_over = True
    all_inf = True
    for k in range(lo, hi):
        r = _edge_resistance(kind, values, cum, param, resist, eseed, nbr_e[k])
        if r <= gamma_k:
            all_over = False
        if r < INF:
            all_inf = False
    a_flag = all_over
    iso = all_inf

    t_k = np.int64(-1)
    gap = False
    base_cur = v
    base_alive = not iso
    base_ret = np.int64(-1)
    babs = np.int64(-1)
    tr_cur = v
    diverged = False
    tr_done = False
    tr_ret = np.int64(-1)
    tabs = np.int64(-1)
    if a_flag:
        # no sub-gamma_k edge at v: the truncated chain never leaves v
        tr_done = True
        tr_ret = 0

    for t in range(n_steps):
        if (not base_alive) and tr_done:
            break
        u = _unit(wseed, U64(t))
        just_diverged = False
        if base_alive:
            w = _fill_incident(indptr, nbr_e, kind, values, cum, param,
                               resist, eseed, base_cur, rscr, cscr)
            lo2 = indptr[base_cur]
            deg = indptr[base_cur + 1] - lo2
            x = u * w
            j = _pick(cscr, deg, x)
            rj = rscr[j]
            if rj > gamma_k:
                if t_k == -1:
                    t_k = t
                    if rj < gamma_k1:
                        gap = True
                if not diverged and not tr_done:
                    # divergence step: map the disallowed portion of u onto
                    # the allowed edges, preserving the truncated kernel
                    diverged = True
                    just_diverged = True
                    wa = 0.0
                    for k2 in range(deg):
                        if rscr[k2] <= gamma_k:
                            wa += cscr[k2]
                    accb = 0.0
                    y = 0.0
                    for k2 in range(deg):
                        if k2 == j:
                            y += x - accb
                            break
                        if rscr[k2] > gamma_k:
                            y += cscr[k2]
                        accb += cscr[k2]
                    wd = w - wa
                    x2 = (y / wd) * wa
                    acc2 = 0.0
                    pick2 = -1
                    last2 = -1
                    for k2 in range(deg):
                        c = cscr[k2]
                        if c > 0.0 and rscr[k2] <= gamma_k:
                            acc2 += c
                            last2 = k2
                            if x2 < acc2:
                                pick2 = k2
                                break
                    if pick2 == -1:
                        pick2 = last2
                    tr_cur = nbr_v[lo2 + pick2]
                    if tr_cur == v:
                        tr_ret = t + 1
                        tr_done = True
                    elif tr_cur == sink:
                        tabs = t + 1
                        tr_done = True
            base_cur = nbr_v[lo2 + j]
            if base_cur == v and base_ret == -1:
                base_ret = t + 1
            if base_cur == sink:
                babs = t + 1
                base_alive = False
            if not diverged and not tr_done:
                # coupled: the truncated chain sits where the base chain sits
                tr_cur = base_cur
                if base_cur == v:
                    tr_ret = t + 1
                    tr_done = True
                elif base_cur == sink:
                    tabs = t + 1
                    tr_done = True
        if diverged and not tr_done and not just_diverged:
            wa = _fill_incident(indptr, nbr_e, kind, values, cum, param,
                                resist, eseed, tr_cur, rscr, cscr)
            lo3 = indptr[tr_cur]
            deg3 = indptr[tr_cur + 1] - lo3
            # keep only sub-gamma_k edges
            wtr = 0.0
            for k3 in range(deg3):
                if rscr[k3] > gamma_k:
                    cscr[k3] = 0.0
                else:
                    wtr += cscr[k3]
            k3 = _pick(cscr, deg3, u * wtr)
            tr_cur = nbr_v[lo3 + k3]
            if tr_cur == v:
                tr_ret = t + 1
                tr_done = True
            elif tr_cur == sink:
                tabs = t + 1
                tr_done = True

    g_flag = (not iso) and (base_ret == -1)
    c_flag = tr_ret == -1
    b_flag = (t_k != -1) and (not a_flag)
    return (iso, a_flag, b_flag, c_flag, g_flag, t_k, gap, base_ret,
            tr_ret, babs, tabs)


@njit(cache=True, nogil=True)
def classify_batch(indptr, nbr_e, nbr_v, kind, values, cum, param, resist,
                   base_seed, lo_trial, hi_trial, v, sink, n_steps,
                   gamma_k, gamma_k1, max_deg,
                   out_iso, out_a, out_b, out_c, out_g, out_gap,
                   out_t, out_base_ret, out_trunc_ret, out_babs, out_tabs):
    rscr = np.empty(max_deg, np.float64)
    cscr = np.empty(max_deg, np.float64)
    for i in range(lo_trial, hi_trial):
        tseed = _mix(base_seed, U64(i))
        eseed = _mix(tseed, STREAM_ENV)
        wseed = _mix(tseed, STREAM_WALK)
        (iso, a, b, c, g, t_k, gap, bret, tret, babs, tabs) = _classify_one(
            indptr, nbr_e, nbr_v, kind, values, cum, param, resist,
            eseed, wseed, v, sink, n_steps, gamma_k, gamma_k1, rscr, cscr)
        out_iso[i] = iso
        out_a[i] = a
        out_b[i] = b
        out_c[i] = c
        out_g[i] = g
        out_gap[i] = gap
        out_t[i] = t_k
        out_base_ret[i] = bret
        out_trunc_ret[i] = tret
        out_babs[i] = babs
        out_tabs[i] = tabs
