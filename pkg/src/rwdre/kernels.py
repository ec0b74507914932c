"""Event-driven hot kernels (numba).

The walk-family kernel realizes per-site mark sequences lazily inside the
kernel through the same counter-based generators used everywhere else, so
its output is bit-identical to the pure-Python walker on the same keys.
All float transforms of stream values happen inside numba: numpy's
vectorized libm differs from numba's in the last ulp.
"""

import math

import numpy as np
from numba import njit

from ._bits import stream_uniform

STATUS_OK = 0
STATUS_CONE_ESCAPE = 1
STATUS_WINDOW_ESCAPE = 2
STATUS_HORIZON_ESCAPE = 3
STATUS_RATE_BOUND = 4


@njit(cache=True, nogil=True, inline="always")
def _occ_before(x, t, const_occ, env_lo, env_init, env_ptr, env_times, env_vals):
    """Occupancy at site x just before time t (state at t-)."""
    if const_occ >= 0:
        return const_occ
    xi = x - env_lo
    lo = env_ptr[xi]
    hi = env_ptr[xi + 1]
    a, b = lo, hi
    while a < b:
        mid = (a + b) // 2
        if env_times[mid] < t:
            a = mid + 1
        else:
            b = mid
    if a == lo:
        return env_init[xi]
    return env_vals[a - 1]


@njit(cache=True, nogil=True)
def run_family_kernel(
    starts_x,
    t0,
    horizon,
    alpha_tab,
    beta_tab,
    lam_total,
    site_keys,
    cone_lo,
    const_occ,
    env_lo,
    env_init,
    env_ptr,
    env_times,
    env_vals,
    win_xmin,
    win_xmax,
    env_tmax,
    checkpoints,
):
    """Run walks from ``starts_x`` (shared start time t0) for ``horizon``.

    site_keys[i] is the mark-stream key of site cone_lo + i; walks abort with
    a cone-escape status if they leave that range. Site sequences are
    realized once, on first touch, into a flat growing buffer. Returns
    positions at the relative checkpoint times plus running max/min per walk.
    """
    n = starts_x.shape[0]
    ncp = checkpoints.shape[0]
    pos_cp = np.empty((n, ncp), dtype=np.int64)
    max_pos = np.empty(n, dtype=np.int64)
    min_pos = np.empty(n, dtype=np.int64)
    ntab = alpha_tab.shape[0]
    t_end = t0 + horizon
    nsites = site_keys.shape[0]
    cone_hi = cone_lo + nsites - 1

    site_off = np.full(nsites, -1, dtype=np.int64)
    site_len = np.zeros(nsites, dtype=np.int64)
    cap = 8192
    flat_t = np.empty(cap, dtype=np.float64)
    flat_m = np.empty(cap, dtype=np.float64)
    used = 0

    for w in range(n):
        x = starts_x[w]
        t = t0
        mx = x
        mn = x
        cp = 0
        while True:
            if x < cone_lo or x > cone_hi:
                return pos_cp, max_pos, min_pos, STATUS_CONE_ESCAPE
            xi = x - cone_lo
            off = site_off[xi]
            if off < 0:
                # realize this site's marked sequence on (0, t_end]
                off = used
                key = site_keys[xi]
                ts = 0.0
                j = 0
                while True:
                    u = stream_uniform(key, 2 * j)
                    ts += -math.log1p(-u) / lam_total
                    if ts > t_end:
                        break
                    if used == cap:
                        cap *= 2
                        ft = np.empty(cap, dtype=np.float64)
                        ft[:used] = flat_t[:used]
                        flat_t = ft
                        fm = np.empty(cap, dtype=np.float64)
                        fm[:used] = flat_m[:used]
                        flat_m = fm
                    flat_t[used] = ts
                    flat_m[used] = stream_uniform(key, 2 * j + 1) * lam_total
                    used += 1
                    j += 1
                site_off[xi] = off
                site_len[xi] = used - off
            cnt = site_len[xi]
            # first mark strictly after t
            a, b = 0, cnt
            while a < b:
                mid = (a + b) // 2
                if flat_t[off + mid] <= t:
                    a = mid + 1
                else:
                    b = mid
            if a == cnt:
                t_evt = t_end + 1.0
            else:
                t_evt = flat_t[off + a]
            if t_evt > t_end:
                while cp < ncp:
                    pos_cp[w, cp] = x
                    cp += 1
                break
            while cp < ncp and t0 + checkpoints[cp] < t_evt:
                pos_cp[w, cp] = x
                cp += 1
            if const_occ < 0:
                if x < win_xmin or x >= win_xmax:
                    return pos_cp, max_pos, min_pos, STATUS_WINDOW_ESCAPE
                if t_evt > env_tmax:
                    return pos_cp, max_pos, min_pos, STATUS_HORIZON_ESCAPE
            occ = _occ_before(x, t_evt, const_occ, env_lo, env_init, env_ptr, env_times, env_vals)
            k = occ
            if k >= ntab:
                k = ntab - 1
            av = alpha_tab[k]
            bv = beta_tab[k]
            if av + bv > lam_total * (1.0 + 1e-12):
                return pos_cp, max_pos, min_pos, STATUS_RATE_BOUND
            u = flat_m[off + a]
            if u <= av:
                x += 1
            elif u <= av + bv:
                x -= 1
            if x > mx:
                mx = x
            if x < mn:
                mn = x
            t = t_evt
        max_pos[w] = mx
        min_pos[w] = mn
    return pos_cp, max_pos, min_pos, STATUS_OK


@njit(cache=True, nogil=True)
def gen_asep_rings(keys_r, keys_l, p, horizon):
    """Per-particle clock rings, generation order: particle asc, right then
    left. Returns (times, particle, dir) unsorted."""
    npart = keys_r.shape[0]
    cap = int(npart * horizon + 10.0 * np.sqrt(npart * horizon + 1.0)) + 16
    times = np.empty(cap, dtype=np.float64)
    part = np.empty(cap, dtype=np.int64)
    dirs = np.empty(cap, dtype=np.int64)
    n = 0
    for i in range(npart):
        for d in range(2):
            rate = p if d == 0 else 1.0 - p
            if rate <= 0.0:
                continue
            key = keys_r[i] if d == 0 else keys_l[i]
            t = 0.0
            j = 0
            while True:
                u = stream_uniform(key, j)
                j += 1
                t += -math.log1p(-u) / rate
                if t > horizon:
                    break
                if n == cap:
                    cap *= 2
                    t2 = np.empty(cap, dtype=np.float64)
                    t2[:n] = times[:n]
                    times = t2
                    p2 = np.empty(cap, dtype=np.int64)
                    p2[:n] = part[:n]
                    part = p2
                    d2 = np.empty(cap, dtype=np.int64)
                    d2[:n] = dirs[:n]
                    dirs = d2
                times[n] = t
                part[n] = i
                dirs[n] = 1 if d == 0 else -1
                n += 1
    return times[:n].copy(), part[:n].copy(), dirs[:n].copy()


@njit(cache=True, nogil=True)
def stable_order_by_key(keys, lo, nbuckets):
    """Stable counting-sort order for small integer keys (CSR construction)."""
    n = keys.shape[0]
    counts = np.zeros(nbuckets + 1, dtype=np.int64)
    for i in range(n):
        counts[keys[i] - lo + 1] += 1
    for b in range(1, nbuckets + 1):
        counts[b] += counts[b - 1]
    order = np.empty(n, dtype=np.int64)
    ptr = counts[:nbuckets].copy()
    for i in range(n):
        b = keys[i] - lo
        order[ptr[b]] = i
        ptr[b] += 1
    return order, counts


@njit(cache=True, nogil=True)
def asep_kernel(occ_class, p_pos, p_class, ev_times, ev_part, ev_dirs):
    """Exclusion dynamics with ordered classes on a finite domain.

    occ_class[x] is 0 when empty, else the class of the particle there.
    Jumps targeting sites outside the domain remove the particle (absorbing
    boundary; callers shield the observation window with a buffer).

    Returns occupation-change records (time, site, old_class, new_class,
    mover_class), particle path points (time, particle, pos) and the
    (time, index) pairs of particles that left the domain.
    """
    m = occ_class.shape[0]
    site_part = np.full(m, -1, dtype=np.int64)
    for i in range(p_pos.shape[0]):
        site_part[p_pos[i]] = i
    active = np.ones(p_pos.shape[0], dtype=np.bool_)

    ne = ev_times.shape[0]
    cap = 2 * ne + 16
    rec_t = np.empty(cap, dtype=np.float64)
    rec_site = np.empty(cap, dtype=np.int64)
    rec_old = np.empty(cap, dtype=np.int64)
    rec_new = np.empty(cap, dtype=np.int64)
    rec_mover = np.empty(cap, dtype=np.int64)
    nr = 0
    path_t = np.empty(cap, dtype=np.float64)
    path_p = np.empty(cap, dtype=np.int64)
    path_x = np.empty(cap, dtype=np.int64)
    npth = 0
    exit_t = np.empty(p_pos.shape[0], dtype=np.float64)
    exit_i = np.empty(p_pos.shape[0], dtype=np.int64)
    nexit = 0

    for e in range(ne):
        i = ev_part[e]
        if not active[i]:
            continue
        t = ev_times[e]
        d = ev_dirs[e]
        x = p_pos[i]
        ci = p_class[i]
        q = x + d
        if q < 0 or q >= m:
            occ_class[x] = 0
            site_part[x] = -1
            active[i] = False
            rec_t[nr] = t
            rec_site[nr] = x
            rec_old[nr] = ci
            rec_new[nr] = 0
            rec_mover[nr] = ci
            nr += 1
            exit_t[nexit] = t
            exit_i[nexit] = i
            nexit += 1
            continue
        j = site_part[q]
        if j == -1:
            occ_class[x] = 0
            occ_class[q] = ci
            site_part[x] = -1
            site_part[q] = i
            p_pos[i] = q
            rec_t[nr] = t
            rec_site[nr] = x
            rec_old[nr] = ci
            rec_new[nr] = 0
            rec_mover[nr] = ci
            nr += 1
            rec_t[nr] = t
            rec_site[nr] = q
            rec_old[nr] = 0
            rec_new[nr] = ci
            rec_mover[nr] = ci
            nr += 1
            path_t[npth] = t
            path_p[npth] = i
            path_x[npth] = q
            npth += 1
        elif p_class[j] <= ci:
            pass
        else:
            cj = p_class[j]
            occ_class[x] = cj
            occ_class[q] = ci
            site_part[x] = j
            site_part[q] = i
            p_pos[i] = q
            p_pos[j] = x
            rec_t[nr] = t
            rec_site[nr] = x
            rec_old[nr] = ci
            rec_new[nr] = cj
            rec_mover[nr] = ci
            nr += 1
            rec_t[nr] = t
            rec_site[nr] = q
            rec_old[nr] = cj
            rec_new[nr] = ci
            rec_mover[nr] = ci
            nr += 1
            path_t[npth] = t
            path_p[npth] = i
            path_x[npth] = q
            npth += 1
            path_t[npth] = t
            path_p[npth] = j
            path_x[npth] = x
            npth += 1

    return (
        rec_t[:nr].copy(),
        rec_site[:nr].copy(),
        rec_old[:nr].copy(),
        rec_new[:nr].copy(),
        rec_mover[:nr].copy(),
        path_t[:npth].copy(),
        path_p[:npth].copy(),
        path_x[:npth].copy(),
        exit_t[:nexit].copy(),
        exit_i[:nexit].copy(),
    )
