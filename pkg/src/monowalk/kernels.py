"""Compiled inner loops for the Monte Carlo heavy paths.

All kernels consume ``numpy.random.Generator`` objects directly (numba shares
the bit-generator state with numpy), choose among ``k`` candidate moves with
``int(u * k)`` in :func:`monowalk.lattice.neighbors` order, and therefore
reproduce the pure-Python engine draw for draw.

Sites are packed into int64 keys exactly like :func:`monowalk.lattice.site_key`.
"""

from __future__ import annotations

import numba
import numpy as np

from .rng import edge_uniform_nb

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


# -- int64 open-addressing hash set (keys are non-negative; -1 marks empty) ------------


@numba.njit(cache=True)
def hs_new(capacity):
    cap = 16
    while cap < 2 * capacity:
        cap *= 2
    return np.full(cap, -1, dtype=np.int64)


@numba.njit(cache=True)
def _slot(keys, key):
    mask = keys.size - 1
    h = np.uint64(key) * _GOLDEN
    i = np.int64((h >> np.uint64(29)) & np.uint64(mask))
    while True:
        k = keys[i]
        if k == key or k == -1:
            return i
        i = (i + 1) & mask


@numba.njit(cache=True)
def hs_contains(keys, key):
    return keys[_slot(keys, key)] == key


@numba.njit(cache=True)
def _grow(keys):
    new = np.full(keys.size * 2, -1, dtype=np.int64)
    for k in keys:
        if k != -1:
            new[_slot(new, k)] = k
    return new


@numba.njit(cache=True)
def hs_add(keys, count, key):
    """Insert ``key``; ``count`` is a 1-element array.  Returns the (maybe grown) table."""
    i = _slot(keys, key)
    if keys[i] == key:
        return keys
    keys[i] = key
    count[0] += 1
    if 2 * count[0] > keys.size:
        keys = _grow(keys)
    return keys


@numba.njit(cache=True)
def encode(pos, bits):
    off = np.int64(1) << (bits - 1)
    key = np.int64(0)
    for i in range(pos.size):
        key |= (pos[i] + off) << (bits * i)
    return key


@numba.njit(cache=True)
def _record(cps, ci, t, n0, last, n0_out, last_out):
    while ci < cps.size and cps[ci] <= t:
        n0_out[ci] = n0
        last_out[ci] = last
        ci += 1
    return ci


@numba.njit(cache=True)
def _is_origin(pos):
    for c in pos:
        if c != 0:
            return False
    return True


# -- plain SRW on Z^d -------------------------------------------------------------------


@numba.njit(cache=True)
def srw_kernel(g, d, horizon, cps, traj):
    """SRW on Z^d.  ``traj`` is (horizon+1, d) to record the path, or (0, d)."""
    pos = np.zeros(d, dtype=np.int64)
    n0, last = 1, 0
    n0_out = np.zeros(cps.size, dtype=np.int64)
    last_out = np.zeros(cps.size, dtype=np.int64)
    keep = traj.shape[0] > 0
    ci = 0
    for t in range(horizon):
        j = int(g.random() * 2 * d)
        pos[j // 2] += 1 if j % 2 else -1
        if _is_origin(pos):
            n0 += 1
            last = t + 1
        if keep:
            traj[t + 1] = pos
        ci = _record(cps, ci, t + 1, n0, last, n0_out, last_out)
    return n0_out, last_out, pos


# -- expanding glassy spheres ---------------------------------------------------------------


@numba.njit(cache=True)
def _in_shell(pos, y_axis, y_shift, k, cnum, cden, graph):
    if graph:
        s = 0
        for i in range(pos.size):
            c = pos[i] + (y_shift if i == y_axis else 0)
            s += abs(c)
        return s * cden <= cnum * k
    s = 0
    for i in range(pos.size):
        c = pos[i] + (y_shift if i == y_axis else 0)
        s += c * c
    return s * cden * cden <= (cnum * k) * (cnum * k)


@numba.njit(cache=True)
def egs_kernel(g, d, cnum, cden, graph, sched, horizon, cps, traj):
    """EGS walk.  ``sched[k]`` is N(k) for k >= 1; running past it truncates."""
    pos = np.zeros(d, dtype=np.int64)
    dirs = np.zeros(2 * d, dtype=np.int64)
    k, hits = 1, 0
    n0, last = 1, 0
    taus = np.full(sched.size + 1, -1, dtype=np.int64)
    taus[1] = 0
    n0_out = np.zeros(cps.size, dtype=np.int64)
    last_out = np.zeros(cps.size, dtype=np.int64)
    k_out = np.zeros(cps.size, dtype=np.int64)
    l1_out = np.zeros(cps.size, dtype=np.int64)
    keep = traj.shape[0] > 0
    truncated = False
    ci = 0
    for t in range(horizon):
        cnt = 0
        for i in range(d):
            if _in_shell(pos, i, -1, k, cnum, cden, graph):
                dirs[cnt] = 2 * i
                cnt += 1
            if _in_shell(pos, i, 1, k, cnum, cden, graph):
                dirs[cnt] = 2 * i + 1
                cnt += 1
        on_boundary = cnt < 2 * d
        j = dirs[int(g.random() * cnt)]
        pos[j // 2] += 1 if j % 2 else -1
        if on_boundary:
            hits += 1
            if hits >= sched[k]:
                k += 1
                hits = 0
                if k >= sched.size:
                    truncated = True
                else:
                    taus[k] = t + 1
        if _is_origin(pos):
            n0 += 1
            last = t + 1
        if keep:
            traj[t + 1] = pos
        while ci < cps.size and cps[ci] <= t + 1:
            n0_out[ci] = n0
            last_out[ci] = last
            k_out[ci] = k
            s = 0
            for c in pos:
                s += abs(c)
            l1_out[ci] = s
            ci += 1
        if truncated:
            break
    return n0_out, last_out, k_out, l1_out, taus, truncated


# -- probing walks ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _n_aligned(pos, L):
    n = 0
    for c in pos:
        if c % L == 0:
            n += 1
    return n


@numba.njit(cache=True)
def _on_skeleton(pos, axis, shift, L, need):
    n = 0
    for i in range(pos.size):
        c = pos[i] + (shift if i == axis else 0)
        if c % L == 0:
            n += 1
    return n >= need


@numba.njit(cache=True)
def guided_kernel(g, d, L, variant, need, horizon, cps, traj, bits):
    """Guided probing on the stretched lattice.

    variant 0: probe every closed lattice edge at first visits (d >= 3 scheme);
    variant 1: at junctions probe only right/up/down (d = 2 scheme);
    variant 2: no probes, SRW on the fixed stretched lattice.
    ``need`` is the number of coordinates that must be multiples of L.
    """
    pos = np.zeros(d, dtype=np.int64)
    y = np.zeros(d, dtype=np.int64)
    dom = hs_new(1024)
    nd = np.zeros(1, dtype=np.int64)
    vis = hs_new(1024)
    nv = np.zeros(1, dtype=np.int64)
    dom = hs_add(dom, nd, encode(pos, bits))
    dirs = np.zeros(2 * d, dtype=np.int64)
    n0, last = 1, 0
    mcum = 0
    first_visit_probes = np.zeros(2 * d + 1, dtype=np.int64)
    junction_probes = np.zeros(2 * d + 1, dtype=np.int64)
    n0_out = np.zeros(cps.size, dtype=np.int64)
    last_out = np.zeros(cps.size, dtype=np.int64)
    m_out = np.zeros(cps.size, dtype=np.int64)
    sites_out = np.zeros(cps.size, dtype=np.int64)
    keep = traj.shape[0] > 0
    ci = 0
    for t in range(horizon):
        m = 0
        if variant != 2:
            key = encode(pos, bits)
            if not hs_contains(vis, key):
                vis = hs_add(vis, nv, key)
                junction = _n_aligned(pos, L) == d
                for i in range(d):
                    for s in (-1, 1):
                        if not _on_skeleton(pos, i, s, L, need):
                            continue
                        if variant == 1 and junction and i == 0 and s == -1:
                            continue
                        y[:] = pos
                        y[i] += s
                        yk = encode(y, bits)
                        if not hs_contains(dom, yk):
                            dom = hs_add(dom, nd, yk)
                            m += 1
                if t > 0:
                    first_visit_probes[m] += 1
                    if junction:
                        junction_probes[m] += 1
        cnt = 0
        for i in range(d):
            for s in (-1, 1):
                if not _on_skeleton(pos, i, s, L, need):
                    continue
                if variant != 2:
                    y[:] = pos
                    y[i] += s
                    if not hs_contains(dom, encode(y, bits)):
                        continue
                dirs[cnt] = 2 * i + (1 if s == 1 else 0)
                cnt += 1
        j = dirs[int(g.random() * cnt)]
        pos[j // 2] += 1 if j % 2 else -1
        mcum += m
        if _is_origin(pos):
            n0 += 1
            last = t + 1
        if keep:
            traj[t + 1] = pos
        while ci < cps.size and cps[ci] <= t + 1:
            n0_out[ci] = n0
            last_out[ci] = last
            m_out[ci] = mcum
            sites_out[ci] = nd[0]
            ci += 1
    return n0_out, last_out, m_out, sites_out, first_visit_probes, junction_probes


@numba.njit(cache=True)
def _aux_exit(g, start, dom, bits, cap, max_retries, out):
    """SRW on Z^d from ``start`` until it leaves ``dom``; exit site written to ``out``."""
    d = start.size
    for attempt in range(max_retries):
        out[:] = start
        for _ in range(cap):
            j = int(g.random() * 2 * d)
            out[j // 2] += 1 if j % 2 else -1
            if not hs_contains(dom, encode(out, bits)):
                return attempt
    raise RuntimeError("auxiliary probe walk exceeded its step cap on every retry")


@numba.njit(cache=True)
def probe_batch(g, start, dom, bits, n, cap, max_retries):
    """``n`` independent unguided probes from ``start`` on a frozen domain."""
    d = start.size
    out = np.zeros((n, d), dtype=np.int64)
    y = np.zeros(d, dtype=np.int64)
    for r in range(n):
        _aux_exit(g, start, dom, bits, cap, max_retries, y)
        out[r] = y
    return out


@numba.njit(cache=True)
def coupon_kernel(g_walk, g_aux, d, extra, horizon, cps, traj, bits, cap, max_retries):
    """Unguided probes until B(z,1) is in the domain at each first visit, then SRW on Z^d."""
    pos = np.zeros(d, dtype=np.int64)
    y = np.zeros(d, dtype=np.int64)
    dom = hs_new(1024)
    nd = np.zeros(1, dtype=np.int64)
    vis = hs_new(1024)
    nv = np.zeros(1, dtype=np.int64)
    dom = hs_add(dom, nd, encode(pos, bits))
    fv = np.zeros(horizon + 1, dtype=np.int64)
    nfv = 0
    retries = 0
    n0, last = 1, 0
    mcum = 0
    n0_out = np.zeros(cps.size, dtype=np.int64)
    last_out = np.zeros(cps.size, dtype=np.int64)
    m_out = np.zeros(cps.size, dtype=np.int64)
    sites_out = np.zeros(cps.size, dtype=np.int64)
    keep = traj.shape[0] > 0
    ci = 0
    for t in range(horizon):
        m = 0
        key = encode(pos, bits)
        if not hs_contains(vis, key):
            vis = hs_add(vis, nv, key)
            cnt = 0
            while True:
                full = True
                for i in range(d):
                    for s in (-1, 1):
                        y[:] = pos
                        y[i] += s
                        if not hs_contains(dom, encode(y, bits)):
                            full = False
                if full:
                    break
                retries += _aux_exit(g_aux, pos, dom, bits, cap, max_retries, y)
                dom = hs_add(dom, nd, encode(y, bits))
                cnt += 1
            fv[nfv] = cnt
            nfv += 1
            m += cnt
        for _ in range(extra):
            retries += _aux_exit(g_aux, pos, dom, bits, cap, max_retries, y)
            dom = hs_add(dom, nd, encode(y, bits))
            m += 1
        j = int(g_walk.random() * 2 * d)
        pos[j // 2] += 1 if j % 2 else -1
        mcum += m
        if _is_origin(pos):
            n0 += 1
            last = t + 1
        if keep:
            traj[t + 1] = pos
        while ci < cps.size and cps[ci] <= t + 1:
            n0_out[ci] = n0
            last_out[ci] = last
            m_out[ci] = mcum
            sites_out[ci] = nd[0]
            ci += 1
    return n0_out, last_out, m_out, sites_out, fv[:nfv], retries


# -- biased first-open-by-touch walk coupled to a free SRW -------------------------------------


@numba.njit(cache=True)
def _d0_open(seed, p, lower, axis, bits):
    if p <= 0.0:
        return False
    eid = encode(lower, bits) * 8 + axis
    return edge_uniform_nb(seed, eid) < p


@numba.njit(cache=True)
def coupled_kernel(g, p, seed, horizon, cps, traj_e, traj_r, bits):
    """Joint evolution of the right/up/down opening walk E and a coupled SRW R on Z^2.

    Returns diff1 at checkpoints, the number of monotonicity violations of
    (E - R)_1, super-non-NV counts (total and with the left edge outside D0),
    and empirical increment counts for marginal checks.
    """
    E = np.zeros(2, dtype=np.int64)
    R = np.zeros(2, dtype=np.int64)
    left = np.zeros(2, dtype=np.int64)
    vis = hs_new(1024)
    nv = np.zeros(1, dtype=np.int64)
    n0, last = 1, 0
    violations = 0
    snn, snn_free = 0, 0
    stays = 0
    # rows: 0 = left open, 1 = left closed; cols: left, right, down, up
    e_counts = np.zeros((2, 4), dtype=np.int64)
    r_counts = np.zeros(4, dtype=np.int64)
    diff_out = np.zeros(cps.size, dtype=np.int64)
    n0_out = np.zeros(cps.size, dtype=np.int64)
    last_out = np.zeros(cps.size, dtype=np.int64)
    keep = traj_e.shape[0] > 0
    prev = 0
    ci = 0
    for t in range(horizon):
        key = encode(E, bits)
        left[0] = E[0] - 1
        left[1] = E[1]
        lkey = encode(left, bits)
        if not hs_contains(vis, key):
            if not hs_contains(vis, lkey):
                snn += 1
                if not _d0_open(seed, p, left, 0, bits):
                    snn_free += 1
            vis = hs_add(vis, nv, key)
            stays += 1
        else:
            u = g.random()
            left_open = hs_contains(vis, lkey) or _d0_open(seed, p, left, 0, bits)
            if left_open:
                je = int(u * 4)
                jr = je
            else:
                s = int(u * 12)
                if s < 9:
                    je = 1 + s // 3
                    jr = je
                else:
                    je = 1 + (s - 9)
                    jr = 0
            e_counts[0 if left_open else 1, je] += 1
            r_counts[jr] += 1
            E[je // 2] += 1 if je % 2 else -1
            R[jr // 2] += 1 if jr % 2 else -1
        diff = E[0] - R[0]
        if diff < prev:
            violations += 1
        prev = diff
        if E[0] == 0 and E[1] == 0:
            n0 += 1
            last = t + 1
        if keep:
            traj_e[t + 1] = E
            traj_r[t + 1] = R
        while ci < cps.size and cps[ci] <= t + 1:
            diff_out[ci] = diff
            n0_out[ci] = n0
            last_out[ci] = last
            ci += 1
    return diff_out, n0_out, last_out, violations, snn, snn_free, stays, e_counts, r_counts


# -- layered birth-death chain -------------------------------------------------------------------


@numba.njit(cache=True)
def _binomial(g, n, q):
    c = 0
    for _ in range(n):
        if g.random() < q:
            c += 1
    return c


@numba.njit(cache=True)
def layered_kernel(g, p_plus, q, N, horizon, cps, max_events):
    """Birth-death chain whose frontier edge (k, k+1) opens after Binomial(N(k), q_k) down-steps.

    Also tracks the eta/sigma stopping times online (boundary = {frontier}).
    """
    W, F = 0, 1
    downs = 0
    budget = _binomial(g, N[1], q[1])
    n0, last = 1, 0
    n0_out = np.zeros(cps.size, dtype=np.int64)
    last_out = np.zeros(cps.size, dtype=np.int64)
    front_out = np.zeros(cps.size, dtype=np.int64)
    ev_eta = np.zeros(max_events, dtype=np.int64)
    ev_start = np.zeros(max_events, dtype=np.int64)
    ev_front = np.zeros(max_events, dtype=np.int64)
    ev_sigma = np.full(max_events, -1, dtype=np.int64)
    ev_hit = np.zeros(max_events, dtype=np.bool_)
    ne = 0
    waiting = False
    frozen = 0
    overflow = False
    max_w = 0
    ci = 0
    for t in range(horizon):
        if waiting:
            if W == frozen:
                ev_sigma[ne - 1] = t
                waiting = False
            elif W == 0:
                ev_hit[ne - 1] = True
        if not waiting and W != F:
            if ne < max_events:
                ev_eta[ne] = t
                ev_start[ne] = W
                ev_front[ne] = F
                ev_hit[ne] = W == 0
                ne += 1
                waiting = True
                frozen = F
            else:
                overflow = True
        if W == F and downs < budget:
            downs += 1
            W -= 1
        else:
            if W == F:
                F += 1
                downs = 0
                if F >= N.size:
                    overflow = True
                    break
                budget = _binomial(g, N[F], q[F])
            if g.random() < p_plus[W]:
                W += 1
            else:
                W -= 1
        if W > max_w:
            max_w = W
        if W == 0:
            n0 += 1
            last = t + 1
        while ci < cps.size and cps[ci] <= t + 1:
            n0_out[ci] = n0
            last_out[ci] = last
            front_out[ci] = F
            ci += 1
    return (n0_out, last_out, front_out, ev_eta[:ne], ev_start[:ne], ev_front[:ne],
            ev_sigma[:ne], ev_hit[:ne], overflow, max_w)
