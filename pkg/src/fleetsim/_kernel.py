"""Array-level lookahead simulator used to score rollout candidates.

Mirrors simulation.transition and the greedy / instantaneous-assignment
policies on packed int arrays (0-based node indices). Costs are integer
stage-cost sums, so scores are exactly comparable with the object-engine
reference path. Jitted with numba when available; the same code runs
interpreted otherwise.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]

        def wrap(f):
            return f

        return wrap

KIND_STAY = 0
KIND_MOVE = 1
KIND_PICKUP = 2
KIND_HOP = 3

BASE_GREEDY = 0
BASE_INSTANTANEOUS = 1


@njit(cache=True)
def _nearest(nu_l, out_p, out_e, out_n, dist):
    """Slot of the nearest outstanding request (ties: entry time, pickup id,
    insertion order); -1 when none is reachable."""
    best = -1
    bd = 0
    be = 0
    bp = 0
    for r in range(out_n):
        d = dist[nu_l, out_p[r]]
        if d < 0:
            continue
        if best < 0 or d < bd or (d == bd and (out_e[r] < be or
                                               (out_e[r] == be and out_p[r] < bp))):
            best = r
            bd = d
            be = out_e[r]
            bp = out_p[r]
    return best


@njit(cache=True)
def _greedy_joint(nu, tau, out_p, out_e, out_n, dist, nxt, kind, arg):
    m = nu.shape[0]
    for l in range(m):
        if tau[l] > 0:
            kind[l] = KIND_HOP
            arg[l] = -1
            continue
        r = _nearest(nu[l], out_p, out_e, out_n, dist)
        if r < 0:
            kind[l] = KIND_STAY
            arg[l] = -1
        elif dist[nu[l], out_p[r]] == 0:
            kind[l] = KIND_PICKUP
            arg[l] = -1
        else:
            kind[l] = KIND_MOVE
            arg[l] = nxt[nu[l], out_p[r]]


@njit(cache=True)
def _instantaneous_joint(nu, tau, out_p, out_e, out_n, dist, nxt, kind, arg,
                         agent_done, req_done):
    """Iterative matching: commit the globally minimal (distance, agent,
    entry, pickup, slot) pair until no pair remains."""
    m = nu.shape[0]
    for l in range(m):
        if tau[l] > 0:
            kind[l] = KIND_HOP
            arg[l] = -1
            agent_done[l] = True
        else:
            kind[l] = KIND_STAY
            arg[l] = -1
            agent_done[l] = False
    for r in range(out_n):
        req_done[r] = False
    while True:
        ba = -1
        br = -1
        bd = 0
        be = 0
        bp = 0
        for a in range(m):
            if agent_done[a]:
                continue
            for r in range(out_n):
                if req_done[r]:
                    continue
                d = dist[nu[a], out_p[r]]
                if d < 0:
                    continue
                take = False
                if ba < 0 or d < bd:
                    take = True
                elif d == bd and a == ba:
                    if out_e[r] < be or (out_e[r] == be and out_p[r] < bp):
                        take = True
                if take:
                    ba = a
                    br = r
                    bd = d
                    be = out_e[r]
                    bp = out_p[r]
        if ba < 0:
            break
        agent_done[ba] = True
        req_done[br] = True
        if bd == 0:
            kind[ba] = KIND_PICKUP
            arg[ba] = -1
        else:
            kind[ba] = KIND_MOVE
            arg[ba] = nxt[nu[ba], out_p[br]]


@njit(cache=True)
def _apply(nu, tau, drop, out_p, out_d, out_e, out_n, kind, arg, dist, nxt,
           arr_p, arr_d, a_from, a_to, t_next):
    """One transition: agents in index order, then next-step arrivals."""
    m = nu.shape[0]
    for l in range(m):
        k = kind[l]
        if k == KIND_HOP:
            nu[l] = nxt[nu[l], drop[l]]
            tau[l] -= 1
            if tau[l] == 0:
                drop[l] = -1
        elif k == KIND_MOVE:
            nu[l] = arg[l]
        elif k == KIND_PICKUP:
            best = -1
            be = 0
            for r in range(out_n):
                if out_p[r] == nu[l] and (best < 0 or out_e[r] < be):
                    best = r
                    be = out_e[r]
            if best >= 0:
                d = dist[nu[l], out_d[best]]
                tau[l] = d
                if d > 0:
                    drop[l] = out_d[best]
                else:
                    drop[l] = -1
                for r in range(best, out_n - 1):
                    out_p[r] = out_p[r + 1]
                    out_d[r] = out_d[r + 1]
                    out_e[r] = out_e[r + 1]
                out_n -= 1
            # else a lower-indexed agent took the request: stay put
    for i in range(a_from, a_to):
        out_p[out_n] = arr_p[i]
        out_d[out_n] = arr_d[i]
        out_e[out_n] = t_next
        out_n += 1
    return out_n


@njit(cache=True)
def score_candidates(dist, nxt, agent, nu0, tau0, drop0, out_p0, out_d0,
                     out_e0, n_out0, fixed_kind, fixed_arg, cand_kind,
                     cand_arg, base_code, lookahead, t0, scen_off, arr_t,
                     arr_p, arr_d):
    """Total lookahead cost of each candidate control, summed over scenarios.

    Per scenario and candidate: apply the fixed joint control with the
    candidate substituted for `agent`, then `lookahead` base-policy steps,
    accumulating the outstanding-request count of every visited state plus a
    terminal count. Returns int64 totals (divide by scenario count for the
    Monte-Carlo mean).
    """
    m = nu0.shape[0]
    n_cand = cand_kind.shape[0]
    n_scen = scen_off.shape[0] - 1
    totals = np.zeros(n_cand, dtype=np.int64)
    maxa = 0
    for s in range(n_scen):
        w = scen_off[s + 1] - scen_off[s]
        if w > maxa:
            maxa = w
    cap = n_out0 + maxa + 1
    nu = np.empty(m, np.int64)
    tau = np.empty(m, np.int64)
    drop = np.empty(m, np.int64)
    op = np.empty(cap, np.int64)
    od = np.empty(cap, np.int64)
    oe = np.empty(cap, np.int64)
    kind = np.empty(m, np.int64)
    arg = np.empty(m, np.int64)
    agent_done = np.empty(m, np.bool_)
    req_done = np.empty(cap, np.bool_)
    for s in range(n_scen):
        s0 = scen_off[s]
        s1 = scen_off[s + 1]
        for c in range(n_cand):
            for l in range(m):
                nu[l] = nu0[l]
                tau[l] = tau0[l]
                drop[l] = drop0[l]
            for r in range(n_out0):
                op[r] = out_p0[r]
                od[r] = out_d0[r]
                oe[r] = out_e0[r]
            n = n_out0
            total = n
            for l in range(m):
                kind[l] = fixed_kind[l]
                arg[l] = fixed_arg[l]
            kind[agent] = cand_kind[c]
            arg[agent] = cand_arg[c]
            ptr = s0
            t_next = t0 + 1
            a_from = ptr
            while ptr < s1 and arr_t[ptr] == t_next:
                ptr += 1
            n = _apply(nu, tau, drop, op, od, oe, n, kind, arg, dist, nxt,
                       arr_p, arr_d, a_from, ptr, t_next)
            total += n
            for _ in range(lookahead):
                if base_code == BASE_GREEDY:
                    _greedy_joint(nu, tau, op, oe, n, dist, nxt, kind, arg)
                else:
                    _instantaneous_joint(nu, tau, op, oe, n, dist, nxt, kind,
                                         arg, agent_done, req_done)
                t_next += 1
                a_from = ptr
                while ptr < s1 and arr_t[ptr] == t_next:
                    ptr += 1
                n = _apply(nu, tau, drop, op, od, oe, n, kind, arg, dist, nxt,
                           arr_p, arr_d, a_from, ptr, t_next)
                total += n
            total += n
            totals[c] += total
    return totals
