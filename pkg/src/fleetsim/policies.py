"""Dispatch policies: greedy, instantaneous assignment, one-agent-at-a-time
rollout with limited certainty-equivalence sampling, and the full-information
auction oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernel
from .auction import optimal_assignment
from .citygraph import CityGraph
from .demand import SectorDemandModel, sample_local_demand
from .simulation import (Control, DemandStream, PolicyTrace, SystemState,
                         legal_controls, run_episode, stage_cost, transition)

UNREACHABLE_COST = 10 ** 6


class GreedyPolicy:
    """Each available agent independently heads for its nearest outstanding
    request (ties: entry time, then pickup id); no coordination."""

    name = "greedy"

    def reset(self, seed=None):
        pass

    def decide(self, state: SystemState, g: CityGraph) -> list[Control]:
        dist = g.distance_matrix
        nxt = g.next_hop_matrix
        controls = []
        for l in range(state.m):
            if state.trip_remaining[l] > 0:
                controls.append(Control.hop())
                continue
            loc = state.agent_locations[l] - 1
            best_key = None
            best = None
            for r in state.outstanding:
                d = dist[loc, r.pickup - 1]
                if d < 0:
                    continue
                key = (d, r.entry_time, r.pickup)
                if best_key is None or key < best_key:
                    best_key = key
                    best = r
            if best is None:
                controls.append(Control.stay())
            elif best_key[0] == 0:
                controls.append(Control.pickup())
            else:
                controls.append(Control.move(int(nxt[loc, best.pickup - 1]) + 1))
        return controls


class InstantaneousAssignmentPolicy:
    """Iterative matching: repeatedly commit the globally closest
    (available agent, outstanding request) pair, ties broken by agent index
    then request age, and route the matched agents."""

    name = "instantaneous"

    def reset(self, seed=None):
        pass

    def decide(self, state: SystemState, g: CityGraph) -> list[Control]:
        dist = g.distance_matrix
        nxt = g.next_hop_matrix
        controls = [Control.hop() if state.trip_remaining[l] > 0 else Control.stay()
                    for l in range(state.m)]
        free_agents = [l for l in range(state.m) if state.trip_remaining[l] == 0]
        free_reqs = set(range(len(state.outstanding)))
        matched = set()
        while True:
            best = None  # (d, agent, entry, pickup, slot)
            for a in free_agents:
                if a in matched:
                    continue
                loc = state.agent_locations[a] - 1
                for ri in sorted(free_reqs):
                    r = state.outstanding[ri]
                    d = dist[loc, r.pickup - 1]
                    if d < 0:
                        continue
                    key = (d, a, r.entry_time, r.pickup, ri)
                    if best is None or key < best:
                        best = key
            if best is None:
                break
            d, a, _, _, ri = best
            matched.add(a)
            free_reqs.discard(ri)
            if d == 0:
                controls[a] = Control.pickup()
            else:
                loc = state.agent_locations[a] - 1
                pick = state.outstanding[ri].pickup - 1
                controls[a] = Control.move(int(nxt[loc, pick]) + 1)
        return controls


@dataclass
class RolloutConfig:
    """Knobs for one-agent-at-a-time rollout.

    sampling_scope "local" draws demand only from the agent's sector and its
    adjacent sectors; "full" samples the whole map. backend "kernel" scores
    candidates on the packed-array simulator, "reference" replays the object
    engine (slow, for cross-checks), "auto" picks the kernel.
    """

    base_policy: str = "greedy"
    lookahead: int = 10
    mc_scenarios: int = 1000
    sampling_scope: str = "local"
    dest_mode: str = "renormalize"
    agent_order: str = "index"
    backend: str = "auto"
    seed: int = 0

    def __post_init__(self):
        if self.lookahead < 1:
            raise ValueError("lookahead must be >= 1")
        if self.mc_scenarios < 1:
            raise ValueError("mc_scenarios must be >= 1")
        if self.base_policy not in ("greedy", "instantaneous"):
            raise ValueError(f"unknown base policy {self.base_policy!r}")
        if self.sampling_scope not in ("local", "full"):
            raise ValueError(f"unknown sampling scope {self.sampling_scope!r}")
        if self.agent_order not in ("index", "random"):
            raise ValueError(f"unknown agent order {self.agent_order!r}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


_CONTROL_CODE = {"stay": _kernel.KIND_STAY, "move": _kernel.KIND_MOVE,
                 "pickup": _kernel.KIND_PICKUP, "hop": _kernel.KIND_HOP}


def _encode_control(u: Control) -> tuple[int, int]:
    code = _CONTROL_CODE[u.kind]
    arg = u.target - 1 if u.kind == "move" else -1
    return code, arg


def _bucket_by_step(requests) -> dict[int, list]:
    buckets: dict[int, list] = {}
    for r in requests:
        buckets.setdefault(r.entry_time, []).append(r)
    return buckets


class RolloutPolicy:
    """One-agent-at-a-time rollout over a base policy.

    Agents are processed in order; each candidate control is scored by the
    Monte-Carlo average of simulated futures in which already-processed
    agents keep their chosen controls, the remaining agents follow the base
    policy for the lookahead horizon, and demand is sampled around the
    agent's sector. Scenario streams are seeded per (root seed, step, agent,
    scenario index), so decisions are reproducible and candidates share
    common random numbers.
    """

    def __init__(self, models: dict[int, SectorDemandModel],
                 config: RolloutConfig | None = None, name: str = "rollout"):
        self.models = models
        self.cfg = config or RolloutConfig()
        self.name = name
        self._root = self.cfg.seed
        if self.cfg.base_policy == "greedy":
            self._base = GreedyPolicy()
            self._base_code = _kernel.BASE_GREEDY
        else:
            self._base = InstantaneousAssignmentPolicy()
            self._base_code = _kernel.BASE_INSTANTANEOUS
        backend = self.cfg.backend
        self._use_kernel = backend in ("auto", "kernel")
        if backend not in ("auto", "kernel", "reference"):
            raise ValueError(f"unknown backend {backend!r}")

    def reset(self, seed=None):
        if seed is not None:
            self._root = int(seed)

    def scenario_rng(self, t: int, agent: int, index: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self._root, t, agent, index]))

    def _sample_scenarios(self, state: SystemState, g: CityGraph, agent: int):
        center = g.sector_of(state.agent_locations[agent])
        return [
            sample_local_demand(
                self.models, center, g, minutes=self.cfg.lookahead + 1,
                rng=self.scenario_rng(state.time, agent, i),
                start_time=state.time, scope=self.cfg.sampling_scope,
                dest_mode=self.cfg.dest_mode)
            for i in range(self.cfg.mc_scenarios)
        ]

    def decide(self, state: SystemState, g: CityGraph) -> list[Control]:
        base_joint = self._base.decide(state, g)
        chosen = list(base_joint)
        m = state.m
        if self.cfg.agent_order == "random":
            rng = np.random.default_rng(
                np.random.SeedSequence([self._root, state.time, 0x0EDE]))
            order = [int(v) for v in rng.permutation(m)]
        else:
            order = list(range(m))
        processed = [False] * m
        for l in order:
            if state.trip_remaining[l] > 0:
                chosen[l] = Control.hop()
                processed[l] = True
                continue
            candidates = legal_controls(state, l, g)
            if len(candidates) == 1:
                chosen[l] = candidates[0]
                processed[l] = True
                continue
            fixed = [chosen[j] if processed[j] else base_joint[j] for j in range(m)]
            scenarios = self._sample_scenarios(state, g, l)
            if self._use_kernel:
                totals = self._score_kernel(state, g, l, candidates, fixed, scenarios)
            else:
                totals = self._score_reference(state, g, l, candidates, fixed, scenarios)
            best = 0
            for i in range(1, len(candidates)):
                if totals[i] < totals[best]:
                    best = i
            chosen[l] = candidates[best]
            processed[l] = True
        return chosen

    # -- scoring backends ------------------------------------------------

    def _score_kernel(self, state, g, agent, candidates, fixed, scenarios):
        dist = g.distance_matrix
        nxt = g.next_hop_matrix
        nu0 = np.array([v - 1 for v in state.agent_locations], dtype=np.int64)
        tau0 = np.array(state.trip_remaining, dtype=np.int64)
        drop0 = np.array([d - 1 if d > 0 else -1 for d in state.trip_dropoff],
                         dtype=np.int64)
        out_p0 = np.array([r.pickup - 1 for r in state.outstanding], dtype=np.int64)
        out_d0 = np.array([r.dropoff - 1 for r in state.outstanding], dtype=np.int64)
        out_e0 = np.array([r.entry_time for r in state.outstanding], dtype=np.int64)
        fixed_kind = np.empty(state.m, dtype=np.int64)
        fixed_arg = np.empty(state.m, dtype=np.int64)
        for j, u in enumerate(fixed):
            fixed_kind[j], fixed_arg[j] = _encode_control(u)
        cand_kind = np.empty(len(candidates), dtype=np.int64)
        cand_arg = np.empty(len(candidates), dtype=np.int64)
        for i, u in enumerate(candidates):
            cand_kind[i], cand_arg[i] = _encode_control(u)
        offsets = [0]
        arr_t = []
        arr_p = []
        arr_d = []
        for reqs in scenarios:
            ordered = sorted(reqs, key=lambda r: r.entry_time)  # stable
            for r in ordered:
                arr_t.append(r.entry_time)
                arr_p.append(r.pickup - 1)
                arr_d.append(r.dropoff - 1)
            offsets.append(len(arr_t))
        totals = _kernel.score_candidates(
            dist, nxt, agent, nu0, tau0, drop0, out_p0, out_d0, out_e0,
            len(state.outstanding), fixed_kind, fixed_arg, cand_kind, cand_arg,
            self._base_code, self.cfg.lookahead, state.time,
            np.array(offsets, dtype=np.int64),
            np.array(arr_t, dtype=np.int64),
            np.array(arr_p, dtype=np.int64),
            np.array(arr_d, dtype=np.int64))
        return [int(v) for v in totals]

    def _score_reference(self, state, g, agent, candidates, fixed, scenarios):
        t0 = state.time
        horizon = self.cfg.lookahead
        totals = [0] * len(candidates)
        for reqs in scenarios:
            buckets = _bucket_by_step(reqs)
            for ci, u in enumerate(candidates):
                st = state.clone()
                joint = list(fixed)
                joint[agent] = u
                total = stage_cost(st)
                st = transition(st, joint,
                                [r.clone() for r in buckets.get(t0 + 1, [])], g)
                total += stage_cost(st)
                for _ in range(horizon):
                    jb = self._base.decide(st, g)
                    st = transition(st, jb,
                                    [r.clone() for r in buckets.get(st.time + 1, [])], g)
                    total += stage_cost(st)
                total += stage_cost(st)
                totals[ci] += total
        return totals


class OraclePolicy:
    """Full-information baseline: knows every future request and re-solves a
    minimum-total-wait assignment (auction algorithm) each step, routing
    agents toward their assigned pickups; waiting at a pickup before the
    request enters is allowed."""

    name = "oracle"

    def __init__(self, future: DemandStream):
        self._templates = future.all_requests()

    def reset(self, seed=None):
        pass

    def decide(self, state: SystemState, g: CityGraph) -> list[Control]:
        dist = g.distance_matrix
        nxt = g.next_hop_matrix
        t = state.time
        targets = [(r.pickup, r.entry_time, True) for r in state.outstanding]
        targets.extend((r.pickup, r.entry_time, False)
                       for r in self._templates if r.entry_time > t)
        controls = [Control.hop() if state.trip_remaining[l] > 0 else Control.stay()
                    for l in range(state.m)]
        if not targets:
            return controls
        m = state.m
        cost = np.empty((m, len(targets)), dtype=np.float64)
        for a in range(m):
            if state.trip_remaining[a] > 0:
                origin = state.trip_dropoff[a] - 1
                delay = state.trip_remaining[a]
            else:
                origin = state.agent_locations[a] - 1
                delay = 0
            for j, (pick, entry, _) in enumerate(targets):
                d = dist[origin, pick - 1]
                if d < 0:
                    cost[a, j] = UNREACHABLE_COST
                else:
                    cost[a, j] = max(t + delay + int(d), entry) + 1 - entry
        assignment, _ = optimal_assignment(cost)
        for a in range(m):
            j = int(assignment[a])
            if j < 0 or state.trip_remaining[a] > 0 or cost[a, j] >= UNREACHABLE_COST:
                continue
            pick, entry, arrived = targets[j]
            loc = state.agent_locations[a]
            if loc == pick:
                if arrived:
                    controls[a] = Control.pickup()
                # else wait at the pickup node until the request enters
            else:
                controls[a] = Control.move(int(nxt[loc - 1, pick - 1]) + 1)
        return controls


def oracle_decide_episode(g: CityGraph, initial: SystemState,
                          future: DemandStream, horizon: int) -> PolicyTrace:
    """Run one episode under the full-information oracle."""
    return run_episode(g, initial, OraclePolicy(future), future, horizon)
