"""Discrete-time fleet episode engine: request lifecycle, transitions, costs, traces."""

from __future__ import annotations

import hashlib
import time as _time
from dataclasses import dataclass, field

from .citygraph import CityGraph

STAY = "stay"
MOVE = "move"
PICKUP = "pickup"
HOP = "hop"


class ContractViolationError(RuntimeError):
    """A policy emitted a control that is illegal in the current state."""


@dataclass(slots=True)
class Request:
    """A ride request: pickup/dropoff intersections, entry step, pickup flag.

    picked_up flips 0 -> 1 exactly once; pickup_step records when (bookkeeping,
    set by the engine).
    """

    pickup: int
    dropoff: int
    entry_time: int
    picked_up: bool = False
    pickup_step: int | None = None

    def clone(self) -> "Request":
        return Request(self.pickup, self.dropoff, self.entry_time,
                       self.picked_up, self.pickup_step)


@dataclass(frozen=True, slots=True)
class Control:
    """Per-agent action. target is a node id for moves, -1 otherwise."""

    kind: str
    target: int = -1

    @staticmethod
    def stay() -> "Control":
        return Control(STAY)

    @staticmethod
    def move(j: int) -> "Control":
        return Control(MOVE, j)

    @staticmethod
    def pickup() -> "Control":
        return Control(PICKUP)

    @staticmethod
    def hop() -> "Control":
        return Control(HOP)


@dataclass(slots=True)
class SystemState:
    """Fleet snapshot: time step, per-agent location / remaining trip time /
    current trip dropoff (-1 when idle), and the outstanding request list.

    States along one trajectory share Request objects; clone() before
    branching simulations off a live state.
    """

    time: int
    agent_locations: list[int]
    trip_remaining: list[int]
    trip_dropoff: list[int]
    outstanding: list[Request]

    @property
    def m(self) -> int:
        return len(self.agent_locations)

    def clone(self) -> "SystemState":
        return SystemState(
            self.time,
            list(self.agent_locations),
            list(self.trip_remaining),
            list(self.trip_dropoff),
            [r.clone() for r in self.outstanding],
        )


def initial_state(locations, time: int = 1) -> SystemState:
    locs = [int(v) for v in locations]
    return SystemState(time, locs, [0] * len(locs), [-1] * len(locs), [])


def stage_cost(state: SystemState) -> int:
    """Number of outstanding requests; summed over an episode this is the
    total passenger wait."""
    return len(state.outstanding)


def legal_controls(state: SystemState, agent: int, g: CityGraph) -> list[Control]:
    """Legal controls for one agent, in canonical enumeration order:
    Stay, MoveTo ascending by node id, Pickup last. Busy agents get the
    forced hop only."""
    if not (0 <= agent < state.m):
        raise ValueError(f"agent index {agent} out of range")
    if state.trip_remaining[agent] > 0:
        return [Control.hop()]
    loc = state.agent_locations[agent]
    controls = [Control.stay()]
    controls.extend(Control.move(j) for j in g.neighbors_sorted(loc))
    if any(r.pickup == loc for r in state.outstanding):
        controls.append(Control.pickup())
    return controls


def _check_control(state: SystemState, agent: int, u: Control, g: CityGraph) -> None:
    busy = state.trip_remaining[agent] > 0
    if u.kind == HOP:
        if not busy:
            raise ContractViolationError(f"agent {agent}: forced hop while idle")
        return
    if busy:
        raise ContractViolationError(f"agent {agent}: {u.kind} while mid-trip")
    if u.kind == MOVE:
        if u.target not in g.neighbors(state.agent_locations[agent]):
            raise ContractViolationError(
                f"agent {agent}: move to non-adjacent node {u.target}")
    elif u.kind == PICKUP:
        loc = state.agent_locations[agent]
        if not any(r.pickup == loc for r in state.outstanding):
            raise ContractViolationError(f"agent {agent}: pickup with no request at {loc}")
    elif u.kind != STAY:
        raise ContractViolationError(f"agent {agent}: unknown control {u.kind!r}")


def transition(state: SystemState, joint_control, arrivals, g: CityGraph) -> SystemState:
    """Apply one joint control, ingest next-step arrivals, advance time.

    Pickup contention: agents are processed in ascending index order and a
    losing co-located Pickup degrades to Stay. A picked request is the
    outstanding one at the agent's node with the lowest entry time (first
    inserted wins remaining ties).
    """
    if len(joint_control) != state.m:
        raise ContractViolationError(
            f"joint control has {len(joint_control)} entries for {state.m} agents")
    for a, u in enumerate(joint_control):
        _check_control(state, a, u, g)
    t_next = state.time + 1
    for r in arrivals:
        if r.entry_time != t_next:
            raise ValueError(f"arrival with entry_time {r.entry_time} at step {t_next}")

    locs = list(state.agent_locations)
    taus = list(state.trip_remaining)
    drops = list(state.trip_dropoff)
    outstanding = list(state.outstanding)

    for a, u in enumerate(joint_control):
        if u.kind == HOP:
            sp = g.shortest_path(locs[a], drops[a])
            locs[a] = sp[1]
            taus[a] -= 1
            if taus[a] == 0:
                drops[a] = -1
        elif u.kind == MOVE:
            locs[a] = u.target
        elif u.kind == PICKUP:
            best = -1
            for idx, r in enumerate(outstanding):
                if r.pickup == locs[a] and (best < 0 or r.entry_time < outstanding[best].entry_time):
                    best = idx
            if best >= 0:
                req = outstanding.pop(best)
                req.picked_up = True
                req.pickup_step = state.time
                d = g.hop_count(locs[a], req.dropoff)
                taus[a] = d
                drops[a] = req.dropoff if d > 0 else -1
            # else: the request went to a lower-indexed agent; stay put

    outstanding.extend(arrivals)
    return SystemState(t_next, locs, taus, drops, outstanding)


class DemandStream:
    """Ground-truth arrival stream: request templates bucketed by entry step.

    arrivals(t) hands out fresh copies, so one stream can feed many paired
    episodes.
    """

    def __init__(self, by_step: dict[int, list[Request]]):
        self._by_step = {int(t): list(reqs) for t, reqs in by_step.items() if reqs}
        for t, reqs in self._by_step.items():
            for r in reqs:
                if r.entry_time != t:
                    raise ValueError("request bucketed at the wrong step")

    @classmethod
    def from_requests(cls, requests) -> "DemandStream":
        by_step: dict[int, list[Request]] = {}
        for r in requests:
            by_step.setdefault(r.entry_time, []).append(r)
        return cls(by_step)

    def arrivals(self, t: int) -> list[Request]:
        return [r.clone() for r in self._by_step.get(t, [])]

    def total_requests(self) -> int:
        return sum(len(v) for v in self._by_step.values())

    def all_requests(self) -> list[Request]:
        out = []
        for t in sorted(self._by_step):
            out.extend(r.clone() for r in self._by_step[t])
        return out

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for t in sorted(self._by_step):
            for r in self._by_step[t]:
                h.update(f"{t},{r.pickup},{r.dropoff};".encode())
        return h.hexdigest()


@dataclass(slots=True)
class StepRecord:
    time: int
    locations: tuple[int, ...]
    trip_remaining: tuple[int, ...]
    stage_cost: int
    n_arrivals: int
    controls: tuple[Control, ...] | None


@dataclass(slots=True)
class RequestOutcome:
    pickup: int
    dropoff: int
    entry_time: int
    pickup_step: int | None
    wait: int


@dataclass
class PolicyTrace:
    """Everything one simulated episode produced.

    wait accounting: a request outstanding in states x_a..x_b contributes
    b - a + 1 to the stage-cost sum, so wait = pickup_step + 1 - entry for
    serviced requests and horizon - entry + 1 for never-serviced ones.
    """

    policy: str
    horizon: int
    steps: list[StepRecord]
    requests: list[RequestOutcome]
    total_cost: int
    generated: int
    served: int
    outstanding_end: int
    stream_hash: str = ""
    plan_seconds: list[float] = field(default_factory=list)

    @property
    def mean_plan_seconds(self) -> float:
        return sum(self.plan_seconds) / len(self.plan_seconds) if self.plan_seconds else 0.0

    def total_wait(self) -> int:
        return sum(r.wait for r in self.requests)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("time,agent_locations,trip_remaining,stage_cost,n_arrivals\n")
            for s in self.steps:
                locs = "|".join(str(v) for v in s.locations)
                taus = "|".join(str(v) for v in s.trip_remaining)
                fh.write(f"{s.time},{locs},{taus},{s.stage_cost},{s.n_arrivals}\n")
            fh.write(
                f"summary,total_cost={self.total_cost},served={self.served},"
                f"outstanding={self.outstanding_end},generated={self.generated}\n"
            )


def run_episode(g: CityGraph, initial: SystemState, policy, demand: DemandStream,
                horizon: int, seed: int | None = None) -> PolicyTrace:
    """Run one seeded episode and return its trace.

    Arrivals for step t are visible before controls at t are chosen; total
    cost is the stage-cost sum for t = 1..horizon-1 plus the terminal count
    of outstanding requests.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if initial.time != 1:
        raise ValueError("episodes start at time 1")
    state = initial.clone()
    first = demand.arrivals(1)
    state.outstanding.extend(first)
    ingested: list[Request] = list(state.outstanding)

    if hasattr(policy, "reset"):
        policy.reset(seed)

    steps: list[StepRecord] = []
    plan_seconds: list[float] = []
    total = 0
    n_arr = len(first)
    for t in range(1, horizon):
        tic = _time.perf_counter()
        controls = policy.decide(state, g)
        plan_seconds.append(_time.perf_counter() - tic)
        gcost = stage_cost(state)
        total += gcost
        steps.append(StepRecord(t, tuple(state.agent_locations),
                                tuple(state.trip_remaining), gcost, n_arr,
                                tuple(controls)))
        arrivals = demand.arrivals(t + 1)
        ingested.extend(arrivals)
        n_arr = len(arrivals)
        state = transition(state, controls, arrivals, g)

    gcost = stage_cost(state)
    total += gcost
    steps.append(StepRecord(horizon, tuple(state.agent_locations),
                            tuple(state.trip_remaining), gcost, n_arr, None))

    outcomes = []
    served = 0
    for r in ingested:
        if r.picked_up:
            served += 1
            wait = r.pickup_step + 1 - r.entry_time
        else:
            wait = horizon - r.entry_time + 1
        outcomes.append(RequestOutcome(r.pickup, r.dropoff, r.entry_time,
                                       r.pickup_step, wait))

    name = getattr(policy, "name", type(policy).__name__)
    return PolicyTrace(
        policy=name,
        horizon=horizon,
        steps=steps,
        requests=outcomes,
        total_cost=total,
        generated=len(ingested),
        served=served,
        outstanding_end=len(state.outstanding),
        stream_hash=demand.content_hash(),
        plan_seconds=plan_seconds,
    )
