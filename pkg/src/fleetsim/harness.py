"""Experiment harness: configuration, scenario generation, paired benchmark
runs, metric aggregation and plot-ready report files."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .citygraph import CityGraph, grid_city, line_city, ring_city
from .demand import (OccupancyTable, build_demand_models, destination_matrix,
                     intersection_distribution)
from .policies import (GreedyPolicy, InstantaneousAssignmentPolicy,
                       OraclePolicy, RolloutConfig, RolloutPolicy)
from .prediction import HistoricalAveragePredictor, load_dataset
from .simulation import DemandStream, PolicyTrace, Request, initial_state, run_episode
from .synth import synth_occupancy, synth_trips


@dataclass
class DemandSettings:
    """Where the rollout's demand models come from, and the scripted ground
    truth that the simulated city actually produces."""

    source: str = "scripted"                    # scripted | predictions | historical
    base_rate: float = 0.08                     # truth: requests per sector-minute
    surge_multiplier: float = 3.0
    surge_sectors: tuple[int, ...] = ()
    surge_hours: tuple[int, ...] = ()
    model_noise: float = 0.0                    # relative noise on scripted y_hat
    predictions_path: str | None = None
    history_path: str | None = None
    trips: int = 2000                           # synthetic trip history size
    dest_mode: str = "renormalize"

    def __post_init__(self):
        if self.source not in ("scripted", "predictions", "historical"):
            raise ValueError(f"unknown demand source {self.source!r}")
        if self.base_rate < 0:
            raise ValueError("base_rate must be non-negative")


@dataclass
class ExperimentConfig:
    map: dict = field(default_factory=lambda: {
        "generator": "grid", "rows": 10, "cols": 10, "sectors_x": 3, "sectors_y": 2})
    fleet_size: int = 8
    horizon: int = 60
    hours: tuple[int, ...] = (15, 17, 19, 21)
    policies: tuple[str, ...] = ("greedy", "instantaneous", "rollout", "oracle")
    rollout: RolloutConfig = field(default_factory=RolloutConfig)
    demand: DemandSettings = field(default_factory=DemandSettings)
    episodes: int = 25
    seed: int = 7

    def __post_init__(self):
        if self.fleet_size < 1:
            raise ValueError("fleet_size must be >= 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if any(h < 0 or h > 23 for h in self.hours):
            raise ValueError("hours must lie in 0..23")
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for key in ("hours", "policies"):
            d[key] = list(d[key])
        d["demand"]["surge_sectors"] = list(self.demand.surge_sectors)
        d["demand"]["surge_hours"] = list(self.demand.surge_hours)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "rollout" in d:
            d["rollout"] = RolloutConfig(**d["rollout"])
        if "demand" in d:
            dm = dict(d["demand"])
            for key in ("surge_sectors", "surge_hours"):
                if key in dm:
                    dm[key] = tuple(dm[key])
            d["demand"] = DemandSettings(**dm)
        for key in ("hours", "policies"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def build_map(settings: dict) -> CityGraph:
    if "path" in settings:
        return CityGraph.load(settings["path"])
    gen = settings.get("generator", "grid")
    if gen == "grid":
        return grid_city(settings.get("rows", 10), settings.get("cols", 10),
                         settings.get("sectors_x", 1), settings.get("sectors_y", 1),
                         settings.get("eligible_fraction", 1.0),
                         settings.get("seed", 0))
    if gen == "ring":
        return ring_city(settings.get("sectors", 6),
                         settings.get("nodes_per_sector", 16),
                         settings.get("eligible_fraction", 1.0),
                         settings.get("seed", 0))
    if gen == "line":
        return line_city(settings.get("nodes", 4), settings.get("sectors", 1))
    raise ValueError(f"unknown map generator {gen!r}")


# -- scenario generation -------------------------------------------------------


@dataclass
class Scenario:
    hour: int
    episode: int
    initial: "object"
    stream: DemandStream
    models: dict
    y_hat: dict[int, float]
    realized: dict[int, int]


def truth_rates(config: ExperimentConfig, g: CityGraph, hour: int) -> dict[int, float]:
    rates = {}
    surge = (hour in config.demand.surge_hours)
    for s in sorted(g.sectors):
        rate = config.demand.base_rate
        if surge and s in config.demand.surge_sectors:
            rate *= config.demand.surge_multiplier
        rates[s] = rate
    return rates


def predicted_hourly(config: ExperimentConfig, g: CityGraph, hour: int) -> dict[int, float]:
    """What the demand models believe the hourly count per sector is."""
    rates = truth_rates(config, g, hour)
    src = config.demand.source
    if src == "scripted":
        return {s: rates[s] * config.horizon for s in rates}
    if src == "predictions":
        if not config.demand.predictions_path:
            raise ValueError("predictions source needs predictions_path")
        sums: dict[int, float] = {}
        counts: dict[int, int] = {}
        with open(config.demand.predictions_path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                if int(row["hour"]) != hour:
                    continue
                s = int(row["sector"])
                sums[s] = sums.get(s, 0.0) + float(row["y_pred"])
                counts[s] = counts.get(s, 0) + 1
        return {s: (sums.get(s, 0.0) / counts[s] if counts.get(s) else 0.0)
                for s in sorted(g.sectors)}
    # historical
    if not config.demand.history_path:
        raise ValueError("historical source needs history_path")
    rows = load_dataset(config.demand.history_path)
    predictor = HistoricalAveragePredictor().fit(
        (r.date, r.hour, r.sector, r.count) for r in rows)
    return {s: predictor.predict(s, hour) for s in sorted(g.sectors)}


def generate_scenario(config: ExperimentConfig, g: CityGraph, occupancy: OccupancyTable,
                      dest: np.ndarray, hour: int, episode: int,
                      y_hat: dict[int, float]) -> Scenario:
    """One paired scenario: seeded initial fleet placement, a Poisson ground
    truth arrival stream, and the demand models every policy shares."""
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, hour, episode]))
    rates = truth_rates(config, g, hour)
    dists = {s: intersection_distribution(occupancy, g, s, hour)
             for s in sorted(g.sectors)}
    requests: list[Request] = []
    realized = {s: 0 for s in sorted(g.sectors)}
    for t in range(1, config.horizon + 1):
        for s in sorted(g.sectors):
            count = int(rng.poisson(rates[s]))
            if count == 0:
                continue
            realized[s] += count
            nodes, probs = dists[s]
            for _ in range(count):
                pickup = int(nodes[int(rng.choice(len(nodes), p=probs))])
                dsec = int(rng.choice(len(dest[s]), p=dest[s]))
                dnodes, dprobs = dists[dsec]
                dropoff = int(dnodes[int(rng.choice(len(dnodes), p=dprobs))])
                requests.append(Request(pickup, dropoff, t))
    stream = DemandStream.from_requests(requests)

    locations = [int(v) + 1 for v in rng.integers(0, g.n, size=config.fleet_size)]
    initial = initial_state(locations)

    noisy = dict(y_hat)
    if config.demand.model_noise > 0:
        for s in sorted(noisy):
            noisy[s] = max(0.0, noisy[s] * (1.0 + config.demand.model_noise
                                            * float(rng.standard_normal())))
    models = build_demand_models(g, noisy, config.horizon, hour, dest,
                                 occupancy=occupancy)
    return Scenario(hour, episode, initial, stream, models, noisy, realized)


# -- benchmark -----------------------------------------------------------------


@dataclass
class EpisodeRecord:
    hour: int
    policy: str
    episode: int
    total_cost: int
    generated: int
    served: int
    outstanding: int
    stream_hash: str
    overhead: float | None = None
    plan_seconds_mean: float = 0.0


@dataclass
class AggregateRow:
    hour: int
    policy: str
    episodes: int
    cost_mean: float
    cost_se: float
    outstanding_mean: float
    outstanding_se: float
    served_mean: float
    overhead_mean: float | None
    overhead_se: float | None
    plan_seconds_mean: float


@dataclass
class MetricsReport:
    rows: list[AggregateRow]
    records: list[EpisodeRecord]
    demand_rows: list[tuple[int, int, int, float, int]]  # hour, episode, sector, y_hat, realized
    config_hash: str
    seed: int
    errors: list[str] = field(default_factory=list)


def make_policy(name: str, config: ExperimentConfig, models: dict,
                stream: DemandStream):
    if name == "greedy":
        return GreedyPolicy()
    if name == "instantaneous":
        return InstantaneousAssignmentPolicy()
    if name == "rollout":
        cfg = dataclasses.replace(config.rollout, dest_mode=config.demand.dest_mode)
        return RolloutPolicy(models, cfg, name="rollout")
    if name == "rollout-full":
        cfg = dataclasses.replace(config.rollout, sampling_scope="full",
                                  dest_mode=config.demand.dest_mode)
        return RolloutPolicy(models, cfg, name="rollout-full")
    if name == "oracle":
        return OraclePolicy(stream)
    raise ValueError(f"unknown policy {name!r}")


def wait_time_overhead(policy_trace: PolicyTrace, oracle_trace: PolicyTrace) -> float | None:
    """Extra wait per serviced request relative to the oracle on the same
    realized demand; None when the policy serviced nothing."""
    if policy_trace.stream_hash != oracle_trace.stream_hash:
        raise ValueError("traces come from different demand streams")
    if policy_trace.served == 0:
        return None
    return (policy_trace.total_cost - oracle_trace.total_cost) / policy_trace.served


def _mean_se(values) -> tuple[float, float]:
    vals = [v for v in values if v is not None]
    if not vals:
        return float("nan"), float("nan")
    mean = sum(vals) / len(vals)
    if len(vals) < 2:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in vals) / (len(vals) - 1)
    return mean, math.sqrt(var / len(vals))


def run_benchmark(config: ExperimentConfig, out_dir=None) -> MetricsReport:
    """Run every (hour, episode, policy) cell on paired ground-truth streams
    and aggregate. Deterministic outputs (records, demand, summary) are pure
    functions of the config; wall-clock timings go to a separate file."""
    g = build_map(config.map)
    occupancy = synth_occupancy(g, seed=config.seed)
    trips = synth_trips(g, config.demand.trips, seed=config.seed + 1)
    dest = destination_matrix(trips, g)

    records: list[EpisodeRecord] = []
    demand_rows: list[tuple[int, int, int, float, int]] = []
    errors: list[str] = []
    episode_seed = {}
    for hour in config.hours:
        y_hat = predicted_hourly(config, g, hour)
        for ep in range(config.episodes):
            scenario = generate_scenario(config, g, occupancy, dest, hour, ep, y_hat)
            for s in sorted(scenario.y_hat):
                demand_rows.append((hour, ep, s, scenario.y_hat[s], scenario.realized[s]))
            seed = int(np.random.SeedSequence([config.seed, hour, ep]).generate_state(1)[0])
            episode_seed[(hour, ep)] = seed
            traces: dict[str, PolicyTrace] = {}
            for name in config.policies:
                policy = make_policy(name, config, scenario.models, scenario.stream)
                try:
                    trace = run_episode(g, scenario.initial, policy, scenario.stream,
                                        config.horizon, seed=seed)
                except Exception as exc:  # keep the benchmark going
                    errors.append(f"hour={hour} episode={ep} policy={name}: {exc}")
                    continue
                traces[name] = trace
                if trace.generated != trace.served + trace.outstanding_end:
                    errors.append(f"hour={hour} episode={ep} policy={name}: "
                                  "request conservation violated")
            oracle_trace = traces.get("oracle")
            for name in config.policies:
                trace = traces.get(name)
                if trace is None:
                    continue
                overhead = None
                if oracle_trace is not None:
                    overhead = wait_time_overhead(trace, oracle_trace)
                records.append(EpisodeRecord(
                    hour, name, ep, trace.total_cost, trace.generated,
                    trace.served, trace.outstanding_end, trace.stream_hash,
                    overhead, trace.mean_plan_seconds))

    rows = []
    for hour in config.hours:
        for name in config.policies:
            cell = [r for r in records if r.hour == hour and r.policy == name]
            if not cell:
                continue
            cost_mean, cost_se = _mean_se([r.total_cost for r in cell])
            out_mean, out_se = _mean_se([r.outstanding for r in cell])
            served_mean, _ = _mean_se([r.served for r in cell])
            ov = [r.overhead for r in cell if r.overhead is not None]
            ov_mean, ov_se = _mean_se(ov) if ov else (None, None)
            plan_mean, _ = _mean_se([r.plan_seconds_mean for r in cell])
            rows.append(AggregateRow(hour, name, len(cell), cost_mean, cost_se,
                                     out_mean, out_se, served_mean, ov_mean,
                                     ov_se, plan_mean))

    report = MetricsReport(rows, records, demand_rows, config.config_hash(),
                           config.seed, errors)
    if out_dir is not None:
        write_benchmark_outputs(report, out_dir)
    return report


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_benchmark_outputs(report: MetricsReport, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "records.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["hour", "policy", "episode", "total_cost", "generated",
                         "served", "outstanding", "overhead", "stream_hash"])
        for r in report.records:
            writer.writerow([r.hour, r.policy, r.episode, r.total_cost, r.generated,
                             r.served, r.outstanding, _fmt(r.overhead), r.stream_hash])
    with open(os.path.join(out_dir, "demand.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["hour", "episode", "sector", "y_hat", "realized"])
        for hour, ep, sector, y_hat, realized in report.demand_rows:
            writer.writerow([hour, ep, sector, _fmt(y_hat), realized])
    # wall-clock timings are inherently non-deterministic; they live apart so
    # the files above are byte-identical across reruns
    with open(os.path.join(out_dir, "timings.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["hour", "policy", "episode", "plan_seconds_mean"])
        for r in report.records:
            writer.writerow([r.hour, r.policy, r.episode, _fmt(r.plan_seconds_mean)])
    summary = {
        "config_hash": report.config_hash,
        "seed": report.seed,
        "errors": report.errors,
        "aggregates": [
            {
                "hour": row.hour,
                "policy": row.policy,
                "episodes": row.episodes,
                "cost_mean": row.cost_mean,
                "cost_se": row.cost_se,
                "outstanding_mean": row.outstanding_mean,
                "outstanding_se": row.outstanding_se,
                "served_mean": row.served_mean,
                "overhead_mean": row.overhead_mean,
                "overhead_se": row.overhead_se,
            }
            for row in report.rows
        ],
    }
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- report ---------------------------------------------------------------------


def _read_csv(path) -> list[dict]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def write_report(records_dir, out_dir) -> list[str]:
    """Render plot-ready tables (cost, outstanding, overhead, runtime, pe)
    from raw benchmark records; a pure function of the record files."""
    os.makedirs(out_dir, exist_ok=True)
    records = _read_csv(os.path.join(records_dir, "records.csv"))
    demand = _read_csv(os.path.join(records_dir, "demand.csv"))
    timings = _read_csv(os.path.join(records_dir, "timings.csv"))
    written = []

    def cells(rows, keys):
        out = {}
        for row in rows:
            out.setdefault(tuple(row[k] for k in keys), []).append(row)
        return out

    def emit(name, header, lines):
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(lines)
        written.append(path)

    for metric, col in (("cost", "total_cost"), ("outstanding", "outstanding")):
        lines = []
        for (hour, policy), rows in sorted(cells(records, ("hour", "policy")).items()):
            mean, se = _mean_se([float(r[col]) for r in rows])
            lines.append([hour, policy, len(rows), _fmt(mean), _fmt(se)])
        emit(f"{metric}.csv", ["hour", "policy", "episodes", "mean", "stderr"], lines)

    lines = []
    for (hour, policy), rows in sorted(cells(records, ("hour", "policy")).items()):
        vals = [float(r["overhead"]) for r in rows if r["overhead"] != ""]
        if not vals:
            continue
        mean, se = _mean_se(vals)
        lines.append([hour, policy, len(vals), _fmt(mean), _fmt(se)])
    emit("overhead.csv", ["hour", "policy", "episodes", "mean", "stderr"], lines)

    lines = []
    for (policy,), rows in sorted(cells(timings, ("policy",)).items()):
        mean, se = _mean_se([float(r["plan_seconds_mean"]) for r in rows])
        lines.append([policy, len(rows), _fmt(mean), _fmt(se)])
    emit("runtime.csv", ["policy", "episodes", "mean_plan_seconds", "stderr"], lines)

    lines = []
    for (hour, sector), rows in sorted(cells(demand, ("hour", "sector")).items()):
        pairs = [(float(r["y_hat"]), int(r["realized"])) for r in rows]
        usable = [(abs(a - p) / a) for p, a in pairs if a > 0]
        excluded = len(pairs) - len(usable)
        pe = sum(usable) / len(usable) if usable else float("nan")
        lines.append([hour, sector, len(usable), excluded, _fmt(pe)])
    emit("pe.csv", ["hour", "sector", "episodes", "excluded", "percent_error"], lines)

    return written
