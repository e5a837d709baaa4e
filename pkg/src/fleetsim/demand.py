"""Demand assignment: hourly sector predictions become a per-minute arrival
process, intersection-level pickup/drop-off distributions (via locale
occupancy schedules) and a sector-to-sector destination matrix, bundled into
samplable per-sector demand models."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .citygraph import CityGraph
from .simulation import Request

logger = logging.getLogger(__name__)

DIST_TOL = 1e-9


@dataclass(frozen=True)
class ArrivalProcess:
    """Per-minute request count: a constant when the hourly rate spreads to
    more than one per minute, a Bernoulli draw otherwise."""

    rate: float                 # predicted hourly count / horizon
    kind: str                   # "deterministic" | "bernoulli"
    per_minute: int             # rounded count used in deterministic mode

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "deterministic":
            return np.full(size, self.per_minute, dtype=np.int64)
        return (rng.random(size) < self.rate).astype(np.int64)

    @property
    def mean(self) -> float:
        return float(self.per_minute) if self.kind == "deterministic" else self.rate


def minute_arrival_process(y_hat: float, horizon: int) -> ArrivalProcess:
    """Spread an hourly prediction evenly over the horizon.

    rate = y_hat / horizon; rates of at least one request per minute round
    half away from zero to a deterministic count, smaller rates keep their
    stochasticity as a Bernoulli draw.
    """
    if y_hat < 0:
        raise ValueError("predicted demand must be non-negative")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    rate = y_hat / horizon
    if rate >= 1.0:
        return ArrivalProcess(rate, "deterministic", int(math.floor(rate + 0.5)))
    return ArrivalProcess(rate, "bernoulli", 0)


# -- occupancy schedules ----------------------------------------------------


@dataclass
class OccupancyTable:
    """Locale types with max occupancy and 24-hour occupancy-fraction
    schedules, plus per-intersection locale counts."""

    schedules: dict[str, np.ndarray]
    max_occupancy: dict[str, float]
    counts: dict[int, dict[str, int]] = field(default_factory=dict)

    def __post_init__(self):
        for name, sched in self.schedules.items():
            sched = np.asarray(sched, dtype=np.float64)
            if sched.shape != (24,):
                raise ValueError(f"schedule for {name!r} must have 24 entries")
            if np.any(sched < 0) or np.any(sched > 1):
                raise ValueError(f"schedule for {name!r} must lie in [0, 1]")
            self.schedules[name] = sched
            if name not in self.max_occupancy:
                raise ValueError(f"no max occupancy for locale type {name!r}")

    @classmethod
    def from_files(cls, schedule_path, counts_path) -> "OccupancyTable":
        table = load_occupancy_schedules(schedule_path)
        table.counts = load_locale_counts(counts_path, known=set(table.schedules))
        return table


def load_occupancy_schedules(path) -> OccupancyTable:
    """CSV: locale_type,max_occupancy,h0,...,h23."""
    schedules = {}
    occupancy = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["locale_type", "max_occupancy"] or len(header) != 26:
            raise ValueError(f"unexpected occupancy header: {header[:3]}...")
        for row in reader:
            if not row:
                continue
            schedules[row[0]] = np.array([float(v) for v in row[2:26]])
            occupancy[row[0]] = float(row[1])
    return OccupancyTable(schedules, occupancy)


def load_locale_counts(path, known: set[str] | None = None) -> dict[int, dict[str, int]]:
    """CSV: intersection,locale_type,count."""
    counts: dict[int, dict[str, int]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["intersection", "locale_type", "count"]:
            raise ValueError(f"unexpected locale-count header: {header}")
        for row in reader:
            if not row:
                continue
            node, ltype, count = int(row[0]), row[1], int(row[2])
            if known is not None and ltype not in known:
                raise ValueError(f"locale counts reference unknown type {ltype!r}")
            counts.setdefault(node, {})[ltype] = counts.setdefault(node, {}).get(ltype, 0) + count
    return counts


def save_occupancy_schedules(table: OccupancyTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["locale_type", "max_occupancy"] + [f"h{h}" for h in range(24)])
        for name in sorted(table.schedules):
            writer.writerow([name, repr(table.max_occupancy[name])]
                            + [repr(float(v)) for v in table.schedules[name]])


def save_locale_counts(counts: dict[int, dict[str, int]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["intersection", "locale_type", "count"])
        for node in sorted(counts):
            for ltype in sorted(counts[node]):
                writer.writerow([node, ltype, counts[node][ltype]])


def occupancy_weight(table: OccupancyTable, j: int, hour: int) -> float:
    """Expected rider pool at intersection j for one hour:
    sum over locale types of count * schedule(hour) * max_occupancy."""
    if not (0 <= hour <= 23):
        raise ValueError(f"hour {hour} out of range")
    total = 0.0
    for ltype, count in table.counts.get(j, {}).items():
        if ltype not in table.schedules:
            raise ValueError(f"unknown locale type {ltype!r} at intersection {j}")
        total += count * table.schedules[ltype][hour] * table.max_occupancy[ltype]
    return total


def intersection_distribution(table: OccupancyTable, g: CityGraph, sector: int,
                              hour: int) -> tuple[tuple[int, ...], np.ndarray]:
    """Probability over a sector's eligible intersections, proportional to
    occupancy weight; uniform fallback when every weight is zero."""
    nodes = g.eligible[sector]
    if not nodes:
        raise ValueError(f"sector {sector} has no eligible intersections")
    weights = np.array([occupancy_weight(table, j, hour) for j in nodes])
    total = weights.sum()
    if total <= 0:
        logger.warning("all-zero occupancy weights in sector %d at hour %d; "
                       "falling back to uniform", sector, hour)
        return nodes, np.full(len(nodes), 1.0 / len(nodes))
    return nodes, weights / total


# -- destination matrix -------------------------------------------------------


@dataclass(frozen=True)
class TripRecord:
    pickup: int
    dropoff: int
    entry_minute: int


def load_trips(path) -> list[TripRecord]:
    """CSV: pickup,dropoff,entry_minute."""
    trips = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["pickup", "dropoff", "entry_minute"]:
            raise ValueError(f"unexpected trip header: {header}")
        for row in reader:
            if not row:
                continue
            trips.append(TripRecord(int(row[0]), int(row[1]), int(row[2])))
    return trips


def save_trips(trips, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pickup", "dropoff", "entry_minute"])
        for t in trips:
            writer.writerow([t.pickup, t.dropoff, t.entry_minute])


def destination_matrix(trips, g: CityGraph) -> np.ndarray:
    """Row-stochastic matrix of drop-off sector frequencies conditioned on the
    pickup sector. Rows for sectors with no pickups get +1 Laplace smoothing
    per cell (i.e. become uniform)."""
    trips = list(trips)
    if not trips:
        raise ValueError("empty trip history")
    k = g.num_sectors
    counts = np.zeros((k, k), dtype=np.float64)
    for t in trips:
        counts[g.sector_of(t.pickup), g.sector_of(t.dropoff)] += 1
    row_sums = counts.sum(axis=1)
    for row in range(k):
        if row_sums[row] == 0:
            counts[row, :] += 1.0
            row_sums[row] = k
    return counts / row_sums[:, None]


# -- per-sector demand models -------------------------------------------------


def _validated_dist(values: np.ndarray, what: str) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if np.any(values < 0):
        raise ValueError(f"{what} has negative entries")
    if abs(values.sum() - 1.0) > DIST_TOL:
        raise ValueError(f"{what} sums to {values.sum()!r}, not 1")
    return values


@dataclass
class SectorDemandModel:
    """Certainty-equivalence demand model for one sector at one hour."""

    sector: int
    eta: ArrivalProcess
    pickup_nodes: tuple[int, ...]
    pickup_dist: np.ndarray
    dropoff_nodes: tuple[int, ...]
    dropoff_dist: np.ndarray
    dest_sectors: tuple[int, ...]
    dest_dist: np.ndarray

    def __post_init__(self):
        self.pickup_dist = _validated_dist(self.pickup_dist, "pickup distribution")
        self.dropoff_dist = _validated_dist(self.dropoff_dist, "dropoff distribution")
        self.dest_dist = _validated_dist(self.dest_dist, "destination distribution")
        self._pickup_cdf = np.cumsum(self.pickup_dist)
        self._dropoff_cdf = np.cumsum(self.dropoff_dist)
        self._pickup_arr = np.asarray(self.pickup_nodes, dtype=np.int64)
        self._dropoff_arr = np.asarray(self.dropoff_nodes, dtype=np.int64)


def build_demand_models(g: CityGraph, y_hat_by_sector: dict[int, float], horizon: int,
                        hour: int, dest_matrix: np.ndarray,
                        occupancy: OccupancyTable | None = None,
                        dropoff_occupancy: OccupancyTable | None = None,
                        ) -> dict[int, SectorDemandModel]:
    """Assemble one demand model per sector. Pickup and drop-off share the
    occupancy-derived intersection distribution unless a separate drop-off
    table is supplied; with no table at all both are uniform over the
    sector's eligible intersections."""
    sectors = sorted(g.sectors)
    models = {}
    for s in sectors:
        if occupancy is not None:
            nodes, pdist = intersection_distribution(occupancy, g, s, hour)
        else:
            nodes = g.eligible[s]
            if not nodes:
                raise ValueError(f"sector {s} has no eligible intersections")
            pdist = np.full(len(nodes), 1.0 / len(nodes))
        if dropoff_occupancy is not None:
            dnodes, ddist = intersection_distribution(dropoff_occupancy, g, s, hour)
        else:
            dnodes, ddist = nodes, pdist
        models[s] = SectorDemandModel(
            sector=s,
            eta=minute_arrival_process(float(y_hat_by_sector.get(s, 0.0)), horizon),
            pickup_nodes=tuple(nodes),
            pickup_dist=pdist,
            dropoff_nodes=tuple(dnodes),
            dropoff_dist=ddist,
            dest_sectors=tuple(sectors),
            dest_dist=dest_matrix[s],
        )
    return models


def _restricted_dest(model: SectorDemandModel, allowed: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Destination distribution restricted to the allowed sectors and
    renormalized; uniform over them when the restricted mass is zero."""
    sectors = np.asarray(model.dest_sectors, dtype=np.int64)
    mask = np.isin(sectors, np.asarray(allowed, dtype=np.int64))
    probs = model.dest_dist[mask]
    chosen = sectors[mask]
    total = probs.sum()
    if total <= 0:
        probs = np.full(len(chosen), 1.0 / len(chosen))
    else:
        probs = probs / total
    return chosen, np.cumsum(probs)


def sample_local_demand(models: dict[int, SectorDemandModel], center: int,
                        g: CityGraph, minutes: int, seed: int | None = None,
                        rng: np.random.Generator | None = None,
                        start_time: int = 0, scope: str = "local",
                        dest_mode: str = "renormalize") -> list[Request]:
    """Sample requests for the next `minutes` steps from the sector
    neighborhood around `center` (the sector itself plus its adjacent
    sectors; the whole map when scope="full").

    Destinations are restricted to the sampled neighborhood and renormalized
    by default; dest_mode="allow_exits" keeps the unrestricted destination
    distribution, so trips may leave the neighborhood. Entry times are
    start_time + 1 .. start_time + minutes.
    """
    if rng is None:
        rng = np.random.default_rng(seed)
    if scope == "local":
        order = (center,) + tuple(sorted(g.sector_adjacency[center]))
    elif scope == "full":
        order = tuple(sorted(g.sectors))
    else:
        raise ValueError(f"unknown sampling scope {scope!r}")
    for s in order:
        if s not in models:
            raise ValueError(f"no demand model for sector {s}")

    out: list[Request] = []
    for s in order:
        model = models[s]
        counts = model.eta.sample(rng, minutes)
        total = int(counts.sum())
        if total == 0:
            continue
        if dest_mode == "renormalize":
            dest_sectors, dest_cdf = _restricted_dest(model, order)
        elif dest_mode == "allow_exits":
            dest_sectors = np.asarray(model.dest_sectors, dtype=np.int64)
            dest_cdf = np.cumsum(model.dest_dist)
        else:
            raise ValueError(f"unknown dest_mode {dest_mode!r}")
        u = rng.random((total, 3))
        p_idx = np.minimum(np.searchsorted(model._pickup_cdf, u[:, 0], side="right"),
                           len(model._pickup_arr) - 1)
        pickups = model._pickup_arr[p_idx]
        d_idx = np.minimum(np.searchsorted(dest_cdf, u[:, 1], side="right"),
                           len(dest_sectors) - 1)
        dests = dest_sectors[d_idx]
        entries = start_time + 1 + np.repeat(np.arange(minutes), counts)
        for i in range(total):
            dmodel = models[int(dests[i])]
            j = min(int(np.searchsorted(dmodel._dropoff_cdf, u[i, 2], side="right")),
                    len(dmodel._dropoff_arr) - 1)
            out.append(Request(int(pickups[i]), int(dmodel._dropoff_arr[j]),
                               int(entries[i])))
    return out
