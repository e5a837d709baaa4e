"""Seeded synthetic data: hourly demand datasets, event embeddings, occupancy
tables, and trip histories shaped like the loaders expect."""

from __future__ import annotations

import datetime

import numpy as np

from .citygraph import CityGraph
from .demand import OccupancyTable, TripRecord
from .events import EventRecord
from .prediction import DatasetRow

SENTIMENT_SPREAD = 0.15


def _date_str(start: datetime.date, offset: int) -> str:
    return (start + datetime.timedelta(days=offset)).isoformat()


def synth_events(sectors, n_days: int, seed: int = 0, dim: int = 16,
                 event_prob: float = 0.25, reviews_per_event: tuple[int, int] = (8, 20),
                 start: str = "2022-01-01"):
    """Generate events with planted-sentiment review embeddings.

    Returns (events, multipliers) where multipliers maps (date, sector,
    hour) -> demand multiplier implied by the events there.
    """
    rng = np.random.default_rng(seed)
    first = datetime.date.fromisoformat(start)
    centers = np.zeros((3, dim))
    centers[0, 1] = 2.0   # positive reviews
    centers[1, 1] = -2.0  # negative reviews
    events: list[EventRecord] = []
    multipliers: dict[tuple[str, int, int], float] = {}
    counter = 0
    for day in range(n_days):
        date = _date_str(first, day)
        for sector in sorted(sectors):
            if rng.random() >= event_prob:
                continue
            magnitude = float(rng.uniform(1.5, 3.5))
            start_hour = int(rng.choice([15, 17, 19, 20]))
            title = rng.normal(0.0, 0.3, size=dim)
            title[0] = magnitude - 1.0 + rng.normal(0.0, 0.05)
            n_reviews = int(rng.integers(reviews_per_event[0], reviews_per_event[1] + 1))
            pos = min(0.75, 0.3 + 0.15 * (magnitude - 1.0))
            neg = max(0.05, 0.3 - 0.1 * (magnitude - 1.0))
            probs = np.array([pos, neg, max(0.0, 1.0 - pos - neg)])
            probs /= probs.sum()
            reviews = []
            for _ in range(n_reviews):
                c = int(rng.choice(3, p=probs))
                reviews.append(centers[c] + rng.normal(0.0, SENTIMENT_SPREAD, size=dim))
            counter += 1
            events.append(EventRecord(f"ev{counter:05d}", sector, title, reviews,
                                      date, start_hour))
            for h in range(start_hour - 1, min(start_hour + 3, 24)):
                key = (date, sector, h)
                multipliers[key] = max(multipliers.get(key, 1.0), magnitude)
    return events, multipliers


HOUR_PROFILE = np.array([
    0.2, 0.15, 0.1, 0.1, 0.15, 0.3, 0.5, 0.8, 1.0, 0.9, 0.8, 0.9,
    1.0, 0.9, 0.8, 0.9, 1.0, 1.2, 1.3, 1.2, 1.0, 0.8, 0.6, 0.4,
])


def synth_dataset(sectors, n_days: int, seed: int = 0,
                  multipliers: dict[tuple[str, int, int], float] | None = None,
                  start: str = "2022-01-01") -> list[DatasetRow]:
    """Hourly request counts per (date, hour, sector) with weather channels
    and optional event-driven surges."""
    rng = np.random.default_rng(seed)
    first = datetime.date.fromisoformat(start)
    sectors = sorted(sectors)
    base = {s: float(rng.uniform(15.0, 45.0)) for s in sectors}
    multipliers = multipliers or {}
    rows = []
    for day in range(n_days):
        date = _date_str(first, day)
        doy = (first + datetime.timedelta(days=day)).timetuple().tm_yday
        weekend = 1.2 if (first + datetime.timedelta(days=day)).weekday() >= 5 else 1.0
        temp_base = 10.0 + 15.0 * np.sin(2 * np.pi * (doy - 100) / 365.0)
        for hour in range(24):
            temp = temp_base + float(rng.normal(0.0, 3.0))
            precip = float(rng.exponential(1.0)) if rng.random() < 0.3 else 0.0
            wet = 1.0 + 0.1 * min(precip, 3.0)
            for s in sectors:
                mult = multipliers.get((date, s, hour), 1.0)
                lam = base[s] * HOUR_PROFILE[hour] * weekend * wet * mult
                count = int(rng.poisson(lam))
                rows.append(DatasetRow(date, hour, s, count, (temp, precip)))
    return rows


LOCALE_TYPES = {
    # name: (max occupancy, 24-hour occupancy fractions)
    "restaurant": (120.0, [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.1, 0.2, 0.3, 0.3,
                           0.4, 0.7, 0.9, 0.7, 0.4, 0.3, 0.4, 0.6, 0.9, 1.0,
                           0.8, 0.5, 0.2, 0.1]),
    "retail": (60.0, [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.1, 0.3, 0.5,
                      0.7, 0.8, 0.8, 0.8, 0.8, 0.7, 0.7, 0.6, 0.5, 0.3,
                      0.1, 0.0, 0.0, 0.0]),
    "hotel": (200.0, [0.9, 0.9, 0.9, 0.9, 0.9, 0.8, 0.7, 0.5, 0.4, 0.3,
                      0.3, 0.3, 0.3, 0.3, 0.4, 0.4, 0.5, 0.6, 0.7, 0.8,
                      0.8, 0.9, 0.9, 0.9]),
    "hospital": (300.0, [0.7, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7,
                         0.7, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7,
                         0.7, 0.7, 0.7, 0.7]),
}


def synth_occupancy(g: CityGraph, seed: int = 0, density: float = 0.7) -> OccupancyTable:
    """Random locale counts over the eligible intersections."""
    rng = np.random.default_rng(seed)
    schedules = {name: np.array(sched) for name, (_, sched) in LOCALE_TYPES.items()}
    occupancy = {name: occ for name, (occ, _) in LOCALE_TYPES.items()}
    counts: dict[int, dict[str, int]] = {}
    for node in g.all_eligible():
        per_node = {}
        for name in sorted(LOCALE_TYPES):
            c = int(rng.poisson(density))
            if c > 0:
                per_node[name] = c
        if per_node:
            counts[node] = per_node
    return OccupancyTable(schedules, occupancy, counts)


def synth_trips(g: CityGraph, n_trips: int, seed: int = 0,
                stay_bias: float = 0.5) -> list[TripRecord]:
    """Trip history with destinations biased toward the pickup sector and its
    neighbors, so the destination matrix is meaningfully non-uniform."""
    rng = np.random.default_rng(seed)
    trips = []
    sectors = sorted(g.sectors)
    for _ in range(n_trips):
        s = int(rng.choice(sectors))
        pick_nodes = g.eligible[s]
        pickup = int(pick_nodes[int(rng.integers(len(pick_nodes)))])
        local = (s,) + tuple(sorted(g.sector_adjacency[s]))
        if rng.random() < stay_bias:
            dest = int(local[int(rng.integers(len(local)))])
        else:
            dest = int(rng.choice(sectors))
        drop_nodes = g.eligible[dest]
        dropoff = int(drop_nodes[int(rng.integers(len(drop_nodes)))])
        trips.append(TripRecord(pickup, dropoff, int(rng.integers(0, 60))))
    return trips
