"""Event review embeddings -> one dense feature per sector.

Pipeline: RBF similarity graph over a single event's review embeddings,
spectral clustering (symmetric normalized Laplacian + seeded k-means),
per-cluster averaging stacked into an event representation, then sector-level
averaging of event representations and title embeddings.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array

DEFAULT_CLUSTERS = 3      # review sentiment split: positive / negative / neutral
DEFAULT_GAMMA = 1.0
MAX_REVIEWS = 100


class EmptyClusterError(ValueError):
    """A cluster label class came back empty."""


class NoEventsError(ValueError):
    """Sector has no events; callers fall back to the event-free predictor."""


@dataclass
class EventRecord:
    """One event: where it happens, its title embedding and review embeddings."""

    event_id: str
    sector: int
    title_embedding: np.ndarray
    review_embeddings: list[np.ndarray] = field(default_factory=list)
    date: str = ""
    start_hour: int = 0


def rbf_similarity(a, c, gamma: float = DEFAULT_GAMMA) -> float:
    """exp(-gamma * ||a - c||^2); 1.0 at zero distance."""
    a = np.asarray(a, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if a.shape != c.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {c.shape}")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    diff = a - c
    return float(np.exp(-gamma * np.dot(diff, diff)))


def similarity_matrix(points: np.ndarray, gamma: float = DEFAULT_GAMMA) -> np.ndarray:
    """Complete-graph RBF weight matrix with a zero diagonal."""
    sq = np.sum(points ** 2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * points @ points.T
    np.maximum(d2, 0.0, out=d2)
    w = np.exp(-gamma * d2)
    np.fill_diagonal(w, 0.0)
    return w


def _kmeans(points: np.ndarray, k: int, rng: np.random.Generator,
            n_init: int = 10, max_iter: int = 300) -> np.ndarray:
    """Seeded k-means (k-means++ init, Lloyd iterations, best of n_init)."""
    n = points.shape[0]
    best_labels = None
    best_inertia = np.inf
    for _ in range(n_init):
        centers = np.empty((k, points.shape[1]))
        idx = int(rng.integers(n))
        centers[0] = points[idx]
        d2 = np.sum((points - centers[0]) ** 2, axis=1)
        for c in range(1, k):
            total = d2.sum()
            if total <= 0:
                idx = int(rng.integers(n))
            else:
                idx = int(rng.choice(n, p=d2 / total))
            centers[c] = points[idx]
            d2 = np.minimum(d2, np.sum((points - centers[c]) ** 2, axis=1))
        labels = np.zeros(n, dtype=np.int64)
        for _ in range(max_iter):
            dist = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
            new_labels = np.argmin(dist, axis=1)
            for c in range(k):
                members = points[new_labels == c]
                if len(members):
                    centers[c] = members.mean(axis=0)
            if np.array_equal(new_labels, labels):
                labels = new_labels
                break
            labels = new_labels
        inertia = float(np.sum((points - centers[labels]) ** 2))
        if inertia < best_inertia:
            best_inertia = inertia
            best_labels = labels
    return best_labels


def _canonicalize(points: np.ndarray, labels: np.ndarray, b: int) -> np.ndarray:
    """Relabel clusters so label order follows the lexicographically ascending
    cluster means in the original embedding space (makes stacked features
    stable under input permutation)."""
    means = []
    for a in range(1, b + 1):
        members = points[labels == a]
        means.append((tuple(members.mean(axis=0)), a))
    means.sort()
    remap = {old: rank + 1 for rank, (_, old) in enumerate(means)}
    return np.array([remap[int(l)] for l in labels], dtype=np.int64)


def spectral_cluster(embeddings, b: int, seed: int = 0,
                     gamma: float = DEFAULT_GAMMA) -> np.ndarray:
    """Cluster embeddings into b groups; returns labels in {1..b}.

    Builds the complete RBF similarity graph, takes the b smallest
    eigenvectors of the symmetric normalized Laplacian, row-normalizes and
    runs seeded k-means on the rows. When every class is non-empty, labels
    are canonicalized by ascending cluster mean.
    """
    points = np.asarray(embeddings, dtype=np.float64)
    if points.ndim != 2:
        points = np.atleast_2d(points)
    n = points.shape[0]
    if b < 1:
        raise ValueError("cluster count must be >= 1")
    if n < b:
        raise ValueError(f"{n} points cannot form {b} clusters")
    w = similarity_matrix(points, gamma)
    deg = w.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(np.maximum(deg, 1e-300))
    lap = np.eye(n) - inv_sqrt[:, None] * w * inv_sqrt[None, :]
    eigvals, eigvecs = np.linalg.eigh(lap)
    u = eigvecs[:, :b]
    norms = np.linalg.norm(u, axis=1)
    norms[norms == 0] = 1.0
    u = u / norms[:, None]
    rng = np.random.default_rng(seed)
    labels = _kmeans(u, b, rng) + 1
    if all(np.any(labels == a) for a in range(1, b + 1)):
        labels = _canonicalize(points, labels, b)
    return labels


class SpectralClusterer(ClusterMixin, BaseEstimator):
    """Estimator wrapper around spectral_cluster (fit stores labels_)."""

    def __init__(self, n_clusters: int = DEFAULT_CLUSTERS,
                 gamma: float = DEFAULT_GAMMA, random_state: int = 0):
        self.n_clusters = n_clusters
        self.gamma = gamma
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.labels_ = spectral_cluster(X, self.n_clusters,
                                        seed=self.random_state, gamma=self.gamma)
        return self


def cluster_average(embeddings, labels, b: int) -> np.ndarray:
    """Stack per-cluster means in label order into one (b*d,) vector."""
    points = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    blocks = []
    for a in range(1, b + 1):
        members = points[labels == a]
        if len(members) == 0:
            raise EmptyClusterError(f"cluster {a} of {b} is empty")
        blocks.append(members.mean(axis=0))
    return np.concatenate(blocks)


def _fill_empty_clusters(points: np.ndarray, labels: np.ndarray, b: int) -> np.ndarray:
    """Populate empty label classes by splitting the largest cluster: move its
    farthest-from-mean member into each empty class."""
    labels = labels.copy()
    while True:
        counts = np.array([np.sum(labels == a) for a in range(1, b + 1)])
        empty = np.where(counts == 0)[0]
        if len(empty) == 0:
            break
        target = int(empty[0]) + 1
        largest = int(np.argmax(counts)) + 1
        members = np.where(labels == largest)[0]
        mean = points[members].mean(axis=0)
        far = members[int(np.argmax(np.sum((points[members] - mean) ** 2, axis=1)))]
        labels[far] = target
    return _canonicalize(points, labels, b)


def event_representation(review_embeddings, b: int, seed: int = 0,
                         gamma: float = DEFAULT_GAMMA, max_retries: int = 10) -> np.ndarray:
    """Cluster one event's reviews and stack the cluster means into a (b*d,)
    vector. Retries k-means with the next seed when a class comes back empty;
    after max_retries failures the largest cluster is split instead. Events
    with fewer reviews than b use one singleton cluster per review and pad the
    remaining blocks with the overall review mean."""
    points = np.asarray(review_embeddings, dtype=np.float64)
    if points.ndim != 2:
        points = np.atleast_2d(points)
    n, d = points.shape
    if n == 0:
        raise ValueError("event has no review embeddings")
    if n < b:
        order = sorted(range(n), key=lambda i: tuple(points[i]))
        blocks = [points[i] for i in order]
        blocks.extend([points.mean(axis=0)] * (b - n))
        return np.concatenate(blocks)
    labels = None
    for attempt in range(max_retries):
        labels = spectral_cluster(points, b, seed=seed + attempt, gamma=gamma)
        try:
            return cluster_average(points, labels, b)
        except EmptyClusterError:
            continue
    labels = _fill_empty_clusters(points, labels, b)
    return cluster_average(points, labels, b)


def sector_feature(events, b: int = DEFAULT_CLUSTERS, seed: int = 0,
                   gamma: float = DEFAULT_GAMMA) -> np.ndarray:
    """Unified sector feature: mean title embedding stacked on the mean event
    representation, dimension (b+1)*d."""
    events = list(events)
    if not events:
        raise NoEventsError("sector has no events")
    sectors = {e.sector for e in events}
    if len(sectors) != 1:
        raise ValueError(f"events span multiple sectors: {sorted(sectors)}")
    titles = []
    reps = []
    for e in events:
        if not e.review_embeddings:
            raise ValueError(f"event {e.event_id} has no reviews")
        titles.append(np.asarray(e.title_embedding, dtype=np.float64))
        reps.append(event_representation(e.review_embeddings, b, seed=seed, gamma=gamma))
    z_bar = np.mean(titles, axis=0)
    r_bar = np.mean(reps, axis=0)
    return np.concatenate([z_bar, r_bar])


# -- embedding / feature files ------------------------------------------
#
# Embedding file: CSV with header
#   event_id,sector,kind,date,start_hour,v0,...,v{d-1}
# kind is "title" or "review"; every event needs exactly one title row.
# Only the first max_reviews review rows per event are kept.
#
# Sector feature file: CSV with header  date,sector,f0,...,f{D-1}


def load_events(path, max_reviews: int = MAX_REVIEWS) -> list[EventRecord]:
    """Load event records; drops events with no review rows (they cannot be
    clustered) after emitting a warning."""
    import warnings

    events: dict[str, EventRecord] = {}
    review_counts: dict[str, int] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:5] != ["event_id", "sector", "kind", "date", "start_hour"]:
            raise ValueError(f"unexpected embedding file header: {header[:5]}")
        d = len(header) - 5
        if d < 1:
            raise ValueError("embedding file has no vector columns")
        for row in reader:
            if not row:
                continue
            eid, sector, kind, date, hour = row[:5]
            vec = np.array([float(v) for v in row[5:]], dtype=np.float64)
            if vec.shape[0] != d:
                raise ValueError(f"event {eid}: vector of length {len(vec)}, expected {d}")
            if eid not in events:
                events[eid] = EventRecord(eid, int(sector), np.zeros(d),
                                          [], date, int(hour))
                review_counts[eid] = 0
            rec = events[eid]
            if kind == "title":
                rec.title_embedding = vec
            elif kind == "review":
                if review_counts[eid] < max_reviews:
                    rec.review_embeddings.append(vec)
                    review_counts[eid] += 1
            else:
                raise ValueError(f"unknown embedding kind {kind!r}")
    out = []
    for eid, rec in events.items():
        if not rec.review_embeddings:
            warnings.warn(f"event {eid} has no reviews; skipping")
            continue
        out.append(rec)
    return out


def build_sector_features(events, b: int = DEFAULT_CLUSTERS, seed: int = 0,
                          gamma: float = DEFAULT_GAMMA) -> dict[tuple[str, int], np.ndarray]:
    """Group events by (date, sector) and compute the unified feature for each group."""
    groups: dict[tuple[str, int], list[EventRecord]] = {}
    for e in events:
        groups.setdefault((e.date, e.sector), []).append(e)
    return {
        key: sector_feature(group, b=b, seed=seed, gamma=gamma)
        for key, group in sorted(groups.items())
    }


def write_sector_features(features: dict[tuple[str, int], np.ndarray], path) -> None:
    dims = {len(v) for v in features.values()}
    if len(dims) > 1:
        raise ValueError(f"inconsistent feature dimensions: {sorted(dims)}")
    dim = dims.pop() if dims else 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "sector"] + [f"f{i}" for i in range(dim)])
        for (date, sector), vec in sorted(features.items()):
            writer.writerow([date, sector] + [repr(float(v)) for v in vec])


def load_sector_features(path) -> dict[tuple[str, int], np.ndarray]:
    out: dict[tuple[str, int], np.ndarray] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            if not row:
                continue
            out[(row[0], int(row[1]))] = np.array([float(v) for v in row[2:]])
    return out
