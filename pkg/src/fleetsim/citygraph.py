"""Street-network environment: directed unit-time graph with a sector partition."""

from __future__ import annotations

import threading
from collections import deque

import numpy as np


class GraphFormatError(ValueError):
    """Bad map file or inconsistent graph records."""


class CityGraph:
    """Immutable directed street graph partitioned into demand sectors.

    Intersections are numbered 1..n and every street takes one time step to
    traverse. Each intersection belongs to exactly one sector (labelled
    0..K-1) and carries a flag marking it usable for pickups and drop-offs.
    All-pairs routing tables (hop counts and lowest-id next hops) are built
    lazily behind a lock; after that the instance is safe to share read-only
    across any number of planners.
    """

    def __init__(self, nodes, edges):
        """nodes: iterable of (id, sector, eligible); edges: iterable of (src, dst)."""
        node_list = [(int(i), int(s), bool(e)) for i, s, e in nodes]
        if not node_list:
            raise GraphFormatError("graph has no nodes")
        ids = [i for i, _, _ in node_list]
        if len(set(ids)) != len(ids):
            raise GraphFormatError("duplicate node ids")
        n = len(ids)
        if sorted(ids) != list(range(1, n + 1)):
            raise GraphFormatError("node ids must be exactly 1..n")
        self.n = n

        sector_of = np.zeros(n, dtype=np.int64)
        elig_flags = [False] * n
        for i, s, e in node_list:
            sector_of[i - 1] = s
            elig_flags[i - 1] = e
        labels = sorted(set(int(s) for s in sector_of))
        if labels != list(range(len(labels))):
            raise GraphFormatError("sector labels must be contiguous 0..K-1")
        self._sector_of = sector_of

        adj: list[list[int]] = [[] for _ in range(n)]
        seen = set()
        for src, dst in edges:
            src, dst = int(src), int(dst)
            if not (1 <= src <= n and 1 <= dst <= n):
                raise GraphFormatError(f"edge ({src}, {dst}) references a missing node")
            if src == dst:
                raise GraphFormatError(f"self-loop edge at node {src}")
            if (src, dst) in seen:
                raise GraphFormatError(f"duplicate edge ({src}, {dst})")
            seen.add((src, dst))
            adj[src - 1].append(dst)
        for i, out in enumerate(adj):
            if not out:
                raise GraphFormatError(f"node {i + 1} has no outgoing edge")
        self._adj = tuple(tuple(sorted(out)) for out in adj)
        self._edge_count = len(seen)

        self.sectors = {
            k: tuple(i + 1 for i in range(n) if sector_of[i] == k) for k in labels
        }
        self.eligible = {
            k: tuple(i for i in self.sectors[k] if elig_flags[i - 1]) for k in labels
        }
        sadj: dict[int, set[int]] = {k: set() for k in labels}
        for src, dst in seen:
            a, b = int(sector_of[src - 1]), int(sector_of[dst - 1])
            if a != b:
                sadj[a].add(b)
                sadj[b].add(a)
        self.sector_adjacency = {k: frozenset(v) for k, v in sadj.items()}

        self._lock = threading.Lock()
        self._dist: np.ndarray | None = None
        self._next: np.ndarray | None = None

    # -- basic queries -------------------------------------------------

    @property
    def num_sectors(self) -> int:
        return len(self.sectors)

    @property
    def num_edges(self) -> int:
        return self._edge_count

    def all_eligible(self) -> tuple[int, ...]:
        return tuple(sorted(i for k in self.eligible for i in self.eligible[k]))

    def _check_node(self, i: int) -> None:
        if not (1 <= i <= self.n):
            raise ValueError(f"unknown node id {i}")

    def neighbors(self, i: int) -> frozenset[int]:
        """Outgoing neighbors of intersection i."""
        self._check_node(i)
        return frozenset(self._adj[i - 1])

    def neighbors_sorted(self, i: int) -> tuple[int, ...]:
        """Outgoing neighbors in ascending id order (deterministic enumeration)."""
        self._check_node(i)
        return self._adj[i - 1]

    def sector_of(self, i: int) -> int:
        self._check_node(i)
        return int(self._sector_of[i - 1])

    def edges(self):
        for i, out in enumerate(self._adj):
            for j in out:
                yield (i + 1, j)

    # -- routing -------------------------------------------------------

    def _build_tables(self) -> None:
        n = self.n
        dist = np.full((n, n), -1, dtype=np.int64)
        nxt = np.full((n, n), -1, dtype=np.int64)
        radj: list[list[int]] = [[] for _ in range(n)]
        for i in range(n):
            for j in self._adj[i]:
                radj[j - 1].append(i)
        for d in range(n):
            dcol = dist[:, d]
            dcol[d] = 0
            q = deque([d])
            while q:
                v = q.popleft()
                dv = dcol[v] + 1
                for u in radj[v]:
                    if dcol[u] < 0:
                        dcol[u] = dv
                        q.append(u)
            nxt[d, d] = d
            for s in range(n):
                ds = dcol[s]
                if ds <= 0:
                    continue
                # lowest-id neighbor on a shortest path: deterministic routing
                for j in self._adj[s]:
                    if dcol[j - 1] == ds - 1:
                        nxt[s, d] = j - 1
                        break
        self._dist = dist
        self._next = nxt

    def _ensure_tables(self) -> None:
        if self._dist is None:
            with self._lock:
                if self._dist is None:
                    self._build_tables()

    @property
    def distance_matrix(self) -> np.ndarray:
        """Hop counts indexed by (src-1, dst-1); -1 marks unreachable."""
        self._ensure_tables()
        return self._dist

    @property
    def next_hop_matrix(self) -> np.ndarray:
        """Next-hop node index (0-based) toward dst; -1 when unreachable."""
        self._ensure_tables()
        return self._next

    def shortest_path(self, src: int, dst: int):
        """Return (hop_count, next_hop_id) or None when dst is unreachable."""
        self._check_node(src)
        self._check_node(dst)
        self._ensure_tables()
        d = int(self._dist[src - 1, dst - 1])
        if d < 0:
            return None
        return d, int(self._next[src - 1, dst - 1]) + 1

    def hop_count(self, src: int, dst: int) -> int:
        sp = self.shortest_path(src, dst)
        return -1 if sp is None else sp[0]

    # -- file format -----------------------------------------------------
    #
    # Line-oriented text, comma separated, '#' comments and blank lines
    # ignored. Record kinds, in canonical order:
    #   sector,<sector_id>
    #   node,<id>,<sector_id>,<eligible 0|1>
    #   edge,<src>,<dst>
    # Canonical order (what save() emits): sectors ascending, nodes
    # ascending, edges sorted by (src, dst).

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    def dumps(self) -> str:
        lines = []
        for k in sorted(self.sectors):
            lines.append(f"sector,{k}")
        elig = set(self.all_eligible())
        for i in range(1, self.n + 1):
            lines.append(f"node,{i},{self.sector_of(i)},{1 if i in elig else 0}")
        for src, dst in sorted(self.edges()):
            lines.append(f"edge,{src},{dst}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "CityGraph":
        declared: set[int] = set()
        nodes = []
        edges = []
        for ln, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            tag = parts[0]
            try:
                if tag == "sector" and len(parts) == 2:
                    declared.add(int(parts[1]))
                elif tag == "node" and len(parts) == 4:
                    nodes.append((int(parts[1]), int(parts[2]), int(parts[3]) != 0))
                elif tag == "edge" and len(parts) == 3:
                    edges.append((int(parts[1]), int(parts[2])))
                else:
                    raise GraphFormatError(f"line {ln}: unrecognized record {line!r}")
            except ValueError as exc:
                raise GraphFormatError(f"line {ln}: {exc}") from exc
        for _, s, _ in nodes:
            if s not in declared:
                raise GraphFormatError(f"node references undeclared sector {s}")
        used = {s for _, s, _ in nodes}
        for s in declared:
            if s not in used:
                raise GraphFormatError(f"declared sector {s} has no nodes")
        return cls(nodes, edges)

    @classmethod
    def load(cls, path) -> "CityGraph":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.loads(fh.read())


# -- desk-scale map generators -----------------------------------------


def grid_city(rows: int, cols: int, sectors_x: int = 1, sectors_y: int = 1,
              eligible_fraction: float = 1.0, seed: int = 0) -> CityGraph:
    """Bidirectional rows x cols grid cut into sectors_x*sectors_y rectangular sectors."""
    if rows < 1 or cols < 1:
        raise ValueError("grid needs at least one row and column")
    if rows * cols < 2:
        raise ValueError("grid needs at least two nodes")
    if sectors_x > cols or sectors_y > rows:
        raise ValueError("more sector blocks than grid lines")
    nid = lambda r, c: r * cols + c + 1
    nodes = []
    for r in range(rows):
        for c in range(cols):
            sec = (r * sectors_y // rows) * sectors_x + (c * sectors_x // cols)
            nodes.append((nid(r, c), sec, True))
    edges = []
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                edges.append((nid(r, c), nid(r, c + 1)))
                edges.append((nid(r, c + 1), nid(r, c)))
            if r + 1 < rows:
                edges.append((nid(r, c), nid(r + 1, c)))
                edges.append((nid(r + 1, c), nid(r, c)))
    if eligible_fraction < 1.0:
        nodes = _thin_eligible(nodes, eligible_fraction, seed)
    return CityGraph(nodes, edges)


def ring_city(n_sectors: int, nodes_per_sector: int,
              eligible_fraction: float = 1.0, seed: int = 0) -> CityGraph:
    """Ring of sectors, each a bidirectional path, so every sector has exactly
    two adjacent sectors (n_sectors >= 3)."""
    if n_sectors < 3:
        raise ValueError("a ring needs at least 3 sectors")
    if nodes_per_sector < 1:
        raise ValueError("each sector needs at least one node")
    nodes = []
    edges = []
    p = nodes_per_sector
    n = n_sectors * p
    for k in range(n_sectors):
        for j in range(p):
            nodes.append((k * p + j + 1, k, True))
            if j + 1 < p:
                edges.append((k * p + j + 1, k * p + j + 2))
                edges.append((k * p + j + 2, k * p + j + 1))
        last = k * p + p
        first_next = ((k + 1) % n_sectors) * p + 1
        edges.append((last, first_next))
        edges.append((first_next, last))
    if eligible_fraction < 1.0:
        nodes = _thin_eligible(nodes, eligible_fraction, seed)
    assert len(nodes) == n
    return CityGraph(nodes, edges)


def line_city(n_nodes: int, n_sectors: int = 1) -> CityGraph:
    """Bidirectional path graph; sectors are contiguous runs of nodes."""
    if n_nodes < 2:
        raise ValueError("line needs at least two nodes")
    if not (1 <= n_sectors <= n_nodes):
        raise ValueError("bad sector count")
    nodes = [(i, (i - 1) * n_sectors // n_nodes, True) for i in range(1, n_nodes + 1)]
    edges = []
    for i in range(1, n_nodes):
        edges.append((i, i + 1))
        edges.append((i + 1, i))
    return CityGraph(nodes, edges)


def _thin_eligible(nodes, fraction: float, seed: int):
    """Keep a seeded fraction of eligible flags, at least one per sector."""
    rng = np.random.default_rng(seed)
    by_sector: dict[int, list[int]] = {}
    for i, s, _ in nodes:
        by_sector.setdefault(s, []).append(i)
    keep: set[int] = set()
    for s in sorted(by_sector):
        members = sorted(by_sector[s])
        k = max(1, int(round(fraction * len(members))))
        chosen = rng.choice(len(members), size=k, replace=False)
        keep.update(members[int(c)] for c in chosen)
    return [(i, s, i in keep) for i, s, _ in nodes]
