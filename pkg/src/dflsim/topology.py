"""Time-varying directed connectivity: snapshot series, graph metrics over
time, per-node connectivity statistics, link persistence, and a random
waypoint mobility generator."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, IngestionError

Edge = tuple[int, int]


@dataclass(frozen=True)
class TopologySeries:
    """Ordered snapshots of a directed graph over a fixed node set."""

    node_count: int
    snapshots: tuple[tuple[int, frozenset[Edge]], ...]

    def __post_init__(self):
        if self.node_count < 1:
            raise ValueError("node_count must be positive")
        object.__setattr__(
            self,
            "snapshots",
            tuple((int(t), frozenset((int(a), int(b)) for a, b in edges)) for t, edges in self.snapshots),
        )
        last_t = None
        for t, edges in self.snapshots:
            if last_t is not None and t <= last_t:
                raise ValueError("snapshot time indices must be strictly increasing")
            last_t = t
            for src, dst in edges:
                if not (0 <= src < self.node_count and 0 <= dst < self.node_count):
                    raise ValueError(f"edge ({src}, {dst}) outside node range")
                if src == dst:
                    raise ValueError(f"self-loop on node {src}")

    @property
    def times(self) -> list[int]:
        return [t for t, _ in self.snapshots]


@dataclass(frozen=True)
class NodeNetStats:
    """Per-node connectivity summary over the whole series."""

    avg_in_degree: float
    avg_component_size: float
    connected_ratio: float


@dataclass
class NetworkMetricsSeries:
    """Per-snapshot aggregate metrics of the undirected closure."""

    times: list[int]
    avg_degree: list[float]
    component_count: list[int]
    avg_component_size: list[float]
    largest_component_size: list[int]

    def rows(self) -> list[tuple]:
        return list(
            zip(
                self.times,
                self.avg_degree,
                self.component_count,
                self.avg_component_size,
                self.largest_component_size,
            )
        )


def undirected_neighbor_sets(edges: frozenset[Edge], node_count: int) -> list[set[int]]:
    """Neighbors under the undirected closure (edge in either direction)."""
    nbrs = [set() for _ in range(node_count)]
    for src, dst in edges:
        nbrs[src].add(dst)
        nbrs[dst].add(src)
    return nbrs


def in_neighbor_lists(edges: frozenset[Edge], node_count: int) -> list[list[int]]:
    """Sorted in-neighbor list per node (directed)."""
    nbrs = [[] for _ in range(node_count)]
    for src, dst in edges:
        nbrs[dst].append(src)
    return [sorted(ns) for ns in nbrs]


def connected_components(edges: frozenset[Edge], node_count: int) -> list[set[int]]:
    """Components of the undirected closure; singletons included.

    Components come out ordered by their smallest node id.
    """
    nbrs = undirected_neighbor_sets(edges, node_count)
    seen = [False] * node_count
    components = []
    for start in range(node_count):
        if seen[start]:
            continue
        comp = {start}
        seen[start] = True
        queue = deque([start])
        while queue:
            node = queue.popleft()
            for other in nbrs[node]:
                if not seen[other]:
                    seen[other] = True
                    comp.add(other)
                    queue.append(other)
        components.append(comp)
    return components


def metrics_over_time(series: TopologySeries) -> NetworkMetricsSeries:
    """Average degree, component count, mean and max component size per snapshot."""
    if not series.snapshots:
        raise ValueError("series has no snapshots")
    out = NetworkMetricsSeries([], [], [], [], [])
    for t, edges in series.snapshots:
        nbrs = undirected_neighbor_sets(edges, series.node_count)
        comps = connected_components(edges, series.node_count)
        sizes = [len(c) for c in comps]
        out.times.append(t)
        out.avg_degree.append(float(np.mean([len(ns) for ns in nbrs])))
        out.component_count.append(len(comps))
        out.avg_component_size.append(float(np.mean(sizes)))
        out.largest_component_size.append(max(sizes))
    return out


def node_net_stats(series: TopologySeries) -> list[NodeNetStats]:
    """Per-node stats over time: mean in-degree, mean size of the component
    the node belongs to, and the fraction of snapshots with at least one
    neighbor in either direction."""
    if not series.snapshots:
        raise ValueError("series has no snapshots")
    n = series.node_count
    in_deg_sum = np.zeros(n)
    comp_size_sum = np.zeros(n)
    connected_count = np.zeros(n)
    for _, edges in series.snapshots:
        nbrs = undirected_neighbor_sets(edges, n)
        for comp in connected_components(edges, n):
            for node in comp:
                comp_size_sum[node] += len(comp)
        for _, dst in edges:
            in_deg_sum[dst] += 1
        for node in range(n):
            if nbrs[node]:
                connected_count[node] += 1
    t = len(series.snapshots)
    return [
        NodeNetStats(
            avg_in_degree=float(in_deg_sum[i] / t),
            avg_component_size=float(comp_size_sum[i] / t),
            connected_ratio=float(connected_count[i] / t),
        )
        for i in range(n)
    ]


def aggregate_adjacency(series: TopologySeries) -> np.ndarray:
    """Link persistence matrix: fraction of snapshots each directed edge exists."""
    if not series.snapshots:
        raise ValueError("series has no snapshots")
    n = series.node_count
    acc = np.zeros((n, n))
    for _, edges in series.snapshots:
        for src, dst in edges:
            acc[src, dst] += 1.0
    return acc / len(series.snapshots)


@dataclass(frozen=True)
class MobilityConfig:
    """Random waypoint walk in the unit square with a fixed connection radius.

    ``roam_radius`` restricts each node's waypoints to a box around a fixed
    per-node home point, which creates persistent connectivity differences
    between nodes; leave it None for the classic model where every node
    roams the whole square.
    """

    radius: float
    speed_range: tuple[float, float] = (0.02, 0.08)
    pause_range: tuple[float, float] = (0.0, 2.0)
    roam_radius: float | None = None

    def __post_init__(self):
        if self.radius < 0:
            raise ConfigError("radius must be non-negative")
        lo, hi = self.speed_range
        if not (0 < lo <= hi):
            raise ConfigError("speed_range must be positive and ordered")
        plo, phi = self.pause_range
        if not (0 <= plo <= phi):
            raise ConfigError("pause_range must be non-negative and ordered")
        if self.roam_radius is not None and self.roam_radius <= 0:
            raise ConfigError("roam_radius must be positive when set")


class _Walker:
    """State of one node's waypoint walk (unit time step per snapshot)."""

    def __init__(self, rng: np.random.Generator, lo: np.ndarray, hi: np.ndarray, cfg: MobilityConfig):
        self.rng = rng
        self.lo = lo
        self.hi = hi
        self.cfg = cfg
        self.pos = self._draw_point()
        self.target = self._draw_point()
        self.speed = self._draw_speed()
        self.pause = 0.0

    def _draw_point(self) -> np.ndarray:
        return self.lo + (self.hi - self.lo) * self.rng.random(2)

    def _draw_speed(self) -> float:
        return float(self.rng.uniform(*self.cfg.speed_range))

    def advance(self, dt: float = 1.0) -> None:
        remaining = dt
        while remaining > 1e-12:
            if self.pause > 0:
                used = min(self.pause, remaining)
                self.pause -= used
                remaining -= used
                continue
            gap = self.target - self.pos
            dist = float(np.hypot(gap[0], gap[1]))
            reach = self.speed * remaining
            if reach < dist:
                self.pos = self.pos + gap * (reach / dist)
                remaining = 0.0
            else:
                self.pos = self.target.copy()
                remaining -= dist / self.speed if self.speed > 0 else remaining
                self.pause = float(self.rng.uniform(*self.cfg.pause_range))
                self.target = self._draw_point()
                self.speed = self._draw_speed()


def generate_mobility_topology(
    node_count: int,
    snapshot_count: int,
    mobility: MobilityConfig,
    seed: int,
) -> TopologySeries:
    """Snapshot series from a seeded random waypoint walk.

    Nodes within ``mobility.radius`` of each other get edges in both
    directions (stored directed so attacks can sever one side).
    """
    if node_count < 1 or snapshot_count < 1:
        raise ConfigError("node_count and snapshot_count must be positive")
    rng = np.random.default_rng(seed)
    walkers = []
    for _ in range(node_count):
        if mobility.roam_radius is None:
            lo = np.zeros(2)
            hi = np.ones(2)
        else:
            home = rng.random(2)
            lo = np.clip(home - mobility.roam_radius, 0.0, 1.0)
            hi = np.clip(home + mobility.roam_radius, 0.0, 1.0)
        walkers.append(_Walker(rng, lo, hi, mobility))

    snapshots = []
    for t in range(snapshot_count):
        pos = np.stack([w.pos for w in walkers])
        diff = pos[:, None, :] - pos[None, :, :]
        dist = np.hypot(diff[..., 0], diff[..., 1])
        edges = set()
        for i in range(node_count):
            for j in range(i + 1, node_count):
                if dist[i, j] <= mobility.radius:
                    edges.add((i, j))
                    edges.add((j, i))
        snapshots.append((t, frozenset(edges)))
        for w in walkers:
            w.advance(1.0)
    return TopologySeries(node_count, tuple(snapshots))


def save_topology(series: TopologySeries, path) -> None:
    """Write the series as an edge list: header comments, then "t src dst" lines."""
    lines = [f"# nodes {series.node_count}"]
    lines.append("# times " + ",".join(str(t) for t in series.times))
    for t, edges in series.snapshots:
        for src, dst in sorted(edges):
            lines.append(f"{t} {src} {dst}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_topology(path, node_count: int | None = None) -> TopologySeries:
    """Read an edge-list file written by :func:`save_topology` or by hand.

    Header comments ("# nodes N", "# times t0,t1,...") are optional; without
    them the node count falls back to max id + 1 and only times with edges
    appear in the series.
    """
    header_nodes = None
    header_times = None
    by_time: dict[int, set[Edge]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("nodes "):
                    header_nodes = int(body.split()[1])
                elif body.startswith("times "):
                    header_times = [int(x) for x in body[len("times ") :].split(",") if x != ""]
                continue
            cells = line.split()
            if len(cells) != 3:
                raise IngestionError(f"{path} line {ln}: expected 't src dst'")
            try:
                t, src, dst = (int(c) for c in cells)
            except ValueError:
                raise IngestionError(f"{path} line {ln}: non-integer field") from None
            by_time.setdefault(t, set()).add((src, dst))

    times = sorted(set(by_time) | set(header_times or []))
    if not times:
        raise IngestionError(f"{path}: no snapshots found")
    if node_count is None:
        node_count = header_nodes
    if node_count is None:
        node_count = 1 + max(max(max(e) for e in edges) for edges in by_time.values())
    snapshots = tuple((t, frozenset(by_time.get(t, set()))) for t in times)
    return TopologySeries(node_count, snapshots)
