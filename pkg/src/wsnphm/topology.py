"""Routing structures for the four network topologies.

Every plan is a next-hop array over fleet node ids.  Two negative sentinels
mark the ends of a route: ``SINK`` (delivered) and ``DISCONNECTED`` (the node
has nowhere to send).  Plans never change in place; :func:`repair` returns a
new plan after nodes die.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from enum import Enum, IntEnum
from pathlib import Path

import numpy as np

from .world import Fleet, Health, Role

SINK = -1
DISCONNECTED = -2


class RoutingInvariantError(RuntimeError):
    pass


class TopologyKind(str, Enum):
    DISTRIBUTED = "distributed"
    HIERARCHICAL = "hierarchical"
    CENTRALIZED = "centralized"
    DECENTRALIZED = "decentralized"

    def __str__(self):
        return self.value


class Layer(IntEnum):
    CORE = 0
    DISTRIBUTION = 1
    ACCESS = 2


@dataclass(frozen=True)
class TopologyConfig:
    clusters: int = 30
    cluster_head_battery: float = 1500.0
    distribution_nodes: int = 30
    distribution_battery: float = 300.0
    radio_range_factor: float = 2.0  # Distributed neighbour range, in coverage radii
    max_link_range: float | None = None  # leaf->parent and relay links; None = unlimited
    kmeans_max_iter: int = 100


@dataclass(frozen=True, eq=False)
class RoutingPlan:
    kind: TopologyKind
    next_hop: np.ndarray
    cluster_assignment: np.ndarray | None = None  # per node: CH id, -1 if none
    layer: np.ndarray | None = None
    radio_range: float | None = None

    def __post_init__(self):
        for name in ("next_hop", "cluster_assignment", "layer"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.array(arr, dtype=np.int64)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)

    def __eq__(self, other):
        if not isinstance(other, RoutingPlan):
            return NotImplemented

        def same(a, b):
            return (a is None and b is None) or (
                a is not None and b is not None and np.array_equal(a, b))

        return (self.kind == other.kind and same(self.next_hop, other.next_hop)
                and same(self.cluster_assignment, other.cluster_assignment)
                and same(self.layer, other.layer))

    def __len__(self):
        return len(self.next_hop)

    @cached_property
    def _resolved(self):
        return _resolve(self.next_hop)

    def connected(self) -> np.ndarray:
        """Mask of nodes whose route ends at the sink."""
        return self._resolved[0].copy()

    def forwarding_order(self) -> np.ndarray:
        """Connected node ids ordered so each precedes its next hop."""
        ok, depth = self._resolved
        ids = np.flatnonzero(ok)
        return ids[np.argsort(-depth[ids], kind="stable")]


def _resolve(next_hop: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reachability and hop count to the sink for every node.

    Raises RoutingInvariantError on a cycle.
    """
    n = len(next_hop)
    depth = np.full(n, -1, dtype=np.int64)  # -1 unknown, -2 disconnected
    for start in range(n):
        if depth[start] != -1:
            continue
        path = []
        node = start
        while node >= 0 and depth[node] == -1:
            path.append(node)
            if len(path) > n:
                raise RoutingInvariantError(f"routing cycle through node {start}")
            node = int(next_hop[node])
        if node == SINK:
            base = 0
        elif node == DISCONNECTED or node < 0:
            base = -2
        else:
            base = depth[node]
        for k, p in enumerate(reversed(path)):
            depth[p] = -2 if base == -2 else base + k + 1
    ok = depth >= 0
    return ok, depth


def route_to_sink(plan: RoutingPlan, node: int) -> list[int] | None:
    """Hops from ``node`` to the sink, ending with ``SINK``; None if disconnected."""
    n = len(plan.next_hop)
    if not 0 <= node < n:
        raise IndexError(f"node {node} not in plan")
    path = []
    cur = int(plan.next_hop[node])
    while cur >= 0:
        path.append(cur)
        if len(path) > n:
            raise RoutingInvariantError(f"routing cycle reached from node {node}")
        cur = int(plan.next_hop[cur])
    if cur != SINK:
        return None
    path.append(SINK)
    return path


@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray
    memberships: np.ndarray
    costs: list[float] = field(default_factory=list)  # within-cluster SSE per iteration

    @property
    def cost(self) -> float:
        return self.costs[-1]


def _assign(points, centroids):
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(-1)
    labels = d2.argmin(1)  # first minimum = lowest centroid index
    return labels, float(d2[np.arange(len(points)), labels].sum())


def kmeans(points, k: int, rng: np.random.Generator, max_iter: int = 100) -> ClusterModel:
    """Lloyd's algorithm seeded with ``k`` distinct input points."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if k < 1:
        raise ValueError("k must be >= 1")
    distinct = np.unique(points, axis=0)
    if k > len(distinct):
        raise ValueError(f"k={k} exceeds the {len(distinct)} distinct points")
    # unique() sorts rows; pick by index into that sorted set for determinism
    centroids = distinct[np.sort(rng.choice(len(distinct), size=k, replace=False))].copy()
    labels, cost = _assign(points, centroids)
    costs = [cost]
    for _ in range(max_iter):
        for c in range(k):
            members = labels == c
            if members.any():
                centroids[c] = points[members].mean(0)
        new_labels, cost = _assign(points, centroids)
        costs.append(cost)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return ClusterModel(k, centroids, labels, costs)


def _pairwise(a, b):
    return np.hypot(a[:, None, 0] - b[None, :, 0], a[:, None, 1] - b[None, :, 1])


def _nearest(src, dst_ids, positions, max_range):
    """Nearest member of ``dst_ids`` for each of ``src``; DISCONNECTED if none."""
    out = np.full(len(src), DISCONNECTED, dtype=np.int64)
    if len(dst_ids) == 0 or len(src) == 0:
        return out
    d = _pairwise(positions[src], positions[dst_ids])
    j = d.argmin(1)  # dst_ids ascending, so ties go to the lowest id
    best = d[np.arange(len(src)), j]
    ok = best <= max_range if max_range is not None else np.ones(len(src), bool)
    out[ok] = dst_ids[j[ok]]
    return out


def _distributed_hops(fleet: Fleet, active: np.ndarray, radio_range: float) -> np.ndarray:
    n = len(fleet)
    next_hop = np.full(n, DISCONNECTED, dtype=np.int64)
    ids = np.flatnonzero(active)
    if len(ids) == 0:
        return next_hop
    pos = fleet.positions[ids]
    ds = fleet.sink_distances()[ids]
    d = _pairwise(pos, pos)
    np.fill_diagonal(d, np.inf)
    in_range = d <= radio_range
    closer = in_range & (ds[None, :] < ds[:, None])
    score = np.where(closer, ds[None, :], np.inf)
    j = score.argmin(1)
    has_closer = np.isfinite(score[np.arange(len(ids)), j])
    has_neighbour = in_range.any(1)
    hop = np.where(has_closer, ids[j], np.where(has_neighbour, SINK, DISCONNECTED))
    hop[ds <= radio_range] = SINK
    next_hop[ids] = hop
    return next_hop


def _relay_hops(fleet: Fleet, relays: np.ndarray, max_range) -> np.ndarray:
    """For each relay: the nearest other relay strictly closer to the sink, else SINK."""
    out = np.full(len(relays), SINK, dtype=np.int64)
    if len(relays) == 0:
        return out
    pos = fleet.positions[relays]
    ds = fleet.sink_distances()[relays]
    d = _pairwise(pos, pos)
    ok = ds[None, :] < ds[:, None]
    if max_range is not None:
        ok &= d <= max_range
    score = np.where(ok, d, np.inf)
    j = score.argmin(1)
    has = np.isfinite(score[np.arange(len(relays)), j])
    out[has] = relays[j[has]]
    if max_range is not None:
        out[~has & (ds > max_range)] = DISCONNECTED
    return out


def _active(fleet: Fleet, excluded=()) -> np.ndarray:
    active = fleet.health != Health.DEAD
    excluded = list(excluded)
    if excluded:
        active[np.asarray(excluded, dtype=np.int64)] = False
    return active


def build(kind: TopologyKind, fleet: Fleet, config: TopologyConfig | None = None,
          rng: np.random.Generator | None = None) -> RoutingPlan:
    """Build the routing plan for ``kind``.

    Hierarchical and decentralized plans need dedicated relay nodes; those are
    appended to ``fleet`` (ids after the sensors).
    """
    kind = TopologyKind(kind)
    config = config or TopologyConfig()
    if rng is None:
        rng = np.random.default_rng()
    if len(fleet) == 0:
        raise ValueError("fleet is empty")
    leaves = fleet.sensor_ids

    if kind is TopologyKind.CENTRALIZED:
        next_hop = np.where(_active(fleet), SINK, DISCONNECTED)
        return RoutingPlan(kind, next_hop)

    if kind is TopologyKind.DISTRIBUTED:
        radio_range = config.radio_range_factor * fleet.coverage_radius
        return RoutingPlan(kind, _distributed_hops(fleet, _active(fleet), radio_range),
                           radio_range=radio_range)

    if kind is TopologyKind.HIERARCHICAL:
        region = fleet.region
        m = config.distribution_nodes
        if m < 1:
            raise ValueError("need at least one distribution node")
        pos = rng.uniform(size=(m, 2)) * [region.length, region.width]
        relays = fleet.add_nodes(pos, Role.DISTRIBUTION, config.distribution_battery)
        active = _active(fleet)
        next_hop = np.full(len(fleet), DISCONNECTED, dtype=np.int64)
        live_leaves = leaves[active[leaves]]
        next_hop[live_leaves] = _nearest(live_leaves, relays, fleet.positions,
                                         config.max_link_range)
        next_hop[relays] = _relay_sink_hops(fleet, relays, config.max_link_range)
        layer = np.full(len(fleet), Layer.ACCESS, dtype=np.int64)
        layer[relays] = Layer.DISTRIBUTION
        return RoutingPlan(kind, next_hop, layer=layer)

    # decentralized
    k = config.clusters
    model = kmeans(fleet.positions[leaves], k, rng, config.kmeans_max_iter)
    heads = fleet.add_nodes(model.centroids, Role.CLUSTER_HEAD, config.cluster_head_battery)
    active = _active(fleet)
    next_hop = np.full(len(fleet), DISCONNECTED, dtype=np.int64)
    live_leaves = leaves[active[leaves]]
    next_hop[live_leaves] = _nearest(live_leaves, heads, fleet.positions, config.max_link_range)
    next_hop[heads] = _relay_hops(fleet, heads, config.max_link_range)
    assignment = np.full(len(fleet), -1, dtype=np.int64)
    assignment[leaves] = np.where(next_hop[leaves] >= 0, next_hop[leaves], -1)
    return RoutingPlan(kind, next_hop, cluster_assignment=assignment)


def _relay_sink_hops(fleet, relays, max_range):
    if max_range is None:
        return np.full(len(relays), SINK, dtype=np.int64)
    ds = fleet.sink_distances()[relays]
    return np.where(ds <= max_range, SINK, DISCONNECTED)


def repair(plan: RoutingPlan, fleet: Fleet, dead_or_broken=(),
           config: TopologyConfig | None = None) -> RoutingPlan:
    """Reroute around ``dead_or_broken`` plus every node already dead in ``fleet``.

    Surviving nodes keep their next hop unless it became unusable.
    """
    config = config or TopologyConfig()
    active = _active(fleet, dead_or_broken)
    old = plan.next_hop
    next_hop = old.copy()
    next_hop[~active] = DISCONNECTED
    kind = plan.kind

    if kind is TopologyKind.CENTRALIZED:
        return RoutingPlan(kind, next_hop)

    if kind is TopologyKind.DISTRIBUTED:
        radio_range = plan.radio_range or config.radio_range_factor * fleet.coverage_radius
        return RoutingPlan(kind, _distributed_hops(fleet, active, radio_range),
                           radio_range=radio_range)

    leaves = fleet.sensor_ids
    if kind is TopologyKind.HIERARCHICAL:
        relays = fleet.ids_with_role(Role.DISTRIBUTION)
        live_relays = relays[active[relays]]
        orphans = leaves[active[leaves] & ~_usable(old[leaves], active)]
        next_hop[orphans] = _nearest(orphans, live_relays, fleet.positions,
                                     config.max_link_range)
        return RoutingPlan(kind, next_hop, layer=plan.layer)

    heads = fleet.ids_with_role(Role.CLUSTER_HEAD)
    live_heads = heads[active[heads]]
    stale = live_heads[~_usable(old[live_heads], active, sink_ok=True)]
    if len(stale):
        rerouted = _relay_hops(fleet, live_heads, config.max_link_range)
        lookup = dict(zip(live_heads.tolist(), rerouted.tolist()))
        for h in stale:
            next_hop[h] = lookup[int(h)]
    orphans = leaves[active[leaves] & ~_usable(old[leaves], active)]
    next_hop[orphans] = _nearest(orphans, live_heads, fleet.positions, config.max_link_range)
    assignment = np.full(len(fleet), -1, dtype=np.int64)
    assignment[leaves] = np.where(next_hop[leaves] >= 0, next_hop[leaves], -1)
    return RoutingPlan(kind, next_hop, cluster_assignment=assignment)


def _usable(hops, active, sink_ok=False):
    hops = np.asarray(hops)
    ok = np.zeros(len(hops), dtype=bool)
    real = hops >= 0
    ok[real] = active[hops[real]]
    if sink_ok:
        ok |= hops == SINK
    return ok


def _hop_label(h: int) -> str:
    if h == SINK:
        return "sink"
    if h == DISCONNECTED:
        return "disconnected"
    return str(h)


def write_topology_csv(plan: RoutingPlan, fleet: Fleet, path) -> Path:
    """One row per node: ``node_id,x,y,role,next_hop,active``."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "x", "y", "role", "next_hop", "active"])
        for i in range(len(fleet)):
            x, y = fleet.positions[i]
            w.writerow([i, f"{x:.6f}", f"{y:.6f}", Role(fleet.roles[i]).name.lower(),
                        _hop_label(int(plan.next_hop[i])),
                        int(fleet.health[i] != Health.DEAD)])
    return path
