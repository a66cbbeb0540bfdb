"""One sensing round: readings travel to the sink and become classifier input."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from . import datagen
from .datagen import Condition, Instance
from .energy import TrafficLedger
from .topology import SINK, RoutingPlan, TopologyKind
from .world import Fleet, Health, Role, SensorKind

DELIVERED = "delivered"
LOST_DISCONNECTED = "lost-disconnected"
SILENT_DEAD = "silent-dead"


class InstanceMode(str, Enum):
    PER_LOCATION = "per_location"
    GLOBAL = "global"


class ImputePolicy(str, Enum):
    SENTINEL_ZERO = "sentinel_zero"
    TRAINING_MEAN = "training_mean"


@dataclass(frozen=True)
class AggregationConfig:
    window: int = 3

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("aggregation window must be >= 1")


@dataclass(frozen=True)
class Packet:
    origins: tuple[int, ...]
    kind: SensorKind
    value: float
    aggregated_count: int
    position: tuple[float, float]


def aggregate(values) -> float:
    """Mean of one window of same-kind readings."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("cannot aggregate an empty window")
    return float(values.sum() / values.size)


@dataclass
class SinkSnapshot:
    """What reached the sink in one step, stored column-wise.

    ``origins[i]`` lists the sensors whose readings make up packet ``i``.
    ``status`` and ``ground_truth`` are indexed by fleet node id (ground truth
    is only meaningful for sensors).
    """

    t: int
    kinds: np.ndarray
    values: np.ndarray
    counts: np.ndarray
    positions: np.ndarray
    origins: list[tuple[int, ...]]
    status: list[str | None]
    ground_truth: np.ndarray

    @property
    def packets(self) -> list[Packet]:
        return [Packet(o, SensorKind(k), float(v), int(c), (float(p[0]), float(p[1])))
                for o, k, v, c, p in zip(self.origins, self.kinds, self.values,
                                         self.counts, self.positions)]

    @property
    def delivered_count(self) -> int:
        return len(self.values)


def _empty_snapshot(t, n):
    return SinkSnapshot(t, np.zeros(0, np.int64), np.zeros(0), np.zeros(0, np.int64),
                        np.zeros((0, 2)), [], [None] * n, np.zeros(n, np.int64))


def sense(fleet: Fleet, t: int, rng: np.random.Generator, literal_hazard: bool = False):
    """Draw every sensor's condition, reading and area label for step ``t``.

    Draws are made for all sensors, dead or alive, so the random stream does
    not depend on the energy state.  Newly broken sensors are marked BROKEN.
    """
    sensors = fleet.sensor_ids
    conditions = datagen.draw_conditions(len(sensors), t, rng, literal_hazard)
    already = fleet.health[sensors] == Health.BROKEN
    conditions = np.where(already, Condition.SENSOR_BROKEN, conditions)
    readings = datagen.draw_readings(fleet.kinds[sensors], conditions, t, rng)
    labels = datagen.area_labels(conditions, t, rng, literal_hazard)
    newly = (conditions == Condition.SENSOR_BROKEN) & (fleet.health[sensors] == Health.OK)
    fleet.health[sensors[newly]] = Health.BROKEN
    return conditions, readings, labels


def run_step(fleet: Fleet, plan: RoutingPlan, t: int,
             agg_config: AggregationConfig | None = None,
             rng: np.random.Generator | None = None, literal_hazard: bool = False):
    """Sense, forward and aggregate one round; returns ``(snapshot, ledger)``."""
    agg_config = agg_config or AggregationConfig()
    if rng is None:
        rng = np.random.default_rng()
    n = len(fleet)
    if len(plan.next_hop) != n:
        raise ValueError("plan and fleet sizes differ")
    sensors = fleet.sensor_ids
    _, readings, labels = sense(fleet, t, rng, literal_hazard)

    alive = fleet.health != Health.DEAD
    connected = plan.connected() & alive
    next_hop = plan.next_hop
    pos = fleet.positions
    sink = fleet.sink

    ledger = TrafficLedger.empty(n)
    target = np.where(next_hop >= 0, next_hop, 0)
    hop_pos = np.where((next_hop >= 0)[:, None], pos[target], sink)
    ledger.hop_distance[:] = np.hypot(*(pos - hop_pos).T)
    ledger.hop_distance[~connected] = 0.0

    status: list[str | None] = [None] * n
    ground_truth = np.zeros(n, dtype=np.int64)
    ground_truth[sensors] = labels
    value_of = np.zeros(n)
    value_of[sensors] = readings
    live_sensors = sensors[alive[sensors]]
    for i in sensors[~alive[sensors]]:
        status[i] = SILENT_DEAD
    for i in live_sensors[~connected[live_sensors]]:
        status[i] = LOST_DISCONNECTED
    sources = live_sensors[connected[live_sensors]]
    for i in sources:
        status[i] = DELIVERED

    # packets each node originates this step
    own = np.zeros(n, dtype=np.int64)
    if plan.kind is TopologyKind.DECENTRALIZED:
        kinds_out, values_out, counts_out, pos_out, origins_out = [], [], [], [], []
        ledger.sent[sources] += 1
        heads = fleet.ids_with_role(Role.CLUSTER_HEAD)
        parent = next_hop[sources]
        ledger.received[:] += np.bincount(parent, minlength=n)[:n]
        ledger.aggregated[:] += np.bincount(parent, minlength=n)[:n]
        for h in heads:
            if not connected[h]:
                continue
            members = sources[parent == h]
            for kind in SensorKind:
                group = members[fleet.kinds[members] == kind]
                w = agg_config.window
                for start in range(0, len(group), w):
                    window = group[start:start + w]
                    kinds_out.append(int(kind))
                    values_out.append(aggregate(value_of[window]))
                    counts_out.append(len(window))
                    pos_out.append(pos[h])
                    origins_out.append(tuple(int(x) for x in window))
                    own[h] += 1
        relay_load = _forward(plan, own, connected, n)
        ledger.sent[:] += relay_load * (fleet.roles != Role.LEAF)
        ledger.received[:] += (relay_load - own) * (fleet.roles != Role.LEAF)
        snapshot = SinkSnapshot(
            t, np.asarray(kinds_out, dtype=np.int64), np.asarray(values_out, dtype=float),
            np.asarray(counts_out, dtype=np.int64),
            np.asarray(pos_out, dtype=float).reshape(-1, 2), origins_out, status, ground_truth)
    else:
        own[sources] = 1
        load = _forward(plan, own, connected, n)
        ledger.sent[:] = load
        ledger.received[:] = load - own
        snapshot = SinkSnapshot(
            t, fleet.kinds[sources].copy(), value_of[sources].copy(),
            np.ones(len(sources), dtype=np.int64), pos[sources].copy(),
            [(int(i),) for i in sources], status, ground_truth)
    return snapshot, ledger


def _forward(plan: RoutingPlan, own: np.ndarray, connected: np.ndarray, n: int) -> np.ndarray:
    """Packets each node transmits when every node forwards what it receives."""
    load = own.astype(np.int64).copy()
    load[~connected] = 0
    next_hop = plan.next_hop
    for i in plan.forwarding_order():
        h = next_hop[i]
        if h != SINK and load[i]:
            load[h] += load[i]
    return load


@dataclass
class InstanceBatch:
    """Classifier input for one step, one row per instance."""

    features: np.ndarray
    labels: np.ndarray
    missing: np.ndarray

    def __len__(self):
        return len(self.labels)

    def __iter__(self):
        for i in range(len(self)):
            yield Instance(self.features[i], int(self.labels[i]), self.missing[i])

    @property
    def masked_fraction(self) -> float:
        return float(self.missing.mean()) if self.missing.size else 0.0


def impute(vector, mask, policy: ImputePolicy = ImputePolicy.SENTINEL_ZERO,
           training_mean=None) -> np.ndarray:
    vector = np.array(vector, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if vector.shape != mask.shape:
        raise ValueError("vector and mask lengths differ")
    policy = ImputePolicy(policy)
    if policy is ImputePolicy.SENTINEL_ZERO:
        fill = np.zeros_like(vector)
    else:
        if training_mean is None:
            raise ValueError("training_mean policy needs the per-feature training mean")
        fill = np.broadcast_to(np.asarray(training_mean, dtype=float), vector.shape)
    return np.where(mask, fill, vector)


def assemble_instances(snapshot: SinkSnapshot, fleet: Fleet,
                       mode: InstanceMode = InstanceMode.PER_LOCATION,
                       impute_policy: ImputePolicy = ImputePolicy.SENTINEL_ZERO,
                       training_mean=None) -> InstanceBatch:
    """Turn delivered packets into labelled feature vectors.

    PER_LOCATION gives one row per sensor location with the nearest delivered
    temperature, pressure and humidity values.  GLOBAL gives a single row with
    one slot per sensor (by id); an aggregate fills every contributor's slot.
    """
    mode = InstanceMode(mode)
    sensors = fleet.sensor_ids
    truth = snapshot.ground_truth[sensors]
    if mode is InstanceMode.PER_LOCATION:
        loc = fleet.positions[sensors]
        feats = np.zeros((len(sensors), len(SensorKind)))
        missing = np.ones_like(feats, dtype=bool)
        for kind in SensorKind:
            sel = np.flatnonzero(snapshot.kinds == kind)
            if len(sel) == 0:
                continue
            p = snapshot.positions[sel]
            d2 = (loc[:, None, 0] - p[None, :, 0]) ** 2 + (loc[:, None, 1] - p[None, :, 1]) ** 2
            feats[:, kind] = snapshot.values[sel[d2.argmin(1)]]
            missing[:, kind] = False
        labels = truth
    else:
        slot = np.full(len(fleet), -1, dtype=np.int64)
        by_kind = sensors[np.argsort(fleet.kinds[sensors], kind="stable")]
        slot[by_kind] = np.arange(len(sensors))
        feats = np.zeros((1, len(sensors)))
        missing = np.ones_like(feats, dtype=bool)
        for origins, value in zip(snapshot.origins, snapshot.values):
            idx = slot[list(origins)]
            feats[0, idx] = value
            missing[0, idx] = False
        labels = np.array([int(truth.any())], dtype=np.int64)
    if missing.any():
        if ImputePolicy(impute_policy) is ImputePolicy.TRAINING_MEAN:
            mean = np.broadcast_to(np.asarray(training_mean, dtype=float), feats.shape)
            feats = np.where(missing, mean, feats)
        else:
            feats = np.where(missing, 0.0, feats)
    return InstanceBatch(feats, labels, missing)


def write_snapshot_csv(snapshots, fleet: Fleet, path, append: bool = False) -> Path:
    """Rows ``t,node_id,status,kind,value,aggregated_count`` for every sensor."""
    path = Path(path)
    with path.open("a" if append else "w", newline="") as fh:
        w = csv.writer(fh)
        if not append:
            w.writerow(["t", "node_id", "status", "kind", "value", "aggregated_count"])
        for snap in snapshots:
            carried = {}
            for origins, value, count in zip(snap.origins, snap.values, snap.counts):
                for o in origins:
                    carried[o] = (value, count)
            for i in fleet.sensor_ids:
                kind = SensorKind(fleet.kinds[i]).name.lower()
                value, count = carried.get(int(i), ("", ""))
                if value != "":
                    value = repr(float(value))
                w.writerow([snap.t, int(i), snap.status[i], kind, value, count])
    return path
