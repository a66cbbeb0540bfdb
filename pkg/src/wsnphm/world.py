"""Region geometry, node fleet and coverage.

A :class:`Fleet` stores node attributes column-wise in numpy arrays so the
simulation loop can update batteries and health for the whole network at
once.  :meth:`Fleet.node` gives a per-node :class:`Node` view when a record
is more convenient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from scipy.spatial import cKDTree

DEFAULT_SENSOR_BATTERY = 300.0


class InvalidRegionError(ValueError):
    pass


class EmptyFleetError(ValueError):
    pass


class CoverageDeficitError(RuntimeError):
    """Raised when no deployment attempt reaches the requested coverage."""


class SensorKind(IntEnum):
    TEMPERATURE = 0
    PRESSURE = 1
    HUMIDITY = 2


class Role(IntEnum):
    LEAF = 0
    CLUSTER_HEAD = 1
    DISTRIBUTION = 2


class Health(IntEnum):
    OK = 0
    BROKEN = 1
    DEAD = 2


@dataclass(frozen=True)
class Region:
    length: float = 100.0
    width: float = 100.0
    sink: tuple[float, float] = (50.0, 50.0)

    def __post_init__(self):
        if not (self.length > 0 and self.width > 0):
            raise InvalidRegionError(f"region sides must be positive, got {self.length}x{self.width}")
        x, y = self.sink
        if not (0.0 <= x <= self.length and 0.0 <= y <= self.width):
            raise InvalidRegionError(f"sink {self.sink} lies outside the region")

    @property
    def area(self) -> float:
        return self.length * self.width


@dataclass(frozen=True)
class Node:
    id: int
    kind: SensorKind | None  # None for cluster heads and distribution nodes
    position: tuple[float, float]
    role: Role
    battery: float
    health: Health


def distance(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def coverage_radius(region: Region) -> float:
    """Radius of a disk covering 1% of the region."""
    if not region.area > 0:
        raise InvalidRegionError("region area must be positive")
    return 0.1 * math.sqrt(region.area / math.pi)


class Fleet:
    """All deployed nodes of one network, sensors first.

    ``kinds`` holds -1 for nodes that do not sense (cluster heads and
    distribution nodes).
    """

    def __init__(self, positions, kinds, roles, battery, region: Region,
                 coverage_radius: float, health=None):
        self.positions = np.asarray(positions, dtype=float).reshape(-1, 2)
        n = len(self.positions)
        self.kinds = np.asarray(kinds, dtype=np.int64).reshape(n)
        self.roles = np.asarray(roles, dtype=np.int64).reshape(n)
        self.battery = np.asarray(battery, dtype=float).reshape(n).copy()
        if health is None:
            health = np.where(self.battery > 0, Health.OK, Health.DEAD)
        self.health = np.asarray(health, dtype=np.int64).reshape(n).copy()
        self.region = region
        if not coverage_radius > 0:
            raise ValueError("coverage radius must be positive")
        self.coverage_radius = float(coverage_radius)
        if np.any(self.battery < 0):
            raise ValueError("battery must be non-negative")

    def __len__(self) -> int:
        return len(self.positions)

    def node(self, i: int) -> Node:
        kind = SensorKind(self.kinds[i]) if self.kinds[i] >= 0 else None
        return Node(int(i), kind, (float(self.positions[i, 0]), float(self.positions[i, 1])),
                    Role(self.roles[i]), float(self.battery[i]), Health(self.health[i]))

    @property
    def nodes(self) -> list[Node]:
        return [self.node(i) for i in range(len(self))]

    @property
    def sink(self) -> np.ndarray:
        return np.asarray(self.region.sink, dtype=float)

    @property
    def alive(self) -> np.ndarray:
        return self.health != Health.DEAD

    @property
    def sensor_ids(self) -> np.ndarray:
        return np.flatnonzero(self.roles == Role.LEAF)

    def ids_with_role(self, role: Role) -> np.ndarray:
        return np.flatnonzero(self.roles == role)

    def sink_distances(self) -> np.ndarray:
        return np.hypot(*(self.positions - self.sink).T)

    def add_nodes(self, positions, role: Role, battery: float) -> np.ndarray:
        """Append non-sensing nodes and return their ids."""
        positions = np.asarray(positions, dtype=float).reshape(-1, 2)
        m = len(positions)
        start = len(self)
        self.positions = np.vstack([self.positions, positions])
        self.kinds = np.concatenate([self.kinds, np.full(m, -1, dtype=np.int64)])
        self.roles = np.concatenate([self.roles, np.full(m, int(role), dtype=np.int64)])
        self.battery = np.concatenate([self.battery, np.full(m, float(battery))])
        self.health = np.concatenate([self.health, np.full(m, int(Health.OK), dtype=np.int64)])
        return np.arange(start, start + m)

    def copy(self) -> "Fleet":
        return Fleet(self.positions.copy(), self.kinds, self.roles, self.battery,
                     self.region, self.coverage_radius, health=self.health)


def _grid_shape(count: int, region: Region) -> tuple[int, int]:
    # smallest near-square grid of at least `count` cells with the region's aspect
    nx = max(1, round(math.sqrt(count * region.length / region.width)))
    ny = max(1, math.ceil(count / nx))
    return nx, ny


def _draw_positions(region: Region, count: int, rng: np.random.Generator,
                    strategy: str) -> np.ndarray:
    if strategy == "uniform":
        u = rng.uniform(size=(count, 2))
        return u * [region.length, region.width]
    if strategy == "stratified":
        nx, ny = _grid_shape(count, region)
        cells = rng.permutation(nx * ny)[:count]
        cells.sort()
        cx, cy = cells % nx, cells // nx
        u = rng.uniform(size=(count, 2))
        x = (cx + u[:, 0]) * region.length / nx
        y = (cy + u[:, 1]) * region.width / ny
        return np.column_stack([x, y])
    raise ValueError(f"unknown deployment strategy {strategy!r}")


def deploy(region: Region, counts=(100, 100, 100), rng: np.random.Generator | None = None,
           battery: float = DEFAULT_SENSOR_BATTERY, strategy: str = "stratified",
           min_coverage: float = 0.99, coverage_resolution: int = 100,
           max_attempts: int = 50) -> Fleet:
    """Randomly place sensors of each kind in ``region``.

    Positions are redrawn (up to ``max_attempts`` times) until the fleet covers
    at least ``min_coverage`` of a ``coverage_resolution`` square sample grid.
    Pass ``min_coverage=0`` to accept the first draw.
    """
    if rng is None:
        rng = np.random.default_rng()
    counts = [int(c) for c in counts]
    if len(counts) != len(SensorKind) or any(c < 0 for c in counts):
        raise ValueError(f"need one non-negative count per sensor kind, got {counts}")
    total = sum(counts)
    if total == 0:
        raise EmptyFleetError("cannot deploy an empty fleet")
    radius = coverage_radius(region)
    kinds_sorted = np.repeat(np.arange(len(SensorKind)), counts)

    best = 0.0
    for _ in range(max_attempts):
        # ids run kind by kind (temperature first); the shuffle decides who sits where
        positions = _draw_positions(region, total, rng, strategy)[rng.permutation(total)]
        fleet = Fleet(positions, kinds_sorted, np.full(total, Role.LEAF), np.full(total, battery),
                      region, radius)
        if min_coverage <= 0:
            return fleet
        covered = covered_fraction(fleet, coverage_resolution)
        if covered >= min_coverage:
            return fleet
        best = max(best, covered)
    raise CoverageDeficitError(
        f"best of {max_attempts} deployments covered {best:.4f} < {min_coverage}")


def _grid_points(region: Region, resolution: int) -> np.ndarray:
    xs = (np.arange(resolution) + 0.5) * region.length / resolution
    ys = (np.arange(resolution) + 0.5) * region.width / resolution
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def covered_fraction(fleet: Fleet, grid_resolution: int = 100) -> float:
    """Share of cell-centre sample points within R_c of a live sensor."""
    if grid_resolution < 2:
        raise ValueError("grid_resolution must be >= 2")
    live = (fleet.roles == Role.LEAF) & (fleet.battery > 0)
    if not live.any():
        return 0.0
    pts = _grid_points(fleet.region, grid_resolution)
    nearest, _ = cKDTree(fleet.positions[live]).query(pts, distance_upper_bound=fleet.coverage_radius)
    # query reports inf beyond the bound, so finite means within R_c
    covered = np.isfinite(nearest)
    return float(covered.mean())
