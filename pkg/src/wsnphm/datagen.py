"""Sensed-value models, the per-sensor failure process and training data.

Each sensor draws a Poisson variate ``Pp`` every round and maps it onto one
of three conditions:

    Pp < 1          -> NORMAL         (area and sensor fine)
    1 <= Pp < 100   -> AREA_FAILURE   (area fails in the sensor's range)
    Pp >= 100       -> SENSOR_BROKEN  (sensor emits a fixed constant)

The Poisson rate is the reciprocal of ``200 * (1 - 0.01 t) + 0.01`` so that
failures become more likely as the network ages; ``literal=True`` uses the
undivided expression instead.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, asdict
from enum import IntEnum
from pathlib import Path

import numpy as np
from scipy import stats

from .world import SensorKind

# (base, drift per step): normal mean is base * (1 + drift * t)
NORMAL_MEAN = {
    SensorKind.TEMPERATURE: (20.0, 0.005),
    SensorKind.PRESSURE: (5.0, 0.01),
    SensorKind.HUMIDITY: (52.5, 0.001),
}
NORMAL_STD = {
    SensorKind.TEMPERATURE: 1.0,
    SensorKind.PRESSURE: 0.3,
    SensorKind.HUMIDITY: 12.5,
}
FAILURE_PARAMS = {
    SensorKind.TEMPERATURE: (350.0, 20.0),
    SensorKind.PRESSURE: (20.0, 2.5),
    SensorKind.HUMIDITY: (80.0, 10.0),
}
BROKEN_VALUE = {
    SensorKind.TEMPERATURE: 2.0,
    SensorKind.PRESSURE: 1.0,
    SensorKind.HUMIDITY: 3.0,
}
THRESHOLDS = {
    SensorKind.TEMPERATURE: 26.0,
    SensorKind.PRESSURE: 7.0,
    SensorKind.HUMIDITY: 80.0,
}

AREA_FAILURE_AT = 1
SENSOR_BROKEN_AT = 100
MIN_POISSON_DENOMINATOR = 0.01

NORMAL_LABEL = 0
FAILURE_LABEL = 1

# lookup tables indexed by SensorKind value
_BASE = np.array([NORMAL_MEAN[k][0] for k in SensorKind])
_DRIFT = np.array([NORMAL_MEAN[k][1] for k in SensorKind])
_NSTD = np.array([NORMAL_STD[k] for k in SensorKind])
_FMEAN = np.array([FAILURE_PARAMS[k][0] for k in SensorKind])
_FSTD = np.array([FAILURE_PARAMS[k][1] for k in SensorKind])
_BROKEN = np.array([BROKEN_VALUE[k] for k in SensorKind])


class Condition(IntEnum):
    NORMAL = 0
    AREA_FAILURE = 1
    SENSOR_BROKEN = 2


def normal_mean(kind: SensorKind, t: float) -> float:
    base, drift = NORMAL_MEAN[SensorKind(kind)]
    return base * (1.0 + drift * t)


def draw_readings(kinds, conditions, t, rng: np.random.Generator) -> np.ndarray:
    """Vectorised reading draw; ``t`` may be a scalar or one age per entry.

    Exactly one standard normal is consumed per entry whatever the condition,
    so the stream position does not depend on which branch fired.
    """
    kinds = np.asarray(kinds, dtype=np.int64)
    conditions = np.asarray(conditions, dtype=np.int64)
    t = np.asarray(t, dtype=float)
    z = rng.standard_normal(kinds.shape)
    normal = _BASE[kinds] * (1.0 + _DRIFT[kinds] * t) + _NSTD[kinds] * z
    failure = _FMEAN[kinds] + _FSTD[kinds] * z
    return np.where(conditions == Condition.NORMAL, normal,
                    np.where(conditions == Condition.AREA_FAILURE, failure, _BROKEN[kinds]))


def draw_reading(kind: SensorKind, condition: Condition, t: float,
                 rng: np.random.Generator) -> float:
    return float(draw_readings([int(kind)], [int(condition)], t, rng)[0])


def poisson_parameter(t, literal: bool = False):
    """Poisson rate of the failure draw at operating age ``t``."""
    denom = 200.0 * (1.0 - 0.01 * np.asarray(t, dtype=float)) + 0.01
    if literal:
        return np.maximum(denom, 0.0) if np.ndim(denom) else max(float(denom), 0.0)
    out = 1.0 / np.maximum(denom, MIN_POISSON_DENOMINATOR)
    return out if np.ndim(out) else float(out)


def hazard(t, literal: bool = False):
    return poisson_parameter(t, literal)


def condition_from_draw(pp):
    """Algorithm 1 of the sensing loop, applied to Poisson draws."""
    pp = np.asarray(pp)
    out = np.where(pp < AREA_FAILURE_AT, Condition.NORMAL,
                   np.where(pp < SENSOR_BROKEN_AT, Condition.AREA_FAILURE,
                            Condition.SENSOR_BROKEN))
    return Condition(int(out)) if out.ndim == 0 else out.astype(np.int64)


def branch_probabilities(lam: float) -> tuple[float, float, float]:
    """P(NORMAL), P(AREA_FAILURE), P(SENSOR_BROKEN) for rate ``lam``."""
    p0 = math.exp(-lam)
    p2 = float(stats.poisson.sf(SENSOR_BROKEN_AT - 1, lam))
    return p0, max(0.0, 1.0 - p0 - p2), p2


def draw_conditions(n: int, t, rng: np.random.Generator, literal: bool = False) -> np.ndarray:
    lam = poisson_parameter(t, literal)
    return condition_from_draw(rng.poisson(lam, size=n))


def draw_condition(t: float, rng: np.random.Generator, literal: bool = False) -> Condition:
    return Condition(int(draw_conditions(1, t, rng, literal)[0]))


def exceeds_threshold(kind: SensorKind, value: float) -> bool:
    return value > THRESHOLDS[SensorKind(kind)]


def failure_given_not_broken(t, literal: bool = False):
    """P(area failure | the draw did not land in the broken branch)."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    ages, inverse = np.unique(t_arr, return_inverse=True)
    table = np.empty(len(ages))
    for i, age in enumerate(ages):
        p0, p1, _ = branch_probabilities(poisson_parameter(age, literal))
        table[i] = p1 / (p0 + p1) if p0 + p1 > 0 else 1.0
    out = table[inverse.reshape(t_arr.shape)]
    return out if np.ndim(t) else float(out[0])


def area_labels(conditions, t, rng: np.random.Generator, literal: bool = False) -> np.ndarray:
    """True area state for each location given its sensor's condition.

    A broken sensor says nothing about its area, so those locations get a
    fresh draw between the two other branches.  One uniform is consumed per
    location regardless of condition.
    """
    conditions = np.asarray(conditions, dtype=np.int64)
    u = rng.uniform(size=conditions.shape)
    p_fail = failure_given_not_broken(t, literal)
    redraw = (u < p_fail).astype(np.int64)
    return np.where(conditions == Condition.SENSOR_BROKEN, redraw,
                    (conditions == Condition.AREA_FAILURE).astype(np.int64))


def area_ground_truth(condition: Condition, t: float, rng: np.random.Generator,
                      literal: bool = False) -> int:
    return int(area_labels([int(condition)], t, rng, literal)[0])


@dataclass(frozen=True)
class Instance:
    features: np.ndarray
    label: int
    missing_mask: np.ndarray


@dataclass(frozen=True)
class DatasetConfig:
    n: int = 4000
    temperature: int = 1
    pressure: int = 1
    humidity: int = 1
    t_min: int = 0
    t_max: int = 100
    include_broken: bool = True
    literal_hazard: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("dataset needs at least one instance")
        if min(self.temperature, self.pressure, self.humidity) < 1:
            raise ValueError("each sensor kind needs at least one feature slot")
        if self.t_max < self.t_min:
            raise ValueError("t_max must be >= t_min")

    @property
    def kinds(self) -> np.ndarray:
        return np.repeat(np.arange(3), [self.temperature, self.pressure, self.humidity])


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    missing: np.ndarray
    layout: list[str] = field(default_factory=list)
    config: DatasetConfig | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        if self.features.ndim == 1:
            self.features = self.features[:, None]
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.missing = np.asarray(self.missing, dtype=bool).reshape(self.features.shape)
        if len(self.labels) != len(self.features):
            raise ValueError("features and labels differ in length")
        if not np.isin(self.labels, (NORMAL_LABEL, FAILURE_LABEL)).all():
            raise ValueError("labels must be binary")
        if not self.layout:
            self.layout = [f"f{i}" for i in range(self.features.shape[1])]

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def instances(self) -> list[Instance]:
        return [Instance(self.features[i], int(self.labels[i]), self.missing[i])
                for i in range(len(self))]

    @classmethod
    def from_instances(cls, instances, layout=None) -> "Dataset":
        instances = list(instances)
        return cls(np.array([i.features for i in instances]),
                   np.array([i.label for i in instances]),
                   np.array([i.missing_mask for i in instances]), layout or [])

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"f{i}" for i in range(self.n_features)] + ["label"])
            for row, mask, label in zip(self.features, self.missing, self.labels):
                w.writerow(["" if m else repr(float(v)) for v, m in zip(row, mask)] + [int(label)])

    @classmethod
    def from_csv(cls, path, sentinel: float = 0.0) -> "Dataset":
        with Path(path).open(newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if not header or header[-1] != "label":
            raise ValueError(f"{path}: last column must be 'label'")
        width = len(header) - 1
        missing = np.array([[cell == "" for cell in r[:width]] for r in body], dtype=bool)
        feats = np.array([[sentinel if cell == "" else float(cell) for cell in r[:width]]
                          for r in body], dtype=float).reshape(len(body), width)
        labels = np.array([int(r[-1]) for r in body], dtype=np.int64)
        return cls(feats, labels, missing.reshape(len(body), width), header[:-1])


def generate_training_set(config: DatasetConfig, rng: np.random.Generator) -> Dataset:
    """Draw ``config.n`` complete rows from the same process the network senses.

    Each row picks an integer operating age and one condition shared by all
    its slots. Readings for every slot and the area label follow from those.
    """
    n = config.n
    t = rng.integers(config.t_min, config.t_max + 1, size=n)
    conditions = condition_from_draw(rng.poisson(poisson_parameter(t, config.literal_hazard)))
    if not config.include_broken:
        broken = conditions == Condition.SENSOR_BROKEN
        redraw = rng.uniform(size=n) < failure_given_not_broken(t, config.literal_hazard)
        conditions = np.where(broken, np.where(redraw, Condition.AREA_FAILURE, Condition.NORMAL),
                              conditions).astype(np.int64)
    kinds = config.kinds
    feats = draw_readings(np.broadcast_to(kinds, (n, len(kinds))),
                          np.repeat(conditions[:, None], len(kinds), axis=1),
                          t[:, None], rng)
    labels = area_labels(conditions, t, rng, config.literal_hazard)
    names = {0: "temperature", 1: "pressure", 2: "humidity"}
    layout = [f"{names[k]}_{i}" for i, k in enumerate(kinds)]
    return Dataset(feats, labels, np.zeros(feats.shape, dtype=bool), layout, config)


def dataset_config_dict(config: DatasetConfig) -> dict:
    return asdict(config)
