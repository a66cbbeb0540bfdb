"""Running the full experiment and turning its rows into curves and files.

Seed splitting: seed index ``i`` of master seed ``m`` gets
``SeedSequence(m, spawn_key=(i,))``, which hashes the pair into an
independent stream.  That child spawns four more, in this order: training
set and model fitting, deployment, topology construction (one grandchild per
topology kind, in enum order), and sensing.  Every topology replays the same
deployment and the same sensing stream, so topologies differ only in how the
data travels.  Results never depend on how seeds are spread over workers.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .collection import AggregationConfig, ImputePolicy, InstanceMode, assemble_instances, run_step
from .datagen import DatasetConfig, generate_training_set
from .diagnostics import AlgorithmKind, Hyperparameters, error_rate, train
from .energy import RadioModel, apply_step
from .topology import TopologyConfig, TopologyKind, build, repair
from .world import Health, Region, covered_fraction, deploy

RAW_HEADER = ["topology", "algorithm", "t", "seed", "error_rate", "covered_fraction",
              "alive_count", "delivered_count"]
SUMMARY_HEADER = ["topology", "algorithm", "t", "mean_error", "stderr_error", "seeds"]
LIFETIME_HEADER = ["topology", "seed", "first_death", "whole_network_death"]

# RadioModel defaults scaled by the factor `calibrate --targets 10,20,40,60`
# settles on; the mean Centralized first death then lands near t=10.
CALIBRATED_SCALE = 1.171875
DEFAULT_RADIO = RadioModel().scaled(CALIBRATED_SCALE)


class ConfigError(ValueError):
    pass


class SimulationError(RuntimeError):
    """A module error annotated with the (topology, t, seed) it happened at."""

    def __init__(self, topology, t, seed, cause):
        super().__init__(f"topology={topology} t={t} seed={seed}: {type(cause).__name__}: {cause}")
        self.topology, self.t, self.seed = topology, t, seed


@dataclass(frozen=True)
class ExperimentConfig:
    region: Region = field(default_factory=Region)
    sensor_counts: tuple[int, int, int] = (100, 100, 100)
    leaf_battery: float = 300.0
    cluster_head_battery: float = 1500.0
    clusters: int = 30
    distribution_nodes: int = 30
    distribution_battery: float = 300.0
    deployment: str = "stratified"
    topologies: tuple[TopologyKind, ...] = tuple(TopologyKind)
    algorithms: tuple[AlgorithmKind, ...] = tuple(AlgorithmKind)
    t_max: int = 100
    seeds: int = 20
    master_seed: int = 2024
    radio: RadioModel = DEFAULT_RADIO
    aggregation_window: int = 3
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    hyperparameters: Hyperparameters = field(default_factory=Hyperparameters)
    impute_policy: ImputePolicy = ImputePolicy.SENTINEL_ZERO
    instance_mode: InstanceMode = InstanceMode.PER_LOCATION
    knee_jump: float = 0.10
    knee_window: int = 3
    workers: int = 0  # 0: one per CPU
    output_dir: str = "results"

    def __post_init__(self):
        if self.seeds < 1:
            raise ConfigError("seeds must be >= 1")
        if self.t_max < 0:
            raise ConfigError("t_max must be >= 0")
        if not self.topologies:
            raise ConfigError("topology list is empty")
        if not self.algorithms:
            raise ConfigError("algorithm list is empty")
        if len(self.sensor_counts) != 3 or min(self.sensor_counts) < 0 or sum(self.sensor_counts) < 1:
            raise ConfigError("sensor_counts needs three non-negative counts, not all zero")
        if self.leaf_battery <= 0 or self.cluster_head_battery <= 0 or self.distribution_battery <= 0:
            raise ConfigError("batteries must be positive")
        if self.knee_jump <= 0 or self.knee_window < 1:
            raise ConfigError("knee_jump must be > 0 and knee_window >= 1")
        if self.workers < 0:
            raise ConfigError("workers must be >= 0")
        if self.deployment not in ("stratified", "uniform"):
            raise ConfigError(f"unknown deployment strategy {self.deployment!r}")
        if self.instance_mode is InstanceMode.GLOBAL:
            d = self.dataset
            if (d.temperature, d.pressure, d.humidity) != tuple(self.sensor_counts):
                raise ConfigError("global instances need dataset slot counts equal to sensor_counts")

    @property
    def topology_config(self) -> TopologyConfig:
        return TopologyConfig(clusters=self.clusters, cluster_head_battery=self.cluster_head_battery,
                              distribution_nodes=self.distribution_nodes,
                              distribution_battery=self.distribution_battery)

    # --- JSON mirror ---------------------------------------------------------

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, (Region, RadioModel, DatasetConfig, Hyperparameters)):
                value = asdict(value)
                if "sink" in value:
                    value["sink"] = list(value["sink"])
            elif isinstance(value, tuple):
                value = [str(v) if hasattr(v, "value") else v for v in value]
            elif hasattr(value, "value"):
                value = value.value
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        kwargs = {}
        nested = {"region": Region, "radio": RadioModel, "dataset": DatasetConfig,
                  "hyperparameters": Hyperparameters}
        try:
            for key, value in data.items():
                if key in nested:
                    kwargs[key] = _nested(nested[key], value, key)
                elif key == "topologies":
                    kwargs[key] = tuple(TopologyKind(v) for v in value)
                elif key == "algorithms":
                    kwargs[key] = tuple(AlgorithmKind(v) for v in value)
                elif key == "sensor_counts":
                    kwargs[key] = tuple(int(v) for v in value)
                elif key == "impute_policy":
                    kwargs[key] = ImputePolicy(value)
                elif key == "instance_mode":
                    kwargs[key] = InstanceMode(value)
                else:
                    kwargs[key] = value
            return cls(**kwargs)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(data)

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


def _nested(cls, value, key):
    if not isinstance(value, dict):
        raise ConfigError(f"{key} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(value) - known)
    if unknown:
        raise ConfigError(f"unknown keys in {key}: {', '.join(unknown)}")
    if cls is Region and "sink" in value:
        value = dict(value, sink=tuple(value["sink"]))
    return cls(**value)


# --- seeds -------------------------------------------------------------------

@dataclass(frozen=True)
class SeedStreams:
    training: np.random.SeedSequence
    deployment: np.random.SeedSequence
    topology: dict
    sensing: np.random.SeedSequence


def seed_streams(master_seed: int, seed_index: int) -> SeedStreams:
    root = np.random.SeedSequence(master_seed, spawn_key=(seed_index,))
    training, deployment, topology, sensing = root.spawn(4)
    per_kind = dict(zip(TopologyKind, topology.spawn(len(TopologyKind))))
    return SeedStreams(training, deployment, per_kind, sensing)


# --- the time loop -----------------------------------------------------------

@dataclass
class Lifetime:
    """First step with a node death and first step the sink hears nothing.

    Either is ``t_max + 1`` when it never happens within the run.
    """

    first_death: int
    whole_network_death: int


def _deploy(config: ExperimentConfig, streams: SeedStreams):
    return deploy(config.region, config.sensor_counts, np.random.default_rng(streams.deployment),
                  battery=config.leaf_battery, strategy=config.deployment)


def initial_network(config: ExperimentConfig, seed_index: int, kind: TopologyKind, fleet=None):
    """The deployment (copied if given) with ``kind`` built on top: ``(fleet, plan)``."""
    kind = TopologyKind(kind)
    streams = seed_streams(config.master_seed, seed_index)
    fleet = fleet.copy() if fleet is not None else _deploy(config, streams)
    plan = build(kind, fleet, config.topology_config, np.random.default_rng(streams.topology[kind]))
    return fleet, plan


def simulate_network(config: ExperimentConfig, seed_index: int, kind: TopologyKind,
                     fleet=None, stop_at_first_death: bool = False):
    """Yield ``(t, snapshot, fleet, newly_dead, plan)`` for each step of one topology.

    ``fleet`` and ``plan`` are the state after the step's energy charge and
    repair.  ``fleet`` may be a pre-built deployment; it is copied, never
    modified.
    """
    kind = TopologyKind(kind)
    tcfg = config.topology_config
    agg = AggregationConfig(config.aggregation_window)
    t = None
    try:
        fleet, plan = initial_network(config, seed_index, kind, fleet)
        sensing = np.random.default_rng(seed_streams(config.master_seed, seed_index).sensing)
        for t in range(config.t_max + 1):
            snapshot, ledger = run_step(fleet, plan, t, agg, sensing, config.dataset.literal_hazard)
            fleet, dead = apply_step(fleet, ledger, config.radio)
            if len(dead):
                plan = repair(plan, fleet, dead, tcfg)
            yield t, snapshot, fleet, dead, plan
            if stop_at_first_death and len(dead):
                return
    except SimulationError:
        raise
    except Exception as exc:
        raise SimulationError(kind.value, t, seed_index, exc) from exc


def network_lifetime(config: ExperimentConfig, seed_index: int, kind: TopologyKind,
                     stop_at_first_death: bool = False) -> Lifetime:
    never = config.t_max + 1
    first, silent = never, never
    for t, snapshot, _, dead, _ in simulate_network(config, seed_index, kind,
                                                 stop_at_first_death=stop_at_first_death):
        if len(dead) and first == never:
            first = t
        if snapshot.delivered_count == 0 and silent == never:
            silent = t
    return Lifetime(first, silent)


def _run_seed(config: ExperimentConfig, seed_index: int):
    streams = seed_streams(config.master_seed, seed_index)
    train_rng = np.random.default_rng(streams.training)
    try:
        training = generate_training_set(config.dataset, train_rng)
        models = {a: train(a, training, config.hyperparameters, train_rng) for a in config.algorithms}
    except Exception as exc:
        raise SimulationError("training", None, seed_index, exc) from exc
    training_mean = training.features.mean(0)
    deployment = _deploy(config, streams)

    rows, lifetimes = [], {}
    never = config.t_max + 1
    for kind in config.topologies:
        first, silent = never, never
        for t, snapshot, fleet, dead, _ in simulate_network(config, seed_index, kind, deployment):
            try:
                batch = assemble_instances(snapshot, fleet, config.instance_mode,
                                           config.impute_policy, training_mean)
                errors = [error_rate(models[a], batch) for a in config.algorithms]
            except Exception as exc:
                raise SimulationError(kind.value, t, seed_index, exc) from exc
            if len(dead) and first == never:
                first = t
            if snapshot.delivered_count == 0 and silent == never:
                silent = t
            covered = covered_fraction(fleet)
            alive = int((fleet.health != Health.DEAD).sum())
            for a, err in zip(config.algorithms, errors):
                rows.append((kind.value, a.value, t, seed_index, err, covered, alive,
                             snapshot.delivered_count))
        lifetimes[(kind.value, seed_index)] = Lifetime(first, silent)
    return rows, lifetimes


@dataclass
class ResultsTable:
    rows: list[tuple]
    lifetimes: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.rows)

    def sort(self):
        """Canonical order: topology, algorithm, t, seed (in configuration order)."""
        topo = {k.value: i for i, k in enumerate(TopologyKind)}
        algo = {k.value: i for i, k in enumerate(AlgorithmKind)}
        self.rows.sort(key=lambda r: (topo.get(r[0], len(topo)), r[0], algo.get(r[1], len(algo)),
                                      r[1], r[2], r[3]))
        return self

    def column(self, name) -> list:
        j = RAW_HEADER.index(name)
        return [r[j] for r in self.rows]

    def select(self, topology=None, algorithm=None) -> list[tuple]:
        return [r for r in self.rows
                if (topology is None or r[0] == str(topology))
                and (algorithm is None or r[1] == str(algorithm))]

    def error_matrix(self, topology, algorithm) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(ts, seeds, errors)`` with ``errors[seed, t]``."""
        rows = self.select(topology, algorithm)
        ts = np.array(sorted({r[2] for r in rows}))
        seeds = np.array(sorted({r[3] for r in rows}))
        out = np.full((len(seeds), len(ts)), np.nan)
        ti = {t: i for i, t in enumerate(ts)}
        si = {s: i for i, s in enumerate(seeds)}
        for r in rows:
            out[si[r[3]], ti[r[2]]] = r[4]
        return ts, seeds, out

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RAW_HEADER)
            for r in self.rows:
                w.writerow([r[0], r[1], r[2], r[3], repr(float(r[4])), repr(float(r[5])), r[6], r[7]])
        return path

    @classmethod
    def from_csv(cls, path) -> "ResultsTable":
        with Path(path).open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != RAW_HEADER:
                raise ValueError(f"{path}: unexpected header {header}")
            rows = [(r[0], r[1], int(r[2]), int(r[3]), float(r[4]), float(r[5]), int(r[6]), int(r[7]))
                    for r in reader]
        return cls(rows)


def run(config: ExperimentConfig, progress=None) -> ResultsTable:
    """Run every seed and topology; rows come back in canonical order.

    ``progress``, if given, is called with each finished seed index.
    """
    workers = config.workers or os.cpu_count() or 1
    workers = min(workers, config.seeds)
    table = ResultsTable([])
    if workers == 1:
        results = (_run_seed(config, s) for s in range(config.seeds))
        for s, (rows, lifetimes) in enumerate(results):
            table.rows.extend(rows)
            table.lifetimes.update(lifetimes)
            if progress:
                progress(s)
    else:
        with ProcessPoolExecutor(workers) as pool:
            futures = [pool.submit(_run_seed, config, s) for s in range(config.seeds)]
            for s, fut in enumerate(futures):
                rows, lifetimes = fut.result()
                table.rows.extend(rows)
                table.lifetimes.update(lifetimes)
                if progress:
                    progress(s)
    return table.sort()


# --- summaries ---------------------------------------------------------------

def knee_time(curve, jump: float, window: int = 1):
    """Smallest t whose next ``window`` points average ``jump`` above all earlier points."""
    if not jump > 0:
        raise ValueError("jump must be > 0")
    curve = np.asarray(curve, dtype=float)
    for t in range(1, len(curve)):
        ahead = curve[t:t + window]
        if ahead.mean() - curve[:t].mean() >= jump - 1e-12:
            return t
    return None


@dataclass
class Curve:
    topology: str
    algorithm: str
    ts: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    seeds: int
    first_death: float
    whole_network_death: float
    knee: int | None
    terminal_error: float


@dataclass
class CurveSummary:
    curves: list[Curve]
    lifetimes: dict

    def get(self, topology, algorithm) -> Curve:
        for c in self.curves:
            if c.topology == str(topology) and c.algorithm == str(algorithm):
                return c
        raise KeyError((topology, algorithm))

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SUMMARY_HEADER)
            for c in self.curves:
                for t, m, s in zip(c.ts, c.mean, c.stderr):
                    w.writerow([c.topology, c.algorithm, int(t), repr(float(m)), repr(float(s)), c.seeds])
        return path

    def lifetimes_to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LIFETIME_HEADER)
            for (topo, seed), life in sorted(self.lifetimes.items(),
                                             key=lambda kv: (_topo_rank(kv[0][0]), kv[0][1])):
                w.writerow([topo, seed, life.first_death, life.whole_network_death])
        return path


def _topo_rank(name):
    names = [k.value for k in TopologyKind]
    return names.index(name) if name in names else len(names)


def summarize(table: ResultsTable, knee_jump: float = 0.10, knee_window: int = 3) -> CurveSummary:
    """Mean and standard error per t, plus lifetimes and knees, per (topology, algorithm)."""
    if not table.rows:
        raise ValueError("results table is empty")
    curves = []
    for topo, algo in dict.fromkeys((r[0], r[1]) for r in table.rows):
        ts, seeds, err = table.error_matrix(topo, algo)
        mean = err.mean(0)
        stderr = err.std(0, ddof=1) / math.sqrt(len(seeds)) if len(seeds) > 1 else np.zeros_like(mean)
        lives = [table.lifetimes[(topo, int(s))] for s in seeds if (topo, int(s)) in table.lifetimes]
        if lives:
            first = float(np.mean([l.first_death for l in lives]))
            silent = float(np.mean([l.whole_network_death for l in lives]))
            t_last = int(ts[-1])
            terminal = float(np.mean([err[i, min(l.whole_network_death, t_last) - int(ts[0])]
                                      for i, l in enumerate(lives)]))
        else:
            first = silent = terminal = float("nan")
        curves.append(Curve(topo, algo, ts, mean, stderr, len(seeds), first, silent,
                            knee_time(mean, knee_jump, knee_window), terminal))
    return CurveSummary(curves, dict(table.lifetimes))


def active_phase_error(table: ResultsTable, algorithm, topologies) -> dict:
    """Mean error before the first death, for each listed topology.

    Per seed, the window is every t before the earliest first death among
    ``topologies``, so the topologies are compared over the same steps.
    Returns ``{topology: mean}``; seeds whose window is empty are skipped.
    """
    topologies = [str(k) for k in topologies]
    sums = {k: [] for k in topologies}
    mats = {k: table.error_matrix(k, algorithm) for k in topologies}
    seeds = sorted({int(s) for k in topologies for s in mats[k][1]})
    for s in seeds:
        end = min(table.lifetimes[(k, s)].first_death for k in topologies)
        if end <= 0:
            continue
        for k in topologies:
            ts, sd, err = mats[k]
            row = err[list(sd).index(s)]
            sums[k].append(row[ts < end])
    return {k: float(np.concatenate(v).mean()) if v else float("nan") for k, v in sums.items()}


# --- calibration -------------------------------------------------------------

@dataclass
class CalibrationReport:
    success: bool
    scale: float | None
    radio: RadioModel | None
    targets: dict
    achieved: dict
    message: str

    def fragment(self) -> dict:
        return {"radio": asdict(self.radio)} if self.radio else {}

    def lines(self) -> list[str]:
        out = [f"calibration {'succeeded' if self.success else 'FAILED'}: {self.message}"]
        if self.scale is not None:
            out.append(f"scale={self.scale:.6g} radio={json.dumps(asdict(self.radio))}")
        for k, target in self.targets.items():
            got = self.achieved.get(k)
            got_text = "n/a" if got is None else f"{got:.2f}"
            out.append(f"{k}: target {target} achieved {got_text}")
        return out


def mean_first_death(config: ExperimentConfig, kind, seeds: int) -> float:
    return float(np.mean([network_lifetime(config, s, kind, stop_at_first_death=True).first_death
                          for s in range(seeds)]))


def calibrate(targets, bounds=(0.0, 20.0), config: ExperimentConfig | None = None,
              base: RadioModel | None = None, seeds: int = 5, tolerance: float = 2.0,
              max_iter: int = 40, fragment_path=None) -> CalibrationReport:
    """Bisect one scale on ``(e_elec, e_amp)`` to put Centralized first death on target.

    ``targets`` are first-death steps for Centralized, Hierarchical,
    Distributed and Decentralized (in that order, or a dict by kind).  Only
    the Centralized target steers the search; the other three are reported.
    Outcomes are means over ``seeds`` seeds.
    """
    order = [TopologyKind.CENTRALIZED, TopologyKind.HIERARCHICAL, TopologyKind.DISTRIBUTED,
             TopologyKind.DECENTRALIZED]
    if isinstance(targets, dict):
        targets = {TopologyKind(k).value: float(v) for k, v in targets.items()}
    else:
        targets = {k.value: float(v) for k, v in zip(order, targets)}
    values = [targets.get(k.value) for k in order]
    if None in values or any(a >= b for a, b in zip(values, values[1:])):
        raise ValueError("targets must give Centralized < Hierarchical < Distributed < Decentralized")
    config = config or ExperimentConfig()
    base = base or RadioModel()
    target = targets[TopologyKind.CENTRALIZED.value]
    lo, hi = bounds

    def first_death(scale):
        cfg = replace(config, radio=base.scaled(scale))
        return mean_first_death(cfg, TopologyKind.CENTRALIZED, seeds)

    def fail(message, achieved=None):
        return CalibrationReport(False, None, None, targets, achieved or {}, message)

    # first death shrinks as the scale grows
    fd_lo, fd_hi = first_death(lo), first_death(hi)
    if fd_lo < target - tolerance:
        return fail(f"even scale {lo} kills a Centralized node at t={fd_lo:.2f}, before the target",
                    {TopologyKind.CENTRALIZED.value: fd_lo})
    if fd_hi > target + tolerance:
        never = " (no node ever dies)" if fd_hi > config.t_max else ""
        return fail(f"scale {hi} only reaches Centralized first death t={fd_hi:.2f}{never}",
                    {TopologyKind.CENTRALIZED.value: fd_hi})
    # keep narrowing past the tolerance; the closest scale seen wins
    best = min((abs(fd_lo - target), lo), (abs(fd_hi - target), hi))
    for _ in range(max_iter):
        if best[0] <= 0.5 or hi - lo < 1e-6:
            break
        mid = 0.5 * (lo + hi)
        fd = first_death(mid)
        best = min(best, (abs(fd - target), mid))
        if fd > target:
            lo = mid
        else:
            hi = mid
    scale = best[1]
    radio = base.scaled(scale)
    cfg = replace(config, radio=radio)
    achieved = {k.value: mean_first_death(cfg, k, seeds) for k in order}
    got = achieved[TopologyKind.CENTRALIZED.value]
    if abs(got - target) > tolerance:
        return CalibrationReport(False, scale, radio, targets, achieved,
                                 f"bisection ended at t={got:.2f}, outside ±{tolerance:g}")
    report = CalibrationReport(True, scale, radio, targets, achieved,
                               f"Centralized first death {got:.2f} within ±{tolerance:g} of {target:g}")
    if fragment_path is not None:
        Path(fragment_path).write_text(json.dumps(report.fragment(), indent=2) + "\n")
    return report


# --- output ------------------------------------------------------------------

def emit(table: ResultsTable, summary: CurveSummary, out_dir) -> dict:
    """Write raw.csv, summary.csv, lifetimes.csv and one chart per topology."""
    from .plotting import error_chart

    if not table.rows:
        raise ValueError("results table is empty")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    paths = {"raw": out / "raw.csv", "summary": out / "summary.csv", "lifetimes": out / "lifetimes.csv"}
    try:
        table.to_csv(paths["raw"])
        summary.to_csv(paths["summary"])
        summary.lifetimes_to_csv(paths["lifetimes"])
        topologies = []
        for c in summary.curves:
            if c.topology not in topologies:
                topologies.append(c.topology)
        for topo in topologies:
            curves = [c for c in summary.curves if c.topology == topo]
            paths[f"chart_{topo}"] = error_chart(curves, out / f"error_{topo}.svg")
    except OSError as exc:
        raise OSError(f"cannot write results under {out}: {exc}") from exc
    return paths
