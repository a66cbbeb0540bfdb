import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wsnphm import datagen
from wsnphm.datagen import (Condition, Dataset, DatasetConfig, area_ground_truth, area_labels,
                            branch_probabilities, condition_from_draw, draw_condition,
                            draw_reading, draw_readings, exceeds_threshold,
                            failure_given_not_broken, generate_training_set, hazard, normal_mean)
from wsnphm.world import SensorKind

import oracles

T, P, H = SensorKind.TEMPERATURE, SensorKind.PRESSURE, SensorKind.HUMIDITY


def test_normal_mean_examples():
    assert normal_mean(T, 0) == 20
    assert normal_mean(P, 100) == pytest.approx(10)
    assert normal_mean(H, 100) == pytest.approx(57.75)


def test_broken_readings_are_exact_constants(rng):
    assert draw_reading(T, Condition.SENSOR_BROKEN, 37, rng) == 2.0
    assert draw_reading(P, Condition.SENSOR_BROKEN, 0, rng) == 1.0
    assert draw_reading(H, Condition.SENSOR_BROKEN, 100, rng) == 3.0


@pytest.mark.parametrize("kind,condition,t,mean,std", [
    (T, Condition.NORMAL, 0, 20.0, 1.0),
    (T, Condition.NORMAL, 100, 30.0, 1.0),
    (P, Condition.NORMAL, 40, 7.0, 0.3),
    (H, Condition.NORMAL, 0, 52.5, 12.5),
    (T, Condition.AREA_FAILURE, 10, 350.0, 20.0),
    (P, Condition.AREA_FAILURE, 10, 20.0, 2.5),
    (H, Condition.AREA_FAILURE, 10, 80.0, 10.0),
])
def test_gaussian_branch_moments(kind, condition, t, mean, std):
    n = 10 ** 6
    x = draw_readings(np.full(n, int(kind)), np.full(n, int(condition)), t,
                      np.random.default_rng(7))
    assert abs(x.mean() - mean) < 3 * std / math.sqrt(n)
    # standard error of a sample std is about std / sqrt(2n)
    assert abs(x.std(ddof=1) - std) < 3 * std / math.sqrt(2 * n)


def test_humidity_mean_example():
    n = 10 ** 6
    x = draw_readings(np.full(n, int(H)), np.zeros(n), 0, np.random.default_rng(1))
    assert abs(x.mean() - 52.5) < 0.05


def test_draw_readings_consumes_one_normal_per_entry():
    a = np.random.default_rng(5)
    b = np.random.default_rng(5)
    draw_readings([0, 1, 2], [0, 1, 2], 3, a)
    draw_readings([2, 2, 2], [2, 2, 2], 50, b)
    assert a.standard_normal() == b.standard_normal()


def test_hazard_examples():
    assert hazard(0) == pytest.approx(0.004999750012499375, rel=1e-12)
    assert hazard(100) == pytest.approx(100.0)
    assert hazard(50) < hazard(60)
    assert hazard(150) == hazard(100)  # clamped
    assert hazard(0, literal=True) == pytest.approx(200.01)


@given(st.floats(0, 99.9), st.floats(0.01, 10))
def test_hazard_strictly_increasing_on_operating_range(t, dt):
    if t + dt <= 100:
        assert hazard(t) < hazard(t + dt)


def test_condition_from_draw_examples():
    assert condition_from_draw(0) is Condition.NORMAL
    assert condition_from_draw(1) is Condition.AREA_FAILURE
    assert condition_from_draw(50) is Condition.AREA_FAILURE
    assert condition_from_draw(99) is Condition.AREA_FAILURE
    assert condition_from_draw(100) is Condition.SENSOR_BROKEN
    assert condition_from_draw(150) is Condition.SENSOR_BROKEN


# reference values summed in 30-digit arithmetic
FROZEN_BRANCHES = {
    0: (0.99501272793339617, 0.0049872720666038316, 0.0),
    50: (0.99005082370050164, 0.009949176299498355, 0.0),
    99: (0.60804132060069675, 0.39195867939930325, 0.0),
    100: (3.720075976020836e-44, 0.48670120172085134, 0.51329879827914866),
}


@pytest.mark.parametrize("t", sorted(FROZEN_BRANCHES))
def test_branch_probabilities_frozen(t):
    got = branch_probabilities(hazard(t))
    assert got == pytest.approx(FROZEN_BRANCHES[t], abs=1e-14)
    assert sum(got) == pytest.approx(1.0, abs=1e-14)


@given(st.floats(1e-4, 300))
def test_branch_probabilities_match_direct_sum(lam):
    assert branch_probabilities(lam) == pytest.approx(oracles.branch_probabilities(lam), abs=1e-10)


@pytest.mark.parametrize("lam", [0.005, 1.0, 100.0])
def test_numpy_poisson_agrees_with_inverse_cdf_sampler(lam):
    n = 20000
    ours = np.random.default_rng(3).poisson(lam, n)
    ref = np.array(oracles.inverse_cdf_poisson(lam, n, seed=3))
    # same distribution: means within 4 combined standard errors
    se = math.sqrt(2 * lam / n)
    assert abs(ours.mean() - ref.mean()) < 4 * se
    assert abs(ref.mean() - lam) < 4 * math.sqrt(lam / n)
    for cut in (1, 100):
        p = (ref >= cut).mean()
        q = (ours >= cut).mean()
        tol = 4 * math.sqrt(max(p * (1 - p), 1 / n) * 2 / n)
        assert abs(p - q) < tol + 1e-12


@pytest.mark.parametrize("t", [0, 90, 99, 100])
def test_condition_frequencies_match_branch_probabilities(t):
    n = 10 ** 6
    cond = datagen.draw_conditions(n, t, np.random.default_rng(t))
    probs = oracles.branch_probabilities(hazard(t))
    for c, p in zip(Condition, probs):
        freq = (cond == c).mean()
        assert abs(freq - p) <= 3 * math.sqrt(p * (1 - p) / n) + 1e-12


def test_draw_condition_returns_enum(rng):
    assert draw_condition(0, rng) in set(Condition)


def test_exceeds_threshold_examples():
    assert exceeds_threshold(T, 26.5)
    assert not exceeds_threshold(P, 7.0)
    assert exceeds_threshold(H, 80.1)
    assert not exceeds_threshold(T, 26.0)


def test_area_ground_truth_examples(rng):
    assert area_ground_truth(Condition.AREA_FAILURE, 5, rng) == 1
    assert area_ground_truth(Condition.NORMAL, 5, rng) == 0


@pytest.mark.parametrize("t", [0, 99])
def test_broken_location_label_rate(t):
    n = 400_000
    labels = area_labels(np.full(n, int(Condition.SENSOR_BROKEN)), t, np.random.default_rng(2))
    p0, p1, _ = oracles.branch_probabilities(hazard(t))
    p = p1 / (p0 + p1)
    assert failure_given_not_broken(t) == pytest.approx(p, rel=1e-9)
    assert abs(labels.mean() - p) < 3 * math.sqrt(p * (1 - p) / n)


def test_default_training_set_shape():
    ds = generate_training_set(DatasetConfig(), np.random.default_rng(0))
    assert ds.features.shape == (4000, 3)
    assert not ds.missing.any()
    assert set(np.unique(ds.labels)) <= {0, 1}
    assert ds.layout == ["temperature_0", "pressure_1", "humidity_2"]


def test_single_row_training_set():
    ds = generate_training_set(DatasetConfig(n=1), np.random.default_rng(0))
    assert len(ds) == 1 and not ds.missing.any()


def test_training_set_deterministic(tmp_path):
    a = generate_training_set(DatasetConfig(n=50), np.random.default_rng(4))
    b = generate_training_set(DatasetConfig(n=50), np.random.default_rng(4))
    a.to_csv(tmp_path / "a.csv")
    b.to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


@pytest.mark.parametrize("t", [90, 99])
def test_training_prevalence_at_fixed_age(t):
    n = 200_000
    ds = generate_training_set(DatasetConfig(n=n, t_min=t, t_max=t), np.random.default_rng(t))
    p0, p1, p2 = oracles.branch_probabilities(hazard(t))
    p = p1 + p2 * p1 / (p0 + p1)
    assert abs(ds.labels.mean() - p) < 3 * math.sqrt(p * (1 - p) / n)


def test_excluding_broken_rows():
    ds = generate_training_set(DatasetConfig(n=3000, t_min=100, t_max=100, include_broken=False),
                               np.random.default_rng(0))
    assert not np.isin(ds.features, [2.0, 1.0, 3.0]).all(axis=1).any()
    assert ds.labels.all()


def test_literal_hazard_breaks_everything_at_start():
    ds = generate_training_set(DatasetConfig(n=200, t_min=0, t_max=0, literal_hazard=True),
                               np.random.default_rng(0))
    assert np.array_equal(ds.features, np.tile([2.0, 1.0, 3.0], (200, 1)))


def test_multi_slot_layout():
    cfg = DatasetConfig(n=10, temperature=2, pressure=1, humidity=3)
    ds = generate_training_set(cfg, np.random.default_rng(0))
    assert ds.features.shape == (10, 6)
    assert list(cfg.kinds) == [0, 0, 1, 2, 2, 2]


@pytest.mark.parametrize("kwargs", [dict(n=0), dict(temperature=0), dict(t_min=5, t_max=4)])
def test_dataset_config_validation(kwargs):
    with pytest.raises(ValueError):
        DatasetConfig(**kwargs)


def test_csv_round_trip_with_missing_cells(tmp_path):
    ds = Dataset([[1.5, 2.0], [3.0, 4.25]], [0, 1], [[False, True], [False, False]])
    path = tmp_path / "d.csv"
    ds.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "f0,f1,label"
    assert lines[1] == "1.5,,0"
    back = Dataset.from_csv(path)
    assert np.array_equal(back.missing, ds.missing)
    assert np.array_equal(back.labels, ds.labels)
    assert back.features[0, 1] == 0.0 and back.features[1, 1] == 4.25


def test_dataset_rejects_non_binary_labels():
    with pytest.raises(ValueError):
        Dataset([[1.0]], [2], [[False]])
