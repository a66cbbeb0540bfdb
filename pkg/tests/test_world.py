import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wsnphm.world import (CoverageDeficitError, EmptyFleetError, Fleet, Health, InvalidRegionError,
                          Region, Role, SensorKind, coverage_radius, covered_fraction, deploy,
                          distance)

from oracles import coverage_by_loops

coords = st.floats(-1e3, 1e3, allow_nan=False)
points = st.tuples(coords, coords)


def test_distance_examples():
    assert distance((0, 0), (3, 4)) == 5.0
    assert distance((7.5, -2), (7.5, -2)) == 0.0
    assert distance((0, 0), (1, 1)) == pytest.approx(1.4142135623730951, abs=1e-15)


@given(points, points, points)
def test_distance_is_a_metric(a, b, c):
    assert distance(a, b) >= 0
    assert distance(a, b) == distance(b, a)
    assert distance(a, c) <= distance(a, b) + distance(b, c) + 1e-9


def test_coverage_radius_examples():
    side = math.sqrt(math.pi)
    assert coverage_radius(Region(side, side, (0, 0))) == pytest.approx(0.1)
    assert coverage_radius(Region()) == pytest.approx(5.6418958354775629, abs=1e-12)
    side = math.sqrt(100 * math.pi)
    assert coverage_radius(Region(side, side, (0, 0))) == pytest.approx(1.0)


def test_one_coverage_disk_is_one_percent_of_the_area():
    region = Region(80, 30, (10, 10))
    assert math.pi * coverage_radius(region) ** 2 == pytest.approx(0.01 * region.area)


@pytest.mark.parametrize("dims", [(0, 10), (10, 0), (-1, 5)])
def test_invalid_region(dims):
    with pytest.raises(InvalidRegionError):
        Region(dims[0], dims[1], (0, 0))


def test_sink_outside_region_rejected():
    with pytest.raises(InvalidRegionError):
        Region(10, 10, (11, 5))


def test_deploy_default_fleet():
    fleet = deploy(Region(), rng=np.random.default_rng(0))
    assert len(fleet) == 300
    assert [int((fleet.kinds == k).sum()) for k in SensorKind] == [100, 100, 100]
    assert np.all(fleet.battery == 300)
    assert np.all(fleet.roles == Role.LEAF)
    assert np.all((fleet.positions >= 0) & (fleet.positions <= 100))
    assert [n.id for n in fleet.nodes] == list(range(300))
    assert covered_fraction(fleet) >= 0.99


def test_deploy_single_node_inside_region():
    region = Region(20, 10, (0, 0))
    fleet = deploy(region, (1, 0, 0), np.random.default_rng(3), min_coverage=0)
    assert len(fleet) == 1
    x, y = fleet.positions[0]
    assert 0 <= x <= 20 and 0 <= y <= 10
    assert fleet.node(0).kind is SensorKind.TEMPERATURE


def test_deploy_is_deterministic():
    a = deploy(Region(), rng=np.random.default_rng(9))
    b = deploy(Region(), rng=np.random.default_rng(9))
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.kinds, b.kinds)


def test_deploy_empty_fleet():
    with pytest.raises(EmptyFleetError):
        deploy(Region(), (0, 0, 0), np.random.default_rng(0))


def test_uniform_deploy_cannot_reach_full_coverage():
    # plain uniform placement leaves holes; the re-roll budget runs out
    with pytest.raises(CoverageDeficitError):
        deploy(Region(), rng=np.random.default_rng(1), strategy="uniform", max_attempts=5)


def _fleet(points, battery=1.0, region=Region()):
    n = len(points)
    return Fleet(points, np.zeros(n), np.full(n, Role.LEAF), np.full(n, battery), region,
                 coverage_radius(region))


def test_covered_fraction_examples():
    assert covered_fraction(_fleet([(10, 10), (90, 90)], battery=0.0)) == 0.0
    region = Region(10, 10, (5, 5))
    big = Fleet([(5, 5)], [0], [Role.LEAF], [1.0], region, coverage_radius=math.hypot(5, 5))
    assert covered_fraction(big, 20) == 1.0


def test_covered_fraction_needs_two_points_per_side():
    with pytest.raises(ValueError):
        covered_fraction(_fleet([(1, 1)]), 1)


@given(st.lists(st.tuples(st.floats(0, 100), st.floats(0, 100)), min_size=1, max_size=25),
       st.integers(2, 25))
def test_covered_fraction_matches_loop_oracle(pts, resolution):
    fleet = _fleet(pts)
    expected = coverage_by_loops(pts, fleet.coverage_radius, 100, 100, resolution)
    assert covered_fraction(fleet, resolution) == pytest.approx(expected, abs=1.5 / resolution ** 2)


def test_covered_fraction_ignores_infrastructure_and_dead_nodes():
    fleet = _fleet([(50, 50)])
    alone = covered_fraction(fleet)
    fleet.add_nodes([(10, 10), (90, 90)], Role.CLUSTER_HEAD, 1500)
    assert covered_fraction(fleet) == alone
    fleet.battery[0] = 0
    assert covered_fraction(fleet) == 0.0


def test_fleet_rejects_negative_battery():
    with pytest.raises(ValueError):
        _fleet([(1, 1)], battery=-1.0)


def test_add_nodes_and_copy():
    fleet = _fleet([(1, 1), (2, 2)])
    ids = fleet.add_nodes([(3, 3)], Role.DISTRIBUTION, 300)
    assert list(ids) == [2]
    assert fleet.node(2).kind is None and fleet.node(2).role is Role.DISTRIBUTION
    clone = fleet.copy()
    clone.battery[0] = 0.0
    clone.health[0] = Health.DEAD
    assert fleet.battery[0] == 1.0 and fleet.health[0] == Health.OK
    assert list(fleet.sensor_ids) == [0, 1]
