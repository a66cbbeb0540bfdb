import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wsnphm.energy import RadioModel, TrafficLedger, agg_cost, apply_step, rx_cost, tx_cost
from wsnphm.world import Fleet, Health, Region, Role, coverage_radius

DEFAULT = RadioModel()


def fleet_of(batteries):
    n = len(batteries)
    return Fleet(np.zeros((n, 2)), np.zeros(n), np.full(n, Role.LEAF), batteries, Region(),
                 coverage_radius(Region()))


def test_tx_cost_examples():
    assert tx_cost(DEFAULT, 0) == DEFAULT.e_elec
    assert tx_cost(RadioModel(e_elec=1, e_amp=0.005), 10) == pytest.approx(1.5)
    amp = lambda d: tx_cost(DEFAULT, d) - DEFAULT.e_elec
    assert amp(14) == pytest.approx(4 * amp(7))


def test_tx_cost_rejects_negative_distance():
    with pytest.raises(ValueError):
        tx_cost(DEFAULT, -1)


def test_rx_and_aggregation_costs():
    assert agg_cost(DEFAULT, 0) == 0
    assert agg_cost(DEFAULT, 3) == pytest.approx(0.6)
    assert rx_cost(DEFAULT) == 0.5


def test_aggregation_cheaper_than_a_median_cluster_head_uplink():
    # a cluster head roughly 25 units from the sink
    assert DEFAULT.e_da < tx_cost(DEFAULT, 25.0)


def test_negative_constants_rejected():
    with pytest.raises(ValueError):
        RadioModel(e_amp=-1)


def test_scaled_touches_only_transmit_terms():
    m = DEFAULT.scaled(2)
    assert (m.e_elec, m.e_amp, m.e_elec_rx, m.e_da) == (2.0, 0.01, 0.5, 0.2)


def test_empty_ledger_changes_nothing():
    fleet = fleet_of([5.0, 7.0])
    fleet, dead = apply_step(fleet, TrafficLedger.empty(2), DEFAULT)
    assert list(fleet.battery) == [5.0, 7.0] and len(dead) == 0


def test_exact_budget_dies_this_step():
    fleet = fleet_of([1.5, 2.0])
    ledger = TrafficLedger.empty(2)
    ledger.sent[:] = 1
    ledger.hop_distance[:] = 10.0
    fleet, dead = apply_step(fleet, ledger, RadioModel(e_elec=1, e_amp=0.005))
    assert list(dead) == [0]
    assert fleet.battery[0] == 0.0 and fleet.health[0] == Health.DEAD
    assert fleet.battery[1] == pytest.approx(0.5)


def test_dead_nodes_cannot_spend():
    fleet = fleet_of([0.0, 3.0])
    ledger = TrafficLedger.empty(2)
    ledger.received[0] = 1
    with pytest.raises(ValueError):
        apply_step(fleet, ledger, DEFAULT)


ledgers = st.integers(1, 30).flatmap(lambda n: st.tuples(
    st.lists(st.floats(0.1, 500), min_size=n, max_size=n),
    st.lists(st.integers(0, 20), min_size=n, max_size=n),
    st.lists(st.floats(0, 80), min_size=n, max_size=n),
    st.lists(st.integers(0, 20), min_size=n, max_size=n),
    st.lists(st.integers(0, 20), min_size=n, max_size=n)))


@given(ledgers)
def test_energy_conservation(data):
    battery, sent, dist, received, aggregated = map(np.array, data)
    fleet = fleet_of(battery.astype(float))
    ledger = TrafficLedger(sent, dist.astype(float), received, aggregated)
    expected = [s * (DEFAULT.e_elec + DEFAULT.e_amp * d * d) + r * DEFAULT.e_elec_rx + a * DEFAULT.e_da
                for s, d, r, a in zip(sent, dist, received, aggregated)]
    before = fleet.battery.copy()
    fleet, dead = apply_step(fleet, ledger, DEFAULT)
    drained = before - fleet.battery
    # each node loses its cost, or everything it had when the cost exceeds it
    assert np.allclose(drained, np.minimum(before, expected))
    assert np.all(fleet.battery >= 0)
    assert set(dead.tolist()) == set(np.flatnonzero(np.array(expected) >= before).tolist())
