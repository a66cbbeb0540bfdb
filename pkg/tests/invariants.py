"""Routing-plan checks shared by the topology tests and the acceptance suite."""

import numpy as np

from wsnphm.topology import DISCONNECTED, SINK, TopologyKind, route_to_sink
from wsnphm.world import Health, Role

import oracles


def kill(fleet, ids):
    ids = np.asarray(list(ids), dtype=np.int64)
    fleet.battery[ids] = 0.0
    fleet.health[ids] = Health.DEAD


def check_plan(plan, fleet):
    """Structural invariants every built or repaired plan must satisfy."""
    alive = fleet.health != Health.DEAD
    connected = plan.connected()
    sink_d = fleet.sink_distances()
    for i in range(len(fleet)):
        path = oracles.follow(plan.next_hop, i)  # raises on a cycle
        assert (path is not None) == bool(connected[i])
        assert route_to_sink(plan, i) == path
        if not alive[i]:
            assert plan.next_hop[i] == DISCONNECTED
        if path is not None:
            assert len(path) <= len(fleet) + 1
            assert all(alive[h] for h in path[:-1]), "route through a dead node"
    if plan.kind is TopologyKind.DISTRIBUTED:
        for i in np.flatnonzero(connected):
            h = plan.next_hop[i]
            if h >= 0:
                assert sink_d[h] < sink_d[i]
                assert np.hypot(*(fleet.positions[h] - fleet.positions[i])) <= plan.radio_range + 1e-9
    if plan.kind is TopologyKind.DECENTRALIZED:
        heads = fleet.ids_with_role(Role.CLUSTER_HEAD)
        for h in heads[alive[heads]]:
            nxt = plan.next_hop[h]
            assert nxt == SINK or (fleet.roles[nxt] == Role.CLUSTER_HEAD and sink_d[nxt] < sink_d[h])
        if alive[heads].any():
            for leaf in fleet.sensor_ids[alive[fleet.sensor_ids]]:
                ch = plan.next_hop[leaf]
                assert fleet.roles[ch] == Role.CLUSTER_HEAD and alive[ch]
                assert plan.cluster_assignment[leaf] == ch
    if plan.kind is TopologyKind.HIERARCHICAL:
        relays = fleet.ids_with_role(Role.DISTRIBUTION)
        live = relays[alive[relays]]
        for leaf in fleet.sensor_ids[alive[fleet.sensor_ids]]:
            if len(live) == 0:
                assert plan.next_hop[leaf] == DISCONNECTED
            else:
                assert plan.next_hop[leaf] in set(live.tolist())
