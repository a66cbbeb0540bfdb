"""First-order radio energy model and battery accounting."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .world import Fleet, Health


@dataclass(frozen=True)
class RadioModel:
    """Per-packet energy costs, in battery units.

    Sending ``d`` units away costs ``e_elec + e_amp * d**2``; receiving costs
    ``e_elec_rx``; folding one input packet into an aggregate costs ``e_da``.
    """

    e_elec: float = 1.0
    e_elec_rx: float = 0.5
    e_amp: float = 0.005
    e_da: float = 0.2

    def __post_init__(self):
        for name in ("e_elec", "e_elec_rx", "e_amp", "e_da"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def scaled(self, factor: float) -> "RadioModel":
        """Scale the transmit constants (``e_elec`` and ``e_amp``) together."""
        return replace(self, e_elec=self.e_elec * factor, e_amp=self.e_amp * factor)


def tx_cost(model: RadioModel, hop_distance) -> float:
    if np.any(np.asarray(hop_distance) < 0):
        raise ValueError("hop distance must be >= 0")
    return model.e_elec + model.e_amp * np.square(hop_distance)


def rx_cost(model: RadioModel) -> float:
    return model.e_elec_rx


def agg_cost(model: RadioModel, packets: int) -> float:
    return model.e_da * packets


@dataclass
class TrafficLedger:
    """Per-node traffic of one step.

    Every node sends all its packets to a single next hop, so one hop
    distance per node is enough to price its transmissions.
    """

    sent: np.ndarray
    hop_distance: np.ndarray
    received: np.ndarray
    aggregated: np.ndarray

    @classmethod
    def empty(cls, n: int) -> "TrafficLedger":
        return cls(np.zeros(n, dtype=np.int64), np.zeros(n), np.zeros(n, dtype=np.int64),
                   np.zeros(n, dtype=np.int64))

    def __len__(self):
        return len(self.sent)

    def costs(self, model: RadioModel) -> np.ndarray:
        return (self.sent * tx_cost(model, self.hop_distance)
                + self.received * rx_cost(model)
                + agg_cost(model, self.aggregated))

    def active(self) -> np.ndarray:
        return (self.sent > 0) | (self.received > 0) | (self.aggregated > 0)


def apply_step(fleet: Fleet, ledger: TrafficLedger, model: RadioModel):
    """Drain batteries by this step's traffic.

    Returns ``(fleet, newly_dead_ids)``; ``fleet`` is updated in place.
    """
    if len(ledger) != len(fleet):
        raise ValueError("ledger and fleet sizes differ")
    cost = ledger.costs(model)
    if np.any(cost[fleet.health == Health.DEAD] > 0):
        raise ValueError("dead nodes cannot spend energy")
    before = fleet.health != Health.DEAD
    fleet.battery = np.maximum(fleet.battery - cost, 0.0)
    died = before & (fleet.battery <= 0.0)
    fleet.health[died] = Health.DEAD
    return fleet, np.flatnonzero(died)
