"""Graph, BPR cost model, objective and gradient for traffic assignment.

Edge costs are the integrated BPR travel time plus a constant term,

    c_e(x) = alpha_e + beta_e * x + gamma_e * x ** rho_e,

so that the derivative of ``c_e`` is the travel time ``t_e(x)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class EdgeCostCoeffs:
    alpha: float
    beta: float
    gamma: float
    rho: float


def derive_cost_coeffs(free_flow_time: float, b: float, capacity: float,
                       power: float, constant: float = 0.0) -> EdgeCostCoeffs:
    """Integrate ``t(x) = fft * (1 + b * (x / C) ** P)`` into polynomial form.

    With ``P == 0`` the travel time is constant, so the whole ``fft * (1 + b)``
    lands in the linear coefficient.
    """
    if capacity <= 0:
        raise ValueError(f"capacity must be positive, got {capacity}")
    if power == 0:
        # gamma is zero, the exponent only has to stay above one
        return EdgeCostCoeffs(constant, free_flow_time * (1.0 + b), 0.0, 2.0)
    gamma = free_flow_time * b / (capacity ** power * (power + 1.0))
    return EdgeCostCoeffs(constant, free_flow_time, gamma, power + 1.0)


@dataclass(frozen=True, eq=False)
class Scenario:
    probability: float
    demand: np.ndarray  # (n_origins, n_destinations)

    @property
    def big_m(self) -> np.ndarray:
        return self.demand.sum(axis=0)


@dataclass(frozen=True, eq=False)
class NetworkInstance:
    """Immutable network-design instance.

    Nodes are 0-based integers. ``origins`` and ``destinations`` index the rows
    and columns of ``demand``; destinations without demand are never stored.
    ``scenarios`` is empty for a deterministic instance.
    """

    num_nodes: int
    tail: np.ndarray
    head: np.ndarray
    free_flow_time: np.ndarray
    b: np.ndarray
    capacity: np.ndarray
    power: np.ndarray
    constant: np.ndarray
    origins: np.ndarray
    destinations: np.ndarray
    demand: np.ndarray
    removable: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    prices: np.ndarray = field(default_factory=lambda: np.zeros(0))
    scenarios: tuple[Scenario, ...] = ()
    node_labels: tuple[int, ...] | None = None

    def __post_init__(self):
        tail = np.asarray(self.tail, dtype=np.int64)
        head = np.asarray(self.head, dtype=np.int64)
        object.__setattr__(self, "tail", tail)
        object.__setattr__(self, "head", head)
        for name in ("free_flow_time", "b", "capacity", "power", "constant", "prices"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "origins", np.asarray(self.origins, dtype=np.int64))
        object.__setattr__(self, "destinations", np.asarray(self.destinations, dtype=np.int64))
        object.__setattr__(self, "removable", np.asarray(self.removable, dtype=np.int64))
        demand = np.asarray(self.demand, dtype=float).reshape(len(self.origins), len(self.destinations))
        object.__setattr__(self, "demand", demand)
        object.__setattr__(self, "scenarios", tuple(self.scenarios))

        m = len(tail)
        if len(head) != m or any(len(getattr(self, n)) != m for n in
                                 ("free_flow_time", "b", "capacity", "power", "constant")):
            raise ValueError("per-edge arrays must all have one entry per edge")
        if m and (tail.min() < 0 or head.min() < 0 or max(tail.max(), head.max()) >= self.num_nodes):
            raise ValueError("edge endpoint out of range")
        if np.any(self.capacity <= 0):
            raise ValueError("capacities must be positive")
        if np.any(self.power < 0):
            raise ValueError("powers must be nonnegative")
        if np.any(demand < 0):
            raise ValueError("demands must be nonnegative")
        if len(self.removable) != len(self.prices):
            raise ValueError("one price per removable arc required")
        if len(np.unique(self.removable)) != len(self.removable):
            raise ValueError("removable arcs must be distinct")
        if len(self.removable) and (self.removable.min() < 0 or self.removable.max() >= m):
            raise ValueError("removable arc index out of range")
        if self.scenarios:
            total = sum(s.probability for s in self.scenarios)
            if abs(total - 1.0) > 1e-12:
                raise ValueError(f"scenario probabilities sum to {total}, expected 1")
            for s in self.scenarios:
                if s.demand.shape != demand.shape:
                    raise ValueError("scenario demand shape must match the nominal demand")

        coeffs = [derive_cost_coeffs(*args) for args in zip(
            self.free_flow_time, self.b, self.capacity, self.power, self.constant)]
        object.__setattr__(self, "alpha", np.array([c.alpha for c in coeffs]))
        object.__setattr__(self, "beta", np.array([c.beta for c in coeffs]))
        object.__setattr__(self, "gamma", np.array([c.gamma for c in coeffs]))
        object.__setattr__(self, "rho", np.array([c.rho for c in coeffs]))
        removable_pos = np.full(m, -1, dtype=np.int64)
        removable_pos[self.removable] = np.arange(len(self.removable))
        object.__setattr__(self, "removable_pos", removable_pos)

    @property
    def num_edges(self) -> int:
        return len(self.tail)

    @property
    def num_removable(self) -> int:
        return len(self.removable)

    @property
    def big_m(self) -> np.ndarray:
        """Per-destination big-M: total demand into each zone."""
        return self.demand.sum(axis=0)

    def scenario_list(self) -> list[Scenario]:
        """Scenarios to optimize over; the nominal demand when deterministic."""
        if self.scenarios:
            return list(self.scenarios)
        return [Scenario(1.0, self.demand)]

    def closed_mask(self, design: np.ndarray | None) -> np.ndarray:
        """Boolean edge mask of removable arcs closed by a binary design."""
        mask = np.zeros(self.num_edges, dtype=bool)
        if design is not None and self.num_removable:
            mask[self.removable[np.asarray(design) < 0.5]] = True
        return mask

    def with_scenarios(self, scenarios: Sequence[Scenario]) -> "NetworkInstance":
        return NetworkInstance(
            self.num_nodes, self.tail, self.head, self.free_flow_time, self.b,
            self.capacity, self.power, self.constant, self.origins, self.destinations,
            self.demand, self.removable, self.prices, tuple(scenarios), self.node_labels)

    def with_design_space(self, removable, prices) -> "NetworkInstance":
        return NetworkInstance(
            self.num_nodes, self.tail, self.head, self.free_flow_time, self.b,
            self.capacity, self.power, self.constant, self.origins, self.destinations,
            self.demand, removable, prices, self.scenarios, self.node_labels)


@dataclass
class FlowState:
    """Per-destination edge flows, shape ``(n_destinations, n_edges)``."""

    per_destination: np.ndarray

    @property
    def aggregate(self) -> np.ndarray:
        return self.per_destination.sum(axis=0)


def edge_costs(inst: NetworkInstance, x: np.ndarray) -> np.ndarray:
    x = np.maximum(x, 0.0)
    return inst.alpha + inst.beta * x + inst.gamma * x ** inst.rho


def edge_derivatives(inst: NetworkInstance, x: np.ndarray) -> np.ndarray:
    x = np.maximum(x, 0.0)
    return inst.beta + inst.gamma * inst.rho * x ** (inst.rho - 1.0)


def _aggregate(flow) -> np.ndarray:
    if isinstance(flow, FlowState):
        return flow.aggregate
    return np.asarray(flow, dtype=float)


def objective(inst: NetworkInstance, flow) -> float:
    """Total cost ``sum_e c_e(x_e)``; accepts a FlowState or aggregate flows."""
    return float(edge_costs(inst, _aggregate(flow)).sum())


def gradient(inst: NetworkInstance, flow) -> np.ndarray:
    """Derivative of the total cost with respect to aggregate edge flow."""
    return edge_derivatives(inst, _aggregate(flow))


def travel_time(inst: NetworkInstance, x: np.ndarray) -> np.ndarray:
    """BPR travel time ``fft * (1 + b * (x / C) ** P)``."""
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    return inst.free_flow_time * (1.0 + inst.b * (x / inst.capacity) ** inst.power)


def linking_excess(inst: NetworkInstance, flow: FlowState, design: np.ndarray,
                   big_m: np.ndarray | None = None) -> np.ndarray:
    """``max(x_e^z - M^z y_e, 0)`` over removable arcs, shape ``(Z, |R|)``."""
    big_m = inst.big_m if big_m is None else big_m
    xr = flow.per_destination[:, inst.removable]
    return np.maximum(xr - big_m[:, None] * np.asarray(design, dtype=float)[None, :], 0.0)


def penalized_objective(inst: NetworkInstance, flow: FlowState, design: np.ndarray,
                        mu: float, p: float) -> float:
    """Cost plus design prices plus ``mu * sum max(x_e^z - M^z y_e, 0) ** p``."""
    if mu <= 0 or p <= 1:
        raise ValueError("penalty needs mu > 0 and p > 1")
    excess = linking_excess(inst, flow, design)
    return (objective(inst, flow) + float(inst.prices @ np.asarray(design, dtype=float))
            + mu * float((excess ** p).sum()))


def constraint_violation(inst: NetworkInstance, flows, design: np.ndarray) -> float:
    """Largest flow on any closed removable arc, over destinations and scenarios."""
    if isinstance(flows, FlowState):
        flows = [flows]
    closed = inst.removable[np.asarray(design) < 0.5]
    if len(closed) == 0:
        return 0.0
    return max(float(np.max(f.per_destination[:, closed], initial=0.0)) for f in flows)
