"""Scenario-indexed flows and the mode dispatch of the design oracles.

Flows carry one block per scenario; the design is shared. Every oracle
returns flat vertices in the ``[y, x]`` layout of ``problem.Layout``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .benders import CutPool, solve_benders_lmo
from .ifw import DesignBounds, IfwSolution, solve_ifw_lmo
from .instances import resample_scenarios
from .network import FlowState, NetworkInstance, gradient, objective
from .penalty import solve_penalty_lmo
from .problem import Layout

MODES = ("ifw", "penalty", "benders")


@dataclass
class ScenarioFlowState:
    flows: list[FlowState]

    def __len__(self):
        return len(self.flows)

    def __getitem__(self, s: int) -> FlowState:
        return self.flows[s]


def stochastic_objective(inst: NetworkInstance, flows: ScenarioFlowState | Sequence[FlowState]) -> float:
    """Expected congestion cost ``sum_s p_s c(x_s)``; the design term is the caller's."""
    flows = flows.flows if isinstance(flows, ScenarioFlowState) else list(flows)
    scenarios = inst.scenario_list()
    if len(flows) != len(scenarios):
        raise ValueError(f"{len(flows)} flow blocks for {len(scenarios)} scenarios")
    return float(sum(s.probability * objective(inst, f) for s, f in zip(scenarios, flows)))


def stochastic_lmo(mode: str, inst: NetworkInstance, weights: Sequence[np.ndarray], design_coeffs,
                   bounds: DesignBounds | None = None, pool: CutPool | None = None, *,
                   bridge_steps: int = 2, dual_rule: str = "lp", multi_cut: bool = False,
                   time_limit: float | None = None) -> IfwSolution:
    """Minimize ``design_coeffs @ y + sum_s weights[s] . x_s`` for one mode.

    ``weights[s]`` are scenario edge weights, already scaled by ``p_s``; shape
    ``(E,)`` or, in penalty mode, ``(Z, E)``. IFW enumerates designs on the
    summed scenario routing cost, penalty decouples design and scenario
    flows, and Benders aggregates scenario duals into one cut per iteration
    (one per scenario with ``multi_cut``).
    """
    scenarios = inst.scenario_list()
    if len(weights) != len(scenarios):
        raise ValueError(f"{len(weights)} weight blocks for {len(scenarios)} scenarios")
    blocks = [(np.asarray(w, dtype=float), s.demand) for w, s in zip(weights, scenarios)]
    if mode == "ifw":
        return solve_ifw_lmo(inst, None, design_coeffs, bounds, blocks=blocks, time_limit=time_limit)
    if mode == "penalty":
        return solve_penalty_lmo(inst, design_coeffs, blocks, bounds)
    if mode == "benders":
        return solve_benders_lmo(inst, None, design_coeffs, bounds, pool, blocks=blocks,
                                 bridge_steps=bridge_steps, dual_rule=dual_rule, time_limit=time_limit,
                                 multi_cut=multi_cut)
    raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")


class DesignOracle:
    """Flat-vector LMO over ``{[y, x]}`` for BPCG, in one of the three modes.

    ``last_exact`` is False after a call whose answer was cut short by the
    time limit. ``pool`` persists Benders cuts across calls.
    """

    def __init__(self, inst: NetworkInstance, mode: str, bounds: DesignBounds | None = None, *,
                 pool: CutPool | None = None, bridge_steps: int = 2, dual_rule: str = "lp",
                 multi_cut: bool = False, time_limit: float | None = None):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
        self.inst = inst
        self.mode = mode
        self.layout = Layout(inst)
        self.bounds = DesignBounds.free(inst.num_removable) if bounds is None else bounds
        self.pool = CutPool() if pool is None and mode == "benders" else pool
        self.bridge_steps = bridge_steps
        self.dual_rule = dual_rule
        self.multi_cut = multi_cut
        self.time_limit = time_limit
        self.last_exact = True
        self.last_solution: IfwSolution | None = None
        self.calls = 0

    def weights(self, g: np.ndarray) -> list[np.ndarray]:
        lay = self.layout
        if self.mode == "penalty":
            return list(lay.x(g))
        return list(lay.edge_weights(g))

    def solve(self, g: np.ndarray) -> IfwSolution:
        g = np.asarray(g, dtype=float)
        return stochastic_lmo(self.mode, self.inst, self.weights(g), self.layout.y(g), self.bounds,
                              self.pool, bridge_steps=self.bridge_steps, dual_rule=self.dual_rule,
                              multi_cut=self.multi_cut, time_limit=self.time_limit)

    def __call__(self, g: np.ndarray) -> np.ndarray:
        sol = self.solve(g)
        self.calls += 1
        self.last_exact = sol.exact
        self.last_solution = sol
        return self.layout.pack(sol.design, sol.flows)


def lmo_scaling(inst: NetworkInstance, counts: Sequence[int] = (2, 5, 10, 20, 50),
                modes: Sequence[str] = MODES, seed: int = 0, low: float = 0.8,
                high: float = 1.2) -> list[dict]:
    """Wall time of one root LMO call per mode as the scenario count grows.

    Weights are the free-flow travel times scaled by ``p_s`` and the design
    coefficients are the prices, so the rows compare oracle cost only.
    """
    rows = []
    for count in counts:
        scen = resample_scenarios(inst, count, seed, low, high)
        base = gradient(scen, np.zeros(scen.num_edges))
        for mode in modes:
            if mode == "penalty":
                weights = [s.probability * np.broadcast_to(base, (len(scen.destinations), scen.num_edges))
                           for s in scen.scenario_list()]
            else:
                weights = [s.probability * base for s in scen.scenario_list()]
            t0 = time.perf_counter()
            sol = stochastic_lmo(mode, scen, weights, scen.prices)
            rows.append({"mode": mode, "scenarios": count, "seconds": time.perf_counter() - t0,
                         "value": sol.value})
    return rows
