"""Traffic assignment (fixed design) solved by BPCG over the flow polytope."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bpcg import SolveReport, bpcg_solve
from .network import FlowState, NetworkInstance, edge_costs, edge_derivatives
from .shortest_path import all_or_nothing


@dataclass
class AssignmentResult:
    flow: FlowState
    objective: float
    report: SolveReport


def solve_traffic_assignment(inst: NetworkInstance, demand=None, closed=None, *,
                             tol: float = 1e-7, max_iter: int = 20_000,
                             time_limit: float | None = None, trace: list | None = None,
                             lazy: bool = True) -> AssignmentResult:
    """Minimize ``sum_e c_e(x_e)`` over flows routing ``demand`` on open edges.

    Starts from all-or-nothing at free-flow weights. Raises InfeasibleRouting
    when some demanded pair cannot be routed.
    """
    demand = inst.demand if demand is None else np.asarray(demand, dtype=float)
    n_z, n_e = len(inst.destinations), inst.num_edges
    shape = (n_z, n_e)

    def f(v):
        return float(edge_costs(inst, v.reshape(shape).sum(axis=0)).sum())

    def grad(v):
        return np.broadcast_to(edge_derivatives(inst, v.reshape(shape).sum(axis=0)), shape).ravel()

    def lmo(g):
        return all_or_nothing(inst, g.reshape(shape)[0] if n_z else np.zeros(n_e),
                              closed, demand).per_destination.ravel()

    nonlinear = inst.gamma > 0
    coef = (inst.gamma * inst.rho)[nonlinear]
    expo = inst.rho[nonlinear] - 1.0

    def line_derivative(v, d):
        agg = v.reshape(shape).sum(axis=0)
        dagg = d.reshape(shape).sum(axis=0)
        base = float(inst.beta @ dagg)
        a, da = agg[nonlinear], dagg[nonlinear]
        w = coef * da
        return lambda gamma: base + float((w * np.maximum(a + gamma * da, 0.0) ** expo).sum())

    start = all_or_nothing(inst, inst.beta, closed, demand).per_destination.ravel()
    report = bpcg_solve(f, grad, lmo, start, tol=tol, max_iter=max_iter, time_limit=time_limit,
                        line_derivative=line_derivative, trace=trace, lazy=lazy)
    flow = FlowState(report.x.reshape(shape).copy())
    return AssignmentResult(flow, report.objective, report)
