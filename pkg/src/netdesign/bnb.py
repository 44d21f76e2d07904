"""Branch-and-bound over the design variables with BPCG node relaxations.

Each node minimizes the convex objective over the convex hull of the
mode's feasible set restricted to the node's design bounds. The dual gap of
the final iterate turns the relaxation value into a lower bound, designs
met along the way are priced by a traffic assignment solve and become
incumbents, and fractional iterates are split on their most fractional arc.
"""

from __future__ import annotations

import csv
import heapq
import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .assignment import solve_traffic_assignment
from .benders import CutPool
from .bpcg import ActiveSet, bpcg_solve
from .ifw import DesignBounds
from .network import FlowState, NetworkInstance
from .penalty import ReducedPenaltyProblem
from .problem import DesignProblem, PenaltyConfig
from .shortest_path import InfeasibleRouting, first_unroutable
from .stochastic import MODES, DesignOracle

INTEGRALITY_TOL = 1e-6


class Infeasible(Exception):
    """No design within the bounds routes every demand."""


@dataclass
class BnbNode:
    bounds: DesignBounds
    lower_bound: float
    depth: int
    seq: int
    active_set: ActiveSet | None = field(default=None, repr=False)
    pool: CutPool | None = field(default=None, repr=False)
    tol: float | None = None


@dataclass
class Incumbent:
    design: np.ndarray
    flows: list[FlowState]
    objective: float
    violation: float = 0.0
    lower: float = -math.inf  # certified lower bound on the design's true objective


class EventLog:
    """Timestamped solver events; written as ``time_s,event,value`` CSV."""

    def __init__(self, clock=None):
        self._t0 = time.perf_counter()
        self._clock = clock
        self.rows: list[tuple[float, str, float]] = []

    def record(self, event: str, value: float) -> None:
        t = self._clock() if self._clock else time.perf_counter() - self._t0
        self.rows.append((t, event, float(value)))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_s", "event", "value"])
            for t, e, v in self.rows:
                w.writerow([f"{t:.6f}", e, repr(v)])


@dataclass
class BnbResult:
    mode: str
    status: str
    incumbent: Incumbent | None
    lower_bound: float
    upper_bound: float
    gap: float
    nodes: int
    lmo_calls: int
    fw_iterations: int
    wall_time: float
    events: EventLog = field(repr=False)
    node_log: list = field(default_factory=list, repr=False)
    gap_target: float = 0.05
    violation_target: float = 0.01

    @property
    def violation(self) -> float:
        return self.incumbent.violation if self.incumbent else math.inf

    @property
    def solved(self) -> bool:
        return (self.incumbent is not None and self.status != "time_limit"
                and self.gap <= self.gap_target and self.violation <= self.violation_target)

    def record(self) -> dict:
        """JSON-ready summary; wall time is left out so equal runs give equal records."""
        inc = self.incumbent
        return {
            "mode": self.mode,
            "status": self.status,
            "solved": self.solved,
            "objective": inc.objective if inc else None,
            "lower_bound": self.lower_bound,
            "gap": self.gap,
            "violation": self.violation if inc else None,
            "design": inc.design.astype(int).tolist() if inc else None,
            "nodes": self.nodes,
            "lmo_calls": self.lmo_calls,
            "fw_iterations": self.fw_iterations,
        }


def most_fractional(y: np.ndarray, tol: float = INTEGRALITY_TOL) -> int | None:
    """Index maximizing ``min(y, 1 - y)``, lowest index on ties; None when integral."""
    frac = np.minimum(y, 1.0 - y)
    if len(frac) == 0 or frac.max() <= tol:
        return None
    return int(np.argmax(frac))


def branch(node: BnbNode, y: np.ndarray, active_set: ActiveSet | None, n_r: int,
           seq: itertools.count, index: int | None = None) -> tuple[BnbNode, BnbNode] | None:
    """Children fixing arc ``index`` (default: the most fractional) to 0 and to 1.

    Children are warm-started from the vertices of ``active_set`` inside their bounds.
    """
    i = most_fractional(y) if index is None else index
    if i is None:
        return None
    children = []
    for value in (0, 1):
        bounds = node.bounds.fix(i, value)
        warm = None
        if active_set is not None:
            warm = active_set.filtered(lambda v, b=bounds: n_r == 0 or b.contains(v[:n_r]))
        pool = node.pool.copy() if node.pool is not None else None
        children.append(BnbNode(bounds, node.lower_bound, node.depth + 1, next(seq), warm, pool))
    return children[0], children[1]


def node_lower_bound(report, parent_bound: float) -> float:
    """Best certified ``objective - dual_gap`` of the run, never below the parent's bound."""
    return max(parent_bound, report.lower_bound)


class DesignEvaluator:
    """True objective of a binary design: prices plus expected equilibrium cost."""

    def __init__(self, inst: NetworkInstance, tol: float = 1e-7):
        self.inst = inst
        self.tol = tol
        self.cache: dict[bytes, Incumbent | None] = {}

    def __call__(self, design: np.ndarray) -> Incumbent | None:
        y = np.round(np.asarray(design, dtype=float))
        key = y.astype(np.int8).tobytes()
        if key in self.cache:
            return self.cache[key]
        closed = self.inst.closed_mask(y)
        value = lower = float(self.inst.prices @ y)
        flows = []
        try:
            for s in self.inst.scenario_list():
                ta = solve_traffic_assignment(self.inst, s.demand, closed, tol=self.tol)
                value += s.probability * ta.objective
                lower += s.probability * (ta.objective - ta.report.dual_gap)
                flows.append(ta.flow)
        except InfeasibleRouting:
            self.cache[key] = None
            return None
        inc = Incumbent(y, flows, value, 0.0, lower)
        self.cache[key] = inc
        return inc


def _routable(inst: NetworkInstance, bounds: DesignBounds) -> bool:
    most_open = (bounds.upper == 1).astype(float)
    closed = inst.closed_mask(most_open)
    return all(first_unroutable(inst, closed, s.demand) is None for s in inst.scenario_list())


def _support_design(inst: NetworkInstance, flows: np.ndarray, bounds: DesignBounds) -> np.ndarray:
    """Open exactly the free arcs a flow vertex uses, respecting fixed arcs."""
    x = flows.reshape(-1, inst.num_edges)
    used = (x[:, inst.removable] > 0).any(axis=0)
    fixed = bounds.fixed
    return np.where(fixed == -1, used, fixed).astype(float)


def _slack(ub: float, rel: float = 1e-9) -> float:
    return rel * max(1.0, abs(ub)) if math.isfinite(ub) else 0.0


def _busiest_free_arc(inst: NetworkInstance, x: np.ndarray, bounds: DesignBounds) -> int | None:
    """Free removable arc carrying the most flow, or None when all are fixed."""
    free = np.flatnonzero(bounds.fixed == -1)
    if free.size == 0:
        return None
    load = x.reshape(-1, inst.num_edges).sum(axis=0)[inst.removable]
    return int(free[np.argmax(load[free])])


def _worst_violation(inst: NetworkInstance, x: np.ndarray, design: np.ndarray, bounds: DesignBounds,
                     threshold: float) -> int | None:
    """Free arc closed in ``design`` carrying the most flow above ``threshold``, if any."""
    cand = np.flatnonzero((bounds.fixed == -1) & (design < 0.5))
    if len(cand) == 0:
        return None
    load = x[:, :, inst.removable[cand]].max(axis=(0, 1))
    k = int(np.argmax(load))
    return int(cand[k]) if load[k] > threshold else None


def solve(inst: NetworkInstance, mode: str = "ifw", *, gap: float = 0.05, time_limit: float | None = 600.0,
          node_limit: int | None = None, penalty: PenaltyConfig | None = None,
          violation_target: float = 0.01, bridge_steps: int = 2, dual_rule: str = "lp",
          multi_cut: bool = False, max_fw_iter: int = 5000, heuristic_tol: float = 1e-7, penalty_relaxation: str = "reduced",
          stall_window: int | None = 100, events: EventLog | None = None) -> BnbResult:
    """Branch-and-bound for the (stochastic) network design problem.

    Parameters
    ----------
    inst : NetworkInstance
        Deterministic when ``inst.scenarios`` is empty.
    mode : {"ifw", "penalty", "benders"}
        Oracle for the node relaxations. Penalty mode relaxes the linking
        constraints with ``penalty`` (default ``mu=1000, p=1.5``).
    gap : float
        Stop once ``(UB - LB) / max(|UB|, 1e-9)`` is at most this.
    time_limit, node_limit
        Budgets. Hitting the node limit leaves the result unsolved unless the
        gap already closed; finishing past the time limit always counts as
        unsolved (status ``"time_limit"``).
    violation_target : float
        Largest flow on a closed arc for a penalty-mode result to count as solved.
    bridge_steps, dual_rule, multi_cut
        Benders options: bridge cut depth, arc dual rule (``"lp"`` or
        ``"unit"``) and one epigraph variable per scenario.
    penalty_relaxation : {"reduced", "joint"}
        Penalty mode only. ``"reduced"`` minimizes the design out of the
        penalized objective and runs BPCG over flows; ``"joint"`` runs BPCG
        over ``[y, x]`` with the sign-rule design oracle, which converges
        far more slowly on the ill-conditioned penalty.
    stall_window : int or None
        Node relaxations stop once BPCG progress over this many iterations
        is negligible next to the dual gap; the node is then branched.

    Returns
    -------
    BnbResult
        Incumbent, final bounds and gap, counters and the event log.

    Raises
    ------
    Infeasible
        When even the fully open network cannot route the demand.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    if penalty_relaxation not in ("reduced", "joint"):
        raise ValueError(f"unknown penalty relaxation {penalty_relaxation!r}")
    if not 0 < gap < 1:
        raise ValueError("gap target must lie in (0, 1)")
    if time_limit is not None and time_limit <= 0:
        raise ValueError("time limit must be positive")
    t0 = time.perf_counter()
    events = events or EventLog()
    n_r = inst.num_removable
    root_bounds = DesignBounds.free(n_r)
    if not _routable(inst, root_bounds):
        raise Infeasible("demand cannot be routed even with every removable arc open")

    if mode == "penalty":
        penalty = penalty or PenaltyConfig()
    problem = DesignProblem(inst, penalty if mode == "penalty" else None)
    lay = problem.layout
    evaluate = DesignEvaluator(inst, heuristic_tol)
    grad0 = problem.gradient(np.zeros(lay.size))
    reduced = mode == "penalty" and penalty_relaxation == "reduced"
    reduced_grad0 = grad0[lay.n_r:]

    seq = itertools.count()
    root = BnbNode(root_bounds, -math.inf, 0, next(seq), None, CutPool() if mode == "benders" else None)
    heap: list[tuple[float, int, BnbNode]] = [(root.lower_bound, root.seq, root)]
    leaf_bounds: list[float] = []
    incumbent: Incumbent | None = None
    ub = math.inf
    lb = -math.inf
    nodes = lmo_calls = fw_iters = 0
    status = "optimal"
    node_log = []

    def remaining():
        if time_limit is None:
            return None
        return max(time_limit - (time.perf_counter() - t0), 1e-3)

    def out_of_time():
        return time_limit is not None and time.perf_counter() - t0 >= time_limit

    def current_lb():
        cands = [h[0] for h in heap] + leaf_bounds + [ub]
        return min(cands)

    def rel_gap(lo, hi):
        if hi == math.inf:
            return math.inf
        return max(hi - lo, 0.0) / max(abs(hi), 1e-9)

    def offer(design):
        nonlocal incumbent, ub
        cand = evaluate(design)
        if cand is not None and cand.objective < ub - _slack(ub, 1e-12):
            incumbent, ub = cand, cand.objective
            events.record("incumbent", ub)
            events.record("ub", ub)

    offer(np.ones(n_r))
    while heap:
        new_lb = max(lb, current_lb())
        if new_lb > lb:
            lb = new_lb
            events.record("lb", lb)
        if rel_gap(lb, ub) <= gap:
            break
        if out_of_time():
            status = "time_limit"
            break
        if node_limit is not None and nodes >= node_limit:
            status = "node_limit"
            break
        bound, _, node = heapq.heappop(heap)
        if bound >= ub - _slack(ub):
            events.record("node_pruned", node.seq)
            continue
        nodes += 1
        events.record("node_open", node.seq)
        if not _routable(inst, node.bounds):
            events.record("node_infeasible", node.seq)
            continue
        if not np.any(node.bounds.fixed == -1):
            # a single design left: its equilibrium is the node's exact value
            fixed = node.bounds.fixed.astype(float)
            offer(fixed)
            leaf = evaluate(fixed)
            if leaf is not None:
                leaf_bounds.append(max(node.lower_bound, leaf.lower))
            continue
        tol = max(1e-7, 0.1 * min(rel_gap(lb, ub), 1.0))
        if node.tol is not None:
            tol = min(tol, node.tol)
        try:
            if reduced:
                oracle = ReducedPenaltyProblem(inst, penalty, node.bounds)
                f, df, line = oracle.objective, oracle.gradient, oracle.line_derivative
                start = node.active_set if node.active_set is not None else oracle(reduced_grad0)
            else:
                oracle = DesignOracle(inst, mode, node.bounds, pool=node.pool, bridge_steps=bridge_steps,
                                      dual_rule=dual_rule, multi_cut=multi_cut,
                                      time_limit=remaining())
                f, df, line = problem.objective, problem.gradient, problem.line_derivative
                start = node.active_set if node.active_set is not None else oracle(grad0)
            # a loose pass first feeds the incumbent heuristic, then tighten; either pass
            # stops early once the node bound alone would meet the gap target
            passes = [gap, tol] if tol < gap else [tol]
            for k, pass_tol in enumerate(passes):
                target = ub - 0.9 * gap * abs(ub) if math.isfinite(ub) else None
                report = bpcg_solve(f, df, oracle, start, tol=pass_tol, max_iter=max_fw_iter,
                                    time_limit=remaining(), line_derivative=line, bound_target=target,
                                    stall_window=stall_window)
                fw_iters += report.iterations
                point = oracle.full(report.x) if reduced else report.x
                y = lay.y(point)
                designs = {np.round(y).astype(np.int8).tobytes(): np.round(y)}
                for v in report.active_set.vertices:
                    d = _support_design(inst, v, node.bounds) if reduced else np.round(lay.y(v))
                    designs.setdefault(d.astype(np.int8).tobytes(), d)
                for d in designs.values():
                    if out_of_time():
                        break
                    offer(d)
                if report.status != "optimal":
                    break
                start = report.active_set
        except InfeasibleRouting:
            events.record("node_infeasible", node.seq)
            continue
        lmo_calls += oracle.calls
        node.lower_bound = node_lower_bound(report, node.lower_bound)
        node_log.append((node.seq, node.bounds.key(), node.lower_bound, report.certified))
        events.record("node_close", node.lower_bound)

        if node.lower_bound >= ub - _slack(ub):
            continue
        index = None
        if mode == "penalty" and most_fractional(y) is None:
            index = _worst_violation(inst, lay.x(point), np.round(y), node.bounds, violation_target)
        children = branch(node, y, report.active_set, 0 if reduced else n_r, seq, index)
        if children is None and report.status == "stalled":
            index = _busiest_free_arc(inst, lay.x(point), node.bounds)
            if index is not None:
                children = branch(node, y, report.active_set, 0 if reduced else n_r, seq, index)
        if children is None:
            if rel_gap(node.lower_bound, ub) > gap and report.status == "optimal" and tol > 1e-7:
                # integral relaxation whose bound is too loose: revisit with a tighter tolerance
                node.tol = max(1e-7, 0.1 * tol)
                node.active_set = report.active_set
                node.seq = next(seq)
                heapq.heappush(heap, (node.lower_bound, node.seq, node))
                continue
            leaf_bounds.append(node.lower_bound)
            continue
        for child in children:
            heapq.heappush(heap, (child.lower_bound, child.seq, child))

    lb = max(lb, current_lb()) if ub < math.inf else lb
    if incumbent is None and not heap and status == "optimal":
        raise Infeasible("no design routes every demand")
    final_gap = rel_gap(lb, ub)
    if status == "optimal" and final_gap > gap:
        status = "gap_not_closed"
    if out_of_time():
        # finishing after the budget does not count as solving within it
        status = "time_limit"
    events.record("lb", lb)
    events.record("ub", ub)
    return BnbResult(mode, status, incumbent, lb, ub, final_gap, nodes, lmo_calls, fw_iters,
                     time.perf_counter() - t0, events, node_log, gap, violation_target)
