"""Benders decomposition oracle for the linearized network design problem.

The master problem chooses the design and an epigraph variable ``eta`` for
the routing cost; shortest-path subproblems supply dual values that become
optimality cuts, and disconnected designs produce feasibility and bridge
cuts.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ifw import Block, DesignBounds, IfwSolution, finalize
from .network import NetworkInstance
from .shortest_path import InfeasibleRouting, _adjacency, _search, reachable_from

OPTIMALITY = "optimality"
FEASIBILITY = "feasibility"
BRIDGE = "bridge"


@dataclass(frozen=True)
class Cut:
    """``[eta +] sum_j coeffs[j] * y_j >= rhs`` over removable-arc positions ``j``.

    ``block`` names the epigraph variable of a multi-cut optimality cut
    (None for the single aggregated ``eta``).
    """

    kind: str
    coeffs: dict
    rhs: float
    includes_eta: bool = False
    context: str | None = None
    iteration: int = 0
    source: tuple | None = field(default=None, compare=False)
    block: int | None = None

    def __post_init__(self):
        if self.kind == BRIDGE and (self.rhs != 1 or any(c != 1 for c in self.coeffs.values())):
            raise ValueError("bridge cuts have unit coefficients and right-hand side 1")
        if self.includes_eta != (self.kind == OPTIMALITY):
            raise ValueError("exactly the optimality cuts carry eta")

    def lhs(self, design, eta: float = 0.0) -> float:
        y = np.asarray(design, dtype=float)
        value = sum(c * y[j] for j, c in self.coeffs.items())
        return value + (eta if self.includes_eta else 0.0)

    def is_satisfied(self, design, eta: float = 0.0, tol: float = 1e-9) -> bool:
        return self.lhs(design, eta) >= self.rhs - tol * (1.0 + abs(self.rhs))

    def fingerprint(self) -> tuple:
        coeffs = tuple(sorted((int(j), round(float(c), 12)) for j, c in self.coeffs.items()))
        return (self.kind, coeffs, round(float(self.rhs), 12), self.context, self.block)

    def dense(self, n: int) -> np.ndarray:
        a = np.zeros(n)
        for j, c in self.coeffs.items():
            a[j] = c
        return a


class CutPool:
    """Append-only, deduplicated cut collection.

    Feasibility and bridge cuts hold for every design and are always active.
    Optimality cuts depend on the linear objective they were built for and
    are only active for that ``context``.
    """

    def __init__(self, cuts: Sequence[Cut] = ()):
        self.cuts: list[Cut] = []
        self._seen: set = set()
        for c in cuts:
            self.add(c)

    def __len__(self):
        return len(self.cuts)

    def add(self, cut: Cut) -> bool:
        fp = cut.fingerprint()
        if fp in self._seen:
            return False
        self._seen.add(fp)
        self.cuts.append(cut)
        return True

    def active(self, context: str | None) -> list[Cut]:
        return [c for c in self.cuts if not c.includes_eta or c.context == context]

    def copy(self) -> "CutPool":
        return CutPool(self.cuts)

    def to_json(self) -> str:
        rows = [{"kind": c.kind, "coeffs": {str(j): v for j, v in sorted(c.coeffs.items())},
                 "rhs": c.rhs, "iteration": c.iteration, "block": c.block} for c in self.cuts]
        return json.dumps(rows, indent=1)


@dataclass
class DualValues:
    """Subproblem duals: ``r[i, z]`` origin potentials, ``t[z]``, ``s[z, j]`` per removable arc."""

    r: np.ndarray
    t: np.ndarray
    s: np.ndarray
    demand: np.ndarray
    big_m: np.ndarray
    rule: str = "lp"

    @property
    def value(self) -> float:
        return float(((self.r - self.t[None, :]) * self.demand).sum())

    def arc_coeffs(self) -> np.ndarray:
        if self.rule == "lp":
            return (self.big_m[:, None] * self.s).sum(axis=0)
        return self.s.sum(axis=0)


@dataclass
class InfeasibilityCertificate:
    origin: int
    destination: int
    reachable: frozenset
    design: np.ndarray


def infeasibility_certificates(inst: NetworkInstance, design, demand=None) -> list[InfeasibilityCertificate]:
    """One certificate per origin that cannot reach one of its demanded destinations."""
    demand = inst.demand if demand is None else demand
    closed = inst.closed_mask(design)
    dest = inst.destinations.tolist()
    certs = []
    for i, o in enumerate(inst.origins.tolist()):
        row = demand[i]
        if not np.any(row > 0):
            continue
        seen = reachable_from(inst, o, closed)
        for k, z in enumerate(dest):
            if row[k] > 0 and z not in seen:
                certs.append(InfeasibilityCertificate(o, z, frozenset(seen), np.asarray(design, dtype=float)))
                break
    return certs


def dual_subproblem(inst: NetworkInstance, weights, design, demand=None, rule: str = "lp"):
    """Dual values of the routing subproblem at ``design``, or an infeasibility certificate.

    ``r[i, z]`` is the shortest distance from origin ``i`` to ``z`` over open
    arcs and ``t = 0``. With ``rule="lp"`` the arc duals are the reduced-cost
    violations ``max(0, pi_tail - w_e - pi_head)`` of the closed arcs, which
    makes every optimality cut a valid LP-duality bound. ``rule="unit"``
    sets ``s = 1`` on closed arcs and 0 on open ones.
    """
    if rule not in ("lp", "unit"):
        raise ValueError(f"unknown dual rule {rule!r}")
    demand = inst.demand if demand is None else np.asarray(demand, dtype=float)
    design = np.asarray(design, dtype=float)
    certs = infeasibility_certificates(inst, design, demand)
    if certs:
        return certs[0]
    w = np.asarray(weights, dtype=float)
    closed = inst.closed_mask(design)
    _, in_adj = _adjacency(inst)
    n_z = len(inst.destinations)
    r = np.zeros((len(inst.origins), n_z))
    s = np.zeros((n_z, inst.num_removable))
    closed_pos = np.flatnonzero(design < 0.5)
    rem = inst.removable
    for k, z in enumerate(inst.destinations.tolist()):
        if not np.any(demand[:, k] > 0):
            continue
        dist, _ = _search(in_adj, inst.num_nodes, w.tolist(), z, closed.tolist())
        finite = [d for d in dist if d < math.inf]
        cap = max(finite)
        pi = np.minimum(np.array(dist), cap)
        r[:, k] = pi[inst.origins]
        if rule == "lp":
            e = rem[closed_pos]
            s[k, closed_pos] = np.maximum(0.0, pi[inst.tail[e]] - w[e] - pi[inst.head[e]])
        else:
            s[k, closed_pos] = 1.0
    r[demand <= 0] = 0.0
    return DualValues(r, np.zeros(n_z), s, demand, demand.sum(axis=0), rule)


def make_optimality_cut(duals, context: str | None = None, iteration: int = 0, source=None,
                        block: int | None = None) -> Cut:
    """``eta + sum_j s_j y_j >= sum (r - t) d``, aggregated over blocks when given a list."""
    if isinstance(duals, DualValues):
        duals = [duals]
    coeffs = sum(d.arc_coeffs() for d in duals)
    rhs = sum(d.value for d in duals)
    return Cut(OPTIMALITY, {int(j): float(c) for j, c in enumerate(np.atleast_1d(coeffs)) if c != 0},
               float(rhs), True, context, iteration, source, block)


def make_feasibility_cut(inst: NetworkInstance, design, demand=None, iteration: int = 0) -> list[Cut]:
    """Benders feasibility cuts from dual rays, one per stranded destination.

    Nodes that cannot reach ``z`` get potential 1; the cut asks for enough
    big-M capacity on closed arcs into the reaching set to carry the
    stranded demand.
    """
    demand = inst.demand if demand is None else np.asarray(demand, dtype=float)
    design = np.asarray(design, dtype=float)
    closed = inst.closed_mask(design)
    cuts = []
    for k, z in enumerate(inst.destinations.tolist()):
        reaching = reachable_from(inst, z, closed, reverse=True)
        stranded = sum(float(demand[i, k]) for i, o in enumerate(inst.origins.tolist())
                       if demand[i, k] > 0 and o not in reaching)
        if stranded <= 0:
            continue
        m = float(demand[:, k].sum())
        coeffs = {}
        for j, e in enumerate(inst.removable.tolist()):
            if design[j] < 0.5 and inst.tail[e] not in reaching and inst.head[e] in reaching:
                coeffs[j] = coeffs.get(j, 0.0) + m
        cuts.append(Cut(FEASIBILITY, coeffs, stranded, False, None, iteration, tuple(design.tolist())))
    return cuts


def make_bridge_cut(inst: NetworkInstance, certificate: InfeasibilityCertificate, steps: int = 1,
                    iteration: int = 0) -> Cut | None:
    """``sum_{e in E_b} y_e >= 1`` over arcs leaving the origin's reachable set.

    ``steps > 1`` grows ``E_b`` by arcs whose tails are heads of previously
    added arcs, restricted to removable arcs closed in the certificate's
    design. Returns None when the frontier holds a permanent arc.
    """
    if steps < 1:
        raise ValueError("step length must be at least 1")
    reach = certificate.reachable
    if not reach:
        raise ValueError("empty certificate")
    if len(reach) >= inst.num_nodes:
        raise AssertionError("certificate covers every node; nothing is disconnected")
    tail, head = inst.tail.tolist(), inst.head.tolist()
    pos = inst.removable_pos.tolist()
    design = np.asarray(certificate.design, dtype=float)
    frontier = [e for e in range(inst.num_edges) if tail[e] in reach and head[e] not in reach]
    if any(pos[e] < 0 for e in frontier):
        return None
    chosen = set(frontier)
    level = {head[e] for e in frontier}
    for _ in range(steps - 1):
        added = [e for e in range(inst.num_edges)
                 if tail[e] in level and e not in chosen and pos[e] >= 0 and design[pos[e]] < 0.5]
        if not added:
            break
        chosen.update(added)
        level = {head[e] for e in added}
    coeffs = {pos[e]: 1.0 for e in sorted(chosen)}
    return Cut(BRIDGE, coeffs, 1.0, False, None, iteration, tuple(design.tolist()))


def solve_master(prices, cuts: Sequence[Cut], bounds: DesignBounds, *, time_limit: float | None = None):
    """Exact ``min prices @ y + eta`` subject to cuts and bounds, ``eta >= 0``.

    Optimality cuts with a ``block`` index bound their own epigraph variable
    and ``eta`` is the sum over blocks. Depth-first enumeration; at a node the
    most open completion gives the smallest cut-implied ``eta`` because every
    cut coefficient is nonnegative. Returns ``(design, eta, value)`` or None
    when no design satisfies the cuts.
    """
    t0 = time.perf_counter()
    prices = np.asarray(prices, dtype=float)
    n = len(prices)
    opt = [c for c in cuts if c.includes_eta]
    feas = [c for c in cuts if not c.includes_eta]
    a_opt = np.array([c.dense(n) for c in opt]).reshape(len(opt), n)
    b_opt = np.array([c.rhs for c in opt])
    groups = {}
    for i, c in enumerate(opt):
        groups.setdefault(c.block, []).append(i)
    groups = [np.array(v) for _, v in sorted(groups.items(), key=lambda kv: (kv[0] is not None, kv[0] or 0))]
    a_feas = np.array([c.dense(n) for c in feas]).reshape(len(feas), n)
    b_feas = np.array([c.rhs for c in feas])
    if np.any(a_opt < 0) or np.any(a_feas < 0):
        raise ValueError("master enumeration needs nonnegative cut coefficients")
    feas_tol = 1e-9 * (1.0 + np.abs(b_feas))
    neg = np.minimum(prices, 0.0)
    order = sorted(range(n), key=lambda j: (-prices[j], j))

    def eta_of(y):
        if not len(opt):
            return 0.0
        slack = b_opt - a_opt @ y
        return sum(max(0.0, float(np.max(slack[idx]))) for idx in groups)

    best = None
    best_value = math.inf
    stack = [bounds.fixed.astype(np.int8)]
    while stack:
        if time_limit is not None and best is not None and time.perf_counter() - t0 > time_limit:
            break
        assign = stack.pop()
        free = assign == -1
        most_open = (assign != 0).astype(float)
        if len(feas) and np.any(a_feas @ most_open < b_feas - feas_tol):
            continue
        eta = eta_of(most_open)
        bound = float(prices[assign == 1].sum()) + float(neg[free].sum()) + eta
        if bound >= best_value - 1e-12 * max(1.0, abs(best_value)):
            continue
        value = float(prices @ most_open) + eta
        if value < best_value:
            best_value, best = value, (most_open, eta)
        j = next((j for j in order if free[j]), None)
        if j is None:
            continue
        one = assign.copy()
        one[j] = 1
        zero = assign.copy()
        zero[j] = 0
        stack.append(one)
        stack.append(zero)
    if best is None:
        return None
    return best[0], best[1], best_value


def objective_context(blocks: Sequence[Block]) -> str:
    h = hashlib.sha1()
    for w, d in blocks:
        h.update(np.ascontiguousarray(w, dtype=float).tobytes())
        h.update(np.ascontiguousarray(d, dtype=float).tobytes())
    return h.hexdigest()


def solve_benders_lmo(inst: NetworkInstance, gradient, prices, bounds: DesignBounds | None = None,
                      pool: CutPool | None = None, *, blocks: Sequence[Block] | None = None,
                      bridge_steps: int = 2, dual_rule: str = "lp", max_iterations: int = 100_000,
                      time_limit: float | None = None, multi_cut: bool = False) -> IfwSolution:
    """Benders loop: master, subproblem, cut, until the master bound meets the best design.

    Same contract as ``solve_ifw_lmo``; cuts accumulate in ``pool``. Scenario
    blocks share one aggregated optimality cut per iteration unless
    ``multi_cut`` is set, which gives each block its own epigraph variable.
    """
    t0 = time.perf_counter()
    n = inst.num_removable
    if bounds is None:
        bounds = DesignBounds.free(n)
    if blocks is None:
        blocks = [(np.asarray(gradient, dtype=float), inst.demand)]
    if pool is None:
        pool = CutPool()
    prices = np.asarray(prices, dtype=float)
    context = objective_context(blocks)

    most_open = (bounds.upper == 1).astype(float)
    for _, d in blocks:
        certs = infeasibility_certificates(inst, most_open, d)
        if certs:
            c = certs[0]
            raise InfeasibleRouting(c.origin, c.destination, c.reachable)

    best_value = math.inf
    best_design = None
    converged = False
    it = 0
    cuts_added = 0
    while it < max_iterations:
        if time_limit is not None and best_design is not None and time.perf_counter() - t0 > time_limit:
            break
        it += 1
        active = [c for c in pool.active(context) if not c.includes_eta or (c.block is not None) == multi_cut]
        master = solve_master(prices, active, bounds)
        if master is None:
            break
        y, eta, lower = master
        source = tuple(y.tolist())
        new_cuts = []
        for _, d in blocks:
            for cert in infeasibility_certificates(inst, y, d):
                cut = make_bridge_cut(inst, cert, bridge_steps, it)
                if cut is not None:
                    new_cuts.append(cut)
            new_cuts.extend(make_feasibility_cut(inst, y, d, it))
        if new_cuts:
            added = [pool.add(c) for c in new_cuts]
            cuts_added += sum(added)
            if not any(added):
                break
            continue
        duals = [dual_subproblem(inst, w, y, d, dual_rule) for w, d in blocks]
        value = float(prices @ y) + sum(dv.value for dv in duals)
        if value < best_value:
            best_value, best_design = value, y
        # with every arc fixed the single feasible design is optimal
        if lower >= best_value - 1e-9 * (1.0 + abs(best_value)) or not np.any(bounds.fixed == -1):
            converged = True
            break
        if multi_cut:
            new_cuts = [make_optimality_cut(dv, context, it, source, b) for b, dv in enumerate(duals)]
        else:
            new_cuts = [make_optimality_cut(duals, context, it, source)]
        added = sum(pool.add(c) for c in new_cuts)
        cuts_added += added
        if not added:
            break
    if best_design is None:
        raise InfeasibleRouting(-1, -1, frozenset())
    stats = {"iterations": it, "cuts_added": cuts_added, "time": time.perf_counter() - t0}
    return finalize(inst, blocks, prices, best_design, converged, stats)
