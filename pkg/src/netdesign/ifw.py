"""Exact linear minimization over the mixed-integer network design set.

For a fixed design the linear problem splits into shortest paths, so the
oracle enumerates designs implicitly: depth-first over the free arcs, with the
routing cost on the most open network as a bound.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .network import FlowState, NetworkInstance
from .shortest_path import InfeasibleRouting, _adjacency, _search, all_or_nothing


@dataclass(frozen=True, eq=False)
class DesignBounds:
    """Per-arc 0/1 bounds on the design, as imposed by a branch-and-bound node."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=np.int8)
        up = np.asarray(self.upper, dtype=np.int8)
        if lo.shape != up.shape or np.any(lo > up) or np.any(lo < 0) or np.any(up > 1):
            raise ValueError("bounds must satisfy 0 <= lower <= upper <= 1")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @classmethod
    def free(cls, n: int) -> "DesignBounds":
        return cls(np.zeros(n, dtype=np.int8), np.ones(n, dtype=np.int8))

    def fix(self, index: int, value: int) -> "DesignBounds":
        lo, up = self.lower.copy(), self.upper.copy()
        lo[index] = up[index] = value
        return DesignBounds(lo, up)

    @property
    def fixed(self) -> np.ndarray:
        """-1 for free arcs, else the fixed value."""
        out = np.full(len(self.lower), -1, dtype=np.int8)
        mask = self.lower == self.upper
        out[mask] = self.lower[mask]
        return out

    def contains(self, design: np.ndarray) -> bool:
        y = np.asarray(design)
        return bool(np.all(y >= self.lower - 1e-9) and np.all(y <= self.upper + 1e-9))

    def key(self) -> tuple:
        return tuple(self.fixed.tolist())


@dataclass
class IfwSolution:
    design: np.ndarray
    flows: list[FlowState]
    value: float
    exact: bool = True
    stats: dict = field(default_factory=dict)

    @property
    def flow(self) -> FlowState:
        return self.flows[0]


Block = tuple[np.ndarray, np.ndarray]  # (edge weights, demand matrix)


class RoutingEvaluator:
    """Shortest-path routing value of designs, with a per-call cache.

    ``evaluate`` returns the routing value summed over blocks and the mask of
    removable arcs carried by some demanded path, or raises InfeasibleRouting.
    """

    def __init__(self, inst: NetworkInstance, blocks: Sequence[Block]):
        self.inst = inst
        self.blocks = [(np.asarray(w, dtype=float).tolist(), np.asarray(d, dtype=float))
                       for w, d in blocks]
        for w, _ in blocks:
            if np.any(np.asarray(w) < 0):
                raise ValueError("edge weights must be nonnegative")
        self._cache: dict[bytes, tuple] = {}
        self.evaluations = 0

    def closed_edges(self, design_closed: np.ndarray) -> list[bool]:
        mask = np.zeros(self.inst.num_edges, dtype=bool)
        mask[self.inst.removable[design_closed]] = True
        return mask.tolist()

    def evaluate(self, design_closed: np.ndarray):
        key = np.packbits(design_closed).tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            if isinstance(hit, InfeasibleRouting):
                raise hit
            return hit
        try:
            result = self._evaluate(design_closed)
        except InfeasibleRouting as exc:
            self._cache[key] = exc
            raise
        self._cache[key] = result
        return result

    def _evaluate(self, design_closed):
        self.evaluations += 1
        inst = self.inst
        out_adj, _ = _adjacency(inst)
        closed = self.closed_edges(design_closed)
        tail = inst.tail.tolist()
        pos = inst.removable_pos.tolist()
        dest = inst.destinations.tolist()
        used = np.zeros(inst.num_removable, dtype=bool)
        total = 0.0
        for weights, demand in self.blocks:
            for i, o in enumerate(inst.origins.tolist()):
                row = demand[i].tolist()
                if not any(d > 0 for d in row):
                    continue
                dist, parent = _search(out_adj, inst.num_nodes, weights, o, closed)
                for k, z in enumerate(dest):
                    d = row[k]
                    if d <= 0 or z == o:
                        continue
                    if dist[z] == math.inf:
                        reach = frozenset(v for v in range(inst.num_nodes) if dist[v] < math.inf)
                        raise InfeasibleRouting(o, z, reach)
                    total += d * dist[z]
                    v = z
                    while v != o:
                        e = parent[v]
                        if pos[e] >= 0:
                            used[pos[e]] = True
                        v = tail[e]
        return total, used


def branch_order(inst: NetworkInstance, gradient, prices, bounds: DesignBounds | None = None, *,
                 evaluator: RoutingEvaluator | None = None) -> np.ndarray:
    """Removable arcs sorted by how much closing each one hurts the routing.

    Usefulness is the increase of the routing cost (everything else free arcs
    open) when the arc alone is closed; arcs that disconnect demand come first,
    unused arcs last, ties by index.
    """
    n = inst.num_removable
    if bounds is None:
        bounds = DesignBounds.free(n)
    if evaluator is None:
        evaluator = RoutingEvaluator(inst, [(gradient, inst.demand)])
    base_closed = bounds.fixed == 0
    try:
        base, used = evaluator.evaluate(base_closed)
    except InfeasibleRouting:
        return np.arange(n)
    usefulness = np.zeros(n)
    for e in np.flatnonzero(used & (bounds.fixed == -1)):
        closed = base_closed.copy()
        closed[e] = True
        try:
            usefulness[e] = evaluator.evaluate(closed)[0] - base
        except InfeasibleRouting:
            usefulness[e] = math.inf
    return np.array(sorted(range(n), key=lambda e: (-usefulness[e], e)), dtype=np.int64)


def enumerate_designs(inst: NetworkInstance, blocks: Sequence[Block], prices, bounds: DesignBounds,
                      *, time_limit: float | None = None, order: np.ndarray | None = None):
    """Depth-first implicit enumeration; returns ``(design, value, exact, stats)``."""
    t0 = time.perf_counter()
    prices = np.asarray(prices, dtype=float)
    n = inst.num_removable
    ev = RoutingEvaluator(inst, blocks)
    fixed = bounds.fixed
    # the most open design must route, otherwise nothing in the box does
    ev.evaluate(fixed == 0)
    if order is None:
        order = branch_order(inst, None, prices, bounds, evaluator=ev)
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n)
    neg = np.minimum(prices, 0.0)

    best_value = math.inf
    best_design = None
    nodes = 0
    exact = True
    stack = [fixed.copy()]
    while stack:
        if time_limit is not None and time.perf_counter() - t0 > time_limit and best_design is not None:
            exact = False
            break
        assign = stack.pop()
        nodes += 1
        free = assign == -1
        try:
            route, used = ev.evaluate(assign == 0)
        except InfeasibleRouting:
            continue
        bound = route + float(prices[assign == 1].sum()) + float(neg[free].sum())
        tol = 1e-12 * max(1.0, abs(best_value)) if best_value < math.inf else 0.0
        if bound >= best_value - tol:
            continue
        completion = assign.copy()
        open_free = free & (used | (prices < 0))
        completion[free] = 0
        completion[open_free] = 1
        value = route + float(prices[completion == 1].sum())
        if value < best_value:
            best_value = value
            best_design = completion
        candidates = np.flatnonzero(free & used & (prices > 0))
        if len(candidates) == 0:
            continue
        e = candidates[np.argmin(rank[candidates])]
        one = assign.copy()
        one[e] = 1
        zero = assign.copy()
        zero[e] = 0
        stack.append(one)
        stack.append(zero)
    stats = {"nodes": nodes, "evaluations": ev.evaluations,
             "time": time.perf_counter() - t0}
    return best_design.astype(float), best_value, exact, stats


def solve_ifw_lmo(inst: NetworkInstance, gradient, prices, bounds: DesignBounds | None = None, *,
                  blocks: Sequence[Block] | None = None,
                  time_limit: float | None = None) -> IfwSolution:
    """Minimize ``prices @ y + gradient @ x`` over designs in ``bounds`` and their flows.

    ``blocks`` replaces the single ``(gradient, nominal demand)`` pair by one
    ``(weights, demand)`` pair per scenario. Raises InfeasibleRouting when even
    opening every free arc leaves a demanded pair disconnected.
    """
    if bounds is None:
        bounds = DesignBounds.free(inst.num_removable)
    if blocks is None:
        blocks = [(np.asarray(gradient, dtype=float), inst.demand)]
    design, _, exact, stats = enumerate_designs(inst, blocks, prices, bounds, time_limit=time_limit)
    return finalize(inst, blocks, prices, design, exact, stats)


def finalize(inst: NetworkInstance, blocks: Sequence[Block], prices, design, exact=True,
             stats=None) -> IfwSolution:
    closed = inst.closed_mask(design)
    flows = [all_or_nothing(inst, w, closed, d) for w, d in blocks]
    value = float(np.asarray(prices, dtype=float) @ design)
    value += sum(float(f.aggregate @ np.asarray(w, dtype=float)) for f, (w, _) in zip(flows, blocks))
    return IfwSolution(design, flows, value, exact, stats or {})
