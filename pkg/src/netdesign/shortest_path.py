"""Shortest-path trees and all-or-nothing assignment.

These are the linear minimization oracles over the flow polytope: with fixed
edge weights every origin-destination demand goes entirely along a shortest
path.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .network import FlowState, NetworkInstance


class InfeasibleRouting(Exception):
    """A demanded origin-destination pair has no path over the open edges."""

    def __init__(self, origin: int, destination: int, reachable: frozenset[int]):
        super().__init__(f"destination {destination} unreachable from origin {origin}")
        self.origin = origin
        self.destination = destination
        self.reachable = reachable


@dataclass
class ShortestPathTree:
    origin: int
    dist: np.ndarray
    parent: np.ndarray  # incoming tree edge per node, -1 if none
    reverse: bool = False


def _adjacency(inst: NetworkInstance):
    cached = getattr(inst, "_adjacency", None)
    if cached is not None:
        return cached
    out_adj: list[list[tuple[int, int]]] = [[] for _ in range(inst.num_nodes)]
    in_adj: list[list[tuple[int, int]]] = [[] for _ in range(inst.num_nodes)]
    for e, (u, v) in enumerate(zip(inst.tail.tolist(), inst.head.tolist())):
        out_adj[u].append((v, e))
        in_adj[v].append((u, e))
    # instances are immutable, so the adjacency can live on the object
    object.__setattr__(inst, "_adjacency", (out_adj, in_adj))
    return out_adj, in_adj


def _closed_list(inst: NetworkInstance, closed) -> list[bool]:
    if closed is None:
        return [False] * inst.num_edges
    return np.asarray(closed, dtype=bool).tolist()


def _search(adj, n: int, weights: list[float], source: int, closed: list[bool]):
    dist = [math.inf] * n
    parent = [-1] * n
    done = [False] * n
    dist[source] = 0.0
    heap = [(0.0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for v, e in adj[u]:
            if closed[e] or done[v]:
                continue
            nd = d + weights[e]
            if nd < dist[v] or (nd == dist[v] and e < parent[v]):
                if nd < dist[v]:
                    heapq.heappush(heap, (nd, v))
                dist[v] = nd
                parent[v] = e
    return dist, parent


def dijkstra(inst: NetworkInstance, weights, origin: int, closed=None,
             reverse: bool = False) -> ShortestPathTree:
    """Single-source shortest paths over the edges not marked ``closed``.

    With ``reverse=True`` distances are *to* ``origin`` and ``parent[v]`` is
    the first edge of the shortest path out of ``v``. Ties are broken towards
    the smaller node index (heap order) and then the smaller edge index.
    """
    w = np.asarray(weights, dtype=float)
    if w.shape != (inst.num_edges,):
        raise ValueError("one weight per edge required")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("edge weights must be finite and nonnegative")
    out_adj, in_adj = _adjacency(inst)
    dist, parent = _search(in_adj if reverse else out_adj, inst.num_nodes, w.tolist(),
                           int(origin), _closed_list(inst, closed))
    return ShortestPathTree(int(origin), np.array(dist), np.array(parent, dtype=np.int64), reverse)


def reachable_from(inst: NetworkInstance, source: int, closed=None, reverse: bool = False) -> set[int]:
    out_adj, in_adj = _adjacency(inst)
    adj = in_adj if reverse else out_adj
    closed = _closed_list(inst, closed)
    seen = {int(source)}
    stack = [int(source)]
    while stack:
        u = stack.pop()
        for v, e in adj[u]:
            if not closed[e] and v not in seen:
                seen.add(v)
                stack.append(v)
    return seen


def first_unroutable(inst: NetworkInstance, closed=None, demand=None) -> InfeasibleRouting | None:
    """The first demanded pair (origin order) without a path, or None."""
    demand = inst.demand if demand is None else demand
    dest = inst.destinations.tolist()
    for i, o in enumerate(inst.origins.tolist()):
        row = demand[i]
        if not np.any(row > 0):
            continue
        seen = reachable_from(inst, o, closed)
        for k, z in enumerate(dest):
            if row[k] > 0 and z not in seen:
                return InfeasibleRouting(o, z, frozenset(seen))
    return None


def all_or_nothing(inst: NetworkInstance, weights, closed=None, demand=None) -> FlowState:
    """Route every demand along one shortest path (one tree per origin).

    Raises InfeasibleRouting, carrying the origin's reachable node set, when a
    demanded destination cannot be reached.
    """
    demand = inst.demand if demand is None else demand
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("edge weights must be nonnegative")
    out_adj, _ = _adjacency(inst)
    wl = w.tolist()
    cl = _closed_list(inst, closed)
    tail = inst.tail.tolist()
    dest = inst.destinations.tolist()
    flows = np.zeros((len(dest), inst.num_edges))
    for i, o in enumerate(inst.origins.tolist()):
        row = demand[i].tolist()
        if not any(d > 0 for d in row):
            continue
        dist, parent = _search(out_adj, inst.num_nodes, wl, o, cl)
        for k, z in enumerate(dest):
            d = row[k]
            if d <= 0 or z == o:
                continue
            if dist[z] == math.inf:
                reach = frozenset(v for v in range(inst.num_nodes) if dist[v] < math.inf)
                raise InfeasibleRouting(o, z, reach)
            v = z
            fk = flows[k]
            while v != o:
                e = parent[v]
                fk[e] += d
                v = tail[e]
    return FlowState(flows)


def route_by_destination(inst: NetworkInstance, weights, closed=None, demand=None) -> FlowState:
    """All-or-nothing routing with destination-specific weights.

    ``weights`` has shape ``(n_destinations, n_edges)``; one reverse tree is
    grown from each destination.
    """
    demand = inst.demand if demand is None else demand
    w = np.asarray(weights, dtype=float)
    if w.ndim == 1:
        w = np.broadcast_to(w, (len(inst.destinations), inst.num_edges))
    if np.any(w < 0):
        raise ValueError("edge weights must be nonnegative")
    _, in_adj = _adjacency(inst)
    cl = _closed_list(inst, closed)
    head = inst.head.tolist()
    origins = inst.origins.tolist()
    flows = np.zeros((len(inst.destinations), inst.num_edges))
    for k, z in enumerate(inst.destinations.tolist()):
        col = demand[:, k].tolist()
        if not any(d > 0 for d in col):
            continue
        dist, nxt = _search(in_adj, inst.num_nodes, w[k].tolist(), z, cl)
        fk = flows[k]
        for i, o in enumerate(origins):
            d = col[i]
            if d <= 0 or o == z:
                continue
            if dist[o] == math.inf:
                raise InfeasibleRouting(o, z, frozenset(reachable_from(inst, o, closed)))
            v = o
            while v != z:
                e = nxt[v]
                fk[e] += d
                v = head[e]
    return FlowState(flows)


def routing_cost(weights, flow: FlowState) -> float:
    """Linear cost of a flow under destination-independent or -specific weights."""
    w = np.asarray(weights, dtype=float)
    if w.ndim == 1:
        return float(flow.aggregate @ w)
    return float((flow.per_destination * w).sum())
