"""Lazified Blended Pairwise Conditional Gradients over an abstract LMO.

The iterate is kept as an explicit convex combination of oracle vertices.
Each iteration either moves weight between the best and worst active vertex
(a pairwise step, no oracle call) or, when the active set promises too little
descent, calls the oracle and takes a Frank-Wolfe step.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np


class LinearOracle(Protocol):
    def __call__(self, direction: np.ndarray) -> np.ndarray:
        """Return an extreme point minimizing ``direction @ v``."""


class ActiveSet:
    """Vertices with convex weights; ``x`` is their weighted sum."""

    def __init__(self, vertices=(), weights=()):
        self.vertices: list[np.ndarray] = []
        self.weights: list[float] = []
        self._index: dict[bytes, int] = {}
        for v, w in zip(vertices, weights):
            self.add(v, w)
        self.x = self.recompute() if self.vertices else None

    @classmethod
    def single(cls, vertex: np.ndarray) -> "ActiveSet":
        return cls([np.asarray(vertex, dtype=float)], [1.0])

    def __len__(self):
        return len(self.vertices)

    def find(self, v: np.ndarray) -> int:
        return self._index.get(v.tobytes(), -1)

    def add(self, v: np.ndarray, w: float) -> int:
        i = self.find(v)
        if i >= 0:
            self.weights[i] += w
            return i
        self._index[v.tobytes()] = len(self.vertices)
        self.vertices.append(v)
        self.weights.append(w)
        return len(self.vertices) - 1

    def recompute(self) -> np.ndarray:
        x = np.zeros_like(self.vertices[0])
        for v, w in zip(self.vertices, self.weights):
            x += w * v
        self.x = x
        return x

    def compact(self, threshold: float = 1e-12) -> bool:
        """Drop vertices below ``threshold`` weight; renormalize if anything went."""
        keep = [i for i, w in enumerate(self.weights) if w >= threshold]
        if len(keep) == len(self.weights):
            return False
        self.vertices = [self.vertices[i] for i in keep]
        total = sum(self.weights[i] for i in keep)
        self.weights = [self.weights[i] / total for i in keep]
        self._index = {v.tobytes(): i for i, v in enumerate(self.vertices)}
        self.recompute()
        return True

    def filtered(self, keep: Callable[[np.ndarray], bool]) -> "ActiveSet | None":
        """Sub-active-set of vertices passing ``keep``, renormalized."""
        pairs = [(v, w) for v, w in zip(self.vertices, self.weights) if keep(v)]
        total = sum(w for _, w in pairs)
        if not pairs or total <= 0:
            return None
        return ActiveSet([v for v, _ in pairs], [w / total for _, w in pairs])

    def copy(self) -> "ActiveSet":
        return ActiveSet(list(self.vertices), list(self.weights))


@dataclass
class SolveReport:
    x: np.ndarray
    objective: float
    dual_gap: float
    iterations: int
    lmo_calls: int
    wall_time: float
    status: str
    certified: bool = True
    lower_bound: float = -math.inf
    active_set: ActiveSet | None = field(default=None, repr=False)
    fw_vertex: np.ndarray | None = field(default=None, repr=False)


def dual_gap(g: np.ndarray, x: np.ndarray, v: np.ndarray) -> float:
    """Frank-Wolfe gap ``g @ (x - v)``."""
    return float(g @ x - g @ v)


def bisection_step(derivative: Callable[[float], float], gamma_max: float,
                   tol: float = 1e-12) -> float:
    """Minimize a convex univariate function on ``[0, gamma_max]``.

    Root of the nondecreasing derivative by Illinois false position inside a
    bisection bracket, to bracket width ``tol * max(gamma_max, 1)``.
    """
    if gamma_max <= 0:
        return 0.0
    d_lo = derivative(0.0)
    if d_lo >= 0:
        return 0.0
    d_hi = derivative(gamma_max)
    if d_hi <= 0:
        return gamma_max
    lo, hi = 0.0, gamma_max
    width = tol * max(gamma_max, 1.0)
    side = 0
    while hi - lo > width:
        mid = lo - d_lo * (hi - lo) / (d_hi - d_lo)
        if not lo < mid < hi or side in (-3, 3):
            mid, side = 0.5 * (lo + hi), 0
        d = derivative(mid)
        if d > 0:
            hi, d_hi = mid, d
            if side < 0:
                d_lo *= 0.5
            side = min(side, 0) - 1
        elif d < 0:
            lo, d_lo = mid, d
            if side > 0:
                d_hi *= 0.5
            side = max(side, 0) + 1
        else:
            return mid
        # the retained end stalls when one side keeps moving; probe just past the root
        if abs(side) == 2:
            probe = mid + width if d < 0 else mid - width
            if lo < probe < hi:
                dp = derivative(probe)
                if dp > 0:
                    hi, d_hi = probe, dp
                elif dp < 0:
                    lo, d_lo = probe, dp
                else:
                    return probe
    return lo


def bpcg_solve(f: Callable[[np.ndarray], float], grad: Callable[[np.ndarray], np.ndarray],
               lmo: LinearOracle, start, *, tol: float = 1e-7, relative: bool = True,
               max_iter: int = 10_000, time_limit: float | None = None, lazy: bool = True,
               line_derivative: Callable[[np.ndarray, np.ndarray], Callable[[float], float]] | None = None,
               trace: list | None = None, bound_target: float | None = None,
               stall_window: int | None = None, stall_ratio: float = 1e-3) -> SolveReport:
    """Minimize ``f`` over the convex hull of the oracle's feasible set.

    Parameters
    ----------
    f, grad : callables
        Convex objective and its gradient on flat vectors.
    lmo : LinearOracle
        Returns extreme points. An oracle may set ``last_exact = False`` after a
        call to signal that its answer is not a certified minimizer; the final
        gap is then reported uncertified.
    start : ndarray or ActiveSet
        A feasible vertex, or an active set to warm-start from.
    tol : float
        Stop once the dual gap is at most ``tol`` (times ``max(|f|, 1)`` when
        ``relative``).
    lazy : bool
        Call the oracle only when no active vertex pair gives enough
        progress. Otherwise the oracle runs every iteration and pairwise
        steps are taken when their gap beats the Frank-Wolfe gap.
    line_derivative : callable, optional
        ``line_derivative(x, d)`` returns ``gamma -> d/dgamma f(x + gamma d)``;
        defaults to evaluating ``grad`` along the segment.
    trace : list, optional
        Receives ``(iteration, objective, gap, lmo_calls)`` rows.
    bound_target : float, optional
        Also stop (status ``"bound_reached"``) once a certified lower bound
        ``f(x) - gap`` reaches this value.
    stall_window : int, optional
        Stop (status ``"stalled"``) when the objective falls by less than
        ``stall_ratio`` times the last dual gap over this many iterations.
    """
    t0 = time.perf_counter()
    aset = start.copy() if isinstance(start, ActiveSet) else ActiveSet.single(start)
    x = aset.x

    if line_derivative is None:
        def line_derivative(x0, d):
            return lambda gamma: float(grad(x0 + gamma * d) @ d)

    def call_oracle(g):
        v = np.asarray(lmo(g), dtype=float)
        return v, bool(getattr(lmo, "last_exact", True))

    fx = f(x)
    g = grad(x)
    v, exact = call_oracle(g)
    lmo_calls = 1
    gap = dual_gap(g, x, v)
    fresh = True  # ``gap`` and ``v`` belong to the current iterate
    # every exact oracle answer certifies f(x) - gap as a lower bound; keep the best
    best = fx - gap if exact else -math.inf
    phi = max(gap, 0.0) / 2.0
    it = 0
    status = "max_iterations"
    since_resync = 0
    window_start = fx

    while True:
        scale = max(abs(fx), 1.0) if relative else 1.0
        if fresh and gap <= tol * scale:
            status = "optimal"
            break
        if fresh and bound_target is not None and best >= bound_target:
            status = "bound_reached"
            break
        if it >= max_iter:
            status = "max_iterations"
            break
        if time_limit is not None and time.perf_counter() - t0 > time_limit:
            status = "time_limit"
            break
        if stall_window and it and it % stall_window == 0:
            if window_start - fx < stall_ratio * max(gap, 0.0):
                status = "stalled"
                break
            window_start = fx
        it += 1

        scores = [float(g @ u) for u in aset.vertices]
        a = int(np.argmax(scores))
        s = int(np.argmin(scores))
        local_gap = scores[a] - scores[s]

        # lazily against the halving estimate phi, otherwise against the current FW gap
        threshold = phi if lazy else gap
        if len(aset) > 1 and local_gap >= threshold and local_gap > 0:
            d = aset.vertices[s] - aset.vertices[a]
            lam_a = aset.weights[a]
            gamma = bisection_step(line_derivative(x, d), lam_a)
            if gamma <= 0:
                phi /= 2.0
                continue
            if gamma >= lam_a:
                gamma = lam_a
            aset.weights[a] -= gamma
            aset.weights[s] += gamma
            x = x + gamma * d
            if aset.weights[a] <= 1e-12:
                aset.weights[a] = 0.0
                aset.compact()
                x = aset.x
            fresh = False
        else:
            if not fresh:
                v, exact = call_oracle(g)
                lmo_calls += 1
                gap = dual_gap(g, x, v)
                fresh = True
                if exact:
                    best = max(best, fx - gap)
            if gap <= tol * scale or (bound_target is not None and best >= bound_target):
                # the refresh settled it; no step was taken this round
                it -= 1
                status = "optimal" if gap <= tol * scale else "bound_reached"
                break
            if gap >= phi or not lazy:
                d = v - x
                gamma = bisection_step(line_derivative(x, d), 1.0)
                if gamma <= 0:
                    # no numerical descent left along the best direction
                    status = "stalled"
                    break
                if gamma >= 1.0:
                    aset = ActiveSet.single(v)
                    x = v.copy()
                else:
                    aset.weights = [w * (1.0 - gamma) for w in aset.weights]
                    aset.add(v, gamma)
                    x = x + gamma * d
                    if aset.compact():
                        x = aset.x
                fresh = False
            else:
                phi /= 2.0
                continue

        since_resync += 1
        if since_resync >= 200:
            x = aset.recompute()
            since_resync = 0
        aset.x = x
        fx = f(x)
        g = grad(x)
        if not lazy:
            v, exact = call_oracle(g)
            lmo_calls += 1
            gap = dual_gap(g, x, v)
            fresh = True
            if exact:
                best = max(best, fx - gap)
        if trace is not None:
            trace.append((it, fx, gap, lmo_calls))

    if not fresh:
        v, exact = call_oracle(g)
        lmo_calls += 1
        gap = dual_gap(g, x, v)
        if exact:
            best = max(best, fx - gap)
    aset.x = x
    return SolveReport(x=x, objective=float(f(x)), dual_gap=max(gap, 0.0), iterations=it,
                       lmo_calls=lmo_calls, wall_time=time.perf_counter() - t0, status=status,
                       certified=exact, lower_bound=best, active_set=aset, fw_vertex=v)


def write_trace_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "objective", "dual_gap", "lmo_calls"])
        w.writerows(rows)
