"""Oracle for the penalized formulation: linking constraints moved into the objective.

Without the linking constraints the linear subproblem is a product of the
design box and the flow polytope, so it splits into a sign rule for the
design and per-destination shortest paths for the flows.
"""

from __future__ import annotations

import numpy as np

from .ifw import DesignBounds, IfwSolution
from .network import FlowState, NetworkInstance, linking_excess
from .problem import PenaltyConfig
from .shortest_path import route_by_destination


def penalty_gradients(inst: NetworkInstance, flow: FlowState, design, cfg: PenaltyConfig = PenaltyConfig(),
                      big_m: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Penalty gradients ``(g, h)`` with respect to design and flows.

    ``h`` has shape ``(Z, E)`` and is zero off the removable arcs;
    ``g_e = -sum_z M^z h_e^z``. With ``cfg.doubled_gradient`` both carry an
    extra factor 2.
    """
    big_m = inst.big_m if big_m is None else np.asarray(big_m, dtype=float)
    excess = linking_excess(inst, flow, design, big_m)
    h_r = cfg.gradient_factor * cfg.mu * cfg.p * excess ** (cfg.p - 1.0)
    h = np.zeros((len(inst.destinations), inst.num_edges))
    h[:, inst.removable] = h_r
    g = -(big_m[:, None] * h_r).sum(axis=0)
    return g, h


def solve_design_lmo(prices, g, bounds: DesignBounds | None = None) -> np.ndarray:
    """Open exactly the arcs with negative coefficient ``prices + g``, within bounds."""
    coeff = np.asarray(prices, dtype=float) + np.asarray(g, dtype=float)
    y = (coeff < 0).astype(float)
    if bounds is not None:
        y = np.clip(y, bounds.lower, bounds.upper).astype(float)
    return y


def solve_flow_lmo(inst: NetworkInstance, weights, demand=None) -> FlowState:
    """Route all demand on the full edge set with destination-specific weights.

    ``weights`` is ``gradient + h``: either ``(E,)`` or ``(Z, E)``.
    """
    return route_by_destination(inst, weights, None, demand)


def solve_penalty_lmo(inst: NetworkInstance, design_coeffs, blocks, bounds: DesignBounds | None = None) -> IfwSolution:
    """Combined oracle over ``box x F_1 x ... x F_S``; value is the sum of both parts."""
    design = solve_design_lmo(design_coeffs, 0.0, bounds)
    flows = [solve_flow_lmo(inst, w, d) for w, d in blocks]
    value = float(np.asarray(design_coeffs, dtype=float) @ design)
    for f, (w, _) in zip(flows, blocks):
        w = np.asarray(w, dtype=float)
        value += float((f.per_destination * (w if w.ndim == 2 else w[None, :])).sum())
    return IfwSolution(design, flows, value)


def optimal_design(inst: NetworkInstance, x: np.ndarray, big_m: np.ndarray, cfg: PenaltyConfig,
                   bounds: DesignBounds | None = None) -> np.ndarray:
    """Exact minimizer over the box of ``prices @ y + mu * sum max(x - M y, 0) ** p`` for fixed flows.

    ``x`` has shape ``(S, Z, E)`` and ``big_m`` ``(S, Z)``. The problem is
    separable per arc with a nondecreasing derivative, so each coordinate
    is a bracketed root found by bisection.
    """
    n = inst.num_removable
    lo = np.zeros(n) if bounds is None else bounds.lower.astype(float)
    up = np.ones(n) if bounds is None else bounds.upper.astype(float)
    return _design_from_removable(x[:, :, inst.removable], big_m[:, :, None], inst.prices, cfg, lo, up)


def _power(u: np.ndarray, q: float) -> np.ndarray:
    return np.sqrt(u) if q == 0.5 else u ** q


def _design_from_removable(xr, m, prices, cfg: PenaltyConfig, lo, up, tol: float = 1e-13,
                           max_iter: int = 200, start=None):
    c = cfg.mu * cfg.p
    q = cfg.p - 1.0

    def excess(y):
        return (m * _power(np.maximum(xr - m * y, 0.0), q)).sum(axis=(0, 1))

    # the slope prices - c * G(y) is nondecreasing; find G(y) = prices / c on the
    # scale G ** (1 / q), which is affine in y when a single term is active
    target = (prices / c) ** (1.0 / q)
    at_lo = excess(lo) <= prices / c
    at_up = excess(up) >= prices / c
    a = np.where(at_up, up, lo)
    b = np.where(at_lo, lo, up)
    y = 0.5 * (a + b) if start is None else np.clip(start, a, b)
    for _ in range(max_iter):
        u = np.maximum(xr - m * y, 0.0)
        uq = _power(u, q)
        g = (m * uq).sum(axis=(0, 1))
        dg = -q * (m * m * np.divide(uq, u, out=np.zeros_like(u), where=u > 0)).sum(axis=(0, 1))
        above = g < prices / c
        b = np.where(above, y, b)
        a = np.where(above, a, y)
        h = g ** (1.0 / q)
        with np.errstate(divide="ignore", invalid="ignore"):
            dh = np.where(g > 0, h / (q * g) * dg, 0.0)
            step = np.where(dh < 0, y - (h - target) / dh, np.nan)
        step = np.clip(step, a, b)
        inside = ((step > a) & (step < b)) | (np.abs(step - y) <= tol)
        y_new = np.where(inside, step, 0.5 * (a + b))
        moved = np.abs(y_new - y)
        y = y_new
        if moved.max(initial=0.0) <= tol or (b - a).max(initial=0.0) <= tol:
            break
    y = np.where(at_lo, lo, y)
    return np.where(at_up, up, y)


class ReducedPenaltyProblem:
    """Penalized relaxation with the design minimized out: a convex function of flows only.

    ``phi(x) = min_{y in bounds} F(y, x)`` for the penalized objective ``F``.
    Its gradient is ``grad_x F(y*(x), x)``, and its linear oracle is
    per-scenario, per-destination shortest paths on the full network. The
    minimum of ``phi`` equals the minimum of ``F`` over the box.
    """

    def __init__(self, inst: NetworkInstance, cfg: PenaltyConfig, bounds: DesignBounds | None = None):
        from .problem import DesignProblem

        self.inst = inst
        self.cfg = cfg
        self.bounds = DesignBounds.free(inst.num_removable) if bounds is None else bounds
        self.joint = DesignProblem(inst, cfg)
        self.layout = self.joint.layout
        lay = self.layout
        self.shape = (lay.n_s, lay.n_z, lay.n_e)
        self.calls = 0
        self.last_exact = True

    def design(self, xf: np.ndarray) -> np.ndarray:
        return optimal_design(self.inst, xf.reshape(self.shape), self.layout.big_m, self.cfg, self.bounds)

    def full(self, xf: np.ndarray) -> np.ndarray:
        v = np.empty(self.layout.size)
        v[:self.layout.n_r] = self.design(xf)
        v[self.layout.n_r:] = xf
        return v

    def objective(self, xf: np.ndarray) -> float:
        return self.joint.objective(self.full(xf))

    def gradient(self, xf: np.ndarray) -> np.ndarray:
        return self.joint.gradient(self.full(xf))[self.layout.n_r:]

    def line_derivative(self, xf: np.ndarray, d: np.ndarray):
        """Exact derivative of ``phi(x + gamma d)``, re-solving the design at every ``gamma``."""
        inst, lay, cfg = self.inst, self.layout, self.cfg
        x, dx = xf.reshape(self.shape), d.reshape(self.shape)
        agg, dagg = x.sum(axis=1), dx.sum(axis=1)
        probs = lay.probabilities
        beta_part = float((probs[:, None] * inst.beta[None, :] * dagg).sum())
        nonlinear = inst.gamma > 0
        rho1 = inst.rho[nonlinear] - 1.0
        a_nl, d_nl = agg[:, nonlinear], dagg[:, nonlinear]
        w_nl = probs[:, None] * d_nl * (inst.gamma * inst.rho)[nonlinear][None, :]
        xr, dr = x[:, :, inst.removable], dx[:, :, inst.removable]
        m = lay.big_m[:, :, None]
        lo, up = self.bounds.lower.astype(float), self.bounds.upper.astype(float)
        c = cfg.mu * cfg.p
        last = [None]

        def derivative(gamma: float) -> float:
            val = beta_part
            if w_nl.size:
                val += float((w_nl * np.maximum(a_nl + gamma * d_nl, 0.0) ** rho1).sum())
            if inst.num_removable:
                xg = xr + gamma * dr
                # successive step sizes are close, so the previous design is a good Newton start
                y = _design_from_removable(xg, m, inst.prices, cfg, lo, up, start=last[0])
                last[0] = y
                val += c * float((_power(np.maximum(xg - m * y, 0.0), cfg.p - 1.0) * dr).sum())
            return val

        return derivative

    def __call__(self, g: np.ndarray) -> np.ndarray:
        self.calls += 1
        weights = g.reshape(self.shape)
        out = np.empty(self.shape)
        for s, sc in enumerate(self.layout.scenarios):
            out[s] = solve_flow_lmo(self.inst, weights[s], sc.demand).per_destination
        return out.ravel()
