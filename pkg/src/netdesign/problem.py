"""Flat-vector view of the (stochastic) network design objective.

A point is ``[y (|R|), x (S x Z x E)]``: design values followed by the
per-scenario, per-destination edge flows. The deterministic problem is the
one-scenario case with probability 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import FlowState, NetworkInstance, edge_costs, edge_derivatives


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty weight ``mu`` and power ``p`` for relaxed linking constraints.

    ``doubled_gradient`` multiplies the penalty gradients by 2, a common
    convention; the default is the exact derivative of the penalty.
    """

    mu: float = 1000.0
    p: float = 1.5
    doubled_gradient: bool = False

    def __post_init__(self):
        if self.mu < 0 or self.p <= 1:
            raise ValueError("penalty requires mu >= 0 and p > 1")

    @property
    def gradient_factor(self) -> float:
        return 2.0 if self.doubled_gradient else 1.0


class Layout:
    def __init__(self, inst: NetworkInstance):
        self.inst = inst
        self.scenarios = inst.scenario_list()
        self.n_r = inst.num_removable
        self.n_s = len(self.scenarios)
        self.n_z = len(inst.destinations)
        self.n_e = inst.num_edges
        self.size = self.n_r + self.n_s * self.n_z * self.n_e
        self.probabilities = np.array([s.probability for s in self.scenarios])
        self.big_m = np.array([s.big_m for s in self.scenarios]).reshape(self.n_s, self.n_z)

    def y(self, v: np.ndarray) -> np.ndarray:
        return v[:self.n_r]

    def x(self, v: np.ndarray) -> np.ndarray:
        return v[self.n_r:].reshape(self.n_s, self.n_z, self.n_e)

    def flows(self, v: np.ndarray) -> list[FlowState]:
        x = self.x(v)
        return [FlowState(x[s].copy()) for s in range(self.n_s)]

    def pack(self, design, flows) -> np.ndarray:
        v = np.empty(self.size)
        v[:self.n_r] = design
        x = v[self.n_r:].reshape(self.n_s, self.n_z, self.n_e)
        for s, f in enumerate(flows):
            x[s] = f.per_destination
        return v

    def edge_weights(self, g: np.ndarray) -> np.ndarray:
        """Per-scenario edge weights ``(S, E)`` of a destination-independent gradient."""
        x = self.x(g)
        if self.n_z == 0:
            return np.zeros((self.n_s, self.n_e))
        return x[:, 0, :]


class DesignProblem:
    """Objective, gradient and line derivative for one solver mode.

    With ``penalty`` set the linking constraints ``x_e^z <= M^z y_e`` are
    replaced by ``mu * max(x_e^z - M^z y_e, 0) ** p``, summed over scenarios,
    destinations and removable arcs.
    """

    def __init__(self, inst: NetworkInstance, penalty: PenaltyConfig | None = None):
        self.inst = inst
        self.layout = Layout(inst)
        self.penalty = penalty

    def _excess(self, y, x):
        lay = self.layout
        xr = x[:, :, self.inst.removable]
        return xr - lay.big_m[:, :, None] * y[None, None, :]

    def cost(self, v: np.ndarray) -> float:
        """Design prices plus expected congestion cost, without penalty."""
        lay = self.layout
        y, x = lay.y(v), lay.x(v)
        agg = x.sum(axis=1)
        value = float(self.inst.prices @ y)
        for s in range(lay.n_s):
            value += lay.probabilities[s] * float(edge_costs(self.inst, agg[s]).sum())
        return value

    def objective(self, v: np.ndarray) -> float:
        value = self.cost(v)
        if self.penalty is not None and self.layout.n_r:
            lay = self.layout
            excess = np.maximum(self._excess(lay.y(v), lay.x(v)), 0.0)
            value += self.penalty.mu * float((excess ** self.penalty.p).sum())
        return value

    def gradient(self, v: np.ndarray) -> np.ndarray:
        lay = self.layout
        y, x = lay.y(v), lay.x(v)
        agg = x.sum(axis=1)
        g = np.empty(lay.size)
        g[:lay.n_r] = self.inst.prices
        gx = g[lay.n_r:].reshape(lay.n_s, lay.n_z, lay.n_e)
        for s in range(lay.n_s):
            gx[s] = lay.probabilities[s] * edge_derivatives(self.inst, agg[s])
        if self.penalty is not None and lay.n_r:
            cfg = self.penalty
            h = cfg.gradient_factor * cfg.mu * cfg.p * np.maximum(self._excess(y, x), 0.0) ** (cfg.p - 1.0)
            gx[:, :, self.inst.removable] += h
            g[:lay.n_r] -= (lay.big_m[:, :, None] * h).sum(axis=(0, 1))
        return g

    def line_derivative(self, v: np.ndarray, d: np.ndarray):
        """``gamma -> d/dgamma objective(v + gamma d)`` evaluated on aggregates."""
        lay = self.layout
        inst = self.inst
        agg = lay.x(v).sum(axis=1)
        dagg = lay.x(d).sum(axis=1)
        lin = float(inst.prices @ lay.y(d))
        probs = lay.probabilities
        beta_part = float(sum(probs[s] * (inst.beta @ dagg[s]) for s in range(lay.n_s)))
        nonlinear = inst.gamma > 0
        gam = (inst.gamma * inst.rho)[nonlinear]
        rho1 = inst.rho[nonlinear] - 1.0
        a_nl = agg[:, nonlinear]
        d_nl = dagg[:, nonlinear]
        w_nl = probs[:, None] * d_nl * gam[None, :]
        pen = None
        if self.penalty is not None and lay.n_r:
            u = self._excess(lay.y(v), lay.x(v)).ravel()
            du = self._excess(lay.y(d), lay.x(d)).ravel()
            mask = du != 0
            u, du = u[mask], du[mask]
            cfg = self.penalty
            pen = (u, du, cfg.mu * cfg.p, cfg.p - 1.0)

        def derivative(gamma: float) -> float:
            val = lin + beta_part
            if w_nl.size:
                val += float((w_nl * np.maximum(a_nl + gamma * d_nl, 0.0) ** rho1).sum())
            if pen is not None:
                u0, du0, c, q = pen
                val += c * float((np.maximum(u0 + gamma * du0, 0.0) ** q * du0).sum())
            return val

        return derivative

    def violation(self, v: np.ndarray, design: np.ndarray | None = None) -> float:
        lay = self.layout
        design = np.round(lay.y(v)) if design is None else design
        closed = self.inst.removable[np.asarray(design) < 0.5]
        if len(closed) == 0:
            return 0.0
        return float(lay.x(v)[:, :, closed].max(initial=0.0))
