"""Small random network design instances for tests and desk-scale benchmarks."""

from __future__ import annotations

import numpy as np

from .instances import equilibrium_price
from .network import NetworkInstance, Scenario


def random_network(rng: np.random.Generator, num_nodes: int = 8, extra_edges: int = 10,
                   num_zones: int | None = None, pairs: int = 4, power: float = 4.0,
                   b: float = 0.15) -> NetworkInstance:
    """A directed ring plus random chords with BPR costs and random OD demand.

    The ring keeps every node reachable, so the intact network always routes.
    """
    n = num_nodes
    edges = {(i, (i + 1) % n) for i in range(n)}
    candidates = [(i, j) for i in range(n) for j in range(n) if i != j and (i, j) not in edges]
    picks = rng.choice(len(candidates), size=min(extra_edges, len(candidates)), replace=False)
    edges = sorted(edges | {candidates[k] for k in picks})
    m = len(edges)
    zones = n if num_zones is None else num_zones
    od = [(o, z) for o in range(zones) for z in range(zones) if o != z]
    chosen = sorted(od[k] for k in rng.choice(len(od), size=min(pairs, len(od)), replace=False))
    origins = sorted({o for o, _ in chosen})
    dests = sorted({z for _, z in chosen})
    demand = np.zeros((len(origins), len(dests)))
    for o, z in chosen:
        demand[origins.index(o), dests.index(z)] = rng.uniform(0.5, 3.0)
    return NetworkInstance(
        num_nodes=n,
        tail=[e[0] for e in edges], head=[e[1] for e in edges],
        free_flow_time=rng.uniform(1.0, 5.0, size=m), b=np.full(m, b),
        capacity=rng.uniform(0.5, 3.0, size=m), power=np.full(m, power),
        constant=np.zeros(m), origins=origins, destinations=dests, demand=demand,
    )


def random_instance(seed: int, *, num_nodes: int = 8, extra_edges: int = 10, removable: int = 4,
                    pairs: int = 4, scenarios: int = 0, price_factor: tuple[float, float] = (0.5, 2.0),
                    equilibrium_prices: bool = True, low: float = 1.0, high: float = 1.1) -> NetworkInstance:
    """Random instance with ``removable`` arcs drawn from all edges.

    Prices are the intact equilibrium cost over ``|E|`` times a uniform factor
    in ``price_factor`` (a plain uniform draw in that range when
    ``equilibrium_prices`` is False). Scenarios scale the nominal demand by
    uniform draws in ``[low, high]``.
    """
    rng = np.random.default_rng(seed)
    base = random_network(rng, num_nodes, extra_edges, pairs=pairs)
    k = min(removable, base.num_edges)
    arcs = np.sort(rng.choice(base.num_edges, size=k, replace=False))
    scale = equilibrium_price(base, 1e-6) if equilibrium_prices else 1.0
    prices = scale * rng.uniform(*price_factor, size=k)
    inst = base.with_design_space(arcs, prices)
    if scenarios:
        mask = inst.demand > 0
        scen = []
        for _ in range(scenarios):
            d = inst.demand.copy()
            d[mask] *= rng.uniform(low, high, size=int(mask.sum()))
            scen.append(Scenario(1.0 / scenarios, d))
        inst = inst.with_scenarios(scen)
    return inst


def random_weights(rng: np.random.Generator, inst: NetworkInstance, low: float = 0.1,
                   high: float = 5.0) -> np.ndarray:
    return rng.uniform(low, high, size=inst.num_edges)
