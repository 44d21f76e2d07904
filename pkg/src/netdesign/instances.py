"""Network design instances from TNTP data, scenario sampling, and instance JSON files."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .assignment import solve_traffic_assignment
from .network import NetworkInstance, Scenario
from .shortest_path import first_unroutable
from .tntp import RawTntpNetwork, RawTripTable

SCHEMA = "netdesign-instance/1"


@dataclass(frozen=True)
class InstanceSpec:
    removal_fraction: float
    scenario_count: int = 0
    scenario_low: float = 1.0
    scenario_high: float = 1.1
    seed: int = 0
    toll_factor: float = 0.0
    distance_factor: float = 0.0
    ta_tol: float = 1e-6

    def __post_init__(self):
        if not 0 < self.removal_fraction < 1:
            raise ValueError("removal fraction must lie in (0, 1)")
        if self.scenario_count < 0:
            raise ValueError("scenario count must be nonnegative")
        if self.scenario_low > self.scenario_high:
            raise ValueError("scenario_low must not exceed scenario_high")
        if self.toll_factor < 0 or self.distance_factor < 0:
            raise ValueError("toll and distance factors must be nonnegative")

    def streams(self) -> tuple[np.random.Generator, np.random.Generator]:
        """Independent generators for arc removal and scenario sampling."""
        removal, scenarios = np.random.SeedSequence(self.seed).spawn(2)
        return np.random.default_rng(removal), np.random.default_rng(scenarios)


def sample_scenarios(base: RawTripTable, spec: InstanceSpec) -> list[RawTripTable]:
    """``spec.scenario_count`` tables, each demand scaled by its own uniform draw."""
    if spec.scenario_count < 1:
        raise ValueError("scenario sampling needs scenario_count >= 1")
    _, rng = spec.streams()
    pairs = sorted(base.demands)
    out = []
    for _ in range(spec.scenario_count):
        factors = rng.uniform(spec.scenario_low, spec.scenario_high, size=len(pairs))
        if spec.scenario_low == spec.scenario_high:
            factors[:] = spec.scenario_low
        out.append(RawTripTable(base.zone_count, {p: base.demands[p] * f for p, f in zip(pairs, factors)}))
    return out


def _demand_matrix(trips: RawTripTable, origins, destinations) -> np.ndarray:
    oi = {o: i for i, o in enumerate(origins)}
    zi = {z: k for k, z in enumerate(destinations)}
    d = np.zeros((len(origins), len(destinations)))
    for (o, z), v in trips.demands.items():
        if o != z and v > 0:
            d[oi[o], zi[z]] += v
    return d


def base_instance(net: RawTntpNetwork, trips: RawTripTable, spec: InstanceSpec | None = None) -> NetworkInstance:
    """The intact network (no removable arcs) with nominal demand; node ids become 0-based."""
    tf = spec.toll_factor if spec else 0.0
    df = spec.distance_factor if spec else 0.0
    links = net.links
    pairs = [(o, z) for (o, z), v in trips.demands.items() if o != z and v > 0]
    if not pairs:
        raise ValueError("trip table has no positive off-diagonal demand")
    for o, z in pairs:
        if max(o, z) > net.node_count:
            raise ValueError(f"zone {max(o, z)} is not a node of the network")
    origins = sorted({o for o, _ in pairs})
    destinations = sorted({z for _, z in pairs})
    return NetworkInstance(
        num_nodes=net.node_count,
        tail=[l.init_node - 1 for l in links],
        head=[l.term_node - 1 for l in links],
        free_flow_time=[l.free_flow_time for l in links],
        b=[l.b for l in links],
        capacity=[l.capacity for l in links],
        power=[l.power for l in links],
        constant=[tf * l.toll + df * l.length for l in links],
        origins=[o - 1 for o in origins],
        destinations=[z - 1 for z in destinations],
        demand=_demand_matrix(trips, origins, destinations),
        node_labels=tuple(range(1, net.node_count + 1)),
    )


def equilibrium_price(inst: NetworkInstance, tol: float = 1e-6) -> float:
    """Equilibrium cost of the intact network divided by the number of edges."""
    ta = solve_traffic_assignment(inst, tol=tol)
    return ta.objective / inst.num_edges


def build_instance(net: RawTntpNetwork, trips: RawTripTable, spec: InstanceSpec) -> NetworkInstance:
    """Draw the removable arcs, price them, and attach sampled scenarios.

    ``floor(fraction * |E|)`` arcs are drawn uniformly without replacement;
    every one costs the intact equilibrium cost over ``|E|``. Raises
    ValueError when no arc would be drawn and InfeasibleRouting when the
    intact network cannot serve the demand.
    """
    base = base_instance(net, trips, spec)
    n_e = base.num_edges
    k = math.floor(spec.removal_fraction * n_e)
    if k < 1:
        raise ValueError(f"removal fraction {spec.removal_fraction} selects no arc out of {n_e}")
    bad = first_unroutable(base)
    if bad is not None:
        raise bad
    price = equilibrium_price(base, spec.ta_tol)
    # with every removable arc open the network is the intact one, so any draw is feasible
    removal_rng, _ = spec.streams()
    removable = np.sort(removal_rng.choice(n_e, size=k, replace=False))
    inst = base.with_design_space(removable, np.full(k, price))
    if spec.scenario_count >= 1:
        tables = sample_scenarios(trips, spec)
        origins = [o + 1 for o in inst.origins.tolist()]
        dests = [z + 1 for z in inst.destinations.tolist()]
        p = 1.0 / spec.scenario_count
        inst = inst.with_scenarios([Scenario(p, _demand_matrix(t, origins, dests)) for t in tables])
    return inst


def resample_scenarios(inst: NetworkInstance, count: int, seed: int, low: float = 1.0,
                       high: float = 1.1) -> NetworkInstance:
    """Replace the scenarios of ``inst`` by ``count`` scaled copies of its nominal demand."""
    if count == 0:
        return inst.with_scenarios(())
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[1])
    mask = inst.demand > 0
    scen = []
    for _ in range(count):
        factors = rng.uniform(low, high, size=int(mask.sum()))
        d = inst.demand.copy()
        d[mask] *= factors
        scen.append(Scenario(1.0 / count, d))
    return inst.with_scenarios(scen)


def instance_to_dict(inst: NetworkInstance, meta: dict | None = None) -> dict:
    return {
        "schema": SCHEMA,
        "meta": meta or {},
        "num_nodes": inst.num_nodes,
        "node_labels": list(inst.node_labels) if inst.node_labels else None,
        "edges": {
            "tail": inst.tail.tolist(), "head": inst.head.tolist(),
            "free_flow_time": inst.free_flow_time.tolist(), "b": inst.b.tolist(),
            "capacity": inst.capacity.tolist(), "power": inst.power.tolist(),
            "constant": inst.constant.tolist(),
        },
        "origins": inst.origins.tolist(),
        "destinations": inst.destinations.tolist(),
        "demand": inst.demand.tolist(),
        "big_m": inst.big_m.tolist(),
        "removable": inst.removable.tolist(),
        "prices": inst.prices.tolist(),
        "scenarios": [{"probability": s.probability, "demand": s.demand.tolist(),
                       "big_m": s.big_m.tolist()} for s in inst.scenarios],
    }


def instance_from_dict(data: dict) -> NetworkInstance:
    if data.get("schema") != SCHEMA:
        raise ValueError(f"unsupported instance schema {data.get('schema')!r}, expected {SCHEMA}")
    e = data["edges"]
    labels = data.get("node_labels")
    inst = NetworkInstance(
        data["num_nodes"], e["tail"], e["head"], e["free_flow_time"], e["b"], e["capacity"],
        e["power"], e["constant"], data["origins"], data["destinations"], data["demand"],
        data["removable"], data["prices"],
        tuple(Scenario(s["probability"], np.asarray(s["demand"], dtype=float)) for s in data["scenarios"]),
        tuple(labels) if labels else None)
    if "big_m" in data and not np.allclose(inst.big_m, data["big_m"], rtol=1e-12, atol=0):
        raise ValueError("stored big-M disagrees with the demand column sums")
    return inst


def dumps_instance(inst: NetworkInstance, meta: dict | None = None) -> str:
    return json.dumps(instance_to_dict(inst, meta), sort_keys=True, separators=(",", ":")) + "\n"


def save_instance(inst: NetworkInstance, path, meta: dict | None = None) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_instance(inst, meta))


def load_instance(path) -> NetworkInstance:
    with open(path) as fh:
        return instance_from_dict(json.load(fh))


def spec_meta(spec: InstanceSpec) -> dict:
    return asdict(spec)
