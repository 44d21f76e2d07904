from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from netdesign.benders import (BRIDGE, FEASIBILITY, OPTIMALITY, Cut, CutPool, DualValues, dual_subproblem,
                               infeasibility_certificates, make_bridge_cut, make_feasibility_cut,
                               make_optimality_cut, solve_benders_lmo, solve_master)
from netdesign.ifw import DesignBounds, solve_ifw_lmo
from netdesign.shortest_path import all_or_nothing, dijkstra, routing_cost
from netdesign.synthetic import random_instance, random_weights
from oracles import PathTable, all_designs, brute_force_lmo, make_instance

PATH3 = [(0, 1), (1, 2), (2, 3)]


def test_open_unique_path_duals():
    inst = make_instance(4, PATH3, [0], [3], [[2.0]], removable=[1], prices=[1.0])
    duals = dual_subproblem(inst, np.array([1.0, 2.0, 4.0]), np.ones(1))
    assert isinstance(duals, DualValues)
    assert duals.r[0, 0] == 7.0 and np.all(duals.s == 0)
    cut = make_optimality_cut(duals)
    assert cut.rhs == 14.0 and cut.coeffs == {}
    assert not cut.is_satisfied(np.ones(1), eta=13.9) and cut.is_satisfied(np.ones(1), eta=14.0)


def test_zero_demand_cut_is_vacuous():
    inst = make_instance(4, PATH3, [0], [3], [[0.0]], removable=[1], prices=[1.0])
    cut = make_optimality_cut(dual_subproblem(inst, np.ones(3), np.ones(1)))
    assert cut.rhs == 0.0 and cut.is_satisfied(np.zeros(1), eta=0.0)


def test_closing_only_path_gives_certificate():
    inst = make_instance(4, PATH3, [0], [3], [[1.0]], removable=[1], prices=[1.0])
    cert = dual_subproblem(inst, np.ones(3), np.zeros(1))
    assert cert.origin == 0 and cert.destination == 3 and cert.reachable == frozenset({0, 1})


def test_two_node_bridge_cut():
    inst = make_instance(2, [(0, 1)], [0], [1], [[1.0]], removable=[0], prices=[1.0])
    (cert,) = infeasibility_certificates(inst, np.zeros(1))
    cut = make_bridge_cut(inst, cert)
    assert cut.kind == BRIDGE and cut.coeffs == {0: 1.0} and cut.rhs == 1.0
    assert not cut.is_satisfied(np.zeros(1)) and cut.is_satisfied(np.ones(1))


def test_permanent_frontier_arc_gives_no_cut():
    inst = make_instance(3, [(0, 1), (1, 2), (0, 2)], [0], [2], [[1.0]], removable=[1, 2], prices=[1, 1])
    cert = infeasibility_certificates(inst, np.zeros(2))[0]
    assert cert.reachable == frozenset({0, 1})
    # the certificate's reachable set {0} only would have the permanent arc 0 on its frontier
    from netdesign.benders import InfeasibilityCertificate
    assert make_bridge_cut(inst, InfeasibilityCertificate(0, 2, frozenset({0}), np.zeros(2))) is None


def test_cut_shape_checks():
    with pytest.raises(ValueError):
        Cut(BRIDGE, {0: 2.0}, 1.0)
    with pytest.raises(ValueError):
        Cut(OPTIMALITY, {0: 1.0}, 1.0, includes_eta=False)


@given(st.integers(0, 10_000))
def test_duals_equal_dijkstra_distances(seed):
    inst = random_instance(seed % 40, removable=4)
    rng = np.random.default_rng(seed)
    w = random_weights(rng, inst)
    y = rng.integers(0, 2, 4).astype(float)
    duals = dual_subproblem(inst, w, y)
    if not isinstance(duals, DualValues):
        return
    closed = inst.closed_mask(y)
    for i, o in enumerate(inst.origins):
        dist = dijkstra(inst, w, o, closed).dist
        for k, z in enumerate(inst.destinations):
            if inst.demand[i, k] > 0:
                assert duals.r[i, k] == pytest.approx(dist[z], rel=1e-12)
    flow = all_or_nothing(inst, w, closed)
    assert duals.value == pytest.approx(routing_cost(w, flow), rel=1e-12)


@given(st.integers(0, 10_000))
def test_optimality_cuts_valid_for_every_design(seed):
    inst = random_instance(seed % 40, num_nodes=7, extra_edges=9, removable=5)
    rng = np.random.default_rng(seed)
    w = random_weights(rng, inst)
    table = PathTable(inst)
    designs = [y for y in all_designs(5) if table.feasible([inst.demand], y)]
    y0 = designs[rng.integers(len(designs))]
    cut = make_optimality_cut(dual_subproblem(inst, w, y0))
    # tight where generated, a lower bound everywhere else
    assert cut.lhs(y0, table.routing_value(w, inst.demand, y0)) == pytest.approx(cut.rhs, rel=1e-12)
    for y in designs:
        assert cut.is_satisfied(y, table.routing_value(w, inst.demand, y))


def test_all_open_cut_is_tight():
    inst = random_instance(11, removable=4)
    w = random_weights(np.random.default_rng(11), inst)
    value = PathTable(inst).routing_value(w, inst.demand, np.ones(4))
    cut = make_optimality_cut(dual_subproblem(inst, w, np.ones(4)))
    assert cut.rhs == pytest.approx(value, rel=1e-12)
    assert cut.lhs(np.ones(4), value) == pytest.approx(cut.rhs, rel=1e-12)


@given(st.integers(0, 10_000))
def test_feasibility_and_bridge_cuts_valid_and_separating(seed):
    inst = random_instance(seed % 40, num_nodes=7, extra_edges=6, removable=6)
    rng = np.random.default_rng(seed)
    table = PathTable(inst)
    feasible = [y for y in all_designs(6) if table.feasible([inst.demand], y)]
    infeasible = [y for y in all_designs(6) if not table.feasible([inst.demand], y)]
    if not infeasible:
        return
    y0 = infeasible[rng.integers(len(infeasible))]
    cuts = make_feasibility_cut(inst, y0)
    for steps in (1, 2, 3):
        for cert in infeasibility_certificates(inst, y0):
            cut = make_bridge_cut(inst, cert, steps)
            if cut is not None:
                cuts.append(cut)
    assert any(c.kind == FEASIBILITY for c in cuts)
    for cut in cuts:
        assert not cut.is_satisfied(y0)
        for y in feasible:
            assert cut.is_satisfied(y)


@given(st.integers(0, 10_000))
def test_master_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = 5
    prices = rng.uniform(-1, 3, n)
    cuts = [Cut(OPTIMALITY, {j: float(rng.uniform(0, 4)) for j in range(n) if rng.random() < 0.6},
                float(rng.uniform(0, 10)), True) for _ in range(4)]
    cuts.append(Cut(BRIDGE, {0: 1.0, 3: 1.0}, 1.0))
    bounds = DesignBounds.free(n).fix(int(rng.integers(n)), int(rng.integers(2)))
    best = math.inf
    for y in all_designs(n, bounds):
        if all(c.is_satisfied(y) for c in cuts if not c.includes_eta):
            eta = max([0.0] + [c.rhs - c.lhs(y) for c in cuts if c.includes_eta])
            best = min(best, float(prices @ y) + eta)
    out = solve_master(prices, cuts, bounds)
    if math.isinf(best):
        assert out is None
    else:
        assert out[2] == pytest.approx(best, abs=1e-9)


def test_no_removable_arcs():
    inst = random_instance(2, removable=0)
    w = random_weights(np.random.default_rng(2), inst)
    sol = solve_benders_lmo(inst, w, np.zeros(0))
    assert sol.stats["iterations"] == 1
    assert sol.value == pytest.approx(routing_cost(w, all_or_nothing(inst, w)), rel=1e-12)


@given(st.integers(0, 10_000), st.booleans())
def test_converges_to_ifw_value(seed, unit_rule):
    inst = random_instance(seed % 60, num_nodes=7, extra_edges=8, removable=1 + seed % 7)
    rng = np.random.default_rng(seed)
    w = random_weights(rng, inst)
    ifw = solve_ifw_lmo(inst, w, inst.prices)
    sol = solve_benders_lmo(inst, w, inst.prices, dual_rule="unit" if unit_rule else "lp")
    if not unit_rule:
        assert sol.exact
        assert sol.value == pytest.approx(ifw.value, abs=1e-6)
    else:
        # unit arc duals can cut off designs; it never reports better than optimal
        assert sol.value >= ifw.value - 1e-6


@given(st.integers(0, 10_000))
def test_multi_cut_matches_single_cut(seed):
    inst = random_instance(seed % 40, removable=5, scenarios=3)
    rng = np.random.default_rng(seed)
    blocks = [(s.probability * random_weights(rng, inst), s.demand) for s in inst.scenarios]
    single = solve_benders_lmo(inst, None, inst.prices, blocks=blocks)
    multi = solve_benders_lmo(inst, None, inst.prices, blocks=blocks, multi_cut=True)
    oracle, _ = brute_force_lmo(inst, blocks, inst.prices)
    assert single.value == pytest.approx(oracle, abs=1e-6)
    assert multi.value == pytest.approx(oracle, abs=1e-6)


def test_pool_warm_start():
    for seed in range(10):
        inst = random_instance(seed, removable=6)
        w = random_weights(np.random.default_rng(seed), inst)
        pool = CutPool()
        cold = solve_benders_lmo(inst, w, inst.prices, pool=pool)
        kept = pool.copy()
        warm = solve_benders_lmo(inst, w, inst.prices, pool=kept)
        assert warm.value == pytest.approx(cold.value, abs=1e-9)
        assert warm.stats["iterations"] <= cold.stats["iterations"]
        assert len(kept) >= len(pool)
        # feasibility and bridge cuts carry over to other objectives; optimality cuts do not
        assert all(not c.includes_eta for c in pool.active("other"))


def test_pool_deduplicates():
    cut = Cut(BRIDGE, {1: 1.0}, 1.0)
    pool = CutPool([cut])
    assert not pool.add(Cut(BRIDGE, {1: 1.0}, 1.0, iteration=5))
    assert len(pool) == 1 and '"kind": "bridge"' in pool.to_json()
