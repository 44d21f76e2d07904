from __future__ import annotations

import json

import numpy as np
import pytest

from netdesign.instances import (InstanceSpec, base_instance, build_instance, dumps_instance,
                                 instance_from_dict, instance_to_dict, load_instance, sample_scenarios,
                                 save_instance)
from netdesign.shortest_path import InfeasibleRouting
from netdesign.tntp import RawTntpNetwork, RawTripTable, TntpLink, parse_network, parse_trips
from oracles import path_distance


def link(a, b, fft, cap=1.0, bb=0.0, toll=0.0, length=0.0):
    return TntpLink(a, b, cap, length, fft, bb, 4.0, 0.0, toll, 1)


def toy():
    """Four linear edges; 4 units from 1 to 3 take the length-2 path, so the equilibrium cost is 8."""
    net = RawTntpNetwork(3, 1, [link(1, 2, 1.0), link(2, 3, 1.0), link(1, 3, 5.0), link(3, 1, 1.0)])
    return net, RawTripTable(3, {(1, 3): 4.0})


def test_toy_prices_equal_cost_over_edges():
    net, trips = toy()
    base = base_instance(net, trips)
    assert 4.0 * path_distance(base, base.beta, 0, 2) == 8.0
    inst = build_instance(net, trips, InstanceSpec(0.5, seed=3))
    assert inst.num_removable == 2
    assert np.allclose(inst.prices, 2.0, rtol=1e-9)


def test_nothing_to_remove():
    net, trips = toy()
    with pytest.raises(ValueError, match="selects no arc"):
        build_instance(net, trips, InstanceSpec(0.2))


def test_spec_validation():
    with pytest.raises(ValueError):
        InstanceSpec(0.0)
    with pytest.raises(ValueError):
        InstanceSpec(0.1, scenario_low=1.2, scenario_high=1.1)


def test_unroutable_network_rejected():
    net = RawTntpNetwork(3, 1, [link(1, 2, 1.0), link(3, 2, 1.0)])
    with pytest.raises(InfeasibleRouting):
        build_instance(net, RawTripTable(3, {(1, 3): 1.0}), InstanceSpec(0.5))


def grid_net(k=15, extra=0):
    """Bidirectional k x k grid: 4k(k-1) arcs."""
    links = []
    node = lambda r, c: r * k + c + 1  # noqa: E731
    for r in range(k):
        for c in range(k):
            for dr, dc in ((0, 1), (1, 0)):
                if r + dr < k and c + dc < k:
                    links.append(link(node(r, c), node(r + dr, c + dc), 1.0 + 0.01 * len(links), 50.0, 0.15))
                    links.append(link(node(r + dr, c + dc), node(r, c), 1.0 + 0.01 * len(links), 50.0, 0.15))
    return RawTntpNetwork(k * k, 1, links)


def test_removal_count_is_floored():
    net = grid_net(k=16)  # 960 arcs
    net.links = net.links[:900]
    trips = RawTripTable(256, {(1, 2): 1.0, (2, 1): 1.0})
    inst = build_instance(net, trips, InstanceSpec(0.01, seed=5))
    assert inst.num_edges == 900 and inst.num_removable == 9
    assert len(set(inst.removable.tolist())) == 9 and inst.removable.max() < 900


def test_same_seed_same_instance():
    net = grid_net(k=6)
    trips = RawTripTable(36, {(1, 36): 10.0, (6, 31): 5.0})
    spec = InstanceSpec(0.1, scenario_count=3, seed=11)
    a, b = build_instance(net, trips, spec), build_instance(net, trips, spec)
    assert dumps_instance(a) == dumps_instance(b)
    c = build_instance(net, trips, InstanceSpec(0.1, scenario_count=3, seed=12))
    assert dumps_instance(a) != dumps_instance(c)


def test_scenarios_unit_range_copy_base():
    trips = RawTripTable(3, {(1, 2): 2.0, (2, 3): 1.5})
    for t in sample_scenarios(trips, InstanceSpec(0.1, scenario_count=4, scenario_low=1.0, scenario_high=1.0)):
        assert t.demands == trips.demands


def test_scenarios_deterministic_and_bounded():
    trips = RawTripTable(4, {(1, 2): 2.0, (2, 3): 1.5, (4, 1): 7.0})
    spec = InstanceSpec(0.1, scenario_count=20, seed=9)
    a, b = sample_scenarios(trips, spec), sample_scenarios(trips, spec)
    assert [t.demands for t in a] == [t.demands for t in b]
    for t in a:
        for k, v in t.demands.items():
            assert trips.demands[k] * 1.0 <= v <= trips.demands[k] * 1.1
    with pytest.raises(ValueError):
        sample_scenarios(trips, InstanceSpec(0.1, scenario_count=0))


def test_scenario_factor_mean():
    trips = RawTripTable(2, {(1, 2): 1.0})
    draws = [t.demands[(1, 2)] for t in sample_scenarios(trips, InstanceSpec(0.1, scenario_count=10_000))]
    assert 1.0495 <= float(np.mean(draws)) <= 1.0505


def test_toll_and_distance_fold_into_constant():
    net = RawTntpNetwork(2, 1, [link(1, 2, 1.0, toll=2.0, length=3.0)])
    inst = base_instance(net, RawTripTable(2, {(1, 2): 1.0}), InstanceSpec(0.5, toll_factor=0.5, distance_factor=2.0))
    assert inst.constant.tolist() == [0.5 * 2.0 + 2.0 * 3.0]
    assert inst.alpha.tolist() == inst.constant.tolist()


def test_diagonal_demand_dropped():
    net, _ = toy()
    inst = base_instance(net, RawTripTable(3, {(1, 3): 4.0, (2, 2): 9.0}))
    assert inst.demand.sum() == 4.0


def test_instance_file_round_trip(tmp_path):
    net = grid_net(k=4)
    trips = RawTripTable(16, {(1, 16): 3.0, (4, 13): 2.0})
    inst = build_instance(net, trips, InstanceSpec(0.1, scenario_count=2, seed=1))
    path = tmp_path / "inst.json"
    save_instance(inst, path, {"note": "x"})
    again = load_instance(path)
    assert dumps_instance(again) == dumps_instance(inst)
    data = json.loads(path.read_text())
    assert data["big_m"] == inst.big_m.tolist() and data["meta"] == {"note": "x"}
    data["big_m"][0] += 1.0
    with pytest.raises(ValueError, match="big-M"):
        instance_from_dict(data)
    with pytest.raises(ValueError, match="schema"):
        instance_from_dict({**instance_to_dict(inst), "schema": "other"})


def test_fixture_files_build():
    from pathlib import Path
    here = Path(__file__).parent / "data" / "fixtures"
    net = parse_network((here / "tiny_net.tntp").read_text())
    trips = parse_trips((here / "tiny_trips.tntp").read_text())
    inst = build_instance(net, trips, InstanceSpec(0.2, seed=2))
    assert inst.num_removable == 1 and inst.num_nodes == 4
    assert inst.demand.sum() == pytest.approx(61.25)
