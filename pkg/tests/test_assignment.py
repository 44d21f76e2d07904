from __future__ import annotations

import numpy as np
import pytest

from netdesign.assignment import solve_traffic_assignment
from netdesign.network import gradient
from netdesign.shortest_path import InfeasibleRouting
from oracles import make_instance, merge_instance


def test_single_edge_fixed_demand():
    inst = make_instance(2, [(0, 1)], [0], [1], [[1.0]], b=[0.15])
    res = solve_traffic_assignment(inst, tol=1e-10)
    assert res.flow.aggregate[0] == 1.0
    assert res.objective == pytest.approx(1.03, rel=1e-12)


def test_parallel_edges_split_evenly():
    inst = make_instance(2, [(0, 1), (0, 1)], [0], [1], [[2.0]], b=[0.15, 0.15])
    res = solve_traffic_assignment(inst, tol=1e-12)
    assert np.allclose(res.flow.aggregate, [1.0, 1.0], atol=1e-5)
    assert np.allclose(gradient(inst, res.flow), [1.15, 1.15], atol=1e-5)


def test_merge_network_values():
    inst = merge_instance(1.0)
    closed = solve_traffic_assignment(inst, closed=inst.closed_mask(np.zeros(1)), tol=1e-10)
    opened = solve_traffic_assignment(inst, tol=1e-10)
    assert closed.objective == pytest.approx(8.0, rel=1e-12)
    assert opened.objective == pytest.approx(4.75, rel=1e-12)
    # two units on the shared edge cost more than twice one unit
    assert 2.0 + 2.0 ** 4 / 4 > 2 * (1.0 + 1.0 / 4)


def test_disconnected_demand_raises():
    inst = make_instance(3, [(0, 1), (1, 2)], [0], [2], [[1.0]])
    with pytest.raises(InfeasibleRouting):
        solve_traffic_assignment(inst, closed=[True, False])


def test_report_is_certified():
    inst = merge_instance(1.0)
    res = solve_traffic_assignment(inst, tol=1e-9)
    assert res.report.status == "optimal"
    assert res.report.lower_bound <= res.objective
    assert res.objective - res.report.lower_bound <= 1e-9 * res.objective
