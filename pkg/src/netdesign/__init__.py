"""Network design for traffic assignment solved by branch-and-bound over Frank-Wolfe relaxations."""

from __future__ import annotations

from .assignment import AssignmentResult, solve_traffic_assignment
from .bnb import BnbResult, EventLog, Infeasible, solve
from .bpcg import ActiveSet, SolveReport, bpcg_solve
from .ifw import DesignBounds, IfwSolution, solve_ifw_lmo
from .instances import InstanceSpec, build_instance, load_instance, save_instance
from .network import FlowState, NetworkInstance, Scenario
from .problem import DesignProblem, PenaltyConfig
from .shortest_path import InfeasibleRouting, all_or_nothing, dijkstra
from .tntp import TntpFormatError, read_network, read_trips

__version__ = "0.1.0"

__all__ = [
    "ActiveSet", "AssignmentResult", "BnbResult", "DesignBounds", "DesignProblem", "EventLog",
    "FlowState", "IfwSolution", "Infeasible", "InfeasibleRouting", "InstanceSpec",
    "NetworkInstance", "PenaltyConfig", "Scenario", "SolveReport", "TntpFormatError",
    "all_or_nothing", "bpcg_solve", "build_instance", "dijkstra", "load_instance",
    "read_network", "read_trips", "save_instance", "solve", "solve_ifw_lmo",
    "solve_traffic_assignment",
]
