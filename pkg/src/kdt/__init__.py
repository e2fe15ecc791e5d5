"""Kinetic Delaunay triangulation of moving points on quad-tree blocks."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .geometry import Point, Sign, diameter, in_circle, orient2d, squared_distance
from .kinetics import (
    KineticConfig,
    KineticState,
    MovePlan,
    StepMetrics,
    mindistance,
    n_spread,
    nth_nearest_distance,
    select_moves,
    simulate,
    step,
    update_d,
)
from .oracle import brute_force_delaunay, exact_sign_oracle, oracle_edge_set
from .partition import (
    QuadTree,
    find_block,
    needs_repartition,
    neighbor_links,
    quad_tree_division,
    transfer_point,
)
from .runtime import ConflictReport, detect_conflicts, reduce_min, run_phase
from .triangulation import DiffLog, LocateResult, Triangulation, ValidationReport, build_initial
