"""Gilbert-Steiner branched transport: costs, flows, exhaustive solver and degree-4 star constructions."""

from .cost import (
    TRAPEZOID_COST,
    CostSpec,
    MeasureAtomsCost,
    PiecewiseLinearCost,
    PowerCost,
    RationalCost,
    check_subadditive,
    cost_from_dict,
    eval_cost,
    h_angle,
    verify_power_admissibility,
    verify_rational_admissibility,
)
from .counterexamples import (
    StarCertificate,
    build_simplex_star,
    build_trapezoid_star,
    perturbation_probe,
    search_simplex_masses,
)
from .errors import (
    CapExceededError,
    ConfigurationError,
    ConvergenceError,
    DegenerateAngleError,
    FlowStructureError,
    GilbertSteinerError,
    NoTriangleError,
    NotRealizable,
    NumericError,
)
from .flow import (
    Edge,
    Flow,
    Instance,
    Terminal,
    Vertex,
    branch_degrees,
    check_local_angles,
    gilbert_functional,
    normalize_flow,
    star_flow,
    validate_flow,
)
from .geometry import embed_from_distances, turning_angle_sum, weighted_fermat
from .serialize import load_instance, parse_instance
from .solver import Solution, Topology, edge_masses, enumerate_topologies, optimize_positions, solve

__all__ = [name for name in dir() if not name.startswith("_")]
