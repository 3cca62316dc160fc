"""Discrete extremal length of discrete boxes and cube tilings of geometric boxes."""

from .boxcore import (
    BoxError,
    DiscreteBox,
    GeometricBox,
    Metric,
    PerturbedMetric,
    ValidationReport,
    random_box,
    rotate_box,
    validate_box,
)
from .elsolver import (
    ConvergenceError,
    PathCapExceeded,
    ShortestPathStructure,
    SolverResult,
    UnreachableError,
    brute_force_extremal,
    extremal_metric,
    metric_volume,
    normalized_length,
    path_length,
    perturbation_derivative,
    perturbed_metric,
    shortest_paths,
)
from .cubetile import (
    CubeTiling,
    GeneratorParams,
    RealizationError,
    contact_graph,
    discrete_line,
    face_tiling,
    generate_tiling,
    grid_tiling,
    realize_square_tiling,
    refine_cube,
    validate_tiling,
)
from .analysis import (
    ConditionReport,
    check_necessary,
    check_schramm,
    check_tip,
    verify_extremality_chain,
)

__version__ = "0.1.0"
