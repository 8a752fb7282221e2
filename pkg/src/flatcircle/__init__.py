"""flatcircle: dynamical partitions, Cantor conjugacies and quasi-symmetry
experiments for circle maps with a flat interval."""

from .analysis import (
    CrossRatioSummary,
    QsReport,
    TransitionDistortionReport,
    TransitionEntry,
    cross_ratio_bound_suite,
    estimate_Q,
    qs_ratio,
    transition_distortion,
    transition_report,
)
from .conjugacy import (
    Code,
    ConjugacyEvaluator,
    NestedConjugacyEvaluator,
    NestedIntervalSystem,
    ReflectionSkeleton,
    conjugacy_defect,
    extend_cantor_homeomorphism,
)
from .errors import FlatCircleError
from .mapcore import (
    CircleInterval,
    CircleMap,
    CirclePoint,
    derivative,
    eval_lift,
    invert_branch,
    make_flat_map,
    pull_back_interval,
)
from .partition import (
    BackwardChain,
    DynamicalPartition,
    GeometryReport,
    PartitionElement,
    backward_chain,
    build_partition,
    comparability_stats,
    cross_ratio,
    cross_ratio_chain,
    scaling_tau,
    verify_refinement,
)
from .rotation import (
    BoundedTypeCertificate,
    ContinuedFraction,
    cf_target_value,
    continued_fraction,
    first_return_times,
    is_bounded_type,
    return_sides,
    rotation_number,
    tune_parameter,
)

__version__ = "0.1.0"

__all__ = [
    "BackwardChain",
    "BoundedTypeCertificate",
    "CircleInterval",
    "CircleMap",
    "CirclePoint",
    "Code",
    "ConjugacyEvaluator",
    "ContinuedFraction",
    "CrossRatioSummary",
    "DynamicalPartition",
    "FlatCircleError",
    "GeometryReport",
    "NestedConjugacyEvaluator",
    "NestedIntervalSystem",
    "PartitionElement",
    "QsReport",
    "ReflectionSkeleton",
    "TransitionDistortionReport",
    "TransitionEntry",
    "backward_chain",
    "build_partition",
    "cf_target_value",
    "comparability_stats",
    "conjugacy_defect",
    "continued_fraction",
    "cross_ratio",
    "cross_ratio_bound_suite",
    "cross_ratio_chain",
    "derivative",
    "estimate_Q",
    "eval_lift",
    "extend_cantor_homeomorphism",
    "first_return_times",
    "invert_branch",
    "is_bounded_type",
    "make_flat_map",
    "pull_back_interval",
    "qs_ratio",
    "return_sides",
    "rotation_number",
    "scaling_tau",
    "transition_distortion",
    "transition_report",
    "tune_parameter",
    "verify_refinement",
]
