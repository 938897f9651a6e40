"""Testbed for exact piecewise-affine subdifferential calculus, Goldstein
approximate-stationarity certification, and resisting-adversary experiments.
"""

from .pa_core import (
    AffineAtom,
    FunctionMeta,
    GradientPolytope,
    MaxMinFunction,
    PieceSelection,
    enumerate_pieces,
    essentially_active_gradients,
    evaluate,
    function_from_text,
    function_to_text,
    lipschitz_certificate,
    region_distance,
)
from .geometry import Polyhedron
from .subdiff import (
    StationarityCertificate,
    certify_gas,
    certify_nas,
    goldstein_generators,
    min_norm_point,
    sampled_goldstein_distance,
    segment_gap_estimate,
)
from .constructions import (
    HARDNESS_CONSTANT,
    LemmaReport,
    ResistingParams,
    RotationPlan,
    build_F,
    build_G,
    build_H,
    build_rotation,
    build_tester_f2,
    build_wedge,
    min_norm_box_constant,
    verify_lemmas,
)
from .oracle import (
    AdversaryConfig,
    GermView,
    LocalGerm,
    Transcript,
    adversary_answer,
    local_oracle,
    materialize,
)
from .algorithms import (
    RunResult,
    goldstein_conceptual,
    gradient_sampling,
    gzr_check,
    make_algorithm,
    two_query_gas_finder,
)
from .harness import ExperimentConfig, ExperimentReport, emit_results, replay_verify, run_experiment

__version__ = "0.1.0"

__all__ = [
    "AffineAtom",
    "AdversaryConfig",
    "ExperimentConfig",
    "ExperimentReport",
    "FunctionMeta",
    "GermView",
    "GradientPolytope",
    "HARDNESS_CONSTANT",
    "LemmaReport",
    "LocalGerm",
    "MaxMinFunction",
    "PieceSelection",
    "Polyhedron",
    "ResistingParams",
    "RotationPlan",
    "RunResult",
    "StationarityCertificate",
    "Transcript",
    "adversary_answer",
    "build_F",
    "build_G",
    "build_H",
    "build_rotation",
    "build_tester_f2",
    "build_wedge",
    "certify_gas",
    "certify_nas",
    "emit_results",
    "enumerate_pieces",
    "essentially_active_gradients",
    "evaluate",
    "function_from_text",
    "function_to_text",
    "goldstein_conceptual",
    "goldstein_generators",
    "gradient_sampling",
    "gzr_check",
    "lipschitz_certificate",
    "local_oracle",
    "make_algorithm",
    "materialize",
    "min_norm_box_constant",
    "min_norm_point",
    "region_distance",
    "replay_verify",
    "run_experiment",
    "sampled_goldstein_distance",
    "segment_gap_estimate",
    "two_query_gas_finder",
    "verify_lemmas",
]
