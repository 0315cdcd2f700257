"""Inverse optimization: learn the cost vector behind expert decisions.

Given (signal, decision) pairs from an agent assumed to minimize an
unknown linear-in-features cost over a known feasible set, this package
recovers a cost vector by:

* geometry of the consistent cone (feasibility point, max-margin center,
  small-dimension enclosing-cone axis),
* convex training of a distance-augmented suboptimality loss (one-shot
  epigraph programs, a mixed-integer dual reformulation), and
* stochastic approximate mirror descent for large instances.

Everything runs on embedded dense LP/QP solvers; a seeded benchmark
harness and a CLI (``invopt gen|train|eval|bench``) reproduce the
experiment families end to end.
"""

from ._kernels import backend
from .core import (EXACT, BinaryLpOracle, Budget, DistanceFn, FeatureMap,
                   IODataset, IOInstance, MixedDistance, MixedIntegerOracle,
                   Response, Signal, binary_signal, check_cost_vector,
                   check_feasible, distance, enumerate_binary_lp,
                   evaluate_hypothesis, identity_features, linear_mi_oracle,
                   load_dataset, mixed_signal, save_dataset)
from .geometry import (ConeDescription, IncenterResult, angle, build_cone,
                       circumcenter_desk, export_cone_csv, extreme_rays,
                       feasibility_program, incenter)
from .losses import (LossReport, SubgradientReport, asl, asl_hinge,
                     empirical_loss, gpl, subgradient, suboptimality)
from .reformulate import (MixedIntegerInstance, TrainerSolution,
                          asl_tu_binary, train_asl_enumerated,
                          train_asl_mixed_integer_lp,
                          train_suboptimality_facets, tu_inner_rewrite)
from .samd import (LiftedProblem, MirrorMap, RateProblem, SamdConfig,
                   SamdTrace, StepRule, lift_l1_to_simplex, samd_train,
                   trace_to_csv, verify_rate)
from .solvers import (Duals, LinearProgramSpec, LpResult, QpResult, QpSpec,
                      argmax_finite, argmax_mixed_integer, solve_lp,
                      solve_qp)

__version__ = "0.1.0"

__all__ = [
    "backend", "EXACT", "BinaryLpOracle", "Budget", "DistanceFn",
    "FeatureMap", "IODataset", "IOInstance", "MixedDistance",
    "MixedIntegerOracle", "Response", "Signal", "binary_signal",
    "check_cost_vector", "check_feasible", "distance",
    "enumerate_binary_lp", "evaluate_hypothesis", "identity_features",
    "linear_mi_oracle", "load_dataset", "mixed_signal", "save_dataset",
    "ConeDescription", "IncenterResult", "angle", "build_cone",
    "circumcenter_desk", "export_cone_csv", "extreme_rays",
    "feasibility_program", "incenter", "LossReport", "SubgradientReport",
    "asl", "asl_hinge", "empirical_loss", "gpl", "subgradient",
    "suboptimality", "MixedIntegerInstance", "TrainerSolution",
    "asl_tu_binary", "train_asl_enumerated", "train_asl_mixed_integer_lp",
    "train_suboptimality_facets", "tu_inner_rewrite", "LiftedProblem",
    "MirrorMap", "RateProblem", "SamdConfig", "SamdTrace", "StepRule",
    "lift_l1_to_simplex", "samd_train", "trace_to_csv", "verify_rate",
    "Duals", "LinearProgramSpec", "LpResult", "QpResult", "QpSpec",
    "argmax_finite", "argmax_mixed_integer", "solve_lp", "solve_qp",
]
