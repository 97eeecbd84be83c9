"""Configurable-precision simulator for flat-interval circle maps.

Builds monotone degree-one circle maps that are constant on a flat arc with
prescribed one-sided power behavior at its endpoints, tunes the offset to a
prescribed rotation number, measures the backward-interval geometry near the
critical value, checks the recursive decay bounds on the gap ratios, and
estimates the saddle mass of the suspension flow with logarithmic return
times.
"""

from ._precision import PrecisionExhausted, run_ladder
from .cf import (ContinuedFraction, ConvergentTable, RotationTarget,
                 closest_returns, convergents, count_in_gap, evaluate, expand,
                 orbit_order, target_from_quotients, target_from_real)
from .flatmap import (DiscontinuityError, FlatMapParams, InvalidTargetError,
                      Lift, OrbitCombinatorics, PlateauStallError,
                      PreimageGeometry, RotationBracket, build_map,
                      check_orbit_order, compare_with_rational, eval_inverse_g,
                      geometry_csv_rows, params_from_json_dict,
                      params_to_json_dict, preimage_geometry, rotation_bracket,
                      rotation_number, tune)
from .bounds import (BoundParams, BoundReport, InsufficientDataError,
                     RatioReport, SenkReport, ThetaSequence, c_of_ell,
                     measured_theta, ratio_sequence, synthetic_theta,
                     theta_step, verify_corollary, verify_proposition,
                     verify_senk_empirical)
from .suspension import (GammaDecomposition, MissingGeometryError,
                         OrbitSegment, ReturnTimeModel, gamma_csv_rows,
                         gamma_estimate, iterate_segment, occupation_times,
                         prefix_at_time, segment_csv_rows,
                         tau_mu_integral_estimate, time_average)

__version__ = "0.1.0"

__all__ = [
    "BoundParams", "BoundReport", "ContinuedFraction", "ConvergentTable",
    "DiscontinuityError", "FlatMapParams", "GammaDecomposition",
    "InsufficientDataError", "InvalidTargetError", "Lift",
    "MissingGeometryError", "OrbitCombinatorics", "OrbitSegment",
    "PlateauStallError", "PrecisionExhausted", "PreimageGeometry",
    "RatioReport", "ReturnTimeModel", "RotationBracket", "RotationTarget",
    "SenkReport", "ThetaSequence", "build_map", "c_of_ell",
    "check_orbit_order", "closest_returns", "compare_with_rational",
    "convergents", "count_in_gap", "evaluate",
    "eval_inverse_g", "expand", "gamma_csv_rows",
    "gamma_estimate", "geometry_csv_rows", "iterate_segment", "measured_theta",
    "occupation_times", "orbit_order", "params_from_json_dict",
    "params_to_json_dict", "prefix_at_time", "preimage_geometry",
    "ratio_sequence", "rotation_bracket", "rotation_number", "run_ladder",
    "segment_csv_rows", "synthetic_theta", "target_from_quotients",
    "target_from_real", "tau_mu_integral_estimate", "theta_step",
    "time_average", "tune", "verify_corollary", "verify_proposition",
    "verify_senk_empirical",
]
