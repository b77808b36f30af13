"""Conformal prediction under unknown subpopulation shifts.

Provides score functions, weighted threshold selection, domain-classifier
driven calibration (per-point and batch), similarity-weighted calibration
without domain labels, recall-targeted risk control, and a seeded Monte
Carlo harness for coverage evaluation across shifted test environments.
"""

from shiftcal.quantile import (
    GroupedCalibrationSet,
    ThresholdRule,
    WeightedPointMasses,
    group_weighted_threshold,
    max_threshold,
    per_domain_thresholds,
    standard_cp_threshold,
    weighted_pointmass_quantile,
)
from shiftcal.conformal import (
    FlatCalibrationSet,
    algorithm1_threshold,
    algorithm2_threshold,
    algorithm3_threshold,
    build_prediction_set,
    risk_control_threshold,
)

__all__ = [
    "GroupedCalibrationSet",
    "ThresholdRule",
    "WeightedPointMasses",
    "FlatCalibrationSet",
    "standard_cp_threshold",
    "per_domain_thresholds",
    "max_threshold",
    "group_weighted_threshold",
    "weighted_pointmass_quantile",
    "algorithm1_threshold",
    "algorithm2_threshold",
    "algorithm3_threshold",
    "risk_control_threshold",
    "build_prediction_set",
]

__version__ = "0.1.0"
