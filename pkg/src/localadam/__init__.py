"""Simulator for distributed Adam and SGDM with local updates and clipping."""

from .clipping import ClipMode, ClipRule, clip, clip_bias_check
from .corevec import DiagPrecond, weighted_norm_sq
from .diagnostics import (
    TrajectoryRecord,
    TrajectoryRecorder,
    aggregate_quantile,
    consensus_error,
    moreau_grad,
)
from .noise import GradientOracle, NoiseModel, RngStream
from .objectives import GemanMcClure, Quadratic, counter_example, prox
from .optim import Family, OptimizerConfig, appendix_d_experiment, run

__version__ = "0.1.0"

__all__ = [
    "ClipMode", "ClipRule", "DiagPrecond", "Family", "GemanMcClure", "GradientOracle",
    "NoiseModel", "OptimizerConfig", "Quadratic", "RngStream", "TrajectoryRecord",
    "TrajectoryRecorder", "aggregate_quantile", "appendix_d_experiment", "clip",
    "clip_bias_check", "consensus_error", "counter_example", "moreau_grad", "prox", "run",
    "weighted_norm_sq",
]
