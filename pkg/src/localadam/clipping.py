"""Gradient clipping and a Monte-Carlo check of the clipped-mean bias bound."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np

from .noise import NoiseModel, RngStream

__all__ = ["ClipMode", "ClipRule", "clip", "clip_bias_check", "ClipBias", "HypothesisError"]


class ClipMode(str, Enum):
    COORDINATE = "coordinate"
    GLOBAL = "global"
    OFF = "off"


class HypothesisError(ValueError):
    """The preconditions of a bound do not hold for the requested parameters."""


@dataclass(frozen=True)
class ClipRule:
    mode: ClipMode = ClipMode.COORDINATE
    rho: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "mode", ClipMode(self.mode))
        rho = float(self.rho)
        if not rho > 0:
            raise ValueError(f"clip threshold must be positive, got {rho}")
        object.__setattr__(self, "rho", rho)

    @classmethod
    def off(cls) -> "ClipRule":
        return cls(ClipMode.OFF, math.inf)

    @property
    def active(self) -> bool:
        return self.mode is not ClipMode.OFF and math.isfinite(self.rho)


def clip(g, rule: ClipRule) -> np.ndarray:
    """Clip ``g`` (shape ``(..., d)``) according to ``rule``.

    Coordinate mode truncates each entry to ``[-rho, rho]``. Global mode
    rescales each row by ``min(1, rho / ||row||)``.
    """
    g = np.asarray(g, dtype=np.float64)
    if not rule.active:
        return g
    if rule.mode is ClipMode.COORDINATE:
        return np.clip(g, -rule.rho, rule.rho)
    norm = np.sqrt((g * g).sum(axis=-1, keepdims=True))
    with np.errstate(divide="ignore"):
        factor = np.where(norm > rule.rho, rule.rho / norm, 1.0)
    return g * factor


class ClipBias(NamedTuple):
    bias_estimate: float
    bound: float
    stderr: float


def clip_bias_check(model: NoiseModel, center: float, rho: float, n_draws: int,
                    stream: RngStream) -> ClipBias:
    """Estimate ``|E clip(X, rho) - center|`` for ``X = center + noise``.

    The bound returned is ``2^alpha sigma^alpha / rho^(alpha-1)``. The
    estimator averages ``clip(X) - X``; it has the same mean as
    ``clip(X) - center`` because the noise is zero-mean, and is exactly zero
    on draws that are not clipped.

    Raises
    ------
    HypothesisError
        Unless ``|center| <= rho / 2`` and ``rho >= 3 sigma``.
    """
    if model.dim != 1:
        raise ValueError("clip_bias_check needs a scalar noise model")
    sigma = float(model.sigma[0])
    alpha = model.alpha
    if abs(center) > rho / 2:
        raise HypothesisError(f"|center| <= rho/2 violated: |{center}| > {rho / 2}")
    if rho < 3 * sigma:
        raise HypothesisError(f"rho >= 3 sigma violated: {rho} < {3 * sigma}")
    bound = (2.0 * sigma) ** alpha / rho ** (alpha - 1)
    if model.is_zero:
        return ClipBias(0.0, bound, 0.0)
    x = center + model.sample(stream.generator(), n_draws)[:, 0]
    diff = np.clip(x, -rho, rho) - x
    mean = float(diff.mean())
    se = float(diff.std(ddof=1) / math.sqrt(n_draws))
    return ClipBias(abs(mean), bound, se)
