"""Stochastic gradient oracles with certified moment bounds.

Random numbers come from counter-based Philox streams. A stream is named by
``(seed, worker, round, step)``: the Philox key holds ``(seed, worker)`` and
the starting counter holds ``(step, round)``. Streams are therefore pure
functions of their coordinates and never share mutable state, which is what
lets worker loops run in any order or on any number of threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .corevec import as_vector
from .objectives import Objective

__all__ = [
    "RngStream",
    "NoiseModel",
    "GradientOracle",
    "NoiseBank",
    "sample_gradient",
    "alpha_moment_estimate",
    "abs_moment_gaussian",
    "abs_moment_student_t",
    "adversarial_spike",
    "adversarial_noise_appendix_d",
]

_MASK64 = (1 << 64) - 1
NOISE_KINDS = ("gaussian", "three_point", "student_t")


@dataclass(frozen=True)
class RngStream:
    seed: int
    m: int = 0
    r: int = 0
    k: int = 0

    def __post_init__(self):
        if min(self.m, self.r, self.k) < 0:
            raise ValueError("stream coordinates must be nonnegative")

    def generator(self) -> np.random.Generator:
        key = (int(self.seed) & _MASK64) | (int(self.m) << 64)
        bg = np.random.Philox(key=key, counter=[0, self.k, self.r, 0])
        return np.random.Generator(bg)

    def child(self, k: int) -> "RngStream":
        return RngStream(self.seed, self.m, self.r, k)


def abs_moment_gaussian(alpha: float) -> float:
    """``E|Z|^alpha`` for a standard normal ``Z``."""
    return math.exp(alpha / 2 * math.log(2) + gammaln((alpha + 1) / 2) - 0.5 * math.log(math.pi))


def abs_moment_student_t(alpha: float, nu: float) -> float:
    """``E|T|^alpha`` for Student's t with ``nu > alpha`` degrees of freedom."""
    if nu <= alpha:
        raise ValueError(f"Student t moment of order {alpha} needs nu > alpha, got nu={nu}")
    return math.exp(
        alpha / 2 * math.log(nu)
        + gammaln((alpha + 1) / 2)
        + gammaln((nu - alpha) / 2)
        - 0.5 * math.log(math.pi)
        - gammaln(nu / 2)
    )


@dataclass(frozen=True)
class NoiseModel:
    """Additive zero-mean noise with ``E|noise_i|^alpha <= sigma_i^alpha``.

    Kinds
    -----
    gaussian
        ``s_i Z`` with ``s_i`` chosen so the alpha-moment equals ``sigma_i^alpha``.
    three_point
        ``sigma_i * xi`` where ``xi`` is ``+-spike`` with probability
        ``1 / (2 spike^alpha)`` each and 0 otherwise; the alpha-moment is
        exactly ``sigma_i^alpha``. Requires ``spike >= 1``.
    student_t
        Scaled Student t with ``dof > alpha``, normalized the same way.
    """

    kind: str
    sigma: np.ndarray
    alpha: float = 4.0
    spike: float = 2.0
    dof: float = 10.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; choose from {NOISE_KINDS}")
        sigma = as_vector(self.sigma, name="sigma")
        if np.any(sigma < 0):
            raise ValueError("sigma must be nonnegative")
        if self.alpha < 2:
            raise ValueError("alpha must be at least 2")
        if self.kind == "three_point" and self.spike < 1:
            raise ValueError("three-point spike must be >= 1 so probabilities stay valid")
        if self.kind == "student_t" and self.dof <= self.alpha:
            raise ValueError(f"student_t needs dof > alpha ({self.dof} <= {self.alpha})")
        alpha = float(self.alpha)
        if self.kind == "gaussian":
            scale = sigma / abs_moment_gaussian(alpha) ** (1 / alpha)
        elif self.kind == "student_t":
            scale = sigma / abs_moment_student_t(alpha, self.dof) ** (1 / alpha)
        else:
            scale = sigma
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "alpha", alpha)
        # per-coordinate multiplier applied to the unit base draw
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "is_zero", not np.any(sigma))

    @property
    def dim(self) -> int:
        return self.sigma.size

    @property
    def spike_prob(self) -> float:
        return 0.5 / self.spike**self.alpha

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """``n`` independent noise vectors, shape ``(n, d)``."""
        shape = (n, self.dim)
        if self.kind == "gaussian":
            base = rng.standard_normal(shape)
        elif self.kind == "student_t":
            base = rng.standard_t(self.dof, shape)
        else:
            u = rng.random(shape)
            p = self.spike_prob
            base = np.where(u < p, -self.spike, np.where(u >= 1.0 - p, self.spike, 0.0))
        return base * self.scale


@dataclass(frozen=True)
class GradientOracle:
    """Objective plus additive noise, averaged over a batch of ``batch`` draws."""

    objective: Objective
    noise: NoiseModel
    batch: int = 1

    def __post_init__(self):
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.noise.dim != self.objective.dim:
            raise ValueError("noise and objective dimensions differ")

    @property
    def dim(self) -> int:
        return self.objective.dim

    def noise_draw(self, stream: RngStream) -> np.ndarray:
        """Batch-averaged noise for one oracle call; exact zeros when sigma is zero."""
        if self.noise.is_zero:
            return np.zeros(self.dim)
        draws = self.noise.sample(stream.generator(), self.batch)
        if self.batch == 1:
            return draws[0]
        acc = draws[0].copy()
        for row in draws[1:]:
            acc += row
        return acc / self.batch


class NoiseBank:
    """Memoized oracle noise for one seed.

    Noise is additive and does not depend on the iterate, so runs that share
    an oracle and a seed (a learning-rate grid, or a local run and its
    minibatch baseline) can reuse the draws. Values are exactly those of
    ``oracle.noise_draw(RngStream(seed, m, r, k))``.
    """

    def __init__(self, oracle: GradientOracle, seed: int):
        self.oracle = oracle
        self.seed = seed
        self._cache: dict[tuple[int, int, int], np.ndarray] = {}

    def draw(self, m: int, r: int, k: int) -> np.ndarray:
        key = (m, r, k)
        out = self._cache.get(key)
        if out is None:
            out = self.oracle.noise_draw(RngStream(self.seed, m, r, k))
            self._cache[key] = out
        return out


def sample_gradient(oracle: GradientOracle, x, stream: RngStream) -> np.ndarray:
    """``grad f(x)`` plus the batch-averaged noise drawn from ``stream``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (oracle.dim,):
        raise ValueError(f"x must have shape ({oracle.dim},), got {x.shape}")
    return oracle.objective.grad(x) + oracle.noise_draw(stream)


def alpha_moment_estimate(model: NoiseModel, alpha: float, n_draws: int,
                          stream: RngStream) -> np.ndarray:
    """Monte-Carlo estimate of ``E|noise_i|^alpha`` for every coordinate."""
    if n_draws < 10_000:
        raise ValueError("n_draws must be at least 1e4")
    if model.is_zero:
        return np.zeros(model.dim)
    draws = model.sample(stream.generator(), n_draws)
    return np.mean(np.abs(draws) ** alpha, axis=0)


def adversarial_spike(eta: float, L: float, sigma: float, eps: float) -> float:
    """Spike magnitude ``A = max(2 sqrt(2 eps / L) / (eta sigma), 1)``."""
    for name, val in (("eta", eta), ("L", L), ("sigma", sigma), ("eps", eps)):
        if not val > 0:
            raise ValueError(f"{name} must be positive, got {val}")
    return max(2.0 * math.sqrt(2.0 * eps / L) / (eta * sigma), 1.0)


def adversarial_noise_appendix_d(t: int, T: int, x0: float, eta: float, L: float,
                                 sigma: float, eps: float, alpha: float,
                                 stream: RngStream, size: int | None = None):
    """Unit-scale noise ``xi_t`` of the one-dimensional heavy-tail counterexample.

    The stochastic gradient is ``L x_t - sigma * xi_t``. ``xi_t`` is zero
    except at the last step ``t = T - 1`` and only when plain gradient descent
    would already have reached the target (``(1 - eta L)^T |x0| <=
    sqrt(2 eps / L)``). Then it is ``+-A`` with probability ``1/(2 A^alpha)``
    each. ``size`` draws a vector of independent copies.
    """
    if T < 1 or not 0 <= t < T:
        raise ValueError("need 0 <= t < T")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    A = adversarial_spike(eta, L, sigma, eps)
    zero = 0.0 if size is None else np.zeros(size)
    if t < T - 1 or abs(1.0 - eta * L) ** T * abs(x0) > math.sqrt(2.0 * eps / L):
        return zero
    p = 0.5 / A**alpha
    u = stream.generator().random(size)
    xi = np.where(u < p, -A, np.where(u >= 1.0 - p, A, 0.0))
    return float(xi) if size is None else xi
