"""Per-step measurements along optimizer trajectories.

For every step ``t = r*K + k`` a :class:`TrajectoryRecorder` stores

* the mean iterate ``xbar_t`` and the mean momentum-corrected point ``zbar_t``
  (``z = (x_t - beta1 x_{t-1}) / (1 - beta1)``, with the previous mean
  iterate substituted across a communication boundary),
* ``f(zbar_t) - f_star`` and ``||grad f(zbar_t)||^2``,
* ``||grad f_gamma^H(zbar_t)||^2_{H^{-1}}`` where ``H = H_r`` is the
  preconditioner frozen at the start of round ``r``,
* the consensus error of the worker iterates produced by local step ``k``
  (before any averaging).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corevec import DiagPrecond, ordered_mean, weighted_norm_sq
from .objectives import Objective, prox

__all__ = [
    "z_update",
    "ZTracker",
    "consensus_error",
    "moreau_grad",
    "moreau_envelope",
    "TrajectoryRecord",
    "TrajectoryRecorder",
    "aggregate_quantile",
    "nearest_rank",
    "METRICS",
]

METRICS = ("f_gap", "consensus_err", "moreau_grad_nsq", "grad_nsq")


def z_update(x_new, x_prev, beta1: float) -> np.ndarray:
    """``(x_new - beta1 * x_prev) / (1 - beta1)``.

    Pass the worker's own previous iterate inside a round and the previous
    mean iterate across a round boundary.
    """
    if not 0.0 <= beta1 < 1.0:
        raise ValueError(f"beta1 must lie in [0, 1), got {beta1}")
    x_new = np.asarray(x_new, dtype=np.float64)
    if beta1 == 0.0:
        return x_new.copy()
    return (x_new - beta1 * np.asarray(x_prev, dtype=np.float64)) / (1.0 - beta1)


class ZTracker:
    """Builds per-worker ``z`` values for one round of iterates at a time."""

    def __init__(self, beta1: float):
        if not 0.0 <= beta1 < 1.0:
            raise ValueError(f"beta1 must lie in [0, 1), got {beta1}")
        self.beta1 = beta1
        self.boundary_mean: np.ndarray | None = None

    def round_z(self, xs: np.ndarray) -> np.ndarray:
        """Per-worker ``z`` for steps ``0..K-1`` of a round.

        ``xs`` has shape ``(K+1, M, d)``: the round-start iterate followed by
        the iterates after each local step. Returns shape ``(K, M, d)``.
        """
        K = xs.shape[0] - 1
        z = np.empty_like(xs[:K])
        if self.boundary_mean is None:
            z[0] = xs[0]
        else:
            z[0] = z_update(xs[0], self.boundary_mean, self.beta1)
        if K > 1:
            z[1:] = z_update(xs[1:K], xs[0:K - 1], self.beta1)
        self.boundary_mean = ordered_mean(xs[K - 1], axis=0)
        return z


def _pairwise_max(xs: np.ndarray) -> np.ndarray:
    # xs: (..., M, d) -> (...)
    diff = xs[..., :, None, :] - xs[..., None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1)).max(axis=(-1, -2))


def consensus_error(workers) -> float:
    """Largest Euclidean distance between any two worker iterates.

    Accepts a sequence of objects with an ``x`` attribute, a sequence of
    vectors, or an ``(M, d)`` array.
    """
    if isinstance(workers, np.ndarray):
        xs = workers
    else:
        xs = np.stack([np.asarray(getattr(w, "x", w), dtype=np.float64) for w in workers])
    if xs.shape[0] < 1:
        raise ValueError("need at least one worker")
    return float(_pairwise_max(xs))


def moreau_grad(obj: Objective, z, H: DiagPrecond, gamma: float, tol: float = 1e-8):
    """Gradient of the Moreau envelope ``f_gamma^H`` at ``z`` and its ``H^{-1}`` norm squared.

    Returns ``(H (z - y) / gamma, ||H (z - y) / gamma||^2_{H^{-1}})`` where
    ``y`` is the prox point. ``z`` may be a ``(..., d)`` stack.
    """
    z = np.asarray(z, dtype=np.float64)
    y = prox(obj, z, H, gamma, tol)
    g = H.diag * (z - y) / gamma
    return g, weighted_norm_sq(g, H, inverse=True)


def moreau_envelope(obj: Objective, z, H: DiagPrecond, gamma: float, tol: float = 1e-8):
    """Value ``min_y f(y) + ||z - y||_H^2 / (2 gamma)``."""
    z = np.asarray(z, dtype=np.float64)
    y = prox(obj, z, H, gamma, tol)
    return obj.value(y) + weighted_norm_sq(z - y, H) / (2.0 * gamma)


@dataclass
class TrajectoryRecord:
    """Diagnostics for one run. Arrays are indexed by step ``t = r*K + k``."""

    seed: int
    family: str
    K: int
    R: int
    xbar: np.ndarray
    zbar: np.ndarray
    f_gap: np.ndarray
    consensus_err: np.ndarray
    moreau_grad_nsq: np.ndarray
    grad_nsq: np.ndarray
    final_x: np.ndarray
    config: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return self.K * self.R

    def metric(self, name: str) -> np.ndarray:
        if name not in METRICS:
            raise ValueError(f"unknown metric {name!r}; choose from {METRICS}")
        return getattr(self, name)

    def running_average(self, name: str) -> np.ndarray:
        m = self.metric(name)
        return np.cumsum(m) / np.arange(1, m.size + 1)

    def best_gap(self) -> float:
        return float(self.f_gap.min())

    def xhat(self, eta: float, mu: float) -> np.ndarray:
        """Exponentially weighted average of ``zbar`` with weights ``(1 - eta mu / 2)^(T - j)``.

        Weights are normalized to sum to one; with ``mu = 0`` this is the
        plain average.
        """
        T = self.zbar.shape[0]
        q = 1.0 - eta * mu / 2.0
        if not 0.0 < q <= 1.0:
            raise ValueError("need 0 < eta * mu < 2")
        logw = (T - np.arange(T)) * math.log(q)
        w = np.exp(logw - logw.max())
        w /= w.sum()
        return w @ self.zbar

    def rows(self):
        """CSV rows ``(seed, family, r, k, f_gap, consensus_err, moreau_grad_nsq, grad_nsq)``."""
        for t in range(self.T):
            r, k = divmod(t, self.K)
            yield (self.seed, self.family, r, k, float(self.f_gap[t]),
                   float(self.consensus_err[t]), float(self.moreau_grad_nsq[t]),
                   float(self.grad_nsq[t]))


class TrajectoryRecorder:
    """Collects per-step diagnostics; the optimizer calls :meth:`record_round` at each barrier.

    Parameters
    ----------
    objective
        Objective whose gap, gradient and Moreau envelope are measured.
    gamma
        Moreau parameter. ``None`` means ``lam / L`` with the run's ``lam``.
    tol
        Prox tolerance (unused for quadratics, which have a closed form).
    moreau
        Set False to skip the Moreau column (filled with NaN).
    """

    def __init__(self, objective: Objective, gamma: float | None = None,
                 tol: float = 1e-8, moreau: bool = True):
        self.objective = objective
        self.gamma = gamma
        self.tol = tol
        self.moreau = moreau

    def start(self, *, seed: int, family: str, K: int, R: int, beta1: float,
              lam: float, config: dict | None = None):
        self._seed, self._family, self._K, self._R = seed, family, K, R
        self._gamma = self.gamma if self.gamma is not None else lam / self.objective.L
        self._z = ZTracker(beta1)
        self._config = dict(config or {})
        self._chunks: dict[str, list] = {k: [] for k in ("xbar", "zbar", *METRICS)}

    def record_round(self, r: int, xs: np.ndarray, H: DiagPrecond):
        """Store entries ``(r, 0..K-1)`` from the round's iterates ``xs`` of shape ``(K+1, M, d)``."""
        obj = self.objective
        K = xs.shape[0] - 1
        z = self._z.round_z(xs)
        zbar = ordered_mean(z, axis=1)
        xbar = ordered_mean(xs[:K], axis=1)
        g = obj.grad(zbar)
        c = self._chunks
        c["xbar"].append(xbar)
        c["zbar"].append(zbar)
        c["f_gap"].append(np.atleast_1d(obj.gap(zbar)))
        c["grad_nsq"].append((g * g).sum(axis=-1))
        c["consensus_err"].append(_pairwise_max(xs[1:]))
        if self.moreau:
            _, nsq = moreau_grad(obj, zbar, H, self._gamma, self.tol)
            c["moreau_grad_nsq"].append(np.atleast_1d(nsq))
        else:
            c["moreau_grad_nsq"].append(np.full(K, np.nan))

    def finish(self, final_x: np.ndarray) -> TrajectoryRecord:
        c = {k: np.concatenate(v) for k, v in self._chunks.items()}
        return TrajectoryRecord(
            seed=self._seed, family=self._family, K=self._K, R=self._R,
            final_x=np.asarray(final_x, dtype=np.float64).copy(), config=self._config, **c,
        )


def nearest_rank(values: np.ndarray, q: float, axis: int = 0) -> np.ndarray:
    """Nearest-rank ``q``-quantile: the ``ceil(q n)``-th smallest value along ``axis``."""
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie in (0, 1)")
    values = np.sort(np.asarray(values, dtype=np.float64), axis=axis)
    n = values.shape[axis]
    rank = max(math.ceil(q * n), 1)
    return np.take(values, rank - 1, axis=axis)


def aggregate_quantile(records: Sequence[TrajectoryRecord], metric: str, q: float) -> np.ndarray:
    """Per-step nearest-rank ``q``-quantile of ``metric`` across seeds."""
    if len(records) < 2:
        raise ValueError("need at least two records")
    shape = (records[0].K, records[0].R)
    if any((rec.K, rec.R) != shape for rec in records):
        raise ValueError("records have mismatched (K, R)")
    return nearest_rank(np.stack([rec.metric(metric) for rec in records]), q, axis=0)
