"""Local and minibatch Adam / SGDM with clipping and periodic averaging.

The cluster state holds ``(M, d)`` arrays for iterates ``x``, first moments
``u`` and second moments ``v``. A local round runs ``K`` steps on every
worker and then averages all three arrays. A minibatch round averages the
``K*M`` gradients drawn at the shared iterate and takes one step.

Both variants draw the gradient noise for worker ``m``, round ``r``, step
``k`` from ``RngStream(seed, m, r, k)``, so the two see the same random
numbers, and every result is independent of how the worker loops are
scheduled.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .clipping import ClipRule, clip
from .corevec import DiagPrecond, as_vector, ordered_mean
from .diagnostics import TrajectoryRecord, TrajectoryRecorder
from .noise import GradientOracle, NoiseBank, RngStream, adversarial_noise_appendix_d

__all__ = [
    "Family",
    "OptimizerConfig",
    "WorkerState",
    "ClusterState",
    "NonFiniteStateError",
    "local_step",
    "communicate",
    "minibatch_step",
    "run",
    "appendix_d_experiment",
]


class Family(str, Enum):
    LOCAL_ADAM = "LocalAdam"
    LOCAL_SGDM = "LocalSGDM"
    MINIBATCH_ADAM = "MinibatchAdam"
    MINIBATCH_SGDM = "MinibatchSGDM"
    PLAIN_SGD = "PlainSGD"

    @property
    def is_local(self) -> bool:
        return self in (Family.LOCAL_ADAM, Family.LOCAL_SGDM, Family.PLAIN_SGD)

    @property
    def is_minibatch(self) -> bool:
        return not self.is_local


class NonFiniteStateError(FloatingPointError):
    def __init__(self, r: int, k: int, m: int):
        super().__init__(f"non-finite optimizer state at round {r}, step {k}, worker {m}")
        self.r, self.k, self.m = r, k, m


@dataclass(frozen=True)
class OptimizerConfig:
    """Hyper-parameters and topology.

    SGDM families and ``PlainSGD`` ignore ``beta2`` and ``lam`` (they run the
    Adam step with ``beta2 = 1`` and ``lam = 1``, which leaves ``v`` at zero
    and the denominator at one); ``PlainSGD`` additionally uses ``beta1 = 0``.

    ``clip_placement`` only matters for minibatch families: ``"average"``
    clips the averaged gradient once, ``"each"`` clips every gradient
    before averaging.
    """

    eta: float
    beta1: float = 0.9
    beta2: float = 0.999
    lam: float = 1.0
    clip: ClipRule = field(default_factory=ClipRule)
    M: int = 1
    K: int = 1
    R: int = 1
    family: Family = Family.LOCAL_ADAM
    clip_placement: str = "average"

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if not self.eta >= 0 or not math.isfinite(self.eta):
            raise ValueError("eta must be finite and nonnegative")
        if not 0.0 <= self.beta1 < 1.0:
            raise ValueError("beta1 must lie in [0, 1)")
        if not 0.0 < self.beta2 <= 1.0:
            raise ValueError("beta2 must lie in (0, 1]")
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        for name in ("M", "K", "R"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.clip_placement not in ("average", "each"):
            raise ValueError("clip_placement must be 'average' or 'each'")

    @property
    def effective(self) -> tuple[float, float, float]:
        """``(beta1, beta2, lam)`` actually used by the step."""
        if self.family is Family.PLAIN_SGD:
            return 0.0, 1.0, 1.0
        if self.family in (Family.LOCAL_SGDM, Family.MINIBATCH_SGDM):
            return self.beta1, 1.0, 1.0
        return self.beta1, self.beta2, self.lam

    @property
    def grad_calls_per_worker(self) -> int:
        return self.K * self.R

    def echo(self) -> dict:
        b1, b2, lam = self.effective
        return {
            "family": self.family.value, "eta": self.eta, "beta1": b1, "beta2": b2,
            "lam": lam, "clip_mode": self.clip.mode.value, "rho": self.clip.rho,
            "M": self.M, "K": self.K, "R": self.R,
        }


@dataclass
class WorkerState:
    x: np.ndarray
    u: np.ndarray
    v: np.ndarray


@dataclass
class ClusterState:
    """States of all workers as stacked ``(M, d)`` arrays."""

    x: np.ndarray
    u: np.ndarray
    v: np.ndarray
    round: int = 0
    averaged_v: np.ndarray | None = None

    @classmethod
    def initial(cls, x0, M: int) -> "ClusterState":
        x0 = as_vector(x0, name="x0")
        zeros = np.zeros((M, x0.size))
        return cls(np.tile(x0, (M, 1)), zeros.copy(), zeros.copy(), 0, np.zeros(x0.size))

    @property
    def M(self) -> int:
        return self.x.shape[0]

    @property
    def workers(self) -> list[WorkerState]:
        return [WorkerState(self.x[m], self.u[m], self.v[m]) for m in range(self.M)]

    def preconditioner(self, lam: float) -> DiagPrecond:
        """``H_r = diag(sqrt(v_r + lam^2))`` from the last averaged second moment."""
        return DiagPrecond.from_second_moment(self.averaged_v, lam)


def local_step(w: WorkerState, ghat, cfg: OptimizerConfig) -> WorkerState:
    """One Adam-style update from an already clipped gradient.

    ``u <- b1 u + (1-b1) g``, ``v <- b2 v + (1-b2) g*g``,
    ``x <- x - eta / sqrt(v + lam^2) * u``; no bias correction. Works on
    single vectors or on ``(M, d)`` stacks.
    """
    b1, b2, lam = cfg.effective
    # overflow is caught by the finiteness check in the caller
    with np.errstate(over="ignore", invalid="ignore"):
        u = b1 * w.u + (1.0 - b1) * ghat
        v = b2 * w.v + (1.0 - b2) * (ghat * ghat)
        x = w.x - cfg.eta / np.sqrt(v + lam * lam) * u
    return WorkerState(x, u, v)


def communicate(cs: ClusterState) -> ClusterState:
    """Replace ``x``, ``u``, ``v`` on every worker by their worker means."""
    M = cs.M
    x, u, v = (np.tile(ordered_mean(a, axis=0), (M, 1)) for a in (cs.x, cs.u, cs.v))
    return ClusterState(x, u, v, cs.round, v[0].copy())


def _check_finite(state: WorkerState, r: int, k: int, m_offset: int = 0):
    for arr in (state.x, state.u, state.v):
        if not np.all(np.isfinite(arr)):
            bad = np.atleast_2d(~np.isfinite(arr)).any(axis=-1)
            raise NonFiniteStateError(r, k, m_offset + int(np.argmax(bad)))


def _round_noise(bank: NoiseBank, r: int, workers, K: int) -> np.ndarray:
    """Noise for the given workers in round ``r``, shape ``(K, len(workers), d)``."""
    out = np.zeros((K, len(workers), bank.oracle.dim))
    if bank.oracle.noise.is_zero:
        return out
    for j, m in enumerate(workers):
        for k in range(K):
            out[k, j] = bank.draw(m, r, k)
    return out


def _local_round_block(cs: ClusterState, bank: NoiseBank, cfg, workers):
    """Run K local steps for a block of workers; returns iterates ``(K+1, B, d)`` and final ``(u, v)``."""
    idx = list(workers)
    oracle = bank.oracle
    noise = _round_noise(bank, cs.round, idx, cfg.K)
    w = WorkerState(cs.x[idx].copy(), cs.u[idx].copy(), cs.v[idx].copy())
    xs = np.empty((cfg.K + 1, len(idx), oracle.dim))
    xs[0] = w.x
    for k in range(cfg.K):
        g = oracle.objective.grad(w.x) + noise[k]
        w = local_step(w, clip(g, cfg.clip), cfg)
        _check_finite(w, cs.round, k, idx[0])
        xs[k + 1] = w.x
    return xs, w.u, w.v


def _local_round(cs: ClusterState, bank: NoiseBank, cfg, parallel):
    M = cfg.M
    if parallel is None:
        return _local_round_block(cs, bank, cfg, range(M))
    blocks = [[m] for m in range(M)]
    if parallel <= 1:
        parts = [_local_round_block(cs, bank, cfg, b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            parts = list(pool.map(lambda b: _local_round_block(cs, bank, cfg, b), blocks))
    xs = np.concatenate([p[0] for p in parts], axis=1)
    u = np.concatenate([p[1] for p in parts], axis=0)
    v = np.concatenate([p[2] for p in parts], axis=0)
    return xs, u, v


def minibatch_step(cs: ClusterState, oracle: GradientOracle, cfg: OptimizerConfig,
                   seed: int, bank: NoiseBank | None = None) -> ClusterState:
    """One minibatch round: average ``K*M`` gradients at the shared iterate, then step.

    Gradients are drawn from streams ``(seed, m, r, k)`` and summed in
    worker-major order. The averaged gradient is clipped once (or each
    gradient is clipped first when ``cfg.clip_placement == "each"``).
    """
    if not cfg.family.is_minibatch:
        raise ValueError(f"{cfg.family.value} is not a minibatch family")
    M, K = cfg.M, cfg.K
    x = cs.x[0]
    gx = oracle.objective.grad(x)
    if bank is None:
        bank = NoiseBank(oracle, seed)
    noise = _round_noise(bank, cs.round, range(M), K)
    acc = np.zeros_like(x)
    for m in range(M):
        for k in range(K):
            g = gx + noise[k, m]
            acc += clip(g, cfg.clip) if cfg.clip_placement == "each" else g
    gbar = acc / (M * K)
    if cfg.clip_placement == "average":
        gbar = clip(gbar, cfg.clip)
    w = local_step(WorkerState(x, cs.u[0], cs.v[0]), gbar, cfg)
    _check_finite(w, cs.round, 0)
    tile = lambda a: np.tile(a, (cs.M, 1))  # noqa: E731
    return ClusterState(tile(w.x), tile(w.u), tile(w.v), cs.round + 1, w.v.copy())


def run(cfg: OptimizerConfig, oracle: GradientOracle, x0, seed: int,
        recorder: TrajectoryRecorder | None = None, parallel: int | None = None,
        bank: NoiseBank | None = None) -> TrajectoryRecord:
    """Execute ``R`` rounds and return the recorded trajectory.

    Parameters
    ----------
    bank
        Optional noise cache for ``(oracle, seed)``; pass the same bank to
        several runs to avoid regenerating identical draws.
    parallel
        ``None`` advances all workers together as array rows. An integer
        runs each worker's local loop separately on that many threads.
        Every choice gives bit-identical results.

    Raises
    ------
    NonFiniteStateError
        As soon as any state entry becomes NaN or infinite.
    """
    x0 = as_vector(x0, oracle.dim, name="x0")
    if bank is None:
        bank = NoiseBank(oracle, seed)
    elif bank.oracle is not oracle or bank.seed != seed:
        raise ValueError("noise bank belongs to a different oracle or seed")
    if recorder is None:
        recorder = TrajectoryRecorder(oracle.objective)
    b1, _, lam = cfg.effective
    local = cfg.family.is_local
    recorder.start(seed=seed, family=cfg.family.value, K=cfg.K if local else 1, R=cfg.R,
                   beta1=b1, lam=lam, config=cfg.echo())
    cs = ClusterState.initial(x0, cfg.M)
    for r in range(cfg.R):
        cs.round = r
        H = cs.preconditioner(lam)
        if local:
            xs, u, v = _local_round(cs, bank, cfg, parallel)
            recorder.record_round(r, xs, H)
            cs = communicate(ClusterState(xs[-1], u, v, r))
        else:
            start = cs.x[:1].copy()
            cs = minibatch_step(cs, oracle, cfg, seed, bank)
            recorder.record_round(r, np.stack([start, cs.x[:1]]), H)
    return recorder.finish(cs.x[0])


def appendix_d_experiment(T: int, eta: float, L: float, sigma: float, eps: float,
                          alpha: float, x0: float, n_trials: int, seed: int,
                          clip_rule: ClipRule | None = None) -> float:
    """Fraction of SGD runs on ``f = L x^2 / 2`` ending with ``f(x_T) >= eps``.

    Noise is the adversarial last-step spike; ``sigma = 0`` turns it off.
    Trials are simulated together, one random draw per trial at each step.
    """
    if T < 1 or n_trials < 1:
        raise ValueError("T and n_trials must be positive")
    if not 0 < eta <= 1.0 / L:
        raise ValueError(f"need 0 < eta <= 1/L, got eta={eta}, L={L}")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    rule = clip_rule or ClipRule.off()
    x = np.full(n_trials, float(x0))
    for t in range(T):
        g = L * x
        if sigma > 0:
            xi = adversarial_noise_appendix_d(t, T, x0, eta, L, sigma, eps, alpha,
                                              RngStream(seed, 0, 0, t), size=n_trials)
            g = g - sigma * xi
        if rule.active:
            g = clip(g[:, None], rule)[:, 0]
        x = x - eta * g
    return float(np.mean(0.5 * L * x * x >= eps))
