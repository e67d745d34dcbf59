"""Canned Monte-Carlo checks and the heavy-tail failure experiment."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..clipping import ClipRule, HypothesisError, clip_bias_check
from ..corevec import DiagPrecond
from ..noise import NoiseModel, RngStream, adversarial_spike
from ..objectives import GemanMcClure, Quadratic, prox
from ..optim import appendix_d_experiment

PASS, FAIL, SKIP = "pass", "fail", "hypothesis-skipped"


@dataclass(frozen=True)
class LemmaCheck:
    """One Monte-Carlo check: ``estimate <= bound + slack * stderr`` passes."""

    name: str
    params: str
    estimate: float
    bound: float
    stderr: float
    verdict: str


@dataclass
class LemmaReport:
    checks: list[LemmaCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.verdict != FAIL for c in self.checks)

    def table(self) -> str:
        head = f"{'check':<22} {'params':<34} {'estimate':>12} {'bound':>12} {'stderr':>10}  verdict"
        lines = [head, "-" * len(head)]
        for c in self.checks:
            lines.append(f"{c.name:<22} {c.params:<34} {c.estimate:>12.4e} {c.bound:>12.4e} "
                         f"{c.stderr:>10.2e}  {c.verdict}")
        return "\n".join(lines)


def _verdict(est, bound, se, slack):
    return PASS if est <= bound + slack * se else FAIL


def _mean_se(x):
    x = np.asarray(x, dtype=np.float64)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0


def clipped_bias_checks(seed: int, n_draws: int) -> list[LemmaCheck]:
    """Bias of coordinate clipping against ``(2 sigma)^alpha / rho^(alpha-1)``."""
    out = []
    cases = []
    for kind in ("three_point", "student_t"):
        for sigma in (0.5, 1.0, 2.0):
            for rho_mult in (3.0, 5.0):
                for frac in (0.0, 0.5, 1.0):
                    cases.append((kind, sigma, rho_mult * sigma, frac))
    # precondition gates: rho below 3 sigma and a zero-noise row
    cases += [("three_point", 1.0, 2.0, 0.0), ("gaussian", 0.0, 3.0, 0.5)]
    for i, (kind, sigma, rho, frac) in enumerate(cases):
        model = NoiseModel(kind, [sigma], alpha=4.0, spike=3.0, dof=6.0)
        center = frac * rho / 2
        params = f"{kind} s={sigma:g} rho={rho:g} x={center:g}"
        try:
            res = clip_bias_check(model, center, rho, n_draws, RngStream(seed, 0, 1, i))
        except HypothesisError:
            out.append(LemmaCheck("clipped_bias", params, math.nan, math.nan, math.nan, SKIP))
            continue
        out.append(LemmaCheck("clipped_bias", params, res.bias_estimate, res.bound, res.stderr,
                              _verdict(res.bias_estimate, res.bound, res.stderr, 4.0)))
    return out


def averaging_checks(seed: int, n_draws: int) -> list[LemmaCheck]:
    """Fourth moment of an average of ``M`` independent noise vectors against ``4 sigma^4 / M^2``."""
    out = []
    models = (NoiseModel("three_point", [0.5, 1.0, 0.2], spike=3.0),
              NoiseModel("student_t", [1.0, 0.3, 0.7], dof=6.0))
    for j, model in enumerate(models):
        sigma4 = float(np.sum(model.sigma**2) ** 2)
        for M in (2, 4, 8):
            draws = model.sample(RngStream(seed, M, 2, j).generator(), n_draws * M)
            mean = draws.reshape(n_draws, M, -1).mean(axis=1)
            est, se = _mean_se((mean * mean).sum(axis=1) ** 2)
            bound = 4 * sigma4 / M**2
            out.append(LemmaCheck("average_4th_moment", f"{model.kind} M={M}", est, bound, se,
                                  _verdict(est, bound, se, 5.0)))
    return out


def minibatch_scaling_checks(seed: int, n_draws: int) -> list[LemmaCheck]:
    """Second moment of batch-averaged noise shrinks at least like ``1/N``.

    The estimate is ``N E|noise_N|^2 / E|noise_1|^2``; the bound is 1.1.
    """
    out = []
    for j, kind in enumerate(("three_point", "student_t")):
        model = NoiseModel(kind, [1.0], spike=3.0, dof=6.0)
        base = None
        for N in (1, 4, 16):
            draws = model.sample(RngStream(seed, N, 3, j).generator(), n_draws * N)
            m2, se = _mean_se(draws.reshape(n_draws, N).mean(axis=1) ** 2)
            if base is None:
                base = m2
            out.append(LemmaCheck("minibatch_scaling", f"{kind} N={N}", N * m2 / base, 1.1,
                                  N * se / base, _verdict(N * m2 / base, 1.1, 0.0, 0.0)))
    return out


def moreau_identity_checks(seed: int, n_cases: int = 200) -> list[LemmaCheck]:
    """Prox optimality ``H(z - y)/gamma = grad f(y)`` on random instances in the ``gamma`` window."""
    rng = RngStream(seed, 0, 4, 0).generator()
    worst = 0.0
    for i in range(n_cases):
        d = int(rng.integers(1, 9))
        obj = GemanMcClure(rng.uniform(0.2, 2.0, d)) if i % 2 else Quadratic(rng.uniform(0.1, 2.0, d),
                                                                               rng.normal(size=d))
        lam = rng.uniform(0.2, 2.0)
        H = DiagPrecond(lam * rng.uniform(1.0, 3.0, d))
        gamma = 1.0 / rng.uniform(2 * obj.tau / lam, obj.L / lam)
        z = rng.normal(size=d) * 2
        y = prox(obj, z, H, gamma, tol=1e-10)
        worst = max(worst, float(np.linalg.norm(H.diag * (z - y) / gamma - obj.grad(y))))
    return [LemmaCheck("moreau_identity", f"{n_cases} instances", worst, 1e-6, 0.0,
                       _verdict(worst, 1e-6, 0.0, 0.0))]


def run_lemma_suite(seed: int = 0, n_draws: int = 200_000) -> LemmaReport:
    """All Monte-Carlo checks. Failures are reported, not raised."""
    if n_draws < 100_000:
        raise ValueError("n_draws must be at least 1e5")
    report = LemmaReport()
    report.checks += clipped_bias_checks(seed, n_draws)
    report.checks += averaging_checks(seed, n_draws)
    report.checks += minibatch_scaling_checks(seed, n_draws)
    report.checks += moreau_identity_checks(seed)
    return report


@dataclass(frozen=True)
class AppendixDParams:
    eps: float = 0.5
    L: float = 1.0
    eta: float = 0.5
    sigma: float = 2.0
    alpha: float = 4.0
    x0: float = 1.0
    T: int | None = None
    rho: float | None = None
    n_trials: int = 100_000
    seed: int = 0

    def horizon(self) -> int:
        """Smallest ``T >= 1`` with ``(1 - eta L)^T |x0| <= sqrt(2 eps / L)``."""
        if self.T is not None:
            return self.T
        target = math.sqrt(2 * self.eps / self.L)
        q = abs(1 - self.eta * self.L)
        T = 1
        while q**T * abs(self.x0) > target:
            T += 1
        return T


@dataclass(frozen=True)
class AppendixDReport:
    params: AppendixDParams
    T: int
    spike: float
    analytic: float
    unclipped: float
    stderr: float
    rho: float
    clipped: float

    @property
    def within_3se(self) -> bool:
        return abs(self.unclipped - self.analytic) <= 3 * self.stderr

    def text(self) -> str:
        p = self.params
        return "\n".join([
            f"f(x) = {p.L:g} x^2 / 2, x0={p.x0:g}, eta={p.eta:g}, T={self.T}, eps={p.eps:g}, "
            f"sigma={p.sigma:g}, alpha={p.alpha:g}, trials={p.n_trials}",
            f"spike A            = {self.spike:.6g}",
            f"analytic 1/A^alpha = {self.analytic:.6g}",
            f"unclipped failure  = {self.unclipped:.6g} (se {self.stderr:.2e}, "
            f"{'within' if self.within_3se else 'outside'} 3 se)",
            f"clipped failure    = {self.clipped:.6g} (rho = {self.rho:g})",
        ])


def run_appendix_d(params: AppendixDParams = AppendixDParams()) -> AppendixDReport:
    """Failure rate of plain SGD under the last-step spike, with and without clipping.

    Both runs share ``(T, eta)`` and the same random stream. ``rho`` defaults
    to ``3 sigma``.
    """
    p = params
    T = p.horizon()
    common = dict(T=T, eta=p.eta, L=p.L, sigma=p.sigma, eps=p.eps, alpha=p.alpha, x0=p.x0,
                  n_trials=p.n_trials, seed=p.seed)
    unclipped = appendix_d_experiment(**common)
    rho = p.rho if p.rho is not None else 3 * p.sigma
    clipped = appendix_d_experiment(clip_rule=ClipRule("coordinate", rho) if rho > 0 else None,
                                    **common)
    if p.sigma > 0:
        A = adversarial_spike(p.eta, p.L, p.sigma, p.eps)
        analytic = A ** -p.alpha
    else:
        A, analytic = math.nan, 0.0
    se = math.sqrt(max(analytic * (1 - analytic), 0.0) / p.n_trials)
    return AppendixDReport(p, T, A, analytic, unclipped, se, rho, clipped)
