"""Synthetic test objectives with known constants, and their proximal maps.

Each objective exposes ``value`` and ``grad`` that act on the last axis, so
a ``(..., d)`` stack of points is evaluated in one call. The constants
``L`` (smoothness), ``mu`` (strong convexity), ``tau`` (weak convexity),
``f_star`` and ``x_star`` are attributes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .corevec import DiagPrecond, as_vector

__all__ = [
    "Objective",
    "Quadratic",
    "GemanMcClure",
    "counter_example",
    "prox",
    "ProxError",
    "geman_mcclure_curvature_floor",
]


class ProxError(RuntimeError):
    """The inner prox solver hit its iteration cap."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class Objective:
    kind: str = "abstract"
    dim: int
    L: float
    mu: float = 0.0
    tau: float = 0.0
    f_star: float = 0.0
    x_star: np.ndarray | None = None

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 0 or x.shape[-1] != self.dim:
            raise ValueError(f"expected points of dimension {self.dim}, got shape {x.shape}")
        return x

    def value(self, x):
        raise NotImplementedError

    def grad(self, x) -> np.ndarray:
        raise NotImplementedError

    def gap(self, x):
        """``f(x) - f_star``."""
        return self.value(x) - self.f_star

    def params(self) -> dict:
        """Parameters sufficient to rebuild the objective (used by config files)."""
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Quadratic(Objective):
    """Separable quadratic ``f(x) = 0.5 * sum_i a_i (x_i - b_i)^2``.

    Curvatures ``a_i`` must be nonnegative; ``mu = min a`` and ``L = max a``.
    """

    a: np.ndarray
    b: np.ndarray | None = None
    kind: str = field(default="quadratic")

    def __post_init__(self):
        a = as_vector(self.a, name="a")
        if np.any(a < 0):
            raise ValueError("quadratic curvatures must be nonnegative")
        if a.max() <= 0:
            raise ValueError("at least one curvature must be positive")
        b = np.zeros_like(a) if self.b is None else as_vector(self.b, a.size, name="b")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "dim", a.size)
        object.__setattr__(self, "L", float(a.max()))
        object.__setattr__(self, "mu", float(a.min()))
        object.__setattr__(self, "tau", 0.0)
        object.__setattr__(self, "f_star", 0.0)
        object.__setattr__(self, "x_star", b.copy())

    def value(self, x):
        x = self._check(x)
        r = x - self.b
        out = 0.5 * (self.a * r * r).sum(axis=-1)
        return float(out) if out.ndim == 0 else out

    def grad(self, x):
        x = self._check(x)
        return self.a * (x - self.b)

    def prox_closed_form(self, z, H: DiagPrecond, gamma: float) -> np.ndarray:
        hg = H.diag / gamma
        return (hg * z + self.a * self.b) / (self.a + hg)

    def params(self) -> dict:
        return {"a": self.a.tolist(), "b": self.b.tolist()}


def _gm_curv(t):
    t2 = t * t
    return 2.0 * (1.0 - 3.0 * t2) / (1.0 + t2) ** 3


def geman_mcclure_curvature_floor() -> float:
    """Most negative value of the second derivative of ``t^2/(1+t^2)``.

    Found by a dense grid followed by bounded scalar refinement.
    """
    grid = np.linspace(0.0, 10.0, 100_001)
    vals = _gm_curv(grid)
    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = minimize_scalar(_gm_curv, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    return float(min(res.fun, vals[i]))


@dataclass(frozen=True, eq=False)
class GemanMcClure(Objective):
    """Robust loss ``f(x) = sum_i c_i x_i^2 / (1 + x_i^2)``: smooth, weakly convex, bounded below by 0."""

    c: np.ndarray
    kind: str = field(default="geman_mcclure")

    def __post_init__(self):
        c = as_vector(self.c, name="c")
        if np.any(c <= 0):
            raise ValueError("Geman-McClure weights must be positive")
        floor = geman_mcclure_curvature_floor()
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "dim", c.size)
        object.__setattr__(self, "L", float(2.0 * c.max()))
        object.__setattr__(self, "mu", 0.0)
        object.__setattr__(self, "tau", float(c.max() * max(-floor, 0.0)))
        object.__setattr__(self, "f_star", 0.0)
        object.__setattr__(self, "x_star", np.zeros_like(c))

    def value(self, x):
        x = self._check(x)
        x2 = x * x
        out = (self.c * x2 / (1.0 + x2)).sum(axis=-1)
        return float(out) if out.ndim == 0 else out

    def grad(self, x):
        x = self._check(x)
        s = 1.0 + x * x
        return 2.0 * self.c * x / (s * s)

    def params(self) -> dict:
        return {"c": self.c.tolist()}


def counter_example(L: float = 1.0) -> Quadratic:
    """One-dimensional ``f(x) = L x^2 / 2`` used by the heavy-tail failure demo."""
    if L <= 0:
        raise ValueError("L must be positive")
    return Quadratic(a=[L], b=[0.0], kind="counter_example")


def prox(obj: Objective, z, H: DiagPrecond, gamma: float, tol: float = 1e-8,
         max_iter: int = 1_000_000) -> np.ndarray:
    """Minimizer of ``f(y) + ||y - z||_H^2 / (2 gamma)``.

    ``z`` may be a stack of points ``(..., d)``; all rows share ``H`` and
    ``gamma``. Quadratics use the closed form. Otherwise gradient descent
    with step ``1 / (L + max(H)/gamma)`` runs until every row has
    ``||grad f(y) + H (y - z) / gamma|| <= tol``.

    Raises
    ------
    ValueError
        If ``1/gamma < 2 tau / min(H)``, where the subproblem may fail to be
        strongly convex enough.
    ProxError
        If the iteration cap is reached; carries the final residual.
    """
    if gamma <= 0 or tol <= 0:
        raise ValueError("gamma and tol must be positive")
    z = obj._check(z)
    if H.dim != obj.dim:
        raise ValueError("preconditioner dimension does not match objective")
    if 1.0 / gamma < 2.0 * obj.tau / H.min * (1 - 1e-12):
        raise ValueError(
            f"1/gamma = {1 / gamma:.6g} violates 1/gamma >= 2 tau / min(H) = {2 * obj.tau / H.min:.6g}"
        )
    if isinstance(obj, Quadratic):
        return obj.prox_closed_form(z, H, gamma)

    hg = H.diag / gamma
    step = 1.0 / (obj.L + hg.max())
    y = z.copy()
    for _ in range(max_iter):
        g = obj.grad(y) + hg * (y - z)
        res = np.sqrt((g * g).sum(axis=-1))
        if np.all(res <= tol):
            return y
        y = y - step * g
    raise ProxError("prox solver did not converge", float(np.max(res)))
