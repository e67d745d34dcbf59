import numpy as np
import pytest
from scipy.optimize import brentq

from localadam.corevec import DiagPrecond
from localadam.objectives import (
    GemanMcClure,
    ProxError,
    Quadratic,
    counter_example,
    geman_mcclure_curvature_floor,
    prox,
)


def random_objectives(rng, n):
    out = []
    for i in range(n):
        d = int(rng.integers(1, 9))
        if i % 2:
            out.append(Quadratic(rng.uniform(0.05, 3.0, d), rng.normal(size=d)))
        else:
            out.append(GemanMcClure(rng.uniform(0.1, 2.0, d)))
    return out


def test_value_examples():
    assert Quadratic([2.0], [0.0]).value([1.0]) == 1.0
    assert GemanMcClure([1.0]).value([1.0]) == 0.5
    q = Quadratic([0.5, 2.0], [1.0, -3.0])
    assert q.value(q.x_star) == q.f_star
    g = GemanMcClure([1.0, 3.0])
    assert g.value(g.x_star) == g.f_star == 0.0


def test_grad_examples():
    np.testing.assert_array_equal(Quadratic([2.0], [0.0]).grad([1.0]), [2.0])
    # 2x/(1+x^2)^2 at x = 1
    np.testing.assert_array_equal(GemanMcClure([1.0]).grad([1.0]), [0.5])
    q = Quadratic([0.5, 2.0], [1.0, -3.0])
    assert np.max(np.abs(q.grad(q.x_star))) <= 1e-12


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        Quadratic([1.0, 2.0]).value([1.0])
    with pytest.raises(ValueError):
        GemanMcClure([1.0]).grad([1.0, 2.0])


def test_constants():
    q = Quadratic(np.linspace(0.1, 1.0, 8))
    assert (q.mu, q.L, q.tau) == (0.1, 1.0, 0.0)
    ce = counter_example(3.0)
    assert ce.dim == 1 and ce.L == 3.0 and ce.mu == 3.0 and ce.kind == "counter_example"


def test_geman_mcclure_curvature_floor():
    # phi''(t) = 2(1-3t^2)/(1+t^2)^3 has its minimum at t = 1, value 2*(-2)/8
    assert geman_mcclure_curvature_floor() == pytest.approx(-0.5, abs=1e-10)
    g = GemanMcClure([0.5, 2.0])
    assert g.L == 4.0
    assert g.tau == pytest.approx(1.0, abs=1e-9)


def test_finite_difference_gradients():
    rng = np.random.default_rng(1)
    for obj in random_objectives(rng, 100):
        x = rng.normal(size=obj.dim) * 2
        h = 1e-6
        fd = np.array([
            (obj.value(x + h * e) - obj.value(x - h * e)) / (2 * h) for e in np.eye(obj.dim)
        ])
        g = obj.grad(x)
        assert np.linalg.norm(fd - g) <= 1e-5 * max(np.linalg.norm(g), 1.0)


def test_gradient_domination_bound():
    rng = np.random.default_rng(2)
    for obj in random_objectives(rng, 10):
        x = rng.normal(size=(1000, obj.dim)) * 3
        g = obj.grad(x)
        lhs = (g * g).sum(axis=1)
        rhs = 2 * obj.L * (obj.value(x) - obj.f_star)
        assert np.all(lhs <= rhs * (1 + 1e-9) + 1e-300)


def test_weak_convexity():
    rng = np.random.default_rng(3)
    for _ in range(20):
        g = GemanMcClure(rng.uniform(0.1, 2.0, 5))
        x = rng.normal(size=(500, 5)) * 2
        y = rng.normal(size=(500, 5)) * 2
        lhs = ((g.grad(x) - g.grad(y)) * (x - y)).sum(axis=1)
        rhs = -g.tau * ((x - y) ** 2).sum(axis=1)
        assert np.all(lhs >= rhs * (1 + 1e-9))


def test_prox_quadratic_closed_form():
    y = prox(Quadratic([2.0], [0.0]), np.array([1.0]), DiagPrecond.identity(1), 0.5)
    np.testing.assert_array_equal(y, [0.5])


def test_prox_fixes_minimizers():
    H = DiagPrecond(np.array([1.5, 0.7, 2.0]))
    q = Quadratic([1.0, 2.0, 0.5], [0.3, -1.0, 2.0])
    np.testing.assert_allclose(prox(q, q.x_star, H, 0.3), q.x_star, rtol=0, atol=1e-15)
    g = GemanMcClure([1.0, 2.0, 0.5])
    np.testing.assert_array_equal(prox(g, g.x_star, H, 0.1), g.x_star)


def test_prox_geman_mcclure_against_root_finder():
    g = GemanMcClure([1.0])
    gamma, z = 0.1, 2.0
    y = prox(g, np.array([z]), DiagPrecond.identity(1), gamma, tol=1e-10)
    residual = g.grad(y) + (y - z) / gamma
    assert abs(residual[0]) <= 1e-8
    # independent oracle: the 1-D stationarity equation is strictly monotone here
    root = brentq(lambda t: 2 * t / (1 + t * t) ** 2 + (t - z) / gamma, -10, 10, xtol=1e-14)
    assert y[0] == pytest.approx(root, abs=1e-9)


def test_prox_decreases_envelope_objective():
    rng = np.random.default_rng(4)
    for obj in random_objectives(rng, 40):
        H = DiagPrecond(rng.uniform(0.5, 2.0, obj.dim))
        gamma = 0.9 * H.min / (2 * obj.tau) if obj.tau > 0 else 1.0
        z = rng.normal(size=obj.dim) * 2
        y = prox(obj, z, H, gamma)
        lhs = obj.value(y) + np.sum(H.diag * (y - z) ** 2) / (2 * gamma)
        assert lhs <= obj.value(z) + 1e-12


def test_prox_rejects_gamma_outside_window():
    g = GemanMcClure([1.0])
    with pytest.raises(ValueError, match="1/gamma"):
        prox(g, np.array([1.0]), DiagPrecond.identity(1), gamma=2.0)


def test_prox_iteration_cap_reports_residual():
    g = GemanMcClure([1.0, 1.0])
    with pytest.raises(ProxError) as exc:
        prox(g, np.array([1.0, 3.0]), DiagPrecond.identity(2), 0.5, tol=1e-14, max_iter=2)
    assert exc.value.residual > 0


def test_prox_batch_rows_independent():
    g = GemanMcClure([1.0, 0.4])
    H = DiagPrecond(np.array([1.2, 0.9]))
    zs = np.array([[2.0, -1.0], [0.1, 3.0], [-4.0, 0.5]])
    batch = prox(g, zs, H, 0.2, tol=1e-11)
    for z, yb in zip(zs, batch):
        np.testing.assert_allclose(prox(g, z, H, 0.2, tol=1e-11), yb, atol=1e-9)
