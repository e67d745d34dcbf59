import math

import numpy as np
import pytest

from localadam.noise import (
    GradientOracle,
    NoiseBank,
    NoiseModel,
    RngStream,
    abs_moment_gaussian,
    abs_moment_student_t,
    adversarial_noise_appendix_d,
    adversarial_spike,
    alpha_moment_estimate,
    sample_gradient,
)
from localadam.objectives import GemanMcClure, Quadratic
from scipy import integrate, stats


def mc_mean(samples):
    samples = np.asarray(samples, dtype=float)
    return samples.mean(axis=0), samples.std(axis=0, ddof=1) / math.sqrt(samples.shape[0])


MODELS = [
    NoiseModel("gaussian", [1.0, 0.5]),
    NoiseModel("three_point", [1.0, 2.0], spike=2.0),
    NoiseModel("student_t", [1.0, 0.3], dof=9.0),
]


def test_abs_moments_against_quadrature():
    for a in (2.0, 3.0, 4.0):
        quad = integrate.quad(lambda z: abs(z) ** a * stats.norm.pdf(z), -np.inf, np.inf)[0]
        assert abs_moment_gaussian(a) == pytest.approx(quad, rel=1e-9)
        quad_t = integrate.quad(lambda z: abs(z) ** a * stats.t.pdf(z, 9.0), -np.inf, np.inf)[0]
        assert abs_moment_student_t(a, 9.0) == pytest.approx(quad_t, rel=1e-7)
    assert abs_moment_gaussian(4.0) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        abs_moment_student_t(4.0, 4.0)


def test_noiseless_oracle_returns_exact_gradient():
    obj = GemanMcClure([1.0, 2.0, 0.3])
    oracle = GradientOracle(obj, NoiseModel("gaussian", np.zeros(3)))
    x = np.array([0.3, -1.2, 4.0])
    np.testing.assert_array_equal(sample_gradient(oracle, x, RngStream(7, 1, 2, 3)), obj.grad(x))


def test_three_point_support_and_probabilities():
    model = NoiseModel("three_point", [1.0], alpha=4.0, spike=2.0)
    draws = model.sample(RngStream(11).generator(), 400_000)[:, 0]
    assert set(np.unique(draws)) <= {-2.0, 0.0, 2.0}
    for value, p in ((-2.0, 1 / 32), (0.0, 15 / 16), (2.0, 1 / 32)):
        frac = np.mean(draws == value)
        assert abs(frac - p) <= 4 * math.sqrt(p * (1 - p) / draws.size)


def test_minibatch_second_moment_scales_with_batch():
    oracle = GradientOracle(Quadratic([1.0]), NoiseModel("gaussian", [2.0], alpha=2.0), batch=4)
    noise = np.array([oracle.noise_draw(RngStream(5, 0, 0, k))[0] for k in range(100_000)])
    assert np.mean(noise**2) == pytest.approx(1.0, rel=0.05)


def test_alpha_moment_examples():
    tp = NoiseModel("three_point", [1.0], alpha=4.0, spike=2.0)
    est = alpha_moment_estimate(tp, 4.0, 200_000, RngStream(3))
    draws = tp.sample(RngStream(3).generator(), 200_000)
    _, se = mc_mean(np.abs(draws) ** 4)
    assert abs(est[0] - 1.0) <= 3 * se[0]
    g = NoiseModel("gaussian", [1.0], alpha=2.0)
    assert alpha_moment_estimate(g, 2.0, 100_000, RngStream(4))[0] == pytest.approx(1.0, rel=0.02)
    z = NoiseModel("student_t", [0.0, 0.0])
    np.testing.assert_array_equal(alpha_moment_estimate(z, 4.0, 10_000, RngStream(1)), [0.0, 0.0])
    with pytest.raises(ValueError):
        alpha_moment_estimate(g, 2.0, 100, RngStream(4))


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.kind)
def test_zero_mean(model):
    draws = model.sample(RngStream(21).generator(), 100_000)
    mean, se = mc_mean(draws)
    assert np.all(np.abs(mean) <= 4 * se)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.kind)
def test_moment_certification(model):
    draws = model.sample(RngStream(22).generator(), 200_000)
    est, se = mc_mean(np.abs(draws) ** model.alpha)
    assert np.all(est <= model.sigma**model.alpha + 4 * se)


@pytest.mark.parametrize("M", [2, 4, 8])
def test_fourth_moment_averaging(M):
    model = NoiseModel("three_point", [0.5, 1.0, 0.2], spike=3.0)
    sigma4 = np.sum(model.sigma**2) ** 2
    n = 100_000
    draws = model.sample(RngStream(30, M).generator(), n * M).reshape(n, M, -1)
    mean_sq = (draws.mean(axis=1) ** 2).sum(axis=1)
    est, se = mc_mean(mean_sq**2)
    assert est <= 4 * sigma4 / M**2 + 5 * se


def test_streams_are_pure_and_distinct():
    model = NoiseModel("gaussian", [1.0] * 4)
    a = model.sample(RngStream(9, 1, 2, 3).generator(), 5)
    b = model.sample(RngStream(9, 1, 2, 3).generator(), 5)
    assert a.tobytes() == b.tobytes()
    others = [RngStream(9, 2, 2, 3), RngStream(9, 1, 3, 3), RngStream(9, 1, 2, 4), RngStream(10, 1, 2, 3)]
    for s in others:
        assert not np.array_equal(model.sample(s.generator(), 5), a)


def test_stream_order_independence():
    oracle = GradientOracle(Quadratic([1.0, 1.0]), NoiseModel("student_t", [1.0, 1.0]))
    coords = [(m, r, k) for m in range(3) for r in range(2) for k in range(3)]
    forward = {c: oracle.noise_draw(RngStream(4, *c)) for c in coords}
    backward = {c: oracle.noise_draw(RngStream(4, *c)) for c in reversed(coords)}
    for c in coords:
        assert forward[c].tobytes() == backward[c].tobytes()
    bank = NoiseBank(oracle, 4)
    for c in coords:
        assert bank.draw(*c).tobytes() == forward[c].tobytes()


def test_model_validation():
    with pytest.raises(ValueError):
        NoiseModel("cauchy", [1.0])
    with pytest.raises(ValueError):
        NoiseModel("student_t", [1.0], alpha=4.0, dof=4.0)
    with pytest.raises(ValueError):
        NoiseModel("three_point", [1.0], spike=0.5)
    with pytest.raises(ValueError):
        NoiseModel("gaussian", [-1.0])


def test_adversarial_spike_formula():
    # A = max(2 sqrt(2 * 0.5 / 1) / (0.5 * 2), 1) = 2
    assert adversarial_spike(0.5, 1.0, 2.0, 0.5) == 2.0
    assert adversarial_spike(1.0, 1.0, 100.0, 0.5) == 1.0
    with pytest.raises(ValueError):
        adversarial_spike(0.0, 1.0, 2.0, 0.5)


def test_adversarial_noise_cases():
    kw = dict(T=10, x0=1.0, eta=0.5, L=1.0, sigma=2.0, eps=0.5, alpha=4.0)
    for t in range(9):
        assert adversarial_noise_appendix_d(t, stream=RngStream(0, 0, 0, t), **kw) == 0.0
    xi = adversarial_noise_appendix_d(9, stream=RngStream(0, 0, 0, 9), size=400_000, **kw)
    assert set(np.unique(xi)) <= {-2.0, 0.0, 2.0}
    for value in (-2.0, 2.0):
        p = 1 / 32
        assert abs(np.mean(xi == value) - p) <= 4 * math.sqrt(p * (1 - p) / xi.size)
    # contraction too slow: (1 - eta L)^T |x0| > sqrt(2 eps / L) switches the noise off
    slow = dict(kw, x0=5000.0)
    xi = adversarial_noise_appendix_d(9, stream=RngStream(0, 0, 0, 9), size=1000, **slow)
    assert not np.any(xi)
