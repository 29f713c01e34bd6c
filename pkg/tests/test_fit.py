import math

import numpy as np
import pytest

from rbsim.analytic import DecayCurve, markov_exact_curve, quasistatic_exact_curve
from rbsim.errors import FitError, ValidationError
from rbsim.fit import default_window, fit_exponential, initial_rate, loglog_slope
from rbsim.gate_impl import GateKind, compute_F


def _synthetic(gamma, lengths, noise=0.0, seed=0):
    lengths = np.asarray(lengths)
    p0 = 0.5 + 0.5 * np.exp(-gamma * lengths)
    stderr = np.zeros_like(p0, dtype=float)
    if noise:
        p0 = p0 + np.random.default_rng(seed).normal(0.0, noise, p0.shape)
        stderr = np.full_like(p0, noise)
    return DecayCurve(lengths=lengths, p0=p0, stderr=stderr, method="montecarlo")


def test_exact_recovery():
    fit = fit_exponential(_synthetic(0.01, np.arange(1, 401)), window=(1, 400))
    assert fit.gamma == pytest.approx(0.01, abs=1e-8)
    assert fit.A == pytest.approx(0.5, abs=1e-6)
    assert fit.B == pytest.approx(0.5, abs=1e-6)
    assert fit.n_points == 400
    assert fit.rms_residual < 1e-10
    assert fit.healthy


def test_markov_curve_rate():
    gamma = 0.03
    fit = fit_exponential(markov_exact_curve(gamma, np.arange(1, 201)), window=(1, 200))
    assert fit.gamma == pytest.approx(4 * gamma / 3, rel=1e-7)


def test_noisy_recovery():
    fit = fit_exponential(_synthetic(0.02, np.arange(1, 301, 3), noise=0.002, seed=1), window=(1, 300))
    assert fit.gamma == pytest.approx(0.02, rel=0.02)
    assert fit.gamma_stderr > 0.0


def test_window_and_degenerate_input():
    curve = _synthetic(0.01, np.arange(1, 50))
    with pytest.raises(ValidationError):
        fit_exponential(curve, window=(1, 3))
    flat = DecayCurve(lengths=np.arange(1, 11), p0=np.full(10, 0.9), stderr=np.zeros(10), method="coarse")
    with pytest.raises(FitError):
        fit_exponential(flat, window=(1, 10))


def test_default_window():
    assert default_window(np.arange(1, 101)) == (61, 100)
    assert default_window(np.arange(1, 7)) == (2, 6)
    assert default_window(np.arange(1, 4)) == (1, 3)


def test_fit_uses_default_window():
    fit = fit_exponential(_synthetic(0.05, np.arange(1, 101)))
    assert fit.window == (61, 100)
    assert fit.n_points == 40


def test_to_dict():
    d = fit_exponential(_synthetic(0.01, np.arange(1, 101)), window=(1, 100)).to_dict()
    assert set(d) == {"A", "B", "gamma", "gamma_stderr", "window", "rms_residual", "n_points"}
    assert d["window"] == [1, 100]


def test_initial_rate_markov():
    gamma = 0.05
    assert initial_rate(markov_exact_curve(gamma, [1, 2, 3])) == pytest.approx(4 * gamma / 3)


def test_initial_rate_exceeds_tail_rate_for_quasistatic_noise():
    lengths = np.arange(1, 201)
    curve = quasistatic_exact_curve(0.3, compute_F(GateKind.INSTANT), lengths)
    tail = -np.gradient(np.log(curve.p0 - 0.5), lengths)[-1]
    assert initial_rate(curve) > 10 * tail


def test_initial_rate_errors():
    with pytest.raises(ValidationError):
        initial_rate(markov_exact_curve(0.01, [1, 3, 5]))
    flat = DecayCurve(lengths=[1, 2], p0=[0.5, 0.5], stderr=[0, 0], method="coarse")
    with pytest.raises(ValidationError):
        initial_rate(flat)


def test_loglog_slope_power_law_tail():
    lengths = np.unique(np.geomspace(1, 1e5, 60).astype(int))
    curve = quasistatic_exact_curve(0.3, compute_F(GateKind.INSTANT), lengths)
    slope = loglog_slope(curve)
    assert slope[-5] == pytest.approx(-0.5, abs=1e-3)


def test_loglog_slope_markov_and_zero_noise():
    slope = loglog_slope(markov_exact_curve(0.01, np.arange(1, 50)))
    assert np.all(np.diff(slope) < 0)
    np.testing.assert_allclose(loglog_slope(markov_exact_curve(0.0, [1, 2, 4, 8])), 0.0, atol=1e-15)
    with pytest.raises(ValidationError):
        loglog_slope(markov_exact_curve(0.01, [1]))
    with pytest.raises(ValidationError):
        loglog_slope(DecayCurve(lengths=[1, 2], p0=[0.9, 0.5], stderr=[0, 0], method="coarse"))


def test_loglog_slope_window():
    curve = markov_exact_curve(0.01, np.arange(1, 50))
    assert loglog_slope(curve, window=(10, 20)).size == 11
