import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blowup.errors import BracketError
from blowup.numerics import (
    RunningIntegral,
    TailIntegral,
    find_root_monotone,
    integrate_adaptive,
    integrate_ivp,
    integrate_to_infinity,
)


@pytest.mark.parametrize(
    "g, lo, hi, exact",
    [
        (lambda t: t**2, 0.0, 1.0, 1 / 3),
        (lambda t: 2 / t**2, 1.0, 10.0, 1.8),
        (np.sin, 0.0, math.pi, 2.0),
    ],
)
def test_adaptive_examples(g, lo, hi, exact):
    res = integrate_adaptive(g, lo, hi, tol=1e-10)
    assert res.converged
    assert res.value == pytest.approx(exact, rel=1e-10)
    assert res.error_estimate <= 1e-10 * max(1.0, abs(res.value))


def test_adaptive_accepts_scalar_only_callables():
    res = integrate_adaptive(lambda t: math.exp(-t), 0.0, 1.0)
    assert res.value == pytest.approx(1 - math.exp(-1), rel=1e-12)


def test_adaptive_reports_subdivision_limit():
    res = integrate_adaptive(lambda t: np.sign(t - 1 / 3), 0.0, 1.0, tol=1e-15, max_intervals=8)
    assert not res.converged


@pytest.mark.parametrize(
    "g, lo, exact",
    [
        (lambda t: 2 / t**2, 1.0, 2.0),
        (lambda t: np.exp(-t), 0.0, 1.0),
    ],
)
def test_improper_examples(g, lo, exact):
    res = integrate_to_infinity(g, lo, tol=1e-10)
    assert res.converged
    assert res.value == pytest.approx(exact, rel=1e-9)
    assert res.cutoff_used is not None


def test_harmonic_tail_diverges():
    res = integrate_to_infinity(lambda t: 1 / t, 1.0)
    assert res.status == "diverged" and not res.converged


@pytest.mark.parametrize("g", [np.sin, lambda t: np.cos(t) / t])
def test_oscillating_tails_are_never_silently_converged(g):
    res = integrate_to_infinity(g, 1.0)
    assert not res.converged


def _random_integrands(seed):
    """(g, lo, hi, exact) with closed-form antiderivatives."""
    rng = np.random.default_rng(seed)
    kind = rng.integers(3)
    lo = float(rng.uniform(-2, 2))
    hi = lo + float(rng.uniform(0.1, 5))
    if kind == 0:
        c = rng.normal(size=int(rng.integers(1, 9)))
        P = np.polynomial.Polynomial(c)
        Q = P.integ()
        return P, lo, hi, float(Q(hi) - Q(lo))
    if kind == 1:
        k = float(rng.uniform(-4, 4))
        return (lambda t: np.exp(k * t)), lo, hi, (math.exp(k * hi) - math.exp(k * lo)) / k
    w = float(rng.uniform(0.5, 6))
    return (lambda t: t * np.cos(w * t)), lo, hi, (
        (math.cos(w * hi) + w * hi * math.sin(w * hi)) - (math.cos(w * lo) + w * lo * math.sin(w * lo))
    ) / w**2


def test_error_estimates_are_conservative():
    hits = 0
    for seed in range(50):
        g, lo, hi, exact = _random_integrands(seed)
        res = integrate_adaptive(g, lo, hi, tol=1e-9)
        hits += abs(res.value - exact) <= max(res.error_estimate, 4 * np.finfo(float).eps * abs(exact))
    assert hits >= 48


@settings(max_examples=25, deadline=None)
@given(st.floats(0.5, 3.0), st.floats(1.0, 20.0), st.floats(1.2, 4.0))
def test_tail_additivity(lo0, width, power):
    g = lambda t: t ** (-power)  # noqa: E731
    lo = lo0 + width
    left = integrate_adaptive(g, lo0, lo, tol=1e-12)
    tail = integrate_to_infinity(g, lo, tol=1e-12)
    whole = integrate_to_infinity(g, lo0, tol=1e-12)
    budget = left.error_estimate + tail.error_estimate + whole.error_estimate + 1e-12 * whole.value
    assert abs(left.value + tail.value - whole.value) <= budget


def test_running_and_tail_tables():
    run = RunningIntegral(lambda t: 3 * t**2, 0.0)
    assert run(2.0) == pytest.approx(8.0, rel=1e-13)
    np.testing.assert_allclose(run(np.array([1.0, 3.0])), [1.0, 27.0], rtol=1e-13)
    tail = TailIntegral(lambda t: 2 / t**3, 1.0)
    np.testing.assert_allclose(tail(np.array([1.0, 10.0, 1e5])), [1.0, 1e-2, 1e-10], rtol=1e-11)


@pytest.mark.parametrize(
    "h, lo, hi, root",
    [
        (lambda x: x - 3, 0.0, 10.0, 3.0),
        (lambda x: x * x - 2, 0.0, 2.0, math.sqrt(2)),
        (lambda x: math.exp(x) - 1, -1.0, 1.0, 0.0),
    ],
)
def test_root_examples(h, lo, hi, root):
    assert find_root_monotone(h, lo, hi, tol=1e-13) == pytest.approx(root, abs=1e-12)


def test_root_without_sign_change():
    with pytest.raises(BracketError):
        find_root_monotone(lambda x: x * x + 1, -1.0, 1.0)


def test_ivp_exponential():
    traj = integrate_ivp(lambda r, y: y, [1.0], 0.0, r_end=1.0, tol=1e-10)
    assert traj.reason == "endpoint"
    assert traj.y[-1, 0] == pytest.approx(math.e, abs=1e-8)
    assert np.all(np.diff(traj.r) > 0)


def test_ivp_cap_on_blow_up():
    traj = integrate_ivp(lambda r, y: y * y, [1.0], 0.0, cap=lambda r, y: y[0] > 1e6, tol=1e-10)
    assert traj.reason == "cap-reached"
    assert traj.r[-1] == pytest.approx(1 - 1e-6, abs=1e-6)


def test_ivp_constant_trajectory():
    traj = integrate_ivp(lambda r, y: np.zeros(1), [5.0], 0.0, r_end=2.0)
    assert traj.r[-1] == 2.0
    assert np.all(traj.y[:, 0] == 5.0)


def test_ivp_step_underflow_is_reported():
    # y' = y^2 from y(0) = 1 blows up at r = 1; without a cap the step collapses
    traj = integrate_ivp(lambda r, y: y * y, [1.0], 0.0, r_end=2.0, tol=1e-10)
    assert traj.reason == "step-underflow"
    assert traj.r[-1] < 1.0


def test_ivp_order():
    errs = []
    for h in (0.1, 0.05):
        traj = integrate_ivp(lambda r, y: y, [1.0], 0.0, r_end=1.0, fixed_step=h)
        errs.append(abs(traj.y[-1, 0] - math.e))
    assert errs[0] / errs[1] >= 4.0
