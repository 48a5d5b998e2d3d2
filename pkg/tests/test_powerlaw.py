import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blowup.errors import DomainError, ResonanceError
from blowup.expansion import iterate_to_convergence, profile_from_velocity
from blowup.nonlinearity import Nonlinearity
from blowup.powerlaw import (
    TruncatedSeries,
    is_resonant,
    power_coefficients,
    series_base_integrate,
    series_mul,
    series_profile,
    series_recip,
    series_sqrt,
    series_tail_integrate,
)


def test_recip_and_sqrt_examples():
    one_plus_x = TruncatedSeries((1.0, 1.0, 0.0))
    assert series_recip(one_plus_x).coeffs == (1.0, -1.0, 1.0)
    assert series_sqrt(one_plus_x).coeffs == (1.0, 0.5, -0.125)


def test_integration_examples():
    t_minus_2 = TruncatedSeries((1.0,), e0=2.0)  # x = 1/u, so x^2 = u^-2
    out = series_tail_integrate(t_minus_2)
    assert out.e0 == 1.0 and out.coeffs == (1.0,)
    # u^2 = x^-2 integrates from the base to u^3/3
    up = series_base_integrate(TruncatedSeries((1.0,), e0=-2.0))
    assert up.e0 == -3.0 and up.coeffs == pytest.approx((1 / 3,))


def test_resonant_tail_integration():
    with pytest.raises(ResonanceError) as info:
        series_tail_integrate(TruncatedSeries((1.0, 1.0), e0=1.0, step=0.5))
    assert info.value.order == 0
    with pytest.raises(DomainError):
        series_tail_integrate(TruncatedSeries((1.0,), e0=0.5))


def test_reversion():
    # y = x + 2x^2 + 3x^3 + 4x^4 inverts to x = y - 2y^2 + 5y^3 - 14y^4
    s = TruncatedSeries((1.0, 2.0, 3.0, 4.0), e0=1.0)
    assert s.revert().coeffs == pytest.approx((1.0, -2.0, 5.0, -14.0))


def test_truncation_is_recorded():
    a = TruncatedSeries((1.0, 1.0))
    prod = series_mul(a, a)
    assert prod.order == 1 and prod.dropped


coeff_lists = st.lists(st.floats(-2, 2, allow_nan=False), min_size=1, max_size=5).map(lambda c: (1.0, *c))


@settings(max_examples=50, deadline=None)
@given(coeff_lists)
def test_algebra_identities(c):
    s = TruncatedSeries(c)
    one = series_mul(s, series_recip(s))
    np.testing.assert_allclose(one.coeffs, [1.0] + [0.0] * s.order, atol=1e-9)
    sq = series_sqrt(s)
    np.testing.assert_allclose(series_mul(sq, sq).coeffs, s.coeffs, atol=1e-9)


def test_leading_coefficients_p4():
    se = power_coefficients(4.0, 3, 2)
    q = 2.5
    assert se.a[0] == pytest.approx((q - 1) ** (-1 / (q - 1)), rel=1e-14)
    assert se.a[0] == pytest.approx(0.763143, abs=1e-6)
    assert se.a[1] / se.a[0] == pytest.approx(2 / 7, rel=1e-12)
    assert se.a[1] == pytest.approx(0.218041, abs=1e-6)
    assert se.b[0] == 1.0
    assert se.b[1] == pytest.approx(-4 / 7, rel=1e-12)


@pytest.mark.parametrize("p", [1.7, 2.5, 4.0, 6.0])
def test_one_dimension_collapses(p):
    se = power_coefficients(p, 1, 3)
    assert np.all(se.a[1:] == 0.0) and np.all(se.b[1:] == 0.0)
    for d in (1.0, 1e-3):
        assert series_profile(se, d) == se.a[0] * d ** (-1 / se.beta)


@pytest.mark.parametrize("p", [3.0, 2.0, 5 / 3])
def test_resonant_exponents_are_rejected(p):
    assert is_resonant(p)
    with pytest.raises(ResonanceError):
        power_coefficients(p, 3, 1)


def test_resonance_surfacing_mid_recursion():
    # 4/(p-1) = 1 for p = 5: the r-correction hits exponent -1 at order 2
    with pytest.raises(ResonanceError) as info:
        power_coefficients(5.0, 3, 3)
    assert info.value.order == 2


def test_singular_count():
    assert power_coefficients(4.0, 3, 0).singular_index == 0
    assert power_coefficients(2.5, 3, 0).singular_index == 1
    assert power_coefficients(2.5, 3, 0).singular_count == 2
    assert power_coefficients(4.0, 3, 1).beyond_singular


def test_series_profile_examples():
    assert series_profile(power_coefficients(4.0, 3, 0), 1e-3) == pytest.approx(76.314, abs=1e-3)
    assert series_profile(power_coefficients(4.0, 3, 1), 1e-3) == pytest.approx(76.336, abs=1e-3)
    se = power_coefficients(6.0, 2, 2)
    assert series_profile(power_coefficients(6.0, 2, 0), 1.0) == se.a[0]
    with pytest.raises(DomainError):
        series_profile(se, 0.0)


def test_reruns_are_bit_identical():
    a = power_coefficients(4.5, 3, 4)
    b = power_coefficients(4.5, 3, 4)
    assert a.a.tobytes() == b.a.tobytes() and a.b.tobytes() == b.b.tobytes()


@pytest.mark.parametrize("p", [4.0, 6.0])
@pytest.mark.parametrize("N", [2, 3])
def test_agreement_with_fixed_point_profiles(p, N):
    nl = Nonlinearity.normalized_power(p)
    res = iterate_to_convergence(nl, N, tol=0.0, kmax=2, M=8192)
    ds = (1e-2, 1e-3, 1e-4)
    required = math.ceil(2 / (p - 1))
    for n in (0, 1, 2):
        se = power_coefficients(p, N, n)
        errs = [abs(series_profile(se, d) - profile_from_velocity(res.profiles[n], d)) / series_profile(se, d)
                for d in ds]
        if n == 0:
            assert max(errs) < 1e-13
            continue
        assert errs[0] > errs[2]
        order = math.log(errs[2] / errs[0]) / math.log(ds[2] / ds[0])
        assert order >= min(n + 1, required)
