import math

import numpy as np
import pytest

from blowup.errors import DomainError
from blowup.expansion import make_v0, profile_from_velocity
from blowup.threeterm import invert_three_term, op_P, op_Q, op_R, op_T, remainder_terms


def v0_pow3(t):
    return np.asarray(t) ** 2 / math.sqrt(2)


def test_operator_closed_forms():
    assert op_P(v0_pow3, 0.0, 10.0) == pytest.approx(1000 / (3 * math.sqrt(2)), rel=1e-12)
    assert op_R(v0_pow3, 10.0) == pytest.approx(math.sqrt(2) / 10, rel=1e-10)
    assert op_Q(v0_pow3, 0.0, 10.0) == pytest.approx(10 / 3, rel=1e-12)


def test_T_operator_closed_form():
    # P(Qv) = u^2/6 and P(v Rv) = int_0^u t = u^2/2 for this v, so T = (N-1) u^2/6 + u^2/2
    for N in (1, 3):
        assert op_T(v0_pow3, 0.0, 10.0, N) == pytest.approx((N - 1) * 100 / 6 + 50, rel=1e-10)


def test_remainders_pow5(pow5):
    t = remainder_terms(pow5, 3, 10.0)
    assert t.R0 == pytest.approx(math.sqrt(3) / 200, abs=1e-8)
    assert t.R1 == pytest.approx(3.75e-5, abs=1e-9)
    assert abs(t.R2) / t.R1 < 0.1
    assert t.R0 > abs(t.R1) > abs(t.R2) > 0
    assert t.b == 0.0 and t.r2_inner == "t"


def test_remainder_ordering_for_exponential(expo):
    t = remainder_terms(expo, 3, 10.0)
    assert t.R0 > abs(t.R1) > abs(t.R2)


def test_both_r2_readings_are_available(pow5):
    t = remainder_terms(pow5, 3, 10.0, r2_inner="t")
    u = remainder_terms(pow5, 3, 10.0, r2_inner="u")
    assert t.R0 == u.R0 and t.R1 == u.R1
    assert t.R2 != u.R2 and u.R2 < 0
    with pytest.raises(DomainError):
        remainder_terms(pow5, 3, 10.0, r2_inner="x")


def test_one_dimension_has_no_corrections(pow5):
    t = remainder_terms(pow5, 1, 10.0)
    assert t.R1 == 0.0 and t.R2 == 0.0
    u0 = math.sqrt(math.sqrt(3) / (2 * 1e-3))
    assert invert_three_term(pow5, 1, 1e-3) == pytest.approx(u0, rel=1e-12)


def test_base_point_sensitivity(pow5):
    r1a = remainder_terms(pow5, 3, 10.0, b=0.0).R1
    r1b = remainder_terms(pow5, 3, 10.0, b=2.0).R1
    assert abs(r1a - r1b) < 0.01 * r1a


def test_R0_alone_reproduces_zeroth_profile(pow5):
    vp = make_v0(pow5, 1.0)
    for d in (1e-2, 1e-3, 1e-4):
        assert invert_three_term(pow5, 3, d, terms=1) == pytest.approx(profile_from_velocity(vp, d), rel=1e-8)


def test_agreement_with_fixed_point_profile(pow5, pow5_profiles):
    u2 = pow5_profiles[2]
    errs = []
    for d in (1e-2, 1e-3, 1e-4):
        tt = invert_three_term(pow5, 3, d)
        u0 = invert_three_term(pow5, 3, d, terms=1)
        errs.append(abs(tt - u2(d)) / u0)
    assert errs[1] < 1e-3
    assert errs[0] > errs[1] > errs[2]


def test_three_term_roots_exceed_zeroth_profile(pow3):
    for d in (1e-2, 1e-3):
        assert invert_three_term(pow3, 3, d) > math.sqrt(2) / d


def test_large_d_is_rejected(pow5):
    with pytest.raises(DomainError, match="too large"):
        invert_three_term(pow5, 3, 5.0)
