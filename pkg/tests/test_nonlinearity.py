import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blowup.errors import DomainError, KellerOssermanError, ParseError, ThresholdError
from blowup.nonlinearity import (
    Nonlinearity,
    check_keller_osserman,
    eval_F,
    parse_nonlinearity,
    sample_grid,
)


def test_power_closed_forms():
    nl = parse_nonlinearity("pow:3")
    assert nl.kind == "power"
    assert nl.f(2.0) == 8.0
    assert eval_F(nl, 2.0) == 4.0
    assert nl.v0(10.0) == pytest.approx(100 / math.sqrt(2), rel=1e-15)


def test_exponential_closed_forms():
    nl = parse_nonlinearity("exp")
    assert eval_F(nl, 0.0) == 1.0
    assert nl.f(1.0) == pytest.approx(math.e)
    assert nl.v0(0.0) == pytest.approx(math.sqrt(2))


def test_expression_example_from_the_sin_family():
    nl = parse_nonlinearity("expr:u^2*(1+sin(u))")
    assert nl.f(math.pi / 2) == pytest.approx(math.pi**2 / 2, rel=1e-14)
    assert nl.a == 1.0
    assert nl.validate() == []


def test_expression_antiderivative_by_quadrature():
    nl = parse_nonlinearity("expr:u^2;a=1")
    assert eval_F(nl, 2.0) == pytest.approx(7 / 3, rel=1e-10)
    # checkpoints are memoized, so the far tail stays cheap and accurate
    assert eval_F(nl, 1e4) == pytest.approx((1e12 - 1) / 3, rel=1e-10)


def test_direct_F_kind():
    nl = parse_nonlinearity("F:t^4/4")
    assert nl.kind == "direct-F"
    assert nl.F(3.0) == pytest.approx(81 / 4)
    assert nl.f(3.0) == pytest.approx(27.0, rel=1e-9)


def test_eval_F_below_threshold_is_rejected():
    nl = parse_nonlinearity("expr:u^2;a=1")
    with pytest.raises(DomainError):
        eval_F(nl, 0.5)


@pytest.mark.parametrize("spec", ["pow:0.5", "pow:1", "pow:-2"])
def test_small_exponents_are_domain_errors(spec):
    with pytest.raises(DomainError):
        parse_nonlinearity(spec)


@pytest.mark.parametrize(
    "spec, position",
    [
        ("pow:", 4),
        ("pow:abc", 4),
        ("foo:u", 0),
        ("exp:2", 4),
        ("expr:u^2;b=1", 9),
        ("expr:u + * 2", 9),
        ("F:t^", 4),
    ],
)
def test_parse_errors_report_positions_in_the_full_spec(spec, position):
    with pytest.raises(ParseError) as info:
        parse_nonlinearity(spec)
    assert info.value.position == position


def test_threshold_scan_finds_first_valid_integer():
    nl = parse_nonlinearity("expr:u^2 - 10")
    assert nl.a == 4.0


def test_threshold_errors():
    with pytest.raises(ThresholdError):
        parse_nonlinearity("expr:-1 - u^2")
    with pytest.raises(ThresholdError):
        parse_nonlinearity("expr:u^2;a=0")  # f(a) = 0


def test_sample_grid_shape():
    g = sample_grid(1.0)
    assert len(g) == 21
    assert g[0] == 2.0 and g[-1] == 2.0 * 2**20


def test_keller_osserman_examples():
    pow3 = check_keller_osserman(parse_nonlinearity("pow:3"), 1.0)
    assert pow3.status == "converges"
    assert pow3.value == pytest.approx(2.0, abs=1e-6)
    expo = check_keller_osserman(parse_nonlinearity("exp"), 0.0)
    assert expo.status == "converges"
    assert expo.value == pytest.approx(2.0, abs=1e-6)
    assert check_keller_osserman(parse_nonlinearity("expr:u;a=1"), 2.0).status == "diverges"


def test_keller_osserman_preconditions():
    nl = parse_nonlinearity("pow:3")
    with pytest.raises(DomainError):
        check_keller_osserman(nl, 0.0)  # lo must exceed a = 0


def test_downstream_operations_refuse_divergent_nonlinearities():
    nl = parse_nonlinearity("expr:u;a=1")
    with pytest.raises(KellerOssermanError):
        nl.require_keller_osserman()


@settings(max_examples=50, deadline=None)
@given(st.floats(1.01, 12.0), st.floats(1e-3, 1e3))
def test_power_scaling_is_exact(p, t):
    nl = Nonlinearity.power(p)
    assert nl.F(2 * t) / nl.F(t) == pytest.approx(2 ** (p + 1), rel=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.floats(1.1, 8.0))
def test_builtin_power_only_relaxes_positivity_at_zero(p):
    # base point 0 keeps the closed forms; f(0) = 0 is the one deliberate relaxation
    assert Nonlinearity.power(p).validate() == ["f(a) = 0.0 <= 0"]


def test_exponential_invariants_hold():
    assert Nonlinearity.exponential().validate() == []


def test_concurrent_reads_agree():
    nl = parse_nonlinearity("expr:u^3 + u;a=1")
    pts = np.geomspace(1.5, 1e5, 40)
    with ThreadPoolExecutor(max_workers=8) as pool:
        results = list(pool.map(lambda t: eval_F(nl, t), list(pts) * 4))
    fresh = parse_nonlinearity("expr:u^3 + u;a=1")
    serial = [eval_F(fresh, t) for t in pts]
    for i, val in enumerate(results):
        assert val == pytest.approx(serial[i % len(pts)], rel=1e-10)
