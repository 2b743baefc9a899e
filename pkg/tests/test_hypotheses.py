import math
from fractions import Fraction

import numpy as np
import pytest

from odi_solve.hypotheses import (
    HypothesisError,
    check_growth,
    check_H1,
    check_H2,
    check_thm_min,
    compute_K,
    compute_window,
    essential_bounds,
    profile_test_function,
)
from odi_solve.problem import GrowthBound, ProblemError
from odi_solve.setvalued import PiecewiseScalar

ONE = PiecewiseScalar.constant(1)
ZERO = PiecewiseScalar.constant(0)


def h1(ex, c):
    s = ex.spec
    return check_H1(s.F, s.selection, s.growth, c, s.d, s.p, s.q, s.a, s.b)


def test_K_exact():
    assert compute_K(1, 1, 1, 0, 1) == Fraction(3, 16)
    assert compute_K(1, 1, 0, 0, 1) == Fraction(1, 4)
    assert compute_K(2.0, 3.0, 0.5, 0.0, 2.0) == pytest.approx(6 / (36 + 8))
    with pytest.raises(HypothesisError):
        compute_K(0, 1, 1, 0, 1)


def test_essential_bounds():
    p = PiecewiseScalar.from_expr("1 + x")
    q = PiecewiseScalar.from_json({"breakpoints": [0.5], "pieces": ["0", "2"]})
    eb = essential_bounds(p, q, 0, 1)
    assert eb.as_tuple() == pytest.approx((1.0, 2.0, 0.0, 2.0))
    with pytest.raises(HypothesisError):
        essential_bounds(PiecewiseScalar.from_expr("x"), ZERO, 0, 1)
    with pytest.raises(HypothesisError):
        essential_bounds(ONE, PiecewiseScalar.constant(-1), 0, 1)


def test_example1_window(ex1):
    rep, w = ex1.report, ex1.window
    assert rep.passed and rep.exact_arithmetic
    assert w.lambda_lo_exact == 8 and w.lambda_hi_exact == 15
    assert w.r == pytest.approx(0.005)
    assert w.contains(10) and not w.contains(15) and not w.contains(8)


def test_c_threshold(ex1):
    assert h1(ex1, Fraction(3, 16) - Fraction(1, 10**6)).passed
    rep = h1(ex1, Fraction(3, 16))
    assert not rep.passed
    assert "window inequality is not strict" in rep.failures
    with pytest.raises(HypothesisError):
        compute_window(rep)


def test_c_must_be_below_d(ex1):
    with pytest.raises(HypothesisError):
        h1(ex1, 2)


def test_thm_min_variant(ex1):
    s = ex1.spec
    assert check_thm_min(s.F, s.growth, s.c, s.d, s.p, s.q, s.a, s.b).passed


def test_growth_verdicts():
    gb = GrowthBound(1.0, 1.5)
    assert check_growth(PiecewiseScalar.from_expr("sqrt(abs(t))"), gb).passed
    v = check_growth(PiecewiseScalar.from_expr("t"), gb)
    assert v.status == "fail" and v.witness is not None
    with pytest.raises(ProblemError):
        GrowthBound(1.0, 2.0)


def test_example2_window(ex2):
    w = ex2.window
    assert w.lambda_lo == pytest.approx(100 / (2 * 0.25 * (math.exp(10) - 1)), rel=1e-12)
    assert w.lambda_hi == pytest.approx(1 / (2 * (math.e - 1)), rel=1e-12)


def test_H2_rejects_non_positive_g():
    g = PiecewiseScalar.from_expr("t")
    rep = check_H2(g, None, 1, 10, 0, 1)
    assert not rep.passed


def test_profile(ex1):
    prof = profile_test_function(ex1.spec, ex1.window, ex1.pe)
    assert prof.phi_bar == pytest.approx(4 / 3, abs=1e-12)
    assert prof.psi_bar == pytest.approx(5 / 24, abs=1e-12)
    assert prof.ratio == pytest.approx(6.4)
    assert prof.phi_hat_inv == pytest.approx(15.0)
    lo, hi = prof.phi_bounds
    assert lo <= prof.phi_bar <= hi


def test_report_json_has_fields(ex1):
    js = ex1.report.to_json()
    assert js["K_exact"] == "3/16" and js["passed"] is True
    assert np.isfinite(js["lhs"]) and js["lhs"] < js["rhs"]
