"""Acceptance criteria 1-8, each at its stated tolerance and time limit.

A summary line per criterion is printed at the end of the session (see the
``criterion`` marker handling in conftest.py).
"""

import itertools
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from odi_solve.certify import certify_coeffs
from odi_solve.fem import assemble
from odi_solve.hypotheses import (
    check_H1,
    compute_K,
    compute_window,
    essential_bounds,
    profile_test_function,
)
from odi_solve.scan import a_priori_radius, bnb_scan
from odi_solve.setvalued import IntervalMap, PiecewiseScalar, SelectionKind, resolve_selection
from odi_solve.solver import TOL_STAT, descend, find_three

import properties

ONE = PiecewiseScalar.constant(1)
ZERO = PiecewiseScalar.constant(0)


def crit(number, title):
    return pytest.mark.criterion(number, title)


def detail(request, text):
    request.node.user_properties.append(("detail", text))
    print(text)


def certified_set(S, res, F, box, lam):
    out = []
    for rep in res:
        if not rep.converged:
            continue
        cert = certify_coeffs(S, rep.u.coeffs, F, lam, TOL_STAT, w0=rep.w, kind=rep.kind, box=box)
        if cert.passed:
            out.append((rep, cert))
    return out


def min_pairwise_sep(reps):
    return min((float(np.max(np.abs(a.u.coeffs - b.u.coeffs))) for a, b in itertools.combinations(reps, 2)),
               default=math.inf)


# 1 ---------------------------------------------------------------------------

@crit(1, "constant K = 3/16 (p = q = 1) and 1/4 (p = 1, q = 0), exact")
def test_c1_constant_K(ex1):
    eb = essential_bounds(ex1.spec.p, ex1.spec.q, ex1.spec.a, ex1.spec.b)
    K1 = compute_K(eb.p0_exact, eb.p_sup_exact, eb.q_sup_exact, ex1.spec.a, ex1.spec.b)
    assert K1 == Fraction(3, 16) and isinstance(K1, Fraction)
    assert ex1.report.K_exact == Fraction(3, 16)
    eb2 = essential_bounds(ONE, ZERO, 0, 1)
    K2 = compute_K(eb2.p0_exact, eb2.p_sup_exact, eb2.q_sup_exact, 0, 1)
    assert K2 == Fraction(1, 4)
    assert abs(float(compute_K(1.0, 1.0, 1.0, 0.0, 1.0)) - 3 / 16) <= 1e-15
    assert abs(float(compute_K(1.0, 1.0, 0.0, 0.0, 1.0)) - 1 / 4) <= 1e-15


# 2 ---------------------------------------------------------------------------

@crit(2, "example 1 window (8, 15); H1 passes for c < 3/16 and fails at c = 3/16")
def test_c2_window(ex1, request):
    w = ex1.window
    assert abs(w.lambda_lo - 8) <= 1e-10 * 8 and abs(w.lambda_hi - 15) <= 1e-10 * 15
    s = ex1.spec
    for c in (Fraction(1, 100), Fraction(1, 10), Fraction(3, 20), Fraction(3, 16) - Fraction(1, 10**9)):
        assert check_H1(s.F, s.selection, s.growth, c, s.d, s.p, s.q, s.a, s.b).passed, c
    rep = check_H1(s.F, s.selection, s.growth, Fraction(3, 16), s.d, s.p, s.q, s.a, s.b)
    assert not rep.passed and rep.exact_arithmetic
    detail(request, f"window = ({w.lambda_lo!r}, {w.lambda_hi!r})")


# 3 ---------------------------------------------------------------------------

@crit(3, "test-function profile: Phi = 4/3, Psi = 5/24, window inside (6.4, 15)")
def test_c3_profile(ex1):
    t0 = time.perf_counter()
    prof = profile_test_function(ex1.spec, ex1.window, ex1.pe)
    elapsed = time.perf_counter() - t0
    assert abs(prof.phi_bar - 4 / 3) <= 1e-10
    assert abs(prof.psi_bar - 5 / 24) <= 1e-10
    assert abs(prof.ratio - 6.4) <= 1e-10 and abs(prof.phi_hat_inv - 15) <= 1e-10
    assert prof.ratio <= ex1.window.lambda_lo and ex1.window.lambda_hi <= prof.phi_hat_inv
    assert elapsed < 1.0


# 4 ---------------------------------------------------------------------------

@crit(4, "example 1, N = 256: >= 3 certified, separated solutions per lambda in {9, 10, 12, 14}, <= 10 s")
@pytest.mark.parametrize("lam", [9.0, 10.0, 12.0, 14.0])
def test_c4_example1_multiplicity(ex1, lam, request):
    S = ex1.space(256)
    t0 = time.perf_counter()
    res = find_three(S, ex1.spec.F, ex1.spec.selection, lam, ex1.window, pe=ex1.pe)
    good = certified_set(S, res, ex1.spec.F, ex1.pe.clarke, lam)
    elapsed = time.perf_counter() - t0
    reps = [r for r, _ in good]
    assert len(good) >= 3
    assert all(c.weak_residual <= 1e-8 for _, c in good)
    assert min_pairwise_sep(reps) >= 1e-3
    assert elapsed <= 10.0
    detail(request, f"lambda={lam:g}: {len(good)} certified in {elapsed:.2f} s")


# 5 ---------------------------------------------------------------------------

@crit(5, "example 2: window to 1e-6; >= 3 certified nonzero solutions per lambda in {0.05, 0.1, 0.2}, <= 20 s")
def test_c5_example2_window(ex2):
    lo = 200.0 / (math.exp(10) - 1)  # p0 d^2 / (2 K L^2 J(d)), K = 1/4, d = 10
    hi = 1.0 / (2.0 * (math.e - 1))  # p0 c^2 / (2 L^2 J(c)), c = 1
    w = ex2.window
    assert abs(w.lambda_lo - lo) <= 1e-6 * lo and abs(w.lambda_hi - hi) <= 1e-6 * hi
    assert abs(w.lambda_lo - 9.0806e-3) <= 1e-4 * 9.0806e-3
    assert abs(w.lambda_hi - 2.90988e-1) <= 1e-5 * 2.90988e-1


@crit(5, "example 2: window to 1e-6; >= 3 certified nonzero solutions per lambda in {0.05, 0.1, 0.2}, <= 20 s")
@pytest.mark.parametrize("lam", [0.05, 0.1, 0.2])
def test_c5_example2_multiplicity(ex2, lam, request):
    S = ex2.space(256)
    t0 = time.perf_counter()
    res = find_three(S, ex2.spec.F, ex2.spec.selection, lam, ex2.window, pe=ex2.pe)
    good = [(r, c) for r, c in certified_set(S, res, ex2.spec.F, ex2.pe.clarke, lam) if r.sup_norm >= 1e-6]
    elapsed = time.perf_counter() - t0
    assert len(good) >= 3
    assert min_pairwise_sep([r for r, _ in good]) >= 1e-3
    assert elapsed <= 20.0
    detail(request, f"lambda={lam:g}: {len(good)} certified nonzero in {elapsed:.2f} s")


# 6 ---------------------------------------------------------------------------

@crit(6, "manufactured solution: sup error order >= 1.9 between N = 64 and N = 128")
def test_c6_manufactured_order(request):
    F = IntervalMap.single(ONE)
    pe = resolve_selection(F, SelectionKind("MIN"))
    x = np.linspace(0.0, 1.0, 40001)
    exact = x - x**2 / 2
    errs = {}
    for N in (64, 128):
        S = assemble(0, 1, ONE, ZERO, N=N)
        rep = descend(S, pe, 1.0, np.zeros(S.N))
        cert = certify_coeffs(S, rep.u.coeffs, F, 1.0)
        assert rep.converged and cert.passed
        errs[N] = float(np.max(np.abs(S.evaluate(rep.u.coeffs, x) - exact)))
    order = math.log2(errs[64] / errs[128])
    assert order >= 1.9
    detail(request, f"order {order:.3f}")


# 7 ---------------------------------------------------------------------------

@crit(7, "oracle equivalence with the stationarity scan at N = 2, 3 (lambda = 10), within 0.02, <= 60 s")
@pytest.mark.parametrize("N", [2, 3])
def test_c7_oracle(ex1, N, request):
    lam = 10.0
    t0 = time.perf_counter()
    S = ex1.space(N)
    res = find_three(S, ex1.spec.F, ex1.spec.selection, lam, ex1.window, pe=ex1.pe)
    R = a_priori_radius(lam, ex1.spec.length, 1.0, ex1.spec.growth)
    scan = bnb_scan(S, ex1.pe, lam, R, resolution=0.01)
    elapsed = time.perf_counter() - t0
    found = np.array([r.u.coeffs for r in res if r.converged])
    oracle = scan.points()
    assert len(found) and len(oracle)
    for u in found:
        assert np.min(np.max(np.abs(oracle - u), axis=1)) <= 0.02
    for v in oracle:
        assert np.min(np.max(np.abs(found - v), axis=1)) <= 0.02
    assert elapsed <= 60.0
    detail(request, f"N={N}: {len(found)} solver points, {len(oracle)} scan minima, {elapsed:.2f} s")


# 8 ---------------------------------------------------------------------------

@crit(8, "property suites, >= 100 randomized cases each, zero failures")
@pytest.mark.parametrize("name", list(properties.SUITES))
def test_c8_property_suite(name):
    properties.SUITES[name]()
