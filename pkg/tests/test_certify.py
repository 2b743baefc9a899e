import math

import numpy as np
import pytest

from odi_solve.certify import (
    CertifyError,
    certify,
    certify_coeffs,
    classical_residual,
    discontinuity_diagnostic,
    recertify_refined,
)
from odi_solve.fem import assemble
from odi_solve.setvalued import IntervalMap, PiecewiseScalar
from odi_solve.solver import GLOBAL_MIN, TOL_STAT, descend, find_three

ONE = PiecewiseScalar.constant(1)
ZERO = PiecewiseScalar.constant(0)
LAM = 10.0


@pytest.fixture(scope="module")
def ex1_sols(ex1):
    S = ex1.space(64)
    return S, find_three(S, ex1.spec.F, ex1.spec.selection, LAM, ex1.window, pe=ex1.pe)


def test_zero_certifies(ex1):
    S = ex1.space(32)
    cert = certify_coeffs(S, np.zeros(S.N), ex1.spec.F, LAM)
    assert cert.passed and cert.weak_residual == 0.0
    assert np.all(cert.w == 0.0)


def test_found_points_certify(ex1, ex1_sols):
    S, res = ex1_sols
    for rep in res:
        cert = certify(S, rep, ex1.spec.F, LAM, box=ex1.pe.clarke)
        assert cert.passed, cert.to_json()
        assert cert.membership_violation == 0.0
        assert cert.weak_residual <= TOL_STAT
        assert cert.weak_residual == pytest.approx(rep.stationarity, abs=1e-9)


def test_corrupted_point_fails(ex1, ex1_sols):
    S, res = ex1_sols
    rep = next(r for r in res if r.kind == GLOBAL_MIN)
    u = rep.u.coeffs.copy()
    u[S.N // 2] += 0.1
    cert = certify_coeffs(S, u, ex1.spec.F, LAM)
    assert not cert.passed and cert.weak_residual > 1e3 * TOL_STAT


def test_refuses_unconverged(ex1, ex1_sols):
    S, res = ex1_sols
    rep = descend(S, ex1.pe, LAM, np.zeros(S.N))
    rep.converged = False
    with pytest.raises(CertifyError):
        certify(S, rep, ex1.spec.F, LAM)


def test_refined_recertification(ex1, ex1_sols):
    S, res = ex1_sols
    for rep in res:
        cert = recertify_refined(S, rep.u, ex1.pe, LAM, minimizer=rep.kind in ("GLOBAL_MIN", "BALL_MIN", "LOCAL_MIN"))
        assert cert.weak_residual <= 10 * TOL_STAT
        assert cert.u.space.N == 2 * S.N


def test_single_valued_multiplier_is_f():
    f = PiecewiseScalar.from_expr("t / (1 + t^2)")
    S = assemble(0, 1, ONE, ZERO, N=16)
    u = S.interpolate(lambda x: np.cos(x))
    cert = certify_coeffs(S, u, IntervalMap.single(f), 1.0)
    assert np.max(np.abs(cert.w - f(S.at_quad(u)))) <= 1e-12


def _manufactured(N):
    S = assemble(0, 1, ONE, ZERO, N=N)
    w = np.ones_like(S.xq)
    return S, S.solve(S.load(w)), w


def test_manufactured_certificate_and_bc():
    F = IntervalMap.single(ONE)
    for N in (16, 64):
        S, u, _ = _manufactured(N)
        cert = certify_coeffs(S, u, F, 1.0)
        assert cert.passed
        assert cert.bc_residual[0] == 0.0
        assert cert.bc_residual[1] == pytest.approx(0.5 * cert.bc_bound, rel=1e-8)


def test_classical_residual_manufactured_and_zero():
    S, u, w = _manufactured(32)
    assert classical_residual(S, u, w, 1.0) <= 1e-10
    assert classical_residual(S, np.zeros(S.N), np.zeros(S.W.size), 1.0) == 0.0


def test_classical_residual_first_order():
    # -u'' + u = 1, u(0) = 0, u'(1) = 0
    res = []
    for N in (32, 64, 128):
        S = assemble(0, 1, ONE, ONE, N=N)
        w = np.ones_like(S.xq)
        u = S.solve(S.load(w))
        res.append(classical_residual(S, u, w, 1.0))
    ratios = [res[i] / res[i + 1] for i in range(2)]
    assert all(1.7 <= r <= 2.6 for r in ratios), ratios


def test_discontinuity_empty_for_continuous_g():
    S = assemble(0, 1, ONE, ZERO, N=8)
    rep = discontinuity_diagnostic(S, S.interpolate(lambda x: x), PiecewiseScalar.from_expr("exp(t)"))
    assert rep.levels == () and rep.preimage_measure == 0.0 and not rep.flagged


def test_discontinuity_constant_on_level(ex2):
    S = assemble(0, 1, ONE, ZERO, N=32)
    u = np.full(S.N, 10.0)
    rep = discontinuity_diagnostic(S, u, ex2.spec.g)
    assert rep.levels == (10.0,)
    assert rep.flagged
    assert rep.preimage_measure >= (S.N - 1) * S.h[0] - 1e-12
    assert np.all(np.abs(S.slopes(u)[1:]) == 0.0)


def test_discontinuity_below_level(ex2):
    S = assemble(0, 1, ONE, ZERO, N=32)
    rep = discontinuity_diagnostic(S, S.interpolate(lambda x: 9 * x), ex2.spec.g)
    assert rep.preimage_measure == 0.0 and rep.crossing_elements == 0
    assert math.isfinite(rep.to_json()["h"])
