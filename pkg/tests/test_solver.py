import itertools
from types import SimpleNamespace

import numpy as np
import pytest

from odi_solve.fem import assemble
from odi_solve.setvalued import IntervalMap, PiecewiseScalar, SelectionKind, resolve_selection
from odi_solve.solver import (
    BALL_MIN,
    GLOBAL_MIN,
    MOUNTAIN_PASS,
    TOL_STAT,
    DeflationState,
    DiscreteEnergy,
    SolverError,
    SyntheticEnergy,
    admissible_box,
    ball_minimize,
    box_qp,
    descend,
    find_three,
    mountain_pass,
    stationarity_measure,
)

LAM = 10.0


@pytest.fixture(scope="module")
def ex1_64(ex1):
    S = ex1.space(64)
    res = find_three(S, ex1.spec.F, ex1.spec.selection, LAM, ex1.window, pe=ex1.pe)
    return S, res


def dual_residual(S, u, lam, w):
    return S.dual_norm(S.matvec(u) - lam * S.load(w.reshape(S.W.shape)))


def test_measure_zero_at_origin(ex1):
    S = ex1.space(16)
    for lam in (1.0, 10.0, 100.0):
        assert stationarity_measure(S, np.zeros(S.N), ex1.spec.F, lam) == 0.0


def test_measure_single_valued_equals_selection_residual():
    f = PiecewiseScalar.from_expr("t^2 / (1 + t^2)")
    F = IntervalMap.single(f)
    S = assemble(0, 1, PiecewiseScalar.constant(1), PiecewiseScalar.constant(0), N=20)
    u = S.interpolate(lambda x: np.sin(3 * x))
    m = stationarity_measure(S, u, F, 2.0)
    assert m == pytest.approx(dual_residual(S, u, 2.0, f(S.at_quad(u))), rel=1e-10, abs=1e-14)


def test_measure_matches_brute_force_grid(ex1):
    S = ex1.space(3, quad_order=1)
    assert S.W.size == 3
    rng = np.random.default_rng(11)
    for _ in range(3):
        u = rng.uniform(0.6, 1.6, 3)
        lam = 2.0
        _, lo, hi = admissible_box(S, u, ex1.spec.F)
        qp = box_qp(S, u, lam, lo, hi)
        axes = [np.linspace(l, h, 50) for l, h in zip(lo.ravel(), hi.ravel())]
        best = min(dual_residual(S, u, lam, np.array(w)) for w in itertools.product(*axes))
        assert qp.measure <= best + 1e-12
        assert best - qp.measure <= 1e-3
        assert np.all(qp.w >= lo) and np.all(qp.w <= hi)


def test_descend_from_small_hat(ex1):
    S = ex1.space(2)
    hat = S.interpolate(lambda x: 0.01 * np.minimum(x / 0.5, 1.0))
    rep = descend(S, ex1.pe, LAM, hat)
    assert rep.converged and rep.stationarity <= TOL_STAT
    assert np.all(np.diff(rep.trace) <= 1e-12 * np.maximum(1.0, np.abs(rep.trace[:-1])))


def test_descend_zero_potential():
    pe = resolve_selection(IntervalMap.single(PiecewiseScalar.constant(0)), SelectionKind("MIN"))
    S = assemble(0, 1, PiecewiseScalar.constant(1), PiecewiseScalar.constant(0), N=16)
    rep = descend(S, pe, 5.0, np.linspace(1, 2, 16))
    assert rep.converged and rep.sup_norm < 1e-10


def test_find_three_example1(ex1_64):
    S, res = ex1_64
    assert not res.shortfall and len(res) >= 3
    kinds = {r.kind for r in res}
    assert {GLOBAL_MIN, BALL_MIN, MOUNTAIN_PASS} <= kinds
    for r in res:
        assert r.converged and r.stationarity <= TOL_STAT
    for a, b in itertools.combinations(res, 2):
        assert np.max(np.abs(a.u.coeffs - b.u.coeffs)) >= 1e-3
    gmin = next(r for r in res if r.kind == GLOBAL_MIN)
    mp = next(r for r in res if r.kind == MOUNTAIN_PASS)
    assert gmin.energy == min(r.energy for r in res)
    assert mp.energy > 0


def test_reported_measure_independent_of_deflation(ex1, ex1_64):
    S, res = ex1_64
    for r in res:
        assert stationarity_measure(S, r.u.coeffs, ex1.pe.clarke, LAM) == pytest.approx(r.stationarity, abs=1e-12)


def test_deflation_never_returns_found_point(ex1, ex1_64):
    S, res = ex1_64
    defl = DeflationState(sep_tol=1e-3)
    for r in res:
        defl.add(r.u.coeffs)
    for r in res:
        again = descend(S, ex1.pe, LAM, r.u.coeffs, deflation=defl)
        if again.converged:
            assert defl.distance(again.u.coeffs) >= defl.sep_tol


def test_deflation_state_separation():
    defl = DeflationState(sep_tol=1e-3)
    assert defl.add(np.zeros(3))
    assert not defl.add(np.full(3, 5e-4))
    assert defl.add(np.full(3, 2e-3))
    assert len(defl.found) == 2


def test_ball_minimizer_interior(ex1):
    S = ex1.space(32)
    rep = ball_minimize(S, ex1.pe, LAM, ex1.window.r)
    assert rep.converged and rep.phi < ex1.window.r


@pytest.mark.parametrize("r", [1e-2, 1e-4, 1e-8])
def test_ball_shrinking(ex1, r):
    S = ex1.space(16)
    u0 = S.interpolate(lambda x: 3 * x)
    rep = ball_minimize(S, ex1.pe, LAM, r, u0=u0)
    assert rep.phi <= r * (1 + 1e-12)
    assert rep.sup_norm <= np.sqrt(2 * r) + 1e-12


def test_ball_zero_potential():
    pe = resolve_selection(IntervalMap.single(PiecewiseScalar.constant(0)), SelectionKind("MIN"))
    S = assemble(0, 1, PiecewiseScalar.constant(1), PiecewiseScalar.constant(0), N=8)
    rep = ball_minimize(S, pe, 1.0, 0.01, u0=np.ones(8))
    assert rep.converged and rep.sup_norm < 1e-10 and rep.phi < 0.01


def test_ball_requires_positive_radius(ex1):
    with pytest.raises(SolverError):
        ball_minimize(ex1.space(4), ex1.pe, LAM, 0.0)


def test_mountain_pass_double_well():
    E = SyntheticEnergy(lambda u: (u[0] ** 2 - 1) ** 2,
                        lambda u: np.array([4 * u[0] * (u[0] ** 2 - 1)]),
                        lambda u: np.array([[12 * u[0] ** 2 - 4]]), 1)
    rep = mountain_pass(None, None, 0.0, np.array([-1.0]), np.array([1.0]), landscape=E)
    assert rep.converged
    assert rep.u.coeffs[0] == pytest.approx(0.0, abs=1e-10)
    assert rep.energy == pytest.approx(1.0, abs=1e-12)


def test_mountain_pass_requires_distinct_endpoints(ex1):
    S = ex1.space(4)
    with pytest.raises(SolverError):
        mountain_pass(S, ex1.pe, LAM, np.zeros(4), np.zeros(4))


def test_mountain_pass_example1(ex1, ex1_64):
    S, res = ex1_64
    gmin = next(r for r in res if r.kind == GLOBAL_MIN)
    rep = mountain_pass(S, ex1.pe, LAM, np.zeros(S.N), gmin.u)
    assert rep.converged and rep.energy > 0
    assert rep.energy >= max(0.0, gmin.energy)


def test_zero_potential_shortfall():
    F = IntervalMap.single(PiecewiseScalar.constant(0))
    S = assemble(0, 1, PiecewiseScalar.constant(1), PiecewiseScalar.constant(0), N=16)
    res = find_three(S, F, SelectionKind("MIN"), 1.0, SimpleNamespace(d=1.0, r=0.005), budget=10)
    assert res.shortfall
    assert len(res) == 1 and res[0].sup_norm < 1e-10


def test_symmetry_under_odd_reflection(ex1, ex1_64):
    S, res = ex1_64
    lo = PiecewiseScalar.from_json({"breakpoints": [-1, 0], "pieces": ["-t^2", "-sqrt(-t)", "0"]})
    hi = PiecewiseScalar.from_json({"breakpoints": [-1, 0], "pieces": ["-sqrt(-t)", "-t^2", "0"]})
    Ft = IntervalMap(lo, hi)
    t = np.linspace(-3, 3, 61)
    assert np.allclose(Ft.lo(t), -ex1.spec.F.hi(-t)) and np.allclose(Ft.hi(t), -ex1.spec.F.lo(-t))
    mirrored = find_three(S, Ft, SelectionKind("MAX"), LAM, ex1.window)
    assert len(mirrored) == len(res)
    for r in res:
        assert min(np.max(np.abs(m.u.coeffs + r.u.coeffs)) for m in mirrored) < 1e-3


def test_energy_object_consistency(ex1):
    S = ex1.space(16)
    E = DiscreteEnergy(S, ex1.pe, LAM)
    u = S.interpolate(lambda x: 0.4 + x)
    assert np.allclose(E.from_z(E.to_z(u)), u)
    v, g = E.value_grad(u)
    h = 1e-6
    e = np.zeros(S.N)
    e[5] = h
    assert (E.value(u + e) - E.value(u - e)) / (2 * h) == pytest.approx(g[5], rel=1e-6)


def test_report_json(ex1_64):
    _, res = ex1_64
    js = res[0].to_json()
    assert {"kind", "energy", "stationarity", "converged", "iterations"} <= set(js)
