import numpy as np
import pytest

from odi_solve.problem import GrowthBound
from odi_solve.scan import a_priori_radius, batch_measure, bnb_scan, grid_scan
from odi_solve.solver import stationarity_measure

LAM = 10.0
ROOTS_N2 = np.array([[0.0, 0.0], [0.3009, 0.4570], [7.238, 9.860]])


def test_a_priori_radius_solves_the_bound(ex1):
    R = a_priori_radius(LAM, 1.0, 1.0, ex1.spec.growth)
    assert R == pytest.approx(119.16, abs=0.01)
    # x = R is (up to the safety factor) the positive root of x^2 = lam L alpha (x + x^s)
    assert R**2 == pytest.approx(LAM * (R + R**1.5), rel=1e-6)
    assert a_priori_radius(2 * LAM, 1.0, 1.0, GrowthBound(1.0, 1.5)) > R


def test_batch_measure_matches_single(ex1):
    S = ex1.space(2)
    rng = np.random.default_rng(2)
    U = rng.uniform(-1, 3, (20, 2))
    bm = batch_measure(S, ex1.pe.clarke, LAM, U)
    single = [stationarity_measure(S, u, ex1.pe.clarke, LAM) for u in U]
    assert np.allclose(bm, single, rtol=1e-6, atol=1e-9)


def test_bnb_finds_all_roots_n2(ex1):
    S = ex1.space(2)
    R = a_priori_radius(LAM, 1.0, 1.0, ex1.spec.growth)
    res = bnb_scan(S, ex1.pe, LAM, R)
    pts = res.points()
    assert len(pts) == 3
    for root in ROOTS_N2:
        assert np.min(np.max(np.abs(pts - root), axis=1)) < 0.02
    # lattice points at resolution 0.01: small but nonzero measure
    assert all(m.measure < 0.05 for m in res.minima)


def test_grid_scan_interior(ex1):
    S = ex1.space(2)
    res = grid_scan(S, ex1.pe.clarke, LAM, 2.0)
    pts = res.points()
    # the global minimizer lies outside [-2, 2]^2; the other two roots are found
    assert len(pts) == 2
    for root in ROOTS_N2[:2]:
        assert np.min(np.max(np.abs(pts - root), axis=1)) < 0.02
