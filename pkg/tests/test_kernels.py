import os
import subprocess
import sys

import numpy as np
import pytest

from odi_solve.expr import parse
from odi_solve.kernels import numba_backend, numpy_backend

nb = numba_backend()
pytestmark = pytest.mark.skipif(nb is None, reason="numba not importable")
npb = numpy_backend()


def _flat(exprs, breaks):
    ops_all, consts_all, op_off, c_off = [], [], [0], [0]
    for e in exprs:
        ops, consts = e.compile()
        ops_all.append(ops)
        consts_all.append(consts)
        op_off.append(op_off[-1] + len(ops))
        c_off.append(c_off[-1] + len(consts))
    return (np.asarray(breaks, float), np.concatenate(ops_all), np.asarray(op_off, np.int64),
            np.concatenate(consts_all), np.asarray(c_off, np.int64))


@pytest.mark.parametrize("side", [0, 1])
def test_eval_piecewise_agrees(side):
    breaks, ops, op_off, consts, c_off = _flat([parse("t^2"), parse("sqrt(t)"), parse("exp(-t)")], [0.0, 1.0])
    x = np.concatenate([np.linspace(-2, 3, 101), [0.0, 1.0]])
    pv = np.array([0.5, 2.0])
    has = np.array([True, False])
    a = nb.eval_piecewise(x, breaks, ops, op_off, consts, c_off, pv, has, side)
    b = npb.eval_piecewise(x, breaks, ops, op_off, consts, c_off, pv, has, side)
    assert np.allclose(a, b, rtol=1e-13, equal_nan=True)
    assert a[-2] == 0.5


def test_tridiag_agrees_and_solves():
    rng = np.random.default_rng(3)
    n = 50
    lower = np.concatenate([[0.0], rng.uniform(-1, 0, n - 1)])
    upper = np.concatenate([lower[1:], [0.0]])
    diag = 3.0 + rng.uniform(0, 1, n)
    rhs = rng.normal(size=n)
    x1 = nb.tridiag_solve(lower, diag, upper, rhs)
    x2 = npb.tridiag_solve(lower, diag, upper, rhs)
    A = np.diag(diag) + np.diag(lower[1:], -1) + np.diag(upper[:-1], 1)
    assert np.allclose(x1, x2, rtol=1e-12)
    assert np.allclose(A @ x1, rhs, atol=1e-12)


def test_scatter_and_weighted_tridiag_agree():
    rng = np.random.default_rng(4)
    vals = rng.normal(size=(30, 4))
    phi = np.column_stack([np.linspace(0.9, 0.1, 4), np.linspace(0.1, 0.9, 4)])
    assert np.allclose(nb.scatter_load(vals, phi), npb.scatter_load(vals, phi), rtol=1e-13)
    for a, b in zip(nb.weighted_tridiag(vals, phi), npb.weighted_tridiag(vals, phi)):
        assert np.allclose(a, b, rtol=1e-13)


def test_box_qp_grid_agrees():
    rng = np.random.default_rng(5)
    m = 6
    G = rng.normal(size=(m, m))
    G = G @ G.T + m * np.eye(m)
    c = rng.normal(size=(40, m))
    lo = -np.abs(rng.normal(size=(40, m)))
    hi = lo + np.abs(rng.normal(size=(40, m)))
    step = 1.0 / np.linalg.norm(G, 2)
    a = nb.box_qp_grid(G, c, lo, hi, step, 3000, 1e-13)
    b = npb.box_qp_grid(G, c, lo, hi, step, 3000, 1e-13)
    for x, y in zip(a if isinstance(a, tuple) else (a,), b if isinstance(b, tuple) else (b,)):
        assert np.allclose(x, y, rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("flag, expected", [("0", "numpy"), ("1", "numba")])
def test_env_flag_selects_backend(flag, expected):
    env = dict(os.environ, ODI_SOLVE_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", "import odi_solve.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == expected
