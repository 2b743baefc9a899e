"""Reference implementations in plain numpy (and scipy for banded solves)."""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

from ..expr import (
    OP_ABS, OP_ADD, OP_CONST, OP_DIV, OP_EXP, OP_LOG, OP_MAX, OP_MIN, OP_MUL,
    OP_NEG, OP_POW, OP_SELECT, OP_SQRT, OP_SUB, OP_VAR,
)

_BINARY = {
    OP_ADD: np.add,
    OP_SUB: np.subtract,
    OP_MUL: np.multiply,
    OP_DIV: np.divide,
    OP_POW: np.power,
    OP_MIN: np.minimum,
    OP_MAX: np.maximum,
}
_UNARY = {OP_NEG: np.negative, OP_EXP: np.exp, OP_LOG: np.log, OP_SQRT: np.sqrt, OP_ABS: np.abs}


def run_program(ops, consts, x):
    stack = []
    i = 0
    n = len(ops)
    while i < n:
        op = ops[i]
        if op == OP_CONST:
            stack.append(np.full(x.shape, consts[ops[i + 1]]))
            i += 2
            continue
        if op == OP_VAR:
            stack.append(x)
        elif op in _BINARY:
            b = stack.pop()
            a = stack.pop()
            stack.append(_BINARY[op](a, b))
        elif op in _UNARY:
            stack.append(_UNARY[op](stack.pop()))
        elif op == OP_SELECT:
            other = stack.pop()
            if_le = stack.pop()
            b = stack.pop()
            a = stack.pop()
            stack.append(np.where(a <= b, if_le, other))
        else:
            raise ValueError(f"bad opcode {op}")
        i += 1
    return stack[-1]


def eval_piecewise(x, breaks, ops, op_off, consts, c_off, pv, has_pv, side):
    x = np.asarray(x, dtype=np.float64)
    flat = np.ascontiguousarray(x.ravel())
    out = np.empty_like(flat)
    idx = np.searchsorted(breaks, flat, side="left" if side < 0 else "right")
    with np.errstate(all="ignore"):
        for k in range(len(op_off) - 1):
            mask = idx == k
            if not mask.any():
                continue
            out[mask] = run_program(ops[op_off[k]:op_off[k + 1]], consts[c_off[k]:c_off[k + 1]], flat[mask])
    if len(breaks):
        hit = np.searchsorted(breaks, flat)
        hit = np.minimum(hit, len(breaks) - 1)
        on = (breaks[hit] == flat) & has_pv[hit]
        out[on] = pv[hit[on]]
    return out.reshape(x.shape)


def tridiag_solve(lower, diag, upper, rhs):
    n = diag.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    return solve_banded((1, 1), ab, rhs, check_finite=False)


def scatter_load(vals, phi):
    """Nodal load (without node 0) from weighted element quadrature values."""
    c0 = vals @ phi[:, 0]
    c1 = vals @ phi[:, 1]
    full = np.zeros(vals.shape[0] + 1)
    full[:-1] += c0
    full[1:] += c1
    return full[1:]


def weighted_tridiag(d, phi):
    """Tridiagonal (lower, diag, upper) of sum_k d[e,k] phi_i phi_j over elements."""
    m00 = d @ (phi[:, 0] * phi[:, 0])
    m01 = d @ (phi[:, 0] * phi[:, 1])
    m11 = d @ (phi[:, 1] * phi[:, 1])
    ne = d.shape[0]
    diag = np.zeros(ne + 1)
    diag[:-1] += m00
    diag[1:] += m11
    off = np.zeros(ne + 1)
    off[1:] = m01
    lower = off[1:].copy()
    upper = np.empty(ne)
    upper[:-1] = m01[1:]
    upper[-1] = 0.0
    lower[0] = 0.0
    return lower, diag[1:], upper


def box_qp_grid(G, c, lo, hi, step, iters, tol):
    """min_w 0.5 w'Gw - c_m'w over boxes, one problem per row of (c, lo, hi).

    Returns the objective value 0.5 w'Gw - c'w at the final iterate.
    """
    w = 0.5 * (lo + hi)
    for _ in range(iters):
        g = w @ G - c
        w_new = np.clip(w - step * g, lo, hi)
        done = np.max(np.abs(w_new - w)) <= tol
        w = w_new
        if done:
            break
    return 0.5 * np.einsum("mi,ij,mj->m", w, G, w) - np.einsum("mi,mi->m", c, w)
