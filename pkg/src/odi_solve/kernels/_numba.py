"""numba-compiled versions of the hot loops in ``_numpy``."""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from ..expr import (
    OP_ABS, OP_ADD, OP_CONST, OP_DIV, OP_EXP, OP_LOG, OP_MAX, OP_MIN, OP_MUL,
    OP_NEG, OP_POW, OP_SELECT, OP_SQRT, OP_SUB, OP_VAR,
)

_STACK = 64


@njit(cache=True)
def _run(ops, o0, o1, consts, c0, x, stack):
    sp = 0
    i = o0
    while i < o1:
        op = ops[i]
        if op == OP_CONST:
            stack[sp] = consts[c0 + ops[i + 1]]
            sp += 1
            i += 2
            continue
        if op == OP_VAR:
            stack[sp] = x
            sp += 1
        elif op == OP_NEG:
            stack[sp - 1] = -stack[sp - 1]
        elif op == OP_EXP:
            stack[sp - 1] = math.exp(stack[sp - 1])
        elif op == OP_LOG:
            v = stack[sp - 1]
            if v > 0.0:
                stack[sp - 1] = math.log(v)
            elif v == 0.0:
                stack[sp - 1] = -np.inf
            else:
                stack[sp - 1] = np.nan
        elif op == OP_SQRT:
            v = stack[sp - 1]
            stack[sp - 1] = math.sqrt(v) if v >= 0.0 else np.nan
        elif op == OP_ABS:
            stack[sp - 1] = abs(stack[sp - 1])
        elif op == OP_SELECT:
            other = stack[sp - 1]
            if_le = stack[sp - 2]
            b = stack[sp - 3]
            a = stack[sp - 4]
            sp -= 3
            stack[sp - 1] = if_le if a <= b else other
        else:
            b = stack[sp - 1]
            a = stack[sp - 2]
            sp -= 1
            if op == OP_ADD:
                r = a + b
            elif op == OP_SUB:
                r = a - b
            elif op == OP_MUL:
                r = a * b
            elif op == OP_DIV:
                if b != 0.0:
                    r = a / b
                elif a == 0.0 or a != a:
                    r = np.nan
                else:
                    r = math.copysign(np.inf, a) * math.copysign(1.0, b)
            elif op == OP_POW:
                if a < 0.0 and b != math.floor(b):
                    r = np.nan
                elif a == 0.0 and b < 0.0:
                    r = np.inf
                else:
                    r = a**b
            elif op == OP_MIN:
                r = min(a, b)
            else:
                r = max(a, b)
            stack[sp - 1] = r
        i += 1
    return stack[sp - 1]


@njit(cache=True)
def _eval_flat(x, breaks, ops, op_off, consts, c_off, pv, has_pv, side, out):
    stack = np.empty(_STACK)
    nb = breaks.shape[0]
    for j in range(x.shape[0]):
        xv = x[j]
        if side < 0:
            k = np.searchsorted(breaks, xv, side="left")
        else:
            k = np.searchsorted(breaks, xv, side="right")
        if nb > 0:
            h = np.searchsorted(breaks, xv)
            if h < nb and breaks[h] == xv and has_pv[h]:
                out[j] = pv[h]
                continue
        out[j] = _run(ops, op_off[k], op_off[k + 1], consts, c_off[k], xv, stack)


def eval_piecewise(x, breaks, ops, op_off, consts, c_off, pv, has_pv, side):
    x = np.asarray(x, dtype=np.float64)
    flat = np.ascontiguousarray(x.ravel())
    out = np.empty_like(flat)
    _eval_flat(flat, breaks, ops, op_off, consts, c_off, pv, has_pv, side, out)
    return out.reshape(x.shape)


@njit(cache=True)
def tridiag_solve(lower, diag, upper, rhs):
    n = diag.shape[0]
    cp = np.empty(n)
    dp = np.empty(n)
    cp[0] = upper[0] / diag[0]
    dp[0] = rhs[0] / diag[0]
    for i in range(1, n):
        m = diag[i] - lower[i] * cp[i - 1]
        cp[i] = upper[i] / m
        dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / m
    x = np.empty(n)
    x[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


@njit(cache=True)
def scatter_load(vals, phi):
    ne, nq = vals.shape
    out = np.zeros(ne)
    for e in range(ne):
        s0 = 0.0
        s1 = 0.0
        for k in range(nq):
            s0 += vals[e, k] * phi[k, 0]
            s1 += vals[e, k] * phi[k, 1]
        if e > 0:
            out[e - 1] += s0
        out[e] += s1
    return out


@njit(cache=True)
def weighted_tridiag(d, phi):
    ne, nq = d.shape
    lower = np.zeros(ne)
    diag = np.zeros(ne)
    upper = np.zeros(ne)
    for e in range(ne):
        m00 = 0.0
        m01 = 0.0
        m11 = 0.0
        for k in range(nq):
            m00 += d[e, k] * phi[k, 0] * phi[k, 0]
            m01 += d[e, k] * phi[k, 0] * phi[k, 1]
            m11 += d[e, k] * phi[k, 1] * phi[k, 1]
        # element e joins full nodes e, e+1 -> dofs e-1, e
        if e > 0:
            diag[e - 1] += m00
            upper[e - 1] = m01
            lower[e] = m01
        diag[e] += m11
    return lower, diag, upper


@njit(cache=True)
def box_qp_grid(G, c, lo, hi, step, iters, tol):
    m, n = c.shape
    out = np.empty(m)
    w = np.empty(n)
    g = np.empty(n)
    for r in range(m):
        for i in range(n):
            w[i] = 0.5 * (lo[r, i] + hi[r, i])
        for _ in range(iters):
            for i in range(n):
                s = -c[r, i]
                for j in range(n):
                    s += G[i, j] * w[j]
                g[i] = s
            delta = 0.0
            for i in range(n):
                v = w[i] - step * g[i]
                if v < lo[r, i]:
                    v = lo[r, i]
                elif v > hi[r, i]:
                    v = hi[r, i]
                dv = abs(v - w[i])
                if dv > delta:
                    delta = dv
                w[i] = v
            if delta <= tol:
                break
        val = 0.0
        for i in range(n):
            s = 0.0
            for j in range(n):
                s += G[i, j] * w[j]
            val += 0.5 * w[i] * s - c[r, i] * w[i]
        out[r] = val
    return out
