"""Closed-form scalar expressions in one variable.

Grammar (``^`` and ``**`` both mean power)::

    expr := number | t | x | e | pi
          | expr (+|-|*|/|^) expr | -expr | (expr)
          | exp(expr) | log(expr) | ln(expr) | sqrt(expr) | abs(expr)
          | min(expr, expr) | max(expr, expr)

Exponents must be constant.  Either ``t`` or ``x`` may name the variable.
Decimal literals are kept as exact rationals so that rational inputs can be
evaluated without rounding (see :meth:`Expr.exact`).

Every node supports vectorized evaluation, symbolic differentiation, a
closed-form antiderivative where the rule set knows one, interval enclosure,
asymptotic tail expansion, and compilation to a postfix program that the
numba kernels interpret.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = [
    "Expr",
    "Const",
    "Var",
    "ExprError",
    "parse",
    "const",
    "Series",
]


class ExprError(ValueError):
    """Malformed expression or an operation the grammar cannot express."""


# postfix opcodes shared with kernels._numba
OP_CONST, OP_VAR, OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_NEG, OP_POW = range(8)
OP_EXP, OP_LOG, OP_SQRT, OP_ABS, OP_MIN, OP_MAX, OP_SELECT = range(8, 15)


class Expr:
    """Base class of expression nodes.  Nodes are immutable."""

    __slots__ = ()

    # -- evaluation ----------------------------------------------------
    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(all="ignore"):
            return self._eval(t)

    def _eval(self, t):
        raise NotImplementedError

    def exact(self, t: Fraction) -> Fraction | None:
        """Exact rational value at rational ``t`` or None."""
        return None

    # -- calculus ------------------------------------------------------
    def diff(self) -> "Expr":
        raise NotImplementedError

    def antiderivative(self) -> "Expr | None":
        poly = _as_poly(self)
        if poly is not None:
            return _poly_expr({k + 1: c / (k + 1) for k, c in poly.items()})
        return self._antiderivative()

    def _antiderivative(self) -> "Expr | None":
        return None

    # -- enclosures ----------------------------------------------------
    def interval(self, lo, hi):
        """Enclosure of the range over ``[lo, hi]`` (elementwise arrays)."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        with np.errstate(all="ignore"):
            out_lo, out_hi = self._interval(lo, hi)
        out_lo = np.where(np.isnan(out_lo), -np.inf, out_lo)
        out_hi = np.where(np.isnan(out_hi), np.inf, out_hi)
        return out_lo, out_hi

    def _interval(self, lo, hi):
        raise NotImplementedError

    def series(self, direction: int) -> "Series | None":
        """Asymptotic expansion as t -> direction * infinity."""
        return None

    # -- compilation ---------------------------------------------------
    def compile(self) -> tuple[np.ndarray, np.ndarray]:
        """Postfix program: (ops int64, consts float64)."""
        ops: list[int] = []
        consts: list[float] = []
        self._emit(ops, consts)
        return np.asarray(ops, dtype=np.int64), np.asarray(consts, dtype=np.float64)

    def _emit(self, ops, consts):
        raise NotImplementedError

    @property
    def depth(self) -> int:
        return 1

    # -- operator sugar used when building selections ------------------
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __neg__(self):
        return neg(self)


def _int_root(n: int, k: int) -> int | None:
    r = round(n ** (1.0 / k)) if n > 0 else 0
    for cand in (r - 1, r, r + 1):
        if cand >= 0 and cand**k == n:
            return cand
    return None


def _exact_root(x: Fraction, k: int) -> Fraction | None:
    num, den = _int_root(x.numerator, k), _int_root(x.denominator, k)
    if num is None or den is None:
        return None
    return Fraction(num, den)


def _wrap(value) -> Expr:
    if isinstance(value, Expr):
        return value
    return const(value)


# ----------------------------------------------------------------------
# leaves
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class Const(Expr):
    value: float
    rational: Fraction | None = None

    def _eval(self, t):
        return np.full(np.shape(t), self.value)

    def exact(self, t):
        return self.rational

    def diff(self):
        return ZERO

    def _interval(self, lo, hi):
        return np.full(np.shape(lo), self.value), np.full(np.shape(lo), self.value)

    def series(self, direction):
        return Series.constant(self.value, self.rational)

    def _emit(self, ops, consts):
        ops += [OP_CONST, len(consts)]
        consts.append(self.value)

    def __str__(self):
        if self.rational is not None and self.rational.denominator == 1:
            return str(self.rational.numerator)
        return repr(self.value)


@dataclass(frozen=True)
class Var(Expr):
    name: str = "t"

    def _eval(self, t):
        return np.array(t, dtype=float, copy=True)

    def exact(self, t):
        return t

    def diff(self):
        return ONE

    def _interval(self, lo, hi):
        return lo.copy(), hi.copy()

    def series(self, direction):
        return Series({(0.0, 1.0, 0.0): float(direction)})

    def _emit(self, ops, consts):
        ops.append(OP_VAR)

    def __str__(self):
        return self.name


def const(value) -> Const:
    """Constant node; only ints, Fractions and integral floats count as exact."""
    if isinstance(value, Fraction):
        return Const(float(value), value)
    if isinstance(value, (int, np.integer)):
        return Const(float(value), Fraction(int(value)))
    value = float(value)
    exact = Fraction(value) if math.isfinite(value) and value.is_integer() else None
    return Const(value, exact)


ZERO = Const(0.0, Fraction(0))
ONE = Const(1.0, Fraction(1))
T = Var("t")


# ----------------------------------------------------------------------
# interior nodes
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class Binary(Expr):
    left: Expr
    right: Expr

    @property
    def depth(self):
        return 1 + max(self.left.depth, self.right.depth)


@dataclass(frozen=True)
class Add(Binary):
    def _eval(self, t):
        return self.left._eval(t) + self.right._eval(t)

    def exact(self, t):
        a, b = self.left.exact(t), self.right.exact(t)
        return None if a is None or b is None else a + b

    def diff(self):
        return add(self.left.diff(), self.right.diff())

    def _antiderivative(self):
        a, b = self.left.antiderivative(), self.right.antiderivative()
        return None if a is None or b is None else add(a, b)

    def _interval(self, lo, hi):
        a0, a1 = self.left._interval(lo, hi)
        b0, b1 = self.right._interval(lo, hi)
        return a0 + b0, a1 + b1

    def series(self, direction):
        a, b = self.left.series(direction), self.right.series(direction)
        return None if a is None or b is None else a + b

    def _emit(self, ops, consts):
        self.left._emit(ops, consts)
        self.right._emit(ops, consts)
        ops.append(OP_ADD)

    def __str__(self):
        return f"({self.left} + {self.right})"


@dataclass(frozen=True)
class Sub(Binary):
    def _eval(self, t):
        return self.left._eval(t) - self.right._eval(t)

    def exact(self, t):
        a, b = self.left.exact(t), self.right.exact(t)
        return None if a is None or b is None else a - b

    def diff(self):
        return sub(self.left.diff(), self.right.diff())

    def _antiderivative(self):
        a, b = self.left.antiderivative(), self.right.antiderivative()
        return None if a is None or b is None else sub(a, b)

    def _interval(self, lo, hi):
        a0, a1 = self.left._interval(lo, hi)
        b0, b1 = self.right._interval(lo, hi)
        return a0 - b1, a1 - b0

    def series(self, direction):
        a, b = self.left.series(direction), self.right.series(direction)
        return None if a is None or b is None else a + b.scale(-1.0)

    def _emit(self, ops, consts):
        self.left._emit(ops, consts)
        self.right._emit(ops, consts)
        ops.append(OP_SUB)

    def __str__(self):
        return f"({self.left} - {self.right})"


def _imul(a0, a1, b0, b1):
    cands = np.stack([a0 * b0, a0 * b1, a1 * b0, a1 * b1])
    # 0 * inf contributes 0
    cands = np.where(np.isnan(cands), 0.0, cands)
    return cands.min(axis=0), cands.max(axis=0)


@dataclass(frozen=True)
class Mul(Binary):
    def _eval(self, t):
        return self.left._eval(t) * self.right._eval(t)

    def exact(self, t):
        a, b = self.left.exact(t), self.right.exact(t)
        return None if a is None or b is None else a * b

    def diff(self):
        return add(mul(self.left.diff(), self.right), mul(self.left, self.right.diff()))

    def _antiderivative(self):
        for c, e in ((self.left, self.right), (self.right, self.left)):
            if isinstance(c, Const):
                g = e.antiderivative()
                return None if g is None else mul(c, g)
        return None

    def _interval(self, lo, hi):
        a0, a1 = self.left._interval(lo, hi)
        b0, b1 = self.right._interval(lo, hi)
        return _imul(a0, a1, b0, b1)

    def series(self, direction):
        a, b = self.left.series(direction), self.right.series(direction)
        return None if a is None or b is None else a * b

    def _emit(self, ops, consts):
        self.left._emit(ops, consts)
        self.right._emit(ops, consts)
        ops.append(OP_MUL)

    def __str__(self):
        return f"({self.left} * {self.right})"


@dataclass(frozen=True)
class Div(Binary):
    def _eval(self, t):
        return self.left._eval(t) / self.right._eval(t)

    def exact(self, t):
        a, b = self.left.exact(t), self.right.exact(t)
        if a is None or b is None or b == 0:
            return None
        return a / b

    def diff(self):
        num = sub(mul(self.left.diff(), self.right), mul(self.left, self.right.diff()))
        return div(num, power(self.right, 2))

    def _antiderivative(self):
        if isinstance(self.right, Const) and self.right.value != 0:
            g = self.left.antiderivative()
            return None if g is None else div(g, self.right)
        if isinstance(self.left, Const):
            lin = _linear(self.right)
            if lin is not None and lin[0] != 0:
                a, _ = lin
                return mul(const(_coef(self.left) / a), Func("log", Func("abs", self.right)))
        return None

    def _interval(self, lo, hi):
        a0, a1 = self.left._interval(lo, hi)
        b0, b1 = self.right._interval(lo, hi)
        straddle = (b0 <= 0) & (b1 >= 0)
        r0 = np.where(straddle, -np.inf, 1.0 / b1)
        r1 = np.where(straddle, np.inf, 1.0 / b0)
        out0, out1 = _imul(a0, a1, r0, r1)
        return np.where(straddle, -np.inf, out0), np.where(straddle, np.inf, out1)

    def series(self, direction):
        a, b = self.left.series(direction), self.right.series(direction)
        if a is None or b is None:
            return None
        inv = b.power(-1.0)
        return None if inv is None else a * inv

    def _emit(self, ops, consts):
        self.left._emit(ops, consts)
        self.right._emit(ops, consts)
        ops.append(OP_DIV)

    def __str__(self):
        return f"({self.left} / {self.right})"


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr

    def _eval(self, t):
        return -self.arg._eval(t)

    def exact(self, t):
        a = self.arg.exact(t)
        return None if a is None else -a

    def diff(self):
        return neg(self.arg.diff())

    def _antiderivative(self):
        g = self.arg.antiderivative()
        return None if g is None else neg(g)

    def _interval(self, lo, hi):
        a0, a1 = self.arg._interval(lo, hi)
        return -a1, -a0

    def series(self, direction):
        a = self.arg.series(direction)
        return None if a is None else a.scale(-1.0)

    def _emit(self, ops, consts):
        self.arg._emit(ops, consts)
        ops.append(OP_NEG)

    @property
    def depth(self):
        return 1 + self.arg.depth

    def __str__(self):
        return f"(-{self.arg})"


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: Const

    def _eval(self, t):
        return np.power(self.base._eval(t), self.exponent.value)

    def _is_int(self):
        r = self.exponent.rational
        return r is not None and r.denominator == 1

    def exact(self, t):
        g = self.exponent.rational
        b = self.base.exact(t)
        if g is None or b is None or (b == 0 and g < 0):
            return None
        if g.denominator == 1:
            return b**g.numerator
        if b < 0:
            return None
        root = _exact_root(b, g.denominator)
        return None if root is None else root**g.numerator

    def diff(self):
        g = self.exponent.value
        return mul(mul(const(self.exponent.rational if self.exponent.rational is not None else g),
                       power(self.base, _sub_one(self.exponent))), self.base.diff())

    def _antiderivative(self):
        lin = _linear(self.base)
        if lin is None or lin[0] == 0:
            return None
        a, _ = lin
        g = self.exponent
        if g.value == -1.0:
            return mul(const(Fraction(1) / a), Func("log", Func("abs", self.base)))
        g1 = _add_one(g)
        return mul(const(1 / (_coef(g1) * a)), power(self.base, g1))

    def _interval(self, lo, hi):
        b0, b1 = self.base._interval(lo, hi)
        g = self.exponent.value
        if self._is_int():
            n = int(g)
            p0, p1 = np.power(b0, float(n)), np.power(b1, float(n))
            if n == 0:
                return np.ones_like(b0), np.ones_like(b0)
            if n > 0:
                if n % 2:
                    return p0, p1
                straddle = (b0 < 0) & (b1 > 0)
                lo_ = np.where(straddle, 0.0, np.minimum(p0, p1))
                return lo_, np.maximum(p0, p1)
            # negative integer power via reciprocal of the positive power
            pos = Pow(self.base, const(-n))
            q0, q1 = pos._interval(lo, hi)
            straddle = (q0 <= 0) & (q1 >= 0)
            return (np.where(straddle, -np.inf if n % 2 else 0.0, 1.0 / q1),
                    np.where(straddle, np.inf, 1.0 / q0))
        # fractional powers are defined for nonnegative bases only
        b0c = np.maximum(b0, 0.0)
        p0, p1 = np.power(b0c, g), np.power(b1, g)
        if g > 0:
            return p0, p1
        return p1, p0

    def series(self, direction):
        b = self.base.series(direction)
        if b is None:
            return None
        return b.power(self.exponent.value, integer=self._is_int())

    def _emit(self, ops, consts):
        self.base._emit(ops, consts)
        self.exponent._emit(ops, consts)
        ops.append(OP_POW)

    @property
    def depth(self):
        return 1 + self.base.depth

    def __str__(self):
        return f"({self.base} ^ {self.exponent})"


_FUNC_OPS = {"exp": OP_EXP, "log": OP_LOG, "sqrt": OP_SQRT, "abs": OP_ABS}


@dataclass(frozen=True)
class Func(Expr):
    name: str
    arg: Expr

    def _eval(self, t):
        a = self.arg._eval(t)
        if self.name == "exp":
            return np.exp(a)
        if self.name == "log":
            return np.log(a)
        if self.name == "sqrt":
            return np.sqrt(a)
        return np.abs(a)

    def exact(self, t):
        a = self.arg.exact(t)
        if a is None:
            return None
        if self.name == "abs":
            return abs(a)
        if self.name == "exp" and a == 0:
            return Fraction(1)
        if self.name == "log" and a == 1:
            return Fraction(0)
        if self.name == "sqrt" and a >= 0:
            return _exact_root(a, 2)
        return None

    def diff(self):
        da = self.arg.diff()
        if self.name == "exp":
            return mul(self, da)
        if self.name == "log":
            return div(da, self.arg)
        if self.name == "sqrt":
            return div(da, mul(const(2), self))
        return mul(Select(self.arg, ZERO, neg(ONE), ONE, strict=True), da)

    def _antiderivative(self):
        lin = _linear(self.arg)
        if lin is None or lin[0] == 0:
            return None
        a, _ = lin
        u = self.arg
        if self.name == "exp":
            return mul(const(Fraction(1) / a), self)
        if self.name == "log":
            return mul(const(Fraction(1) / a), sub(mul(u, self), u))
        if self.name == "sqrt":
            return mul(const(Fraction(2, 3) / a), power(u, Fraction(3, 2)))
        return mul(const(Fraction(1, 2) / a), mul(u, self))

    def _interval(self, lo, hi):
        a0, a1 = self.arg._interval(lo, hi)
        if self.name == "exp":
            return np.exp(a0), np.exp(a1)
        if self.name == "log":
            return np.log(np.maximum(a0, 0.0)), np.log(a1)
        if self.name == "sqrt":
            return np.sqrt(np.maximum(a0, 0.0)), np.sqrt(a1)
        straddle = (a0 < 0) & (a1 > 0)
        m0, m1 = np.abs(a0), np.abs(a1)
        return np.where(straddle, 0.0, np.minimum(m0, m1)), np.maximum(m0, m1)

    def series(self, direction):
        a = self.arg.series(direction)
        if a is None:
            return None
        if self.name == "sqrt":
            return a.power(0.5)
        if self.name == "abs":
            return a.abs()
        if self.name == "exp":
            return a.exp()
        return a.log()

    def _emit(self, ops, consts):
        self.arg._emit(ops, consts)
        ops.append(_FUNC_OPS[self.name])

    @property
    def depth(self):
        return 1 + self.arg.depth

    def __str__(self):
        return f"{self.name}({self.arg})"


@dataclass(frozen=True)
class MinMax(Binary):
    kind: str = "min"

    def _eval(self, t):
        f = np.minimum if self.kind == "min" else np.maximum
        return f(self.left._eval(t), self.right._eval(t))

    def exact(self, t):
        a, b = self.left.exact(t), self.right.exact(t)
        if a is None or b is None:
            return None
        return min(a, b) if self.kind == "min" else max(a, b)

    def diff(self):
        if self.kind == "min":
            return Select(self.left, self.right, self.left.diff(), self.right.diff())
        return Select(self.left, self.right, self.right.diff(), self.left.diff())

    def _interval(self, lo, hi):
        a0, a1 = self.left._interval(lo, hi)
        b0, b1 = self.right._interval(lo, hi)
        f = np.minimum if self.kind == "min" else np.maximum
        return f(a0, b0), f(a1, b1)

    def series(self, direction):
        a, b = self.left.series(direction), self.right.series(direction)
        if a is None or b is None:
            return None
        s = (a + b.scale(-1.0)).sign()
        if s is None:
            return None
        if self.kind == "min":
            return b if s > 0 else a
        return a if s > 0 else b

    def _emit(self, ops, consts):
        self.left._emit(ops, consts)
        self.right._emit(ops, consts)
        ops.append(OP_MIN if self.kind == "min" else OP_MAX)

    def __str__(self):
        return f"{self.kind}({self.left}, {self.right})"


@dataclass(frozen=True)
class Select(Expr):
    """``if_le`` where ``a <= b`` (``a < b`` when strict), else ``otherwise``.

    Produced by differentiating min/max/abs; not part of the input grammar.
    """

    a: Expr
    b: Expr
    if_le: Expr
    otherwise: Expr
    strict: bool = False

    def _eval(self, t):
        a, b = self.a._eval(t), self.b._eval(t)
        cond = a < b if self.strict else a <= b
        return np.where(cond, self.if_le._eval(t), self.otherwise._eval(t))

    def diff(self):
        return Select(self.a, self.b, self.if_le.diff(), self.otherwise.diff(), self.strict)

    def _interval(self, lo, hi):
        c0, c1 = self.if_le._interval(lo, hi)
        d0, d1 = self.otherwise._interval(lo, hi)
        return np.minimum(c0, d0), np.maximum(c1, d1)

    def _emit(self, ops, consts):
        # strict variant swaps roles: a < b  <=>  not (b <= a)
        if self.strict:
            self.b._emit(ops, consts)
            self.a._emit(ops, consts)
            self.otherwise._emit(ops, consts)
            self.if_le._emit(ops, consts)
        else:
            self.a._emit(ops, consts)
            self.b._emit(ops, consts)
            self.if_le._emit(ops, consts)
            self.otherwise._emit(ops, consts)
        ops.append(OP_SELECT)

    @property
    def depth(self):
        return 1 + max(self.a.depth, self.b.depth, self.if_le.depth, self.otherwise.depth)

    def __str__(self):
        rel = "<" if self.strict else "<="
        return f"select({self.a} {rel} {self.b}, {self.if_le}, {self.otherwise})"


# ----------------------------------------------------------------------
# smart constructors (constant folding keeps derivative trees small)
# ----------------------------------------------------------------------


def _fold(a: Const, b: Const, op) -> Const:
    if a.rational is not None and b.rational is not None:
        try:
            return const(op(a.rational, b.rational))
        except ZeroDivisionError:
            pass
    return const(op(a.value, b.value))


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold(a, b, lambda x, y: x + y)
    if isinstance(a, Const) and a.value == 0:
        return b
    if isinstance(b, Const) and b.value == 0:
        return a
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold(a, b, lambda x, y: x - y)
    if isinstance(b, Const) and b.value == 0:
        return a
    if isinstance(a, Const) and a.value == 0:
        return neg(b)
    return Sub(a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold(a, b, lambda x, y: x * y)
    for c, e in ((a, b), (b, a)):
        if isinstance(c, Const):
            if c.value == 0:
                return ZERO
            if c.value == 1:
                return e
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0:
        return _fold(a, b, lambda x, y: x / y)
    if isinstance(b, Const) and b.value == 1:
        return a
    if isinstance(a, Const) and a.value == 0:
        return ZERO
    return Div(a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return const(-a.rational) if a.rational is not None else const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def power(base: Expr, exponent) -> Expr:
    e = exponent if isinstance(exponent, Const) else const(exponent)
    if e.value == 0:
        return ONE
    if e.value == 1:
        return base
    if isinstance(base, Const):
        if e.rational is not None and e.rational.denominator == 1 and base.rational is not None:
            if base.rational != 0 or e.rational > 0:
                return const(base.rational ** e.rational.numerator)
        return const(base.value ** e.value)
    return Pow(base, e)


def _add_one(c: Const) -> Const:
    return const(c.rational + 1) if c.rational is not None else const(c.value + 1.0)


def _sub_one(c: Const) -> Const:
    return const(c.rational - 1) if c.rational is not None else const(c.value - 1.0)


# ----------------------------------------------------------------------
# polynomial and linear recognition
# ----------------------------------------------------------------------


def _coef(c: Const):
    return c.rational if c.rational is not None else c.value


def _as_poly(e: Expr) -> dict[int, object] | None:
    """Coefficients {degree: coef} if ``e`` is a polynomial in the variable."""
    if isinstance(e, Const):
        return {0: _coef(e)}
    if isinstance(e, Var):
        return {1: Fraction(1)}
    if isinstance(e, Neg):
        p = _as_poly(e.arg)
        return None if p is None else {k: -v for k, v in p.items()}
    if isinstance(e, (Add, Sub)):
        p, q = _as_poly(e.left), _as_poly(e.right)
        if p is None or q is None:
            return None
        out = dict(p)
        sign = 1 if isinstance(e, Add) else -1
        for k, v in q.items():
            out[k] = out.get(k, 0) + sign * v
        return out
    if isinstance(e, Mul):
        p, q = _as_poly(e.left), _as_poly(e.right)
        if p is None or q is None:
            return None
        out: dict[int, object] = {}
        for i, a in p.items():
            for j, b in q.items():
                out[i + j] = out.get(i + j, 0) + a * b
        return out
    if isinstance(e, Div) and isinstance(e.right, Const) and e.right.value != 0:
        p = _as_poly(e.left)
        if p is None:
            return None
        d = _coef(e.right)
        return {k: v / d for k, v in p.items()}
    if isinstance(e, Pow) and e._is_int() and e.exponent.rational >= 0:
        p = _as_poly(e.base)
        if p is None:
            return None
        out = {0: Fraction(1)}
        for _ in range(int(e.exponent.rational)):
            nxt: dict[int, object] = {}
            for i, a in out.items():
                for j, b in p.items():
                    nxt[i + j] = nxt.get(i + j, 0) + a * b
            out = nxt
        return out
    return None


def _poly_expr(coefs: dict[int, object]) -> Expr:
    out: Expr = ZERO
    for k in sorted(coefs):
        c = coefs[k]
        if c == 0:
            continue
        term = power(T, k) if k != 0 else ONE
        out = add(out, mul(const(c), term))
    return out


def _linear(e: Expr) -> tuple[float, float] | None:
    p = _as_poly(e)
    if p is None or any(k > 1 for k, v in p.items() if v != 0):
        return None
    return p.get(1, 0), p.get(0, 0)


# ----------------------------------------------------------------------
# asymptotic tail expansions
# ----------------------------------------------------------------------

Order = tuple  # (exp_rate, power, log_power)


@dataclass(frozen=True)
class Series:
    """Truncated expansion  sum c * exp(r*s) * s^p * log(s)^l  as s = |t| -> inf.

    ``floor`` marks the order below which terms are unknown (None when the
    expansion is exact).
    """

    terms: dict
    floor: Order | None = None

    @staticmethod
    def constant(value: float, rational=None) -> "Series":
        if value == 0:
            return Series({})
        return Series({(0.0, 0.0, 0.0): float(value)})

    def _clean(self) -> "Series":
        terms = {k: v for k, v in self.terms.items() if v != 0.0}
        if self.floor is not None:
            terms = {k: v for k, v in terms.items() if k > self.floor}
        return Series(terms, self.floor)

    @property
    def leading(self):
        if not self.terms:
            return None
        k = max(self.terms)
        return k, self.terms[k]

    def sign(self) -> int | None:
        """Eventual sign, or None when undecidable."""
        s = self._clean()
        lead = s.leading
        if lead is None:
            return None if s.floor is not None else 0
        return 1 if lead[1] > 0 else -1

    def scale(self, c: float) -> "Series":
        return Series({k: c * v for k, v in self.terms.items()}, self.floor)._clean()

    def __add__(self, other: "Series") -> "Series":
        terms = dict(self.terms)
        for k, v in other.terms.items():
            terms[k] = terms.get(k, 0.0) + v
        floors = [f for f in (self.floor, other.floor) if f is not None]
        return Series(terms, max(floors) if floors else None)._clean()

    def __mul__(self, other: "Series") -> "Series":
        terms: dict = {}
        for k1, v1 in self.terms.items():
            for k2, v2 in other.terms.items():
                k = tuple(a + b for a, b in zip(k1, k2))
                terms[k] = terms.get(k, 0.0) + v1 * v2
        floors = []
        if self.floor is not None and other.terms:
            floors.append(tuple(a + b for a, b in zip(self.floor, max(other.terms))))
        if other.floor is not None and self.terms:
            floors.append(tuple(a + b for a, b in zip(other.floor, max(self.terms))))
        if (self.floor is not None and not other.terms) or (other.floor is not None and not self.terms):
            return Series({}, (0.0, 0.0, 0.0))
        return Series(terms, max(floors) if floors else None)._clean()

    def _single(self) -> bool:
        return len(self.terms) == 1 and self.floor is None

    def power(self, g: float, integer: bool = False) -> "Series | None":
        s = self._clean()
        lead = s.leading
        if lead is None:
            return None
        k, c = lead
        if integer and g >= 0:
            out = Series.constant(1.0)
            for _ in range(int(g)):
                out = out * s
            return out
        if c < 0:
            if not integer:
                return None
            c_pow = c**g
        else:
            c_pow = c**g
        order = tuple(g * x for x in k)
        if s._single():
            return Series({order: c_pow})
        # relative correction is of order (next term)/(leading term)
        rest = [key for key in s.terms if key != k]
        if s.floor is not None:
            rest.append(s.floor)
        nxt = max(rest)
        floor = tuple(o + (n - m) for o, n, m in zip(order, nxt, k))
        return Series({order: c_pow}, floor)

    def abs(self) -> "Series | None":
        sg = self.sign()
        if sg is None:
            return None
        return self if sg >= 0 else self.scale(-1.0)

    def exp(self) -> "Series | None":
        s = self._clean()
        if s.floor is not None:
            return None
        const_part = s.terms.get((0.0, 0.0, 0.0), 0.0)
        rest = {k: v for k, v in s.terms.items() if k != (0.0, 0.0, 0.0)}
        if not rest:
            return Series.constant(math.exp(const_part))
        if any(k[0] != 0.0 or k[2] != 0.0 for k in rest):
            return None
        if set(rest) == {(0.0, 1.0, 0.0)}:
            return Series({(rest[(0.0, 1.0, 0.0)], 0.0, 0.0): math.exp(const_part)})
        if all(k[1] < 0 for k in rest):
            return Series({(0.0, 0.0, 0.0): math.exp(const_part)}, (0.0, max(k[1] for k in rest), 0.0))
        return None

    def log(self) -> "Series | None":
        s = self._clean()
        lead = s.leading
        if lead is None or lead[1] <= 0:
            return None
        (r, p, l), c = lead
        if r > 0:
            return Series({(0.0, 1.0, 0.0): r}, (0.0, 0.0, 1.0) if (p or l) else (0.0, 0.0, 0.0))
        if p > 0:
            return Series({(0.0, 0.0, 1.0): p}, (0.0, 0.0, 0.5) if l else (0.0, 0.0, 0.0))
        if (r, p, l) == (0.0, 0.0, 0.0):
            return Series.constant(math.log(c)) if s.floor is None else None
        return None


# ----------------------------------------------------------------------
# parsing
# ----------------------------------------------------------------------

_NAMED_CONSTANTS = {"e": math.e, "pi": math.pi}
_FUNCS = {"exp", "log", "ln", "sqrt", "abs", "min", "max"}


def parse(text: str | int | float) -> Expr:
    """Parse a grammar string (numbers are accepted as constants)."""
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return const(Fraction(str(text)) if isinstance(text, float) else text)
    if not isinstance(text, str):
        raise ExprError(f"expression must be a string or number, got {type(text).__name__}")
    src = text.strip().replace("^", "**")
    if not src:
        raise ExprError("empty expression")
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ExprError(f"cannot parse {text!r}: {exc.msg}") from None
    names: set[str] = set()
    out = _convert(tree.body, text, names)
    if len(names) > 1:
        raise ExprError(f"{text!r} mixes variables {sorted(names)}")
    return out


def _convert(node, text, names) -> Expr:
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ExprError(f"unsupported literal {node.value!r} in {text!r}")
        seg = ast.get_source_segment(text.replace("^", "**"), node)
        if isinstance(node.value, float) and seg is not None:
            try:
                return const(Fraction(seg))
            except ValueError:
                pass
        return const(node.value)
    if isinstance(node, ast.Name):
        if node.id in ("t", "x"):
            names.add(node.id)
            return Var("t")
        if node.id in _NAMED_CONSTANTS:
            return const(_NAMED_CONSTANTS[node.id])
        raise ExprError(f"unknown name {node.id!r} in {text!r}")
    if isinstance(node, ast.UnaryOp):
        arg = _convert(node.operand, text, names)
        if isinstance(node.op, ast.USub):
            return neg(arg)
        if isinstance(node.op, ast.UAdd):
            return arg
    if isinstance(node, ast.BinOp):
        left = _convert(node.left, text, names)
        right = _convert(node.right, text, names)
        if isinstance(node.op, ast.Add):
            return add(left, right)
        if isinstance(node.op, ast.Sub):
            return sub(left, right)
        if isinstance(node.op, ast.Mult):
            return mul(left, right)
        if isinstance(node.op, ast.Div):
            return div(left, right)
        if isinstance(node.op, ast.Pow):
            if not isinstance(right, Const):
                raise ExprError(f"exponent must be constant in {text!r}")
            return power(left, right)
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
        if node.keywords:
            raise ExprError(f"keyword arguments not allowed in {text!r}")
        args = [_convert(a, text, names) for a in node.args]
        name = "log" if node.func.id == "ln" else node.func.id
        if name in ("min", "max"):
            if len(args) != 2:
                raise ExprError(f"{name} takes two arguments in {text!r}")
            return MinMax(args[0], args[1], kind=name)
        if len(args) != 1:
            raise ExprError(f"{name} takes one argument in {text!r}")
        if isinstance(args[0], Const):
            folded = Func(name, args[0])(0.0)
            return const(float(folded))
        return Func(name, args[0])
    raise ExprError(f"unsupported syntax {ast.dump(node)[:40]}... in {text!r}")
