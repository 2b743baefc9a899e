"""Piecewise scalar functions, interval-valued maps and their selections.

An :class:`IntervalMap` ``F(t) = [lo(t), hi(t)]`` is described by two
:class:`PiecewiseScalar` bounds.  A :class:`SelectionKind` picks a
single-valued ``f`` with ``lo <= f <= hi``; :func:`resolve_selection` turns it
into a :class:`PotentialEval` carrying ``f`` and its potential
``J(t) = int_0^t f``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np
from scipy import integrate

from . import kernels
from .expr import ZERO, Const, Expr, add, const, mul, parse

__all__ = [
    "SetValuedError",
    "PiecewiseScalar",
    "IntervalMap",
    "SelectionKind",
    "MIN",
    "MAX",
    "MID",
    "SIGN_SWITCH",
    "PotentialEval",
    "BreakpointCheck",
    "SemicontinuityReport",
    "check_usc",
    "resolve_selection",
    "aumann_bounds",
    "filippov_envelope",
    "one_sided_limit",
]

USC_TOL = 1e-12
GRID_POINTS = 10_000
DELTA_SCHEDULE = tuple(10.0**-k for k in range(1, 7))


class SetValuedError(ValueError):
    pass


def _fraction_of(value) -> Fraction | None:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except ValueError:
            return None
    return None


def one_sided_limit(expr: Expr, t0: float, side: int, label: str = "piece") -> float:
    """lim expr(t) as t -> t0 from the left (side=-1) or right (side=+1)."""
    v = float(expr(t0))
    if math.isfinite(v):
        return v
    scale = max(1.0, abs(t0))
    vals = [float(expr(t0 + side * scale * 10.0**-k)) for k in range(6, 13)]
    if all(math.isfinite(x) for x in vals[-3:]):
        tail = vals[-3:]
        if max(tail) - min(tail) <= 1e-6 * max(1.0, abs(tail[-1])):
            return tail[-1]
    raise SetValuedError(f"{label} {expr} has no finite one-sided limit at t={t0:g}")


# ----------------------------------------------------------------------
# piecewise scalars
# ----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PiecewiseScalar:
    """Function defined by closed-form pieces between sorted breakpoints.

    ``pieces[k]`` lives on ``(breakpoints[k-1], breakpoints[k])`` with the
    outermost pieces extending to -inf / +inf.  At a breakpoint the value is
    ``point_values[k]`` when given, else the one-sided limit named by
    ``at_break`` ("right" or "left").
    """

    breakpoints: tuple
    pieces: tuple
    point_values: tuple = ()
    at_break: str = "right"
    exact_breakpoints: tuple = ()

    def __post_init__(self):
        bps = tuple(float(b) for b in self.breakpoints)
        object.__setattr__(self, "breakpoints", bps)
        pieces = tuple(p if isinstance(p, Expr) else parse(p) for p in self.pieces)
        object.__setattr__(self, "pieces", pieces)
        if len(pieces) != len(bps) + 1:
            raise SetValuedError(f"need {len(bps) + 1} pieces for {len(bps)} breakpoints, got {len(pieces)}")
        if any(not math.isfinite(b) for b in bps):
            raise SetValuedError("breakpoints must be finite")
        if any(b1 <= b0 for b0, b1 in zip(bps, bps[1:])):
            raise SetValuedError("breakpoints must be strictly increasing")
        pv = tuple(self.point_values) if self.point_values else (None,) * len(bps)
        if len(pv) != len(bps):
            raise SetValuedError("point_values must align with breakpoints")
        object.__setattr__(self, "point_values", tuple(None if v is None else float(v) for v in pv))
        if self.at_break not in ("left", "right"):
            raise SetValuedError("at_break must be 'left' or 'right'")
        ex = tuple(self.exact_breakpoints) if self.exact_breakpoints else (None,) * len(bps)
        object.__setattr__(self, "exact_breakpoints", ex)

    # -- constructors --------------------------------------------------
    @classmethod
    def constant(cls, value) -> "PiecewiseScalar":
        return cls((), (const(value),))

    @classmethod
    def from_expr(cls, expr) -> "PiecewiseScalar":
        return cls((), (expr if isinstance(expr, Expr) else parse(expr),))

    @classmethod
    def from_json(cls, obj) -> "PiecewiseScalar":
        """Accepts a number, an expression string, or the object form
        ``{"breakpoints": [...], "pieces": [...], "point_values": {bp: v}}``."""
        if isinstance(obj, (int, float, str)) and not isinstance(obj, bool):
            return cls.from_expr(parse(obj))
        if not isinstance(obj, dict):
            raise SetValuedError(f"cannot read piecewise function from {type(obj).__name__}")
        raw_bps = list(obj.get("breakpoints", []))
        bps = [float(parse(b)(0.0)) if isinstance(b, str) else float(b) for b in raw_bps]
        exact = [_fraction_of(str(b)) if not isinstance(b, str) else _fraction_of(b) for b in raw_bps]
        pieces = [parse(p) for p in obj.get("pieces", [])]
        pv: list = [None] * len(bps)
        for key, val in (obj.get("point_values") or {}).items():
            loc = float(parse(key)(0.0))
            hits = [i for i, b in enumerate(bps) if abs(b - loc) <= 1e-12 * max(1.0, abs(b))]
            if not hits:
                raise SetValuedError(f"point value given at {key}, which is not a breakpoint")
            pv[hits[0]] = float(parse(val)(0.0))
        return cls(tuple(bps), tuple(pieces), tuple(pv), obj.get("at_break", "right"), tuple(exact))

    def to_json(self) -> dict:
        out = {"breakpoints": list(self.breakpoints), "pieces": [str(p) for p in self.pieces]}
        pv = {repr(b): v for b, v in zip(self.breakpoints, self.point_values) if v is not None}
        if pv:
            out["point_values"] = pv
        return out

    # -- evaluation ----------------------------------------------------
    @cached_property
    def _program(self):
        ops, consts, op_off, c_off = [], [], [0], [0]
        try:
            for p in self.pieces:
                o, c = p.compile()
                ops.append(o)
                consts.append(c)
                op_off.append(op_off[-1] + len(o))
                c_off.append(c_off[-1] + len(c))
        except NotImplementedError:
            return None
        if max(p.depth for p in self.pieces) > 60:
            return None
        pv = np.array([0.0 if v is None else v for v in self.point_values])
        has = np.array([v is not None for v in self.point_values], dtype=np.bool_)
        return (
            np.asarray(self.breakpoints, dtype=np.float64),
            np.concatenate(ops).astype(np.int64) if ops else np.zeros(0, np.int64),
            np.asarray(op_off, dtype=np.int64),
            np.concatenate(consts).astype(np.float64) if consts else np.zeros(0),
            np.asarray(c_off, dtype=np.int64),
            pv,
            has,
            -1 if self.at_break == "left" else 1,
        )

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        prog = self._program
        if prog is not None:
            return kernels.eval_piecewise(t, *prog)
        return self._eval_python(t)

    def _eval_python(self, t):
        flat = np.atleast_1d(t).ravel()
        out = np.empty_like(flat)
        idx = self.piece_index(flat)
        for k, p in enumerate(self.pieces):
            m = idx == k
            if m.any():
                out[m] = p(flat[m])
        for i, (b, v) in enumerate(zip(self.breakpoints, self.point_values)):
            if v is not None:
                out[flat == b] = v
        return out.reshape(np.shape(t))

    def piece_index(self, t):
        side = "left" if self.at_break == "left" else "right"
        return np.searchsorted(np.asarray(self.breakpoints), t, side=side)

    def exact(self, t: Fraction) -> Fraction | None:
        """Exact value at rational t when every ingredient is rational."""
        k = int(self.piece_index(float(t)))
        val = self.pieces[k].exact(t)
        for i, b in enumerate(self.breakpoints):
            v = self.point_values[i]
            if float(t) == b and v is not None:
                # the declared value wins; the piece value is used when it agrees
                if val is not None and abs(float(val) - v) <= 1e-15 * max(1.0, abs(v)):
                    return val
                return Fraction(v) if v.is_integer() else None
        return val

    def limits(self, i: int) -> tuple[float, float]:
        """(left, right) one-sided limits at breakpoint i."""
        b = self.breakpoints[i]
        return (one_sided_limit(self.pieces[i], b, -1, f"piece {i}"),
                one_sided_limit(self.pieces[i + 1], b, +1, f"piece {i + 1}"))

    def value_at_break(self, i: int) -> float:
        v = self.point_values[i]
        if v is not None:
            return v
        left, right = self.limits(i)
        return left if self.at_break == "left" else right

    def piece_bounds(self, k: int) -> tuple[float, float]:
        lo = self.breakpoints[k - 1] if k > 0 else -math.inf
        hi = self.breakpoints[k] if k < len(self.breakpoints) else math.inf
        return lo, hi

    def pieces_on(self, lo: float, hi: float):
        """Yield (k, a, b) for pieces meeting [lo, hi], clipped to it."""
        for k in range(len(self.pieces)):
            a, b = self.piece_bounds(k)
            a, b = max(a, lo), min(b, hi)
            if a < b or (a == b and lo == hi):
                yield k, a, b

    def interval(self, lo, hi):
        """Elementwise enclosure of the range over [lo, hi] (arrays)."""
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        out_lo = np.full(lo.shape, np.inf)
        out_hi = np.full(lo.shape, -np.inf)
        edges = [-np.inf, *self.breakpoints, np.inf]
        for k, p in enumerate(self.pieces):
            a = np.maximum(lo, edges[k])
            b = np.minimum(hi, edges[k + 1])
            m = a <= b
            if not m.any():
                continue
            p0, p1 = p.interval(a[m], b[m])
            out_lo[m] = np.minimum(out_lo[m], p0)
            out_hi[m] = np.maximum(out_hi[m], p1)
        for i, b in enumerate(self.breakpoints):
            m = (lo <= b) & (b <= hi)
            if m.any():
                v = self.value_at_break(i)
                out_lo[m] = np.minimum(out_lo[m], v)
                out_hi[m] = np.maximum(out_hi[m], v)
        return out_lo, out_hi

    def derivative(self) -> "PiecewiseScalar":
        """Piecewise derivative (breakpoint values taken from the right piece)."""
        return PiecewiseScalar(self.breakpoints, tuple(p.diff() for p in self.pieces),
                               at_break=self.at_break, exact_breakpoints=self.exact_breakpoints)

    def jumps(self, tol: float = 1e-12) -> list[tuple[float, float, float]]:
        """Breakpoints where the one-sided limits differ: (t, left, right)."""
        out = []
        for i, b in enumerate(self.breakpoints):
            left, right = self.limits(i)
            if abs(left - right) > tol * max(1.0, abs(left), abs(right)):
                out.append((b, left, right))
        return out

    def default_window(self) -> tuple[float, float]:
        if not self.breakpoints:
            return -10.0, 10.0
        lo, hi = self.breakpoints[0], self.breakpoints[-1]
        pad = max(1.0, hi - lo)
        return lo - pad, hi + pad

    def sample_grid(self, window=None, n: int = GRID_POINTS) -> np.ndarray:
        lo, hi = window if window is not None else self.default_window()
        return np.unique(np.concatenate([np.linspace(lo, hi, n), [b for b in self.breakpoints if lo <= b <= hi]]))


def merge(a: PiecewiseScalar, b: PiecewiseScalar, combine, at_break="right", point=None) -> PiecewiseScalar:
    """Pointwise combination of two piecewise functions on the union of breakpoints.

    ``combine(expr_a, expr_b, t_mid)`` builds each piece; ``point(i, t)``
    supplies the value at merged breakpoint t (default: combine numerically).
    """
    exact = {}
    for src in (a, b):
        for bp, ex in zip(src.breakpoints, src.exact_breakpoints):
            if ex is not None:
                exact[bp] = ex
    bps = sorted(set(a.breakpoints) | set(b.breakpoints))
    edges = [-math.inf, *bps, math.inf]
    pieces = []
    for k in range(len(bps) + 1):
        lo, hi = edges[k], edges[k + 1]
        mid = _midpoint(lo, hi)
        ka = int(np.searchsorted(a.breakpoints, mid, side="right"))
        kb = int(np.searchsorted(b.breakpoints, mid, side="right"))
        pieces.append(combine(a.pieces[ka], b.pieces[kb], mid))
    pv = tuple(point(i, t) if point is not None else None for i, t in enumerate(bps))
    return PiecewiseScalar(tuple(bps), tuple(pieces), pv, at_break, tuple(exact.get(t) for t in bps))


def _midpoint(lo: float, hi: float) -> float:
    if math.isinf(lo) and math.isinf(hi):
        return 0.0
    if math.isinf(lo):
        return hi - 1.0
    if math.isinf(hi):
        return lo + 1.0
    return 0.5 * (lo + hi)


# ----------------------------------------------------------------------
# interval maps
# ----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class IntervalMap:
    """F(t) = [lo(t), hi(t)].

    Breakpoints without a declared value take the min (for lo) / max (for hi)
    of the two one-sided limits, which keeps F upper semicontinuous.
    """

    lo: PiecewiseScalar
    hi: PiecewiseScalar

    def __post_init__(self):
        object.__setattr__(self, "lo", _fill_breaks(self.lo, min))
        object.__setattr__(self, "hi", _fill_breaks(self.hi, max))

    @classmethod
    def single(cls, f: PiecewiseScalar) -> "IntervalMap":
        """Degenerate map {f(t)} (convexified at jumps)."""
        return cls(f, f)

    @property
    def breakpoints(self) -> tuple:
        return tuple(sorted(set(self.lo.breakpoints) | set(self.hi.breakpoints)))

    def __call__(self, t):
        return self.lo(t), self.hi(t)

    def to_json(self) -> dict:
        return {"lo": self.lo.to_json(), "hi": self.hi.to_json()}

    def default_window(self):
        a0, a1 = self.lo.default_window()
        b0, b1 = self.hi.default_window()
        return min(a0, b0), max(a1, b1)

    @cached_property
    def potentials(self) -> tuple["PiecewiseScalar", "PiecewiseScalar"]:
        return build_potential(self.lo), build_potential(self.hi)


def _fill_breaks(ps: PiecewiseScalar, pick) -> PiecewiseScalar:
    if all(v is not None for v in ps.point_values):
        return ps
    pv = []
    for i, v in enumerate(ps.point_values):
        pv.append(v if v is not None else pick(ps.limits(i)))
    return PiecewiseScalar(ps.breakpoints, ps.pieces, tuple(pv), ps.at_break, ps.exact_breakpoints)


@dataclass(frozen=True)
class BreakpointCheck:
    t: float
    lo_left: float
    lo_right: float
    lo_value: float
    hi_left: float
    hi_right: float
    hi_value: float
    lo_lsc: bool
    hi_usc: bool


@dataclass(frozen=True)
class SemicontinuityReport:
    breakpoints: list
    ordered: bool
    first_disorder: float | None
    passed: bool

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "ordered": self.ordered,
            "first_disorder": self.first_disorder,
            "breakpoints": [vars(b) for b in self.breakpoints],
        }


def check_usc(F: IntervalMap, window=None) -> SemicontinuityReport:
    """lo l.s.c. and hi u.s.c. at every breakpoint, lo <= hi on a dense grid."""
    checks = []
    for t in F.breakpoints:
        vals = []
        for ps in (F.lo, F.hi):
            if t in ps.breakpoints:
                i = ps.breakpoints.index(t)
                left, right = ps.limits(i)
                vals.append((left, right, ps.value_at_break(i)))
            else:
                k = int(ps.piece_index(t))
                v = one_sided_limit(ps.pieces[k], t, +1, f"piece {k}")
                vals.append((v, v, v))
        (ll, lr, lv), (hl, hr, hv) = vals
        tol = USC_TOL * max(1.0, abs(ll), abs(lr), abs(hl), abs(hr))
        checks.append(BreakpointCheck(t, ll, lr, lv, hl, hr, hv,
                                      lo_lsc=lv <= min(ll, lr) + tol,
                                      hi_usc=hv >= max(hl, hr) - tol))
    grid = np.unique(np.concatenate([F.lo.sample_grid(window or F.default_window()),
                                     F.hi.sample_grid(window or F.default_window())]))
    lo, hi = F(grid)
    bad_fin = ~(np.isfinite(lo) & np.isfinite(hi))
    if bad_fin.any():
        t = float(grid[np.argmax(bad_fin)])
        which = F.lo if not np.isfinite(lo[np.argmax(bad_fin)]) else F.hi
        k = int(which.piece_index(t))
        raise SetValuedError(f"piece {k} ({which.pieces[k]}) is not finite at t={t:g}")
    bad = lo > hi + USC_TOL * np.maximum(1.0, np.abs(hi))
    first = float(grid[np.argmax(bad)]) if bad.any() else None
    ok = all(c.lo_lsc and c.hi_usc for c in checks) and first is None
    return SemicontinuityReport(checks, first is None, first, ok)


# ----------------------------------------------------------------------
# selections and potentials
# ----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SelectionKind:
    tag: str
    custom: PiecewiseScalar | None = None

    def __post_init__(self):
        if self.tag not in ("MIN", "MAX", "MID", "SIGN_SWITCH", "CUSTOM"):
            raise SetValuedError(f"unknown selection {self.tag!r}")
        if (self.tag == "CUSTOM") != (self.custom is not None):
            raise SetValuedError("CUSTOM selection needs exactly one function")

    @classmethod
    def CUSTOM(cls, f: PiecewiseScalar) -> "SelectionKind":
        return cls("CUSTOM", f)

    @classmethod
    def parse(cls, obj) -> "SelectionKind":
        if isinstance(obj, str):
            return cls(obj.upper())
        if isinstance(obj, dict) and "custom" in obj:
            return cls.CUSTOM(PiecewiseScalar.from_json(obj["custom"]))
        raise SetValuedError(f"cannot read selection from {obj!r}")

    def __str__(self):
        return self.tag


MIN = SelectionKind("MIN")
MAX = SelectionKind("MAX")
MID = SelectionKind("MID")
SIGN_SWITCH = SelectionKind("SIGN_SWITCH")


class _QuadPiece(Expr):
    """offset + int_anchor^t f, by adaptive quadrature (fallback only)."""

    __slots__ = ("f", "anchor", "offset")

    def __init__(self, f: Expr, anchor: float, offset: float):
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "anchor", anchor)
        object.__setattr__(self, "offset", offset)

    def __setattr__(self, name, value):
        raise AttributeError("immutable")

    def _eval(self, t):
        flat = np.atleast_1d(t).ravel()
        out = np.empty_like(flat)
        uniq, inv = np.unique(flat, return_inverse=True)
        vals = np.array([self._one(x) for x in uniq])
        out[:] = vals[inv]
        return out.reshape(np.shape(t))

    def _one(self, x: float) -> float:
        if x == self.anchor:
            return self.offset
        val, _ = integrate.quad(lambda s: float(self.f(s)), self.anchor, x, epsrel=1e-10, epsabs=1e-13, limit=200)
        return self.offset + val

    def diff(self):
        return self.f

    def _interval(self, lo, hi):
        a, b = self._eval(lo), self._eval(hi)
        f0, f1 = self.f.interval(np.minimum(lo, self.anchor), np.maximum(hi, self.anchor))
        span = np.maximum(np.abs(f0), np.abs(f1)) * (hi - lo)
        return np.minimum(a, b) - span, np.maximum(a, b) + span

    def _emit(self, ops, consts):
        raise NotImplementedError

    def __str__(self):
        return f"quad({self.f}, {self.anchor!r})"


def _antiderivative_value(G: Expr, t: float, side: int, exact_t: Fraction | None):
    ex = G.exact(exact_t) if exact_t is not None else None
    return one_sided_limit(G, t, side, "antiderivative"), ex


def build_potential(f: PiecewiseScalar) -> PiecewiseScalar:
    """Continuous J(t) = int_0^t f with closed forms per piece where possible."""
    bps = f.breakpoints
    n = len(f.pieces)
    k0 = int(np.searchsorted(bps, 0.0, side="right"))
    J_at = {0.0: (0.0, Fraction(0))}
    pieces: list = [None] * n

    def build(k: int, anchor: float, side: int):
        p = f.pieces[k]
        G = p.antiderivative()
        Ja, Ja_exact = J_at[anchor]
        exact_anchor = _exact_point(f, anchor)
        if G is None:
            pieces[k] = _QuadPiece(p, anchor, Ja)
            return
        Ga, Ga_exact = _antiderivative_value(G, anchor, side, exact_anchor)
        if Ja_exact is not None and Ga_exact is not None:
            offset = const(Ja_exact - Ga_exact)
        else:
            offset = const(Ja - Ga)
        pieces[k] = add(G, offset) if not (isinstance(offset, Const) and offset.value == 0) else G

    def value_at(k: int, t: float, side: int):
        piece = pieces[k]
        v = one_sided_limit(piece, t, side, f"potential piece {k}")
        ex_t = _exact_point(f, t)
        ex = piece.exact(ex_t) if ex_t is not None and not isinstance(piece, _QuadPiece) else None
        return v, ex

    # the piece(s) touching 0, then walk outward
    if k0 > 0 and bps[k0 - 1] == 0.0:
        build(k0, 0.0, +1)
        build(k0 - 1, 0.0, -1)
        first, last = k0 - 1, k0
    else:
        build(k0, 0.0, +1)
        first = last = k0
    for k in range(first - 1, -1, -1):
        t = bps[k]
        J_at[t] = value_at(k + 1, t, +1)
        build(k, t, -1)
    for k in range(last + 1, n):
        t = bps[k - 1]
        J_at[t] = value_at(k - 1, t, -1)
        build(k, t, +1)
    pv = tuple(J_at[b][0] if b in J_at else None for b in bps)
    return PiecewiseScalar(bps, tuple(pieces), pv, f.at_break, f.exact_breakpoints)


def _exact_point(f: PiecewiseScalar, t: float) -> Fraction | None:
    if t == 0.0:
        return Fraction(0)
    for b, ex in zip(f.breakpoints, f.exact_breakpoints):
        if b == t and ex is not None:
            return ex
    if float(t).is_integer():
        return Fraction(int(t))
    return None


@dataclass(frozen=True, eq=False)
class PotentialEval:
    """A resolved selection f of F and its potential J."""

    F: IntervalMap
    kind: SelectionKind
    f: PiecewiseScalar
    J: PiecewiseScalar = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "J", build_potential(self.f))

    @cached_property
    def df(self) -> PiecewiseScalar:
        return self.f.derivative()

    @cached_property
    def jumps(self) -> list[tuple[float, float, float]]:
        return self.f.jumps()

    @cached_property
    def clarke(self) -> IntervalMap:
        """Filippov envelope of f: the Clarke subdifferential box of J."""
        return filippov_envelope(self.f)

    def J_exact(self, t) -> Fraction | None:
        t = _fraction_of(str(t)) if not isinstance(t, Fraction) else t
        return None if t is None else self.J.exact(t)


def resolve_selection(F: IntervalMap, kind: SelectionKind, samples=None) -> PotentialEval:
    """Single-valued f for the chosen selection, with its potential."""
    tag = kind.tag
    if tag == "MIN":
        f = F.lo
    elif tag == "MAX":
        f = F.hi
    elif tag == "MID":
        half = const(Fraction(1, 2))
        f = merge(F.lo, F.hi, lambda a, b, _: mul(half, add(a, b)),
                  point=lambda i, t: 0.5 * (float(F.lo(t)) + float(F.hi(t))))
    elif tag == "SIGN_SWITCH":
        zero = PiecewiseScalar((0.0,), (ZERO, ZERO), exact_breakpoints=(Fraction(0),))
        lo0 = merge(F.lo, zero, lambda a, _z, _m: a)
        hi0 = merge(F.hi, zero, lambda b, _z, _m: b)
        # hi on t < 0, lo on t >= 0
        f = merge(lo0, hi0, lambda a, b, mid: b if mid < 0 else a,
                  point=lambda i, t: float(F.hi(t)) if t < 0 else float(F.lo(t)))
    else:
        f = kind.custom
        grid = samples if samples is not None else _selection_grid(F, f)
        fv = f(grid)
        lo, hi = F(grid)
        tol = 1e-12 * np.maximum(1.0, np.abs(fv))
        bad = (fv < lo - tol) | (fv > hi + tol) | ~np.isfinite(fv)
        if bad.any():
            t = float(grid[np.argmax(bad)])
            raise SetValuedError(f"custom selection leaves F at t={t!r}: f={float(f(t))!r} not in [{float(F.lo(t))!r}, {float(F.hi(t))!r}]")
    pe = PotentialEval(F, kind, f)
    if tag == "SIGN_SWITCH":
        grid = samples if samples is not None else np.linspace(*F.default_window(), 41)
        lo_b = np.array([aumann_bounds(F, t)[0] for t in grid])
        if not np.allclose(pe.J(grid), lo_b, rtol=1e-9, atol=1e-10):
            raise SetValuedError("sign-switch potential does not match the lower Aumann bound")
    return pe


def _selection_grid(F: IntervalMap, f: PiecewiseScalar) -> np.ndarray:
    lo, hi = F.default_window()
    a, b = f.default_window()
    return np.unique(np.concatenate([np.linspace(min(lo, a), max(hi, b), 4001),
                                     F.breakpoints, f.breakpoints]))


def aumann_bounds(F: IntervalMap, t: float) -> tuple[float, float]:
    """Range of int_0^t w over measurable selections w of F."""
    J_lo, J_hi = F.potentials
    a, b = float(J_lo(t)), float(J_hi(t))
    return (a, b) if t >= 0 else (b, a)


# ----------------------------------------------------------------------
# Filippov envelope
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class EnvelopeLadder:
    t: float
    lo_levels: list
    hi_levels: list
    converged: bool


def filippov_envelope(g: PiecewiseScalar, delta_schedule=DELTA_SCHEDULE, report: list | None = None) -> IntervalMap:
    """[ess-liminf g, ess-limsup g] as an interval map.

    Away from breakpoints the envelope is g itself.  At a breakpoint the
    bounds are the min/max of the one-sided limits; the shrinking-window
    inf/sup over ``delta_schedule`` is computed as a cross-check and its
    convergence recorded in ``report`` when a list is passed.
    """
    delta_schedule = sorted(delta_schedule, reverse=True)
    if any(d <= 0 for d in delta_schedule):
        raise SetValuedError("delta schedule must be positive")
    lo_pv, hi_pv = [], []
    for i, t in enumerate(g.breakpoints):
        left, right = g.limits(i)
        if not (math.isfinite(left) and math.isfinite(right)):
            raise SetValuedError(f"g has a non-finite one-sided limit at t={t:g}")
        lo_pv.append(min(left, right))
        hi_pv.append(max(left, right))
        if report is not None:
            report.append(_ladder(g, i, t, delta_schedule))
    lo = PiecewiseScalar(g.breakpoints, g.pieces, tuple(lo_pv), g.at_break, g.exact_breakpoints)
    hi = PiecewiseScalar(g.breakpoints, g.pieces, tuple(hi_pv), g.at_break, g.exact_breakpoints)
    return IntervalMap(lo, hi)


def _ladder(g: PiecewiseScalar, i: int, t: float, schedule) -> EnvelopeLadder:
    """inf / sup of g over punctured windows (t - delta, t + delta)."""
    lo_lv, hi_lv = [], []
    left_piece, right_piece = g.pieces[i], g.pieces[i + 1]
    for d in schedule:
        x_l = np.linspace(t - d, t, 65)[:-1]
        x_r = np.linspace(t, t + d, 65)[1:]
        a0, a1 = _monotone_or_sampled(left_piece, t - d, t, x_l)
        b0, b1 = _monotone_or_sampled(right_piece, t, t + d, x_r)
        lo_lv.append(min(a0, b0))
        hi_lv.append(max(a1, b1))
    conv = len(schedule) < 2 or (
        abs(lo_lv[-1] - lo_lv[-2]) <= 1e-8 * max(1.0, abs(lo_lv[-1]))
        and abs(hi_lv[-1] - hi_lv[-2]) <= 1e-8 * max(1.0, abs(hi_lv[-1]))
    )
    return EnvelopeLadder(t, lo_lv, hi_lv, conv)


def _monotone_or_sampled(p: Expr, a: float, b: float, xs: np.ndarray) -> tuple[float, float]:
    d0, d1 = p.diff().interval(np.array([a]), np.array([b]))
    if d0[0] >= 0 or d1[0] <= 0:
        va = one_sided_limit(p, a, +1)
        vb = one_sided_limit(p, b, -1)
        return min(va, vb), max(va, vb)
    v = p(xs)
    v = v[np.isfinite(v)]
    return float(v.min()), float(v.max())

