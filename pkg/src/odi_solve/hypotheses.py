"""Hypothesis checks and the explicit constants K, r and the window Lambda."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import integrate, optimize

from .expr import Expr, Func, add, const, mul, parse, power, sub
from .problem import GrowthBound, Number, ProblemSpec
from .setvalued import (
    MIN,
    IntervalMap,
    PiecewiseScalar,
    PotentialEval,
    SelectionKind,
    build_potential,
    check_usc,
    one_sided_limit,
    resolve_selection,
)

__all__ = [
    "HypothesisError",
    "GrowthBound",
    "Range",
    "expr_range",
    "piecewise_range",
    "EssentialBounds",
    "essential_bounds",
    "compute_K",
    "GrowthVerdict",
    "check_growth",
    "HypothesisReport",
    "check_H1",
    "check_thm_min",
    "check_H2",
    "MultiplicityWindow",
    "compute_window",
    "TestFunctionProfile",
    "profile_test_function",
    "integrate_piecewise",
]

STRICT_MARGIN = 1e-12


class HypothesisError(ValueError):
    pass


# ----------------------------------------------------------------------
# ranges of closed-form pieces
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class Range:
    inf: float
    sup: float
    inf_at: float
    sup_at: float
    inf_attained: bool
    sup_attained: bool
    inf_exact: Fraction | None = None
    sup_exact: Fraction | None = None
    conclusive: bool = True


def _tail_limit(expr: Expr, direction: int) -> float | None:
    s = expr.series(direction)
    if s is None:
        return None
    s = s._clean()
    lead = s.leading
    if lead is None:
        return 0.0 if s.floor is None or s.floor < (0.0, 0.0, 0.0) else None
    order, coef = lead
    if order > (0.0, 0.0, 0.0):
        return math.copysign(math.inf, coef)
    if order < (0.0, 0.0, 0.0):
        return 0.0
    if s.floor is not None and s.floor >= (0.0, 0.0, 0.0):
        return None
    return coef


def _samples(lo: float, hi: float, n: int) -> np.ndarray:
    if math.isfinite(lo) and math.isfinite(hi):
        return np.linspace(lo, hi, n)[1:-1]
    geo = np.logspace(-8, 4, n)
    if math.isfinite(lo):
        return lo + geo
    if math.isfinite(hi):
        return hi - geo
    return np.concatenate([-geo[::-1], [0.0], geo])


def expr_range(expr: Expr, lo: float, hi: float, lo_exact=None, hi_exact=None, n: int = 2049) -> Range:
    """inf / sup of expr over the interval (lo, hi), limits included."""
    cands = []  # (value, t, attained, exact)
    conclusive = True
    for end, ex, side in ((lo, lo_exact, +1), (hi, hi_exact, -1)):
        if math.isfinite(end):
            v = one_sided_limit(expr, end, side)
            cands.append((v, end, True, expr.exact(ex) if ex is not None else None))
        else:
            v = _tail_limit(expr, -side)
            if v is None:
                conclusive = False
            else:
                cands.append((v, end, False, None))
    d0, d1 = expr.diff().interval(np.array([lo]), np.array([hi]))
    monotone = bool(d0[0] >= 0 or d1[0] <= 0)
    if not monotone or not conclusive:
        xs = _samples(lo, hi, n)
        vs = expr(xs)
        ok = np.isfinite(vs)
        if ok.any():
            xs, vs = xs[ok], vs[ok]
            for sign in (+1, -1):
                i = int(np.argmin(sign * vs))
                t0 = xs[max(i - 1, 0)]
                t1 = xs[min(i + 1, len(xs) - 1)]
                if t1 > t0:
                    res = optimize.minimize_scalar(lambda t: sign * float(expr(t)), bounds=(t0, t1),
                                                   method="bounded",
                                                   options={"xatol": 1e-12 * max(1.0, abs(xs[i]))})
                    cand_t, cand_v = (res.x, float(expr(res.x))) if res.success else (xs[i], vs[i])
                    if sign * cand_v > sign * vs[i]:
                        cand_t, cand_v = xs[i], vs[i]
                else:
                    cand_t, cand_v = xs[i], vs[i]
                cands.append((float(cand_v), float(cand_t), True, None))
    if not cands:
        return Range(-math.inf, math.inf, lo, hi, False, False, conclusive=False)
    return _pick(cands, conclusive)


def _pick(cands, conclusive=True) -> Range:
    inf_v = min(c[0] for c in cands)
    sup_v = max(c[0] for c in cands)

    def best(v):
        tied = [c for c in cands if c[0] == v]
        exact = [c for c in tied if c[3] is not None]
        attained = [c for c in tied if c[2]]
        return (exact or attained or tied)[0], bool(attained)

    (iv, it, _, iex), ia = best(inf_v)
    (sv, st, _, sex), sa = best(sup_v)
    return Range(iv, sv, it, st, ia, sa, iex, sex, conclusive)


def piecewise_range(ps: PiecewiseScalar, lo: float, hi: float, lo_exact=None, hi_exact=None) -> Range:
    """Essential inf / sup of a piecewise function over (lo, hi)."""
    exact_bp = dict(zip(ps.breakpoints, ps.exact_breakpoints))
    cands = []
    conclusive = True
    for k, a, b in ps.pieces_on(lo, hi):
        ea = lo_exact if a == lo else exact_bp.get(a)
        eb = hi_exact if b == hi else exact_bp.get(b)
        r = expr_range(ps.pieces[k], a, b, ea, eb)
        conclusive &= r.conclusive
        cands.append((r.inf, r.inf_at, r.inf_attained, r.inf_exact))
        cands.append((r.sup, r.sup_at, r.sup_attained, r.sup_exact))
    return _pick(cands, conclusive)


def integrate_piecewise(ps_or_expr, lo: float, hi: float, weight: Expr | None = None) -> float:
    """int_lo^hi of a piecewise function (times an optional weight)."""
    ps = ps_or_expr if isinstance(ps_or_expr, PiecewiseScalar) else PiecewiseScalar.from_expr(ps_or_expr)
    total = 0.0
    for k, a, b in ps.pieces_on(lo, hi):
        if a == b:
            continue
        piece = ps.pieces[k] if weight is None else mul(ps.pieces[k], weight)
        G = piece.antiderivative()
        val = None
        if G is not None:
            try:
                val = one_sided_limit(G, b, -1) - one_sided_limit(G, a, +1)
            except ValueError:
                val = None
        if val is None or not math.isfinite(val):
            val, _ = integrate.quad(lambda x: float(piece(x)), a, b, epsabs=1e-14, epsrel=1e-12, limit=200)
        total += val
    return total


# ----------------------------------------------------------------------
# coefficients
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class EssentialBounds:
    p0: float
    p_sup: float
    q_inf: float
    q_sup: float
    p0_exact: Fraction | None = None
    p_sup_exact: Fraction | None = None
    q_inf_exact: Fraction | None = None
    q_sup_exact: Fraction | None = None

    def as_tuple(self):
        return self.p0, self.p_sup, self.q_inf, self.q_sup


def essential_bounds(p: PiecewiseScalar, q: PiecewiseScalar, a, b) -> EssentialBounds:
    a, b = Number.of(a), Number.of(b)
    if not a.value < b.value:
        raise HypothesisError("requires a < b")
    rp = piecewise_range(p, a.value, b.value, a.exact, b.exact)
    rq = piecewise_range(q, a.value, b.value, a.exact, b.exact)
    if not (rp.conclusive and rq.conclusive):
        raise HypothesisError("could not bound p or q on [a, b]")
    if not rp.inf > 0:
        raise HypothesisError(f"ellipticity violated: ess inf p = {rp.inf:g} <= 0")
    if rq.inf < 0:
        raise HypothesisError(f"sign condition violated: ess inf q = {rq.inf:g} < 0")
    if not (math.isfinite(rp.sup) and math.isfinite(rq.sup)):
        raise HypothesisError("p and q must be essentially bounded on (a, b)")
    return EssentialBounds(rp.inf, rp.sup, rq.inf, rq.sup, rp.inf_exact, rp.sup_exact, rq.inf_exact, rq.sup_exact)


def compute_K(p0, p_sup, q_sup, a, b):
    """K = 3 p0 / (12 ||p||_inf + 4 (b - a)^2 ||q||_inf); exact on rational input."""
    vals = [v.best() if isinstance(v, Number) else v for v in (p0, p_sup, q_sup, a, b)]
    if all(isinstance(v, (int, Fraction)) for v in vals):
        p0, p_sup, q_sup, a, b = (Fraction(v) for v in vals)
    else:
        p0, p_sup, q_sup, a, b = (float(v) for v in vals)
    if not p0 > 0:
        raise HypothesisError("ellipticity violated: p0 <= 0")
    return 3 * p0 / (12 * p_sup + 4 * (b - a) ** 2 * q_sup)


# ----------------------------------------------------------------------
# growth
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class GrowthVerdict:
    status: str  # "pass", "fail" or "inconclusive"
    witness: float | None
    max_ratio: float
    window: float
    tails: tuple = ()

    @property
    def passed(self) -> bool:
        return self.status == "pass"


def _bound_expr(gb: GrowthBound) -> Expr:
    return mul(const(gb.alpha), add(const(1), power(parse("abs(t)"), const(gb.s - 1.0))))


def check_growth(f, gb: GrowthBound, window: float | None = None, one_sided: bool = False) -> GrowthVerdict:
    """|f(t)| <= alpha (1 + |t|^(s-1)) on a grid plus symbolic tail dominance.

    ``one_sided`` checks f <= bound instead of |f| <= bound.
    """
    ps = f.f if isinstance(f, PotentialEval) else f
    if window is None:
        ext = max([abs(b) for b in ps.breakpoints] + [1.0])
        window = max(10.0, 2.0 * ext)
    if not window > 0:
        raise HypothesisError("growth window must be positive")
    grid = ps.sample_grid((-window, window), 20001)
    fv = ps(grid)
    mag = fv if one_sided else np.abs(fv)
    bound = gb(grid)
    with np.errstate(invalid="ignore"):
        bad = ~(mag <= bound * (1 + 1e-12))
    ratio = float(np.nanmax(mag / bound)) if np.isfinite(mag).all() else math.inf
    if bad.any():
        return GrowthVerdict("fail", float(grid[np.argmax(bad)]), ratio, window)
    # breakpoint limits (values on either side)
    for i, t in enumerate(ps.breakpoints):
        for v in ps.limits(i):
            m = v if one_sided else abs(v)
            if m > gb(t) * (1 + 1e-12):
                return GrowthVerdict("fail", t, ratio, window)
    tails = []
    status = "pass"
    bexpr = _bound_expr(gb)
    for direction, piece in ((-1, ps.pieces[0]), (+1, ps.pieces[-1])):
        mag_expr = piece if one_sided else Func("abs", piece)
        s = sub(bexpr, mag_expr).series(direction)
        sign = None if s is None else s.sign()
        if sign is None:
            tails.append((direction, "inconclusive"))
            status = "inconclusive" if status == "pass" else status
        elif sign < 0:
            tails.append((direction, "fail"))
            witness = _tail_witness(piece, gb, direction, window, one_sided)
            return GrowthVerdict("fail", witness, ratio, window, tuple(tails))
        else:
            tails.append((direction, "pass"))
    return GrowthVerdict(status, None, ratio, window, tuple(tails))


def _tail_witness(piece: Expr, gb: GrowthBound, direction: int, window: float, one_sided: bool) -> float | None:
    t = window
    for _ in range(200):
        x = direction * t
        v = float(piece(x))
        m = v if one_sided else abs(v)
        if not math.isfinite(m) or m > gb(x):
            return x
        t *= 2.0
    return None


# ----------------------------------------------------------------------
# H1 / H2
# ----------------------------------------------------------------------


@dataclass
class HypothesisReport:
    kind: str
    passed: bool
    a: Number
    b: Number
    c: Number
    d: Number
    p0: float
    K: float
    M_c: float
    M_c_at: float
    J_d: float
    lhs: float
    rhs: float
    strict: bool
    exact_arithmetic: bool
    usc: bool
    growth: GrowthVerdict | None
    J_nonneg: bool
    J_min_0d: float
    p_sup: float = math.nan
    q_inf: float = math.nan
    q_sup: float = math.nan
    K_exact: Fraction | None = None
    M_c_exact: Fraction | None = None
    J_d_exact: Fraction | None = None
    p0_exact: Fraction | None = None
    ess_inf: float | None = None
    ess_inf_attained: bool | None = None
    selection: str = "MIN"
    warnings: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def to_json(self) -> dict:
        def num(x):
            return x.value if isinstance(x, Number) else x

        out = {
            "kind": self.kind,
            "passed": self.passed,
            "selection": self.selection,
            "a": num(self.a), "b": num(self.b), "c": num(self.c), "d": num(self.d),
            "p0": self.p0, "p_sup": self.p_sup, "q_inf": self.q_inf, "q_sup": self.q_sup,
            "K": float(self.K),
            "K_exact": None if self.K_exact is None else str(self.K_exact),
            "M_c": self.M_c, "M_c_at": self.M_c_at,
            "M_c_exact": None if self.M_c_exact is None else str(self.M_c_exact),
            "J_d": self.J_d,
            "J_d_exact": None if self.J_d_exact is None else str(self.J_d_exact),
            "lhs": self.lhs, "rhs": self.rhs,
            "strict_inequality": self.strict,
            "exact_arithmetic": self.exact_arithmetic,
            "usc": self.usc,
            "J_nonneg_on_0_d": self.J_nonneg, "J_min_on_0_d": self.J_min_0d,
            "growth": None if self.growth is None else {
                "status": self.growth.status, "witness": self.growth.witness,
                "max_ratio": self.growth.max_ratio, "window": self.growth.window,
                "tails": [list(t) for t in self.growth.tails]},
            "warnings": list(self.warnings),
            "failures": list(self.failures),
        }
        if self.kind == "H2":
            out["ess_inf"] = self.ess_inf
            out["ess_inf_attained"] = self.ess_inf_attained
        return out


def _exact_coord(f: PiecewiseScalar, t: float, extra: dict) -> Fraction | None:
    if t in extra:
        return extra[t]
    for b, ex in zip(f.breakpoints, f.exact_breakpoints):
        if b == t and ex is not None:
            return ex
    if t == 0.0:
        return Fraction(0)
    return None


def _J_extreme(pe_f: PiecewiseScalar, J: PiecewiseScalar, lo: Number, hi: Number, maximize: bool):
    """max (or min) of J over [lo, hi]: endpoints, breakpoints and zeros of f."""
    known = {lo.value: lo.exact, hi.value: hi.exact}
    pts = {lo.value, hi.value}
    pts.update(b for b in pe_f.breakpoints if lo.value < b < hi.value)
    if lo.value < 0 < hi.value:
        pts.add(0.0)
    for k, a, b in pe_f.pieces_on(lo.value, hi.value):
        piece = pe_f.pieces[k]
        xs = np.linspace(a, b, 513)
        vs = piece(xs)
        ok = np.isfinite(vs)
        sgn = np.sign(vs)
        for i in np.nonzero(ok[:-1] & ok[1:] & (sgn[:-1] * sgn[1:] < 0))[0]:
            pts.add(float(optimize.brentq(lambda t: float(piece(t)), xs[i], xs[i + 1], xtol=1e-15, rtol=4e-16)))
        pts.update(float(x) for x in xs[ok & (vs == 0.0)])
        # golden-section safeguard on J directly
        jv = J(xs)
        i = int(np.argmax(jv) if maximize else np.argmin(jv))
        t0, t1 = xs[max(i - 1, 0)], xs[min(i + 1, len(xs) - 1)]
        if t1 > t0:
            sign = -1.0 if maximize else 1.0
            res = optimize.minimize_scalar(lambda t: sign * float(J(t)), bounds=(t0, t1), method="bounded",
                                           options={"xatol": 1e-12})
            pts.add(float(res.x))
    cands = []
    for t in sorted(pts):
        v = float(J(t))
        ex_t = _exact_coord(pe_f, t, known)
        ex = J.exact(ex_t) if ex_t is not None else None
        cands.append((v, t, ex))
    target = max(c[0] for c in cands) if maximize else min(c[0] for c in cands)
    tied = [c for c in cands if abs(c[0] - target) <= 1e-15 * max(1.0, abs(target))]
    chosen = next((c for c in tied if c[2] is not None), tied[0])
    return chosen


def check_H1(F: IntervalMap, kind: SelectionKind, gb: GrowthBound | None, c, d, p, q, a, b,
             pe: PotentialEval | None = None) -> HypothesisReport:
    """u.s.c., growth, J >= 0 on [0, d] and the strict window inequality."""
    c, d, a, b = (Number.of(x) for x in (c, d, a, b))
    if not 0 < c.value < d.value:
        raise HypothesisError("requires 0 < c < d")
    usc = check_usc(F)
    pe = pe if pe is not None else resolve_selection(F, kind)
    eb = essential_bounds(p, q, a, b)
    p0_best = eb.p0_exact if eb.p0_exact is not None else eb.p0
    K = compute_K(p0_best,
                  eb.p_sup_exact if eb.p_sup_exact is not None else eb.p_sup,
                  eb.q_sup_exact if eb.q_sup_exact is not None else eb.q_sup,
                  a, b)
    K_exact = K if isinstance(K, Fraction) else None
    growth = check_growth(pe, gb) if gb is not None else None

    Jmin_v, _, Jmin_ex = _J_extreme(pe.f, pe.J, Number(0.0, Fraction(0)), d, maximize=False)
    J_nonneg = (Jmin_ex >= 0) if Jmin_ex is not None else Jmin_v >= -1e-14
    Mc_v, Mc_t, Mc_ex = _J_extreme(pe.f, pe.J, Number(-c.value, None if c.exact is None else -c.exact), c, maximize=True)
    Jd_v = float(pe.J(d.value))
    Jd_ex = pe.J.exact(d.exact) if d.exact is not None else None

    exact = all(x is not None for x in (Mc_ex, Jd_ex, K_exact, c.exact, d.exact))
    if exact:
        lhs_e = Mc_ex / c.exact**2
        rhs_e = K_exact * Jd_ex / d.exact**2
        strict = lhs_e < rhs_e
        lhs, rhs = float(lhs_e), float(rhs_e)
    else:
        lhs = Mc_v / c.value**2
        rhs = float(K) * Jd_v / d.value**2
        strict = lhs < rhs - STRICT_MARGIN * abs(rhs)

    failures = []
    if not usc.passed:
        failures.append("F is not upper semicontinuous")
    if growth is not None and growth.status == "fail":
        failures.append(f"growth bound violated at t={growth.witness!r}")
    if not J_nonneg:
        failures.append(f"J_f < 0 on [0, d] (min {Jmin_v!r})")
    if not strict:
        failures.append("window inequality is not strict")
    warnings = []
    if growth is not None and growth.status == "inconclusive":
        warnings.append("growth tail dominance inconclusive")
    if growth is None:
        warnings.append("no growth bound given; growth not checked")
    return HypothesisReport(
        "H1", not failures, a, b, c, d, eb.p0, K, Mc_v, Mc_t, Jd_v, lhs, rhs, strict, exact,
        usc.passed, growth, J_nonneg, Jmin_v, eb.p_sup, eb.q_inf, eb.q_sup,
        K_exact, Mc_ex, Jd_ex, eb.p0_exact, selection=kind.tag, warnings=warnings, failures=failures,
    )


def check_thm_min(F: IntervalMap, gb: GrowthBound | None, c, d, p, q, a, b) -> HypothesisReport:
    """Special case with the MIN selection: additionally 0 <= min F."""
    rep = check_H1(F, MIN, gb, c, d, p, q, a, b)
    rng = piecewise_range(F.lo, -math.inf, math.inf)
    if not rng.conclusive:
        rep.warnings.append("sign of min F undecided on the tails")
    elif rng.inf < 0:
        rep.failures.append(f"min F takes negative values (inf {rng.inf!r})")
        rep.passed = False
    return rep


def check_H2(g: PiecewiseScalar, gb: GrowthBound | None, c, d, a, b) -> HypothesisReport:
    """Discontinuous-ODE hypotheses; on pass the report carries the window."""
    c, d, a, b = (Number.of(x) for x in (c, d, a, b))
    if not 0 < c.value < d.value:
        raise HypothesisError("requires 0 < c < d")
    failures, warnings = [], []
    growth = check_growth(g, gb, one_sided=True) if gb is not None else None
    if growth is not None and growth.status == "fail":
        failures.append(f"growth bound violated at t={growth.witness!r}")
    elif growth is not None and growth.status == "inconclusive":
        warnings.append("growth tail dominance inconclusive")

    # positivity: every piece bounded away from 0 on bounded windows
    rng = piecewise_range(g, -math.inf, math.inf)
    pos_ok = rng.conclusive
    if not rng.conclusive:
        warnings.append("essential infimum of g inconclusive on the tails")
    for k in range(len(g.pieces)):
        lo, hi = g.piece_bounds(k)
        r = expr_range(g.pieces[k], lo, hi)
        if r.inf < 0 or (r.inf == 0 and math.isfinite(r.inf_at)):
            pos_ok = False
            failures.append(f"g is not bounded away from 0 near t={r.inf_at!r}")
    if pos_ok and rng.inf <= 0:
        warnings.append(
            f"global essential infimum of g is {rng.inf!r}, approached only as |t| -> inf; "
            "g is bounded away from 0 on every bounded window"
        )
    J = build_potential(g)
    Jc, Jd = float(J(c.value)), float(J(d.value))
    Jc_ex = J.exact(c.exact) if c.exact is not None else None
    Jd_ex = J.exact(d.exact) if d.exact is not None else None
    exact = all(x is not None for x in (Jc_ex, Jd_ex, c.exact, d.exact))
    if exact:
        strict = Jc_ex / c.exact**2 < Jd_ex / (4 * d.exact**2)
        lhs, rhs = float(Jc_ex / c.exact**2), float(Jd_ex / (4 * d.exact**2))
    else:
        lhs, rhs = Jc / c.value**2, Jd / (4 * d.value**2)
        strict = lhs < rhs - STRICT_MARGIN * abs(rhs)
    if not strict:
        failures.append("window inequality is not strict")
    failures = list(dict.fromkeys(failures))
    # expressed with p = 1, q = 0 (K = 1/4) so that compute_window applies unchanged
    return HypothesisReport(
        "H2", not failures and pos_ok, a, b, c, d, 1.0, Fraction(1, 4), Jc, c.value, Jd,
        lhs, rhs, strict, exact,
        True, growth, True, 0.0, 1.0, 0.0, 0.0, Fraction(1, 4), Jc_ex, Jd_ex, Fraction(1),
        ess_inf=rng.inf, ess_inf_attained=rng.inf_attained, selection="MID",
        warnings=warnings, failures=failures,
    )


# ----------------------------------------------------------------------
# window and test function
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class MultiplicityWindow:
    c: float
    d: float
    K: float
    r: float
    lambda_lo: float
    lambda_hi: float
    p0: float
    length: float
    M_c: float
    J_d: float
    exact: bool = False
    lambda_lo_exact: Fraction | None = None
    lambda_hi_exact: Fraction | None = None

    def contains(self, lam: float) -> bool:
        return self.lambda_lo < lam < self.lambda_hi

    def to_json(self) -> dict:
        return {
            "c": self.c, "d": self.d, "K": self.K, "r": self.r,
            "lambda_lo": self.lambda_lo, "lambda_hi": self.lambda_hi,
            "lambda_lo_exact": None if self.lambda_lo_exact is None else str(self.lambda_lo_exact),
            "lambda_hi_exact": None if self.lambda_hi_exact is None else str(self.lambda_hi_exact),
            "p0": self.p0, "b_minus_a": self.length, "M_c": self.M_c, "J_d": self.J_d,
        }


def compute_window(report: HypothesisReport) -> MultiplicityWindow:
    """Lambda = (p0 d^2 / (2K L^2 J(d)), p0 c^2 / (2 L^2 M_c)), with 1/0 = inf."""
    if not report.passed:
        raise HypothesisError("window requested for a failed hypothesis check: " + "; ".join(report.failures))
    a, b, c, d = report.a, report.b, report.c, report.d
    L = b.value - a.value
    p0, K = report.p0, float(report.K)
    lo = p0 * d.value**2 / (2 * K * L**2 * report.J_d)
    hi = math.inf if report.M_c == 0 else p0 * c.value**2 / (2 * L**2 * report.M_c)
    r = c.value**2 * p0 / (2 * L)
    lo_ex = hi_ex = None
    ex_in = (a.exact, b.exact, c.exact, d.exact, report.p0_exact, report.K_exact, report.J_d_exact, report.M_c_exact)
    if all(x is not None for x in ex_in):
        Le = b.exact - a.exact
        lo_ex = report.p0_exact * d.exact**2 / (2 * report.K_exact * Le**2 * report.J_d_exact)
        if report.M_c_exact != 0:
            hi_ex = report.p0_exact * c.exact**2 / (2 * Le**2 * report.M_c_exact)
        lo = float(lo_ex)
        hi = float(hi_ex) if hi_ex is not None else math.inf
    if not lo < hi:
        raise HypothesisError("degenerate window")
    return MultiplicityWindow(c.value, d.value, K, r, lo, hi, p0, L, report.M_c, report.J_d,
                              lo_ex is not None, lo_ex, hi_ex)


@dataclass(frozen=True)
class TestFunctionProfile:
    d: float
    phi_bar: float
    psi_bar: float
    psi_bar_lower: float
    phi_bounds: tuple
    r: float
    ratio: float
    phi_hat_inv: float
    contained: bool

    def to_json(self) -> dict:
        return {
            "d": self.d, "phi_bar": self.phi_bar, "psi_bar": self.psi_bar,
            "psi_bar_lower": self.psi_bar_lower, "phi_bounds": list(self.phi_bounds),
            "r": self.r, "phi_over_psi": self.ratio, "inv_phi_hat": self.phi_hat_inv,
            "contained": self.contained,
        }


def profile_test_function(spec: ProblemSpec, w: MultiplicityWindow, pe: PotentialEval | None = None) -> TestFunctionProfile:
    """Energies of the ramp-then-plateau test function and the window containment."""
    pe = pe if pe is not None else resolve_selection(spec.F, spec.selection)
    a, b = spec.a.value, spec.b.value
    L, d, m = b - a, w.d, 0.5 * (spec.a.value + spec.b.value)
    eb = essential_bounds(spec.p, spec.q, spec.a, spec.b)
    ramp_sq = power(sub(parse("t"), const(a)), const(2))
    phi = (2 * d**2 / L**2) * integrate_piecewise(spec.p, a, m)
    phi += (2 * d**2 / L**2) * integrate_piecewise(spec.q, a, m, weight=ramp_sq)
    phi += 0.5 * d**2 * integrate_piecewise(spec.q, m, b)
    psi = L / (2 * d) * integrate_piecewise(pe.J, 0.0, d) + 0.5 * L * float(pe.J(d))
    psi_lower = 0.5 * L * float(pe.J(d))
    bounds = (d**2 * eb.p0 / L, d**2 * eb.p0 / (4 * w.K * L))
    phi_hat = 2 * L**2 * w.M_c / (w.c**2 * eb.p0)
    inv_phi_hat = math.inf if phi_hat == 0 else 1.0 / phi_hat
    ratio = phi / psi if psi > 0 else math.inf
    tol = 1e-10
    checks = [
        bounds[0] * (1 - tol) <= phi <= bounds[1] * (1 + tol),
        phi > w.r,
        w.lambda_lo >= ratio * (1 - tol),
        w.lambda_hi <= inv_phi_hat * (1 + tol) if math.isfinite(w.lambda_hi) else not math.isfinite(inv_phi_hat),
    ]
    if not all(checks):
        raise HypothesisError(
            "internal consistency: test-function bounds or window containment failed "
            f"(phi={phi!r}, bounds={bounds!r}, r={w.r!r}, ratio={ratio!r}, 1/phi_hat={inv_phi_hat!r})"
        )
    return TestFunctionProfile(d, phi, psi, psi_lower, bounds, w.r, ratio, inv_phi_hat, True)
