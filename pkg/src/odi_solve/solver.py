"""Critical points of the discrete energy I = Phi - lambda Psi.

Stationarity is measured by the discrete Clarke quantity

    m(u) = min { ||A u - lambda B w||_*  :  lo(u(x_q)) <= w_q <= hi(u(x_q)) }

(a box-constrained convex QP in the quadrature multipliers w).  The search
combines multi-start descent, a small-ball minimizer, a string-method
mountain pass between the two lowest minimizers, and deflated Newton
restarts.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from . import kernels
from .fem import DiscreteFunction, DiscreteSpace
from .setvalued import IntervalMap, PotentialEval, SelectionKind, resolve_selection

__all__ = [
    "TOL_STAT",
    "SEP_TOL",
    "BUDGET",
    "SolverError",
    "CriticalPointReport",
    "DeflationState",
    "BoxQPResult",
    "admissible_box",
    "box_qp",
    "stationarity_measure",
    "DiscreteEnergy",
    "SyntheticEnergy",
    "descend",
    "ball_minimize",
    "mountain_pass",
    "find_three",
    "FindThreeResult",
]

TOL_STAT = 1e-8
SEP_TOL = 1e-3
BUDGET = 50
SNAP = 1e-12
PIN_WINDOW = 1e-6

GLOBAL_MIN = "GLOBAL_MIN"
BALL_MIN = "BALL_MIN"
MOUNTAIN_PASS = "MOUNTAIN_PASS"
DEFLATED = "DEFLATED"
LOCAL_MIN = "LOCAL_MIN"


class SolverError(ValueError):
    pass


# ----------------------------------------------------------------------
# stationarity measure
# ----------------------------------------------------------------------


def admissible_box(space: DiscreteSpace, u, F: IntervalMap):
    """Quadrature values y and the box [lo(y), hi(y)], snapping to breakpoints."""
    y = space.at_quad(u)
    lo, hi = F.lo(y), F.hi(y)
    for t in F.breakpoints:
        near = np.abs(y - t) <= SNAP * max(1.0, abs(t))
        if near.any():
            lo[near] = np.minimum(lo[near], float(F.lo(t)))
            hi[near] = np.maximum(hi[near], float(F.hi(t)))
    return y, lo, hi


@dataclass(frozen=True)
class BoxQPResult:
    measure: float
    w: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    iterations: int
    residual: np.ndarray


def box_qp(space: DiscreteSpace, u, lam: float, lo, hi, w0=None, tol: float = 1e-12,
           maxit: int = 20000) -> BoxQPResult:
    """Projected gradient with Barzilai-Borwein steps on the free box entries."""
    shape = space.W.shape
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    if lo.size != space.W.size or hi.size != space.W.size:
        raise SolverError(f"box bounds need {space.W.size} entries (one per quadrature point)")
    lo, hi = lo.reshape(shape), hi.reshape(shape)
    Au = space.matvec(u)
    w = 0.5 * (lo + hi) if w0 is None else np.clip(np.asarray(w0, dtype=float).reshape(shape), lo, hi)
    free = hi > lo

    def resid(w):
        return Au - lam * space.load(w)

    r = resid(w)
    z = space.solve(r)
    obj = 0.5 * float(r @ z)
    if not free.any() or obj == 0.0:
        return BoxQPResult(math.sqrt(2 * obj), w, lo, hi, 0, r)

    def grad(z):
        # d/dw 0.5 r' A^{-1} r = -lam W * (E z)
        return -lam * space.W * space.at_quad(z)

    g = grad(z)
    scale = max(1.0, float(np.max(np.abs(w))))
    step = 1.0 / max(lam**2 * float(np.max(space.W)) * float(np.max(space.W)) * space.N, 1e-300)
    best = (obj, w.copy(), r)
    its = 0
    for its in range(1, maxit + 1):
        w_new = np.clip(w - step * g, lo, hi)
        s = w_new - w
        if float(np.max(np.abs(s))) <= tol * scale:
            break
        r_new = resid(w_new)
        z_new = space.solve(r_new)
        obj_new = 0.5 * float(r_new @ z_new)
        g_new = grad(z_new)
        yv = g_new - g
        sy = float(np.sum(s * yv))
        step = float(np.sum(s * s)) / sy if sy > 0 else step * 2.0
        w, g, obj, r = w_new, g_new, obj_new, r_new
        if obj < best[0]:
            best = (obj, w.copy(), r)
        if obj <= 1e-34:
            break
    obj, w, r = best
    return BoxQPResult(math.sqrt(max(2 * obj, 0.0)), w, lo, hi, its, r)


def stationarity_measure(space: DiscreteSpace, u, F: IntervalMap, lam: float, w0=None,
                         full: bool = False):
    """Discrete m(u) = min over admissible multipliers of ||A u - lam B(w)||_*."""
    u = u.coeffs if isinstance(u, DiscreteFunction) else np.asarray(u, dtype=float)
    _, lo, hi = admissible_box(space, u, F)
    res = box_qp(space, u, lam, lo, hi, w0=w0)
    return res if full else res.measure


# ----------------------------------------------------------------------
# reports
# ----------------------------------------------------------------------


@dataclass
class CriticalPointReport:
    u: DiscreteFunction
    kind: str
    energy: float
    stationarity: float
    iterations: int
    converged: bool
    w: np.ndarray | None = None
    phi: float = math.nan
    message: str = ""
    trace: list = field(default_factory=list)

    @property
    def sup_norm(self) -> float:
        return self.u.sup_norm

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "energy": self.energy,
            "stationarity": self.stationarity,
            "iterations": self.iterations,
            "converged": self.converged,
            "phi": self.phi,
            "sup_norm": self.sup_norm,
            "N": self.u.space.N,
            "message": self.message,
        }


@dataclass
class DeflationState:
    """Previously found points and the shifted deflation operator
    M(u) = prod_k (||u - u_k||^-p + sigma)."""

    found: list = field(default_factory=list)
    shift_power: float = 2.0
    shift_radius: float = 1.0
    sep_tol: float = SEP_TOL

    def distance(self, u) -> float:
        if not self.found:
            return math.inf
        return min(float(np.max(np.abs(u - v))) for v in self.found)

    def add(self, u) -> bool:
        """Append u unless it is within sep_tol (sup norm) of a found point."""
        if self.distance(u) < self.sep_tol:
            return False
        self.found.append(np.array(u, dtype=float))
        return True

    def factor(self, u, norm) -> tuple[float, np.ndarray | None]:
        """log M(u) and grad log M(u) (as a dual vector), given the A-norm helper."""
        if not self.found:
            return 0.0, None
        logm = 0.0
        glog = np.zeros_like(u)
        p, sig = self.shift_power, self.shift_radius
        for v in self.found:
            e = u - v
            Ae = norm.matvec(e)
            n2 = max(float(e @ Ae), 1e-300)
            t = n2 ** (-p / 2)
            logm += math.log(t + sig)
            glog += (-p * n2 ** (-p / 2 - 1) * Ae) / (t + sig)
        return logm, glog


# ----------------------------------------------------------------------
# energy landscapes
# ----------------------------------------------------------------------


class DiscreteEnergy:
    """I(u) = u'Au/2 - lam sum W J(E u) on a DiscreteSpace, with polish."""

    def __init__(self, space: DiscreteSpace, pe: PotentialEval, lam: float):
        if not lam > 0:
            raise SolverError("requires lambda > 0")
        self.space = space
        self.pe = pe
        self.lam = float(lam)
        self.box = pe.clarke
        jumps = pe.jumps
        self.jump_t = np.array([j[0] for j in jumps])
        self.jump_lim = np.array([[j[1], j[2]] for j in jumps]).reshape(-1, 2)
        self.evals = 0
        self._chol = None

    # -- basic evaluations -------------------------------------------
    @property
    def dim(self) -> int:
        return self.space.N

    def matvec(self, u):
        return self.space.matvec(u)

    def riesz(self, g):
        return self.space.solve(g)

    def norm(self, u) -> float:
        return self.space.norm(u)

    def _selection(self, y):
        f = self.pe.f(y)
        if len(self.jump_t):
            for t, (lv, rv) in zip(self.jump_t, self.jump_lim):
                near = np.abs(y - t) <= SNAP * max(1.0, abs(t))
                if near.any():
                    f[near] = 0.5 * (lv + rv)
        return f

    def value(self, u) -> float:
        self.evals += 1
        y = self.space.at_quad(u)
        return 0.5 * float(u @ self.space.matvec(u)) - self.lam * float(np.sum(self.space.W * self.pe.J(y)))

    def value_grad(self, u):
        self.evals += 1
        Au = self.space.matvec(u)
        y = self.space.at_quad(u)
        val = 0.5 * float(u @ Au) - self.lam * float(np.sum(self.space.W * self.pe.J(y)))
        return val, Au - self.lam * self.space.load(self._selection(y))

    def grad(self, u):
        return self.value_grad(u)[1]

    def phi(self, u) -> float:
        return 0.5 * float(u @ self.space.matvec(u))

    def measure(self, u, full: bool = False, w0=None):
        return stationarity_measure(self.space, u, self.box, self.lam, w0=w0, full=full)

    def hess_tridiag(self, y, mask=None):
        d = self.pe.df(y)
        d = np.where(np.isfinite(d), d, 0.0)
        if mask is not None:
            d = np.where(mask, d, 0.0)
        hl, hd, hu = self.space.weighted_tridiag(d)
        s = self.space
        return s.lower - self.lam * hl, s.diag - self.lam * hd, s.upper - self.lam * hu

    # -- metric change for quasi-Newton ---------------------------------
    def cholesky(self):
        """Upper bidiagonal U with A = U'U (diag, superdiag)."""
        if self._chol is None:
            s = self.space
            ab = np.zeros((2, s.N))
            ab[0, 1:] = s.upper[:-1]
            ab[1] = s.diag
            U = linalg.cholesky_banded(ab, lower=False)
            self._chol = (U[1].copy(), U[0, 1:].copy())
        return self._chol

    def to_z(self, u):
        d, sup = self.cholesky()
        z = d * u
        z[:-1] += sup * u[1:]
        return z

    def from_z(self, z):
        d, sup = self.cholesky()
        n = len(d)
        upper = np.zeros(n)
        upper[:-1] = sup
        return kernels.tridiag_solve(np.zeros(n), d, upper, np.ascontiguousarray(z))

    def grad_z(self, g):
        d, sup = self.cholesky()
        n = len(d)
        lower = np.zeros(n)
        lower[1:] = sup
        return kernels.tridiag_solve(lower, d, np.zeros(n), np.ascontiguousarray(g))

    # -- Newton polish ---------------------------------------------------
    def polish(self, u, maxit: int = 200, tol: float = TOL_STAT * 1e-3):
        """Active-set semismooth Newton.

        Quadrature points close to a jump of f are pinned to the jump with
        their multiplier as an extra unknown; a pin is released when the
        multiplier leaves the Clarke interval of the jump.  Progress is
        judged by the residual at the (box-clipped) Newton multipliers,
        which bounds the stationarity measure from above.
        """
        s = self.space
        u = np.array(u, dtype=float)
        T = self.jump_t
        nq = s.W.size
        y = s.at_quad(u).ravel()
        pins: dict[int, int] = {}  # quad point -> jump index
        wP: dict[int, float] = {}
        if len(T):
            for j, t in enumerate(T):
                for q in np.nonzero(np.abs(y - t) <= PIN_WINDOW * max(1.0, abs(t)))[0]:
                    pins[int(q)] = j
                    wP[int(q)] = 0.5 * float(self.jump_lim[j].sum())
        side = np.searchsorted(T, y) if len(T) else np.zeros(nq, dtype=int)
        bound, w = self._feasible_residual(u, side, wP)
        for it in range(1, maxit + 1):
            if bound <= tol:
                return u, True, it - 1, bound
            y = s.at_quad(u).ravel()
            for attempt in range(64):
                du, w_new, ok = self._newton_step(u, y, side, pins)
                if not ok:
                    m = self.measure(u, w0=w)
                    return u, m <= tol, it, m
                if not len(T):
                    break
                yn = s.at_quad(u + du).ravel()
                free = np.ones(nq, dtype=bool)
                free[list(pins)] = False
                cross = np.nonzero(free & (np.searchsorted(T, yn) != side))[0]
                if not len(cross) or attempt == 63:
                    break
                # pin the point that reaches its jump first, then re-solve
                jump_of = np.where(yn[cross] > y[cross], side[cross], side[cross] - 1)
                frac = (T[jump_of] - y[cross]) / (yn[cross] - y[cross])
                k = int(np.argmin(frac))
                pins[int(cross[k])] = int(jump_of[k])
            wP = {q: w_new[i] for i, q in enumerate(sorted(pins))}
            for q in list(pins):
                j = pins[q]
                lv, rv = self.jump_lim[j]
                lo_j, hi_j = min(lv, rv), max(lv, rv)
                wq = wP[q]
                slack = 1e-9 * max(1.0, abs(hi_j))
                if wq > hi_j + slack or wq < lo_j - slack:
                    left_is_hi = lv >= rv
                    want_hi = wq > hi_j
                    side[q] = j if (want_hi == left_is_hi) else j + 1
                    del pins[q]
                    del wP[q]
            # backtrack on the residual bound; take the full step if nothing helps
            first = None
            alpha = 1.0
            for _ in range(10):
                u_try = u + alpha * du
                side_try = side.copy()
                if len(T):
                    free = np.ones(nq, dtype=bool)
                    free[list(pins)] = False
                    side_try[free] = np.searchsorted(T, s.at_quad(u_try).ravel()[free])
                b_try, w_try = self._feasible_residual(u_try, side_try, wP)
                if first is None:
                    first = (u_try, side_try, b_try, w_try)
                if b_try < bound:
                    break
                alpha *= 0.5
            else:
                u_try, side_try, b_try, w_try = first
            u, side, bound, w = u_try, side_try, b_try, w_try
        m = self.measure(u, w0=w)
        return u, m <= tol, maxit, m

    def _feasible_residual(self, u, side, wP):
        """||A u - lam B(w)||_* at a box-feasible w: an upper bound for m(u)."""
        s = self.space
        y = s.at_quad(u).ravel()
        f, _ = self._branch(y, side)
        for q, v in wP.items():
            f[q] = v
        _, lo, hi = admissible_box(s, u, self.box)
        w = np.clip(f.reshape(s.W.shape), lo, hi)
        return s.dual_norm(s.matvec(u) - self.lam * s.load(w)), w

    def _branch(self, y, side):
        """f and f' evaluated on each point's side of the jumps."""
        T = self.jump_t
        if len(T):
            lo_edge = np.where(side > 0, np.nextafter(T[np.maximum(side - 1, 0)], np.inf), -np.inf)
            hi_edge = np.where(side < len(T), np.nextafter(T[np.minimum(side, len(T) - 1)], -np.inf), np.inf)
            y = np.clip(y, lo_edge, hi_edge)
        f = self.pe.f(y)
        d = self.pe.df(y)
        return f, np.where(np.isfinite(d), d, 0.0)

    def _newton_step(self, u, y, side, pins):
        s = self.space
        ne, nqe = s.W.shape
        nq = ne * nqe
        free = np.ones(nq, dtype=bool)
        P = sorted(pins)
        free[P] = False
        f, d = self._branch(y, side)
        f = np.where(free, f, 0.0).reshape(ne, nqe)
        d = np.where(free, d, 0.0).reshape(ne, nqe)
        hl, hd, hu = s.weighted_tridiag(d)
        Jl, Jd, Ju = s.lower - self.lam * hl, s.diag - self.lam * hd, s.upper - self.lam * hu
        R0 = s.matvec(u) - self.lam * s.load(f)
        k = len(P)
        if k == 0:
            try:
                du = s.banded_solve(Jl, Jd, Ju, -R0)
            except (linalg.LinAlgError, ValueError):
                return None, None, False
            return du, np.zeros(0), bool(np.all(np.isfinite(du)))
        # columns of C: -lam W_q phi(x_q); rows of E_P: phi(x_q)
        C = np.zeros((s.N, k))
        EP = np.zeros((k, s.N))
        for i, q in enumerate(P):
            e, kk = divmod(q, nqe)
            if e > 0:
                C[e - 1, i] = -self.lam * s.W[e, kk] * s.phi[kk, 0]
                EP[i, e - 1] = s.phi[kk, 0]
            C[e, i] = -self.lam * s.W[e, kk] * s.phi[kk, 1]
            EP[i, e] = s.phi[kk, 1]
        tb = self.jump_t[[pins[q] for q in P]]
        rhs_c = tb - y[P]
        try:
            X = s.banded_solve(Jl, Jd, Ju, np.column_stack([-R0, C]))
            if not np.all(np.isfinite(X)):
                raise linalg.LinAlgError("non-finite")
            S = EP @ X[:, 1:]
            wv = np.linalg.lstsq(S, EP @ X[:, 0] - rhs_c, rcond=None)[0]
            du = X[:, 0] - X[:, 1:] @ wv
        except (linalg.LinAlgError, ValueError):
            Jm = np.diag(Jd) + np.diag(Ju[:-1], 1) + np.diag(Jl[1:], -1)
            K = np.block([[Jm, C], [EP, np.zeros((k, k))]])
            sol = np.linalg.lstsq(K, np.concatenate([-R0, rhs_c]), rcond=None)[0]
            du, wv = sol[: s.N], sol[s.N:]
        ok = bool(np.all(np.isfinite(du)) and np.all(np.isfinite(wv)))
        return du, wv, ok

    def deflated_newton(self, u0, deflation: DeflationState, maxit: int = 80):
        """Newton on M(u) R(u) (Farrell deflation of the residual)."""
        s = self.space
        u = np.array(u0, dtype=float)
        for it in range(1, maxit + 1):
            _, R = self.value_grad(u)
            rn = s.dual_norm(R)
            if rn <= 1e-7:
                return u, it
            y = s.at_quad(u)
            Jl, Jd, Ju = self.hess_tridiag(y)
            try:
                delta = s.banded_solve(Jl, Jd, Ju, -R)
            except (linalg.LinAlgError, ValueError):
                return u, it
            if not np.all(np.isfinite(delta)):
                return u, it
            logm, glog = deflation.factor(u, s)
            tau = 1.0
            if glog is not None:
                den = 1.0 - float(glog @ delta)
                tau = 1.0 / den if abs(den) > 1e-12 else 1.0
            step = tau * delta
            merit = logm + math.log(max(rn, 1e-300))
            alpha = 1.0
            for _ in range(30):
                un = u + alpha * step
                _, Rn = self.value_grad(un)
                lm, _ = deflation.factor(un, s)
                if lm + math.log(max(s.dual_norm(Rn), 1e-300)) < merit:
                    break
                alpha *= 0.5
            u = un
        return u, maxit

    def sup_dist(self, u, v) -> float:
        return float(np.max(np.abs(u - v)))


class SyntheticEnergy:
    """A smooth landscape given by callables, with the Euclidean metric.

    Used to exercise the path-based search on analytic toys.
    """

    def __init__(self, value, grad, hess, dim: int):
        self._value, self._grad, self._hess = value, grad, hess
        self.dim = dim
        self.evals = 0

    def matvec(self, u):
        return np.asarray(u, dtype=float)

    def riesz(self, g):
        return np.asarray(g, dtype=float)

    def norm(self, u) -> float:
        return float(np.linalg.norm(u))

    def value(self, u) -> float:
        self.evals += 1
        return float(self._value(np.asarray(u, dtype=float)))

    def value_grad(self, u):
        u = np.asarray(u, dtype=float)
        return self.value(u), np.asarray(self._grad(u), dtype=float)

    def grad(self, u):
        return self.value_grad(u)[1]

    def phi(self, u) -> float:
        return 0.5 * float(np.dot(u, u))

    def measure(self, u, full: bool = False, w0=None):
        return float(np.linalg.norm(self.grad(u)))

    def polish(self, u, maxit: int = 60, tol: float = 1e-13):
        u = np.array(u, dtype=float)
        m = self.measure(u)
        for it in range(1, maxit + 1):
            if m <= tol:
                return u, True, it - 1, m
            H = np.atleast_2d(self._hess(u))
            try:
                u = u - np.linalg.solve(H, self.grad(u))
            except np.linalg.LinAlgError:
                return u, False, it, m
            m = self.measure(u)
        return u, m <= tol, maxit, m

    def sup_dist(self, u, v) -> float:
        return float(np.max(np.abs(np.asarray(u) - np.asarray(v))))


# ----------------------------------------------------------------------
# descent
# ----------------------------------------------------------------------


def _report(E, u, kind, its, trace=None, message="", tol_stat=TOL_STAT, space=None):
    if isinstance(E, DiscreteEnergy):
        res = E.measure(u, full=True)
        m, w = res.measure, res.w
        fn = DiscreteFunction(E.space, u)
    else:
        m, w = E.measure(u), None
        fn = _SyntheticFunction(np.asarray(u, dtype=float))
    return CriticalPointReport(fn, kind, E.value(u), m, its, bool(m <= tol_stat), w, E.phi(u),
                               message, list(trace or []))


@dataclass(frozen=True)
class _SyntheticFunction:
    coeffs: np.ndarray

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.coeffs))) if self.coeffs.size else 0.0

    @property
    def space(self):
        return _SyntheticSpace(self.coeffs.size)


@dataclass(frozen=True)
class _SyntheticSpace:
    N: int


def _lbfgs(E: DiscreteEnergy, u0, maxiter: int = 5000):
    """L-BFGS in the coordinates z = U u (A = U'U): Riesz-preconditioned."""
    trace = []

    def fun(z):
        u = E.from_z(z)
        val, g = E.value_grad(u)
        return val, E.grad_z(g)

    z0 = E.to_z(np.asarray(u0, dtype=float))
    trace.append(E.value(np.asarray(u0, dtype=float)))

    def cb(zk):
        trace.append(E.value(E.from_z(zk)))

    res = optimize.minimize(fun, z0, jac=True, method="L-BFGS-B", callback=cb,
                            options={"maxiter": maxiter, "maxcor": 20, "gtol": 1e-12, "ftol": 1e-16,
                                     "maxls": 40})
    return E.from_z(res.x), int(res.nit), trace


def _landscape(space, pe, lam, landscape):
    if landscape is not None:
        return landscape
    if space is None or pe is None:
        raise SolverError("need a space and a potential, or a landscape")
    return DiscreteEnergy(space, pe, lam)


def descend(space: DiscreteSpace, pe: PotentialEval, lam: float, u0, deflation: DeflationState | None = None,
            tol_stat: float = TOL_STAT, landscape=None) -> CriticalPointReport:
    """Quasi-Newton descent to a local minimizer, then semismooth Newton polish.

    With a non-empty deflation state, a result that repeats a found point is
    retried by deflated Newton from u0; a point within sep_tol of a found
    point is never returned as converged.
    """
    E = _landscape(space, pe, lam, landscape)
    u0 = np.asarray(u0.coeffs if isinstance(u0, DiscreteFunction) else u0, dtype=float)
    its = 0
    start = u0
    for attempt in range(3):
        if isinstance(E, DiscreteEnergy):
            u, k, trace = _lbfgs(E, start)
        else:
            u, k, trace = _gradient_descent(E, start)
        e_desc = E.value(u)
        up, ok, pits, _ = E.polish(u)
        its += k + pits
        if ok and E.value(up) <= e_desc + 1e-9 * max(1.0, abs(e_desc)):
            u = up
            break
        # quasi-Newton stalls when many quadrature values sit exactly on a
        # jump of f (e.g. a start whose plateau equals the jump level);
        # restart from a slightly scaled copy of the stalled iterate
        start = u * (1.0 - 1e-3 * (attempt + 1))
    rep = _report(E, u, LOCAL_MIN, its, trace, tol_stat=tol_stat)
    if deflation is not None and deflation.found and deflation.distance(u) < deflation.sep_tol:
        if isinstance(E, DiscreteEnergy):
            ud, dits = E.deflated_newton(u0, deflation)
            ud, ok, pits, _ = E.polish(ud)
            rep = _report(E, ud, DEFLATED, its + dits + pits, trace, tol_stat=tol_stat)
            if deflation.distance(ud) < deflation.sep_tol:
                rep.converged = False
                rep.message = "deflated restart returned to a known point"
        else:
            rep.converged = False
            rep.message = "descent returned to a known point"
    return rep


def _gradient_descent(E, u0, maxit: int = 10000, tol: float = 1e-13):
    u = np.array(u0, dtype=float)
    val, g = E.value_grad(u)
    trace = [val]
    step = 1.0
    for it in range(1, maxit + 1):
        d = E.riesz(g)
        slope = float(g @ d)
        if math.sqrt(max(slope, 0.0)) <= tol:
            return u, it, trace
        while True:
            un = u - step * d
            vn, gn = E.value_grad(un)
            if vn <= val - 1e-4 * step * slope or step < 1e-14:
                break
            step *= 0.5
        u, val, g = un, vn, gn
        trace.append(val)
        step = min(step * 2.0, 1e6)
    return u, maxit, trace


def ball_minimize(space: DiscreteSpace, pe: PotentialEval, lam: float, r: float, u0=None,
                  tol_stat: float = TOL_STAT, maxit: int = 20000, landscape=None) -> CriticalPointReport:
    """min I over {Phi <= r} by projected Riesz-gradient steps (radial projection)."""
    if not r > 0:
        raise SolverError("requires r > 0")
    E = _landscape(space, pe, lam, landscape)
    rad = math.sqrt(2.0 * r)

    def proj(v):
        n = E.norm(v)
        return v if n <= rad else v * (rad / n)

    u = proj(np.zeros(E.dim) if u0 is None else np.array(u0, dtype=float))
    val, g = E.value_grad(u)
    trace = [val]
    step = 1.0
    its = 0
    for its in range(1, maxit + 1):
        d = E.riesz(g)
        while True:
            un = proj(u - step * d)
            vn, gn = E.value_grad(un)
            move = un - u
            if vn <= val + 1e-4 * float(g @ move) or step < 1e-14:
                break
            step *= 0.5
        moved = E.norm(un - u)
        u, val, g = un, vn, gn
        trace.append(val)
        if moved <= 1e-13 * max(1.0, rad):
            break
        step = min(step * 2.0, 1e6)
    phi = E.phi(u)
    interior = phi < r * (1.0 - 1e-8)
    msg = ""
    if interior:
        up, ok, pits, _ = E.polish(u)
        if ok and E.phi(up) < r:
            u = up
            its += pits
    else:
        msg = "minimizer pinned to the ball boundary Phi = r"
    rep = _report(E, u, BALL_MIN, its, trace, msg, tol_stat=tol_stat)
    if not interior:
        rep.converged = False
    return rep


# ----------------------------------------------------------------------
# mountain pass
# ----------------------------------------------------------------------


def _string(E, u0, u1, P: int, iters: int):
    s = np.linspace(0.0, 1.0, P)
    path = np.array([(1 - t) * u0 + t * u1 for t in s])
    dt = np.ones(P)
    for _ in range(iters):
        for i in range(1, P - 1):
            e0, g = E.value_grad(path[i])
            d = E.riesz(g)
            slope = float(g @ d)
            while True:
                un = path[i] - dt[i] * d
                if E.value(un) <= e0 - 1e-4 * dt[i] * slope or dt[i] < 1e-12:
                    break
                dt[i] *= 0.5
            path[i] = un
            dt[i] = min(dt[i] * 2.0, 1.0)
        seg = np.array([E.norm(path[i + 1] - path[i]) for i in range(P - 1)])
        total = seg.sum()
        if total <= 0:
            break
        arc = np.concatenate([[0.0], np.cumsum(seg)]) / total
        path = np.array([np.interp(s, arc, path[:, j]) for j in range(path.shape[1])]).T.copy()
    return path


def _path_maxima(E, path, per_segment: int = 16):
    """Local maxima of I along the piecewise-linear path, highest first."""
    pts, vals = [], []
    for i in range(len(path) - 1):
        for t in np.linspace(0.0, 1.0, per_segment, endpoint=False):
            v = (1 - t) * path[i] + t * path[i + 1]
            pts.append(v)
            vals.append(E.value(v))
    pts.append(path[-1])
    vals.append(E.value(path[-1]))
    vals = np.array(vals)
    idx = [i for i in range(1, len(vals) - 1) if vals[i] >= vals[i - 1] and vals[i] >= vals[i + 1]]
    idx.sort(key=lambda i: -vals[i])
    return [(pts[i], vals[i]) for i in idx]


def mountain_pass(space: DiscreteSpace, pe: PotentialEval, lam: float, u_low, u_high, P: int = 17,
                  iters: int = 150, tol_stat: float = TOL_STAT, sep_tol: float = SEP_TOL,
                  landscape=None) -> CriticalPointReport:
    """String method between two minimizers, then Newton from the path maximum."""
    E = _landscape(space, pe, lam, landscape)
    a = np.asarray(u_low.coeffs if hasattr(u_low, "coeffs") else u_low, dtype=float)
    b = np.asarray(u_high.coeffs if hasattr(u_high, "coeffs") else u_high, dtype=float)
    if E.sup_dist(a, b) < sep_tol:
        raise SolverError("mountain pass needs two distinct endpoints")
    floor = max(E.value(a), E.value(b))
    total_its = 0
    last = None
    for attempt, n_img in enumerate((P, 2 * P - 1)):
        path = _string(E, a, b, n_img, iters * (attempt + 1))
        total_its += iters * (attempt + 1)
        for cand, _ in _path_maxima(E, path)[:6]:
            u, ok, pits, _ = E.polish(cand)
            total_its += pits
            if not ok:
                continue
            val = E.value(u)
            if min(E.sup_dist(u, a), E.sup_dist(u, b)) < sep_tol:
                continue
            if val < floor - 1e-9 * max(1.0, abs(floor)):
                continue
            return _report(E, u, MOUNTAIN_PASS, total_its, tol_stat=tol_stat)
        last = path
    rep = _report(E, last[len(last) // 2], MOUNTAIN_PASS, total_its, tol_stat=tol_stat)
    rep.converged = False
    rep.message = "path collapsed onto an endpoint"
    return rep


# ----------------------------------------------------------------------
# orchestration
# ----------------------------------------------------------------------


@dataclass
class FindThreeResult:
    reports: list
    shortfall: bool
    diagnostics: dict = field(default_factory=dict)

    def __iter__(self):
        return iter(self.reports)

    def __len__(self):
        return len(self.reports)

    def __getitem__(self, i):
        return self.reports[i]


def _test_function(space: DiscreteSpace, d: float) -> np.ndarray:
    a, b = space.a, space.b
    m = 0.5 * (a + b)
    return space.interpolate(lambda x: np.where(x < m, 2 * d * (x - a) / (b - a), d))


def _random_field(space: DiscreteSpace, rng, d: float, knots: int = 8) -> np.ndarray:
    xs = np.linspace(space.a, space.b, knots + 1)
    vals = np.concatenate([[0.0], rng.uniform(-d, d, knots)])
    return space.interpolate(lambda x: np.interp(x, xs, vals))


def find_three(space: DiscreteSpace, F: IntervalMap, kind: SelectionKind, lam: float, window,
               tol_stat: float = TOL_STAT, sep_tol: float = SEP_TOL, budget: int = BUDGET,
               seed: int = 42, pe: PotentialEval | None = None, time_limit: float | None = None) -> FindThreeResult:
    """Global min + ball min + mountain pass, with deflated restarts as fallback."""
    t_start = time.perf_counter()
    pe = pe if pe is not None else resolve_selection(F, kind)
    E = DiscreteEnergy(space, pe, lam)
    d = float(window.d)
    r = float(window.r)
    defl = DeflationState(sep_tol=sep_tol)
    found: list[CriticalPointReport] = []
    diag = {"descents": 0, "deflated_restarts": 0, "mountain_pass": None, "ball": None}

    def admit(rep: CriticalPointReport) -> bool:
        if not rep.converged:
            return False
        u = rep.u.coeffs
        for old in found:
            if float(np.max(np.abs(old.u.coeffs - u))) < sep_tol:
                # same point: keep the more specific label
                if rep.kind == BALL_MIN and old.kind in (LOCAL_MIN, DEFLATED):
                    old.kind = BALL_MIN
                return False
        found.append(rep)
        defl.add(u)
        return True

    ubar = _test_function(space, d)
    starts = [np.zeros(space.N)]
    for sgn in (1.0, -1.0):
        for sc in (0.25, 0.5, 1.0, 2.0):
            starts.append(sgn * sc * ubar)
    used = 0
    for u0 in starts:
        if used >= budget:
            break
        rep = descend(space, pe, lam, u0, tol_stat=tol_stat, landscape=E)
        used += 1
        admit(rep)
    diag["descents"] = used

    ball = ball_minimize(space, pe, lam, r, tol_stat=tol_stat, landscape=E)
    diag["ball"] = {"converged": ball.converged, "phi": ball.phi, "r": r, "message": ball.message}
    admit(ball)

    minima = sorted(found, key=lambda rp: rp.energy)
    if minima:
        if minima[0].kind != BALL_MIN:
            minima[0].kind = GLOBAL_MIN
    if len(minima) >= 2:
        lo_pair = minima[:2]
        mp = mountain_pass(space, pe, lam, lo_pair[0].u, lo_pair[1].u, tol_stat=tol_stat,
                           sep_tol=sep_tol, landscape=E)
        diag["mountain_pass"] = {"converged": mp.converged, "energy": mp.energy, "message": mp.message}
        admit(mp)

    rng = np.random.default_rng(seed)
    pool = list(starts)
    k = 0
    while len(found) < 3 and used < budget:
        if time_limit is not None and time.perf_counter() - t_start > time_limit:
            diag["stopped"] = "time limit"
            break
        u0 = pool[k] if k < len(pool) else _random_field(space, rng, d)
        k += 1
        ud, _ = E.deflated_newton(u0, defl)
        ud, ok, _, _ = E.polish(ud)
        used += 1
        diag["deflated_restarts"] += 1
        if ok and defl.distance(ud) >= sep_tol:
            admit(_report(E, ud, DEFLATED, 0, tol_stat=tol_stat))

    diag["budget_used"] = used
    diag["seconds"] = time.perf_counter() - t_start
    order = {GLOBAL_MIN: 0, BALL_MIN: 1, MOUNTAIN_PASS: 2, LOCAL_MIN: 3, DEFLATED: 4}
    found.sort(key=lambda rp: (order.get(rp.kind, 9), rp.energy))
    return FindThreeResult(found, len(found) < 3, diag)
