"""P1 finite elements on [a, b] with u(a) = 0 eliminated.

Degrees of freedom are the nodal values at x_1, ..., x_N; the natural
condition u'(b) = 0 needs no constraint.  The stiffness-plus-mass matrix A is
stored as three diagonals (lower, diag, upper), with ``lower[0]`` and
``upper[-1]`` unused.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import solve_banded

from . import kernels
from .setvalued import PiecewiseScalar, PotentialEval

__all__ = [
    "FEMError",
    "DiscreteSpace",
    "DiscreteFunction",
    "EnergyReport",
    "FDCheck",
    "assemble",
    "energy",
    "sup_norm_ratio",
    "fd_gradient_check",
    "profile_csv",
    "multiplier_csv",
]


class FEMError(ValueError):
    pass


def _gauss(order: int):
    xi, wt = np.polynomial.legendre.leggauss(order)
    return 0.5 * (xi + 1.0), 0.5 * wt


@dataclass(frozen=True, eq=False)
class DiscreteSpace:
    """Mesh, quadrature and assembled inner-product matrix."""

    nodes: np.ndarray
    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    xi: np.ndarray
    wt: np.ndarray
    p: PiecewiseScalar | None = None
    q: PiecewiseScalar | None = None
    meta: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return len(self.nodes) - 1

    @property
    def a(self) -> float:
        return float(self.nodes[0])

    @property
    def b(self) -> float:
        return float(self.nodes[-1])

    @cached_property
    def h(self) -> np.ndarray:
        return np.diff(self.nodes)

    @cached_property
    def phi(self) -> np.ndarray:
        return np.column_stack([1.0 - self.xi, self.xi])

    @cached_property
    def W(self) -> np.ndarray:
        """Physical quadrature weights, shape (elements, points)."""
        return np.outer(self.h, self.wt)

    @cached_property
    def xq(self) -> np.ndarray:
        return self.nodes[:-1, None] + np.outer(self.h, self.xi)

    @cached_property
    def dense(self) -> np.ndarray:
        return (np.diag(self.diag) + np.diag(self.upper[:-1], 1) + np.diag(self.lower[1:], -1))

    # -- linear algebra --------------------------------------------------
    def matvec(self, u: np.ndarray) -> np.ndarray:
        out = self.diag * u
        out[:-1] += self.upper[:-1] * u[1:]
        out[1:] += self.lower[1:] * u[:-1]
        return out

    def solve(self, g: np.ndarray) -> np.ndarray:
        """Riesz map A^{-1} g."""
        return kernels.tridiag_solve(self.lower, self.diag, self.upper, np.ascontiguousarray(g, dtype=float))

    def inner(self, u, v) -> float:
        return float(u @ self.matvec(v))

    def norm(self, u) -> float:
        return math.sqrt(max(self.inner(u, u), 0.0))

    def dual_norm(self, g) -> float:
        """sqrt(g' A^{-1} g): the discrete dual norm."""
        return math.sqrt(max(float(g @ self.solve(g)), 0.0))

    # -- function values -------------------------------------------------
    def full(self, u) -> np.ndarray:
        return np.concatenate([[0.0], u])

    def at_quad(self, u) -> np.ndarray:
        U = self.full(u)
        return np.outer(U[:-1], self.phi[:, 0]) + np.outer(U[1:], self.phi[:, 1])

    def load(self, vals) -> np.ndarray:
        """Load vector sum_q W_q vals_q phi_i(x_q) for vals at quadrature points."""
        return kernels.scatter_load(np.ascontiguousarray(self.W * vals), self.phi)

    def load_matrix(self) -> np.ndarray:
        """Dense B with load(vals) = B @ vals.ravel() (small meshes only)."""
        ne, nq = self.W.shape
        B = np.zeros((self.N, ne * nq))
        for e in range(ne):
            for k in range(nq):
                col = e * nq + k
                if e > 0:
                    B[e - 1, col] += self.W[e, k] * self.phi[k, 0]
                B[e, col] += self.W[e, k] * self.phi[k, 1]
        return B

    def weighted_tridiag(self, d) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Tridiagonal of E' diag(W d) E, i.e. the Hessian of sum W J(Eu) for d = f'."""
        return kernels.weighted_tridiag(np.ascontiguousarray(self.W * d), self.phi)

    def slopes(self, u) -> np.ndarray:
        return np.diff(self.full(u)) / self.h

    def interpolate(self, func) -> np.ndarray:
        return np.asarray(func(self.nodes[1:]), dtype=float)

    def sup_norm(self, u) -> float:
        return float(np.max(np.abs(u))) if len(u) else 0.0

    def evaluate(self, u, x) -> np.ndarray:
        return np.interp(x, self.nodes, self.full(u))

    def prolong(self, u, fine: "DiscreteSpace") -> np.ndarray:
        return fine.interpolate(lambda x: self.evaluate(u, x))

    def banded_solve(self, lower, diag, upper, rhs) -> np.ndarray:
        """General (possibly indefinite) tridiagonal solve with pivoting."""
        ab = np.zeros((3, len(diag)))
        ab[0, 1:] = upper[:-1]
        ab[1] = diag
        ab[2, :-1] = lower[1:]
        return solve_banded((1, 1), ab, rhs, check_finite=False)

    def refined(self) -> "DiscreteSpace":
        """Uniform 2x refinement (every element bisected)."""
        mids = 0.5 * (self.nodes[:-1] + self.nodes[1:])
        nodes = np.empty(2 * self.N + 1)
        nodes[0::2] = self.nodes
        nodes[1::2] = mids
        return _assemble_on(nodes, self.p, self.q, len(self.xi), dict(self.meta, refined_from=self.N))


@dataclass(frozen=True, eq=False)
class DiscreteFunction:
    space: DiscreteSpace
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.space.N,):
            raise FEMError(f"expected {self.space.N} coefficients, got {c.shape}")
        object.__setattr__(self, "coeffs", c)

    def __call__(self, x):
        return self.space.evaluate(self.coeffs, x)

    @property
    def sup_norm(self) -> float:
        return self.space.sup_norm(self.coeffs)

    @property
    def norm(self) -> float:
        return self.space.norm(self.coeffs)


def _mesh(a: float, b: float, N: int, forced) -> np.ndarray:
    nodes = np.linspace(a, b, N + 1)
    h = (b - a) / N
    for xb in sorted(set(float(x) for x in forced if a < x < b)):
        j = int(np.argmin(np.abs(nodes - xb)))
        if abs(nodes[j] - xb) <= 1e-12 * max(1.0, abs(xb)):
            nodes[j] = xb
            continue
        nodes = np.sort(np.append(nodes, xb))
    h_min = np.diff(nodes).min()
    if h_min <= 1e-9 * h:
        raise FEMError("cannot align the mesh with the coefficient breakpoints")
    return nodes


def assemble(a, b, p: PiecewiseScalar, q: PiecewiseScalar, N: int = 256, quad_order: int = 4) -> DiscreteSpace:
    """Uniform P1 mesh, with nodes forced onto breakpoints of p and q."""
    a, b = float(a), float(b)
    if not a < b:
        raise FEMError("requires a < b")
    if N < 2:
        raise FEMError("requires N >= 2")
    if quad_order < 1:
        raise FEMError("quad_order must be positive")
    forced = list(p.breakpoints) + list(q.breakpoints)
    nodes = _mesh(a, b, int(N), forced)
    return _assemble_on(nodes, p, q, quad_order, {"N_requested": int(N), "quad_order": quad_order})


def _assemble_on(nodes, p, q, quad_order, meta) -> DiscreteSpace:
    xi, wt = _gauss(quad_order)
    h = np.diff(nodes)
    xq = nodes[:-1, None] + np.outer(h, xi)
    pv = p(xq)
    qv = q(xq)
    if not (np.all(np.isfinite(pv)) and np.all(np.isfinite(qv))):
        raise FEMError("p or q is not finite on [a, b]")
    if np.min(pv) <= 0:
        raise FEMError("ellipticity violated: p <= 0 at a quadrature point")
    if np.min(qv) < 0:
        raise FEMError("sign condition violated: q < 0 at a quadrature point")
    phi = np.column_stack([1.0 - xi, xi])
    W = np.outer(h, wt)
    ml, md, mu = kernels.weighted_tridiag(np.ascontiguousarray(W * qv), phi)
    kp = (W * pv).sum(axis=1) / h**2  # int_e p / h^2
    ne = len(h)
    kd = np.zeros(ne + 1)
    kd[:-1] += kp
    kd[1:] += kp
    lower = ml.copy()
    upper = mu.copy()
    lower[1:] -= kp[1:]
    upper[:-1] -= kp[1:]
    diag = md + kd[1:]
    return DiscreteSpace(nodes, lower, diag, upper, xi, wt, p, q, meta)


# ----------------------------------------------------------------------
# energies
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class EnergyReport:
    phi: float
    psi: float
    i_lambda: float
    grad_phi: np.ndarray
    grad_psi_selection: np.ndarray
    lam: float = 0.0

    @property
    def gradient(self) -> np.ndarray:
        return self.grad_phi - self.lam * self.grad_psi_selection


def energy(space: DiscreteSpace, u, pe: PotentialEval, lam: float) -> EnergyReport:
    """Phi = u'Au/2, Psi = sum W J(u_h), and the selection gradient of Psi."""
    if not lam > 0:
        raise FEMError("requires lambda > 0")
    u = u.coeffs if isinstance(u, DiscreteFunction) else np.asarray(u, dtype=float)
    Au = space.matvec(u)
    y = space.at_quad(u)
    Jv = pe.J(y)
    fv = pe.f(y)
    if not (np.all(np.isfinite(Jv)) and np.all(np.isfinite(fv))):
        raise FEMError("J or f is not finite at a quadrature value")
    phi = 0.5 * float(u @ Au)
    psi = float(np.sum(space.W * Jv))
    return EnergyReport(phi, psi, phi - lam * psi, Au, space.load(fv), lam)


def sup_norm_ratio(space: DiscreteSpace, u) -> float:
    """||u||_inf / ||u||; never above sqrt((b - a) / p0)."""
    u = u.coeffs if isinstance(u, DiscreteFunction) else np.asarray(u, dtype=float)
    n = space.norm(u)
    if n == 0.0:
        raise FEMError("sup_norm_ratio of the zero function")
    return space.sup_norm(u) / n


@dataclass(frozen=True)
class FDCheck:
    max_abs_error: float
    skipped: bool = False
    notice: str = ""


def fd_gradient_check(space: DiscreteSpace, u, pe: PotentialEval, lam: float, h_fd: float = 1e-5) -> FDCheck:
    """Central differences of I_lambda against grad_phi - lam * grad_psi."""
    u = u.coeffs if isinstance(u, DiscreteFunction) else np.asarray(u, dtype=float)
    y = space.at_quad(u)
    bps = np.asarray(pe.f.breakpoints)
    if len(bps):
        gap = np.min(np.abs(y.ravel()[:, None] - bps[None, :]))
        if gap < 10 * h_fd:
            return FDCheck(math.nan, True, f"quadrature value within {gap:.3g} of a breakpoint of f; "
                                           "the generalized gradient is set-valued there")
    rep = energy(space, u, pe, lam)
    g = rep.grad_phi - lam * rep.grad_psi_selection
    err = 0.0
    for i in range(space.N):
        e = np.zeros(space.N)
        e[i] = h_fd
        fp = energy(space, u + e, pe, lam).i_lambda
        fm = energy(space, u - e, pe, lam).i_lambda
        err = max(err, abs((fp - fm) / (2 * h_fd) - g[i]))
    return FDCheck(err)


# ----------------------------------------------------------------------
# CSV export
# ----------------------------------------------------------------------


def _fmt(x: float) -> str:
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(float(x), ".17g")


def profile_csv(space: DiscreteSpace, u) -> str:
    """x, u(x), u'(x-) per node; at x = a the slope of the first element."""
    u = u.coeffs if isinstance(u, DiscreteFunction) else np.asarray(u, dtype=float)
    U = space.full(u)
    s = space.slopes(u)
    left = np.concatenate([[s[0]], s])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "u", "du_left"])
    for x, v, d in zip(space.nodes, U, left):
        w.writerow([_fmt(x), _fmt(v), _fmt(d)])
    return buf.getvalue()


def multiplier_csv(space: DiscreteSpace, u, w, lo=None, hi=None) -> str:
    """Quadrature coordinates with u, the multiplier w and the admissible box."""
    u = u.coeffs if isinstance(u, DiscreteFunction) else np.asarray(u, dtype=float)
    y = space.at_quad(u).ravel()
    xq = space.xq.ravel()
    w = np.asarray(w).ravel()
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    cols = ["x", "u", "w"] + (["lo", "hi"] if lo is not None else [])
    wr.writerow(cols)
    for i in range(len(xq)):
        row = [_fmt(xq[i]), _fmt(y[i]), _fmt(w[i])]
        if lo is not None:
            row += [_fmt(np.ravel(lo)[i]), _fmt(np.ravel(hi)[i])]
        wr.writerow(row)
    return buf.getvalue()
