"""Brute-force critical-point oracles for tiny meshes (N <= 3).

Two scans of the discrete stationarity condition 0 in A u - lam B(F(E u)):

* ``bnb_scan``: interval branch-and-bound over an a priori box.  A box is
  discarded when some component of the residual enclosure excludes 0; the
  survivors (width <= resolution) are clustered and the stationarity measure
  is minimized over the resolution lattice inside each cluster.
* ``grid_scan``: the measure on every point of a uniform lattice, with its
  discrete local minima.

Floating-point enclosures carry a small relative margin; the scans are
numerical oracles, not computer-assisted proofs.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import kernels
from .fem import DiscreteSpace
from .problem import GrowthBound
from .setvalued import IntervalMap, PotentialEval

__all__ = [
    "ScanError",
    "ScanMinimum",
    "ScanResult",
    "a_priori_radius",
    "batch_measure",
    "bnb_scan",
    "grid_scan",
]

MAX_BOXES = 4_000_000
MARGIN = 1e-9


class ScanError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScanMinimum:
    u: np.ndarray
    measure: float
    lo: np.ndarray
    hi: np.ndarray


@dataclass
class ScanResult:
    minima: list
    radius: float
    resolution: float
    boxes_examined: int = 0
    leaves: int = 0
    grid_points: int = 0
    seconds: float = 0.0
    method: str = "bnb"
    extra: dict = field(default_factory=dict)

    def points(self) -> np.ndarray:
        return np.array([m.u for m in self.minima]).reshape(len(self.minima), -1)


def a_priori_radius(lam: float, length: float, p0: float, growth: GrowthBound) -> float:
    """Sup-norm bound for every critical point.

    Testing the equation with u gives ||u||^2 = lam int w u, and with
    |w| <= alpha(1 + |u|^(s-1)), ||u||_inf <= kappa ||u|| (kappa^2 = L/p0):
    x^2 <= lam L alpha (kappa x + kappa^s x^s) for x = ||u||.
    """
    kappa = math.sqrt(length / p0)
    c = lam * length * growth.alpha
    s = growth.s

    def h(x):
        return x * x - c * (kappa * x + kappa**s * x**s)

    hi = 1.0
    while h(hi) <= 0:
        hi *= 2.0
    x = brentq(h, hi / 2 if h(hi / 2) <= 0 else 1e-12, hi, xtol=1e-14, rtol=1e-14)
    return kappa * x * (1 + 1e-9)


class _Dense:
    """Dense operators of a tiny space."""

    def __init__(self, space: DiscreteSpace, lam: float):
        self.space = space
        self.lam = lam
        self.A = space.dense
        self.B = space.load_matrix()  # (N, nq)
        ne, nqe = space.W.shape
        E = np.zeros((ne * nqe, space.N))
        for e in range(ne):
            for k in range(nqe):
                if e > 0:
                    E[e * nqe + k, e - 1] = space.phi[k, 0]
                E[e * nqe + k, e] = space.phi[k, 1]
        self.E = E
        self.Ainv = np.linalg.inv(self.A)
        self.G = lam * lam * self.B.T @ self.Ainv @ self.B
        self.single_valued = False

    def check_single_valued(self, F: IntervalMap, R: float):
        t = np.concatenate([np.linspace(-R, R, 4001), F.lo.breakpoints, F.hi.breakpoints])
        self.single_valued = bool(np.array_equal(F.lo(t), F.hi(t)))

    def residual(self, U, w):
        return U @ self.A.T - self.lam * w @ self.B.T


def batch_measure(space: DiscreteSpace, F: IntervalMap, lam: float, U, iters: int = 20000,
                  tol: float = 1e-13, _dense: _Dense | None = None) -> np.ndarray:
    """Stationarity measure for each row of U (tiny spaces), via the grid kernel."""
    D = _dense or _Dense(space, lam)
    U = np.atleast_2d(np.asarray(U, dtype=float))
    Y = U @ D.E.T
    lo, hi = F.lo(Y), F.hi(Y)
    for t in F.breakpoints:
        near = np.abs(Y - t) <= 1e-12 * max(1.0, abs(t))
        if near.any():
            lo[near] = np.minimum(lo[near], float(F.lo(t)))
            hi[near] = np.maximum(hi[near], float(F.hi(t)))
    c = lam * U @ D.B
    step = 1.0 / max(np.linalg.norm(D.G, 2), 1e-300)
    obj = kernels.box_qp_grid(np.ascontiguousarray(D.G), np.ascontiguousarray(c), np.ascontiguousarray(lo),
                              np.ascontiguousarray(hi), step, iters, tol)
    uAu = np.einsum("mi,ij,mj->m", U, D.A, U)
    return np.sqrt(np.maximum(uAu + 2.0 * obj, 0.0))


def _interval_matvec(M, lo, hi):
    Mp, Mn = np.maximum(M, 0.0), np.minimum(M, 0.0)
    return lo @ Mp.T + hi @ Mn.T, hi @ Mp.T + lo @ Mn.T


def _enclosure(D: _Dense, pe: PotentialEval, F: IntervalMap, L, U):
    """Componentwise enclosure [glo, ghi] of A u - lam B(w) over the boxes."""
    lam = D.lam
    ylo, yhi = _interval_matvec(D.E, L, U)
    wlo, _ = F.lo.interval(ylo.ravel(), yhi.ravel())
    _, whi = F.hi.interval(ylo.ravel(), yhi.ravel())
    wlo, whi = wlo.reshape(ylo.shape), whi.reshape(yhi.shape)
    alo, ahi = _interval_matvec(D.A, L, U)
    glo = alo - lam * whi @ D.B.T
    ghi = ahi - lam * wlo @ D.B.T
    # centered form where the selection is single-valued and differentiable
    C = 0.5 * (L + U)
    R = 0.5 * (U - L)
    single = np.full(len(L), D.single_valued)
    for t, _, _ in pe.jumps:
        single &= ~np.any((ylo <= t) & (t <= yhi), axis=1)
    if single.any():
        dlo, dhi = pe.df.interval(ylo[single].ravel(), yhi[single].ravel())
        dlo, dhi = dlo.reshape(ylo[single].shape), dhi.reshape(ylo[single].shape)
        ok = np.all(np.isfinite(dlo) & np.isfinite(dhi), axis=1)
        idx = np.nonzero(single)[0][ok]
        if len(idx):
            Bm = D.B
            # K(Y) = B diag(f') E, entrywise monotone in f' since B, E >= 0
            Klo = np.einsum("iq,mq,qj->mij", Bm, dlo[ok], D.E)
            Khi = np.einsum("iq,mq,qj->mij", Bm, dhi[ok], D.E)
            Jmag = np.maximum(np.abs(D.A - lam * Khi), np.abs(D.A - lam * Klo))
            Cc = C[idx]
            gc = Cc @ D.A.T - lam * pe.f(Cc @ D.E.T) @ D.B.T
            spread = np.einsum("mij,mj->mi", Jmag, R[idx])
            glo[idx] = np.maximum(glo[idx], gc - spread)
            ghi[idx] = np.minimum(ghi[idx], gc + spread)
    pad = MARGIN * (1.0 + np.maximum(np.abs(glo), np.abs(ghi)))
    return glo - pad, ghi + pad


def _clusters(L, U, tol):
    n = len(L)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        touch = np.all((L <= U[i] + tol) & (L[i] <= U + tol), axis=1)
        for j in np.nonzero(touch)[0]:
            if j > i:
                ri, rj = find(i), find(int(j))
                if ri != rj:
                    parent[rj] = ri
    groups: dict = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def _lattice(lo, hi, res):
    axes = [np.arange(math.floor(a / res), math.ceil(b / res) + 1) * res for a, b in zip(lo, hi)]
    return np.array(list(itertools.product(*axes)))


def bnb_scan(space: DiscreteSpace, pe: PotentialEval, lam: float, radius: float, resolution: float = 0.01,
             F: IntervalMap | None = None) -> ScanResult:
    """Branch-and-bound exclusion over [-radius, radius]^N, then a lattice
    minimization of the measure in each surviving cluster."""
    t0 = time.perf_counter()
    F = F if F is not None else pe.clarke
    N = space.N
    if N > 4:
        raise ScanError("brute-force scan is meant for N <= 4")
    D = _Dense(space, lam)
    D.check_single_valued(F, radius)
    L = np.full((1, N), -radius)
    U = np.full((1, N), radius)
    leaves_L, leaves_U = [], []
    examined = 0
    while len(L):
        examined += len(L)
        if examined > MAX_BOXES:
            raise ScanError("box budget exhausted")
        glo, ghi = _enclosure(D, pe, F, L, U)
        keep = np.all((glo <= 0.0) & (ghi >= 0.0), axis=1)
        L, U = L[keep], U[keep]
        width = U - L
        leaf = np.max(width, axis=1) <= resolution
        leaves_L.append(L[leaf])
        leaves_U.append(U[leaf])
        L, U = L[~leaf], U[~leaf]
        if not len(L):
            break
        k = np.argmax(U - L, axis=1)
        mid = 0.5 * (L[np.arange(len(L)), k] + U[np.arange(len(L)), k])
        L2, U1 = L.copy(), U.copy()
        U1[np.arange(len(L)), k] = mid
        L2[np.arange(len(L)), k] = mid
        L = np.concatenate([L, L2])
        U = np.concatenate([U1, U])
    LL = np.concatenate(leaves_L) if leaves_L else np.zeros((0, N))
    UU = np.concatenate(leaves_U) if leaves_U else np.zeros((0, N))
    minima = []
    points = 0
    for grp in _clusters(LL, UU, 1e-12):
        lo = LL[grp].min(axis=0) - resolution
        hi = UU[grp].max(axis=0) + resolution
        P = _lattice(lo, hi, resolution)
        points += len(P)
        m = batch_measure(space, F, lam, P, _dense=D)
        i = int(np.argmin(m))
        minima.append(ScanMinimum(P[i], float(m[i]), lo, hi))
    minima.sort(key=lambda s: tuple(s.u))
    return ScanResult(minima, radius, resolution, examined, len(LL), points, time.perf_counter() - t0, "bnb")


def grid_scan(space: DiscreteSpace, F: IntervalMap, lam: float, half_width: float, resolution: float = 0.01,
              threshold: float | None = None) -> ScanResult:
    """Measure on the lattice of [-half_width, half_width]^N; returns its strict
    local minima below ``threshold`` (default: a Lipschitz bound times the
    lattice half-diagonal)."""
    t0 = time.perf_counter()
    N = space.N
    D = _Dense(space, lam)
    n = int(round(2 * half_width / resolution)) + 1
    axis = np.linspace(-half_width, half_width, n)
    P = np.array(list(itertools.product(axis, repeat=N)))
    m = batch_measure(space, F, lam, P, _dense=D).reshape((n,) * N)
    if threshold is None:
        # displacement of half a cell in every coordinate, in the A-norm,
        # times a generous bound on the A-normalized Jacobian
        lmax = float(np.max(np.linalg.eigvalsh(D.A)))
        jac = 1.0 + lam * np.linalg.norm(D.B @ D.E, 2) * _slope_bound(F, half_width) / float(np.min(np.linalg.eigvalsh(D.A)))
        threshold = jac * math.sqrt(lmax * N) * resolution
    padded = np.pad(m, 1, constant_values=np.inf)
    is_min = np.ones(m.shape, dtype=bool)
    for off in itertools.product((-1, 0, 1), repeat=N):
        if not any(off):
            continue
        sl = tuple(slice(1 + o, 1 + o + s) for o, s in zip(off, m.shape))
        is_min &= m < padded[sl] if off > (0,) * N else m <= padded[sl]
    is_min &= m <= threshold
    minima = []
    for idx in zip(*np.nonzero(is_min)):
        u = axis[list(idx)]
        minima.append(ScanMinimum(u, float(m[idx]), u - resolution, u + resolution))
    return ScanResult(minima, half_width, resolution, 0, 0, P.shape[0], time.perf_counter() - t0, "grid",
                      {"threshold": threshold})


def _slope_bound(F: IntervalMap, R: float) -> float:
    """Crude bound on |f'| over [-R, R] from divided differences of lo and hi."""
    t = np.linspace(-R, R, 4001)
    best = 0.0
    for g in (F.lo, F.hi):
        v = g(t)
        best = max(best, float(np.max(np.abs(np.diff(v) / np.diff(t)))))
    return best
