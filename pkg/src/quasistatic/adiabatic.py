"""Adiabatic evolution generated by a smooth family of nonnormal matrices.

Conventions: rescaled time s in [0, 1], propagators solve
``dU/ds = -tau * A(s) U`` with U(0) = I.  The adiabatic generator
``A(s) - [P'(s), P(s)] / tau`` transports the isolated spectral projection
P(s) exactly, so its propagator intertwines P(0) and P(s).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp

from .errors import EigenvalueLost, GapViolation, StepFailure
from .linops import Contour, NodeResolvents, as_matrix, commutator, numerical_abscissa, opnorm

DEFAULT_GRID = np.linspace(0.0, 1.0, 201)


@dataclass(frozen=True)
class GeneratorFamily:
    """s -> A(s) on [0, 1] with derivative access.

    Without a closed-form ``derivative`` a central difference with step
    ``fd_step`` is used (one-sided second order at the end points).
    """

    dim: int
    evaluate: Callable[[float], np.ndarray]
    derivative: Optional[Callable[[float], np.ndarray]] = None
    fd_step: float = 1e-5

    def A(self, s: float) -> np.ndarray:
        return as_matrix(self.evaluate(float(s)), self.dim)

    def Adot(self, s: float) -> np.ndarray:
        if self.derivative is not None:
            return as_matrix(self.derivative(float(s)), self.dim)
        h = self.fd_step
        if s - h < 0.0:
            return (-3 * self.A(s) + 4 * self.A(s + h) - self.A(s + 2 * h)) / (2 * h)
        if s + h > 1.0:
            return (3 * self.A(s) - 4 * self.A(s - h) + self.A(s - 2 * h)) / (2 * h)
        return (self.A(s + h) - self.A(s - h)) / (2 * h)

    @classmethod
    def constant(cls, A) -> "GeneratorFamily":
        A = as_matrix(A)
        zero = np.zeros_like(A)
        return cls(A.shape[0], lambda s: A, lambda s: zero)


def synthetic_family(seed: int = 0, coupling: float = 0.1, rotation_scale: float = 0.5) -> GeneratorFamily:
    """Seeded 6x6 nonnormal test family with an isolated eigenvalue 0.

    A(s) = Q(s) (D + coupling*N) Q(s)^{-1}, Q(s) = exp(sK) with K real
    antisymmetric and N strictly upper triangular, so the spectrum is exactly
    diag(D) for every s.  All nonzero eigenvalues have positive real part,
    which keeps exp(-tau*s*A) bounded.
    """
    rng = np.random.default_rng(seed)
    D = np.diag([0.0, 1 + 1j, 2 + 0.5j, 3.0, 3.5 + 2j, 1 - 1j])
    N = np.triu(rng.standard_normal((6, 6)), k=1)
    G = rng.standard_normal((6, 6))
    K = rotation_scale * (G - G.T)
    B = D + coupling * N

    def evaluate(s):
        return sla.expm(s * K) @ B @ sla.expm(-s * K)

    def derivative(s):
        A = evaluate(s)
        return K @ A - A @ K

    return GeneratorFamily(6, evaluate, derivative)


@dataclass(frozen=True)
class RieszProjection:
    s: float
    lam: complex
    gap: float
    P: np.ndarray
    Pdot: np.ndarray
    contour: Contour


def _spectral_gap(eigs: np.ndarray, lam_est: complex):
    idx = int(np.argmin(np.abs(eigs - lam_est)))
    others = np.delete(eigs, idx)
    gap = float(np.min(np.abs(others - eigs[idx]))) if len(others) else np.inf
    return eigs[idx], gap


def riesz_projection(fam: GeneratorFamily, s: float, lam_est: complex,
                     radius: Optional[float] = None, nodes: int = 64,
                     tol: float = 1e-10, check: bool = True) -> RieszProjection:
    """Projection and its s-derivative for the eigenvalue nearest ``lam_est``.

    The circle is centred at the eigenvalue with radius half the gap unless
    ``radius`` is given.  P' is the contour integral of R A' R.
    """
    A = fam.A(s)
    eigs = np.linalg.eigvals(A)
    lam, gap = _spectral_gap(eigs, lam_est)
    if radius is None:
        radius = 0.5 * gap if np.isfinite(gap) else 1.0
    elif np.any(np.abs(np.delete(eigs, np.argmin(np.abs(eigs - lam))) - lam) <= radius):
        raise GapViolation(f"second eigenvalue inside radius {radius} at s={s}")
    contour = Contour(complex(lam), float(radius), nodes)
    res = NodeResolvents(A)
    P = res.integrate(contour, tol=tol, check=check)
    Pdot = res.integrate(contour, sandwich=fam.Adot(s), tol=tol, check=check)
    lam_refined = np.trace(A @ P) / np.trace(P)
    return RieszProjection(float(s), complex(lam_refined), float(gap), P, Pdot, contour)


def commutator_operator_X(fam: GeneratorFamily, s: float, proj: RieszProjection,
                          tol: float = 1e-10) -> np.ndarray:
    """X(s) = (1/2πi)∮ R P' R dz, which solves [X, A] = [P', P]."""
    return NodeResolvents(fam.A(s)).integrate(proj.contour, sandwich=proj.Pdot, tol=tol)


def adiabatic_generator(fam: GeneratorFamily, proj: RieszProjection, tau: float,
                        s: Optional[float] = None) -> np.ndarray:
    if not tau > 0:
        raise ValueError("tau must be positive")
    s = proj.s if s is None else s
    return fam.A(s) - commutator(proj.Pdot, proj.P) / tau


def track_eigenvalue(fam: GeneratorFamily, lam0: complex, grid: Sequence[float] = DEFAULT_GRID,
                     min_gap: float = 1e-6):
    """Continue an eigenvalue along ``grid`` by nearest-neighbour matching.

    When the two nearest candidates are within a factor 2 in distance, the
    one whose eigenprojection overlaps most with the previous one wins.
    Returns (lams, gaps) arrays.
    """
    lams, gaps = [], []
    prev, prev_proj = complex(lam0), None
    for s in grid:
        A = fam.A(s)
        w, vl, vr = sla.eig(A, left=True, right=True)
        dist = np.abs(w - prev)
        order = np.argsort(dist)
        pick = order[0]
        if len(w) > 1 and prev_proj is not None and dist[order[1]] < 2 * dist[order[0]]:
            best = -1.0
            for cand in order[:2]:
                Pc = np.outer(vr[:, cand], vl[:, cand].conj()) / (vl[:, cand].conj() @ vr[:, cand])
                ov = abs(np.trace(prev_proj @ Pc))
                if ov > best:
                    best, pick = ov, cand
        lam = w[pick]
        gap = float(np.min(np.abs(np.delete(w, pick) - lam))) if len(w) > 1 else np.inf
        if gap < min_gap:
            raise EigenvalueLost(f"gap {gap:.2e} below {min_gap:.0e} at s={s}")
        prev = lam
        prev_proj = np.outer(vr[:, pick], vl[:, pick].conj()) / (vl[:, pick].conj() @ vr[:, pick])
        lams.append(lam)
        gaps.append(gap)
    return np.array(lams), np.array(gaps)


class ProjectionTracker:
    """Riesz projections of a tracked eigenvalue at arbitrary s.

    The eigenvalue path is precomputed on a grid; at an off-grid s the
    estimate is linearly interpolated and the nearest eigenvalue is used.
    Recent results are memoised because ODE solvers revisit stage points.
    """

    def __init__(self, fam: GeneratorFamily, lam0: complex, grid: Sequence[float] = DEFAULT_GRID,
                 nodes: int = 64, check: bool = True, cache_size: int = 4096):
        self.fam = fam
        self.grid = np.asarray(grid, dtype=float)
        self.lams, self.gaps = track_eigenvalue(fam, lam0, self.grid)
        self.nodes = nodes
        self.check = check
        self._cache: Dict[float, RieszProjection] = {}
        self._cache_size = cache_size

    def estimate(self, s: float) -> complex:
        re = np.interp(s, self.grid, self.lams.real)
        im = np.interp(s, self.grid, self.lams.imag)
        return complex(re, im)

    def __call__(self, s: float) -> RieszProjection:
        key = float(s)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        proj = riesz_projection(self.fam, key, self.estimate(key), nodes=self.nodes, check=self.check)
        if len(self._cache) >= self._cache_size:
            self._cache.clear()
        self._cache[key] = proj
        return proj


@dataclass(frozen=True)
class PropagatorGrid:
    s: np.ndarray
    U: np.ndarray
    tau: float
    method: str
    tol: float


@dataclass
class AssumptionReport:
    s: np.ndarray
    lam: np.ndarray
    gap: np.ndarray
    abscissa: np.ndarray
    smoothness: np.ndarray
    resolvent_bound: float
    flags: Dict[str, bool] = field(default_factory=dict)

    @property
    def quasi_contraction_rate(self) -> float:
        """c with ‖exp(-σA(s))‖ ≤ exp(cσ) for each frozen s."""
        return float(max(0.0, np.max(self.abscissa)))

    @property
    def ok(self) -> bool:
        return all(self.flags.values())


def assumption_report(fam: GeneratorFamily, lam0: complex, grid: Sequence[float] = DEFAULT_GRID,
                      smooth_tol: float = 1e-4, sample_resolvent: bool = True) -> AssumptionReport:
    """Sampled diagnostics for contraction, gap and smoothness of P(s).

    ``abscissa`` is the numerical abscissa of -A(s) (≤ 0 for a contraction
    semigroup).  ``smoothness`` compares the centred difference of P with the
    contour derivative.  The resolvent bound samples the annulus
    d/2 ≤ |z - λ| < d.
    """
    grid = np.asarray(grid, dtype=float)
    lams, gaps = track_eigenvalue(fam, lam0, grid)
    absc = np.array([numerical_abscissa(-fam.A(s)) for s in grid])
    smooth = np.zeros(len(grid))
    rbound = 0.0
    h = 1e-4
    for k, s in enumerate(grid):
        proj = riesz_projection(fam, s, lams[k])
        r = proj.contour.radius

        def Pat(x):
            return riesz_projection(fam, x, lams[k], radius=r).P

        if s - h < 0.0:
            fd = (-3 * proj.P + 4 * Pat(s + h) - Pat(s + 2 * h)) / (2 * h)
        elif s + h > 1.0:
            fd = (3 * proj.P - 4 * Pat(s - h) + Pat(s - 2 * h)) / (2 * h)
        else:
            fd = (Pat(s + h) - Pat(s - h)) / (2 * h)
        smooth[k] = opnorm(fd - proj.Pdot) / max(1.0, opnorm(proj.Pdot))
        if sample_resolvent and np.isfinite(gaps[k]):
            A = fam.A(s)
            for frac in (0.5, 0.75, 0.99):
                for phi in np.linspace(0, 2 * np.pi, 8, endpoint=False):
                    z = lams[k] + frac * gaps[k] * np.exp(1j * phi)
                    R = np.linalg.inv(z * np.eye(fam.dim) - A)
                    rbound = max(rbound, opnorm(R))
    flags = {
        "contraction": bool(np.all(absc <= 1e-12)),
        "isolated": bool(np.all(gaps > 1e-6)),
        "smooth_projection": bool(np.all(smooth <= smooth_tol)),
    }
    return AssumptionReport(grid, lams, gaps, absc, smooth, rbound, flags)


def _matrix_ode(rhs_matrix, dim, grid, rtol, atol, y0=None):
    def rhs(s, y):
        U = y.reshape(dim, dim)
        return (rhs_matrix(s) @ U).ravel()

    y0 = np.eye(dim, dtype=complex).ravel() if y0 is None else y0
    sol = solve_ivp(rhs, (float(grid[0]), float(grid[-1])), y0, method="DOP853",
                    t_eval=grid, rtol=rtol, atol=atol)
    if sol.status != 0:
        raise StepFailure(sol.message)
    return sol.y.T.reshape(len(grid), dim, dim)


def propagate(fam: GeneratorFamily, tau: float, grid: Sequence[float] = DEFAULT_GRID,
              mode: str = "true", tracker: Optional[ProjectionTracker] = None,
              lam0: Optional[complex] = None, rtol: float = 1e-10,
              atol: Optional[float] = None) -> PropagatorGrid:
    """U(s, 0) on ``grid`` for dU/ds = -tau*A U (``mode='true'``) or the
    adiabatic generator (``mode='adiabatic'``, needs ``tracker`` or ``lam0``).
    """
    grid = np.asarray(grid, dtype=float)
    if grid[0] != 0.0:
        raise ValueError("grid must start at s = 0")
    atol = rtol * 1e-2 if atol is None else atol
    if mode == "true":
        def gen(s):
            return -tau * fam.A(s)
    elif mode == "adiabatic":
        if tracker is None:
            if lam0 is None:
                raise ValueError("adiabatic mode needs a tracker or lam0")
            tracker = ProjectionTracker(fam, lam0, grid)

        def gen(s):
            p = tracker(s)
            return -tau * fam.A(s) + commutator(p.Pdot, p.P)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    U = _matrix_ode(gen, fam.dim, grid, rtol, atol)
    return PropagatorGrid(grid, U, float(tau), f"dop853-{mode}", rtol)


def composition_defect(fam: GeneratorFamily, tau: float, s_mid: float, s_end: float,
                       rtol: float = 1e-10) -> float:
    """‖U(s_end,0) - U(s_end,s_mid) U(s_mid,0)‖ for the true evolution."""
    full = propagate(fam, tau, np.array([0.0, s_mid, s_end]), rtol=rtol)
    tail = _matrix_ode(lambda s: -tau * fam.A(s), fam.dim, np.array([s_mid, s_end]),
                       rtol, rtol * 1e-2)
    return opnorm(full.U[2] - tail[1] @ full.U[1])


def kato_product_propagator(fam: GeneratorFamily, tau: float, n: int,
                            anchor: str = "midpoint") -> PropagatorGrid:
    """Ordered product of exp(-tau A(s_k) / n) with the generator frozen on
    each [k/n, (k+1)/n]; returns partial products at s = k/n.

    ``anchor`` picks the freezing point: "left" (s_k = k/n, first order in
    1/n) or "midpoint" (s_k = (k + 1/2)/n, second order).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    offsets = {"left": 0.0, "midpoint": 0.5}
    if anchor not in offsets:
        raise ValueError(f"unknown anchor {anchor!r}")
    grid = np.arange(n + 1) / n
    out = np.empty((n + 1, fam.dim, fam.dim), dtype=complex)
    out[0] = np.eye(fam.dim)
    for k in range(n):
        out[k + 1] = sla.expm(-tau / n * fam.A((k + offsets[anchor]) / n)) @ out[k]
    return PropagatorGrid(grid, out, float(tau), f"kato-{anchor}-{n}", 0.0)


def intertwining_defect(tracker: ProjectionTracker, prop: PropagatorGrid) -> np.ndarray:
    """‖P(s) U_a(s,0) - U_a(s,0) P(0)‖ on the propagator grid."""
    P0 = tracker(prop.s[0]).P
    return np.array([opnorm(tracker(s).P @ U - U @ P0) for s, U in zip(prop.s, prop.U)])


@dataclass(frozen=True)
class SweepResult:
    params: np.ndarray
    defects: np.ndarray
    slope: float
    residual: float
    degenerate: bool
    name: str = "tau"

    @classmethod
    def fit(cls, params, defects, name: str = "tau", floor: float = 1e-10) -> "SweepResult":
        p = np.asarray(params, dtype=float)
        d = np.asarray(defects, dtype=float)
        if np.any(np.diff(p) <= 0):
            raise ValueError("sweep parameters must be strictly increasing")
        if np.all(d < floor) or np.any(d <= 0):
            return cls(p, d, float("nan"), float("nan"), True, name)
        x, y = np.log(p), np.log(d)
        coef, res, *_ = np.polyfit(x, y, 1, full=True)
        resid = float(np.sqrt(res[0] / len(x))) if len(res) else 0.0
        return cls(p, d, float(coef[0]), resid, False, name)

    def rows(self):
        return [(float(a), float(b)) for a, b in zip(self.params, self.defects)]


def adiabatic_error_sweep(fam: GeneratorFamily, taus: Sequence[float], lam0: complex,
                          grid: Sequence[float] = DEFAULT_GRID, rtol: float = 1e-10):
    """sup_s ‖U_tau - U_a‖ per tau plus log-log slope.

    Returns (SweepResult, list of per-tau intertwining defect maxima).
    """
    grid = np.asarray(grid, dtype=float)
    tracker = ProjectionTracker(fam, lam0, grid)
    sups, inter = [], []
    for tau in taus:
        ut = propagate(fam, tau, grid, "true", rtol=rtol)
        ua = propagate(fam, tau, grid, "adiabatic", tracker=tracker, rtol=rtol)
        sups.append(max(opnorm(a - b) for a, b in zip(ut.U, ua.U)))
        inter.append(float(np.max(intertwining_defect(tracker, ua))))
    return SweepResult.fit(taus, sups), inter
