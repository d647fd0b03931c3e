"""Discrete resonances of the deformed generator and their second-order
perturbative values.

Small-system basis ordering (left ⊗ right, σ3 = diag(1, -1)):
index 0 = ↑↑ (energy 0), 1 = ↑↓ (+2ω0), 2 = ↓↑ (-2ω0), 3 = ↓↓ (0).
Resonances are labelled j = 0, 1 (near 0; j = 0 is the exact kernel),
j = 2 (near -2ω0) and j = 3 (near +2ω0).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .adiabatic import SweepResult
from .errors import AssumptionViolated, GapViolation, NonConvergent, ResonanceAmbiguity
from .linops import Contour, NodeResolvents, contour_integral, eig_decompose, opnorm
from .model import Liouvilleans, ModelSpec, glued_tilde

ZERO_BLOCK = (0, 3)
LABEL_ENERGY = {2: -1, 3: +1}  # multiples of 2ω0


def _gauss_panels(F, a, b, panels, order=20):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        total += half * np.sum(w * F(mid + half * x))
    return total


def pv_integral(F: Callable, c: float, a: float, b: float, tol: float = 1e-8,
                max_panels: int = 4096) -> float:
    """PV ∫_a^b F(u) / (c - u) du by singularity subtraction.

    The smooth remainder (F(u) - F(c)) / (c - u) is integrated with
    composite Gauss-Legendre, doubling the panel count until two successive
    values agree to ``tol``; the subtracted part is F(c) log((c-a)/(b-c)).
    """
    if not a < c < b:
        raise ValueError("pole must lie strictly inside the interval")
    Fc = F(np.array([c]))[0]

    def regular(u):
        return (F(u) - Fc) / (c - u)

    panels = 8
    prev = _gauss_panels(regular, a, b, panels)
    while True:
        panels *= 2
        cur = _gauss_panels(regular, a, b, panels)
        if abs(cur - prev) <= tol * max(1.0, abs(cur)):
            break
        if panels >= max_panels:
            raise NonConvergent(f"principal value refinement stalled at {abs(cur - prev):.2e}")
        prev = cur
    return float(np.real(cur + Fc * np.log((c - a) / (b - c))))


@dataclass
class PerturbationReport:
    s: float
    pv: float
    golden_rule: float
    gamma01: np.ndarray
    gamma2: complex
    gamma3: complex
    S2: Optional[np.ndarray] = None


def _golden_rule_weight(spec: ModelSpec, s: float) -> float:
    """Σ_i |f~_i(2ω0, s)|^2."""
    w0 = 2 * spec.omega0
    return float(sum(abs(glued_tilde(r.form_factor, w0, float(r.schedule.value(s)))) ** 2
                     for r in spec.reservoirs))


def gamma2_blocks(spec: ModelSpec, s: float) -> PerturbationReport:
    """Continuum level-shift matrices from the closed-form expressions.

    The principal value runs over each reservoir's grid range [-u_max, u_max].
    Γ01 acts on (↑↑, ↓↓) in the row convention: its rows sum to zero, i.e. it
    represents the transpose of the zero block of the numerically evaluated
    second-order generator.
    """
    w0 = spec.omega0
    fgr = _golden_rule_weight(spec, s)
    if fgr <= 0:
        raise AssumptionViolated("fermi-golden-rule", f"no channel at s={s}")
    pv = 0.0
    for r in spec.reservoirs:
        hs = float(r.schedule.value(s))
        umax = float(r.grid.energies[-1])
        pv += pv_integral(lambda u, r=r, hs=hs: np.abs(hs * r.form_factor.tilde(u)) ** 2,
                          2 * w0, -umax, umax)
    g01 = np.zeros((2, 2), dtype=complex)
    for r in spec.reservoirs:
        amp = abs(glued_tilde(r.form_factor, 2 * w0, float(r.schedule.value(s)))) ** 2
        ep, em = np.exp(r.beta * w0), np.exp(-r.beta * w0)
        g01 += -1j * np.pi * amp / (2 * np.cosh(r.beta * w0)) * np.array([[ep, -ep], [-em, em]])
    gamma3 = -0.5 * pv - 0.5j * np.pi * fgr
    gamma2 = 0.5 * pv - 0.5j * np.pi * fgr
    return PerturbationReport(float(s), pv, fgr, g01, gamma2, gamma3)


def second_order_eigenvalues(spec: ModelSpec, s: float, g: float,
                             report: Optional[PerturbationReport] = None) -> np.ndarray:
    """Continuum second-order resonances [E0, E1, E2, E3]."""
    rep = gamma2_blocks(spec, s) if report is None else report
    ev = np.linalg.eigvals(rep.gamma01)
    order = np.argsort(np.abs(ev))
    w0 = spec.omega0
    return np.array([0.0, g * g * ev[order[1]], -2 * w0 + g * g * rep.gamma2,
                     2 * w0 + g * g * rep.gamma3], dtype=complex)


def _zero_particle_columns(L: Liouvilleans) -> np.ndarray:
    stride = L.dim // 4
    return np.arange(4) * stride


def _xi_factors(L: Liouvilleans, s: float, theta: complex):
    """Pieces of ξ(z) = P0 Ṽ (z - L0(θ))^{-1} Ṽ P0 restricted to 4 states."""
    cols = _zero_particle_columns(L)
    V = L.V_tot(s, theta)
    excited = np.real(np.diag(L.N)) > 0.5
    diag = (np.diag(L.L0) + theta * np.diag(L.N))[excited]
    return V[np.ix_(cols, excited)], V[np.ix_(excited, cols)], diag


def quasi_liouvillean_S2(L: Liouvilleans, s: float, theta: Optional[complex] = None,
                         nodes: int = 64, tol: float = 1e-10) -> np.ndarray:
    """Second-order coefficient of the restricted deformed generator.

    Evaluates (1/2)∮ (ξ(z)(z - L^S)^{-1} + (z - L^S)^{-1} ξ(z)) dz/2πi with one
    circle of radius |Im θ|/2 around each eigenvalue of L^S.
    """
    theta = L.spec.theta if theta is None else complex(theta)
    left, right, diag = _xi_factors(L, s, theta)
    LS = L.LS
    r = 0.5 * abs(theta.imag)

    def integrand(z):
        xi = left @ (right / (z - diag)[:, None])
        Rs = np.diag(1.0 / (z - np.diag(LS)))
        return 0.5 * (xi @ Rs + Rs @ xi)

    out = np.zeros((4, 4), dtype=complex)
    for e in sorted(set(np.round(np.real(np.diag(LS)), 12))):
        out += contour_integral(integrand, Contour(complex(e), r, nodes), tol=tol)
    return out


def grid_level_shifts(L: Liouvilleans, s: float, theta: Optional[complex] = None) -> np.ndarray:
    """Diagonal blocks P_k ξ(E_k) P_k summed over states (no contour).

    Returns a 4x4 matrix that agrees with the block-diagonal part of
    quasi_liouvillean_S2.
    """
    theta = L.spec.theta if theta is None else complex(theta)
    left, right, diag = _xi_factors(L, s, theta)
    energies = np.real(np.diag(L.LS))
    out = np.zeros((4, 4), dtype=complex)
    for e in sorted(set(np.round(energies, 12))):
        idx = np.where(np.abs(energies - e) < 1e-9)[0]
        xi = left @ (right / (e - diag)[:, None])
        out[np.ix_(idx, idx)] = xi[np.ix_(idx, idx)]
    return out


def grid_second_order(L: Liouvilleans, s: float, g: float, theta: Optional[complex] = None,
                      S2: Optional[np.ndarray] = None) -> np.ndarray:
    """Second-order resonances of the truncated model [E0, E1, E2, E3]."""
    S2 = grid_level_shifts(L, s, theta) if S2 is None else S2
    block = S2[np.ix_(ZERO_BLOCK, ZERO_BLOCK)]
    ev = np.linalg.eigvals(block)
    ev = ev[np.argsort(np.abs(ev))]
    w0 = L.spec.omega0
    return np.array([g * g * ev[0], g * g * ev[1], -2 * w0 + g * g * S2[2, 2],
                     2 * w0 + g * g * S2[1, 1]], dtype=complex)


@dataclass
class SpectrumReport:
    s: float
    g: float
    theta: complex
    E_num: np.ndarray
    E_pt: np.ndarray
    E_grid: np.ndarray
    overlap_ratio: float
    stable: bool
    vectors: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def residuals(self) -> np.ndarray:
        return np.abs(self.E_num - self.E_pt)


def select_resonances(L: Liouvilleans, eigs: np.ndarray, vecs: np.ndarray):
    """Pick [E0, E1, E2, E3] and their right eigenvectors from a full spectrum."""
    w0 = L.spec.omega0
    near0 = np.argsort(np.abs(eigs))[:2]
    ov = np.array([abs(np.vdot(L.Omega, vecs[:, k])) / np.linalg.norm(vecs[:, k]) for k in near0])
    hi, lo = (0, 1) if ov[0] >= ov[1] else (1, 0)
    ratio = ov[hi] / max(ov[lo], 1e-300)
    if ratio < 10:
        raise ResonanceAmbiguity(f"Ω-overlap ratio {ratio:.2f} cannot separate the zero pair")
    i2 = int(np.argmin(np.abs(eigs + 2 * w0)))
    i3 = int(np.argmin(np.abs(eigs - 2 * w0)))
    picks = [near0[hi], near0[lo], i2, i3]
    return eigs[picks], vecs[:, picks], ratio


def numeric_resonances(L: Liouvilleans, s: float, g: Optional[float] = None,
                       theta: Optional[complex] = None, keep_vectors: bool = False) -> SpectrumReport:
    g = L.spec.g if g is None else g
    theta = L.spec.theta if theta is None else complex(theta)
    dec = eig_decompose(L.deformed(s, theta, g), left=False)
    E, V, ratio = select_resonances(L, dec.eigenvalues, dec.vectors)
    E_pt = second_order_eigenvalues(L.spec, s, g)
    E_grid = grid_second_order(L, s, g, theta)
    stable = bool(np.all(E.imag <= 1e-9))
    return SpectrumReport(float(s), float(g), theta, E, E_pt, E_grid, float(ratio), stable,
                          V if keep_vectors else None)


def pt_residual_sweep(L: Liouvilleans, s: float, g_list: Sequence[float],
                      theta: Optional[complex] = None):
    """Residual scaling test against the continuum second-order values.

    The complex residual δ_j(g) = E_j^num - E_j^PT is dominated at the
    smallest g by a grid-truncation term proportional to g^2.  That term,
    δ_j(g_min) (g / g_min)^2, is subtracted and the slope of the remainder is
    fitted over g > g_min.  Returns (reports, {j: SweepResult}).
    """
    g_list = np.asarray(sorted(g_list), dtype=float)
    reports = [numeric_resonances(L, s, g, theta) for g in g_list]
    delta = np.array([r.E_num - r.E_pt for r in reports])
    fits = {}
    for j in (1, 2, 3):
        floor = delta[0, j] / g_list[0] ** 2
        rest = np.abs(delta[1:, j] - floor * g_list[1:] ** 2)
        fits[j] = SweepResult.fit(g_list[1:], rest, name="g", floor=1e-14)
    return reports, fits


def theta_independence(L: Liouvilleans, s: float, g: float, thetas: Sequence[complex]):
    """Largest pairwise change of E_j over the θ list; returns (drift, reports)."""
    reps = [numeric_resonances(L, s, g, th) for th in thetas]
    E = np.array([r.E_num for r in reps])
    drift = max(float(np.max(np.abs(E[a] - E[b])))
                for a in range(len(reps)) for b in range(a + 1, len(reps))) if len(reps) > 1 else 0.0
    return drift, reps


def theta_drift_with_floor(L: Liouvilleans, s: float, g: float, thetas: Sequence[complex],
                           g_floor: float = 0.02):
    """θ-drift of the resonances with the g²-proportional truncation part removed.

    Differences E_j(θ_a) - E_j(θ_ref) are measured at ``g`` and at ``g_floor``;
    the latter, scaled by (g / g_floor)^2, is the grid-truncation floor.
    Returns (raw drift, drift after floor subtraction, reports at g).
    """
    if not 0 < g_floor < g:
        raise ValueError("g_floor must lie strictly between 0 and g")
    reps = [numeric_resonances(L, s, g, th) for th in thetas]
    base = [numeric_resonances(L, s, g_floor, th) for th in thetas]
    E = np.array([r.E_num for r in reps])
    F = np.array([r.E_num for r in base])
    raw = float(np.max(np.abs(E - E[0])))
    rest = (E - E[0]) - (F - F[0]) * (g / g_floor) ** 2
    return raw, float(np.max(np.abs(rest))), reps


def projection_distance(L: Liouvilleans, s: float, g: Optional[float] = None,
                        theta: Optional[complex] = None, radius: Optional[float] = None,
                        nodes: int = 16) -> float:
    """‖P_g - P_0‖ with P_g the Riesz projection for the four resonances.

    One circle of radius ``radius`` (default |Im θ|/8) around each of 0 and
    ±2ω0; the small radius keeps the deformed continuum far enough away for
    a 16-node rule.  P_0 projects onto the zero-particle sector.
    """
    theta = L.spec.theta if theta is None else complex(theta)
    radius = abs(theta.imag) / 8 if radius is None else radius
    res = NodeResolvents(L.deformed(s, theta, g))
    w0 = L.spec.omega0
    P = sum(res.integrate(Contour(c, radius, nodes)) for c in (0.0, -2 * w0, 2 * w0))
    rank = np.trace(P)
    if abs(rank - 4) > 1e-6:
        raise GapViolation(f"projection trace {rank:.6f} differs from 4")
    return opnorm(P - L.zero_particle_projector())
