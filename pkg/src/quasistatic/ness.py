"""Zero-energy resonance, relaxation to the steady state and quasi-static tracking.

The steady state at rescaled time s is read off the spectral projection of
the deformed generator L*(s, θ) at eigenvalue 0.  Pairings with the
reference vector Ω are normalised by ⟨P0 Ω, Ω⟩.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .adiabatic import GeneratorFamily, SweepResult
from .errors import AssumptionViolated, GapViolation, ResonanceAmbiguity, StepFailure
from .linops import Contour, NodeResolvents, StepExponential, opnorm
from .model import Liouvilleans
from .fock import SIGMA3

TAU_LIST = (50.0, 158.0, 500.0, 1581.0, 5000.0)


@dataclass
class NessState:
    s: float
    theta: complex
    g: float
    E1: complex
    radius: float
    vector: np.ndarray = field(repr=False)
    residual: float
    pairing: complex
    projector: Optional[np.ndarray] = field(default=None, repr=False)

    def expectation(self, avec: np.ndarray) -> complex:
        """⟨P0 Ω, aΩ⟩ / ⟨P0 Ω, Ω⟩ given aΩ."""
        return complex(np.vdot(self.vector, avec) / self.pairing)


def _zero_neighbour(eigs: np.ndarray, tol: float):
    """Eigenvalue closest to 0 after removing the exact kernel one."""
    order = np.argsort(np.abs(eigs))
    E1 = complex(eigs[order[1]])
    if abs(E1) < 2 * tol:
        raise ResonanceAmbiguity(f"second eigenvalue {E1:.3e} collides with 0; the kernel is not simple")
    return E1


def ness_state(L: Liouvilleans, s: float, theta: Optional[complex] = None,
               g: Optional[float] = None, nodes: int = 64, full: bool = False,
               tol: float = 1e-10) -> NessState:
    """Spectral projection of L*(s, θ) at 0 applied to Ω.

    The circle has radius min(|E1|, |Im E1|)/2 with E1 the nearest other
    eigenvalue.  With ``full`` the projector itself is also formed and
    checked for idempotence and unit trace.
    """
    theta = L.spec.theta if theta is None else complex(theta)
    g = L.spec.g if g is None else g
    A = L.deformed(s, theta, g)
    E1 = _zero_neighbour(np.linalg.eigvals(A), tol)
    radius = 0.5 * min(abs(E1), abs(E1.imag)) if E1.imag != 0 else 0.5 * abs(E1)
    res = NodeResolvents(A)
    contour = Contour(0.0, radius, nodes)
    w = res.integrate(contour, vector=L.Omega, tol=tol)
    resid = opnorm(A @ w) / max(opnorm(w), 1e-300)
    if resid > 1e-9:
        raise GapViolation(f"‖L* P0Ω‖/‖P0Ω‖ = {resid:.2e}; contour misses the kernel")
    P = None
    if full:
        P = res.integrate(contour, tol=tol)
        idem = opnorm(P @ P - P)
        if idem > 1e-9 * max(1.0, opnorm(P)):
            raise GapViolation(f"zero projection not idempotent ({idem:.2e})")
    pairing = complex(np.vdot(w, L.Omega))
    if abs(pairing) < 1e-12:
        raise ResonanceAmbiguity("steady vector is orthogonal to Ω")
    return NessState(float(s), theta, float(g), E1, radius, w, resid, pairing, P)


def steady_expectation(state: NessState, L: Liouvilleans, a) -> complex:
    """⟨P0 Ω, aΩ⟩ / ⟨P0 Ω, Ω⟩ for a small-system observable ``a`` (2x2)."""
    return state.expectation(L.small(a) @ L.Omega)


def gibbs_population(beta: float, omega0: float) -> float:
    """Equilibrium ⟨σ3⟩ of the two-level system with H = ω0 σ3."""
    return float(-np.tanh(beta * omega0))


# ---------------------------------------------------------------- relaxation

def recurrence_time(L: Liouvilleans) -> float:
    """2π over the smallest spacing of grid energies in any reservoir."""
    gaps = [np.min(np.diff(r.grid.energies)) for r in L.spec.reservoirs]
    return float(2 * np.pi / min(gaps))


def relaxation_trace(L: Liouvilleans, a, t_max: float, dt: float, deformed: bool = True,
                     s0: float = 0.0, g: Optional[float] = None, cap: float = 1e4):
    """(t, ⟨e^{-itL*(s0, θ)}Ω, aΩ⟩) on the uniform grid 0, dt, ... up to t_max.

    ``deformed=False`` uses θ = 0, where the generator is the adjoint of
    the C-Liouvillean; its trace is only meaningful up to the recurrence time.
    """
    theta = L.spec.theta if deformed else 0.0
    A = -1j * L.deformed(s0, theta, g)
    # never step past t_max: undeformed traces must stay inside the horizon
    steps = int(np.floor(t_max / dt + 1e-9))
    ts = dt * np.arange(steps + 1)
    orbit = StepExponential(A, dt, cap).orbit(L.Omega, steps)
    avec = L.small(a) @ L.Omega
    return ts, orbit.conj() @ avec


def fit_decay_rate(ts, trace, steady: complex, t_min: float, t_max: Optional[float] = None) -> float:
    """Rate r of |trace - steady| ≈ A e^{-rt} by least squares on log values."""
    ts = np.asarray(ts)
    t_max = ts[-1] if t_max is None else t_max
    m = (ts >= t_min) & (ts <= t_max)
    dev = np.abs(np.asarray(trace)[m] - steady)
    if np.sum(m) < 3 or np.any(dev <= 0):
        raise ValueError("not enough samples above the steady value to fit a rate")
    slope = np.polyfit(ts[m], np.log(dev), 1)[0]
    return float(-slope)


def golden_rule_rate(L: Liouvilleans, s: float, g: Optional[float] = None) -> float:
    """πg² Σ h_i² ‖f̃_i(2ω0)‖², the leading relaxation rate."""
    g = L.spec.g if g is None else g
    h = L.h(s)
    z = 2 * L.spec.omega0
    return float(np.pi * g * g * sum(hi * hi * abs(r.form_factor.tilde(z)) ** 2
                                     for hi, r in zip(h, L.spec.reservoirs)))


# ------------------------------------------------------------------ tracking

@dataclass
class TrackingResult:
    tau: float
    s: np.ndarray
    defects: np.ndarray
    observable: str
    propagated: np.ndarray = field(repr=False, default=None)
    steady: np.ndarray = field(repr=False, default=None)

    @property
    def sup(self) -> float:
        return float(np.max(self.defects))

    def rows(self):
        return [(self.tau, float(s), float(d)) for s, d in zip(self.s, self.defects)]


class SteadyPath:
    """Instantaneous steady expectations along a grid, computed once."""

    def __init__(self, L: Liouvilleans, grid: Sequence[float], a=SIGMA3,
                 theta: Optional[complex] = None, g: Optional[float] = None):
        self.L = L
        self.grid = np.asarray(grid, dtype=float)
        self.theta = L.spec.theta if theta is None else complex(theta)
        self.g = L.spec.g if g is None else g
        self.avec = L.small(a) @ L.Omega
        self.states = []
        for s in self.grid:
            try:
                self.states.append(ness_state(L, s, self.theta, self.g))
            except (ResonanceAmbiguity, GapViolation) as exc:
                raise AssumptionViolated("A4", f"zero resonance not isolated at s={s}: {exc}") from exc
        self.values = np.array([st.expectation(self.avec) for st in self.states])
        self.min_gap = min(abs(st.E1) for st in self.states)


def quasi_static_tracking(L: Liouvilleans, tau: float, path: SteadyPath,
                          rtol: float = 1e-10, atol: Optional[float] = None,
                          label: str = "sigma3") -> TrackingResult:
    """Propagate ∂_s ψ = -iτ L*(s, θ) ψ from P0(0)Ω and compare with the path.

    Both the propagated and the instantaneous pairing are normalised by the
    pairing with Ω (conserved along the flow because L*'s adjoint kills Ω).
    """
    atol = rtol * 1e-2 if atol is None else atol
    theta, g = path.theta, path.g
    base = L.L0 + theta * L.N
    parts = [g * p for p in L.deformed_parts(theta)]
    scheds = [r.schedule for r in L.spec.reservoirs]
    dim = L.dim

    def rhs(s, y):
        psi = y[:dim] + 1j * y[dim:]
        M = base + sum(float(sc.value(s)) * p for sc, p in zip(scheds, parts))
        d = -1j * tau * (M @ psi)
        return np.concatenate([d.real, d.imag])

    psi0 = path.states[0].vector / np.conj(path.states[0].pairing)
    y0 = np.concatenate([psi0.real, psi0.imag])
    grid = path.grid
    sol = solve_ivp(rhs, (grid[0], grid[-1]), y0, method="DOP853", t_eval=grid,
                    rtol=rtol, atol=atol)
    if not sol.success:
        raise StepFailure(sol.message)
    psi = sol.y[:dim] + 1j * sol.y[dim:]
    num = psi.conj().T @ path.avec
    den = psi.conj().T @ L.Omega
    prop = num / den
    return TrackingResult(float(tau), grid.copy(), np.abs(prop - path.values), label, prop, path.values)


def tau_sweep(L: Liouvilleans, taus: Sequence[float] = TAU_LIST, a=SIGMA3,
              grid: Sequence[float] = np.linspace(0.0, 1.0, 41), rtol: float = 1e-10,
              label: str = "sigma3"):
    """Sup-defect for every τ and its log-log fit; returns (SweepResult, [TrackingResult])."""
    taus = np.asarray(taus, dtype=float)
    if len(taus) < 4 or taus.max() / taus.min() < 100:
        raise ValueError("tau list must span two decades with at least four points")
    path = SteadyPath(L, grid, a)
    runs = [quasi_static_tracking(L, t, path, rtol=rtol, label=label) for t in taus]
    fit = SweepResult.fit(taus, [r.sup for r in runs], name="tau", floor=1e-8)
    return fit, runs


def ness_family(L: Liouvilleans, theta: Optional[complex] = None,
                g: Optional[float] = None) -> GeneratorFamily:
    """s ↦ iL*(s, θ) as a GeneratorFamily (zero resonance tracked at λ = 0)."""
    theta = L.spec.theta if theta is None else complex(theta)
    g = L.spec.g if g is None else g
    return GeneratorFamily(L.dim, lambda s: 1j * L.deformed(s, theta, g),
                           lambda s: 1j * L.deformed_derivative(s, theta, g))
