"""Two-level system coupled to fermionic reservoirs, truncated to mode grids.

The Hilbert space is  C^2 (left) ⊗ C^2 (right) ⊗ F_1 ⊗ ... ⊗ F_n  where the
left/right pair carries the trace state of the two-level system and each F_i
is the glued Fock space of reservoir i.  Reservoir energies u_j sit on a
symmetric grid; complex deformation shifts every energy to u_j + θ.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import AssumptionViolated, ConfigError, KernelViolation, PoleProximity
from .fock import SIGMA1, SIGMA3, FockSpace, Layout, ModeGrid
from .linops import opnorm

POLE_TOL = 1e-8


# ----------------------------------------------------------------- schedules

@dataclass(frozen=True)
class Schedule:
    """Coupling profile h(s) on [0, 1].

    ``smoothstep``: h = start + (end - start) s^2 (3 - 2s), flat at both ends.
    ``constant``: h = start.
    """

    kind: str = "smoothstep"
    start: float = 1.0
    end: float = 1.5

    def __post_init__(self):
        if self.kind not in ("smoothstep", "constant"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")

    def value(self, s):
        if self.kind == "constant":
            return self.start + 0.0 * np.asarray(s, dtype=float)
        s = np.asarray(s, dtype=float)
        return self.start + (self.end - self.start) * s * s * (3 - 2 * s)

    def derivative(self, s, order: int = 1):
        s = np.asarray(s, dtype=float)
        if self.kind == "constant":
            return 0.0 * s
        amp = self.end - self.start
        if order == 1:
            return amp * 6 * s * (1 - s)
        if order == 2:
            return amp * (6 - 12 * s)
        raise ValueError("only first and second derivatives are provided")

    def frozen(self) -> "Schedule":
        return Schedule("constant", float(self.value(0.0)), float(self.value(0.0)))


# -------------------------------------------------------------- form factors

@dataclass(frozen=True)
class GaussianFormFactor:
    """Half-line coupling f(u) = sqrt(2) u^{7/4} e^{-u^2} with m(u) = sqrt(u)/2.

    Its glued version sqrt(m) f is u^2 e^{-u^2} on both half-lines, an entire
    function with real Taylor coefficients, which is what the deformation
    uses.
    """

    def profile(self, u):
        u = np.asarray(u, dtype=float)
        return np.sqrt(2.0) * u ** 1.75 * np.exp(-u * u)

    def measure(self, u):
        return 0.5 * np.sqrt(np.asarray(u, dtype=float))

    def tilde(self, z):
        z = np.asarray(z, dtype=complex)
        return z * z * np.exp(-z * z)


def rho_beta(beta: float, u):
    """Fermi function 1 / (e^{βu} + 1), complex arguments allowed."""
    u = np.asarray(u, dtype=complex)
    e = np.exp(beta * u)
    if np.any(np.abs(1 + e) < POLE_TOL):
        raise PoleProximity("u is within 1e-8 of a pole of the Fermi function")
    out = 1.0 / (e + 1.0)
    return out if np.iscomplexobj(out) and np.any(np.imag(u)) else out.real


def glued_tilde(ff, u, h: float = 1.0):
    """Glued factor h * f~(u).

    For real u the piecewise definition sqrt(m(|u|)) f(|u|) (conjugated on
    the negative half-line) is evaluated; complex u uses the continuation.
    """
    u = np.asarray(u)
    if np.iscomplexobj(u) and np.any(np.imag(u) != 0):
        return h * ff.tilde(u)
    u = np.real(u).astype(float)
    a = np.abs(u)
    with np.errstate(invalid="ignore"):
        vals = np.sqrt(ff.measure(a)) * ff.profile(a)
    vals = np.where(a == 0, 0.0, vals).astype(complex)
    return h * np.where(u >= 0, vals, np.conj(vals))


def _inv_sqrt_one_plus_exp(x):
    """(1 + e^{x})^{-1/2} with a pole-proximity guard."""
    base = 1.0 + np.exp(x)
    if np.any(np.abs(base) < POLE_TOL):
        raise PoleProximity("argument within 1e-8 of a pole of (1 + e^x)^{-1/2}")
    return base ** -0.5


def glued_pair(ff, beta: float, u, h: float = 1.0):
    """(f_β(u), f_β^#(u)) for real or complex u.

    f_β = (1 + e^{-βu})^{-1/2} f~ and f_β^# = i (1 + e^{βu})^{-1/2} f~; on the
    real axis the latter equals i * conj(f_β(-u)).
    """
    u = np.asarray(u, dtype=complex)
    ft = h * ff.tilde(u)
    return _inv_sqrt_one_plus_exp(-beta * u) * ft, 1j * _inv_sqrt_one_plus_exp(beta * u) * ft


def deformed_coefficients(ff, beta: float, z, h: float = 1.0):
    """Mode coefficients of the four field terms at shifted energies z.

    Returns (create, annihilate, create_odd, annihilate_odd): the σ1⊗1 term
    uses a*(f_β) and a(f_β) and the parity-dressed 1⊗σ1 term uses
    a*(e^{-βu/2} f^#) and a(e^{βu/2} f^#).  Annihilator coefficients are the
    analytic continuations of the conjugated real-axis values, which for a
    glued factor means f~(-z) in place of conj f~(z).
    """
    z = np.asarray(z, dtype=complex)
    ft, ft_ref = h * ff.tilde(z), h * ff.tilde(-z)
    damp = _inv_sqrt_one_plus_exp(-beta * z)
    create = damp * ft
    annihilate = damp * ft_ref
    annihilate_odd = -1j * damp * ft_ref
    create_odd = 1j * np.exp(-beta * z) * damp * ft
    return create, annihilate, create_odd, annihilate_odd


# --------------------------------------------------------------- model spec

@dataclass(frozen=True)
class ReservoirSpec:
    beta: float
    grid: ModeGrid
    schedule: Schedule = Schedule()
    form_factor: GaussianFormFactor = GaussianFormFactor()

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")


@dataclass(frozen=True)
class ModelSpec:
    omega0: float
    reservoirs: Tuple[ReservoirSpec, ...]
    g: float = 0.05
    theta: complex = -0.25j
    delta: float = 0.35
    nu: Optional[float] = None

    def __post_init__(self):
        if not self.omega0 > 0:
            raise ValueError("omega0 must be positive")
        if len(self.reservoirs) < 1:
            raise ValueError("at least one reservoir is required")
        object.__setattr__(self, "reservoirs", tuple(self.reservoirs))
        object.__setattr__(self, "theta", complex(self.theta))

    @property
    def k(self) -> float:
        return min([self.delta] + [np.pi / r.beta for r in self.reservoirs])

    def window_nu(self, theta: Optional[complex] = None) -> float:
        """ν used for the window test.

        When not fixed explicitly, ν is centred in the range allowed by
        Im θ: -k < ν < 0 and |ν| < 2|Im θ| - k.
        """
        if self.nu is not None:
            return float(self.nu)
        th = self.theta if theta is None else complex(theta)
        room = min(2 * abs(th.imag) - self.k, self.k)
        return -0.5 * room if room > 0 else 0.0

    def in_window(self, theta: Optional[complex] = None) -> bool:
        """-k < Im θ < -(k + |ν|)/2 with ν strictly inside (-k, 0)."""
        th = self.theta if theta is None else complex(theta)
        nu = self.window_nu(th)
        if not -self.k < nu < 0:
            return False
        return -self.k < th.imag < -(self.k + abs(nu)) / 2

    def with_(self, **kw) -> "ModelSpec":
        return replace(self, **kw)

    def with_schedules(self, schedules: Sequence[Schedule]) -> "ModelSpec":
        res = tuple(replace(r, schedule=sch) for r, sch in zip(self.reservoirs, schedules))
        return replace(self, reservoirs=res)

    def frozen(self) -> "ModelSpec":
        return self.with_schedules([r.schedule.frozen() for r in self.reservoirs])


def default_spec(**overrides) -> ModelSpec:
    grid = ModeGrid.symmetric(4.0, 4)
    spec = ModelSpec(1.0, (ReservoirSpec(1.0, grid), ReservoirSpec(2.0, grid)))
    return spec.with_(**overrides) if overrides else spec


def tracking_spec(**overrides) -> ModelSpec:
    """Small model (dimension 64) used for quasi-static tracking runs.

    ω0 = 0.5 with one mode pair at ±2ω0 per reservoir and g = 0.2, which
    separates the zero resonance by about 0.16.  Only reservoir 1 is ramped,
    so the steady state actually moves with s.
    """
    grid = ModeGrid(np.array([-1.0, 1.0]), np.array([1.0, 1.0]))
    spec = ModelSpec(0.5, (ReservoirSpec(1.0, grid, Schedule("smoothstep", 1.0, 1.5)),
                           ReservoirSpec(2.0, grid, Schedule("constant", 1.0, 1.0))), g=0.2)
    return spec.with_(**overrides) if overrides else spec


# ---------------------------------------------------------- config loading

def schema() -> dict:
    return json.loads(resources.files("quasistatic").joinpath("config_schema.json").read_text())


def _schedule_from(raw, fallback: Schedule) -> Schedule:
    if raw is None:
        return fallback
    return Schedule(raw.get("kind", "smoothstep"), float(raw.get("start", 1.0)),
                    float(raw.get("end", raw.get("start", 1.0) if raw.get("kind") == "constant" else 1.5)))


def validate_config(cfg: dict) -> dict:
    """Schema validation; raises ConfigError with the first problem."""
    import jsonschema

    try:
        jsonschema.validate(cfg, schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {exc.message}") from None
    return cfg


def spec_from_config(cfg: dict) -> ModelSpec:
    validate_config(cfg)
    default_sched = _schedule_from(cfg.get("schedule"), Schedule())
    res = []
    for r in cfg["reservoirs"]:
        if "energies" in r:
            grid = ModeGrid(np.array(r["energies"], float), np.array(r["weights"], float))
        else:
            grid = ModeGrid.symmetric(float(r.get("u_max", 4.0)), int(r.get("modes", 4)))
        res.append(ReservoirSpec(float(r["beta"]), grid, _schedule_from(r.get("schedule"), default_sched)))
    try:
        return ModelSpec(float(cfg.get("omega0", 1.0)), tuple(res), float(cfg.get("g", 0.05)),
                         complex(cfg.get("theta_re", 0.0), float(cfg.get("theta_im", -0.25))),
                         float(cfg.get("delta", 0.35)), cfg.get("nu"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# ------------------------------------------------------------- liouvilleans

class Liouvilleans:
    """Assembled operators for one ModelSpec.

    Coupling terms are linear in each schedule value h_i(s), so the
    reservoir-resolved pieces are built once (at h = 1) and recombined for
    every s.  Deformed pieces are cached per θ.
    """

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.spaces = [FockSpace(r.grid) for r in spec.reservoirs]
        self.layout = Layout((2, 2) + tuple(sp.dim for sp in self.spaces))
        self.dim = self.layout.total
        H = spec.omega0 * SIGMA3
        self.LS = np.kron(H, np.eye(2)) - np.kron(np.eye(2), H.conj())
        omega_s = np.zeros(4, dtype=complex)
        omega_s[0] = omega_s[3] = 1 / np.sqrt(2)
        self.omega_small = omega_s
        self.Omega = omega_s
        for sp in self.spaces:
            self.Omega = np.kron(self.Omega, sp.vacuum())
        self.L0 = self.layout.assemble({0: H, }) - self.layout.assemble({1: H.conj()})
        self.N_parts = []
        for i, sp in enumerate(self.spaces):
            self.L0 = self.L0 + self.layout.assemble({i + 2: sp.dGamma(sp.grid.energies)})
            self.N_parts.append(self.layout.assemble({i + 2: sp.number_operator()}))
        self.N = sum(self.N_parts)
        self._std = None
        self._cl = None
        self._deformed: Dict[complex, List[np.ndarray]] = {}

    # -- helpers
    def h(self, s) -> np.ndarray:
        return np.array([float(r.schedule.value(s)) for r in self.spec.reservoirs])

    def hdot(self, s) -> np.ndarray:
        return np.array([float(r.schedule.derivative(s)) for r in self.spec.reservoirs])

    def small(self, op) -> np.ndarray:
        """Small-system observable acting on the left factor."""
        return self.layout.assemble({0: op})

    def _local(self, i, left_op, right_op):
        """σ1⊗1⊗left_op - i·1⊗σ1⊗(-1)^N right_op in reservoir slot i."""
        par = self.spaces[i].parity()
        return (self.layout.assemble({0: SIGMA1, i + 2: left_op})
                - 1j * self.layout.assemble({1: SIGMA1, i + 2: par @ right_op}))

    # -- real-axis constructions from smeared fields
    def _real_axis_fields(self, i):
        res, sp = self.spec.reservoirs[i], self.spaces[i]
        u = sp.grid.energies
        fb, fs = glued_pair(res.form_factor, res.beta, u)
        return res.beta, u, fb, fs, sp

    def interaction_parts(self) -> List[np.ndarray]:
        """Standard interaction per reservoir at h = 1 (Hermitian)."""
        if self._std is None:
            parts = []
            for i in range(len(self.spaces)):
                beta, u, fb, fs, sp = self._real_axis_fields(i)
                a_b, ad_b = sp.smeared_field(fb)
                a_s, ad_s = sp.smeared_field(fs)
                parts.append(self._local(i, ad_b + a_b, ad_s + a_s))
            self._std = parts
        return self._std

    def c_parts(self) -> List[np.ndarray]:
        """C-Liouvillean coupling per reservoir at h = 1.

        The reflected term carries e^{βu/2} on the creation side and
        e^{-βu/2} on the annihilation side: that is how the reservoir
        modular operator enters in the glued picture.
        """
        if self._cl is None:
            parts = []
            for i in range(len(self.spaces)):
                beta, u, fb, fs, sp = self._real_axis_fields(i)
                a_b, ad_b = sp.smeared_field(fb)
                _, ad_up = sp.smeared_field(np.exp(beta * u / 2) * fs)
                a_dn, _ = sp.smeared_field(np.exp(-beta * u / 2) * fs)
                parts.append(self._local(i, ad_b + a_b, ad_up + a_dn))
            self._cl = parts
        return self._cl

    def deformed_parts(self, theta: complex) -> List[np.ndarray]:
        """Coupling of the deformed adjoint generator per reservoir at h = 1."""
        key = complex(theta)
        if key not in self._deformed:
            parts = []
            for i, (res, sp) in enumerate(zip(self.spec.reservoirs, self.spaces)):
                z = sp.grid.energies + key
                cr, an, cr_odd, an_odd = deformed_coefficients(res.form_factor, res.beta, z)
                left = sp.creator(cr) + sp.annihilator(an)
                right = sp.creator(cr_odd) + sp.annihilator(an_odd)
                parts.append(self._local(i, left, right))
            self._deformed[key] = parts
        return self._deformed[key]

    # -- public operators
    def V(self, s: float) -> np.ndarray:
        """Unreflected part Σ h_i σ1⊗1⊗(a*(f_β)+a(f_β))."""
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for i, hi in enumerate(self.h(s)):
            beta, u, fb, fs, sp = self._real_axis_fields(i)
            a_b, ad_b = sp.smeared_field(fb)
            out += hi * self.layout.assemble({0: SIGMA1, i + 2: ad_b + a_b})
        return out

    def interaction(self, s: float) -> np.ndarray:
        return sum(hi * p for hi, p in zip(self.h(s), self.interaction_parts()))

    def standard(self, s: float, g: Optional[float] = None) -> np.ndarray:
        g = self.spec.g if g is None else g
        return self.L0 + g * self.interaction(s)

    def c_liouvillean(self, s: float, g: Optional[float] = None, tol: float = 1e-10) -> np.ndarray:
        g = self.spec.g if g is None else g
        L = self.L0 + g * sum(hi * p for hi, p in zip(self.h(s), self.c_parts()))
        resid = np.linalg.norm(L @ self.Omega)
        if resid > tol:
            raise KernelViolation(f"‖L_C Ω‖ = {resid:.2e} at s={s}")
        return L

    def V_tot(self, s: float, theta: Optional[complex] = None) -> np.ndarray:
        theta = self.spec.theta if theta is None else theta
        return sum(hi * p for hi, p in zip(self.h(s), self.deformed_parts(theta)))

    def deformed(self, s: float, theta: Optional[complex] = None, g: Optional[float] = None) -> np.ndarray:
        """L0 + θN + g Ṽ^tot(s, θ): the deformed adjoint C-Liouvillean."""
        theta = self.spec.theta if theta is None else complex(theta)
        g = self.spec.g if g is None else g
        return self.L0 + theta * self.N + g * self.V_tot(s, theta)

    def deformed_derivative(self, s: float, theta: Optional[complex] = None,
                            g: Optional[float] = None) -> np.ndarray:
        theta = self.spec.theta if theta is None else complex(theta)
        g = self.spec.g if g is None else g
        return g * sum(hd * p for hd, p in zip(self.hdot(s), self.deformed_parts(theta)))

    def zero_particle_projector(self) -> np.ndarray:
        """1⊗1⊗|vac><vac| on every reservoir."""
        factors = {i + 2: np.diag(sp.vacuum()) for i, sp in enumerate(self.spaces)}
        return self.layout.assemble(factors)

    # -- norm constant of the coupling
    def local_coupling_norm(self, i: int, theta: complex) -> float:
        """‖σ1⊗1⊗X - i 1⊗σ1⊗(-1)^N Y‖ on C^2⊗C^2⊗F_i alone (h = 1)."""
        res, sp = self.spec.reservoirs[i], self.spaces[i]
        cr, an, cr_odd, an_odd = deformed_coefficients(res.form_factor, res.beta, sp.grid.energies + theta)
        X = sp.creator(cr) + sp.annihilator(an)
        Y = sp.parity() @ (sp.creator(cr_odd) + sp.annihilator(an_odd))
        loc = Layout((2, 2, sp.dim))
        M = loc.assemble({0: SIGMA1, 2: X}) - 1j * loc.assemble({1: SIGMA1, 2: Y})
        return opnorm(M)


# -------------------------------------------------------------- diagnostics

def boundary_limit_check(L: Liouvilleans, s: float, z: complex, thetas: Sequence[complex],
                         g: Optional[float] = None) -> np.ndarray:
    """‖(L*(θ) - z)^{-1} - (L*(Re θ) - z)^{-1}‖ for each θ."""
    eye = np.eye(L.dim)
    out = []
    for th in thetas:
        th = complex(th)
        Rd = np.linalg.inv(L.deformed(s, th, g) - z * eye)
        Rr = np.linalg.inv(L.deformed(s, complex(th.real, 0.0), g) - z * eye)
        out.append(opnorm(Rd - Rr))
    return np.array(out)


@dataclass
class ModelAssumptions:
    fgr_channel: np.ndarray
    strip_norms: np.ndarray
    C: float
    g1: float
    nu: float
    k: float
    coupling_ok: bool
    window_ok: bool


def assumption_checks(spec: ModelSpec, s_grid: Sequence[float] = np.linspace(0, 1, 11),
                      theta_samples: int = 9, L: Optional[Liouvilleans] = None,
                      u_cut: float = 8.0) -> ModelAssumptions:
    """Golden-rule channel, strip norms, and the constants C and g1.

    Strip norms: sup over Im θ in (-δ, δ) of ∫ |e^{-βu/2} ∂_s^j f~(u + iy)|^2 du
    for j = 0, 1, 2, by Gauss-Legendre quadrature on [-u_cut, u_cut].
    C is the sum over reservoirs of max_s |h_i| times the sampled supremum of
    the local coupling norm over Im θ in [-k, 0]; by the triangle inequality
    it bounds ‖Ṽ^tot(s, θ)‖ at every sampled point.  g1 is then the largest
    value with g1*C < (k - |ν|)/2 (with a 1% margin).
    """
    s_grid = np.asarray(s_grid, dtype=float)
    w0 = 2 * spec.omega0
    fgr = np.array([sum(abs(glued_tilde(r.form_factor, w0, float(r.schedule.value(s))))
                        for r in spec.reservoirs) for s in s_grid])
    if np.any(fgr <= 0):
        raise AssumptionViolated("fermi-golden-rule", "form factor vanishes at 2*omega0")
    x, wq = np.polynomial.legendre.leggauss(400)
    u, wq = u_cut * x, u_cut * wq
    ys = np.linspace(-0.999 * spec.delta, 0.999 * spec.delta, theta_samples)
    norms = np.zeros((len(spec.reservoirs), 3))
    for i, r in enumerate(spec.reservoirs):
        hmax = [np.max(np.abs(r.schedule.value(s_grid)))] + \
               [np.max(np.abs(r.schedule.derivative(s_grid, o))) for o in (1, 2)]
        for j in range(3):
            best = 0.0
            for y in ys:
                vals = np.abs(np.exp(-r.beta * u / 2) * r.form_factor.tilde(u + 1j * y)) ** 2
                best = max(best, hmax[j] ** 2 * float(np.sum(wq * vals)))
            norms[i, j] = best
    if not np.all(np.isfinite(norms)):
        raise AssumptionViolated("strip-analyticity", "strip norm is not finite")
    L = Liouvilleans(spec) if L is None else L
    k = spec.k
    C = 0.0
    for i, r in enumerate(spec.reservoirs):
        hmax = float(np.max(np.abs(r.schedule.value(s_grid))))
        sup = max(L.local_coupling_norm(i, 1j * y) for y in np.linspace(-0.999 * k, 0.0, theta_samples))
        C += hmax * sup
    nu = spec.window_nu()
    g1 = 0.99 * (k - abs(nu)) / (2 * C)
    return ModelAssumptions(fgr, norms, C, g1, nu, k, abs(spec.g) < g1 / 2, spec.in_window())


# -------------------------------------------------- pre-glued modular checks

def _conj_phase(space: FockSpace) -> np.ndarray:
    n = space.occupations.sum(axis=1)
    return (-1.0) ** (n * (n - 1) // 2)


def modular_identity_check(beta: float, half_energies, half_weights, ff=GaussianFormFactor()):
    """Max residual of J Δ^{1/2} a Ω = a* Ω on the doubled pre-glued space.

    Space: C^2⊗C^2⊗F(half grid)⊗F(half grid) with the Araki-Wyss fields
    π(b(f)) = b(sqrt(1-ρ) f)⊗1 + (-1)^N⊗b*(sqrt(ρ) conj f), the trace state
    on the two-level factor, Δ^{1/2} = exp(-β L^R / 2) with
    L^R = dΓ(u)⊗1 - 1⊗dΓ(u), and J the swap-and-conjugate map with
    (-1)^{N(N-1)/2} phases.  Returns (residual, two_point_error).
    """
    u = np.asarray(half_energies, dtype=float)
    v = np.asarray(half_weights, dtype=float) * ff.measure(u)
    # a FockSpace needs a symmetric grid; the pre-glued half-line space only
    # needs the mode algebra, so build it on a dummy symmetric grid when M=1
    sp = _HalfFock(u, v)
    M, d = len(u), sp.dim
    rho = np.real(rho_beta(beta, u))
    par = sp.parity
    eye = np.eye(d)
    lay = Layout((2, 2, d, d))

    def b(f):
        return sp.field(f)[0]

    def bstar(f):
        return sp.field(f)[1]

    def pi_b(f):
        f = np.asarray(f, dtype=complex)
        return lay.assemble({2: b(np.sqrt(1 - rho) * f)}) + lay.assemble({2: par, 3: bstar(np.sqrt(rho) * np.conj(f))})

    LR = lay.assemble({2: sp.dgamma(u)}) - lay.assemble({3: sp.dgamma(u)})
    w, V = np.linalg.eigh(LR)
    Dhalf = (V * np.exp(-beta * w / 2)) @ V.conj().T
    swap_s = np.zeros((4, 4))
    for a in range(2):
        for c in range(2):
            swap_s[2 * c + a, 2 * a + c] = 1.0
    ph = sp.phase
    swap_r = np.zeros((d * d, d * d))
    for n in range(d):
        for m in range(d):
            swap_r[m * d + n, n * d + m] = ph[n] * ph[m]
    Jm = np.kron(swap_s, swap_r)

    def J(x):
        return Jm @ np.conj(x)

    omega_s = np.zeros(4)
    omega_s[0] = omega_s[3] = 1 / np.sqrt(2)
    vac = np.zeros(d)
    vac[0] = 1.0
    Omega = np.kron(np.kron(omega_s, vac), vac).astype(complex)

    rng = np.random.default_rng(7)
    f = ff.profile(u) * (1 + 0.3j * rng.standard_normal(M))
    elems = [np.eye(lay.total, dtype=complex)]
    for op in (SIGMA1, np.array([[0, -1j], [1j, 0]]), SIGMA3):
        elems.append(lay.assemble({0: op}))
    for j in range(M):
        e = np.zeros(M, dtype=complex)
        e[j] = 1.0
        elems += [pi_b(e), pi_b(e).conj().T]
    B = pi_b(f)
    elems += [B, B.conj().T, B.conj().T @ B, lay.assemble({0: SIGMA1}) @ B]
    if M > 1:
        e1, e2 = np.eye(M)[0].astype(complex), np.eye(M)[1].astype(complex)
        elems.append(pi_b(e1) @ pi_b(e2))
        elems.append(pi_b(e2).conj().T @ pi_b(e1).conj().T @ lay.assemble({0: SIGMA3}))
    resid = max(float(np.linalg.norm(J(Dhalf @ (a @ Omega)) - a.conj().T @ Omega)) for a in elems)
    two_point = np.vdot(Omega, B.conj().T @ B @ Omega).real
    expected = float(np.sum(v * rho * np.abs(f) ** 2))
    return resid, abs(two_point - expected)


class _HalfFock:
    """Mode algebra on a half-line grid with weights v_j = w_j m(u_j)."""

    def __init__(self, u, v):
        self.u, self.v = np.asarray(u, float), np.asarray(v, float)
        self.M = len(u)
        self.dim = 2 ** self.M
        lower = np.array([[0.0, 1.0], [0.0, 0.0]])
        Z = np.diag([1.0, -1.0])
        self.c = []
        for j in range(self.M):
            mats = [Z] * j + [lower] + [np.eye(2)] * (self.M - j - 1)
            op = mats[0]
            for m in mats[1:]:
                op = np.kron(op, m)
            self.c.append(op.astype(complex))
        self.occ = (np.arange(self.dim)[:, None] >> np.arange(self.M - 1, -1, -1)) & 1
        n = self.occ.sum(axis=1)
        self.parity = np.diag((-1.0) ** n).astype(complex)
        self.phase = (-1.0) ** (n * (n - 1) // 2)

    def field(self, f):
        f = np.asarray(f, dtype=complex)
        a = sum(np.sqrt(self.v[j]) * np.conj(f[j]) * self.c[j] for j in range(self.M))
        return a, a.conj().T

    def dgamma(self, h):
        return np.diag(self.occ @ np.asarray(h, dtype=complex))


def glued_isomorphism(f, g, half_energies, half_weights, ff=GaussianFormFactor()):
    """Map (f, g) on the half grid to h on the mirrored full grid.

    h(u) = sqrt(m(u)) f(u) for u > 0 and sqrt(m(|u|)) g(|u|) for u < 0.
    Returns (ModeGrid, h).  Norms: half grid uses weights w m(u), full grid w.
    """
    u = np.asarray(half_energies, float)
    w = np.asarray(half_weights, float)
    root = np.sqrt(ff.measure(u))
    grid = ModeGrid(np.concatenate([-u[::-1], u]), np.concatenate([w[::-1], w]))
    h = np.concatenate([(root * np.asarray(g))[::-1], root * np.asarray(f)])
    return grid, h


def glued_isomorphism_inverse(h, half_energies, ff=GaussianFormFactor()):
    u = np.asarray(half_energies, float)
    M = len(u)
    root = np.sqrt(ff.measure(u))
    h = np.asarray(h)
    return h[M:] / root, h[:M][::-1] / root
