import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quasistatic.errors import ConfigError, KernelViolation, PoleProximity
from quasistatic.fock import ModeGrid
from quasistatic.linops import opnorm
from quasistatic.model import (
    GaussianFormFactor, Liouvilleans, ModelSpec, ReservoirSpec, Schedule, assumption_checks,
    boundary_limit_check, deformed_coefficients, default_spec, glued_isomorphism,
    glued_isomorphism_inverse, glued_pair, glued_tilde, modular_identity_check, rho_beta,
    spec_from_config, tracking_spec, validate_config,
)

from oracles import deformed_generator, form_tilde, subset_sums

FF = GaussianFormFactor()


class TestSchedule:
    def test_smoothstep_endpoints(self):
        sch = Schedule("smoothstep", 1.0, 1.5)
        assert sch.value(0.0) == 1.0 and sch.value(1.0) == 1.5
        assert sch.value(0.5) == pytest.approx(1.25)
        assert sch.derivative(0.0) == 0 and sch.derivative(1.0) == 0

    @pytest.mark.parametrize("s", [0.1, 0.5, 0.83])
    def test_derivatives_match_finite_differences(self, s):
        sch = Schedule("smoothstep", 0.5, 2.0)
        e = 1e-5
        fd1 = (sch.value(s + e) - sch.value(s - e)) / (2 * e)
        fd2 = (sch.derivative(s + e) - sch.derivative(s - e)) / (2 * e)
        assert sch.derivative(s) == pytest.approx(fd1, rel=1e-8, abs=1e-9)
        assert sch.derivative(s, 2) == pytest.approx(fd2, rel=1e-7, abs=1e-9)

    def test_constant_and_frozen(self):
        assert Schedule("constant", 0.7).value(0.3) == 0.7
        fr = Schedule("smoothstep", 1.0, 2.0).frozen()
        assert fr.value(1.0) == 1.0 and fr.derivative(0.5) == 0

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            Schedule("linear")


class TestFormFactors:
    def test_fermi_function_values(self):
        assert rho_beta(3.0, 0.0) == pytest.approx(0.5)
        assert rho_beta(1.0, 1.0) == pytest.approx(1 / (np.e + 1))
        assert rho_beta(1.0, 1.0) == pytest.approx(0.2689414213699951)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.1, 5.0), st.floats(-10.0, 10.0))
    def test_fermi_reflection(self, beta, u):
        assert rho_beta(beta, u) + rho_beta(beta, -u) == pytest.approx(1.0, abs=1e-12)

    def test_fermi_pole(self):
        with pytest.raises(PoleProximity):
            rho_beta(1.0, 1j * np.pi)

    def test_glued_tilde_values(self):
        assert glued_tilde(FF, 2.0) == pytest.approx(4 * np.exp(-4))
        assert glued_tilde(FF, 0.0) == 0
        assert glued_tilde(FF, -2.0) == pytest.approx(4 * np.exp(-4))
        assert glued_tilde(FF, 1.0, h=3.0) == pytest.approx(3 * np.exp(-1))

    def test_piecewise_agrees_with_continuation(self):
        u = np.linspace(-4, 4, 33)
        assert np.allclose(glued_tilde(FF, u), form_tilde(u.astype(complex)), atol=1e-14)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.2, 4.0), st.floats(-5.0, 5.0))
    def test_glued_pair_identities(self, beta, u):
        fb, fs = glued_pair(FF, beta, u)
        fb_ref, _ = glued_pair(FF, beta, -u)
        ft = form_tilde(u)
        assert abs(fs - 1j * np.conj(fb_ref)) <= 1e-12
        # |f_β|² + |f#|² = |f~|²
        assert abs(abs(fb) ** 2 + abs(fs) ** 2 - abs(ft) ** 2) <= 1e-12

    def test_deformed_coefficients_on_real_axis(self):
        # on the real axis the annihilators are the conjugates of the creators
        u = np.linspace(-3, 3, 7)
        beta = 1.3
        cr, an, cr_odd, an_odd = deformed_coefficients(FF, beta, u)
        fb, fs = glued_pair(FF, beta, u)
        assert np.allclose(cr, fb) and np.allclose(an, np.conj(fb))
        assert np.allclose(cr_odd, np.exp(-beta * u / 2) * fs)
        assert np.allclose(an_odd, np.exp(beta * u / 2) * np.conj(fs))


class TestFreeGenerator:
    def test_spectrum_is_subset_sums(self):
        L = Liouvilleans(default_spec(g=0.0))
        w = np.sort(np.linalg.eigvalsh(L.L0))
        small = [2.0, 0.0, 0.0, -2.0]
        bath = subset_sums(list(L.spec.reservoirs[0].grid.energies))
        expect = np.sort([a + b + c for a in small for b in bath for c in bath])
        assert np.allclose(w, expect, atol=1e-12)

    def test_hermitian_parts(self, default_L):
        assert opnorm(default_L.L0 - default_L.L0.conj().T) == 0
        for p in default_L.interaction_parts():
            assert opnorm(p - p.conj().T) <= 1e-14

    def test_reference_vector(self, default_L):
        assert np.linalg.norm(default_L.Omega) == pytest.approx(1.0)
        assert np.linalg.norm(default_L.L0 @ default_L.Omega) <= 1e-14

    def test_interaction_second_moment(self, default_L):
        # ⟨Ω, I² Ω⟩ = Σ h_i² ‖f_β + i f#‖² on the grid
        s = 0.4
        I = default_L.interaction(s)
        got = np.vdot(default_L.Omega, I @ I @ default_L.Omega).real
        expect = 0.0
        for hi, r in zip(default_L.h(s), default_L.spec.reservoirs):
            fb, fs = glued_pair(r.form_factor, r.beta, r.grid.energies)
            expect += hi ** 2 * r.grid.norm2(fb + 1j * fs)
        assert got == pytest.approx(expect, rel=1e-12)


class TestCLiouvillean:
    @pytest.mark.parametrize("s", [0.0, 0.5, 1.0])
    def test_kernel(self, default_L, s):
        L = default_L.c_liouvillean(s)
        assert np.linalg.norm(L @ default_L.Omega) <= 1e-12

    def test_undeformed_generator_is_adjoint(self, default_L):
        Lc = default_L.c_liouvillean(0.3)
        assert opnorm(default_L.deformed(0.3, 0.0) - Lc.conj().T) <= 1e-13

    def test_not_normal(self, default_L):
        Lc = default_L.c_liouvillean(0.3)
        assert opnorm(Lc @ Lc.conj().T - Lc.conj().T @ Lc) > 1e-3

    def test_kernel_violation_is_reported(self, default_L, monkeypatch):
        monkeypatch.setattr(default_L, "_cl", [p + 1e-3 for p in default_L.c_parts()])
        with pytest.raises(KernelViolation):
            default_L.c_liouvillean(0.5)
        monkeypatch.undo()


class TestDeformedGenerator:
    @pytest.mark.parametrize("theta", [-0.25j, 0.1 - 0.2j, 0.0])
    @pytest.mark.parametrize("s", [0.0, 0.6])
    def test_matches_independent_construction(self, tracking_L, theta, s):
        sp = tracking_L.spec
        g = ModeGrid(np.array([-1.0, 1.0]), np.ones(2))
        ref = deformed_generator(sp.omega0, [1.0, 2.0], g.energies, g.weights, sp.g, theta,
                                 hs=tracking_L.h(s))
        assert opnorm(tracking_L.deformed(s, theta) - ref) <= 1e-12

    def test_kernel_of_adjoint(self, default_L):
        A = default_L.deformed(0.5)
        assert np.linalg.norm(A.conj().T @ default_L.Omega) <= 1e-12

    def test_free_spectrum_shift(self):
        L = Liouvilleans(default_spec(g=0.0))
        theta = -0.25j
        w = np.linalg.eigvals(L.deformed(0.0, theta))
        n = np.round(np.real(np.diag(L.N))).astype(int)
        expect = np.real(np.diag(L.L0)) + theta * n
        # L0 and N are simultaneously diagonal in the occupation basis
        assert np.max(np.min(np.abs(w[:, None] - expect[None, :]), axis=0)) <= 1e-12

    def test_derivative_matches_finite_difference(self, tracking_L):
        e = 1e-6
        fd = (tracking_L.deformed(0.4 + e) - tracking_L.deformed(0.4 - e)) / (2 * e)
        assert opnorm(fd - tracking_L.deformed_derivative(0.4)) <= 1e-7

    def test_boundary_limit(self, default_L):
        d = boundary_limit_check(default_L, 0.5, 3j, [-0.1j, -0.01j, -1e-3j])
        assert np.all(np.diff(d) < 0) and d[-1] <= 1e-3


class TestAssumptions:
    def test_default_model(self):
        rep = assumption_checks(default_spec())
        assert np.all(rep.fgr_channel > 0)
        assert np.all(np.isfinite(rep.strip_norms))
        assert rep.k == pytest.approx(0.35)
        assert rep.g1 * rep.C < (rep.k - abs(rep.nu)) / 2
        assert rep.window_ok
        # the triangle-inequality constant is conservative: g = 0.05 sits above g1/2
        assert rep.coupling_ok == (0.05 < rep.g1 / 2)
        assert assumption_checks(default_spec(g=0.02)).coupling_ok

    def test_norm_bound_holds(self, default_L):
        rep = assumption_checks(default_spec(), L=default_L)
        for s in (0.0, 0.5, 1.0):
            for y in (-0.3, -0.1):
                assert opnorm(default_L.V_tot(s, 1j * y)) <= rep.C * (1 + 1e-12)

    def test_window(self):
        assert default_spec().in_window()
        assert not default_spec(theta=-0.1j).in_window()
        assert not default_spec(theta=-0.5j).in_window()


class TestModularStructure:
    @pytest.mark.parametrize("beta,M", [(1.0, 1), (2.0, 2), (0.7, 3)])
    def test_modular_identity(self, beta, M):
        u = np.linspace(1.0, 3.0, M)
        resid, two_point = modular_identity_check(beta, u, np.ones(M))
        assert resid <= 1e-12 and two_point <= 1e-12

    def test_glued_isomorphism_is_isometric(self, rng):
        u, w = np.array([1.0, 2.5, 4.0]), np.array([0.5, 1.0, 0.5])
        f = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        g = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        grid, h = glued_isomorphism(f, g, u, w)
        m = FF.measure(u)
        half = np.sum(w * m * (np.abs(f) ** 2 + np.abs(g) ** 2))
        assert grid.norm2(h) == pytest.approx(half, rel=1e-13)
        f2, g2 = glued_isomorphism_inverse(h, u)
        assert np.allclose(f2, f) and np.allclose(g2, g)


def same_spec(a, b):
    assert (a.omega0, a.g, a.theta, a.delta, a.nu) == (b.omega0, b.g, b.theta, b.delta, b.nu)
    assert len(a.reservoirs) == len(b.reservoirs)
    for x, y in zip(a.reservoirs, b.reservoirs):
        assert x.beta == y.beta and x.schedule == y.schedule
        assert np.array_equal(x.grid.energies, y.grid.energies)
        assert np.array_equal(x.grid.weights, y.grid.weights)
    return True


class TestConfig:
    def test_round_trip(self):
        spec = spec_from_config({"reservoirs": [{"beta": 1.0}, {"beta": 2.0}]})
        assert same_spec(spec, default_spec())

    def test_explicit_grid(self):
        cfg = {"omega0": 0.5, "g": 0.2, "reservoirs": [
            {"beta": 1.0, "energies": [-1, 1], "weights": [1, 1],
             "schedule": {"kind": "smoothstep", "start": 1.0, "end": 1.5}},
            {"beta": 2.0, "energies": [-1, 1], "weights": [1, 1],
             "schedule": {"kind": "constant", "start": 1.0}}]}
        assert same_spec(spec_from_config(cfg), tracking_spec())

    @pytest.mark.parametrize("cfg", [
        {},
        {"reservoirs": []},
        {"reservoirs": [{"beta": -1.0}]},
        {"reservoirs": [{"beta": 1.0, "modes": 3}]},
        {"reservoirs": [{"beta": 1.0}], "theta_im": 0.1},
        {"reservoirs": [{"beta": 1.0}], "colour": "blue"},
        {"reservoirs": [{"beta": 1.0, "energies": [-1, 1]}]},
        {"reservoirs": [{"beta": 1.0}], "omega0": 0.0},
    ])
    def test_rejects(self, cfg):
        with pytest.raises(ConfigError):
            spec_from_config(cfg)

    def test_validate_passes_good_config(self):
        cfg = {"reservoirs": [{"beta": 1.0}], "g": 0.1, "seed": 3}
        assert validate_config(cfg) is cfg

    def test_spec_validation(self):
        grid = ModeGrid.symmetric(4.0, 2)
        with pytest.raises(ValueError):
            ReservoirSpec(0.0, grid)
        with pytest.raises(ValueError):
            ModelSpec(1.0, ())
