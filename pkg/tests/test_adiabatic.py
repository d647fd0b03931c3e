import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from quasistatic.adiabatic import (
    GeneratorFamily, ProjectionTracker, SweepResult, adiabatic_error_sweep, adiabatic_generator,
    assumption_report, commutator_operator_X, composition_defect, intertwining_defect,
    kato_product_propagator, propagate, riesz_projection, synthetic_family, track_eigenvalue,
)
from quasistatic.errors import EigenvalueLost, GapViolation
from quasistatic.linops import commutator, opnorm

GRID = np.linspace(0.0, 1.0, 11)


def similarity_family():
    """A(s) = R(s) diag(1, 2) R(s)^{-1} with R(s) = expm(sK), closed-form P(s)."""
    K = np.array([[0.3, 1.1], [-0.7, 0.2]])
    D = np.diag([1.0, 2.0])

    def R(s):
        return sla.expm(s * K)

    fam = GeneratorFamily(2, lambda s: R(s) @ D @ np.linalg.inv(R(s)))
    proj = lambda s: R(s) @ np.diag([1.0, 0.0]) @ np.linalg.inv(R(s))
    return fam, proj, K


@pytest.fixture(scope="module")
def synthetic():
    return synthetic_family(0)


class TestFamilies:
    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.0, 1.0))
    def test_synthetic_spectrum_is_fixed(self, s):
        fam = synthetic_family(0)
        w = np.linalg.eigvals(fam.A(s))
        expect = np.array([0.0, 1 + 1j, 2 + 0.5j, 3.0, 3.5 + 2j, 1 - 1j])
        assert np.max(np.min(np.abs(w[:, None] - expect[None, :]), axis=0)) <= 1e-8

    @pytest.mark.parametrize("s", [0.0, 0.37, 1.0])
    def test_finite_difference_matches_closed_form(self, synthetic, s):
        fd = GeneratorFamily(6, synthetic.evaluate)
        assert opnorm(fd.Adot(s) - synthetic.Adot(s)) <= 1e-6

    def test_constant_family_has_zero_derivative(self):
        fam = GeneratorFamily.constant(np.diag([1.0, 3.0]))
        assert np.all(fam.Adot(0.4) == 0)


class TestAssumptionReport:
    def test_constant_gap(self):
        rep = assumption_report(GeneratorFamily.constant(np.diag([1.0, 3.0])), 1.0, GRID)
        assert np.allclose(rep.gap, 2.0)
        assert rep.flags["contraction"] is True
        assert rep.abscissa.max() == pytest.approx(-1.0)

    def test_moving_gap(self):
        fam = GeneratorFamily(2, lambda s: np.diag([1.0, 3.0 + s]))
        rep = assumption_report(fam, 1.0, GRID)
        assert rep.gap.min() == pytest.approx(2.0)
        assert rep.gap.argmin() == 0

    def test_synthetic_family(self, synthetic):
        rep = assumption_report(synthetic, 0.0, np.linspace(0, 1, 21))
        assert rep.flags["isolated"] and rep.flags["smooth_projection"]
        assert rep.gap.min() >= 0.5
        # nonnormal coupling: numerical range pokes slightly past 0
        assert 0 < rep.quasi_contraction_rate < 0.01
        assert np.isfinite(rep.resolvent_bound)

    def test_gap_collapse(self):
        fam = GeneratorFamily(2, lambda s: np.diag([0.0, 1.0 - s]))
        with pytest.raises(EigenvalueLost):
            track_eigenvalue(fam, 0.0, GRID)


class TestRieszProjection:
    def test_constant_diagonal(self):
        p = riesz_projection(GeneratorFamily.constant(np.diag([1.0, 2.0])), 0.0, 1.0)
        assert np.allclose(p.P, np.diag([1.0, 0.0]), atol=1e-12)
        assert np.allclose(p.Pdot, 0.0, atol=1e-12)
        assert p.lam == pytest.approx(1.0)

    @pytest.mark.parametrize("s", [0.0, 0.5, 1.0])
    def test_similarity_family(self, s):
        fam, proj, K = similarity_family()
        p = riesz_projection(fam, s, 1.0)
        assert opnorm(p.P - proj(s)) <= 1e-8
        # d/ds (R P0 R^{-1}) = [K, P(s)]
        assert opnorm(p.Pdot - commutator(K, proj(s))) <= 1e-6
        assert opnorm(p.P @ p.Pdot @ p.P) <= 1e-8

    def test_second_eigenvalue_inside_user_radius(self):
        with pytest.raises(GapViolation):
            riesz_projection(GeneratorFamily.constant(np.diag([1.0, 2.0])), 0.0, 1.0, radius=1.5)


class TestCommutatorX:
    def test_constant_family(self):
        fam = GeneratorFamily.constant(np.diag([1.0, 2.0, 4.0]))
        p = riesz_projection(fam, 0.0, 1.0)
        X = commutator_operator_X(fam, 0.0, p)
        assert opnorm(commutator(X, fam.A(0.0))) <= 1e-12

    def test_similarity_identity_and_bound(self):
        fam, _, _ = similarity_family()
        norms = []
        for s in GRID:
            p = riesz_projection(fam, s, 1.0)
            X = commutator_operator_X(fam, s, p)
            resid = commutator(X, fam.A(s)) - commutator(p.Pdot, p.P)
            assert opnorm(resid) <= 1e-8 * opnorm(fam.A(s))
            norms.append(opnorm(X))
        assert max(norms) < 10 * min(norms) + 1


class TestAdiabaticGenerator:
    def test_constant_family(self):
        fam = GeneratorFamily.constant(np.diag([1.0, 2.0]))
        p = riesz_projection(fam, 0.0, 1.0)
        assert np.allclose(adiabatic_generator(fam, p, 5.0), fam.A(0.0), atol=1e-12)

    @pytest.mark.parametrize("tau", [1.0, 10.0, 1e3])
    def test_distance_bound(self, synthetic, tau):
        p = riesz_projection(synthetic, 0.3, 0.0)
        gap = opnorm(adiabatic_generator(synthetic, p, tau) - synthetic.A(0.3))
        assert gap <= 2 * opnorm(p.Pdot) * opnorm(p.P) / tau * (1 + 1e-12)

    def test_hand_assembled(self):
        fam, _, _ = similarity_family()
        p = riesz_projection(fam, 0.4, 1.0)
        hand = fam.A(0.4) - (p.Pdot @ p.P - p.P @ p.Pdot) / 10.0
        assert np.allclose(adiabatic_generator(fam, p, 10.0), hand, atol=1e-14)

    def test_rejects_nonpositive_tau(self):
        fam = GeneratorFamily.constant(np.diag([1.0, 2.0]))
        with pytest.raises(ValueError):
            adiabatic_generator(fam, riesz_projection(fam, 0.0, 1.0), 0.0)


class TestPropagation:
    def test_autonomous_case(self, rng):
        A = np.diag([0.5, 1.0, 2.0]) + 0.2 * rng.standard_normal((3, 3))
        fam = GeneratorFamily.constant(A)
        out = propagate(fam, 3.0, GRID)
        for s, U in zip(out.s, out.U):
            assert opnorm(U - sla.expm(-3.0 * s * A)) <= 1e-9

    def test_both_modes_agree_for_constant_family(self):
        A = np.diag([0.0, 1.0, 2.0 + 1j])
        fam = GeneratorFamily.constant(A)
        a = propagate(fam, 4.0, GRID)
        b = propagate(fam, 4.0, GRID, mode="adiabatic", lam0=0.0)
        assert max(opnorm(x - y) for x, y in zip(a.U, b.U)) <= 1e-9

    def test_accretive_family_contracts(self):
        def A(s):
            H = np.array([[1.0, 0.3j * s], [-0.3j * s, 2.0]])
            return H + 1j * np.array([[0.0, 1.0 + s], [1.0 + s, 0.0]])

        out = propagate(GeneratorFamily(2, A), 20.0, GRID)
        assert max(opnorm(U) for U in out.U) <= 1 + 1e-8

    def test_composition(self, synthetic):
        assert composition_defect(synthetic, 10.0, 0.4, 1.0) <= 1e-8

    def test_unknown_mode(self, synthetic):
        with pytest.raises(ValueError):
            propagate(synthetic, 1.0, GRID, mode="magic")


class TestKatoProduct:
    def test_constant_family_exact(self):
        A = np.array([[1.0, 2.0], [0.0, 3.0]])
        out = kato_product_propagator(GeneratorFamily.constant(A), 2.0, 8)
        for s, U in zip(out.s, out.U):
            assert opnorm(U - sla.expm(-2.0 * s * A)) <= 1e-12

    def test_converges_to_ode(self, synthetic):
        ref = propagate(synthetic, 100.0, np.array([0.0, 1.0]), rtol=1e-11).U[-1]
        errs = [opnorm(kato_product_propagator(synthetic, 100.0, n).U[-1] - ref)
                for n in (128, 256, 512, 1024)]
        assert all(b < a for a, b in zip(errs, errs[1:]))
        assert errs[-1] <= 1e-4

    def test_left_anchor_is_first_order(self, synthetic):
        ref = propagate(synthetic, 10.0, np.array([0.0, 1.0]), rtol=1e-11).U[-1]
        e1 = opnorm(kato_product_propagator(synthetic, 10.0, 64, "left").U[-1] - ref)
        e2 = opnorm(kato_product_propagator(synthetic, 10.0, 128, "left").U[-1] - ref)
        assert 1.6 < e1 / e2 < 2.4


class TestIntertwining:
    def test_constant_family(self):
        fam = GeneratorFamily.constant(np.diag([0.0, 1.0, 2.0]))
        tr = ProjectionTracker(fam, 0.0, GRID)
        d = intertwining_defect(tr, propagate(fam, 5.0, GRID, mode="adiabatic", tracker=tr))
        assert d.max() <= 1e-12

    def test_synthetic_tau_independent(self, synthetic):
        tr = ProjectionTracker(synthetic, 0.0, GRID)
        d = [intertwining_defect(tr, propagate(synthetic, t, GRID, mode="adiabatic", tracker=tr)).max()
             for t in (10.0, 31.6)]
        assert max(d) <= 1e-8


class TestSweep:
    def test_constant_family_is_degenerate(self):
        fam = GeneratorFamily.constant(np.diag([0.0, 1.0]))
        sweep, inter = adiabatic_error_sweep(fam, [1.0, 10.0, 100.0], 0.0, GRID)
        assert sweep.degenerate
        assert np.all(sweep.defects <= 1e-10)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-3.0, -0.2), st.floats(1e-3, 1e3))
    def test_fit_recovers_power_law(self, exponent, amp):
        taus = np.array([10.0, 31.6, 100.0, 316.0, 1000.0])
        res = SweepResult.fit(taus, amp * taus ** exponent)
        assert res.slope == pytest.approx(exponent, abs=1e-9)
        assert res.residual <= 1e-9

    def test_fit_requires_increasing(self):
        with pytest.raises(ValueError):
            SweepResult.fit([10.0, 5.0], [1.0, 2.0])
