"""Reduced-model machinery: projections, gauge locking, and the slow flow."""

import cmath
import dataclasses

import numpy as np
import pytest

from cwlaser import make_grid, modes, oracle, spectral
from cwlaser.errors import DomainError, ValidityBoxExit
from cwlaser.modes import (ExactEvaluator, ModeBasis, ReducedState,
                           TabulatedEvaluator, a1_matrix, basis_at,
                           basis_drift, build_basis, carrier_form,
                           continue_root, integrate_reduced, mode_matrix,
                           reduced_rhs)
from cwlaser.params import Affine, beta, single_section


@pytest.fixture(scope="module")
def fig1_basis(fig1, fig1_critical):
    n_crit = fig1_critical["n"]
    box = np.stack([n_crit - 0.02, n_crit + 0.02], axis=1)
    return build_basis(fig1, n_crit, 1, box)


@pytest.fixture(scope="module")
def closed_cfg():
    """kappa = 0, no dispersion: everything about the modes is closed form."""
    return single_section(kappa=0.0, d=0.3 + 0.0j, rho=Affine(0.0),
                          gain_slope=1.6, alpha_h=1.5, gamma=Affine(40.0),
                          r0=0.4, rL=0.5, epsilon=1e-2,
                          current=8e-3, lifetime=200.0)


@pytest.fixture(scope="module")
def closed_basis(closed_cfg):
    lam0 = (beta(closed_cfg.sections[0], 1.2)
            + 0.5 * cmath.log(closed_cfg.r0 * closed_cfg.rL))
    win = (lam0.real - 0.5, lam0.real + 0.5, -25.0, 25.0)
    spec = spectral.find_eigenvalues(closed_cfg, np.array([1.2]), window=win)
    return build_basis(closed_cfg, np.array([1.2]), 1,
                       np.array([[1.15, 1.25]]), spectrum=spec)


class TestBasisConstruction:
    def test_biorthogonality(self, fig1_basis):
        check = np.einsum("icn,jcn->ij", fig1_basis.rows,
                          fig1_basis.profiles)
        assert np.max(np.abs(check - np.eye(fig1_basis.q))) < 1e-8

    def test_projection_recovers_coefficients(self, fig1_basis):
        E = np.array([0.7 - 0.2j])
        got = fig1_basis.project(fig1_basis.synthesize(E))
        np.testing.assert_allclose(got, E, rtol=1e-10)

    def test_projection_annihilates_nothing_spurious(self, fig1_basis):
        # projecting a random stack and re-projecting is idempotent
        rng = np.random.default_rng(0)
        stack = (rng.normal(size=fig1_basis.profiles[0].shape)
                 + 1j * rng.normal(size=fig1_basis.profiles[0].shape))
        c1 = fig1_basis.project(stack)
        c2 = fig1_basis.project(fig1_basis.synthesize(c1))
        np.testing.assert_allclose(c2, c1, rtol=1e-9)

    def test_box_must_contain_reference(self, fig1, fig1_critical):
        n_crit = fig1_critical["n"]
        box = np.stack([n_crit + 0.01, n_crit + 0.02], axis=1)
        with pytest.raises(DomainError, match="inside"):
            build_basis(fig1, n_crit, 1, box)

    def test_dominant_eigenvalue_critical(self, fig1_basis):
        assert abs(fig1_basis.lams[0].real) < 1e-8


class TestGaugeLock:
    def test_profiles_continuous_in_n(self, fig1_basis, fig1):
        # gauge-locked basis must vary linearly in n for small steps
        diffs = []
        for h in (1e-3, 1e-4, 1e-5):
            n = fig1_basis.n_ref + np.array([h, 0.0])
            profs, _ = basis_at(fig1_basis, fig1, n)
            diffs.append(np.max(np.abs(profs - fig1_basis.profiles)))
        assert diffs[0] / diffs[1] == pytest.approx(10.0, rel=0.15)
        assert diffs[1] / diffs[2] == pytest.approx(10.0, rel=0.15)

    def test_locked_at_reference(self, fig1_basis, fig1):
        profs, lams = basis_at(fig1_basis, fig1, fig1_basis.n_ref)
        np.testing.assert_allclose(profs, fig1_basis.profiles, atol=1e-9)
        np.testing.assert_allclose(lams, fig1_basis.lams, atol=1e-10)


def _mode_offset(cfg, basis, nu_ref):
    """Longitudinal index of the tracked mode relative to j = 0."""
    lam0 = beta(cfg.sections[0], nu_ref) + 0.5 * cmath.log(cfg.r0 * cfg.rL)
    return round((basis.lams[0].imag - lam0.imag) / np.pi)


class TestClosedFormTracking:
    def test_eigenvalue_track_matches_closed_form(self, closed_cfg,
                                                  closed_basis):
        # lambda_j(n) = beta(n) + log(r0 rL)/2 + j pi i when kappa = rho = 0
        sec = closed_cfg.sections[0]
        j = _mode_offset(closed_cfg, closed_basis, 1.2)
        for nu in (1.16, 1.2, 1.24):
            lam = continue_root(closed_cfg, closed_basis.n_ref,
                                np.array([nu]), closed_basis.lams[0],
                                closed_basis.trust_radius)
            expect = (beta(sec, nu)
                      + 0.5 * cmath.log(closed_cfg.r0 * closed_cfg.rL)
                      + 1j * np.pi * j)
            assert lam == pytest.approx(expect, abs=1e-9)

    def test_mode_matrix_is_tracked_diagonal(self, closed_cfg, closed_basis):
        sec = closed_cfg.sections[0]
        j = _mode_offset(closed_cfg, closed_basis, 1.2)
        H = mode_matrix(closed_basis, closed_cfg, np.array([1.23]))
        expect = (beta(sec, 1.23)
                  + 0.5 * cmath.log(closed_cfg.r0 * closed_cfg.rL)
                  + 1j * np.pi * j)
        assert H.shape == (1, 1)
        assert H[0, 0] == pytest.approx(expect, abs=1e-9)

    def test_slope_matches_implicit_function_derivative(self, closed_cfg,
                                                        closed_basis):
        # finite differences of the tracked root against d beta / dn
        sec = closed_cfg.sections[0]
        h = 1e-5
        lp = continue_root(closed_cfg, closed_basis.n_ref,
                           np.array([1.2 + h]), closed_basis.lams[0],
                           closed_basis.trust_radius)
        lm = continue_root(closed_cfg, closed_basis.n_ref,
                           np.array([1.2 - h]), closed_basis.lams[0],
                           closed_basis.trust_radius)
        got = (lp - lm) / (2.0 * h)
        expect = (beta(sec, 1.2 + h) - beta(sec, 1.2 - h)) / (2.0 * h)
        assert got == pytest.approx(expect, abs=1e-6)

    def test_slope_matches_first_order_perturbation_theory(self, fig1_basis,
                                                           fig1):
        # differentiating H B = lambda B and projecting with the adjoint
        # row kills the dB term: d lambda / dn_k = <row, (dH/dn_k) B>.
        # dH/dn_k is a pure multiplication operator, so the z-derivative
        # stencils cancel exactly in the finite difference of apply_H_fd.
        n = fig1_basis.n_ref
        B = fig1_basis.profiles[0]
        h = 1e-6
        for k in range(fig1.m):
            npl, nmi = n.copy(), n.copy()
            npl[k] += h
            nmi[k] -= h
            Hp = oracle.apply_H_fd(fig1, npl, fig1_basis.grid, *B)
            Hm = oracle.apply_H_fd(fig1, nmi, fig1_basis.grid, *B)
            dH_B = np.stack([(a - b) / (2.0 * h) for a, b in zip(Hp, Hm)])
            got = np.einsum("cn,cn->", fig1_basis.rows[0], dH_B)
            lp = continue_root(fig1, n, npl, fig1_basis.lams[0],
                               fig1_basis.trust_radius)
            lm = continue_root(fig1, n, nmi, fig1_basis.lams[0],
                               fig1_basis.trust_radius)
            expect = (lp - lm) / (2.0 * h)
            # quadrature of the adjoint pairing is 2nd order in dz
            assert got == pytest.approx(expect, rel=5e-3)

    def test_a1_composes_slow_rate_and_drift(self, fig1_basis, fig1):
        E = np.array([0.4 - 0.6j])
        n = fig1_basis.n_ref + 0.002
        profiles, _ = basis_at(fig1_basis, fig1, n)
        F = modes.F_slow(fig1, n, fig1_basis.synthesize(E, profiles),
                         fig1_basis.grid)
        drift = basis_drift(fig1_basis, fig1, n)
        expect = -np.einsum("k,kij->ij", F, drift)
        got = a1_matrix(fig1_basis, fig1, E, n)
        np.testing.assert_allclose(got, expect, rtol=1e-10)


class TestReducedFlow:
    def test_zero_field_leaves_carrier_flow_only(self, closed_cfg,
                                                 closed_basis):
        st = ReducedState(E_c=np.zeros(1, dtype=complex),
                          n=np.array([1.2]))
        dE, dn = reduced_rhs(closed_basis, closed_cfg, st)
        assert np.all(dE == 0.0)
        sec = closed_cfg.sections[0]
        expect = sec.current - 1.2 / sec.lifetime
        assert dn[0] == pytest.approx(expect, rel=1e-12)

    def test_epsilon_zero_freezes_carriers(self, closed_cfg, closed_basis):
        cfg0 = dataclasses.replace(closed_cfg, epsilon=0.0)
        basis0 = ModeBasis(config=cfg0, grid=closed_basis.grid,
                           n_ref=closed_basis.n_ref, lams=closed_basis.lams,
                           profiles=closed_basis.profiles,
                           rows=closed_basis.rows, n_box=closed_basis.n_box,
                           trust_radius=closed_basis.trust_radius)
        st = ReducedState(E_c=np.array([0.3 + 0.1j]), n=np.array([1.2]))
        _, dn = reduced_rhs(basis0, cfg0, st)
        assert np.all(dn == 0.0)

    def test_rotational_equivariance(self, fig1_basis, fig1):
        rng = np.random.default_rng(19)
        base = ReducedState(E_c=np.array([0.4 - 0.3j]),
                            n=fig1_basis.n_ref + 0.003)
        dE0, dn0 = reduced_rhs(fig1_basis, fig1, base)
        for phi in rng.uniform(0.0, 2.0 * np.pi, size=12):
            rot = cmath.exp(1j * phi)
            st = ReducedState(E_c=base.E_c * rot, n=base.n)
            dE, dn = reduced_rhs(fig1_basis, fig1, st)
            np.testing.assert_allclose(dE, dE0 * rot, rtol=1e-9, atol=1e-12)
            np.testing.assert_allclose(dn, dn0, rtol=1e-9, atol=1e-14)

    def test_carrier_form_is_hermitian(self, fig1_basis, fig1):
        Q = carrier_form(fig1_basis, fig1, fig1_basis.n_ref)
        np.testing.assert_allclose(Q, np.conj(np.swapaxes(Q, 1, 2)),
                                   atol=1e-12)

    def test_quadratic_form_matches_direct_functional(self, fig1_basis,
                                                      fig1):
        E = np.array([0.8 + 0.5j])
        n = fig1_basis.n_ref
        Q = carrier_form(fig1_basis, fig1, n)
        via_form = np.einsum("i,kij,j->k", np.conj(E), Q, E).real
        field = fig1_basis.synthesize(E)
        F = modes.F_slow(fig1, n, field, fig1_basis.grid)
        sec = fig1.sections
        pump = np.array([(s.current - n[k] / s.lifetime) / fig1.epsilon
                         for k, s in enumerate(sec)])
        np.testing.assert_allclose(pump - via_form, F, rtol=1e-9)


class TestIntegration:
    def test_box_exit_raises_with_time(self, fig1_basis, fig1):
        # with a negligible field the carrier relaxes toward tau * I,
        # far above the box ceiling
        st = ReducedState(E_c=np.array([1e-8 + 0j]), n=fig1_basis.n_ref)
        with pytest.raises(ValidityBoxExit) as exc:
            integrate_reduced(fig1_basis, fig1, st, 100.0, rtol=1e-7)
        assert 0.0 < exc.value.t < 100.0

    def test_evaluators_agree_on_nodes_and_inside(self, fig1_basis, fig1):
        exact = ExactEvaluator(fig1_basis, fig1)
        tab = TabulatedEvaluator(fig1_basis, fig1, resolution=9)
        # tabulation node: interpolation is exact there
        node = np.array([tab._axes[0][1], tab._axes[1][2]])
        for a, b in zip(exact.coefficients(node), tab.coefficients(node)):
            np.testing.assert_allclose(a, b, atol=1e-10)
        # interior point: linear interpolation error only
        mid = fig1_basis.n_ref + np.array([0.003, -0.004])
        for a, b in zip(exact.coefficients(mid), tab.coefficients(mid)):
            np.testing.assert_allclose(a, b, atol=1e-3)

    def test_reduced_orbit_reaches_rotating_wave(self, fig1_basis, fig1):
        # near threshold the reduced flow settles onto |E| = const with
        # n pinned at the critical density
        exact = TabulatedEvaluator(fig1_basis, fig1, resolution=9)
        Q = ExactEvaluator(fig1_basis, fig1).coefficients(
            fig1_basis.n_ref)[1]
        sec = fig1.sections[0]
        pump = (sec.current - fig1_basis.n_ref[0] / sec.lifetime) \
            / fig1.epsilon
        E_eq = np.sqrt(pump / Q[0, 0, 0].real)
        st = ReducedState(E_c=np.array([0.9 * E_eq + 0j]),
                          n=fig1_basis.n_ref.copy())
        out = integrate_reduced(fig1_basis, fig1, st, 600.0, rtol=1e-7,
                                evaluator=exact, max_samples=1200)
        tail = np.abs(out.E_c[-100:, 0])
        assert np.std(tail) / np.mean(tail) < 1e-3
        assert np.mean(tail) == pytest.approx(E_eq, rel=0.02)
        np.testing.assert_allclose(out.n[-1], fig1_basis.n_ref, atol=1e-3)
