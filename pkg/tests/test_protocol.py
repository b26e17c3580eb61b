"""Protocol parameters, derived noise, and state-propagation oracle checks."""

import numpy as np
import pytest

from cvmdi_ps.gaussian import symplectic_eigenvalues
from cvmdi_ps.protocol import (
    ProtocolParams,
    apply_relay,
    bob_heterodyne_moments,
    build_pre_relay_state,
    derived_for,
    derived_noise,
    eve_state_complete,
    eve_state_restricted,
    omega_from_epsilon,
    relay_and_condition,
    relay_outcome_variances,
    tau_from_db,
    tau_from_km,
)


def random_params(rng, scenario="complete_collective", detector_model="untrusted"):
    return ProtocolParams(
        tau_a=rng.uniform(0.2, 1.0),
        tau_b=rng.uniform(0.2, 1.0),
        eps_a=rng.uniform(0.0, 0.1),
        eps_b=rng.uniform(0.0, 0.1),
        eta=rng.uniform(0.6, 1.0),
        s_det=1.0 + rng.uniform(0.0, 1.0),
        detector_model=detector_model,
        mu=1.0 + rng.uniform(0.3, 8.0),
        scenario=scenario,
    )


class TestTau:
    def test_zero_db(self):
        assert tau_from_db(0.0) == 1.0

    def test_three_db(self):
        assert tau_from_db(3.0) == pytest.approx(0.5011872336272722, abs=1e-12)

    def test_quarter_db_limit_of_original_protocol(self):
        assert tau_from_db(0.75) == pytest.approx(0.8413951416451951, abs=1e-12)

    def test_km(self):
        assert tau_from_km(0.0) == 1.0
        assert tau_from_km(5.0) == pytest.approx(0.7943282347242815, abs=1e-12)
        assert tau_from_km(50.0) == pytest.approx(0.1, abs=1e-12)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            tau_from_db(-0.1)
        with pytest.raises(ValueError):
            tau_from_km(-1.0)


class TestOmega:
    def test_pure_loss(self):
        p = ProtocolParams(eps_a=0.0, eps_b=0.0, tau_a=0.5, tau_b=0.9)
        assert omega_from_epsilon(p) == (1.0, 1.0)

    def test_hand_value(self):
        p = ProtocolParams(eps_a=0.05, eps_b=0.05, eta=1.0, tau_a=0.5, tau_b=0.5)
        w = omega_from_epsilon(p)
        assert w.omega_a == pytest.approx(1.0166666666666666, abs=1e-12)

    def test_vanishing_tau_limit(self):
        p = ProtocolParams(eps_a=0.05, eps_b=0.05, tau_a=1e-9, tau_b=1e-9)
        w = omega_from_epsilon(p)
        assert w.omega_a == pytest.approx(1.0, abs=1e-8)

    def test_monotone_in_eps_and_tau(self):
        base = dict(eta=0.9)
        last = 0.0
        for eps in (0.0, 0.02, 0.05, 0.1):
            w = omega_from_epsilon(ProtocolParams(eps_a=eps, tau_a=0.5, **base)).omega_a
            assert w >= last
            last = w
        last = 0.0
        for tau in (0.1, 0.4, 0.7, 1.0):
            w = omega_from_epsilon(ProtocolParams(eps_a=0.05, tau_a=tau, **base)).omega_a
            assert w >= last
            last = w


class TestDerivedNoise:
    def test_upsilon_trivial_limits(self):
        dn = derived_for(ProtocolParams())
        assert dn.upsilon == pytest.approx(1.0, abs=1e-15)
        dn = derived_for(ProtocolParams(eta=0.8))
        assert dn.upsilon == pytest.approx(1.0, abs=1e-15)  # pure loss, S = 1

    def test_upsilon_hand_value(self):
        p = ProtocolParams(tau_a=0.6, tau_b=0.6)
        w = type(omega_from_epsilon(p))(1.1, 1.1)
        dn = derived_noise(p, w)
        assert dn.upsilon == pytest.approx(1.04, abs=1e-12)

    def test_tilde_relation(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            p = random_params(rng, scenario="restricted_collective")
            dn = derived_for(p)
            gap = 0.5 * dn.eta * dn.tau_b * (p.mu - 1.0)
            assert dn.upsilon_tilde - dn.upsilon_tilde_prime == pytest.approx(gap, rel=1e-12)
            assert dn.upsilon_tilde_prime == pytest.approx(dn.upsilon, rel=1e-14)
            assert dn.gamma_prime_factor == pytest.approx(1.0, rel=1e-12)
            assert dn.xi == pytest.approx(np.sqrt((p.mu + 1) / (p.mu - 1)), rel=1e-12)
            for value in (dn.upsilon, dn.upsilon_tilde, dn.delta_coeff, dn.v_b, dn.xi):
                assert value > 0.0

    def test_upsilon_matches_toolbox_variance(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            p = random_params(rng)
            dn = derived_for(p)
            var_q, var_p = relay_outcome_variances(p)
            assert var_q == pytest.approx(dn.upsilon, abs=1e-9)
            assert var_p == pytest.approx(dn.upsilon, abs=1e-9)

    def test_upsilon_tilde_matches_toolbox_variance(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            p = random_params(rng, scenario="restricted_collective")
            var_q, _ = relay_outcome_variances(p)
            assert var_q == pytest.approx(derived_for(p).upsilon_tilde, abs=1e-9)

    def test_v_b_and_mean_match_toolbox_heterodyne(self):
        # resolves the conditional-moment denominator to upsilon_tilde
        rng = np.random.default_rng(3)
        for _ in range(10):
            p = random_params(rng, scenario="restricted_collective")
            dn = derived_for(p)
            kappa = 1 if rng.random() < 0.5 else -1
            amp_a, gamma = rng.uniform(0, 3), rng.normal(0, 2)
            mean_tb, var_tb = bob_heterodyne_moments(p, kappa, amp_a, gamma)
            mean_cf = dn.bb_mean_coeff * (gamma + kappa * amp_a * dn.coupling_a) / dn.upsilon_tilde
            assert var_tb == pytest.approx(dn.v_b, abs=1e-9)
            assert mean_tb == pytest.approx(mean_cf, abs=1e-9)

    def test_absorbed_equals_untrusted_at_unit_s_pure_loss(self):
        # the tau -> eta*tau substitution is exact for pure loss; with
        # thermal noise the two models differ by (1 - eta)(omega - 1)
        # because the detector splitter also attenuates the cloner noise
        rng = np.random.default_rng(4)
        for _ in range(10):
            tau, eta = rng.uniform(0.3, 1.0), rng.uniform(0.6, 1.0)
            pu = ProtocolParams(tau_a=tau, tau_b=tau, eta=eta,
                                s_det=1.0, detector_model="untrusted")
            pa = ProtocolParams(tau_a=tau, tau_b=tau, eta=eta,
                                s_det=1.0, detector_model="absorbed")
            assert derived_for(pa).upsilon == pytest.approx(derived_for(pu).upsilon, abs=1e-12)
            assert derived_for(pa).upsilon_tilde == pytest.approx(
                derived_for(pu).upsilon_tilde, abs=1e-12)
            eps = rng.uniform(0.01, 0.08)
            pu_n = ProtocolParams(tau_a=tau, tau_b=tau, eps_a=eps, eps_b=eps, eta=eta,
                                  s_det=1.0, detector_model="untrusted")
            pa_n = ProtocolParams(tau_a=tau, tau_b=tau, eps_a=eps, eps_b=eps, eta=eta,
                                  s_det=1.0, detector_model="absorbed")
            omega = omega_from_epsilon(pu_n).omega_a
            gap = (1.0 - eta) * (omega - 1.0)
            assert derived_for(pa_n).upsilon - derived_for(pu_n).upsilon == pytest.approx(
                gap, abs=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            ProtocolParams(tau_a=0.0)
        with pytest.raises(ValueError):
            ProtocolParams(eta=1.2)
        with pytest.raises(ValueError):
            ProtocolParams(s_det=0.9)
        with pytest.raises(ValueError):
            ProtocolParams(detector_model="absorbed", s_det=1.5)
        with pytest.raises(ValueError):
            ProtocolParams(mu=1.0)
        with pytest.raises(ValueError):
            ProtocolParams(scenario="bogus")
        with pytest.raises(ValueError):
            ProtocolParams(beta_rec=0.0)


class TestStateConstruction:
    def test_transparent_links_leave_eve_uncorrelated(self):
        p = ProtocolParams(tau_a=1.0, tau_b=1.0, s_det=1.4, eta=0.9)
        state = build_pre_relay_state(p, 1, 1.3, -1, 0.6)
        assert np.allclose(state.cm[:4, 4:], 0.0)

    def test_zero_amplitudes_zero_mean(self):
        p = ProtocolParams(tau_a=0.7, tau_b=0.6)
        state = build_pre_relay_state(p, 1, 0.0, 1, 0.0)
        assert np.allclose(state.mean, 0.0)

    def test_global_purity_complete(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            p = random_params(rng)
            state = build_pre_relay_state(p, -1, 1.1, 1, 0.4)
            assert np.allclose(symplectic_eigenvalues(state.cm), 1.0, atol=1e-9)

    def test_signs_validated(self):
        p = ProtocolParams()
        with pytest.raises(ValueError):
            build_pre_relay_state(p, 0, 1.0)
        with pytest.raises(ValueError):
            build_pre_relay_state(p, 1, -0.2)

    def test_inert_detector_modes_are_dropped(self):
        # eta = 1, S = 1: detector TMSVs decouple and are omitted
        p = ProtocolParams(eta=1.0, s_det=1.0, detector_model="untrusted")
        assert build_pre_relay_state(p, 1, 1.0, 1, 1.0).n_modes == 6
        p = ProtocolParams(eta=0.9, s_det=1.0, detector_model="untrusted")
        assert build_pre_relay_state(p, 1, 1.0, 1, 1.0).n_modes == 10


class TestRelay:
    def test_gamma_density_matches_closed_form(self):
        rng = np.random.default_rng(6)
        for _ in range(8):
            p = random_params(rng)
            dn = derived_for(p)
            kappa, bsign = rng.choice([1, -1]), rng.choice([1, -1])
            amp_a, amp_b = rng.uniform(0, 3), rng.uniform(0, 3)
            gamma = rng.normal(0, 2)
            state = build_pre_relay_state(p, kappa, amp_a, bsign, amp_b)
            out = relay_and_condition(state, p, gamma)
            mean = -(kappa * amp_a * dn.coupling_a - bsign * amp_b * dn.coupling_b)
            want = np.exp(-0.5 * (gamma - mean) ** 2 / dn.upsilon) / np.sqrt(
                2 * np.pi * dn.upsilon
            )
            assert out.density_q == pytest.approx(want, rel=1e-9)

    def test_quadrature_outcomes_factorize(self):
        # joint density = product of marginals: outcomes are independent
        rng = np.random.default_rng(7)
        for _ in range(8):
            p = random_params(rng)
            state = build_pre_relay_state(p, 1, 1.2, -1, 0.8)
            gq, gp = rng.normal(0, 1.5, size=2)
            out = relay_and_condition(state, p, gq, gp)
            joint = out.density_q * out.density_p
            # marginal of gamma_p: condition on it first by measuring in
            # reverse order via a fresh relay application
            relayed = apply_relay(state, p)
            from cvmdi_ps.gaussian import condition_homodyne

            layout_alice = 0
            _, dens_p_marginal = condition_homodyne(relayed, layout_alice, "p", gp)
            product = out.density_q * dens_p_marginal
            assert joint == pytest.approx(product, rel=1e-10)

    def test_conditional_cm_outcome_independent(self):
        p = ProtocolParams(tau_a=0.8, tau_b=0.5, eps_a=0.02, eps_b=0.05, eta=0.85, s_det=1.2)
        state = build_pre_relay_state(p, 1, 1.0, 1, 2.0)
        cm_ref = relay_and_condition(state, p, 0.0, 0.0).state.cm
        for gq, gp in ((1.3, -0.4), (-2.0, 0.9)):
            out = relay_and_condition(state, p, gq, gp)
            assert np.allclose(out.state.cm, cm_ref, atol=1e-12)
        other = build_pre_relay_state(p, -1, 2.2, -1, 0.3)
        assert np.allclose(relay_and_condition(other, p, 0.0).state.cm, cm_ref, atol=1e-12)


class TestEveStates:
    def test_complete_state_is_pure_untrusted(self):
        rng = np.random.default_rng(8)
        for _ in range(5):
            p = random_params(rng)
            s = eve_state_complete(p, 1, -1, 1.2, 0.7, 0.3)
            assert np.allclose(symplectic_eigenvalues(s.cm), 1.0, atol=1e-9)

    def test_transparent_ideal_leaks_nothing(self):
        p = ProtocolParams(tau_a=1.0, tau_b=1.0, eta=1.0, s_det=1.0)
        sp = eve_state_complete(p, 1, 1, 2.0, 1.0, 0.5)
        sm = eve_state_complete(p, -1, 1, 2.0, 1.0, 0.5)
        assert np.allclose(sp.mean, sm.mean, atol=1e-12)

    def test_gamma_p_does_not_move_q_sector(self):
        p = ProtocolParams(tau_a=0.7, tau_b=0.5, eta=0.9, s_det=1.3)
        state = build_pre_relay_state(p, 1, 1.5, 1, 0.8)
        out0 = relay_and_condition(state, p, 0.4, 0.0).state
        out1 = relay_and_condition(state, p, 0.4, 1.7).state
        assert np.allclose(out0.mean[0::2], out1.mean[0::2], atol=1e-12)
        assert np.allclose(out0.cm, out1.cm, atol=1e-12)

    def test_restricted_cm_independent_of_point(self):
        p = ProtocolParams(tau_a=0.7, tau_b=0.5, mu=4.0, scenario="restricted_collective")
        ref = eve_state_restricted(p, 1, 1.0, 0.0)
        for kappa, amp, gamma in ((-1, 2.0, 1.0), (1, 0.3, -2.0)):
            s = eve_state_restricted(p, kappa, amp, gamma)
            assert np.allclose(s.cm, ref.cm, atol=1e-12)

    def test_restricted_mu_to_one_reduces_to_complete(self):
        kw = dict(tau_a=0.7, tau_b=0.45, eta=0.9, s_det=1.2)
        p_r = ProtocolParams(mu=1.0 + 1e-9, scenario="restricted_collective", **kw)
        p_c = ProtocolParams(scenario="complete_collective", **kw)
        sr = eve_state_restricted(p_r, 1, 1.4, 0.3)
        sc = eve_state_complete(p_c, 1, 1, 1.4, 0.0, 0.3)
        assert np.allclose(sr.cm, sc.cm, atol=1e-7)
        assert np.allclose(sr.mean, sc.mean, atol=1e-7)

    def test_restricted_state_is_mixed(self):
        p = ProtocolParams(tau_b=0.5, mu=10.0, scenario="restricted_collective")
        s = eve_state_restricted(p, 1, 1.0, 0.0)
        assert symplectic_eigenvalues(s.cm).max() > 1.0 + 1e-6
