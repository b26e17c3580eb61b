"""Gaussian toolbox: constructions, conditioning, spectra, entropy."""

import numpy as np
import pytest

from cvmdi_ps.gaussian import (
    GaussianState,
    beam_splitter,
    binary_entropy,
    condition_homodyne,
    gaussian_entropy,
    partial_trace,
    pure_overlap_same_cm,
    symplectic_eigenvalues,
    symplectic_eigenvalues_batch,
    tmsv_state,
    vacuum_state,
)


def random_physical_state(rng, n_modes=4):
    """Random physical state with a known symplectic spectrum.

    Direct sum of thermal/TMSV blocks scrambled by a beam-splitter
    network: passive optics leave the spectrum invariant.
    """
    nus = []
    blocks = []
    m = 0
    while m < n_modes:
        if n_modes - m >= 2 and rng.random() < 0.5:
            mu = 1.0 + rng.uniform(0.0, 3.0)
            blocks.append(tmsv_state(mu))
            nus.extend([1.0, 1.0])
            m += 2
        else:
            nu = 1.0 + rng.uniform(0.0, 3.0)
            blocks.append(GaussianState(np.zeros(2), nu * np.eye(2)))
            nus.append(nu)
            m += 1
    cm = np.zeros((2 * n_modes, 2 * n_modes))
    pos = 0
    for b in blocks:
        d = 2 * b.n_modes
        cm[pos : pos + d, pos : pos + d] = b.cm
        pos += d
    state = GaussianState(rng.normal(size=2 * n_modes), cm)
    for _ in range(6):
        i, j = rng.choice(n_modes, size=2, replace=False)
        state = beam_splitter(state, int(i), int(j), rng.uniform(0.05, 0.95))
    return state, np.sort(np.array(nus))


class TestTmsv:
    def test_mu_one_is_two_vacua(self):
        assert np.allclose(tmsv_state(1.0).cm, np.eye(4))

    def test_off_diagonal_magnitude(self):
        cm = tmsv_state(2.0).cm
        assert cm[0, 2] == pytest.approx(1.7320508075688772, abs=1e-12)
        assert cm[1, 3] == pytest.approx(-1.7320508075688772, abs=1e-12)

    @pytest.mark.parametrize("mu", [1.0, 1.5, 5.0, 40.0])
    def test_purity(self, mu):
        nus = symplectic_eigenvalues(tmsv_state(mu).cm)
        assert np.allclose(nus, 1.0, atol=1e-9)

    def test_rejects_mu_below_one(self):
        with pytest.raises(ValueError):
            tmsv_state(0.99)


class TestBeamSplitter:
    def test_identity_at_full_transmission(self):
        state, _ = random_physical_state(np.random.default_rng(0))
        out = beam_splitter(state, 0, 1, 1.0)
        assert np.allclose(out.cm, state.cm)
        assert np.allclose(out.mean, state.mean)

    def test_full_reflection_swaps_modes(self):
        state = GaussianState(np.array([1.0, 2.0, 3.0, 4.0]), np.diag([1.0, 1.0, 3.0, 3.0]))
        out = beam_splitter(state, 0, 1, 0.0)
        # mode i <- j, mode j <- -i
        assert np.allclose(out.mean, [3.0, 4.0, -1.0, -2.0])
        assert np.allclose(out.cm, np.diag([3.0, 3.0, 1.0, 1.0]))

    def test_vacuum_invariance(self):
        out = beam_splitter(vacuum_state(2), 0, 1, 0.37)
        assert np.allclose(out.cm, np.eye(4))

    def test_rejects_equal_modes_and_bad_index(self):
        state = vacuum_state(2)
        with pytest.raises(ValueError):
            beam_splitter(state, 1, 1, 0.5)
        with pytest.raises(ValueError):
            beam_splitter(state, 0, 2, 0.5)

    def test_preserves_symplectic_spectrum(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            state, nus = random_physical_state(rng)
            got = symplectic_eigenvalues(state.cm)
            assert np.allclose(np.sort(got), nus, atol=1e-10)


class TestConditionHomodyne:
    def test_vacuum_density_is_standard_normal(self):
        state = vacuum_state(2)
        _, density = condition_homodyne(state, 0, "q", 0.0)
        assert density == pytest.approx(0.3989422804014327, abs=1e-12)

    def test_tmsv_conditional_variance(self):
        # Schur complement by hand: mu - (mu^2-1)/mu = 1/mu
        for mu in (1.5, 2.0, 7.0):
            out, _ = condition_homodyne(tmsv_state(mu), 0, "q", 0.7)
            assert out.cm[0, 0] == pytest.approx(1.0 / mu, abs=1e-12)

    def test_product_state_untouched_factor(self):
        rng = np.random.default_rng(2)
        state, _ = random_physical_state(rng, n_modes=2)
        other = GaussianState(np.array([0.3, -0.1]), 2.5 * np.eye(2))
        joint = GaussianState(
            np.concatenate([state.mean, other.mean]),
            np.block(
                [
                    [state.cm, np.zeros((4, 2))],
                    [np.zeros((2, 4)), other.cm],
                ]
            ),
        )
        out, _ = condition_homodyne(joint, 0, "q", 1.1)
        assert np.allclose(out.cm[2:, 2:], other.cm)
        assert np.allclose(out.mean[2:], other.mean)

    def test_density_normalizes(self):
        rng = np.random.default_rng(3)
        state, _ = random_physical_state(rng, n_modes=3)
        var = state.cm[0, 0]
        nodes, weights = np.polynomial.legendre.leggauss(200)
        center = state.mean[0]
        half = 10.0 * np.sqrt(var)
        xs = center + half * nodes
        total = sum(
            w * condition_homodyne(state, 0, "q", x)[1] for x, w in zip(xs, weights)
        ) * half
        assert total == pytest.approx(1.0, abs=1e-8)


class TestPartialTrace:
    def test_keep_all_identity(self):
        state, _ = random_physical_state(np.random.default_rng(4))
        out = partial_trace(state, [0, 1, 2, 3])
        assert np.allclose(out.cm, state.cm)

    def test_tmsv_marginal_is_thermal(self):
        out = partial_trace(tmsv_state(3.0), [1])
        assert np.allclose(out.cm, 3.0 * np.eye(2))

    def test_reorder_permutes_blocks(self):
        state, _ = random_physical_state(np.random.default_rng(5), n_modes=2)
        out = partial_trace(state, [1, 0])
        assert np.allclose(out.cm[:2, :2], state.cm[2:, 2:])
        assert np.allclose(out.cm[:2, 2:], state.cm[2:, :2])
        assert np.allclose(out.mean, np.concatenate([state.mean[2:], state.mean[:2]]))

    def test_rejects_bad_lists(self):
        state = vacuum_state(2)
        with pytest.raises(ValueError):
            partial_trace(state, [])
        with pytest.raises(ValueError):
            partial_trace(state, [0, 0])


class TestSymplecticEigenvalues:
    def test_vacuum(self):
        assert np.allclose(symplectic_eigenvalues(np.eye(6)), 1.0)

    def test_thermal(self):
        assert symplectic_eigenvalues(3.0 * np.eye(2))[0] == pytest.approx(3.0, abs=1e-12)

    def test_direct_sum_is_multiset_union(self):
        rng = np.random.default_rng(6)
        s1, nu1 = random_physical_state(rng, n_modes=2)
        s2, nu2 = random_physical_state(rng, n_modes=3)
        cm = np.block(
            [
                [s1.cm, np.zeros((4, 6))],
                [np.zeros((6, 4)), s2.cm],
            ]
        )
        got = np.sort(symplectic_eigenvalues(cm))
        want = np.sort(np.concatenate([nu1, nu2]))
        assert np.allclose(got, want, atol=1e-9)

    def test_rejects_non_symmetric(self):
        bad = np.eye(2)
        bad[0, 1] = 0.5
        with pytest.raises(ValueError):
            symplectic_eigenvalues(bad)

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(7)
        cms = []
        for _ in range(5):
            s, _ = random_physical_state(rng, n_modes=3)
            cms.append(s.cm)
        batch = symplectic_eigenvalues_batch(np.array(cms))
        for cm, nus in zip(cms, batch):
            assert np.allclose(np.sort(symplectic_eigenvalues(cm)), np.sort(nus), atol=1e-10)


class TestGaussianEntropy:
    def test_vacuum_zero(self):
        assert gaussian_entropy(np.eye(4)) == 0.0

    def test_thermal_nu3_two_bits(self):
        assert gaussian_entropy(3.0 * np.eye(2)) == pytest.approx(2.0, abs=1e-12)

    def test_tmsv_pure(self):
        assert gaussian_entropy(tmsv_state(9.0).cm) == pytest.approx(0.0, abs=1e-9)

    def test_additive_over_tensor_products(self):
        rng = np.random.default_rng(8)
        s1, _ = random_physical_state(rng, n_modes=2)
        s2, _ = random_physical_state(rng, n_modes=2)
        cm = np.block(
            [
                [s1.cm, np.zeros((4, 4))],
                [np.zeros((4, 4)), s2.cm],
            ]
        )
        assert gaussian_entropy(cm) == pytest.approx(
            gaussian_entropy(s1.cm) + gaussian_entropy(s2.cm), abs=1e-9
        )


class TestOverlap:
    def test_identical_means(self):
        assert pure_overlap_same_cm(np.zeros(2), np.zeros(2), np.eye(2)) == 1.0

    def test_hand_value(self):
        got = pure_overlap_same_cm(np.array([2.0, 0.0]), np.zeros(2), np.eye(2))
        assert got == pytest.approx(0.36787944117144233, abs=1e-12)

    def test_symmetric_and_bounded(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            state, _ = random_physical_state(rng, n_modes=2)
            m1 = rng.normal(size=4)
            m2 = rng.normal(size=4)
            o12 = pure_overlap_same_cm(m1, m2, state.cm)
            o21 = pure_overlap_same_cm(m2, m1, state.cm)
            assert o12 == pytest.approx(o21, rel=1e-12)
            assert 0.0 < o12 <= 1.0
            assert pure_overlap_same_cm(m1, m1, state.cm) == 1.0


class TestBinaryEntropy:
    def test_values(self):
        assert binary_entropy(0.5) == pytest.approx(1.0, abs=1e-15)
        assert binary_entropy(0.0) == 0.0
        assert binary_entropy(1.0) == 0.0
        assert binary_entropy(0.25) == pytest.approx(0.8112781244591328, abs=1e-12)

    def test_clamps_tolerance_band(self):
        assert binary_entropy(-5e-13) == 0.0
        assert binary_entropy(1.0 + 5e-13) == 0.0

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            binary_entropy(1.1)
        with pytest.raises(ValueError):
            binary_entropy(-0.1)


class TestGaussianStateValidation:
    def test_rejects_mismatched_mean(self):
        with pytest.raises(ValueError):
            GaussianState(np.zeros(3), np.eye(4))

    def test_rejects_asymmetric_cm(self):
        cm = np.eye(4)
        cm[0, 1] = 1e-3
        with pytest.raises(ValueError):
            GaussianState(np.zeros(4), cm)

    def test_rejects_unphysical_cm(self):
        with pytest.raises(ValueError):
            GaussianState(np.zeros(2), 0.5 * np.eye(2))
