import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from signbias.exceptions import PreconditionError
from signbias.mps import (MpsState, covariance_test, dense_contraction, marginal_normality,
                          mps_amplitudes, mps_empirical_ck, mps_local_invariance, sample_amplitudes,
                          sample_mps)

HAD = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2)


class TestContraction:
    @settings(max_examples=20, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 2 ** 31 - 1))
    def test_matches_dense_reference(self, n, chi, seed):
        state, psi = sample_mps(n, chi, "normal", seed)
        np.testing.assert_allclose(psi, dense_contraction(state.tensors), atol=1e-12 * max(1, np.abs(psi).max()))

    def test_bond_dimension_one_is_product(self, rng):
        t = rng.standard_normal((3, 2, 1, 1))
        v = [t[i, :, 0, 0] for i in range(3)]
        np.testing.assert_allclose(mps_amplitudes(t), np.kron(np.kron(v[0], v[1]), v[2]))

    def test_batched_equals_single(self, rng):
        t = rng.standard_normal((5, 4, 2, 3, 3))
        batch = mps_amplitudes(t)
        for i in range(5):
            np.testing.assert_allclose(batch[i], mps_amplitudes(t[i]), atol=1e-12)

    def test_rotation_acts_on_physical_index(self, rng):
        state, psi = sample_mps(4, 2, "normal", 7)
        u4 = np.kron(np.kron(HAD, HAD), np.kron(HAD, HAD))
        np.testing.assert_allclose(state.rotated(HAD).amplitudes(), u4 @ psi, atol=1e-12)

    def test_shape_validation(self):
        with pytest.raises(PreconditionError):
            MpsState(np.zeros((3, 3, 2, 2)))
        with pytest.raises(PreconditionError):
            sample_mps(0, 2)


class TestSampling:
    def test_jobs_do_not_change_result(self):
        a = sample_amplitudes(3, 2, 5000, seed=1, chunk=1000, n_jobs=1)
        b = sample_amplitudes(3, 2, 5000, seed=1, chunk=1000, n_jobs=2)
        np.testing.assert_array_equal(a, b)

    def test_normal_variance_closed_form(self):
        # E psi(s)^2 = Tr E[(A (x) A)]^n = chi^n std^(2n) for periodic normal MPS
        psi = sample_amplitudes(3, 2, 60_000, "normal", seed=2)
        np.testing.assert_allclose(np.mean(psi ** 2, axis=0), 2 ** 3, rtol=0.1)

    def test_orthogonal_tensors_are_isometries(self):
        state, _ = sample_mps(3, 3, "orthogonal", 0)
        for a in state.tensors:
            m = a.reshape(6, 3)
            np.testing.assert_allclose(m.T @ m / 3, np.eye(3), atol=1e-12)


class TestStatistics:
    @pytest.mark.parametrize("dist", ["normal", "orthogonal"])
    def test_covariance_diagonal_and_invariant(self, dist):
        rep = mps_empirical_ck(3, 2, 30_000, dist, seed=5)
        assert rep.passed, (rep.max_offdiag_z, rep.max_diag_z)
        inv = mps_local_invariance(3, 2, HAD, 30_000, dist, seed=5)
        assert inv.exact_ok and inv.passed

    def test_shared_control_fails(self):
        assert not mps_empirical_ck(3, 2, 30_000, "shared", seed=5).passed

    def test_asymmetric_control_fails(self):
        assert not mps_local_invariance(3, 2, HAD, 30_000, "asymmetric", seed=5).statistical_ok

    def test_underpowered_flag(self):
        assert mps_empirical_ck(2, 2, 500, seed=0).underpowered
        assert not mps_empirical_ck(2, 2, 10_000, seed=0).underpowered

    def test_covariance_of_white_noise(self, rng):
        rep = covariance_test(rng.standard_normal((20_000, 4)))
        assert rep.passed

    def test_non_orthogonal_rotation_rejected(self):
        with pytest.raises(PreconditionError):
            mps_local_invariance(2, 2, np.array([[1.0, 1.0], [0.0, 1.0]]), 100)

    def test_marginal_approaches_gaussian_with_bond_dimension(self):
        small, _ = marginal_normality(4, 2, 5000, seed=0)
        large, _ = marginal_normality(4, 12, 5000, seed=0)
        assert large < small
