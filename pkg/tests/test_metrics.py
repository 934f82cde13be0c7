import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from signbias.exceptions import NotPositiveDefiniteError, PreconditionError
from signbias.flow import FlowConfig
from signbias.kernels import KernelSpec, kernel_tables
from signbias.metrics import (basis_scan, compute_metrics, covariance_root, eigensum_state,
                              init_statistics, jackknife_error, minmax, planted_family_instance,
                              rank_correlation, sample_states, sign_transform_optimality,
                              tfim_k_coefficients, tfim_nk_closed_form, uniform_rotation_unitary)
from signbias.pauli import apply_local_rotation, build_model, random_hamiltonian, xz_rotation


class TestComputeMetrics:
    def test_matches_direct_formulas(self, rng):
        h = build_model("tfim", 3, {"h": 0.7})
        k = kernel_tables(KernelSpec(depth=2, activation="tanh"), 3)
        t, c = k.dense("ntk"), k.dense("ck")
        hm = h.dense()
        e, v = np.linalg.eigh(hm)
        g = v[:, 0]
        h0 = hm - np.trace(hm) / 8 * np.eye(8)
        r = compute_metrics(h, k)
        assert r.m_theta == pytest.approx(g @ t @ g / np.linalg.eigvalsh(t).max())
        assert r.n_theta == pytest.approx(np.trace(h0 @ t) * np.linalg.norm(h0) / np.linalg.norm(t))
        assert r.m_k == pytest.approx(g @ c @ g / np.trace(c))
        assert r.n_k == pytest.approx(np.trace(hm @ c) / np.trace(c) - e[0])

    def test_dense_kernel_requires_ck(self):
        with pytest.raises(PreconditionError):
            compute_metrics(build_model("tfim", 2), np.eye(4))

    def test_identity_kernel_metrics(self):
        h = build_model("tfim", 3)
        r = compute_metrics(h, np.eye(8), np.eye(8))
        assert r.m_theta == pytest.approx(1.0)
        assert r.n_theta == pytest.approx(0.0, abs=1e-12)
        assert r.m_k == pytest.approx(1 / 8)

    def test_degenerate_ground_space_average(self):
        h = build_model("tfim", 3, {"h": 0.0})
        r = compute_metrics(h, np.eye(8), np.eye(8), allow_degenerate=True)
        assert r.ground_degeneracy == 2
        assert r.m_k == pytest.approx(2 / 8)


class TestTFIMClosedForm:
    @pytest.mark.parametrize("h", [0.3, 1.0, 2.5])
    def test_matches_numeric_trace(self, h):
        n = 4
        k = kernel_tables(KernelSpec(), n)
        c = k.dense("ck")
        k1, k2 = tfim_k_coefficients(k)
        base = build_model("tfim", n, {"h": h})
        thetas = np.linspace(0, math.pi, 9)
        num = [np.trace(apply_local_rotation(base, xz_rotation(t)).dense() @ c) for t in thetas]
        cf = tfim_nk_closed_form(k1, k2, n - 1, n, h, thetas)
        np.testing.assert_allclose(cf.values, num, atol=1e-10)
        grid = np.linspace(0, math.pi, 2001)
        assert cf.minimum <= tfim_nk_closed_form(k1, k2, n - 1, n, h, grid).values.min() + 1e-12


class TestSampling:
    def test_sample_covariance(self):
        k = kernel_tables(KernelSpec(activation="erf"), 3)
        x = sample_states(k, 40_000, seed=1)
        emp = x @ x.T / x.shape[1]
        np.testing.assert_allclose(emp, k.dense("ck"), atol=0.05 * np.abs(k.dense("ck")).max())

    def test_reproducible_and_chunk_seeded(self):
        k = kernel_tables(KernelSpec(), 3)
        np.testing.assert_array_equal(sample_states(k, 300, seed=2), sample_states(k, 300, seed=2))

    def test_rejects_indefinite(self):
        with pytest.raises(NotPositiveDefiniteError):
            covariance_root(np.diag([1.0, -1.0]))

    def test_init_statistics_consistent(self):
        h = build_model("tfim", 4, {"h": 1.0})
        k = kernel_tables(KernelSpec(), 4)
        a = init_statistics(k, h, 2000, seed=0)
        b = init_statistics(k, h, 2000, seed=0, n_jobs=2)
        assert a.mean_energy == b.mean_energy
        assert a.energy_consistent and a.overlap_consistent

    def test_jackknife_of_mean(self, rng):
        x = rng.standard_normal(500)
        assert jackknife_error(x) == pytest.approx(x.std(ddof=1) / math.sqrt(500), rel=1e-10)


class TestBasisScan:
    def test_transported_start_and_metrics(self):
        h = build_model("tfim", 3, {"h": 2.0})
        k = kernel_tables(KernelSpec(), 3)
        th = np.array([0.0, 0.4])
        s = basis_scan(h, k, th, cfg=FlowConfig(t_max=200.0, n_samples=2001), keep_traces=True)
        ref = compute_metrics(apply_local_rotation(h, xz_rotation(0.4)), k)
        assert s.m_theta[1] == pytest.approx(ref.m_theta)
        assert np.all(np.isfinite(s.t_overlap))
        assert len(s.traces) == 2

    def test_rotation_unitary_transports_eigensum(self):
        h = build_model("tfim", 3, {"h": 1.0})
        u = uniform_rotation_unitary(3, 0.7)
        ht = apply_local_rotation(h, xz_rotation(0.7))
        np.testing.assert_allclose(u @ h.dense() @ u.conj().T, ht.dense(), atol=1e-12)
        np.testing.assert_allclose(np.sort(np.abs(u @ eigensum_state(h))),
                                   np.sort(np.abs(u @ h.spectrum().vectors.sum(axis=1))))

    def test_rejects_three_local(self, rng):
        h = random_hamiltonian(3, rng, locality=3)
        with pytest.raises(PreconditionError):
            basis_scan(h, kernel_tables(KernelSpec(), 3), [0.0], run_flow=False)


class TestSignTransform:
    @pytest.mark.parametrize("seed", range(4))
    def test_planted_frames_optimal(self, seed):
        rng = np.random.default_rng(seed)
        h, hidden = planted_family_instance(3, rng)
        rep = sign_transform_optimality(h, kernel_tables(KernelSpec(), 3))
        assert rep.ok, rep.checks
        assert any(f.aligned and f.stoquastic for f in rep.frames)
        assert any(f.sites == hidden and f.aligned for f in rep.frames)


class TestRankCorrelation:
    def test_excludes_nonfinite(self):
        c = rank_correlation([1, 2, 3, 4, 5, 6], [1, 2, math.inf, 4, 5, 7])
        assert c.rho == pytest.approx(1.0) and c.n_excluded == 1

    def test_too_few_points(self):
        with pytest.raises(PreconditionError):
            rank_correlation([1, 2, 3], [3, 2, 1])

    def test_constant_series(self):
        with pytest.raises(PreconditionError):
            rank_correlation([1, 2, 3, 4, 5], [1, 1, 1, 1, 1])

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=20, unique=True))
    def test_minmax_range(self, xs):
        y = minmax(np.array(xs))
        assert y.min() == 0.0 and y.max() == 1.0
