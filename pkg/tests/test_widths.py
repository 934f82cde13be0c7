import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from signbias.exceptions import PreconditionError
from signbias.kernels import KernelSpec, kernel_tables
from signbias.pauli import build_model
from signbias.widths import (empirical_ck_sample, empirical_kernels, empirical_ntk_sample, forward,
                             hessian_norm, init_network, jacobian, lazy_ratio, lazy_scaling,
                             scaled_network, spin_configurations)


def _fd_jacobian(p, x, h=1e-6):
    th = p.flat()
    cols = []
    for i in range(th.size):
        e = np.zeros_like(th)
        e[i] = h
        cols.append((forward(p.with_flat(th + e), x) - forward(p.with_flat(th - e), x)) / (2 * h))
    return np.stack(cols, axis=1)


class TestNetwork:
    def test_configuration_ordering(self):
        np.testing.assert_array_equal(spin_configurations(2), [[1, 1], [1, -1], [-1, 1], [-1, -1]])

    @pytest.mark.parametrize("act", ["tanh", "erf", "sigmoid", "linear"])
    def test_jacobian_matches_finite_differences(self, act):
        spec = KernelSpec(depth=2, activation=act, zero_bias_init=False)
        p = init_network(spec, (4, 3), 3, seed=1)
        x = spin_configurations(3)
        np.testing.assert_allclose(jacobian(p, x), _fd_jacobian(p, x), atol=1e-7)

    def test_ntk_sample_is_gram_of_jacobian(self):
        p = init_network(KernelSpec(depth=2, activation="relu"), 6, 3, seed=2)
        x = spin_configurations(3)
        j = jacobian(p, x)
        np.testing.assert_allclose(empirical_ntk_sample(p, x), j @ j.T, atol=1e-12)

    def test_input_shape_checked(self):
        p = init_network(KernelSpec(), 4, 3)
        with pytest.raises(PreconditionError):
            forward(p, np.ones((2, 4)))


class TestEmpiricalKernels:
    def test_wide_network_matches_analytic(self):
        spec = KernelSpec(depth=1, activation="erf")
        est = empirical_kernels(spec, 4000, 3, n_samples=60, target_rel_err=0.005, seed=0)
        k = kernel_tables(spec, 3)
        for emp, which in ((est.theta_hat, "ntk"), (est.k_hat, "ck")):
            ref = k.dense(which)
            np.testing.assert_allclose(emp, ref, atol=0.03 * np.abs(ref).max())

    def test_ck_estimators_agree_on_average(self):
        spec = KernelSpec(depth=1, activation="tanh")
        x = spin_configurations(2)
        feats = np.mean([empirical_ck_sample(init_network(spec, 64, 2, [0, s]), x) for s in range(2000)], axis=0)
        outs = np.mean([empirical_ck_sample(init_network(spec, 64, 2, [0, s]), x, "outputs")
                        for s in range(2000)], axis=0)
        np.testing.assert_allclose(outs, feats, atol=0.1 * np.abs(feats).max())

    def test_seed_reproducible(self):
        spec = KernelSpec()
        a = empirical_kernels(spec, 32, 2, n_samples=5, min_samples=5, seed=3)
        b = empirical_kernels(spec, 32, 2, n_samples=5, min_samples=5, seed=3)
        np.testing.assert_array_equal(a.theta_hat, b.theta_hat)


class TestLazyRatio:
    def test_hessian_norm_matches_dense(self):
        spec = KernelSpec(depth=1, activation="tanh")
        p = init_network(spec, 3, 2, seed=0)
        x = spin_configurations(2)
        th = p.flat()
        h = 1e-5
        hs = []
        for i in range(th.size):
            e = np.zeros_like(th)
            e[i] = h
            hs.append((jacobian(p.with_flat(th + e), x) - jacobian(p.with_flat(th - e), x)) / (2 * h))
        hb = np.stack(hs, axis=2)  # (batch, params, params)
        best = 0.0
        rng = np.random.default_rng(0)
        for _ in range(4000):
            u = rng.standard_normal(x.shape[0])
            u /= np.linalg.norm(u)
            best = max(best, np.abs(np.linalg.eigvalsh(np.einsum("b,bij->ij", u, hb))).max())
        est = hessian_norm(p, x, iterations=200)
        assert est == pytest.approx(best, rel=2e-2)

    @settings(max_examples=10, deadline=None)
    @given(st.floats(0.05, 20.0))
    def test_output_rescaling_invariance(self, alpha):
        h = build_model("tfim", 3, {"h": 1.0})
        p = init_network(KernelSpec(), 32, 3, seed=4)
        a = lazy_ratio(p, h).ratio
        b = lazy_ratio(scaled_network(p, alpha), h).ratio
        assert b == pytest.approx(a, rel=1e-6)

    def test_ratio_shrinks_with_width(self):
        h = build_model("tfim", 3, {"h": 1.0})
        fit = lazy_scaling(KernelSpec(), h, (16, 256), n_seeds=8)
        assert fit["slope"] < 0
        assert fit["geometric_means"][1] < fit["geometric_means"][0]
