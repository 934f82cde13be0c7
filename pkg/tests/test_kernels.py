import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from signbias.exceptions import KernelConstructionError, PreconditionError
from signbias.kernels import (ACTIVATIONS, KernelFn, KernelSpec, dense_kernel, dual_activation,
                              hadamard_diagonalize, hadamard_matrix, kernel_from_sectors,
                              kernel_tables, krawtchouk_matrix, sector_eigenvalues, sector_function,
                              weak_bias_check, write_kernel_csv)


def _mc_dual(kind, q, c, n=400_000, seed=0):
    rng = np.random.default_rng(seed)
    cov = np.array([[q, c], [c, q]])
    u, v = rng.multivariate_normal([0, 0], cov, size=n).T
    f = {"relu": lambda x: np.maximum(x, 0), "tanh": np.tanh, "erf": None}[kind]
    df = {"relu": lambda x: (x > 0).astype(float), "tanh": lambda x: 1 - np.tanh(x) ** 2}[kind]
    return np.mean(f(u) * f(v)), np.mean(df(u) * df(v))


class TestDualActivation:
    @pytest.mark.parametrize("kind", ["relu", "tanh"])
    @pytest.mark.parametrize("c", [-0.6, 0.1, 0.9])
    def test_matches_monte_carlo(self, kind, c):
        e, d = dual_activation(kind, 1.0, c)
        e_mc, d_mc = _mc_dual(kind, 1.0, c)
        np.testing.assert_allclose([e, d], [e_mc, d_mc], atol=5e-3)

    def test_relu_diagonal_closed_form(self):
        e, d = dual_activation("relu", 2.0, 2.0)
        assert e == pytest.approx(1.0) and d == pytest.approx(0.5)

    def test_rejects_invalid_gram(self):
        with pytest.raises(PreconditionError):
            dual_activation("relu", 1.0, 1.5)
        with pytest.raises(PreconditionError):
            dual_activation("relu", 0.0, 0.0)


class TestKernelTables:
    def test_linear_one_layer_closed_form(self):
        n = 4
        k = kernel_tables(KernelSpec(depth=1, activation="linear", bias_variance=0.5), n)
        t = np.arange(n, -n - 1, -2) / n
        np.testing.assert_allclose(k.phi_ntk, 2 * (t + 0.5))
        np.testing.assert_allclose(k.f_ck, t)

    def test_relu_one_layer_closed_form(self):
        n = 3
        k = kernel_tables(KernelSpec(depth=1, activation="relu", bias_variance=0.0), n)
        t = np.arange(n, -n - 1, -2) / n
        th = np.arccos(t)
        ck = (np.sin(th) + (math.pi - th) * t) / (2 * math.pi)
        np.testing.assert_allclose(k.f_ck, ck, atol=1e-14)
        np.testing.assert_allclose(k.phi_ntk, ck + (math.pi - th) / (2 * math.pi) * t, atol=1e-14)

    def test_zero_bias_init_leaves_ck_unbiased(self):
        a = kernel_tables(KernelSpec(bias_variance=0.0), 4)
        b = kernel_tables(KernelSpec(bias_variance=2.0), 4)
        np.testing.assert_allclose(a.f_ck, b.f_ck)
        assert np.all(b.phi_ntk > a.phi_ntk)

    def test_spec_validation(self):
        with pytest.raises(PreconditionError):
            KernelSpec(depth=0)
        with pytest.raises(PreconditionError):
            KernelSpec(activation="softplus")
        with pytest.raises(KernelConstructionError):
            KernelFn(3, np.ones(3), np.ones(4))


class TestSectors:
    def test_krawtchouk_small_case(self):
        np.testing.assert_array_equal(krawtchouk_matrix(2), [[1, 2, 1], [1, 0, -1], [1, -2, 1]])

    @pytest.mark.parametrize("act", ACTIVATIONS)
    @pytest.mark.parametrize("depth", [1, 2])
    def test_hadamard_diagonalizes(self, act, depth):
        k = kernel_tables(KernelSpec(depth=depth, activation=act), 5)
        for which in ("ntk", "ck"):
            d = hadamard_diagonalize(dense_kernel(k, which))
            np.testing.assert_allclose(d - np.diag(np.diag(d)), 0, atol=1e-12)
            np.testing.assert_allclose(np.diag(d), k.sectors(which).per_state(), atol=1e-12)

    def test_sectors_match_eigvalsh(self):
        k = kernel_tables(KernelSpec(depth=2, activation="erf"), 4)
        s = k.sectors("ntk")
        ev = np.sort(np.repeat(s.eigenvalues, s.multiplicities))
        np.testing.assert_allclose(ev, np.linalg.eigvalsh(k.dense("ntk")), atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(0.01, 10.0), min_size=4, max_size=4))
    def test_round_trip(self, lam):
        k = kernel_from_sectors(lam)
        np.testing.assert_allclose(sector_eigenvalues(k).eigenvalues, lam, rtol=1e-10, atol=1e-12)

    def test_sector_function_inverse(self):
        k = kernel_tables(KernelSpec(), 4)
        inv = sector_function(k.sectors("ntk"), lambda x: 1 / x)
        np.testing.assert_allclose(inv @ k.dense("ntk"), np.eye(16), atol=1e-11)

    def test_hadamard_orthonormal(self):
        h = hadamard_matrix(4)
        np.testing.assert_allclose(h @ h.T, np.eye(16), atol=1e-14)

    def test_weak_bias_holds_for_default_relu(self):
        rep = weak_bias_check(kernel_tables(KernelSpec(), 6).sectors("ntk"), strict=False)
        assert rep.ok


def test_write_kernel_csv(tmp_path):
    k = kernel_tables(KernelSpec(), 3)
    p = tmp_path / "k.csv"
    write_kernel_csv(k, p)
    text = p.read_text().splitlines()
    assert len([l for l in text if l and not l.startswith("#")]) >= 4
