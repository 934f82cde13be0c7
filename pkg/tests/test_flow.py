import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from signbias.exceptions import PreconditionError
from signbias.flow import (FlowConfig, KernelOperator, basis_invariance_check, convergence_time,
                           discrete_gd, effective_sr_kernel, excited_alphas, gd_stability_probe,
                           imaginary_time_energy, integrate_flow, learning_rate_bound,
                           optimal_commuting_ntk, prop1_ratio_prediction, random_commuting_kernel,
                           sr_flow, stability_spectrum, theorem_bounds)
from signbias.kernels import KernelSpec, kernel_tables
from signbias.pauli import build_model, random_hamiltonian

FAST = FlowConfig(t_max=8.0, n_samples=161, rel_tol=1e-10, abs_tol=1e-12)


def _nondegenerate(rng, n=3):
    while True:
        h = random_hamiltonian(n, rng, locality=2)
        if not h.spectrum().is_degenerate:
            return h


class TestIntegrateFlow:
    def test_identity_kernel_is_imaginary_time(self, rng):
        h = _nondegenerate(rng)
        psi0 = rng.standard_normal(8)
        tr = integrate_flow(h, np.eye(8), psi0, FAST)
        np.testing.assert_allclose(tr.energy, imaginary_time_energy(h, psi0, tr.times), atol=1e-7)

    def test_hadamard_basis_agrees(self, rng):
        h = build_model("tfim", 3, {"h": 0.8})
        k = kernel_tables(KernelSpec(), 3)
        psi0 = rng.standard_normal(8)
        a = integrate_flow(h, k, psi0, FAST)
        b = integrate_flow(h, k, psi0, FlowConfig(**{**FAST.__dict__, "basis": "hadamard"}))
        np.testing.assert_allclose(a.energy, b.energy, atol=1e-8)

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2 ** 31 - 1))
    def test_energy_monotone_and_bilinear_conserved(self, seed):
        rng = np.random.default_rng(seed)
        h = random_hamiltonian(3, rng, locality=2)
        k = kernel_tables(KernelSpec(depth=int(rng.integers(1, 3))), 3)
        tr = integrate_flow(h, k, rng.standard_normal(8), FAST, allow_degenerate=True)
        assert tr.energy_monotone(1e-9)
        assert tr.conserved_drift() < 1e-7

    def test_converges_to_ground_state(self):
        h = build_model("tfim", 3, {"h": 1.0})
        tr = integrate_flow(h, kernel_tables(KernelSpec(), 3), np.ones(8),
                            FlowConfig(t_max=200.0, n_samples=201))
        assert tr.overlap[-1] > 1 - 1e-6
        assert tr.excess[-1] < 1e-6

    def test_unit_gauge(self, rng):
        k = kernel_tables(KernelSpec(), 3)
        tr = integrate_flow(build_model("tfim", 3), k, rng.standard_normal(8),
                            FlowConfig(t_max=1.0, n_samples=3, gauge="unit_inverse_kernel"))
        assert tr.conserved[0] == pytest.approx(1.0)

    def test_dimension_mismatch(self):
        with pytest.raises(PreconditionError):
            integrate_flow(build_model("tfim", 3), np.eye(4), np.ones(8), FAST)

    def test_commuting_kernel_ratio_closed_form(self, rng):
        h = _nondegenerate(rng)
        vals = rng.uniform(0.5, 2.0, 8)
        v = h.spectrum().vectors
        theta = (v * vals) @ v.T
        psi0 = rng.standard_normal(8)
        cfg = FlowConfig(t_max=3.0, n_samples=601, rel_tol=1e-11, abs_tol=1e-13, keep_states=True)
        tr = integrate_flow(h, theta, psi0, cfg)
        c = v.T @ tr.states
        pred = prop1_ratio_prediction(tr, vals, h.spectrum().energies, 0, 1, c[1, 0] / c[0, 0])
        np.testing.assert_allclose(pred, c[1] / c[0], rtol=1e-5)


class TestConvergenceTime:
    def test_not_reached_is_inf(self):
        tr = integrate_flow(build_model("tfim", 2), np.eye(4), [1.0, -1.0, -1.0, 1.0 + 1e-6],
                            FlowConfig(t_max=0.1, n_samples=5), allow_degenerate=True)
        assert math.isinf(convergence_time(tr, "overlap", 0.999))

    def test_immediate_convergence(self):
        h = build_model("tfim", 2)
        g = h.spectrum().ground_state
        tr = integrate_flow(h, np.eye(4), g, FlowConfig(t_max=1.0, n_samples=5))
        assert convergence_time(tr, "overlap") == 0.0
        assert convergence_time(tr, "energy") == 0.0

    def test_unknown_criterion(self):
        tr = integrate_flow(build_model("tfim", 2), np.eye(4), np.ones(4), FlowConfig(t_max=1.0, n_samples=3))
        with pytest.raises(PreconditionError):
            convergence_time(tr, "fidelity")


class TestGradientDescent:
    def test_small_step_tracks_flow(self, rng):
        h = build_model("tfim", 3, {"h": 1.0})
        k = kernel_tables(KernelSpec(), 3)
        psi0 = rng.standard_normal(8)
        gd = discrete_gd(h, k, psi0, 1e-3, 2000, record_every=1000)
        ref = integrate_flow(h, k, psi0, FlowConfig(t_max=2.0, n_samples=3, rel_tol=1e-10))
        np.testing.assert_allclose(gd.energy, ref.energy, atol=5e-3)

    def test_bound_separates_stable_and_unstable_steps(self, rng):
        h = _nondegenerate(rng)
        k = kernel_tables(KernelSpec(), 3)
        g = h.spectrum().ground_state
        d = rng.standard_normal(8)
        d -= g * (g @ d)
        psi0 = g + 1e-3 * d / np.linalg.norm(d)
        b = learning_rate_bound(h, k, psi0)["exact"]
        assert gd_stability_probe(h, k, psi0, 1.2 * b).diverges
        assert gd_stability_probe(h, k, psi0, 0.5 * b).contracts


class TestDampedNaturalGradient:
    def test_effective_kernel_limits(self):
        k = kernel_tables(KernelSpec(), 3)
        small, _ = effective_sr_kernel(k, 1e-9)
        np.testing.assert_allclose(small, np.eye(8), atol=1e-7)
        big, _ = effective_sr_kernel(k, 1e6)
        np.testing.assert_allclose(big * 1e6, k.dense("ntk"), rtol=1e-4, atol=1e-6)

    def test_small_damping_approaches_imaginary_time(self):
        h = build_model("tfim", 3, {"h": 2.0})
        k = kernel_tables(KernelSpec(), 3)
        psi0 = np.ones(8)
        cfg = FlowConfig(t_max=5.0, n_samples=101, rel_tol=1e-11, abs_tol=1e-13)
        ref = imaginary_time_energy(h, psi0, cfg.sample_times())
        devs = [np.max(np.abs(sr_flow(h, k, e, psi0, cfg).energy - ref)) for e in (1e-2, 1e-3)]
        assert devs[1] < devs[0]
        assert devs[1] < 1e-2

    def test_rejects_nonpositive_epsilon(self):
        with pytest.raises(PreconditionError):
            effective_sr_kernel(np.eye(2), 0.0)


class TestOptimalKernel:
    def test_equal_excited_rates(self, rng):
        h = _nondegenerate(rng)
        best = optimal_commuting_ntk(h, 1.0)
        a = excited_alphas(h, best)
        np.testing.assert_allclose(a, a[0], rtol=1e-10)
        assert np.linalg.norm(best) == pytest.approx(1.0)

    def test_random_commuting_kernels_are_slower(self, rng):
        h = _nondegenerate(rng)
        best = optimal_commuting_ntk(h, 1.0)
        g = h.spectrum().ground_state
        a0 = excited_alphas(h, best)[0]
        for _ in range(200):
            r = random_commuting_kernel(h, 1.0, float(g @ best @ g), rng)
            assert excited_alphas(h, r)[0] <= a0 * (1 + 1e-12)


class TestStability:
    def test_only_ground_state_stable(self, rng):
        h = _nondegenerate(rng)
        k = kernel_tables(KernelSpec(), 3)
        assert stability_spectrum(h, k, 0).stable
        for i in (1, 4):
            rep = stability_spectrum(h, k, i)
            assert not rep.stable
            assert rep.negative_direction == pytest.approx(rep.expected_negative, rel=1e-10)


class TestInvariance:
    def test_x_frame_commutes(self, rng):
        from signbias.pauli import frame_operator
        h = random_hamiltonian(3, rng, locality=2)
        op = KernelOperator(kernel_tables(KernelSpec(), 3))
        u = frame_operator(3, "X", [1]).astype(complex)
        dev = basis_invariance_check(h, op, u, rng.standard_normal(8), FlowConfig(t_max=3.0, n_samples=31))
        assert dev < 1e-7

    def test_noncommuting_unitary_rejected(self, rng):
        from signbias.pauli import frame_operator
        op = KernelOperator(kernel_tables(KernelSpec(), 3))
        with pytest.raises(PreconditionError):
            basis_invariance_check(build_model("tfim", 3), op, frame_operator(3, "Z", [0]), np.ones(8))


def test_bound_report_holds_for_identity_case(rng):
    h = _nondegenerate(rng, 2)
    cfg = FlowConfig(t_max=20.0, n_samples=401, gauge="unit_inverse_kernel")
    theta = np.eye(4)
    tr = integrate_flow(h, theta, rng.standard_normal(4), cfg)
    rep = theorem_bounds(1, h, theta, tr)
    assert rep.holds and rep.n_violations == 0
