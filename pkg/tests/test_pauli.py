import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from signbias.exceptions import DegenerateGroundStateError, HamiltonianError, PreconditionError
from signbias.pauli import (Hamiltonian, PauliTerm, apply_local_rotation, apply_pauli_frame,
                            build_model, dense_and_spectrum, frame_operator, is_stoquastic,
                            local_unitary, pauli_matrix, product_operator, random_hamiltonian,
                            xz_rotation)

X, Y, Z = (pauli_matrix(p) for p in "XYZ")


def _reference_tfim(n, h, j=1.0):
    """Open-chain TFIM built directly from Kronecker products."""
    out = np.zeros((2 ** n, 2 ** n))
    for i in range(n - 1):
        out -= j * product_operator(n, {i: Z, i + 1: Z}).real
    for i in range(n):
        out -= h * product_operator(n, {i: X}).real
    return out


class TestPauliTerm:
    def test_rejects_zero_and_nonfinite(self):
        for c in (0.0, math.nan, math.inf):
            with pytest.raises(HamiltonianError):
                PauliTerm(c, ((0, "X"),))

    def test_rejects_repeated_site_and_bad_letter(self):
        with pytest.raises(HamiltonianError):
            PauliTerm(1.0, ((0, "X"), (0, "Z")))
        with pytest.raises(HamiltonianError):
            PauliTerm(1.0, ((0, "Q"),))

    def test_ops_sorted(self):
        t = PauliTerm.from_dict(2.0, {3: "z", 1: "x"})
        assert t.ops == ((1, "X"), (3, "Z"))


class TestHamiltonian:
    def test_site0_most_significant(self):
        h = Hamiltonian(2, [PauliTerm.from_dict(1.0, {0: "Z"})])
        np.testing.assert_allclose(np.diag(h.dense()), [1, 1, -1, -1])

    @pytest.mark.parametrize("n", [2, 3, 5])
    def test_tfim_matches_kron_reference(self, n):
        h = build_model("tfim", n, {"h": 0.7})
        np.testing.assert_allclose(h.dense(), _reference_tfim(n, 0.7), atol=1e-14)

    def test_two_site_tfim_ground_energy(self):
        # Closed form for -ZZ - h(X1 + X2): E_g = -sqrt(1 + 4 h^2)
        h = build_model("tfim", 2, {"h": 1.3})
        assert h.spectrum().ground_energy == pytest.approx(-math.sqrt(1 + 4 * 1.3 ** 2), abs=1e-12)

    def test_heisenberg_dimer_singlet(self):
        h = build_model("heisenberg_tf", 2, {"h": 0.0})
        assert h.spectrum().ground_energy == pytest.approx(-3.0, abs=1e-12)

    def test_local_field_product_ground_state(self):
        n, th = 3, 0.4
        e = build_model("local_field", n, {"theta": th}).spectrum().ground_energy
        assert e == pytest.approx(-n, abs=1e-12)

    def test_degenerate_ground_state_raises(self):
        h = build_model("tfim", 3, {"h": 0.0})
        with pytest.raises(DegenerateGroundStateError):
            h.spectrum().ground_state
        _, spec = dense_and_spectrum(h, allow_degenerate=True)
        assert spec.degeneracy == 2

    def test_ground_state_sign_convention(self, rng):
        h = random_hamiltonian(3, rng, locality=2)
        g = h.spectrum().ground_state
        assert g[np.argmax(np.abs(g))] > 0

    def test_unknown_model(self):
        with pytest.raises(HamiltonianError):
            build_model("hubbard", 3)

    def test_custom_model(self):
        h = build_model("custom", 2, {"terms": [(0.5, {0: "X", 1: "X"}), {"coefficient": -1.0, "ops": {1: "Z"}}]})
        ref = 0.5 * np.kron(X, X) - np.kron(np.eye(2), Z)
        np.testing.assert_allclose(h.dense(), ref)


class TestRotations:
    def test_xz_rotation_maps_field(self):
        h = build_model("local_field", 2, {"theta": 0.0})
        th = 0.3
        r = apply_local_rotation(h, xz_rotation(th))
        ref = build_model("local_field", 2, {"theta": th})
        np.testing.assert_allclose(r.dense(), ref.dense(), atol=1e-13)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(-math.pi, math.pi), st.integers(0, 2 ** 31 - 1))
    def test_rotation_is_unitary_conjugation(self, theta, seed):
        rng = np.random.default_rng(seed)
        h = random_hamiltonian(2, rng, locality=2)
        o = xz_rotation(theta)
        u = np.kron(local_unitary(o), local_unitary(o))
        ref = u @ h.dense() @ u.conj().T
        np.testing.assert_allclose(apply_local_rotation(h, o).dense(), ref.real, atol=1e-10)
        np.testing.assert_allclose(ref.imag, 0, atol=1e-10)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2 ** 31 - 1))
    def test_rotation_preserves_spectrum(self, seed):
        rng = np.random.default_rng(seed)
        h = random_hamiltonian(3, rng, locality=2)
        r = apply_local_rotation(h, xz_rotation(rng.uniform(-3, 3)))
        np.testing.assert_allclose(np.linalg.eigvalsh(r.dense()), np.linalg.eigvalsh(h.dense()), atol=1e-10)

    def test_improper_rotation_rejected(self):
        h = build_model("tfim", 2)
        with pytest.raises(PreconditionError):
            apply_local_rotation(h, np.diag([1.0, 1.0, -1.0]))

    def test_pauli_frame_matches_operator(self, rng):
        h = random_hamiltonian(3, rng, locality=2)
        for axis in "XZ":
            f = frame_operator(3, axis, [0, 2])
            np.testing.assert_allclose(apply_pauli_frame(h, axis, [0, 2]).dense(),
                                       (f @ h.dense() @ f).real, atol=1e-13)


class TestStoquastic:
    def test_tfim_positive_field_stoquastic(self):
        assert is_stoquastic(build_model("tfim", 3, {"h": 1.0}))

    def test_negative_field_not_stoquastic(self):
        assert not is_stoquastic(build_model("tfim", 3, {"h": -1.0}))
