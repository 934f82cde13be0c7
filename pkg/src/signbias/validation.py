"""Input checks shared by the estimator wrappers and the CLI."""

from __future__ import annotations

import math
from numbers import Integral, Real

import numpy as np

from .exceptions import PreconditionError
from .kernels import KernelFn
from .pauli import Hamiltonian


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    """Return ``value`` as an int, requiring ``value >= minimum``."""
    if isinstance(value, bool) or not isinstance(value, Integral) or value < minimum:
        raise PreconditionError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_positive_float(value, name: str, allow_zero: bool = False) -> float:
    """Return ``value`` as a finite float that is positive (or nonnegative)."""
    if isinstance(value, bool) or not isinstance(value, Real) or not math.isfinite(value):
        raise PreconditionError(f"{name} must be a finite number, got {value!r}")
    if value < 0 or (value == 0 and not allow_zero):
        raise PreconditionError(f"{name} must be {'>= 0' if allow_zero else '> 0'}, got {value!r}")
    return float(value)


def check_hamiltonian(h) -> Hamiltonian:
    """Require a :class:`Hamiltonian` instance."""
    if not isinstance(h, Hamiltonian):
        raise PreconditionError(f"expected a Hamiltonian, got {type(h).__name__}")
    return h


def check_state(psi, dim: int, name: str = "psi0") -> np.ndarray:
    """Require a finite, nonzero real vector of length ``dim``."""
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (dim,):
        raise PreconditionError(f"{name} must have shape ({dim},), got {psi.shape}")
    if not np.all(np.isfinite(psi)) or not np.any(psi):
        raise PreconditionError(f"{name} must be finite and nonzero")
    return psi


def check_kernel(k, dim: int | None = None) -> KernelFn | np.ndarray:
    """Accept a :class:`KernelFn` or a finite symmetric square matrix."""
    if isinstance(k, KernelFn):
        if dim is not None and 2 ** k.n_qubits != dim:
            raise PreconditionError(f"kernel is for {k.n_qubits} qubits, expected dimension {dim}")
        return k
    mat = np.asarray(k, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise PreconditionError("kernel must be a square matrix")
    if dim is not None and mat.shape[0] != dim:
        raise PreconditionError(f"kernel has dimension {mat.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(mat)):
        raise PreconditionError("kernel entries must be finite")
    if np.max(np.abs(mat - mat.T)) > 1e-10 * max(1.0, np.max(np.abs(mat))):
        raise PreconditionError("kernel must be symmetric")
    return mat


def check_spin_configurations(x, n_qubits: int | None = None) -> np.ndarray:
    """Require a 2-D array of +-1 entries, one configuration per row."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise PreconditionError(f"configurations must be 2-D, got shape {x.shape}")
    if n_qubits is not None and x.shape[1] != n_qubits:
        raise PreconditionError(f"configurations must have {n_qubits} columns, got {x.shape[1]}")
    if not np.all(np.abs(x) == 1):
        raise PreconditionError("configuration entries must be +1 or -1")
    return x
