"""Pauli strings, spin-model Hamiltonians and local basis transformations.

Basis convention: configuration index ``b`` encodes spins with site 0 as the
most significant bit, bit value 0 meaning sigma = +1.  This matches the
ordering of ``np.kron(op_0, op_1, ...)``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.linalg import expm
from scipy.spatial.transform import Rotation

from .exceptions import DegenerateGroundStateError, HamiltonianError, PreconditionError

MAX_QUBITS = 14
DEGENERACY_TOL = 1e-10
PAULI_LETTERS = ("X", "Y", "Z")
MODEL_KINDS = ("tfim", "local_field", "heisenberg_tf", "xyz", "j1j2", "custom")

_PAULI = {
    "I": np.eye(2),
    "X": np.array([[0.0, 1.0], [1.0, 0.0]]),
    "Y": np.array([[0.0, -1.0j], [1.0j, 0.0]]),
    "Z": np.array([[1.0, 0.0], [0.0, -1.0]]),
}


def pauli_matrix(letter: str) -> np.ndarray:
    """Return the 2x2 matrix of a single Pauli letter (I, X, Y or Z)."""
    return _PAULI[letter.upper()].copy()


@dataclass(frozen=True)
class PauliTerm:
    """A real coefficient times a tensor product of Pauli letters.

    Args:
        coefficient: Finite, nonzero weight.
        ops: Sorted tuple of ``(site, letter)`` pairs; sites not listed
            carry the identity.
    """

    coefficient: float
    ops: tuple[tuple[int, str], ...]

    def __post_init__(self):
        c = float(self.coefficient)
        if not math.isfinite(c) or c == 0.0:
            raise HamiltonianError(f"coefficient must be finite and nonzero, got {self.coefficient!r}")
        object.__setattr__(self, "coefficient", c)
        seen = {}
        for site, letter in self.ops:
            letter = str(letter).upper()
            if letter not in PAULI_LETTERS:
                raise HamiltonianError(f"unknown Pauli letter {letter!r}")
            if int(site) != site or site < 0:
                raise HamiltonianError(f"invalid site index {site!r}")
            if int(site) in seen:
                raise HamiltonianError(f"site {site} appears twice in one term")
            seen[int(site)] = letter
        object.__setattr__(self, "ops", tuple(sorted(seen.items())))

    @classmethod
    def from_dict(cls, coefficient: float, ops: Mapping[int, str]) -> "PauliTerm":
        return cls(coefficient, tuple((int(k), v) for k, v in ops.items()))

    @property
    def string(self) -> tuple[tuple[int, str], ...]:
        return self.ops

    @property
    def n_y(self) -> int:
        return sum(1 for _, p in self.ops if p == "Y")

    def letter(self, site: int) -> str:
        for s, p in self.ops:
            if s == site:
                return p
        return "I"

    def label(self, n: int) -> str:
        return "".join(self.letter(i) for i in range(n))


class Spectrum:
    """Sorted eigen-decomposition of a dense Hamiltonian.

    Eigenvectors are stored as columns with the sign convention that the
    largest-magnitude amplitude is positive.
    """

    def __init__(self, energies: np.ndarray, vectors: np.ndarray, tol: float = DEGENERACY_TOL):
        self.energies = np.asarray(energies)
        self.vectors = np.asarray(vectors)
        scale = max(1.0, float(np.max(np.abs(self.energies))))
        close = np.abs(self.energies - self.energies[0]) < tol * scale
        self.degeneracy = int(np.count_nonzero(close))
        self._tol = tol

    @property
    def dim(self) -> int:
        return self.energies.size

    @property
    def ground_energy(self) -> float:
        return float(self.energies[0])

    @property
    def gap(self) -> float:
        """Distance from the ground level to the next distinct level."""
        if self.degeneracy >= self.dim:
            return 0.0
        return float(self.energies[self.degeneracy] - self.energies[0])

    @property
    def is_degenerate(self) -> bool:
        return self.degeneracy > 1

    @property
    def ground_state(self) -> np.ndarray:
        if self.is_degenerate:
            raise DegenerateGroundStateError(
                f"ground level is {self.degeneracy}-fold degenerate; use ground_projector")
        return self.vectors[:, 0].copy()

    @property
    def ground_projector(self) -> np.ndarray:
        v = self.vectors[:, : self.degeneracy]
        return v @ v.conj().T

    def ground_weight(self, psi: np.ndarray) -> np.ndarray:
        """Squared norm of the ground-space component of ``psi`` (columns allowed)."""
        v = self.vectors[:, : self.degeneracy]
        return np.sum(np.abs(v.conj().T @ psi) ** 2, axis=0)


def fix_phase(v: np.ndarray, atol: float = 1e-9) -> np.ndarray:
    """Flip columns of ``v`` so the first largest-magnitude entry is positive.

    Ties within ``atol`` resolve to the lowest index, which keeps the choice
    stable against rounding noise on exactly symmetric states.
    """
    v = np.array(v, dtype=float, copy=True)
    single = v.ndim == 1
    if single:
        v = v[:, None]
    mag = np.abs(v)
    top = mag.max(axis=0)
    idx = np.argmax(mag >= top - atol, axis=0)
    signs = np.sign(v[idx, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    v *= signs
    return v[:, 0] if single else v


class Hamiltonian:
    """Real spin Hamiltonian as a sum of Pauli strings.

    Instances are treated as immutable; the dense matrix and spectrum are
    computed lazily and cached.

    Args:
        n_qubits: Number of spins N.
        terms: Iterable of PauliTerm.  Duplicate strings are merged and terms
            with an odd number of Y factors are rejected.
    """

    def __init__(self, n_qubits: int, terms: Iterable[PauliTerm]):
        if int(n_qubits) != n_qubits or n_qubits < 1:
            raise HamiltonianError(f"n_qubits must be a positive integer, got {n_qubits!r}")
        self.n_qubits = int(n_qubits)
        merged: dict[tuple, float] = {}
        for t in terms:
            if not isinstance(t, PauliTerm):
                raise HamiltonianError(f"expected PauliTerm, got {type(t).__name__}")
            for site, _ in t.ops:
                if site >= self.n_qubits:
                    raise HamiltonianError(f"site {site} out of range for N={self.n_qubits}")
            if t.n_y % 2:
                raise HamiltonianError(f"term {t.label(self.n_qubits)} has an odd number of Y factors")
            merged[t.ops] = merged.get(t.ops, 0.0) + t.coefficient
        scale = max((abs(c) for c in merged.values()), default=0.0)
        self.terms = tuple(PauliTerm(c, ops) for ops, c in merged.items()
                           if abs(c) > 1e-14 * max(scale, 1.0))
        self._dense = None
        self._spectrum = None

    def __repr__(self):
        body = " + ".join(f"{t.coefficient:+.4g}*{t.label(self.n_qubits)}" for t in self.terms[:6])
        more = "" if len(self.terms) <= 6 else f" + ... ({len(self.terms)} terms)"
        return f"Hamiltonian(N={self.n_qubits}: {body}{more})"

    @property
    def dim(self) -> int:
        return 2 ** self.n_qubits

    @property
    def locality(self) -> int:
        return max((len(t.ops) for t in self.terms), default=0)

    def coefficient(self, ops: Mapping[int, str]) -> float:
        key = PauliTerm.from_dict(1.0, ops).ops
        for t in self.terms:
            if t.ops == key:
                return t.coefficient
        return 0.0

    def dense(self) -> np.ndarray:
        if self._dense is None:
            _check_size(self.n_qubits)
            self._dense = _densify(self.n_qubits, self.terms)
        return self._dense

    def spectrum(self) -> Spectrum:
        if self._spectrum is None:
            w, v = np.linalg.eigh(self.dense())
            self._spectrum = Spectrum(w, fix_phase(v))
        return self._spectrum


def _check_size(n: int):
    if n > MAX_QUBITS:
        raise PreconditionError(f"N={n} exceeds the dense-matrix limit of {MAX_QUBITS} qubits")


def _densify(n: int, terms: Sequence[PauliTerm]) -> np.ndarray:
    dim = 2 ** n
    idx = np.arange(dim, dtype=np.int64)
    out = np.zeros((dim, dim))
    for t in terms:
        flip = zy = 0
        for site, p in t.ops:
            bit = 1 << (n - 1 - site)
            if p in "XY":
                flip |= bit
            if p in "ZY":
                zy |= bit
        parity = np.bitwise_count(idx & zy) & 1
        # i^{n_Y} is real because n_Y is even
        sign = (-1.0) ** (t.n_y // 2) * (1.0 - 2.0 * parity)
        out[idx ^ flip, idx] += t.coefficient * sign
    return out


def dense_and_spectrum(h: Hamiltonian, allow_degenerate: bool = False) -> tuple[np.ndarray, Spectrum]:
    """Dense matrix and eigen-decomposition of ``h``.

    Args:
        h: The Hamiltonian.
        allow_degenerate: If False, a ground level with gap below 1e-10
            raises DegenerateGroundStateError.  If True the Spectrum is
            returned and callers must use its ground projector.

    Returns:
        ``(matrix, spectrum)``.
    """
    mat = h.dense()
    spec = h.spectrum()
    if spec.is_degenerate and not allow_degenerate:
        raise DegenerateGroundStateError(
            f"ground state is {spec.degeneracy}-fold degenerate (gap < {DEGENERACY_TOL:g})")
    return mat, spec


# ---------------------------------------------------------------- models

def open_chain(n: int) -> list[tuple[int, int]]:
    return [(i, i + 1) for i in range(n - 1)]


def periodic_chain(n: int) -> list[tuple[int, int]]:
    if n < 3:
        return open_chain(n)
    return [(i, (i + 1) % n) for i in range(n)]


def _validate_edges(n: int, edges) -> list[tuple[int, int]]:
    out = []
    for e in edges:
        if len(e) != 2:
            raise HamiltonianError(f"edge {e!r} must be a pair")
        i, j = int(e[0]), int(e[1])
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise HamiltonianError(f"edge ({i}, {j}) is invalid for N={n}")
        out.append((i, j))
    return out


def _heisenberg_bond(i: int, j: int, coupling: float) -> list[PauliTerm]:
    return [PauliTerm.from_dict(coupling, {i: p, j: p}) for p in PAULI_LETTERS]


def build_model(kind: str, n: int, params: Mapping | None = None,
                graph: Sequence[Sequence[int]] | None = None) -> Hamiltonian:
    """Construct one of the benchmark spin models.

    Args:
        kind: One of ``tfim`` (-J sum ZZ - h sum X), ``local_field``
            (sum -cos(theta) X - sin(theta) Z), ``heisenberg_tf``
            (J sum sigma.sigma - h sum X), ``xyz`` (sum alpha XX + beta ZZ +
            gamma YY), ``j1j2`` (J1 nearest plus J2 next-nearest sigma.sigma
            on a chain) and ``custom``.
        n: Number of spins.
        params: Model parameters.  ``custom`` expects ``terms``: a list of
            ``(coefficient, {site: letter})`` records.
        graph: Edge list for the nearest-neighbour couplings.  Defaults to
            the open chain.

    Returns:
        The Hamiltonian.
    """
    params = dict(params or {})
    if kind not in MODEL_KINDS:
        raise HamiltonianError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    if int(n) != n or n < 1:
        raise HamiltonianError(f"n must be a positive integer, got {n!r}")
    edges = _validate_edges(n, open_chain(n) if graph is None else graph)
    terms: list[PauliTerm] = []

    if kind == "tfim":
        h, J = float(params.get("h", 1.0)), float(params.get("J", 1.0))
        terms += [PauliTerm.from_dict(-J, {i: "Z", j: "Z"}) for i, j in edges if J != 0]
        terms += [PauliTerm.from_dict(-h, {i: "X"}) for i in range(n) if h != 0]
    elif kind == "local_field":
        th, h = float(params.get("theta", 0.0)), float(params.get("h", 1.0))
        cx, cz = -h * math.cos(th), -h * math.sin(th)
        terms += [PauliTerm.from_dict(cx, {i: "X"}) for i in range(n) if abs(cx) > 1e-15]
        terms += [PauliTerm.from_dict(cz, {i: "Z"}) for i in range(n) if abs(cz) > 1e-15]
    elif kind == "heisenberg_tf":
        h, J = float(params.get("h", 1.0)), float(params.get("J", 1.0))
        for i, j in edges:
            terms += _heisenberg_bond(i, j, J)
        terms += [PauliTerm.from_dict(-h, {i: "X"}) for i in range(n) if h != 0]
    elif kind == "xyz":
        a = float(params.get("alpha", -2.0))
        b = float(params.get("beta", -1.0))
        g = float(params.get("gamma", -0.5))
        for i, j in edges:
            for c, p in ((a, "X"), (b, "Z"), (g, "Y")):
                if c != 0:
                    terms.append(PauliTerm.from_dict(c, {i: p, j: p}))
    elif kind == "j1j2":
        j1, j2 = float(params.get("J1", 1.0)), float(params.get("J2", 0.5))
        for i, j in edges:
            terms += _heisenberg_bond(i, j, j1)
        if j2 != 0:
            nnn = params.get("next_nearest")
            nnn = [(i, i + 2) for i in range(n - 2)] if nnn is None else _validate_edges(n, nnn)
            for i, j in nnn:
                terms += _heisenberg_bond(i, j, j2)
    else:
        records = params.get("terms")
        if not records:
            raise HamiltonianError("custom model requires a non-empty 'terms' list")
        for rec in records:
            if isinstance(rec, Mapping):
                coef, ops = rec.get("coefficient"), rec.get("ops", {})
            else:
                coef, ops = rec
            terms.append(PauliTerm.from_dict(coef, {int(k): v for k, v in ops.items()}))
    return Hamiltonian(n, terms)


def random_hamiltonian(n: int, rng: np.random.Generator, locality: int | None = None,
                       density: float = 1.0) -> Hamiltonian:
    """Random real Pauli-sum Hamiltonian with standard normal coefficients.

    Args:
        n: Number of spins.
        rng: Random generator.
        locality: Maximum string weight (defaults to ``n``).
        density: Probability of keeping each admissible string.
    """
    locality = n if locality is None else locality
    terms = []
    for letters in itertools.product("IXYZ", repeat=n):
        ops = {i: p for i, p in enumerate(letters) if p != "I"}
        if not ops or len(ops) > locality or sum(p == "Y" for p in letters) % 2:
            continue
        if rng.random() < density:
            terms.append(PauliTerm.from_dict(rng.standard_normal(), ops))
    return Hamiltonian(n, terms)


# ---------------------------------------------------------------- transformations

def xz_rotation(theta: float) -> np.ndarray:
    """SO(3) matrix sending X -> cos X + sin Z and Z -> -sin X + cos Z.

    Columns give the image of (X, Y, Z) in the (X, Y, Z) coordinates, so
    that -X maps to -cos(theta) X - sin(theta) Z.
    """
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def _check_rotation(o) -> np.ndarray:
    o = np.asarray(o, dtype=float)
    if o.shape != (3, 3):
        raise PreconditionError(f"rotation must be 3x3, got shape {o.shape}")
    if np.max(np.abs(o.T @ o - np.eye(3))) > 1e-10:
        raise PreconditionError("rotation matrix is not orthogonal to 1e-10")
    if np.linalg.det(o) < 0:
        raise PreconditionError("improper rotation (det = -1) is not induced by any unitary")
    return o


def local_unitary(o: np.ndarray) -> np.ndarray:
    """2x2 unitary U with U sigma^g U^dag = sum_d O[d, g] sigma^d."""
    o = _check_rotation(o)
    rv = Rotation.from_matrix(o).as_rotvec()
    gen = sum(rv[k] * _PAULI[p] for k, p in enumerate(PAULI_LETTERS))
    return expm(-0.5j * gen)


def apply_local_rotation(h: Hamiltonian, rotations) -> Hamiltonian:
    """Rotate every site's Pauli axes by an SO(3) matrix.

    Each letter sigma^g on site i is replaced by sum_d O_i[d, g] sigma^d, so
    fields transform as O h and couplings as O J O^T.  The result is
    unitarily equivalent to ``h``.

    Args:
        h: Hamiltonian to transform.
        rotations: A single 3x3 matrix applied uniformly, or a sequence of N.

    Returns:
        The rotated Hamiltonian.
    """
    arr = np.asarray(rotations, dtype=float)
    n = h.n_qubits
    if arr.ndim == 2:
        mats = [_check_rotation(arr)] * n
    elif arr.ndim == 3 and arr.shape[0] == n:
        mats = [_check_rotation(a) for a in arr]
    else:
        raise PreconditionError("rotations must be one 3x3 matrix or one per site")
    col = {p: k for k, p in enumerate(PAULI_LETTERS)}
    acc: dict[tuple, float] = {}
    for t in h.terms:
        sites = [s for s, _ in t.ops]
        choices = [[(PAULI_LETTERS[d], mats[s][d, col[p]]) for d in range(3)
                    if abs(mats[s][d, col[p]]) > 1e-15] for s, p in t.ops]
        for combo in itertools.product(*choices):
            c = t.coefficient * math.prod(w for _, w in combo)
            key = tuple(zip(sites, (p for p, _ in combo)))
            acc[key] = acc.get(key, 0.0) + c
    scale = max(abs(t.coefficient) for t in h.terms) if h.terms else 1.0
    terms = []
    for key, c in acc.items():
        if abs(c) <= 1e-12 * scale:
            continue
        if sum(p == "Y" for _, p in key) % 2:
            raise HamiltonianError("rotation produces a complex Hamiltonian (odd number of Y factors)")
        terms.append(PauliTerm(c, key))
    return Hamiltonian(n, terms)


def apply_pauli_frame(h: Hamiltonian, axis: str, sites: Iterable[int]) -> Hamiltonian:
    """Conjugate ``h`` by a product of X or Z operators on ``sites``.

    A Z frame flips the sign of terms with an odd number of X/Y letters on
    the frame sites; an X frame does the same for Z/Y letters.
    """
    axis = axis.upper()
    if axis not in ("X", "Z"):
        raise PreconditionError(f"frame axis must be X or Z, got {axis!r}")
    s = {int(i) for i in sites}
    if any(i < 0 or i >= h.n_qubits for i in s):
        raise HamiltonianError(f"frame sites {sorted(s)} out of range for N={h.n_qubits}")
    flips = {"Z": "XY", "X": "ZY"}[axis]
    terms = []
    for t in h.terms:
        odd = sum(1 for site, p in t.ops if site in s and p in flips) % 2
        terms.append(PauliTerm(-t.coefficient if odd else t.coefficient, t.ops))
    return Hamiltonian(h.n_qubits, terms)


def frame_operator(n: int, axis: str, sites: Iterable[int]) -> np.ndarray:
    """Dense product of X or Z on ``sites`` (diagonal for Z)."""
    s = set(sites)
    out = np.ones((1, 1))
    for i in range(n):
        out = np.kron(out, _PAULI[axis.upper()].real if i in s else np.eye(2))
    return out


def is_stoquastic(h: Hamiltonian | np.ndarray, tol: float = 1e-12) -> bool:
    """True iff every off-diagonal matrix element is <= ``tol``."""
    mat = h.dense() if isinstance(h, Hamiltonian) else np.asarray(h)
    off = mat - np.diag(np.diag(mat))
    return bool(np.all(off <= tol))


def product_operator(n: int, ops: Mapping[int, np.ndarray]) -> np.ndarray:
    """Kronecker product with ``ops[i]`` on site i and identity elsewhere."""
    out = np.ones((1, 1))
    for i in range(n):
        out = np.kron(out, ops.get(i, np.eye(2)))
    return out
