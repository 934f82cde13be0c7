"""Infinite-width NTK and CK of fully connected networks on spin inputs.

Both kernels depend on a pair of configurations only through the dot
product sigma . sigma' = N - 2d (d the Hamming distance), so they are stored
as tables over d = 0..N.  They are diagonal in the X-product basis, with
eigenvalues that depend only on the number of minus signs |s|.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.linalg import hadamard
from scipy.special import comb, expit

from .exceptions import KernelConstructionError, PreconditionError
from .pauli import MAX_QUBITS

ACTIVATIONS = ("relu", "erf", "tanh", "sigmoid", "linear")
KERNELS = ("ntk", "ck")
_GH_POINTS = 64


@dataclass(frozen=True)
class KernelSpec:
    """Architecture of a fully connected scalar-output network.

    Args:
        depth: Number of hidden layers L >= 1.
        activation: One of ``relu``, ``erf``, ``tanh``, ``sigmoid``, ``linear``.
        weight_variance: sigma_w^2 multiplying every layer after the first.
        bias_variance: Squared bias multiplier beta^2.
        zero_bias_init: Biases start at zero, so they enter the NTK through
            their gradients but leave the output covariance untouched.
    """

    depth: int = 1
    activation: str = "relu"
    weight_variance: float = 1.0
    bias_variance: float = 1.0
    zero_bias_init: bool = True

    def __post_init__(self):
        if int(self.depth) != self.depth or self.depth < 1:
            raise PreconditionError(f"depth must be an integer >= 1, got {self.depth!r}")
        if self.activation not in ACTIVATIONS:
            raise PreconditionError(f"unknown activation {self.activation!r}; expected one of {ACTIVATIONS}")
        if not self.weight_variance > 0:
            raise PreconditionError("weight_variance must be positive")
        if not self.bias_variance >= 0:
            raise PreconditionError("bias_variance must be nonnegative")

    @property
    def ck_bias(self) -> float:
        return 0.0 if self.zero_bias_init else float(self.bias_variance)


@dataclass(frozen=True)
class SectorSpectrum:
    """The N+1 distinct kernel eigenvalues, indexed by |s|."""

    eigenvalues: np.ndarray
    which_kernel: str = "ntk"

    @property
    def n_qubits(self) -> int:
        return self.eigenvalues.size - 1

    @property
    def multiplicities(self) -> np.ndarray:
        n = self.n_qubits
        return np.array([math.comb(n, m) for m in range(n + 1)])

    @property
    def min(self) -> float:
        return float(self.eigenvalues.min())

    @property
    def max(self) -> float:
        return float(self.eigenvalues.max())

    def per_state(self) -> np.ndarray:
        """Eigenvalue of each Hadamard column (length 2^N)."""
        return self.eigenvalues[sector_index(self.n_qubits)]


@dataclass(frozen=True)
class KernelFn:
    """Kernel profiles Phi (NTK) and F (CK) tabulated by Hamming distance.

    Entry ``d`` of each table is the kernel at dot product N - 2d.
    """

    n_qubits: int
    phi_ntk: np.ndarray
    f_ck: np.ndarray
    spec: KernelSpec | None = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("phi_ntk", "f_ck"):
            tab = np.asarray(getattr(self, name), dtype=float)
            if tab.shape != (self.n_qubits + 1,):
                raise KernelConstructionError(f"{name} must have N+1 = {self.n_qubits + 1} entries")
            object.__setattr__(self, name, tab)

    @property
    def dots(self) -> np.ndarray:
        return np.arange(self.n_qubits, -self.n_qubits - 1, -2)

    def table(self, which: str = "ntk") -> np.ndarray:
        if which not in KERNELS:
            raise PreconditionError(f"which must be 'ntk' or 'ck', got {which!r}")
        return self.phi_ntk if which == "ntk" else self.f_ck

    def sectors(self, which: str = "ntk") -> SectorSpectrum:
        return sector_eigenvalues(self, which)

    def dense(self, which: str = "ntk") -> np.ndarray:
        return dense_kernel(self, which)

    def function(self, f: Callable[[np.ndarray], np.ndarray], which: str = "ntk") -> np.ndarray:
        """Dense matrix f(kernel) built from the sector decomposition."""
        return sector_function(self.sectors(which), f)

    def scaled(self, factor: float) -> "KernelFn":
        return KernelFn(self.n_qubits, self.phi_ntk * factor, self.f_ck * factor, self.spec)


# ------------------------------------------------------------ dual activations

@lru_cache(maxsize=1)
def _gauss_hermite():
    x, w = hermegauss(_GH_POINTS)
    return x, w / math.sqrt(2.0 * math.pi)


def _act(kind: str):
    if kind == "tanh":
        return np.tanh, lambda u: 1.0 - np.tanh(u) ** 2
    if kind == "sigmoid":
        return expit, lambda u: expit(u) * (1.0 - expit(u))
    raise PreconditionError(f"no quadrature rule for {kind!r}")


def dual_activation(kind: str, q: float, c) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian expectations of an activation and of its derivative.

    For (u, v) jointly normal with Var u = Var v = q and Cov(u, v) = c,
    returns E[phi(u) phi(v)] and E[phi'(u) phi'(v)].

    Args:
        kind: Activation name.
        q: Common variance, > 0.
        c: Covariance, scalar or array with |c| <= q.
    """
    q = float(q)
    c = np.asarray(c, dtype=float)
    if not q > 0:
        raise PreconditionError(f"variance q must be positive, got {q}")
    if np.any(np.abs(c) > q * (1 + 1e-12)):
        raise PreconditionError("invalid Gram: |c| exceeds q")
    c = np.clip(c, -q, q)
    if kind == "linear":
        return c.copy(), np.ones_like(c)
    if kind == "relu":
        th = np.arccos(np.clip(c / q, -1.0, 1.0))
        e = q / (2 * np.pi) * (np.sin(th) + (np.pi - th) * np.cos(th))
        return e, (np.pi - th) / (2 * np.pi)
    if kind == "erf":
        s = 1.0 + 2.0 * q
        e = 2.0 / np.pi * np.arcsin(2.0 * c / s)
        d = 4.0 / (np.pi * np.sqrt(np.maximum(s * s - 4.0 * c * c, 1e-300)))
        return e, d
    if kind not in ACTIVATIONS:
        raise PreconditionError(f"unknown activation {kind!r}")
    phi, dphi = _act(kind)
    x, w = _gauss_hermite()
    z1, z2 = x[:, None], x[None, :]
    ww = w[:, None] * w[None, :]
    flat = c.reshape(-1)
    e = np.empty_like(flat)
    d = np.empty_like(flat)
    sq = math.sqrt(q)
    for k, ck in enumerate(flat):
        u = sq * z1
        v = (ck / sq) * z1 + math.sqrt(max(q - ck * ck / q, 0.0)) * z2
        e[k] = np.sum(ww * phi(u) * phi(v))
        d[k] = np.sum(ww * dphi(u) * dphi(v))
    return e.reshape(c.shape), d.reshape(c.shape)


def kernel_tables(spec: KernelSpec, n: int) -> KernelFn:
    """Run the layer recursion for both kernels at the N+1 dot products.

    The first layer sees the unit-variance Gram sigma . sigma' / N; every
    later layer multiplies by sigma_w^2.  Bias gradients add beta^2 per
    layer to the NTK.
    """
    if int(n) != n or n < 1:
        raise PreconditionError(f"n must be a positive integer, got {n!r}")
    t = np.arange(n, -n - 1, -2) / n
    sw2, nb, cb = spec.weight_variance, spec.bias_variance, spec.ck_bias
    sigma = t + cb
    theta = t + nb
    for _ in range(spec.depth):
        e, d = dual_activation(spec.activation, sigma[0], sigma)
        theta = sw2 * e + nb + sw2 * d * theta
        sigma = sw2 * e + cb
    return KernelFn(int(n), theta, sigma, spec)


# ------------------------------------------------------------ sector structure

@lru_cache(maxsize=32)
def krawtchouk_matrix(n: int) -> np.ndarray:
    """Integer matrix K[m, d] = sum_j (-1)^j C(m, j) C(n-m, d-j)."""
    out = np.zeros((n + 1, n + 1), dtype=np.int64)
    for m in range(n + 1):
        for d in range(n + 1):
            out[m, d] = sum((-1) ** j * math.comb(m, j) * math.comb(n - m, d - j)
                            for j in range(max(0, d - n + m), min(m, d) + 1))
    out.setflags(write=False)
    return out


@lru_cache(maxsize=32)
def sector_index(n: int) -> np.ndarray:
    """|s| for each Hadamard column index."""
    out = np.bitwise_count(np.arange(2 ** n, dtype=np.int64)).astype(np.int64)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=16)
def hadamard_matrix(n: int) -> np.ndarray:
    """Orthonormal Walsh-Hadamard matrix; column j is the X-product state with
    minus signs on the set bits of j."""
    _guard(n)
    out = hadamard(2 ** n).astype(float) / 2 ** (n / 2)
    out.setflags(write=False)
    return out


def _guard(n: int):
    if n > MAX_QUBITS:
        raise PreconditionError(f"N={n} exceeds the dense limit of {MAX_QUBITS}")


def sector_eigenvalues(k: KernelFn, which: str = "ntk") -> SectorSpectrum:
    """Sector eigenvalues by the Krawtchouk character sum.

    Sums are accumulated with ``math.fsum`` so cancellations between terms
    of opposite sign do not lose precision.
    """
    tab = k.table(which)
    kr = krawtchouk_matrix(k.n_qubits)
    lam = np.array([math.fsum(float(kr[m, d]) * tab[d] for d in range(k.n_qubits + 1))
                    for m in range(k.n_qubits + 1)])
    return SectorSpectrum(lam, which)


def kernel_from_sectors(eigenvalues, spec: KernelSpec | None = None,
                        ck_eigenvalues=None) -> KernelFn:
    """Inverse of ``sector_eigenvalues``: build tables with a given spectrum."""
    lam = np.asarray(eigenvalues, dtype=float)
    n = lam.size - 1
    kr = krawtchouk_matrix(n).astype(float)
    # K @ K = 2^N I for the Krawtchouk matrix
    ntk = kr @ lam / 2 ** n
    ck = ntk if ck_eigenvalues is None else kr @ np.asarray(ck_eigenvalues, float) / 2 ** n
    return KernelFn(n, ntk, ck, spec)


def hamming_matrix(n: int) -> np.ndarray:
    _guard(n)
    idx = np.arange(2 ** n, dtype=np.int64)
    return np.bitwise_count(idx[:, None] ^ idx[None, :]).astype(np.int64)


def dense_kernel(k: KernelFn, which: str = "ntk") -> np.ndarray:
    """2^N x 2^N kernel matrix with entry Phi(sigma . sigma') (or F)."""
    return k.table(which)[hamming_matrix(k.n_qubits)]


def hadamard_diagonalize(mat: np.ndarray) -> np.ndarray:
    """Conjugate a dense matrix into the X-product basis."""
    n = int(round(math.log2(mat.shape[0])))
    hd = hadamard_matrix(n)
    return hd @ mat @ hd


def sector_function(s: SectorSpectrum, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Dense f(kernel) = H diag(f(lambda_|s|)) H."""
    hd = hadamard_matrix(s.n_qubits)
    vals = np.asarray(f(s.eigenvalues), dtype=float)[sector_index(s.n_qubits)]
    return (hd * vals) @ hd


def sector_means(mat: np.ndarray) -> np.ndarray:
    """Average diagonal element of H mat H within each sector.

    For an exact kernel this returns its sector eigenvalues; for a noisy
    estimate it is the natural sector-resolved estimator.
    """
    n = int(round(math.log2(mat.shape[0])))
    diag = np.diag(hadamard_diagonalize(mat))
    idx = sector_index(n)
    return np.bincount(idx, weights=diag) / np.bincount(idx)


# ------------------------------------------------------------ weak bias

@dataclass
class WeakBiasReport:
    """Outcome of the even/odd sector-ordering check."""

    even_ok: bool
    odd_ok: bool
    top_sector: int
    bias_ratio: float
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.even_ok and self.odd_ok


def weak_bias_check(s: SectorSpectrum, tol: float = 1e-12, strict: bool = True) -> WeakBiasReport:
    """Check lambda_0 >= lambda_2 >= ... and lambda_1 >= lambda_3 >= ...

    Args:
        s: Sector spectrum.
        tol: Allowed violation relative to the largest eigenvalue.
        strict: Raise KernelConstructionError on a violation instead of
            only reporting it.
    """
    lam = s.eigenvalues
    scale = max(float(np.max(np.abs(lam))), 1e-300)
    bad = [(m, m + 2) for m in range(lam.size - 2) if lam[m + 2] - lam[m] > tol * scale]
    even_ok = not any(m % 2 == 0 for m, _ in bad)
    odd_ok = not any(m % 2 == 1 for m, _ in bad)
    uniq = np.unique(np.round(lam / scale, 12))[::-1]
    ratio = float(uniq[0] / uniq[1]) if uniq.size > 1 and uniq[1] > 0 else math.inf
    rep = WeakBiasReport(even_ok, odd_ok, int(np.argmax(lam)), ratio, bad)
    if strict and not rep.ok:
        raise KernelConstructionError(f"weak-bias ordering violated at sector pairs {bad}")
    return rep


def normalize_operator_norm(mat: np.ndarray) -> np.ndarray:
    """Scale a symmetric PSD matrix to unit operator norm."""
    return mat / np.linalg.eigvalsh(mat)[-1]


def write_kernel_csv(k: KernelFn, path) -> None:
    """Export the tables as (dot, phi_ntk, f_ck) rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dot", "phi_ntk", "f_ck"])
        for dot, a, b in zip(k.dots, k.phi_ntk, k.f_ck):
            w.writerow([int(dot), repr(float(a)), repr(float(b))])
