"""Random periodic matrix product states.

Amplitudes are ``psi_s = Tr(A_0^{s_0} A_1^{s_1} ... A_{n-1}^{s_{n-1}})`` with
site 0 the most significant bit and bit 0 meaning spin +1, as in
:mod:`signbias.pauli`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed
from scipy import stats

from .exceptions import PreconditionError

DISTRIBUTIONS = ("normal", "orthogonal", "shared", "asymmetric")
MAX_SITES = 12
MIN_POWERED_SAMPLES = 10_000


@dataclass
class MpsState:
    """Periodic MPS with real tensors of shape ``(n_sites, 2, chi, chi)``."""

    tensors: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.tensors, dtype=float)
        if t.ndim != 4 or t.shape[1] != 2 or t.shape[2] != t.shape[3] or t.shape[2] < 1:
            raise PreconditionError(f"tensors must have shape (n, 2, chi, chi), got {t.shape}")
        if not np.all(np.isfinite(t)):
            raise PreconditionError("MPS tensors must be finite")
        self.tensors = t

    @property
    def n_sites(self) -> int:
        return self.tensors.shape[0]

    @property
    def bond_dim(self) -> int:
        return self.tensors.shape[2]

    def amplitudes(self) -> np.ndarray:
        return mps_amplitudes(self.tensors)

    def rotated(self, u: np.ndarray, sites=None) -> "MpsState":
        """Apply ``A^{s} -> sum_t U[s, t] A^{t}`` on the given sites (all by default)."""
        u = _check_orthogonal(u)
        t = self.tensors.copy()
        for i in range(self.n_sites) if sites is None else sites:
            t[i] = np.einsum("st,tab->sab", u, t[i])
        return MpsState(t)


def mps_amplitudes(tensors: np.ndarray) -> np.ndarray:
    """Amplitude vector of one or many periodic MPS.

    Args:
        tensors: Array of shape ``(n, 2, chi, chi)`` or a batch
            ``(m, n, 2, chi, chi)``.

    Returns:
        Array of shape ``(2**n,)`` or ``(m, 2**n)``.
    """
    t = np.asarray(tensors, dtype=float)
    single = t.ndim == 4
    if single:
        t = t[None]
    m, n = t.shape[:2]
    if n > MAX_SITES:
        raise PreconditionError(f"n={n} exceeds the dense limit {MAX_SITES}")
    # prod[b, c] holds the matrix product over the first k sites for prefix c
    prod = t[:, 0]
    for i in range(1, n):
        prod = np.einsum("bcij,bsjk->bcsik", prod, t[:, i]).reshape(m, -1, *prod.shape[-2:])
    psi = np.trace(prod, axis1=-2, axis2=-1)
    return psi[0] if single else psi


def _draw_tensors(rng: np.random.Generator, m: int, n: int, chi: int, dist: str,
                  std: float, asymmetry: float) -> np.ndarray:
    if dist == "normal":
        return std * rng.standard_normal((m, n, 2, chi, chi))
    if dist == "shared":
        a = std * rng.standard_normal((m, n, 1, chi, chi))
        return np.repeat(a, 2, axis=2)
    if dist == "asymmetric":
        t = std * rng.standard_normal((m, n, 2, chi, chi))
        t[:, :, 1] *= asymmetry
        return t
    if dist == "orthogonal":
        # Haar isometry of shape (2 chi, chi): sum_s A^s.T A^s = I, invariant
        # under orthogonal mixing of the physical index.
        g = rng.standard_normal((m, n, 2 * chi, chi))
        q, r = np.linalg.qr(g)
        q = q * np.sign(np.diagonal(r, axis1=-2, axis2=-1))[..., None, :]
        return std * np.sqrt(chi) * q.reshape(m, n, 2, chi, chi)
    raise PreconditionError(f"unknown distribution {dist!r}; expected one of {DISTRIBUTIONS}")


def _check_args(n: int, chi: int) -> None:
    if not 1 <= n <= MAX_SITES:
        raise PreconditionError(f"n must be in [1, {MAX_SITES}], got {n}")
    if chi < 1:
        raise PreconditionError(f"bond dimension must be >= 1, got {chi}")


def sample_mps(n: int, chi: int, dist: str = "normal", seed=0, std: float = 1.0,
               asymmetry: float = 2.0) -> tuple[MpsState, np.ndarray]:
    """Draw one random MPS and its amplitude vector.

    Args:
        n: Number of sites.
        chi: Bond dimension.
        dist: ``normal`` (i.i.d. entries), ``orthogonal`` (Haar isometric
            site tensors), or the negative controls ``shared`` (``A^+ = A^-``)
            and ``asymmetric`` (``A^-`` has ``asymmetry`` times the std).
        seed: Seed or seed sequence for ``numpy.random.default_rng``.
        std: Entry standard deviation.
        asymmetry: Std ratio used by ``asymmetric``.

    Returns:
        ``(state, psi)``.
    """
    _check_args(n, chi)
    t = _draw_tensors(np.random.default_rng(seed), 1, n, chi, dist, std, asymmetry)[0]
    state = MpsState(t)
    return state, state.amplitudes()


def sample_amplitudes(n: int, chi: int, n_samples: int, dist: str = "normal", seed: int = 0,
                      chunk: int = 4096, n_jobs: int = 1, **kw) -> np.ndarray:
    """Amplitude vectors of ``n_samples`` independent MPS, shape ``(n_samples, 2**n)``.

    Chunk ``i`` uses ``default_rng([seed, i])``, so the result does not depend
    on ``n_jobs``.
    """
    _check_args(n, chi)
    sizes = [min(chunk, n_samples - s) for s in range(0, n_samples, chunk)]

    def work(idx, m):
        rng = np.random.default_rng([seed, idx])
        return mps_amplitudes(_draw_tensors(rng, m, n, chi, dist, kw.get("std", 1.0),
                                            kw.get("asymmetry", 2.0)))

    parts = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(work)(i, m) for i, m in enumerate(sizes))
    return np.concatenate(parts, axis=0) if parts else np.zeros((0, 2 ** n))


def dense_contraction(tensors: np.ndarray) -> np.ndarray:
    """Reference amplitudes by explicit per-configuration matrix products."""
    t = np.asarray(tensors, dtype=float)
    n, chi = t.shape[0], t.shape[2]
    out = np.empty(2 ** n)
    for c in range(2 ** n):
        m = np.eye(chi)
        for i in range(n):
            m = m @ t[i, (c >> (n - 1 - i)) & 1]
        out[c] = np.trace(m)
    return out


@dataclass
class CovarianceReport:
    """Empirical covariance of MPS amplitudes with a delta-structure test."""

    covariance: np.ndarray
    std_error: np.ndarray
    n_samples: int
    max_offdiag_z: float
    max_diag_z: float
    n_sigma: float
    underpowered: bool

    @property
    def offdiag_ok(self) -> bool:
        return self.max_offdiag_z <= self.n_sigma

    @property
    def diag_ok(self) -> bool:
        return self.max_diag_z <= self.n_sigma

    @property
    def passed(self) -> bool:
        return self.offdiag_ok and self.diag_ok

    def to_csv(self, path) -> None:
        dim = self.covariance.shape[0]
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["row", "col", "covariance", "std_error"])
            for i in range(dim):
                for j in range(dim):
                    w.writerow([i, j, repr(float(self.covariance[i, j])),
                                repr(float(self.std_error[i, j]))])


def covariance_test(psi: np.ndarray, n_sigma: float = 4.0) -> CovarianceReport:
    """Test ``E[psi_s psi_t]`` for zero off-diagonal and a constant diagonal.

    Off-diagonal entries are compared to zero and diagonal entries to their
    common mean, each in units of its own standard error.

    Args:
        psi: Samples, shape ``(n_samples, dim)``.
        n_sigma: Rejection threshold in standard errors.
    """
    m, dim = psi.shape
    if m < 2:
        raise PreconditionError("need at least two samples")
    cov = psi.T @ psi / m
    sq = psi ** 2
    second = (sq.T @ sq) / m
    se = np.sqrt(np.maximum(second - cov ** 2, 0.0) / (m - 1))
    off = ~np.eye(dim, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        z_off = np.where(off, np.abs(cov) / se, 0.0)
    max_off = float(np.nanmax(np.where(np.isfinite(z_off), z_off, np.inf))) if dim > 1 else 0.0
    # diagonal minus the diagonal mean, per sample, keeps the cross-correlations in the error
    dev = sq - sq.mean(axis=1, keepdims=True)
    d_mean = dev.mean(axis=0)
    d_se = dev.std(axis=0, ddof=1) / np.sqrt(m)
    with np.errstate(divide="ignore", invalid="ignore"):
        z_diag = np.where(d_se > 0, np.abs(d_mean) / d_se, np.where(np.abs(d_mean) > 0, np.inf, 0.0))
    return CovarianceReport(cov, se, m, max_off, float(np.max(z_diag)), n_sigma,
                            m < MIN_POWERED_SAMPLES)


def mps_empirical_ck(n: int, chi: int, n_samples: int = 100_000, dist: str = "normal",
                     seed: int = 0, n_sigma: float = 4.0, n_jobs: int = 1, **kw) -> CovarianceReport:
    """Monte Carlo conjugate kernel of a random MPS ensemble.

    Args:
        n: Number of sites.
        chi: Bond dimension.
        n_samples: Number of independent states.
        dist: Tensor distribution, see :func:`sample_mps`.
        seed: Base seed.
        n_sigma: Threshold of the diagonality test.
        n_jobs: Worker threads.
        **kw: ``std`` and ``asymmetry`` forwarded to the sampler.

    Returns:
        A :class:`CovarianceReport`; ``underpowered`` flags budgets below 1e4.
    """
    psi = sample_amplitudes(n, chi, n_samples, dist, seed, n_jobs=n_jobs, **kw)
    return covariance_test(psi, n_sigma)


def _check_orthogonal(u, tol: float = 1e-10) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (2, 2) or not np.allclose(u @ u.T, np.eye(2), atol=tol):
        raise PreconditionError("U must be a real orthogonal 2x2 matrix")
    return u


def _kron_power(u: np.ndarray, n: int) -> np.ndarray:
    out = np.ones((1, 1))
    for _ in range(n):
        out = np.kron(out, u)
    return out


def _moments(psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample second moments (upper triangle) and fourth powers."""
    iu = np.triu_indices(psi.shape[1])
    return psi[:, iu[0]] * psi[:, iu[1]], psi ** 4


def _two_sample_z(a: np.ndarray, b: np.ndarray) -> float:
    diff = a.mean(axis=0) - b.mean(axis=0)
    se = np.sqrt(a.var(axis=0, ddof=1) / len(a) + b.var(axis=0, ddof=1) / len(b))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, np.abs(diff) / se, np.where(np.abs(diff) > 0, np.inf, 0.0))
    return float(np.max(z))


@dataclass
class InvarianceReport:
    """Exact and statistical checks of local rotation invariance."""

    exact_error: float
    exact_ok: bool
    max_z_second: float
    max_z_fourth: float
    n_samples: int
    n_sigma: float

    @property
    def statistical_ok(self) -> bool:
        return max(self.max_z_second, self.max_z_fourth) <= self.n_sigma

    @property
    def passed(self) -> bool:
        return self.exact_ok and self.statistical_ok


def mps_local_invariance(n: int, chi: int, u, n_samples: int = 100_000, dist: str = "normal",
                         seed: int = 0, n_sigma: float = 4.0, exact_tol: float = 1e-12,
                         n_jobs: int = 1, **kw) -> InvarianceReport:
    """Check that a single-site rotation on every site preserves the ensemble.

    The exact part rotates the tensors of one sampled MPS and compares its
    amplitudes with ``U^{(x)n} psi``. The statistical part compares second
    and fourth moments of ``psi`` with those of ``U^{(x)n} psi'`` drawn from an
    independent stream, using two-sample z-scores.

    Args:
        n: Number of sites.
        chi: Bond dimension.
        u: Real orthogonal 2x2 matrix.
        n_samples: Samples per ensemble.
        dist: Tensor distribution, see :func:`sample_mps`.
        seed: Base seed; the rotated ensemble uses ``seed + 1``.
        n_sigma: Threshold on the largest z-score.
        exact_tol: Tolerance of the amplitude-level check, relative to the
            largest amplitude.
        n_jobs: Worker threads.
        **kw: ``std`` and ``asymmetry`` forwarded to the sampler.
    """
    u = _check_orthogonal(u)
    big_u = _kron_power(u, n)
    state, psi = sample_mps(n, chi, dist, [seed, 2 ** 31], **kw)
    rotated = state.rotated(u).amplitudes()
    err = float(np.max(np.abs(rotated - big_u @ psi)) / max(np.max(np.abs(psi)), 1e-300))

    a = sample_amplitudes(n, chi, n_samples, dist, seed, n_jobs=n_jobs, **kw)
    b = sample_amplitudes(n, chi, n_samples, dist, seed + 1, n_jobs=n_jobs, **kw) @ big_u.T
    a2, a4 = _moments(a)
    b2, b4 = _moments(b)
    return InvarianceReport(err, err <= exact_tol, _two_sample_z(a2, b2), _two_sample_z(a4, b4),
                            n_samples, n_sigma)


def marginal_normality(n: int, chi: int, n_samples: int = 20_000, dist: str = "normal",
                       seed: int = 0) -> tuple[float, float]:
    """D'Agostino-Pearson statistic and p-value of the all-up amplitude marginal."""
    psi = sample_amplitudes(n, chi, n_samples, dist, seed)[:, 0]
    res = stats.normaltest(psi)
    return float(res.statistic), float(res.pvalue)
