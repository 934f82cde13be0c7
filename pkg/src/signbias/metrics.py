"""Kernel/Hamiltonian compatibility metrics, initialization statistics and
basis scans.

M(H, Theta) = <g|Theta|g> / ||Theta||, N(H, Theta) = Tr(H Theta) after the
shift Tr(H) = 0 and the scale ||H||_F = ||Theta||_F, M(H, K) = <g|K|g> / Tr K
and N(H, K) = Tr((H - E_g) K) / Tr K.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import spearmanr

from .exceptions import NotPositiveDefiniteError, PreconditionError
from .flow import (FlowConfig, KernelOperator, convergence_time, integrate_flow, kernel_matrix,
                   spectral_data)
from .kernels import KernelFn, hadamard_matrix
from .pauli import (Hamiltonian, PauliTerm, apply_local_rotation, apply_pauli_frame, is_stoquastic,
                    local_unitary, product_operator, xz_rotation)

SCAN_COLUMNS = ("theta", "m_theta", "n_theta", "m_k", "n_k", "t_overlap", "t_energy")


# ------------------------------------------------------------ metrics

@dataclass
class MetricsReport:
    """The four compatibility metrics for one Hamiltonian and kernel pair."""

    m_theta: float
    n_theta: float
    m_k: float
    n_k: float
    ground_degeneracy: int = 1
    n_theta_normalized: bool = True
    theta_id: str = "dense"
    k_id: str = "dense"

    def as_dict(self) -> dict:
        return asdict(self)


def _kernel_id(x, which: str) -> str:
    if isinstance(x, KernelFn):
        s = x.spec
        return f"{which}:{s.activation}-L{s.depth}"
    return "dense"


def _op_norm(x, which: str) -> float:
    if isinstance(x, KernelFn):
        return x.sectors(which).max
    return float(np.max(np.abs(np.linalg.eigvalsh(kernel_matrix(x)))))


def _trace_product(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.real(np.sum(a * b.T)))


def m_theta(hmat, spec, theta) -> float:
    """Ground-space average of Theta relative to its operator norm."""
    tm = kernel_matrix(theta, "ntk")
    p = spec.ground_projector
    return _trace_product(p, tm) / (spec.degeneracy * _op_norm(theta, "ntk"))


def n_theta(hmat, theta) -> float:
    """Tr(H Theta) with H shifted to zero trace and Theta scaled to ||H||_F."""
    tm = kernel_matrix(theta, "ntk")
    dim = hmat.shape[0]
    h0 = hmat - np.trace(hmat).real / dim * np.eye(dim)
    hf = np.linalg.norm(h0)
    if hf == 0:
        return 0.0
    return float(_trace_product(h0, tm) * hf / np.linalg.norm(tm))


def m_k(hmat, spec, k) -> float:
    """Expected initial ground-space weight in the large-N approximation."""
    km = kernel_matrix(k, "ck")
    return _trace_product(spec.ground_projector, km) / float(np.trace(km))


def n_k(hmat, spec, k) -> float:
    """Expected initial energy excess in the large-N approximation."""
    km = kernel_matrix(k, "ck")
    return _trace_product(hmat, km) / float(np.trace(km)) - spec.ground_energy


def compute_metrics(h, theta, k=None, allow_degenerate: bool = False) -> MetricsReport:
    """Evaluate M and N for the NTK ``theta`` and the CK ``k``.

    Args:
        h: Hamiltonian or Hermitian matrix.
        theta: NTK as a KernelFn or a dense matrix.
        k: CK as a KernelFn or dense matrix.  Defaults to the CK of
            ``theta`` when that is a KernelFn.
        allow_degenerate: Use the ground projector when the ground level is
            degenerate; M(H, Theta) then averages over the ground space.
    """
    if k is None:
        if not isinstance(theta, KernelFn):
            raise PreconditionError("a CK is required when theta is a dense matrix")
        k = theta
    hmat, spec = spectral_data(h, allow_degenerate)
    return MetricsReport(
        m_theta=m_theta(hmat, spec, theta), n_theta=n_theta(hmat, theta),
        m_k=m_k(hmat, spec, k), n_k=n_k(hmat, spec, k), ground_degeneracy=spec.degeneracy,
        theta_id=_kernel_id(theta, "ntk"), k_id=_kernel_id(k, "ck"))


# ------------------------------------------------------------ initialization statistics

@dataclass
class InitStatistics:
    """Monte-Carlo averages over psi_0 ~ N(0, K) and their predictions."""

    mean_energy: float
    energy_error: float
    mean_overlap: float
    overlap_error: float
    n_samples: int
    predicted_energy: float
    predicted_overlap: float
    lemma_band: float
    energy_consistent: bool
    overlap_consistent: bool


def jackknife_error(x: np.ndarray) -> float:
    """Delete-one jackknife standard error of the mean."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 2:
        return math.inf
    loo = (x.sum() - x) / (n - 1)
    return float(math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2)))


def lemma_band(n_qubits: int) -> float:
    """(1 + 2^{-N/2})^N - 1, the large-N error scale of the ratio averages."""
    return float((1.0 + 2.0 ** (-n_qubits / 2)) ** n_qubits - 1.0)


def covariance_root(k, psd_tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvectors and square-root eigenvalues of a CK.

    Analytic kernels use the exact sector decomposition.  Zero eigenvalues
    are allowed (the ReLU CK without bias is singular); eigenvalues below
    ``-psd_tol * max`` are rejected.
    """
    if isinstance(k, KernelFn):
        vecs = hadamard_matrix(k.n_qubits)
        vals = k.sectors("ck").per_state()
    else:
        km = kernel_matrix(k)
        if np.max(np.abs(km - km.T)) > 1e-10 * max(1.0, np.max(np.abs(km))):
            raise NotPositiveDefiniteError("covariance is not symmetric")
        vals, vecs = np.linalg.eigh(km)
    top = float(np.max(vals))
    if not top > 0 or float(np.min(vals)) < -psd_tol * top:
        raise NotPositiveDefiniteError(f"covariance is not positive semidefinite "
                                       f"(min eigenvalue {np.min(vals):.3e})")
    return vecs, np.sqrt(np.clip(vals, 0.0, None))


def sample_states(k, n_samples: int, seed: int = 0, chunk: int = 256) -> np.ndarray:
    """Draw psi ~ N(0, K) as columns, one RNG stream per chunk."""
    vecs, root = covariance_root(k)
    out = []
    for idx, start in enumerate(range(0, n_samples, chunk)):
        m = min(chunk, n_samples - start)
        z = np.random.default_rng([seed, idx]).standard_normal((root.size, m))
        out.append(vecs @ (root[:, None] * z))
    return np.concatenate(out, axis=1)


def _chunk_stats(hmat, spec, vecs, root, seed, idx, m):
    z = np.random.default_rng([seed, idx]).standard_normal((root.size, m))
    psi = vecs @ (root[:, None] * z)
    nn = np.sum(psi * psi, axis=0)
    energy = np.sum(psi * (hmat @ psi), axis=0) / nn
    overlap = spec.ground_weight(psi) / nn
    return energy, overlap


def init_statistics(k, h, n_samples: int = 1000, seed: int = 0, chunk: int = 256,
                    n_jobs: int = 1, allow_degenerate: bool = False,
                    n_sigma: float = 3.0) -> InitStatistics:
    """Average initial energy and ground overlap over the CK distribution.

    Args:
        k: CK as a KernelFn or dense PSD matrix.
        h: Hamiltonian or Hermitian matrix.
        n_samples: Number of Gaussian draws.
        seed: Base seed; chunk i uses ``default_rng([seed, i])`` so results
            do not depend on ``n_jobs``.
        chunk: Samples per RNG stream.
        n_jobs: Worker threads.
        allow_degenerate: Average the ground-space weight instead of raising.
        n_sigma: Width of the sampling band in standard errors.

    Returns:
        Means with jackknife errors, the trace predictions and whether each
        mean lies within the large-N band plus ``n_sigma`` errors.
    """
    if n_samples < 2:
        raise PreconditionError("need at least two samples")
    hmat, spec = spectral_data(h, allow_degenerate)
    vecs, root = covariance_root(k)
    if vecs.shape[0] != hmat.shape[0]:
        raise PreconditionError("kernel and Hamiltonian dimensions differ")
    tasks = [(i, min(chunk, n_samples - s)) for i, s in enumerate(range(0, n_samples, chunk))]
    parts = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_chunk_stats)(hmat, spec, vecs, root, seed, i, m) for i, m in tasks)
    energy = np.concatenate([p[0] for p in parts])
    overlap = np.concatenate([p[1] for p in parts])
    km = vecs @ (root[:, None] ** 2 * vecs.T)
    pred_e = _trace_product(hmat, km) / float(np.trace(km))
    pred_o = _trace_product(spec.ground_projector, km) / float(np.trace(km))
    n = int(round(math.log2(hmat.shape[0])))
    band = lemma_band(n)
    width = float(spec.energies[-1] - spec.energies[0])
    e_err, o_err = jackknife_error(energy), jackknife_error(overlap)
    me, mo = float(energy.mean()), float(overlap.mean())
    return InitStatistics(
        mean_energy=me, energy_error=e_err, mean_overlap=mo, overlap_error=o_err,
        n_samples=int(n_samples), predicted_energy=pred_e, predicted_overlap=pred_o,
        lemma_band=band,
        energy_consistent=abs(me - pred_e) <= band * width + n_sigma * e_err,
        overlap_consistent=abs(mo - pred_o) <= band + n_sigma * o_err)


# ------------------------------------------------------------ basis scans

@dataclass
class BasisScan:
    """Metrics and convergence times along a uniform XZ-plane rotation."""

    theta: np.ndarray
    m_theta: np.ndarray
    n_theta: np.ndarray
    m_k: np.ndarray
    n_k: np.ndarray
    t_overlap: np.ndarray
    t_energy: np.ndarray
    traces: list = field(default_factory=list, repr=False)

    def column(self, name: str) -> np.ndarray:
        return getattr(self, name)

    def to_csv(self, path, normalize: bool = False) -> None:
        """Write one row per angle.

        With ``normalize`` every column except theta is min-max scaled to
        [0, 1] over its finite entries, and the header says so.
        """
        cols = {c: np.asarray(self.column(c), dtype=float) for c in SCAN_COLUMNS}
        if normalize:
            for c in SCAN_COLUMNS[1:]:
                cols[c] = minmax(cols[c])
        with open(path, "w", newline="") as fh:
            fh.write(f"# normalized={'minmax' if normalize else 'none'}\n")
            w = csv.writer(fh)
            w.writerow(SCAN_COLUMNS)
            for i in range(cols["theta"].size):
                w.writerow([repr(float(cols[c][i])) for c in SCAN_COLUMNS])


def minmax(x: np.ndarray) -> np.ndarray:
    """Scale finite entries to [0, 1]; constant series map to 0."""
    x = np.asarray(x, dtype=float)
    ok = np.isfinite(x)
    if not ok.any():
        return x.copy()
    lo, hi = x[ok].min(), x[ok].max()
    out = x.copy()
    out[ok] = 0.0 if hi == lo else (x[ok] - lo) / (hi - lo)
    return out


def uniform_rotation_unitary(n: int, theta: float) -> np.ndarray:
    """Dense U = u^{(x)N} implementing the uniform XZ rotation by ``theta``."""
    u = local_unitary(xz_rotation(theta))
    full = product_operator(n, {i: u for i in range(n)})
    return full.real if np.max(np.abs(full.imag)) < 1e-14 else full


def eigensum_state(h) -> np.ndarray:
    """sum_i |E_i> with the phase convention of the spectrum."""
    _, spec = spectral_data(h, allow_degenerate=True)
    return spec.vectors.sum(axis=1)


def _scan_point(h, kernel, th, psi_ref, cfg, run_flow, criterion_kw, keep_trace, psi0_mode,
                allow_degenerate):
    n = h.n_qubits
    ht = apply_local_rotation(h, xz_rotation(th))
    rep = compute_metrics(ht, kernel, allow_degenerate=allow_degenerate)
    t_ov = t_en = math.nan
    tr = None
    if run_flow:
        if psi0_mode == "transport":
            psi0 = uniform_rotation_unitary(n, th) @ psi_ref
        else:
            psi0 = eigensum_state(ht)
        tr = integrate_flow(ht, kernel, psi0, cfg, allow_degenerate)
        t_ov = convergence_time(tr, "overlap", **criterion_kw)
        t_en = convergence_time(tr, "energy", **criterion_kw)
    return rep, t_ov, t_en, (tr if keep_trace else None)


def basis_scan(h: Hamiltonian, kernel: KernelFn, thetas, run_flow: bool = True,
               cfg: FlowConfig | None = None, threshold: float = 0.95, C: float = 4.0,
               psi0_mode: str = "transport", n_jobs: int = 1,
               keep_traces: bool = False, allow_degenerate: bool = False) -> BasisScan:
    """Scan a uniform XZ-plane rotation of ``h``.

    For each angle the rotated Hamiltonian gets the four metrics and, with
    ``run_flow``, overlap and energy convergence times.  The default initial
    state is sum_i |E_i> of the unrotated model carried along by the
    rotation, so every angle starts from the same point in the energy
    eigenbasis.  ``psi0_mode="eigensum"`` rebuilds sum_i |E_i> per angle.

    Args:
        h: At most 2-local Hamiltonian.
        kernel: Analytic kernel (NTK drives the flow, CK enters M_K, N_K).
        thetas: Rotation angles.
        run_flow: Integrate the flow at each angle.
        cfg: Flow settings.
        threshold: Overlap threshold.
        C: Gap fraction for the energy criterion.
        psi0_mode: ``transport`` or ``eigensum``.
        n_jobs: Worker processes over angles.
        keep_traces: Keep each FlowTrace on the result.
        allow_degenerate: Track the ground-space weight for degenerate
            ground levels.
    """
    if h.locality > 2:
        raise PreconditionError("basis scans need an at most 2-local Hamiltonian")
    if psi0_mode not in ("transport", "eigensum"):
        raise PreconditionError(f"unknown psi0_mode {psi0_mode!r}")
    thetas = np.asarray(thetas, dtype=float)
    cfg = cfg or FlowConfig()
    psi_ref = eigensum_state(h)
    kw = {"threshold": threshold, "C": C}
    args = (psi_ref, cfg, run_flow, kw, keep_traces, psi0_mode, allow_degenerate)
    if n_jobs == 1:
        res = [_scan_point(h, kernel, th, *args) for th in thetas]
    else:
        res = Parallel(n_jobs=n_jobs)(delayed(_scan_point)(h, kernel, th, *args) for th in thetas)
    reps = [r[0] for r in res]
    return BasisScan(
        theta=thetas,
        m_theta=np.array([r.m_theta for r in reps]), n_theta=np.array([r.n_theta for r in reps]),
        m_k=np.array([r.m_k for r in reps]), n_k=np.array([r.n_k for r in reps]),
        t_overlap=np.array([r[1] for r in res]), t_energy=np.array([r[2] for r in res]),
        traces=[r[3] for r in res] if keep_traces else [])


# ------------------------------------------------------------ TFIM closed form

@dataclass
class TFIMClosedForm:
    """Tr(H~ K) for the uniformly rotated TFIM and its minimizers on [0, pi]."""

    values: np.ndarray
    candidates: list
    argmin: float
    minimum: float


def tfim_k_coefficients(k) -> tuple[float, float]:
    """k1 = Tr(X_1 K) and k2 = Tr(X_1 X_2 K) from a dense CK."""
    km = kernel_matrix(k, "ck")
    n = int(round(math.log2(km.shape[0])))
    if n < 2:
        raise PreconditionError("need at least two spins")
    x = np.array([[0.0, 1.0], [1.0, 0.0]])
    k1 = _trace_product(product_operator(n, {0: x}), km)
    k2 = _trace_product(product_operator(n, {0: x, 1: x}), km)
    return k1, k2


def tfim_nk_closed_form(k1: float, k2: float, n_edges: int, n: int, h: float,
                        theta=None, coupling: float = 1.0) -> TFIMClosedForm:
    """Closed form of Tr(H~ K) for -J sum ZZ - h sum X rotated in the XZ plane.

    Tr(H~ K) = -k2 J E sin^2(theta) - k1 h N cos(theta) with E edges and
    coupling J.  Over theta in [0, pi] the candidates are the endpoints
    (values -k1 h N and +k1 h N) and, when it lies in [-1, 1], the
    stationary point cos(theta*) = k1 h N / (2 k2 J E) with value
    -k2 J E - (k1 h N)^2 / (4 k2 J E).

    Args:
        k1, k2: Kernel coefficients from ``tfim_k_coefficients``.
        n_edges: Number of coupled pairs.
        n: Number of spins.
        h: Transverse field.
        theta: Optional angles at which to evaluate the expression.
        coupling: Ising coupling J.
    """
    if not (math.isfinite(k1) and math.isfinite(k2)):
        raise PreconditionError("k1 and k2 must be finite")
    a = k2 * coupling * n_edges
    b = k1 * h * n

    def f(t):
        t = np.asarray(t, dtype=float)
        return -a * np.sin(t) ** 2 - b * np.cos(t)

    cands = [(0.0, float(f(0.0))), (math.pi, float(f(math.pi)))]
    if a != 0:
        c = b / (2.0 * a)
        if -1.0 <= c <= 1.0:
            cands.append((math.acos(c), -a - b * b / (4.0 * a)))
    best = min(cands, key=lambda p: p[1])
    values = f(theta) if theta is not None else np.array([])
    return TFIMClosedForm(np.atleast_1d(values), cands, best[0], best[1])


# ------------------------------------------------------------ sign transformations

@dataclass
class FrameRecord:
    sites: tuple
    aligned: bool
    stoquastic: bool
    n_theta: float
    n_k: float
    m_theta: float
    m_k: float
    rate_bound: float


@dataclass
class SignTransformReport:
    """Exhaustive Z-frame enumeration and the checked optimality claims."""

    frames: list
    family: bool
    two_local: bool
    gamma_dominated: bool
    checks: dict
    counterexamples: int

    @property
    def ok(self) -> bool:
        return self.counterexamples == 0


def _pure_strings(h: Hamiltonian) -> dict:
    """Coefficients by (letter, support) when every term is a pure string."""
    out = {}
    for t in h.terms:
        letters = {p for _, p in t.ops}
        if len(letters) != 1:
            return {}
        out[(letters.pop(), tuple(s for s, _ in t.ops))] = t.coefficient
    return out


def x_coefficients(h: Hamiltonian) -> dict:
    """Coefficients of the all-X strings, keyed by support."""
    return {tuple(s for s, _ in t.ops): t.coefficient for t in h.terms
            if all(p == "X" for _, p in t.ops)}


def extreme_bias_rate_bound(hmat, spec, op: KernelOperator) -> float:
    """Learning-rate bound with Theta replaced by its extreme-bias model.

    Theta ~ lambda_top (P + eps (1 - P)) with P the top eigenspace and eps
    the ratio of the next eigenvalue to the top one, which gives
    2 eps / ((1 - (1 - eps) <g|P|g>) lambda_top ||P (H - E_g) P||).
    """
    vals, vecs = op.vals, op.vecs
    top = vals >= vals.max() * (1 - 1e-9)
    rest = vals[~top]
    eps = float(rest.max() / vals.max()) if rest.size else 1.0
    p = vecs[:, top]
    g = spec.ground_state
    w = float(np.sum((p.T @ g) ** 2))
    shifted = hmat - spec.ground_energy * np.eye(hmat.shape[0])
    norm = float(np.linalg.eigvalsh(p.T @ shifted @ p)[-1])
    return 2.0 * eps / ((1.0 - (1.0 - eps) * w) * vals.max() * norm)


def sign_transform_optimality(h: Hamiltonian, theta, k=None, tol: float = 1e-10) -> SignTransformReport:
    """Enumerate every Z_S frame and check the sign-structure optimality claims.

    Frames whose all-X coefficients are non-positive ("aligned") must
    minimize N(., Theta) and N(., K) when ``h`` is a sum of pure X/Y/Z
    strings or is 2-local.  When additionally every pure Y coefficient is
    bounded by the X coefficient on the same support, aligned frames must
    maximize M(., Theta), M(., K) and the extreme-bias learning-rate bound.
    For every frame <g|Theta|g> may not exceed its value on |g|.

    Args:
        h: Hamiltonian with at most 6 spins and a non-degenerate ground state.
        theta: Entrywise-positive NTK (KernelFn or dense).
        k: Entrywise-positive CK; defaults to the CK of ``theta``.
        tol: Relative tolerance for the comparisons.
    """
    n = h.n_qubits
    if n > 6:
        raise PreconditionError("exhaustive frame enumeration is limited to 6 spins")
    k = theta if k is None else k
    tm, km = kernel_matrix(theta, "ntk"), kernel_matrix(k, "ck")
    for name, m in (("theta", tm), ("k", km)):
        if np.min(m) < -1e-14 * np.max(np.abs(m)):
            raise PreconditionError(f"{name} is not entrywise positive")
    op = KernelOperator(tm)
    strings = _pure_strings(h)
    family = bool(strings)
    two_local = h.locality <= 2
    gamma_dom = family and all(
        abs(c) <= abs(strings.get(("X", supp), 0.0)) + 1e-12
        for (p, supp), c in strings.items() if p == "Y")
    frames = []
    prop5_viol = 0
    for r in range(n + 1):
        for sites in itertools.combinations(range(n), r):
            hs = apply_pauli_frame(h, "Z", sites)
            hmat, spec = spectral_data(hs)
            g = spec.ground_state
            xs = x_coefficients(hs)
            frames.append(FrameRecord(
                sites=sites, aligned=all(c <= 0 for c in xs.values()), stoquastic=is_stoquastic(hmat),
                n_theta=n_theta(hmat, tm), n_k=n_k(hmat, spec, km),
                m_theta=m_theta(hmat, spec, tm), m_k=m_k(hmat, spec, km),
                rate_bound=extreme_bias_rate_bound(hmat, spec, op)))
            ag = np.abs(g)
            scale = max(1.0, float(ag @ tm @ ag))
            if g @ tm @ g > ag @ tm @ ag + tol * scale or g @ km @ g > ag @ km @ ag + tol * scale:
                prop5_viol += 1
    aligned = [f for f in frames if f.aligned]
    checks = {"aligned_frames": len(aligned), "prop5_violations": prop5_viol}
    bad = prop5_viol

    def _extreme(attr, better):
        vals = np.array([getattr(f, attr) for f in frames])
        best = vals.min() if better == "min" else vals.max()
        slack = tol * max(1.0, float(np.max(np.abs(vals))))
        if better == "min":
            return sum(getattr(f, attr) > best + slack for f in aligned)
        return sum(getattr(f, attr) < best - slack for f in aligned)

    if aligned and (family or two_local):
        for attr in ("n_theta", "n_k"):
            v = _extreme(attr, "min")
            checks[f"{attr}_violations"] = v
            bad += v
    if aligned and gamma_dom:
        for attr in ("m_theta", "m_k", "rate_bound"):
            v = _extreme(attr, "max")
            checks[f"{attr}_violations"] = v
            bad += v
    return SignTransformReport(frames, family, two_local, gamma_dom, checks, int(bad))


def planted_family_instance(n: int, rng: np.random.Generator, n_terms: int = 6,
                            max_tries: int = 100) -> tuple[Hamiltonian, tuple]:
    """Random pure-string Hamiltonian with a hidden stoquastizing Z frame.

    X coefficients are drawn non-positive, each Y coefficient (even
    supports) is bounded by the X coefficient on its support, and Z terms
    are unrestricted.  A random Z frame is then applied; the returned sites
    undo it.  Instances with a degenerate ground state are redrawn.
    """
    supports = [s for r in range(1, n + 1) for s in itertools.combinations(range(n), r)]
    for _ in range(max_tries):
        terms = []
        picks = rng.choice(len(supports), size=min(n_terms, len(supports)), replace=False)
        for i in picks:
            supp = supports[i]
            a = -abs(rng.standard_normal()) - 0.1
            terms.append(PauliTerm.from_dict(a, {s: "X" for s in supp}))
            if len(supp) % 2 == 0 and rng.random() < 0.5:
                terms.append(PauliTerm.from_dict(rng.uniform(-1, 1) * abs(a), {s: "Y" for s in supp}))
        for s in range(n):
            terms.append(PauliTerm.from_dict(rng.standard_normal(), {s: "Z"}))
        if n > 1:
            i = int(rng.integers(n - 1))
            terms.append(PauliTerm.from_dict(rng.standard_normal(), {i: "Z", i + 1: "Z"}))
        base = Hamiltonian(n, terms)
        if base.spectrum().is_degenerate:
            continue
        hidden = tuple(int(s) for s in np.flatnonzero(rng.random(n) < 0.5))
        return apply_pauli_frame(base, "Z", hidden), hidden
    raise PreconditionError("could not draw a non-degenerate planted instance")


# ------------------------------------------------------------ correlations

@dataclass
class Correlation:
    rho: float
    pvalue: float
    n_used: int
    n_excluded: int


def rank_correlation(xs, ys, min_points: int = 5) -> Correlation:
    """Spearman rank correlation with non-finite pairs excluded.

    Not-reached convergence times are stored as inf; such pairs are dropped
    and counted.
    """
    x, y = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise PreconditionError("series must be one-dimensional with equal lengths")
    ok = np.isfinite(x) & np.isfinite(y)
    if ok.sum() < min_points:
        raise PreconditionError(f"need at least {min_points} finite pairs, got {int(ok.sum())}")
    if np.ptp(x[ok]) == 0 or np.ptp(y[ok]) == 0:
        raise PreconditionError("rank correlation is undefined for a constant series")
    res = spearmanr(x[ok], y[ok])
    return Correlation(float(res.statistic), float(res.pvalue), int(ok.sum()), int((~ok).sum()))


__all__ = [
    "MetricsReport", "compute_metrics", "m_theta", "n_theta", "m_k", "n_k",
    "InitStatistics", "init_statistics", "jackknife_error", "lemma_band", "sample_states",
    "covariance_root", "BasisScan", "basis_scan", "minmax", "uniform_rotation_unitary",
    "eigensum_state", "TFIMClosedForm", "tfim_k_coefficients", "tfim_nk_closed_form",
    "SignTransformReport", "FrameRecord", "sign_transform_optimality", "planted_family_instance",
    "extreme_bias_rate_bound", "x_coefficients", "Correlation", "rank_correlation",
]
