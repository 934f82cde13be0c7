"""Finite-width fully connected networks on spin inputs.

Used to estimate the NTK and CK by averaging over initializations and to
evaluate the lazy-training ratio.  The parameterization matches
``kernel_tables``: the first layer is W x / sqrt(N), every later layer is
sigma_w W a / sqrt(width), and biases enter as beta b.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf, expit

from .exceptions import PreconditionError
from .kernels import KernelSpec, sector_means
from .pauli import dense_and_spectrum

MAX_EMPIRICAL_QUBITS = 8
_SQRT_PI = math.sqrt(math.pi)


def spin_configurations(n: int) -> np.ndarray:
    """All 2^N configurations as rows; site 0 is the most significant bit and
    bit value 0 means spin +1."""
    bits = (np.arange(2 ** n)[:, None] >> np.arange(n - 1, -1, -1)) & 1
    return 1.0 - 2.0 * bits


def _activation(kind: str):
    if kind == "relu":
        return lambda z: np.maximum(z, 0.0), lambda z: (z > 0).astype(float)
    if kind == "erf":
        return erf, lambda z: 2.0 / _SQRT_PI * np.exp(-z * z)
    if kind == "tanh":
        return np.tanh, lambda z: 1.0 - np.tanh(z) ** 2
    if kind == "sigmoid":
        return expit, lambda z: expit(z) * (1.0 - expit(z))
    if kind == "linear":
        return lambda z: z, np.ones_like
    raise PreconditionError(f"unknown activation {kind!r}")


@dataclass
class NetworkParams:
    """Weights and biases of one initialization.

    ``weights[l]`` has shape (fan_out, fan_in); the last layer has one
    output.  Biases are zero unless ``spec.zero_bias_init`` is False.
    """

    spec: KernelSpec
    n_inputs: int
    widths: tuple
    weights: list
    biases: list
    seed: object = None
    output_scale: float = 1.0

    def flat(self) -> np.ndarray:
        return np.concatenate([w.ravel() for w in self.weights] + [b.ravel() for b in self.biases])

    def with_flat(self, theta: np.ndarray) -> "NetworkParams":
        ws, bs, pos = [], [], 0
        for w in self.weights:
            ws.append(theta[pos:pos + w.size].reshape(w.shape))
            pos += w.size
        for b in self.biases:
            bs.append(theta[pos:pos + b.size].reshape(b.shape))
            pos += b.size
        return NetworkParams(self.spec, self.n_inputs, self.widths, ws, bs, self.seed, self.output_scale)

    @property
    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)


def _widths(spec: KernelSpec, widths) -> tuple:
    if np.isscalar(widths):
        widths = (int(widths),) * spec.depth
    widths = tuple(int(w) for w in widths)
    if len(widths) != spec.depth:
        raise PreconditionError(f"expected {spec.depth} hidden widths, got {len(widths)}")
    if any(w < 1 for w in widths):
        raise PreconditionError("widths must be >= 1")
    return widths


def init_network(spec: KernelSpec, widths, n_inputs: int, seed=0) -> NetworkParams:
    """Draw standard normal weights (and biases unless zero-initialized)."""
    widths = _widths(spec, widths)
    rng = np.random.default_rng(seed)
    sizes = (int(n_inputs),) + widths + (1,)
    ws = [rng.standard_normal((sizes[i + 1], sizes[i])) for i in range(len(sizes) - 1)]
    if spec.zero_bias_init:
        bs = [np.zeros(s) for s in sizes[1:]]
    else:
        bs = [rng.standard_normal(s) for s in sizes[1:]]
    return NetworkParams(spec, int(n_inputs), widths, ws, bs, seed)


def _scales(p: NetworkParams) -> list:
    sw = math.sqrt(p.spec.weight_variance)
    fan = (p.n_inputs,) + p.widths
    return [1.0 / math.sqrt(fan[0])] + [sw / math.sqrt(f) for f in fan[1:]]


def _forward(p: NetworkParams, x: np.ndarray, frozen=None):
    """Pre-activations and activations for a batch; ``frozen`` holds base
    pre-activations that fix the ReLU pattern."""
    phi, _ = _activation(p.spec.activation)
    beta = math.sqrt(p.spec.bias_variance)
    s = _scales(p)
    acts, pres = [x], []
    a = x
    for l, (w, b) in enumerate(zip(p.weights, p.biases)):
        z = s[l] * a @ w.T + beta * b
        if l == len(p.weights) - 1:
            z = p.output_scale * z
        pres.append(z)
        if l < len(p.weights) - 1:
            if frozen is not None and p.spec.activation == "relu":
                a = z * (frozen[l] > 0)
            else:
                a = phi(z)
            acts.append(a)
    return pres, acts


def forward(p: NetworkParams, x: np.ndarray) -> np.ndarray:
    """Network output for each row of ``x``."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != p.n_inputs:
        raise PreconditionError(f"inputs must have shape (batch, {p.n_inputs})")
    return _forward(p, x)[0][-1][:, 0]


def init_and_forward(spec: KernelSpec, widths, seed, inputs) -> np.ndarray:
    """Initialize with ``seed`` and evaluate on ``inputs``."""
    x = np.asarray(inputs, dtype=float)
    return forward(init_network(spec, widths, x.shape[1], seed), x)


def _backward(p: NetworkParams, pres, acts, frozen=None):
    """Per-example output sensitivities delta_l for every layer."""
    _, dphi = _activation(p.spec.activation)
    s = _scales(p)
    deltas = [np.full((acts[0].shape[0], 1), float(p.output_scale))]
    for l in range(len(p.weights) - 1, 0, -1):
        base = pres[l - 1] if frozen is None else frozen[l - 1]
        deltas.append((deltas[-1] @ p.weights[l]) * s[l] * dphi(base))
    return deltas[::-1]


def jacobian(p: NetworkParams, x: np.ndarray, frozen=None) -> np.ndarray:
    """Output-by-parameter Jacobian (batch, n_params) in ``flat`` order."""
    pres, acts = _forward(p, x, frozen)
    deltas = _backward(p, pres, acts, frozen)
    s = _scales(p)
    beta = math.sqrt(p.spec.bias_variance)
    cols = [(s[l] * deltas[l][:, :, None] * acts[l][:, None, :]).reshape(x.shape[0], -1)
            for l in range(len(p.weights))]
    cols += [beta * deltas[l] for l in range(len(p.weights))]
    return np.concatenate(cols, axis=1)


def empirical_ntk_sample(p: NetworkParams, x: np.ndarray) -> np.ndarray:
    """J J^T for one initialization without forming J.

    Equals sum_l s_l^2 (delta_l delta_l^T) o (a_l a_l^T) + beta^2 delta_l delta_l^T.
    """
    pres, acts = _forward(p, x)
    deltas = _backward(p, pres, acts)
    s = _scales(p)
    b2 = p.spec.bias_variance
    out = np.zeros((x.shape[0], x.shape[0]))
    for l in range(len(p.weights)):
        dd = deltas[l] @ deltas[l].T
        out += s[l] ** 2 * dd * (acts[l] @ acts[l].T) + b2 * dd
    return out


def empirical_ck_sample(p: NetworkParams, x: np.ndarray, estimator: str = "features") -> np.ndarray:
    """One-initialization estimate of the output covariance.

    ``outputs`` returns psi psi^T.  ``features`` integrates out the output
    weights and bias analytically, sigma_w^2 a a^T / width + beta^2 [biased
    init], which has the same mean and a much smaller variance.
    """
    pres, acts = _forward(p, x)
    if estimator == "outputs":
        psi = pres[-1]
        return psi @ psi.T
    if estimator != "features":
        raise PreconditionError(f"unknown CK estimator {estimator!r}")
    a = acts[-1]
    return p.output_scale ** 2 * (p.spec.weight_variance * (a @ a.T) / a.shape[1] + p.spec.ck_bias)


@dataclass
class EmpiricalKernelEstimate:
    """Seed-averaged NTK and CK with sector-resolved errors."""

    theta_hat: np.ndarray
    k_hat: np.ndarray
    n_samples: int
    ntk_sectors: np.ndarray
    ck_sectors: np.ndarray
    ntk_rel_err: np.ndarray
    ck_rel_err: np.ndarray
    converged: bool
    seeds: list = field(default_factory=list, repr=False)


def _rel_errors(per_sample: np.ndarray, floor: float) -> tuple[np.ndarray, np.ndarray]:
    m = per_sample.mean(axis=0)
    n = per_sample.shape[0]
    loo = (per_sample.sum(axis=0) - per_sample) / (n - 1)
    se = np.sqrt((n - 1) / n * np.sum((loo - loo.mean(axis=0)) ** 2, axis=0))
    scale = floor * np.max(np.abs(m))
    rel = np.where(np.abs(m) > scale, se / np.maximum(np.abs(m), 1e-300), 0.0)
    return m, rel


def empirical_kernels(spec: KernelSpec, widths, n_qubits: int, n_samples: int = 2000,
                      target_rel_err: float = 0.01, min_samples: int = 20, check_every: int = 10,
                      seed: int = 0, ck_estimator: str = "features",
                      zero_floor: float = 1e-12) -> EmpiricalKernelEstimate:
    """Average NTK and CK estimates over initializations.

    Sampling stops once every sector eigenvalue of both estimates has a
    jackknife relative standard error below ``target_rel_err`` or after
    ``n_samples`` draws; ``converged`` reports which.  Sectors whose mean
    is below ``zero_floor`` times the largest are treated as exact zeros.

    Args:
        spec: Architecture.
        widths: Hidden width(s).
        n_qubits: Input size N, at most 8.
        n_samples: Sample budget.
        target_rel_err: Stopping threshold.
        min_samples: Draws before the first stopping check.
        check_every: Draws between checks.
        seed: Draw i uses ``default_rng([seed, i])``.
        ck_estimator: ``features`` or ``outputs``.
        zero_floor: Relative threshold for structurally zero sectors.
    """
    if n_qubits > MAX_EMPIRICAL_QUBITS:
        raise PreconditionError(f"empirical kernels are limited to N <= {MAX_EMPIRICAL_QUBITS}")
    if n_samples < 2:
        raise PreconditionError("need at least two samples")
    x = spin_configurations(n_qubits)
    dim = x.shape[0]
    t_sum, k_sum = np.zeros((dim, dim)), np.zeros((dim, dim))
    t_sec, k_sec, seeds = [], [], []
    converged = False
    i = 0
    for i in range(n_samples):
        s = [seed, i]
        p = init_network(spec, widths, n_qubits, s)
        t = empirical_ntk_sample(p, x)
        k = empirical_ck_sample(p, x, ck_estimator)
        t_sum += t
        k_sum += k
        t_sec.append(sector_means(t))
        k_sec.append(sector_means(k))
        seeds.append(s)
        n = i + 1
        if n >= max(min_samples, 2) and (n - min_samples) % check_every == 0:
            _, rt = _rel_errors(np.array(t_sec), zero_floor)
            _, rk = _rel_errors(np.array(k_sec), zero_floor)
            if max(rt.max(), rk.max()) < target_rel_err:
                converged = True
                break
    n = len(seeds)
    tm, rt = _rel_errors(np.array(t_sec), zero_floor)
    km, rk = _rel_errors(np.array(k_sec), zero_floor)
    converged = converged or max(rt.max(), rk.max()) < target_rel_err
    return EmpiricalKernelEstimate(t_sum / n, k_sum / n, n, tm, km, rt, rk, converged, seeds)


# ------------------------------------------------------------ lazy-training ratio

@dataclass
class LazyRatio:
    """The lazy-training diagnostic and its factors."""

    ratio: float
    norm_factor: float
    hessian_norm: float
    jacobian_norm: float
    iterations: int


def _hvp_pair(p: NetworkParams, x: np.ndarray, theta: np.ndarray, v: np.ndarray, h: float, frozen):
    """Central differences of J along v: returns dJ (batch, n_params)."""
    jp = jacobian(p.with_flat(theta + h * v), x, frozen)
    jm = jacobian(p.with_flat(theta - h * v), x, frozen)
    return (jp - jm) / (2.0 * h)


def hessian_norm(p: NetworkParams, x: np.ndarray, iterations: int = 100, rel_step: float = 1e-4,
                 seed: int = 0, restarts: int = 4) -> float:
    """Operator norm of the output Hessian, max over unit u, v of |sum_b u_b v^T H_b v|.

    Each iteration takes one central difference of the Jacobian along v,
    with step ``rel_step * max(1, ||theta||)``, which yields both
    M_u v = sum_b u_b H_b v and q_b = v^T H_b v.  Then u <- q / ||q|| and v
    takes a shifted power step v <- v + M_u v / ||M_u v||, which converges
    to the top eigenvector even when M_u has a +-sigma pair.  For ReLU the
    activation pattern is frozen at the base point, so the differences give
    the almost-everywhere Hessian instead of sampling the kinks.

    The alternating maximization can stall at a local optimum, so it is
    repeated from ``restarts`` random starts and the largest value kept.
    """
    theta = p.flat()
    h = rel_step * max(1.0, float(np.linalg.norm(theta)))
    frozen = _forward(p, x)[0] if p.spec.activation == "relu" else None
    rng = np.random.default_rng(seed)
    return max(_hessian_power(p, x, theta, h, frozen, rng, iterations) for _ in range(max(1, restarts)))


def _hessian_power(p, x, theta, h, frozen, rng, iterations) -> float:
    v = rng.standard_normal(theta.size)
    v /= np.linalg.norm(v)
    u = rng.standard_normal(x.shape[0])
    u /= np.linalg.norm(u)
    best = 0.0
    for _ in range(iterations):
        dj = _hvp_pair(p, x, theta, v, h, frozen)
        q = dj @ v
        nq = float(np.linalg.norm(q))
        best = max(best, nq)
        w = u @ dj
        nw = float(np.linalg.norm(w))
        if nq > 0:
            u = q / nq
        if nw == 0:
            break
        v = v + w / nw
        v /= np.linalg.norm(v)
    return best


def lazy_ratio(p: NetworkParams, h, iterations: int = 100, rel_step: float = 1e-4,
               seed: int = 0, restarts: int = 4) -> LazyRatio:
    """sqrt<psi|psi> / sqrt(<H^2>/<H>^2 - 1) * ||D^2 psi|| / ||D psi||^2.

    Args:
        p: Network at initialization.
        h: Hamiltonian on ``p.n_inputs`` spins.
        iterations: Power iterations for the Hessian norm.
        restarts: Random starts of the power iteration.
        rel_step: Finite-difference step relative to ||theta||.
        seed: Start vectors of the power iteration.
    """
    hmat, _ = dense_and_spectrum(h, allow_degenerate=True)
    x = spin_configurations(p.n_inputs)
    if hmat.shape[0] != x.shape[0]:
        raise PreconditionError("Hamiltonian size does not match the network input")
    psi = forward(p, x)
    nn = float(psi @ psi)
    e1 = float(psi @ hmat @ psi) / nn
    e2 = float(np.sum((hmat @ psi) ** 2)) / nn
    if e1 == 0:
        raise PreconditionError("initial energy is zero; the ratio is undefined")
    spread = e2 / e1 ** 2 - 1.0
    if not spread > 1e-12:
        raise PreconditionError("initial state is an energy eigenstate; the ratio is undefined")
    jac = jacobian(p, x)
    jnorm = float(np.linalg.norm(jac, 2))
    hnorm = hessian_norm(p, x, iterations, rel_step, seed, restarts)
    factor = math.sqrt(nn) / math.sqrt(spread)
    return LazyRatio(factor * hnorm / jnorm ** 2, factor, hnorm, jnorm, iterations)


def scaled_network(p: NetworkParams, alpha: float) -> NetworkParams:
    """The same network with its output multiplied by ``alpha``."""
    return NetworkParams(p.spec, p.n_inputs, p.widths, p.weights, p.biases, p.seed,
                         p.output_scale * alpha)


def lazy_scaling(spec: KernelSpec, h, widths=(64, 256, 1024), n_seeds: int = 50, seed: int = 0,
                 **kw) -> dict:
    """Log-log slope of the lazy ratio against width.

    The width-independent prefactor is heavy tailed across seeds (it
    vanishes when <H> is near zero), so the fit is a least-squares line
    through every (log width, log ratio) pair, i.e. through geometric means.
    """
    n = h.n_qubits
    xs, ys, gmeans = [], [], []
    for w in widths:
        logs = [math.log(lazy_ratio(init_network(spec, w, n, [seed, int(w), s]), h, **kw).ratio)
                for s in range(n_seeds)]
        xs += [math.log(w)] * n_seeds
        ys += logs
        gmeans.append(float(math.exp(np.mean(logs))))
    slope = float(np.polyfit(xs, ys, 1)[0])
    return {"widths": list(widths), "geometric_means": gmeans, "slope": slope, "n_seeds": n_seeds}
