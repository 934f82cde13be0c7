"""End-to-end acceptance checks.

Each ``criterion_*`` function runs one check at its stated tolerance and
returns a :class:`CriterionResult`; none of them raises on failure.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .flow import (FlowConfig, KernelOperator, excited_alphas, gd_stability_probe,
                   imaginary_time_energy, integrate_flow, learning_rate_bound,
                   optimal_commuting_ntk, random_commuting_kernel, basis_invariance_check,
                   spectral_data, sr_flow, theorem_bounds)
from .kernels import (ACTIVATIONS, KernelSpec, hadamard_diagonalize, kernel_tables,
                      weak_bias_check)
from .metrics import (eigensum_state, planted_family_instance, sign_transform_optimality)
from .mps import mps_empirical_ck, mps_local_invariance
from .pauli import build_model, frame_operator, random_hamiltonian
from .recipes import reproduce_figure
from .widths import empirical_kernels, init_network, lazy_ratio, lazy_scaling, scaled_network


@dataclass
class CriterionResult:
    """Outcome of one acceptance criterion."""

    number: int
    name: str
    passed: bool
    summary: str
    budget_s: float
    runtime_s: float = math.nan
    details: dict = field(default_factory=dict, repr=False)

    @property
    def within_budget(self) -> bool:
        return self.runtime_s <= self.budget_s

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return (f"[{tag}] criterion {self.number:2d} {self.name}: {self.summary} "
                f"({self.runtime_s:.1f}s / {self.budget_s:.0f}s)")


def _random_unit(rng, dim: int, orth=None) -> np.ndarray:
    v = rng.standard_normal(dim)
    if orth is not None:
        v -= orth * (orth @ v)
    return v / np.linalg.norm(v)


def _random_pd(rng, dim: int, cond: float = 20.0) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    vals = np.exp(rng.uniform(0.0, math.log(cond), dim))
    return (q * vals) @ q.T


def _random_kernel(rng, n: int, activations=ACTIVATIONS, positive: bool = False):
    """Analytic kernel of a random architecture, redrawn until the NTK is
    definite (and, with ``positive``, both tables are entrywise positive)."""
    while True:
        spec = KernelSpec(depth=int(rng.integers(1, 3)), activation=str(rng.choice(activations)))
        k = kernel_tables(spec, n)
        s = k.sectors("ntk")
        if s.min > 1e-6 * s.max and (not positive or min(k.phi_ntk.min(), k.f_ck.min()) > 0):
            return k


# ------------------------------------------------------------------ 1

def criterion_1(tol: float = 1e-8) -> CriterionResult:
    """Kernel eigenvectors are X-product states with |s|-only eigenvalues."""
    worst_off = worst_eig = 0.0
    bias_fail = []
    for act, depth, n in itertools.product(ACTIVATIONS, (1, 2), range(3, 9)):
        k = kernel_tables(KernelSpec(depth=depth, activation=act), n)
        for which in ("ntk", "ck"):
            d = hadamard_diagonalize(k.dense(which))
            scale = float(np.max(np.abs(d)))
            off = d - np.diag(np.diag(d))
            worst_off = max(worst_off, float(np.max(np.abs(off))) / scale)
            s = k.sectors(which)
            worst_eig = max(worst_eig, float(np.max(np.abs(np.diag(d) - s.per_state()))) / scale)
            if not weak_bias_check(s, strict=False).ok:
                bias_fail.append((act, depth, n, which))
    ok = worst_off <= tol and worst_eig <= tol and not bias_fail
    return CriterionResult(1, "kernel structure", ok,
                           f"max off-diagonal {worst_off:.1e}, Krawtchouk vs Hadamard "
                           f"{worst_eig:.1e}, weak-bias failures {len(bias_fail)}", 60,
                           details={"weak_bias_failures": bias_fail})


# ------------------------------------------------------------------ 2

def criterion_2(width: int = 50_000, rel_tol: float = 0.01, seed: int = 0) -> CriterionResult:
    """Finite-width NTK and CK sectors agree with the analytic ones."""
    spec = KernelSpec(depth=1, activation="relu")
    n = 5
    est = empirical_kernels(spec, width, n, n_samples=200, target_rel_err=0.005, seed=seed)
    k = kernel_tables(spec, n)
    worst = 0.0
    for which, emp in (("ntk", est.ntk_sectors), ("ck", est.ck_sectors)):
        ana = k.sectors(which).eigenvalues
        scale = float(np.max(np.abs(ana)))
        zero = np.abs(ana) <= 1e-12 * scale
        err = np.where(zero, np.abs(emp) / scale, np.abs(emp - ana) / np.where(zero, 1.0, np.abs(ana)))
        worst = max(worst, float(np.max(err)))
    return CriterionResult(2, "empirical vs analytic kernels", worst <= rel_tol,
                           f"max sector relative error {worst:.2e} after {est.n_samples} networks",
                           600, details={"n_samples": est.n_samples})


# ------------------------------------------------------------------ 3

def criterion_3(n_random: int = 100, seed: int = 3) -> CriterionResult:
    """Identity-kernel flow equals imaginary time; energy monotone, bilinear conserved."""
    rng = np.random.default_rng(seed)
    cfg = FlowConfig(t_max=10.0, n_samples=201, rel_tol=1e-11, abs_tol=1e-13)
    worst_oracle = 0.0
    for n in range(1, 7):
        for _ in range(2):
            h = random_hamiltonian(n, rng, locality=min(n, 2))
            psi0 = rng.standard_normal(2 ** n)
            tr = integrate_flow(h, np.eye(2 ** n), psi0, cfg, allow_degenerate=True)
            ref = imaginary_time_energy(h, psi0, tr.times)
            worst_oracle = max(worst_oracle, float(np.max(np.abs(tr.energy - ref))))
    mono_fail, worst_drift = 0, 0.0
    for _ in range(n_random):
        n = int(rng.integers(2, 5))
        h = random_hamiltonian(n, rng, locality=2)
        theta = _random_kernel(rng, n) if rng.random() < 0.5 else _random_pd(rng, 2 ** n)
        tr = integrate_flow(h, theta, rng.standard_normal(2 ** n), cfg, allow_degenerate=True)
        mono_fail += not tr.energy_monotone(1e-9)
        worst_drift = max(worst_drift, tr.conserved_drift())
    ok = worst_oracle <= 1e-6 and mono_fail == 0 and worst_drift <= 1e-6
    return CriterionResult(3, "flow correctness", ok,
                           f"oracle error {worst_oracle:.1e}, non-monotone {mono_fail}/{n_random}, "
                           f"max conserved drift {worst_drift:.1e}", 300)


# ------------------------------------------------------------------ 4

def criterion_4(n_unitaries: int = 20, seed: int = 4) -> CriterionResult:
    """Flows of U H U^dag and H agree for unitaries commuting with the kernel."""
    rng = np.random.default_rng(seed)
    cfg = FlowConfig(t_max=5.0, n_samples=101, rel_tol=1e-11, abs_tol=1e-13)
    worst = 0.0
    for i in range(n_unitaries):
        n = 3
        h = random_hamiltonian(n, rng, locality=2)
        k = _random_kernel(rng, n)
        op = KernelOperator(k)
        if i % 2 == 0:
            sites = [s for s in range(n) if rng.random() < 0.5] or [0]
            u = frame_operator(n, "X", sites).astype(complex)
        else:
            # chi = sum_S c_S X_S is diagonal in the X-product basis
            u = op.vecs @ np.diag(np.exp(1j * rng.uniform(-math.pi, math.pi, op.dim))) @ op.vecs.T
        dev = basis_invariance_check(h, op, u, rng.standard_normal(2 ** n), cfg)
        worst = max(worst, dev)
    return CriterionResult(4, "basis invariance", worst < 1e-6,
                           f"max trajectory deviation {worst:.1e} over {n_unitaries} unitaries", 300)


# ------------------------------------------------------------------ 5

def _case_kernel(case: int, h, rng, n: int):
    if case == 1:
        return _random_pd(rng, 2 ** n)
    _, spec = spectral_data(h)
    g = spec.ground_state
    if case == 2:
        p = np.eye(2 ** n) - np.outer(g, g)
        rest = p @ _random_pd(rng, 2 ** n) @ p
        return rest + rng.uniform(0.5, 5.0) * np.outer(g, g)
    return random_commuting_kernel(h, 1.0, rng.uniform(0.05, 0.5), rng)


def criterion_5(n_instances: int = 50, seed: int = 5, variant: str = "paper") -> CriterionResult:
    """Energy traces stay below the three-case convergence envelopes."""
    rng = np.random.default_rng(seed)
    cfg = FlowConfig(t_max=40.0, n_samples=801, rel_tol=1e-10, abs_tol=1e-12,
                     gauge="unit_inverse_kernel")
    counts, viol, worst = {}, {}, {}
    for case in (1, 2, 3):
        counts[case] = viol[case] = 0
        worst[case] = 0.0
        while counts[case] < n_instances:
            n = int(rng.integers(2, 4))
            h = random_hamiltonian(n, rng, locality=2)
            if h.spectrum().is_degenerate:
                continue
            theta = _case_kernel(case, h, rng, n)
            tr = integrate_flow(h, theta, rng.standard_normal(2 ** n), cfg)
            if case == 1 and tr.overlap.min() <= 1e-12:
                continue
            rep = theorem_bounds(case, h, theta, tr, C=4.0, variant=variant)
            counts[case] += 1
            viol[case] += not rep.holds
            worst[case] = max(worst[case], rep.max_ratio)
    ok = all(v == 0 for v in viol.values())
    return CriterionResult(5, "convergence envelopes", ok,
                           ", ".join(f"case {c}: {viol[c]}/{counts[c]} violated "
                                     f"(max excess/bound {worst[c]:.2f})" for c in (1, 2, 3)), 600)


# ------------------------------------------------------------------ 6

def criterion_6(n_instances: int = 20, seed: int = 6, eps: float = 1e-3) -> CriterionResult:
    """Euler steps above the learning-rate bound escape, below it contract."""
    rng = np.random.default_rng(seed)
    above_ok = below_ok = 0
    for _ in range(n_instances):
        while True:
            h = random_hamiltonian(3, rng, locality=2)
            if not h.spectrum().is_degenerate:
                break
        k = _random_kernel(rng, 3)
        g = h.spectrum().ground_state
        psi0 = g + eps * _random_unit(rng, 8, g)
        bound = learning_rate_bound(h, k, psi0)["exact"]
        above_ok += gd_stability_probe(h, k, psi0, 1.2 * bound).diverges
        below_ok += gd_stability_probe(h, k, psi0, 0.5 * bound).contracts
    ok = above_ok == n_instances and below_ok == n_instances
    return CriterionResult(6, "learning-rate bound", ok,
                           f"diverged at 1.2x: {above_ok}/{n_instances}, "
                           f"contracted at 0.5x: {below_ok}/{n_instances}", 120)


# ------------------------------------------------------------------ 7

def criterion_7(n_hamiltonians: int = 10, n_random: int = 1000, seed: int = 7) -> CriterionResult:
    """The gap-equalizing commuting kernel maximizes the slowest rate."""
    rng = np.random.default_rng(seed)
    beaten, worst_spread = 0, 0.0
    for _ in range(n_hamiltonians):
        while True:
            h = random_hamiltonian(3, rng, locality=2)
            if not h.spectrum().is_degenerate:
                break
        best = optimal_commuting_ntk(h, 1.0)
        a_best = excited_alphas(h, best)
        worst_spread = max(worst_spread, float(np.ptp(a_best) / np.mean(a_best)))
        _, spec = spectral_data(h)
        g0 = float(spec.ground_state @ best @ spec.ground_state)
        for _ in range(n_random):
            r = random_commuting_kernel(h, 1.0, g0, rng)
            beaten += excited_alphas(h, r)[0] > a_best[0] * (1 + 1e-12)
    ok = beaten == 0 and worst_spread <= 1e-8
    return CriterionResult(7, "optimal commuting kernel", ok,
                           f"random kernels beating the optimum {beaten}/{n_hamiltonians * n_random}, "
                           f"excited-rate spread {worst_spread:.1e}", 120)


# ------------------------------------------------------------------ 8-10

def _figure_criterion(number: int, name: str, fig: str, keys, budget: float) -> CriterionResult:
    res = reproduce_figure(fig)
    checks = {k: v for k, v in res.checks.items() if keys is None or k in keys}
    rhos = ", ".join(f"{k} rho={c.rho:+.3f}" for k, c in res.correlations.items())
    argmins = ", ".join(f"{k}={v:.4f}" for k, v in res.details.items() if k.endswith("argmin_theta"))
    failed = [k for k, v in checks.items() if not v]
    summary = f"{rhos}" + (f"; argmin {argmins}" if argmins else "") + \
        (f"; failed {failed}" if failed else "")
    return CriterionResult(number, name, all(checks.values()), summary, budget,
                           details={"checks": res.checks, "result": res})


def criterion_8() -> CriterionResult:
    """Overlap convergence times of the rotated local-field and TFIM models."""
    return _figure_criterion(8, "overlap-time scans", "fig2", None, 900)


def criterion_9() -> CriterionResult:
    """Energy convergence times of the rotated Heisenberg and XYZ models."""
    return _figure_criterion(9, "energy-time scans", "fig3", None, 900)


def criterion_10() -> CriterionResult:
    """Initialization averages: field-sign asymmetry, metric tracking, chain decay."""
    keys = {"tfim_field_sign_asymmetry", "tfim_field_overlap_tracks_metric",
            "tfim_field_energy_tracks_metric", "j1j2_overlap_strictly_decreasing"}
    return _figure_criterion(10, "initialization averages", "fig4", keys, 1200)


# ------------------------------------------------------------------ 11

def criterion_11(n_instances: int = 20, seed: int = 11) -> CriterionResult:
    """Aligned Z frames attain the extremal metric values."""
    rng = np.random.default_rng(seed)
    bad, checks = 0, 0
    for i in range(n_instances):
        n = 2 + i % 3
        h, _ = planted_family_instance(n, rng)
        k = _random_kernel(rng, n, ("relu", "sigmoid"), positive=True)
        rep = sign_transform_optimality(h, k)
        bad += rep.counterexamples
        checks += len(rep.checks)
    return CriterionResult(11, "sign-transform optimality", bad == 0,
                           f"{bad} counterexamples over {checks} checks on {n_instances} instances", 300)


# ------------------------------------------------------------------ 12

def criterion_12(h_field: float = 2.0) -> CriterionResult:
    """Damped natural-gradient flow versus imaginary time on the n=4 TFIM."""
    h = build_model("tfim", 4, {"h": h_field})
    k = kernel_tables(KernelSpec(), 4)
    tmin = k.sectors("ntk").min
    psi0 = eigensum_state(h)
    cfg = FlowConfig(t_max=20.0, n_samples=401, rel_tol=1e-11, abs_tol=1e-13)
    ref = imaginary_time_energy(h, psi0, cfg.sample_times())
    dev = {}
    for rel in (1e-3, 10.0):
        tr = sr_flow(h, k, rel * tmin, psi0, cfg)
        dev[rel] = float(np.max(np.abs(tr.energy - ref)))
    ok = dev[1e-3] <= 1e-4 and dev[10.0] > 1e-2
    return CriterionResult(12, "damped natural gradient", ok,
                           f"max energy deviation {dev[1e-3]:.2e} at eps=1e-3*min (target <= 1e-4), "
                           f"{dev[10.0]:.2e} at eps=10*min (target > 1e-2)", 120, details=dev)


# ------------------------------------------------------------------ 13

def criterion_13(n_samples: int = 100_000, seed: int = 13) -> CriterionResult:
    """Random MPS covariance is diagonal and locally invariant; controls fail."""
    had = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2)
    diag = mps_empirical_ck(4, 3, n_samples, "normal", seed=seed)
    inv = mps_local_invariance(4, 3, had, n_samples, "normal", seed=seed)
    shared = mps_empirical_ck(4, 3, n_samples, "shared", seed=seed)
    asym = mps_local_invariance(4, 3, had, n_samples, "asymmetric", seed=seed)
    ok = diag.passed and inv.passed and not shared.passed and not asym.statistical_ok
    return CriterionResult(13, "random MPS", ok,
                           f"diagonality z {diag.max_offdiag_z:.2f}/{diag.max_diag_z:.2f}, "
                           f"invariance z {inv.max_z_second:.2f}/{inv.max_z_fourth:.2f} "
                           f"(exact {inv.exact_error:.1e}); controls: shared z "
                           f"{shared.max_offdiag_z:.0f}, asymmetric z {asym.max_z_second:.0f}", 300)


# ------------------------------------------------------------------ 14

def criterion_14(seed: int = 0, n_seeds: int = 50) -> CriterionResult:
    """Lazy-training ratio scales as width^-1/2 and ignores output rescaling."""
    spec = KernelSpec(depth=1, activation="relu")
    h = build_model("tfim", 3, {"h": 1.0})
    fit = lazy_scaling(spec, h, (64, 256, 1024), n_seeds=n_seeds, seed=seed)
    p = init_network(spec, 256, 3, seed)
    base = lazy_ratio(p, h).ratio
    inv = max(abs(lazy_ratio(scaled_network(p, a), h).ratio / base - 1.0) for a in (0.1, 7.5))
    ok = abs(fit["slope"] + 0.5) <= 0.15 and inv <= 1e-6
    return CriterionResult(14, "lazy-training scaling", ok,
                           f"slope {fit['slope']:.3f} (target -0.5 +- 0.15), "
                           f"rescaling change {inv:.1e}", 600, details=fit)


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 15)}


def run_criterion(number: int, **kw) -> CriterionResult:
    """Run one criterion and record its wall-clock time."""
    t0 = time.perf_counter()
    res = CRITERIA[number](**kw)
    res.runtime_s = time.perf_counter() - t0
    return res


def run_all(numbers=None, echo=print) -> list[CriterionResult]:
    """Run the selected criteria (all by default), echoing one line each."""
    out = []
    for i in numbers or sorted(CRITERIA):
        r = run_criterion(i)
        if echo:
            echo(r.line())
        out.append(r)
    return out
