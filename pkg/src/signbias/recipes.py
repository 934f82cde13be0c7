"""Figure-reproduction protocols.

``fig2`` and ``fig3`` scan a uniform XZ-plane rotation at n = 5 and relate
convergence times to M(H, Theta) and N(H, Theta).  ``fig4`` and ``fig5``
average the initial energy and ground overlap over psi_0 ~ N(0, K) and
relate them to M(H, K) and N(H, K).  Raw series are kept as computed;
[0, 1] normalization is applied only when writing.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import PreconditionError
from .flow import FlowConfig
from .kernels import KernelSpec, kernel_tables
from .metrics import (Correlation, basis_scan, compute_metrics, init_statistics, minmax,
                      rank_correlation)
from .pauli import build_model

FIGURES = ("fig2", "fig3", "fig4", "fig5")

DEFAULTS = {
    "n_scan": 5,
    "n_theta": 21,
    "theta_stop": math.pi / 2,
    "t_max": 3000.0,
    "n_samples": 30001,
    "threshold": 0.95,
    "C": 4.0,
    "n_init": 9,
    "n_h": 13,
    "h_max": 1.5,
    "n_theta_init": 21,
    "chain_sizes": (5, 7, 9, 11),
    "init_samples": 1000,
    "seed": 0,
    "threads": 1,
    "min_rho": 0.9,
}


@dataclass
class FigureResult:
    """Raw panel series, rank correlations and pass/fail checks."""

    figure: str
    panels: dict[str, dict[str, np.ndarray]]
    correlations: dict[str, Correlation]
    checks: dict[str, bool]
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def summary(self) -> dict:
        return {
            "figure": self.figure,
            "correlations": {k: {"rho": c.rho, "pvalue": c.pvalue, "n_used": c.n_used,
                                 "n_excluded": c.n_excluded} for k, c in self.correlations.items()},
            "checks": self.checks,
            "details": _jsonable(self.details),
        }

    def write(self, out_dir, fmt: str = "csv") -> list[Path]:
        """Write raw and [0, 1]-normalized panel tables plus a JSON summary."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, cols in self.panels.items():
            for norm in (False, True):
                stem = f"{self.figure}_{name}{'_normalized' if norm else ''}"
                data = {k: (minmax(v) if norm and k != cols_key(cols) else np.asarray(v, float))
                        for k, v in cols.items()}
                p = out / f"{stem}.{fmt}"
                write_table(p, data, fmt, normalized=norm)
                paths.append(p)
        p = out / f"{self.figure}_summary.json"
        p.write_text(json.dumps(self.summary(), indent=2, sort_keys=True))
        paths.append(p)
        return paths


def cols_key(cols: dict) -> str:
    """Name of the abscissa column (the first one)."""
    return next(iter(cols))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    if isinstance(x, (np.integer, np.bool_)):
        return x.item()
    return x


def write_table(path, columns: dict, fmt: str = "csv", normalized: bool = False) -> None:
    """Write equal-length columns as CSV (with a normalization header) or JSON."""
    path = Path(path)
    if fmt == "json":
        path.write_text(json.dumps({"normalized": normalized,
                                    "columns": _jsonable({k: np.asarray(v) for k, v in columns.items()})},
                                   indent=2))
        return
    if fmt != "csv":
        raise PreconditionError(f"unknown format {fmt!r}")
    names = list(columns)
    arrs = [np.asarray(columns[k], dtype=float) for k in names]
    with open(path, "w", newline="") as fh:
        fh.write(f"# normalized={'minmax' if normalized else 'none'}\n")
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*arrs):
            w.writerow([repr(float(v)) for v in row])


def _opts(overrides: dict | None) -> dict:
    o = dict(DEFAULTS)
    for k, v in (overrides or {}).items():
        if k not in DEFAULTS:
            raise PreconditionError(f"unknown override {k!r}; expected one of {sorted(DEFAULTS)}")
        o[k] = v
    return o


def _scan_panel(h, spec: KernelSpec, o: dict):
    k = kernel_tables(spec, h.n_qubits)
    thetas = np.linspace(0.0, o["theta_stop"], o["n_theta"])
    cfg = FlowConfig(t_max=o["t_max"], n_samples=o["n_samples"])
    s = basis_scan(h, k, thetas, cfg=cfg, threshold=o["threshold"], C=o["C"],
                   n_jobs=o["threads"], allow_degenerate=True)
    return {"theta": s.theta, "m_theta": s.m_theta, "n_theta": s.n_theta, "m_k": s.m_k,
            "n_k": s.n_k, "t_overlap": s.t_overlap, "t_energy": s.t_energy}


def _argmin_zero(t: np.ndarray) -> bool:
    return bool(np.isfinite(t[0]) and int(np.argmin(t)) == 0)


def _rho(corrs: dict, key: str, x, y, min_points: int = 5) -> float:
    try:
        corrs[key] = rank_correlation(x, y, min_points)
        return corrs[key].rho
    except PreconditionError:
        corrs[key] = Correlation(math.nan, math.nan, int(np.isfinite(np.asarray(y, float)).sum()), 0)
        return math.nan


def _scan_figure(fig: str, models: dict, metric: str, time_col: str, o: dict) -> FigureResult:
    spec = KernelSpec(depth=1, activation="relu")
    panels, corrs, checks, details = {}, {}, {}, {}
    for name, h in models.items():
        p = _scan_panel(h, spec, o)
        panels[name] = p
        rho = _rho(corrs, f"{name}:{metric}~{time_col}", p[metric], p[time_col])
        k = int(np.argmin(p[time_col]))
        details[f"{name}_argmin_theta"] = float(p["theta"][k])
        checks[f"{name}_argmin_at_zero"] = _argmin_zero(p[time_col])
        if metric == "m_theta":
            checks[f"{name}_spearman_le_-{o['min_rho']}"] = bool(rho <= -o["min_rho"])
        else:
            checks[f"{name}_spearman_ge_{o['min_rho']}"] = bool(rho >= o["min_rho"])
    return FigureResult(fig, panels, corrs, checks, details)


def _init_panel(label: str, points, spec: KernelSpec, o: dict) -> dict:
    """Initialization averages for ``points``: a list of (x, Hamiltonian)."""
    cols = {label: [], "mean_overlap": [], "overlap_error": [], "m_k": [], "mean_excess": [],
            "excess_error": [], "n_k": [], "mean_energy": []}
    kernels: dict[int, object] = {}
    for x, h in points:
        n = h.n_qubits
        if n not in kernels:
            kernels[n] = kernel_tables(spec, n)
        s = init_statistics(kernels[n], h, o["init_samples"], seed=o["seed"],
                            n_jobs=o["threads"], allow_degenerate=True)
        r = compute_metrics(h, kernels[n], allow_degenerate=True)
        eg = float(h.spectrum().ground_energy)
        for key, v in ((label, x), ("mean_overlap", s.mean_overlap), ("overlap_error", s.overlap_error),
                       ("m_k", r.m_k), ("mean_excess", s.mean_energy - eg),
                       ("excess_error", s.energy_error), ("n_k", r.n_k),
                       ("mean_energy", s.mean_energy)):
            cols[key].append(v)
    return {k: np.asarray(v, dtype=float) for k, v in cols.items()}


def _init_figure(fig: str, o: dict) -> FigureResult:
    relu1 = KernelSpec(depth=1, activation="relu")
    if fig == "fig4":
        specs = {"h_theta": relu1, "tfim_field": relu1, "j1j2": relu1}
    else:
        specs = {"h_theta": KernelSpec(depth=1, activation="tanh"),
                 "tfim_field": KernelSpec(depth=2, activation="relu"),
                 "ising": KernelSpec(depth=1, activation="sigmoid")}
    n = o["n_init"]
    thetas = np.linspace(0.0, math.pi, o["n_theta_init"])
    hs = np.linspace(-o["h_max"], o["h_max"], o["n_h"])
    panels = {
        "h_theta": _init_panel("theta", [(t, build_model("local_field", n, {"theta": t}))
                                         for t in thetas], specs["h_theta"], o),
        "tfim_field": _init_panel("h", [(h, build_model("tfim", n, {"h": h})) for h in hs],
                                  specs["tfim_field"], o),
    }
    last = "j1j2" if fig == "fig4" else "ising"
    if fig == "fig4":
        pts = [(m, build_model("j1j2", m, {"J1": 1.0, "J2": 0.5})) for m in o["chain_sizes"]]
    else:
        pts = [(m, build_model("tfim", m, {"h": 1.0})) for m in o["chain_sizes"]]
    panels[last] = _init_panel("n", pts, specs[last], o)

    corrs, checks, details = {}, {}, {}
    for name, p in panels.items():
        m = min(5, p["m_k"].size)
        r_o = _rho(corrs, f"{name}:mean_overlap~m_k", p["mean_overlap"], p["m_k"], m)
        r_e = _rho(corrs, f"{name}:mean_excess~n_k", p["mean_excess"], p["n_k"], m)
        checks[f"{name}_overlap_tracks_metric"] = bool(r_o >= o["min_rho"])
        checks[f"{name}_energy_tracks_metric"] = bool(r_e >= o["min_rho"])
    tf = panels["tfim_field"]
    pos = tf["h"] > 0
    mirror = {round(float(h), 12): i for i, h in enumerate(tf["h"])}
    pairs = [(i, mirror[round(-float(tf["h"][i]), 12)]) for i in np.flatnonzero(pos)
             if round(-float(tf["h"][i]), 12) in mirror]
    checks["tfim_field_sign_asymmetry"] = bool(pairs) and all(
        tf["mean_overlap"][i] > tf["mean_overlap"][j] for i, j in pairs)
    details["sign_asymmetry_pairs"] = [(float(tf["h"][i]), float(tf["mean_overlap"][i]),
                                        float(tf["mean_overlap"][j])) for i, j in pairs]
    chain = panels[last]["mean_overlap"]
    checks[f"{last}_overlap_strictly_decreasing"] = bool(np.all(np.diff(chain) < 0))
    return FigureResult(fig, panels, corrs, checks, details)


def reproduce_figure(fig: str, overrides: dict | None = None) -> FigureResult:
    """Run the protocol behind one figure.

    Args:
        fig: One of ``fig2``, ``fig3``, ``fig4``, ``fig5``.
        overrides: Replacements for entries of :data:`DEFAULTS`.

    Returns:
        FigureResult with raw series, Spearman coefficients and checks.
    """
    if fig not in FIGURES:
        raise PreconditionError(f"unknown figure {fig!r}; expected one of {FIGURES}")
    o = _opts(overrides)
    n = o["n_scan"]
    if fig == "fig2":
        models = {"h_local": build_model("local_field", n, {"theta": 0.0}),
                  "tfim": build_model("tfim", n, {"h": 2.0})}
        return _scan_figure(fig, models, "m_theta", "t_overlap", o)
    if fig == "fig3":
        models = {"heisenberg": build_model("heisenberg_tf", n, {"h": 1.0}),
                  "xyz": build_model("xyz", n, {"alpha": -2.0, "beta": -1.0, "gamma": -0.5})}
        return _scan_figure(fig, models, "n_theta", "t_energy", o)
    return _init_figure(fig, o)
