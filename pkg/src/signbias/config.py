"""YAML run configuration with schema checks and line-numbered errors.

Schema (every section and key is optional unless noted)::

    seed: 0                      # base seed for every sampled path
    threads: 1                   # worker threads/processes
    pipeline: [metrics]          # subset of PIPELINE_STEPS, run in order
    model:                       # required
      kind: tfim                 # tfim | local_field | heisenberg_tf | xyz | j1j2 | custom
      n: 5
      params: {h: 2.0}           # model parameters, see pauli.build_model
      edges: [[0, 1], [1, 2]]    # default: open chain
    kernel:
      activation: relu           # relu | erf | tanh | sigmoid | linear
      depth: 1
      weight_variance: 1.0
      bias_variance: 1.0
      zero_bias_init: true
    flow:
      t_max: 50.0
      n_samples: 2001
      rel_tol: 1.0e-8
      abs_tol: 1.0e-10
      gauge: literal             # literal | unit_inverse_kernel
      psi0: eigensum             # eigensum | uniform | ck_sample
      threshold: 0.95
      C: 4.0
    scan:
      theta_start: 0.0
      theta_stop: 1.5707963267948966
      n_theta: 21
      psi0_mode: transport       # transport | eigensum
    sampling:
      n_samples: 1000
      chunk: 256
      allow_degenerate: false
    sr:
      epsilon_rel: [1.0e-3, 10.0]  # epsilon in units of the smallest NTK eigenvalue
    mps:
      n: 4
      chi: 3
      n_samples: 100000
      dist: normal               # normal | orthogonal | shared | asymmetric
"""

from __future__ import annotations

import copy
import math
from pathlib import Path

import yaml

from .exceptions import ConfigError
from .kernels import ACTIVATIONS
from .mps import DISTRIBUTIONS
from .pauli import MODEL_KINDS

PIPELINE_STEPS = ("kernel", "metrics", "flow", "init_stats", "scan", "sr", "mps_ck")


def _num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


# field -> (default, check, description)
SCHEMA: dict[str, dict[str, tuple]] = {
    "model": {
        "kind": (None, lambda v: v in MODEL_KINDS, f"one of {MODEL_KINDS}"),
        "n": (None, lambda v: _int(v) and 1 <= v <= 14, "an integer in [1, 14]"),
        "params": ({}, lambda v: isinstance(v, dict), "a mapping"),
        "edges": (None, lambda v: v is None or (isinstance(v, list) and all(
            isinstance(e, list) and len(e) == 2 and all(_int(i) for i in e) for e in v)),
                  "a list of [i, j] integer pairs"),
    },
    "kernel": {
        "activation": ("relu", lambda v: v in ACTIVATIONS, f"one of {ACTIVATIONS}"),
        "depth": (1, lambda v: _int(v) and v >= 1, "an integer >= 1"),
        "weight_variance": (1.0, lambda v: _num(v) and v > 0, "a positive number"),
        "bias_variance": (1.0, lambda v: _num(v) and v >= 0, "a nonnegative number"),
        "zero_bias_init": (True, lambda v: isinstance(v, bool), "a boolean"),
    },
    "flow": {
        "t_max": (50.0, lambda v: _num(v) and v > 0, "a positive number"),
        "n_samples": (2001, lambda v: _int(v) and v >= 2, "an integer >= 2"),
        "rel_tol": (1e-8, lambda v: _num(v) and v > 0, "a positive number"),
        "abs_tol": (1e-10, lambda v: _num(v) and v > 0, "a positive number"),
        "gauge": ("literal", lambda v: v in ("literal", "unit_inverse_kernel"),
                  "'literal' or 'unit_inverse_kernel'"),
        "psi0": ("eigensum", lambda v: v in ("eigensum", "uniform", "ck_sample"),
                 "'eigensum', 'uniform' or 'ck_sample'"),
        "threshold": (0.95, lambda v: _num(v) and 0 < v < 1, "a number in (0, 1)"),
        "C": (4.0, lambda v: _num(v) and v > 2, "a number > 2"),
    },
    "scan": {
        "theta_start": (0.0, _num, "a number"),
        "theta_stop": (math.pi / 2, _num, "a number"),
        "n_theta": (21, lambda v: _int(v) and v >= 2, "an integer >= 2"),
        "psi0_mode": ("transport", lambda v: v in ("transport", "eigensum"),
                      "'transport' or 'eigensum'"),
    },
    "sampling": {
        "n_samples": (1000, lambda v: _int(v) and v >= 2, "an integer >= 2"),
        "chunk": (256, lambda v: _int(v) and v >= 1, "an integer >= 1"),
        "allow_degenerate": (False, lambda v: isinstance(v, bool), "a boolean"),
    },
    "sr": {
        "epsilon_rel": ([1e-3, 10.0], lambda v: isinstance(v, list) and v and all(
            _num(x) and x > 0 for x in v), "a list of positive numbers"),
    },
    "mps": {
        "n": (4, lambda v: _int(v) and 1 <= v <= 12, "an integer in [1, 12]"),
        "chi": (3, lambda v: _int(v) and v >= 1, "an integer >= 1"),
        "n_samples": (100_000, lambda v: _int(v) and v >= 2, "an integer >= 2"),
        "dist": ("normal", lambda v: v in DISTRIBUTIONS, f"one of {DISTRIBUTIONS}"),
    },
}

TOP_LEVEL = {
    "seed": (0, lambda v: _int(v) and v >= 0, "a nonnegative integer"),
    "threads": (1, lambda v: _int(v) and (v >= 1 or v == -1), "a positive integer or -1"),
    "pipeline": (["metrics"], lambda v: isinstance(v, list) and v and all(
        s in PIPELINE_STEPS for s in v), f"a non-empty list drawn from {PIPELINE_STEPS}"),
}


def _line_map(node, path=(), out=None) -> dict:
    """Map key paths to 1-based source lines from a composed YAML node."""
    out = {} if out is None else out
    out.setdefault(path, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = (*path, k.value)
            out[key] = k.start_mark.line + 1
            _line_map(v, key, out)
    return out


def _error(lines: dict, path: tuple, msg: str) -> ConfigError:
    line = lines.get(path)
    while line is None and path:
        path = path[:-1]
        line = lines.get(path)
    where = f"line {line}: " if line else ""
    return ConfigError(f"{where}{'.'.join(map(str, path)) or '<root>'}: {msg}")


def parse_config(text: str) -> dict:
    """Parse and validate a YAML config string, filling defaults.

    Raises:
        ConfigError: With the offending line and dotted key path.
    """
    try:
        node = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}: " if mark else ""
        raise ConfigError(f"{where}invalid YAML: {getattr(exc, 'problem', exc)}") from None
    if raw is None:
        raw = {}
    lines = _line_map(node) if node is not None else {}
    if not isinstance(raw, dict):
        raise _error(lines, (), "top level must be a mapping")
    cfg: dict = {}
    for key in raw:
        if key not in SCHEMA and key not in TOP_LEVEL:
            raise _error(lines, (key,), f"unknown key; expected one of "
                                        f"{sorted([*SCHEMA, *TOP_LEVEL])}")
    for key, (default, check, desc) in TOP_LEVEL.items():
        v = raw.get(key, copy.deepcopy(default))
        if not check(v):
            raise _error(lines, (key,), f"must be {desc}, got {v!r}")
        cfg[key] = v
    if "model" not in raw:
        raise _error(lines, (), "missing required section 'model'")
    for sec, fields in SCHEMA.items():
        given = raw.get(sec) or {}
        if not isinstance(given, dict):
            raise _error(lines, (sec,), "section must be a mapping")
        for key in given:
            if key not in fields:
                raise _error(lines, (sec, key), f"unknown key; expected one of {sorted(fields)}")
        out = {}
        for key, (default, check, desc) in fields.items():
            if key not in given and default is None and sec == "model" and key != "edges":
                raise _error(lines, (sec,), f"missing required key '{key}'")
            v = given.get(key, copy.deepcopy(default))
            if not check(v):
                raise _error(lines, (sec, key), f"must be {desc}, got {v!r}")
            out[key] = v
        cfg[sec] = out
    return cfg


def load_config(path) -> dict:
    """Read and validate a YAML config file."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    return parse_config(text)
