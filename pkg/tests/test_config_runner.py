import json

import numpy as np
import pytest

from signbias.config import PIPELINE_STEPS, load_config, parse_config
from signbias.exceptions import ConfigError
from signbias.runner import RunManifest, replay_manifest, run_experiment

BASE = """\
seed: 3
model:
  kind: tfim
  n: 2
  params: {h: 1.0}
kernel:
  activation: relu
flow:
  t_max: 20.0
  n_samples: 201
sampling:
  n_samples: 200
scan:
  n_theta: 5
mps:
  n: 2
  chi: 2
  n_samples: 2000
"""


class TestParseConfig:
    def test_defaults_filled(self):
        cfg = parse_config("model: {kind: tfim, n: 3}\n")
        assert cfg["seed"] == 0
        assert cfg["kernel"]["activation"] == "relu"
        assert cfg["pipeline"] == ["metrics"]

    @pytest.mark.parametrize("text, line, fragment", [
        ("model:\n  kind: tfim\n  n: 3\nkernel:\n  activation: softplus\n", 5, "kernel.activation"),
        ("model:\n  kind: tfim\n  n: -2\n", 3, "model.n"),
        ("model:\n  kind: tfim\n  n: 3\nflow:\n  tmax: 4\n", 5, "flow.tmax"),
        ("model: {kind: tfim, n: 3}\npipeline: [metrics, fly]\n", 2, "pipeline"),
    ])
    def test_errors_name_line_and_key(self, text, line, fragment):
        with pytest.raises(ConfigError) as exc:
            parse_config(text)
        msg = str(exc.value)
        assert f"line {line}" in msg and fragment in msg

    def test_missing_model(self):
        with pytest.raises(ConfigError, match="model"):
            parse_config("seed: 1\n")

    def test_invalid_yaml(self):
        with pytest.raises(ConfigError, match="line"):
            parse_config("model: [unclosed\n")

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.yaml")


class TestRunner:
    def test_all_steps_and_replay(self, tmp_path):
        cfg = parse_config(BASE)
        cfg["pipeline"] = list(PIPELINE_STEPS)
        man = run_experiment(cfg, tmp_path / "a")
        assert set(man.outputs) >= {"kernel.csv", "metrics.csv", "flow.csv", "scan.csv", "sr.csv",
                                    "init_stats.csv", "mps_covariance.csv"}
        assert all(v for v in replay_manifest(tmp_path / "a" / "manifest.json", tmp_path / "b").values())

    def test_seed_override_changes_sampled_outputs(self, tmp_path):
        cfg = parse_config(BASE)
        cfg["pipeline"] = ["init_stats"]
        a = run_experiment(cfg, tmp_path / "a")
        b = run_experiment(cfg, tmp_path / "b", seed=4)
        assert a.outputs["init_stats.csv"] != b.outputs["init_stats.csv"]
        assert RunManifest.read(tmp_path / "b" / "manifest.json").seed == 4

    def test_json_format(self, tmp_path):
        cfg = parse_config(BASE)
        man = run_experiment(cfg, tmp_path, fmt="json")
        data = json.loads((tmp_path / "metrics.json").read_text())
        assert set(data["columns"]) == {"m_theta", "n_theta", "m_k", "n_k"}
        assert "metrics.json" in man.outputs

    def test_metrics_values(self, tmp_path):
        from signbias.kernels import KernelSpec, kernel_tables
        from signbias.metrics import compute_metrics
        from signbias.pauli import build_model
        run_experiment(parse_config(BASE), tmp_path)
        lines = (tmp_path / "metrics.csv").read_text().splitlines()
        assert lines[0] == "# normalized=none"
        row = dict(zip(lines[1].split(","), map(float, lines[2].split(","))))
        ref = compute_metrics(build_model("tfim", 2, {"h": 1.0}), kernel_tables(KernelSpec(), 2))
        assert row["n_k"] == pytest.approx(ref.n_k, rel=1e-15)
