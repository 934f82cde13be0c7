import json

import pytest

from signbias.cli import main

CONFIG = "model:\n  kind: tfim\n  n: 2\n  params: {h: 1.0}\nflow:\n  t_max: 10.0\n  n_samples: 101\n"


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "run.yaml"
    p.write_text(CONFIG)
    return p


class TestExitCodes:
    def test_success(self, config, tmp_path):
        assert main(["flow", "--config", str(config), "--out", str(tmp_path / "o")]) == 0
        assert (tmp_path / "o" / "flow.csv").exists()
        assert (tmp_path / "o" / "manifest.json").exists()

    def test_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["flow"])
        assert exc.value.code == 1

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit) as exc:
            main(["simulate"])
        assert exc.value.code == 1

    def test_config_error(self, tmp_path, capsys):
        p = tmp_path / "bad.yaml"
        p.write_text("model:\n  kind: tfim\n  n: 2\nkernel:\n  depth: 0\n")
        assert main(["metrics", "--config", str(p), "--out", str(tmp_path)]) == 2
        assert "line 5" in capsys.readouterr().err

    def test_bad_model_parameters(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("model:\n  kind: custom\n  n: 2\n")
        assert main(["metrics", "--config", str(p), "--out", str(tmp_path)]) == 2

    def test_numerical_failure(self, tmp_path, capsys):
        # a transverse-field-free chain has a degenerate ground level
        p = tmp_path / "deg.yaml"
        p.write_text("model:\n  kind: tfim\n  n: 3\n  params: {h: 0.0}\n")
        assert main(["metrics", "--config", str(p), "--out", str(tmp_path)]) == 3
        assert "degenerate" in capsys.readouterr().err

    def test_verify_failure_exit_code(self, monkeypatch):
        from signbias import verify
        fake = verify.CriterionResult(1, "x", False, "forced", 1.0, 0.0)
        monkeypatch.setattr(verify, "run_all", lambda nums=None: [fake])
        assert main(["verify", "--criteria", "1"]) == 3

    def test_verify_out_of_range(self):
        assert main(["verify", "--criteria", "15"]) == 1


class TestCommands:
    def test_model_info(self, config, capsys):
        assert main(["model-info", "--config", str(config)]) == 0
        info = json.loads(capsys.readouterr().out)
        assert info["n_qubits"] == 2 and info["stoquastic"]

    def test_json_output(self, config, tmp_path):
        assert main(["kernel", "--config", str(config), "--out", str(tmp_path), "--format", "json"]) == 0
        assert (tmp_path / "kernel.csv").exists()

    def test_verify_single(self, capsys):
        assert main(["verify", "--criteria", "1"]) == 0
        assert "[PASS] criterion  1" in capsys.readouterr().out

    def test_reproduce_figure_overrides(self, tmp_path, capsys):
        code = main(["reproduce-figure", "fig4", "--out", str(tmp_path), "--set", "n_init=4",
                     "--set", "n_theta_init=5", "--set", "n_h=5", "--set", "chain_sizes=[4,5,6]",
                     "--set", "init_samples=50"])
        assert code == 0
        assert (tmp_path / "fig4_summary.json").exists()
        assert (tmp_path / "fig4_h_theta_normalized.csv").read_text().startswith("# normalized=minmax")

    def test_reproduce_figure_bad_override(self, tmp_path):
        assert main(["reproduce-figure", "fig2", "--out", str(tmp_path), "--set", "bogus=1"]) == 2
