import json

import pytest
import yaml

from qcbo.circuit import parse_qasm
from qcbo.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from qcbo.config import ConfigError, RunConfig, config_from_dict, load_config, parse_value, set_dotted

SMALL = {
    "qubits": 2,
    "data": {"synthetic": {"n": 400, "d": 4, "informative": 2, "margin": 2.0}, "test_size": 60, "val_size": 60},
    "search": {"initial": 3, "iters": 2, "n_cands": 3, "m_eval": 1, "mc_samples": 3, "hidden": 8,
               "init_epochs": 2, "retrain_epochs": 1, "checkpoint_every": 1,
               "train": {"epochs": 1, "batch_size": 32, "subset_size": 40},
               "final_train": {"epochs": 1, "batch_size": 64, "subset_size": 100}},
    "sweep": {"T1": [50.0, 100.0], "T2": [60.0, 240.0], "epochs": 1, "subset_size": 40},
}


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "cfg.yaml"
    p.write_text(yaml.safe_dump(SMALL))
    return p


def run(tmp_path, cfg_file, name, *extra):
    out = tmp_path / name
    code = main(["search", "--config", str(cfg_file), "--out", str(out), *extra])
    return code, out


class TestConfig:
    def test_defaults_need_data(self):
        cfg, _ = load_config()
        assert cfg.qubits == 5 and cfg.search.initial == 50
        with pytest.raises(ConfigError, match="data.csv"):
            cfg.validate()

    def test_yaml_and_overrides(self, cfg_file):
        cfg, applied = load_config(cfg_file, {"search.train.epochs": 3, "search.seed": None})
        assert cfg.search.train.epochs == 3 and cfg.search.initial == 3
        assert cfg.data.synthetic.margin == 2.0
        assert applied == {"search.train.epochs": 3}
        cfg.validate()

    def test_unknown_key(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("data:\n  nope: 1\n")
        with pytest.raises(ConfigError, match="unknown"):
            load_config(p)

    def test_bad_yaml_and_missing(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("a: [1,\n")
        with pytest.raises(ConfigError):
            load_config(p)
        with pytest.raises(ConfigError):
            load_config(tmp_path / "none.yaml")

    def test_roundtrip(self, cfg_file):
        cfg, _ = load_config(cfg_file)
        assert config_from_dict(cfg.to_dict()) == cfg

    def test_helpers(self):
        d = {}
        set_dotted(d, "a.b.c", 1)
        assert d == {"a": {"b": {"c": 1}}}
        assert parse_value("3") == 3 and parse_value("0.5") == 0.5 and parse_value("gnn") == "gnn"

    def test_too_few_features(self):
        cfg = config_from_dict({**SMALL, "qubits": 6})
        with pytest.raises(ConfigError, match="features"):
            cfg.validate()
        assert isinstance(cfg, RunConfig)


class TestCli:
    def test_search_artifacts(self, tmp_path, cfg_file, capsys):
        code, out = run(tmp_path, cfg_file, "a")
        assert code == EXIT_OK
        for name in ("manifest.json", "summary.json", "archive.json", "best.json", "best.qasm", "iterations.csv",
                     "diagnostics.csv"):
            assert (out / name).exists(), name
        summary = json.loads((out / "summary.json").read_text())
        assert summary["true_evaluations"] == 3 + 2 * 1
        assert json.loads(capsys.readouterr().out.strip().splitlines()[-1])["best_hash"] == summary["best_hash"]
        assert parse_qasm((out / "best.qasm").read_text()).num_qubits == 2

    def test_deterministic(self, tmp_path, cfg_file):
        _, a = run(tmp_path, cfg_file, "a", "--strategy", "random")
        _, b = run(tmp_path, cfg_file, "b", "--strategy", "random")
        for name in ("manifest.json", "best.json", "best.qasm"):
            assert (a / name).read_text() == (b / name).read_text()
        # archives agree up to wall-clock timings
        ea, eb = (json.loads((d / "archive.json").read_text()) for d in (a, b))
        for x, y in zip(ea, eb):
            x["record"].pop("wall_times"), y["record"].pop("wall_times")
        assert ea == eb
        sa, sb = (json.loads((d / "summary.json").read_text()) for d in (a, b))
        assert sa == sb

    def test_report_and_export(self, tmp_path, cfg_file, capsys):
        _, a = run(tmp_path, cfg_file, "a")
        _, b = run(tmp_path, cfg_file, "b", "--strategy", "random")
        assert main(["report", str(a)]) == EXIT_OK
        rep = json.loads((a / "report.json").read_text())
        assert rep["strategy"] == "gnn" and (a / "pareto.csv").exists()
        assert main(["report", str(a), str(b), "--target", "0.5"]) == EXIT_OK
        assert json.loads((a / "comparison.json").read_text())["target"] == 0.5
        capsys.readouterr()
        assert main(["export-qasm", str(a)]) == EXIT_OK
        assert capsys.readouterr().out == (a / "best.qasm").read_text()

    def test_sweep(self, tmp_path, cfg_file):
        _, a = run(tmp_path, cfg_file, "a", "--strategy", "random")
        assert main(["sweep", "--run-dir", str(a), "--out", str(tmp_path / "sw")]) == EXIT_OK
        metrics = json.loads((tmp_path / "sw" / "sweep_metrics.json").read_text())
        assert metrics["thermal"]["rows"] == 2 and metrics["thermal"]["skipped"] == [[50.0, 240.0], [100.0, 240.0]]

    def test_synth_data_then_csv_search(self, tmp_path, cfg_file):
        csv_path = tmp_path / "d.csv"
        assert main(["synth-data", "-o", str(csv_path), "--n", "400", "--d", "4", "--informative", "2"]) == EXIT_OK
        code, out = run(tmp_path, cfg_file, "c", "--csv", str(csv_path), "--strategy", "random")
        assert code == EXIT_OK
        assert json.loads((out / "manifest.json").read_text())["data"]["train"] == 280

    def test_exit_codes(self, tmp_path, cfg_file):
        assert main(["search", "--config", str(tmp_path / "missing.yaml")]) == EXIT_CONFIG
        assert main(["search", "--config", str(cfg_file), "--set", "search.m_eval=9"]) == EXIT_CONFIG
        assert main(["search", "--config", str(cfg_file), "--set", "oops"]) == EXIT_CONFIG
        assert main(["search", "--csv", str(tmp_path / "none.csv")]) == EXIT_CONFIG
        assert main(["sweep"]) == EXIT_CONFIG
        assert main(["export-qasm", str(tmp_path)]) == EXIT_CONFIG
        broken = tmp_path / "best.json"
        broken.write_text("{not json")
        assert main(["export-qasm", str(broken)]) == EXIT_RUNTIME

    def test_resume_matches_uninterrupted(self, tmp_path, cfg_file):
        from qcbo.cli import prepare_data
        from qcbo.search import bo_loop
        cfg, _ = load_config(cfg_file)
        data = prepare_data(cfg).search_view()
        # interrupted run, then finished through the CLI with --resume
        bo_loop(data, cfg.search, tmp_path / "r", stop_after=1)
        assert main(["search", "--config", str(cfg_file), "--out", str(tmp_path / "r"), "--resume"]) == EXIT_OK
        _, full = run(tmp_path, cfg_file, "full")
        ra, fa = (json.loads((d / "summary.json").read_text()) for d in (tmp_path / "r", full))
        assert ra["trace"] == fa["trace"] and ra["best_hash"] == fa["best_hash"]
