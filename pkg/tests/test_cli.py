"""End-to-end command-line tests.

Everything goes through main(argv) so the exit-code contract is what is
actually asserted: 0 success, 1 I/O error, 2 data error, 3 config
error.  One small synthetic study is shared across the module; each
command writes into its own tmp files.
"""

import json
import subprocess
import sys

import numpy as np
import pytest

from gazesense.cli import main
from gazesense.config import PipelineConfig, save_config
from gazesense.decision import DEFAULT_GROUP_SIZES
from gazesense.evaluation import load_report
from gazesense.windows import read_matrix_csv


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def study_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("study")
    code = main(["synth", "--out", str(root), "--participants", "2",
                 "--trips-per-block", "2", "--duration", "120",
                 "--with-can", "--seed", "11"])
    assert code == 0
    return root


@pytest.fixture(scope="module")
def features_csv(study_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("feat")
    csv_path = out / "features.csv"
    code = main(["extract", "--manifest", str(study_dir / "manifest.json"),
                 "--out-csv", str(csv_path),
                 "--out-bin", str(out / "features.bin"), "--jobs", "1"])
    assert code == 0
    return csv_path


@pytest.fixture(scope="module")
def report_json(features_csv, tmp_path_factory):
    out = tmp_path_factory.mktemp("rep") / "report.json"
    code = main(["evaluate", "--features", str(features_csv),
                 "--out", str(out)])
    assert code == 0
    return out


class TestSynth:
    def test_layout_and_stdout(self, study_dir, capsys):
        # fixture already ran synth; run again to capture its output
        other = study_dir.parent / "again"
        code, out, _ = run(["synth", "--out", str(other), "--participants",
                            "2", "--trips-per-block", "2", "--duration",
                            "120", "--with-can", "--seed", "11"], capsys)
        assert code == 0
        assert "wrote 12 trips" in out
        assert (study_dir / "manifest.json").exists()
        assert len(list((study_dir / "trips").glob("*.csv"))) == 12
        assert len(list((study_dir / "can").glob("*.csv"))) == 12

    def test_same_seed_same_bytes(self, study_dir):
        twin = study_dir.parent / "again"
        for rel in sorted(p.relative_to(study_dir)
                          for p in study_dir.rglob("*") if p.is_file()):
            assert (study_dir / rel).read_bytes() == (twin / rel).read_bytes()

    def test_seed_flag_beats_env(self, tmp_path, monkeypatch):
        a, b = tmp_path / "a", tmp_path / "b"
        monkeypatch.setenv("GAZESENSE_SEED", "999")
        argv = ["synth", "--participants", "1", "--trips-per-block", "1",
                "--duration", "120", "--seed", "11"]
        assert main(argv + ["--out", str(a)]) == 0
        monkeypatch.delenv("GAZESENSE_SEED")
        assert main(argv + ["--out", str(b)]) == 0
        names = sorted(p.name for p in (a / "trips").iterdir())
        assert names == sorted(p.name for p in (b / "trips").iterdir())
        for n in names:
            assert (a / "trips" / n).read_bytes() == (b / "trips" / n).read_bytes()

    def test_env_seed_changes_output(self, tmp_path, monkeypatch):
        a, b = tmp_path / "a", tmp_path / "b"
        argv = ["synth", "--participants", "1", "--trips-per-block", "1",
                "--duration", "120"]
        monkeypatch.setenv("GAZESENSE_SEED", "1")
        assert main(argv + ["--out", str(a)]) == 0
        monkeypatch.setenv("GAZESENSE_SEED", "2")
        assert main(argv + ["--out", str(b)]) == 0
        name = next((a / "trips").iterdir()).name
        assert (a / "trips" / name).read_bytes() != (b / "trips" / name).read_bytes()

    def test_bad_env_seed_is_config_error(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("GAZESENSE_SEED", "lots")
        code, _, err = run(["synth", "--out", str(tmp_path / "x"),
                            "--participants", "1", "--trips-per-block", "1",
                            "--duration", "120"], capsys)
        assert code == 3
        assert "GAZESENSE_SEED" in err


class TestExtract:
    def test_output_files_and_stdout(self, study_dir, tmp_path, capsys):
        csv_path = tmp_path / "f.csv"
        bin_path = tmp_path / "f.bin"
        code, out, _ = run(
            ["extract", "--manifest", str(study_dir / "manifest.json"),
             "--out-csv", str(csv_path), "--out-bin", str(bin_path),
             "--jobs", "1"], capsys)
        assert code == 0
        assert "rows=" in out and "columns=170" in out and "dropped=" in out
        matrix = read_matrix_csv(csv_path)
        assert matrix.n_features == 170
        # 120 s trips, 60 s windows shifted by 1 s: 61 windows per trip
        assert matrix.n_rows == 12 * 61
        assert bin_path.exists()

    def test_jobs_give_identical_bytes(self, study_dir, features_csv,
                                       tmp_path):
        csv2 = tmp_path / "f2.csv"
        code = main(["extract", "--manifest",
                     str(study_dir / "manifest.json"),
                     "--out-csv", str(csv2),
                     "--out-bin", str(tmp_path / "f2.bin"), "--jobs", "2"])
        assert code == 0
        assert csv2.read_bytes() == features_csv.read_bytes()

    def test_can_source(self, study_dir, tmp_path, capsys):
        code, out, _ = run(
            ["extract", "--manifest", str(study_dir / "manifest.json"),
             "--source", "can", "--out-csv", str(tmp_path / "c.csv"),
             "--out-bin", str(tmp_path / "c.bin"), "--jobs", "1"], capsys)
        assert code == 0
        matrix = read_matrix_csv(tmp_path / "c.csv")
        assert matrix.n_features < 170  # one channel and its derivatives

    def test_can_without_channels_is_data_error(self, tmp_path, capsys):
        bare = tmp_path / "bare"
        assert main(["synth", "--out", str(bare), "--participants", "1",
                     "--trips-per-block", "1", "--duration", "120",
                     "--seed", "3"]) == 0
        capsys.readouterr()
        code, _, err = run(
            ["extract", "--manifest", str(bare / "manifest.json"),
             "--source", "can", "--out-csv", str(tmp_path / "x.csv"),
             "--out-bin", str(tmp_path / "x.bin")], capsys)
        assert code == 2
        assert "CAN" in err

    def test_missing_manifest_is_io_error(self, tmp_path, capsys):
        code, _, err = run(["extract", "--manifest",
                            str(tmp_path / "absent.json")], capsys)
        assert code == 1
        assert "absent.json" in err


class TestEvaluate:
    def test_report_written(self, report_json, capsys):
        report = load_report(report_json)
        assert report["task"] == "early_warning"
        assert report["scheme"] == "loso"
        assert len(report["folds"]) == 2

    def test_stdout_summary(self, features_csv, tmp_path, capsys):
        code, out, _ = run(["evaluate", "--features", str(features_csv),
                            "--out", str(tmp_path / "r.json")], capsys)
        assert code == 0
        assert "task=early_warning" in out
        assert "auroc=" in out

    def test_task_flag(self, features_csv, tmp_path):
        out = tmp_path / "r.json"
        assert main(["evaluate", "--features", str(features_csv),
                     "--task", "above_limit", "--out", str(out)]) == 0
        assert load_report(out)["task"] == "above_limit"

    def test_missing_features_is_io_error(self, tmp_path, capsys):
        code, _, _ = run(["evaluate", "--features",
                          str(tmp_path / "no.csv")], capsys)
        assert code == 1


class TestDecision:
    def test_curve_and_sweep(self, report_json, tmp_path, capsys):
        curve = tmp_path / "curve.csv"
        sweep = tmp_path / "sweep.csv"
        code, out, _ = run(["decision", "--report", str(report_json),
                            "--curve-out", str(curve),
                            "--sweep-out", str(sweep)], capsys)
        assert code == 0
        lines = curve.read_text().splitlines()
        assert lines[0] == "t_s,balanced_accuracy,ci_low,ci_high,n_trips"
        first = lines[1].split(",")
        assert float(first[0]) == 60.0  # first full window of a 120 s trip
        assert int(first[4]) == 12
        rows = sweep.read_text().splitlines()
        assert rows[0] == "group_size,n_groups,auroc,balanced_accuracy"
        assert len(rows) == 1 + len(DEFAULT_GROUP_SIZES)
        sizes = [int(r.split(",")[0]) for r in rows[1:]]
        assert tuple(sizes) == DEFAULT_GROUP_SIZES
        assert "group_size" in out

    def test_multiclass_report_is_data_error(self, features_csv, tmp_path,
                                             capsys):
        rep = tmp_path / "multi.json"
        assert main(["evaluate", "--features", str(features_csv),
                     "--task", "multiclass", "--out", str(rep)]) == 0
        capsys.readouterr()
        code, _, err = run(["decision", "--report", str(rep),
                            "--curve-out", str(tmp_path / "c.csv"),
                            "--sweep-out", str(tmp_path / "s.csv")], capsys)
        assert code == 2

    def test_deterministic_curve(self, report_json, tmp_path):
        outs = []
        for name in ("a", "b"):
            c = tmp_path / f"{name}.csv"
            assert main(["decision", "--report", str(report_json),
                         "--curve-out", str(c),
                         "--sweep-out", str(tmp_path / f"{name}s.csv"),
                         "--seed", "4"]) == 0
            outs.append(c.read_bytes())
        assert outs[0] == outs[1]


class TestReport:
    def test_text_format(self, report_json, capsys):
        code, out, _ = run(["report", "--report", str(report_json)], capsys)
        assert code == 0
        assert "macro metrics (mean ± sd over folds):" in out
        assert "feature-group importance" in out

    def test_json_format_round_trips(self, report_json, capsys):
        code, out, _ = run(["report", "--report", str(report_json),
                            "--format", "json"], capsys)
        assert code == 0
        assert json.loads(out) == load_report(report_json)


class TestConfigFile:
    def test_config_drives_defaults(self, features_csv, tmp_path):
        cfg = PipelineConfig(task="above_limit")
        cfg_path = tmp_path / "cfg.json"
        save_config(cfg, cfg_path)
        out = tmp_path / "r.json"
        assert main(["--config", str(cfg_path), "evaluate",
                     "--features", str(features_csv),
                     "--out", str(out)]) == 0
        assert load_report(out)["task"] == "above_limit"

    def test_flag_overrides_config(self, features_csv, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        save_config(PipelineConfig(task="above_limit"), cfg_path)
        out = tmp_path / "r.json"
        assert main(["--config", str(cfg_path), "evaluate",
                     "--features", str(features_csv), "--task",
                     "early_warning", "--out", str(out)]) == 0
        assert load_report(out)["task"] == "early_warning"

    def test_bad_config_is_config_error(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text('{"train": {"C": -1.0}}\n')
        code, _, err = run(["--config", str(cfg_path), "report",
                            "--report", "whatever.json"], capsys)
        assert code == 3
        assert "config error" in err

    def test_unknown_config_key_is_config_error(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text('{"windows": {}}\n')
        code, _, _ = run(["--config", str(cfg_path), "report",
                          "--report", "whatever.json"], capsys)
        assert code == 3


class TestParser:
    def test_unknown_subcommand_exits_usage(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_no_subcommand_exits_usage(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "gazesense", "--help"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert "extract" in proc.stdout and "decision" in proc.stdout
