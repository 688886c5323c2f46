import json

import numpy as np
import pytest

from svrtune.cli import main
from svrtune.dataset import (
    normalizer_from_json,
    invert_normalizer,
    parse_csv,
    series_to_csv,
    supervised_from_csv,
)
from svrtune.svr import model_from_json
from svrtune.synth import synthetic_ohlcv


@pytest.fixture()
def data_csv(tmp_path):
    series = synthetic_ohlcv(rows=171, seed=0)
    path = tmp_path / "prices.csv"
    path.write_text(series_to_csv(series), encoding="utf-8")
    return path


def shared(data, out, train_n=120, test_n=50):
    return ["--data", str(data), "--out", str(out),
            "--train-n", str(train_n), "--test-n", str(test_n)]


class TestIngest:
    def test_writes_supervised_set(self, data_csv, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["ingest", *shared(data_csv, out)]) == 0
        sset, has_target = supervised_from_csv((out / "supervised.csv").read_text())
        assert has_target and len(sset) == 170
        assert "170" in capsys.readouterr().out

    def test_normalize_writes_invertible_map(self, data_csv, tmp_path):
        out = tmp_path / "run"
        assert main(["ingest", *shared(data_csv, out), "--normalize"]) == 0
        nmap = normalizer_from_json((out / "normalizer.json").read_text())
        sset, _ = supervised_from_csv((out / "supervised.csv").read_text())
        # normalized targets invert to original price units
        raw = parse_csv(data_csv.read_text())
        original_targets = np.array([b.close for b in raw.rows[1:]])
        back = invert_normalizer(nmap, "next_close", sset.targets)
        np.testing.assert_allclose(back, original_targets, rtol=1e-12)

    def test_malformed_csv_exits_3(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("date,open,high,low,close,adj close,volume\n2020-01-02,1,2,0.5,1,1,oops\n")
        assert main(["ingest", "--data", str(bad), "--out", str(tmp_path / "o")]) == 3
        assert "row 2" in capsys.readouterr().err

    def test_missing_data_flag_exits_2(self, tmp_path):
        assert main(["ingest", "--out", str(tmp_path / "o")]) == 2


class TestSweep:
    def test_epsilon_sweep_with_heuristic_fixed_values(self, data_csv, tmp_path):
        out = tmp_path / "run"
        code = main(["sweep", *shared(data_csv, out), "--normalize",
                     "--vary", "epsilon", "--grid", "0.01:0.30:50"])
        assert code == 0
        lines = (out / "sweep.csv").read_text().strip().splitlines()
        assert lines[0] == "value,train_mse,test_mse,n_sv"
        assert len(lines) == 51

    def test_c_sweep_wide_grid(self, data_csv, tmp_path):
        out = tmp_path / "run"
        code = main(["sweep", *shared(data_csv, out), "--normalize",
                     "--vary", "c", "--grid", "0.1:6000:3",
                     "--fix", "epsilon=0.039", "--fix", "gamma=0.0625"])
        assert code == 0
        lines = (out / "sweep.csv").read_text().strip().splitlines()
        assert len(lines) == 4

    def test_single_point_grid(self, data_csv, tmp_path):
        out = tmp_path / "run"
        code = main(["sweep", *shared(data_csv, out),
                     "--vary", "gamma", "--grid", "0.5:1.0:1",
                     "--fix", "c=2", "--fix", "epsilon=0.05"])
        assert code == 0
        assert len((out / "sweep.csv").read_text().strip().splitlines()) == 2

    def test_bad_grid_exits_2(self, data_csv, tmp_path):
        with pytest.raises(SystemExit) as err:
            main(["sweep", *shared(data_csv, tmp_path / "o"),
                  "--vary", "epsilon", "--grid", "0.3:0.1:5"])
        assert err.value.code == 2


class TestTune:
    def test_de_tune_writes_report_model_history(self, data_csv, tmp_path):
        out = tmp_path / "run"
        code = main(["tune", *shared(data_csv, out), "--normalize",
                     "--method", "de", "--c-range", "0.5:8", "--epsilon-range", "0.02:0.1",
                     "--gamma-range", "0.3:1.5", "--np", "5", "--gmax", "3",
                     "--threads", "1"])
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["method"] == "de_svm"
        assert 0.5 <= report["optimized"]["c"] <= 8.0
        assert 0.02 <= report["optimized"]["epsilon"] <= 0.1
        assert 0.3 <= report["optimized"]["gamma"] <= 1.5
        assert "wall_time" not in report
        model = model_from_json((out / "model.json").read_text())
        assert model.n_features == 5
        history = (out / "history.csv").read_text().strip().splitlines()
        assert history[0] == "generation,best_f,mean_f"
        assert len(history) == 1 + 4

    def test_rerun_is_byte_identical(self, data_csv, tmp_path):
        args = ["tune", *shared(data_csv, tmp_path / "run"), "--normalize",
                "--method", "pso", "--c-range", "0.5:8", "--epsilon-range", "0.02:0.1",
                "--gamma-range", "0.3:1.5", "--swarm", "5", "--iters", "3",
                "--seed", "7", "--threads", "1"]
        assert main(args) == 0
        first = {name: (tmp_path / "run" / name).read_bytes()
                 for name in ("report.json", "model.json", "history.csv")}
        assert main(args) == 0
        for name, blob in first.items():
            assert (tmp_path / "run" / name).read_bytes() == blob

    def test_thread_count_does_not_change_outputs(self, data_csv, tmp_path):
        base = ["tune", "--data", str(data_csv), "--normalize",
                "--train-n", "120", "--test-n", "50",
                "--method", "de", "--c-range", "0.5:8", "--epsilon-range", "0.02:0.1",
                "--gamma-range", "0.3:1.5", "--np", "5", "--gmax", "3", "--seed", "3"]
        assert main([*base, "--out", str(tmp_path / "a"), "--threads", "1"]) == 0
        assert main([*base, "--out", str(tmp_path / "b"), "--threads", "2"]) == 0
        for name in ("report.json", "model.json", "history.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_preset_and_ranges_conflict_exits_2(self, data_csv, tmp_path):
        code = main(["tune", *shared(data_csv, tmp_path / "o"), "--method", "de",
                     "--preset", "apple-normalized", "--c-range", "1:5",
                     "--epsilon-range", "0.01:0.1", "--gamma-range", "0.1:1"])
        assert code == 2

    def test_missing_box_exits_2(self, data_csv, tmp_path):
        assert main(["tune", *shared(data_csv, tmp_path / "o"), "--method", "de"]) == 2

    def test_preset_box_accepted(self, data_csv, tmp_path):
        out = tmp_path / "run"
        code = main(["tune", *shared(data_csv, out), "--normalize",
                     "--method", "de", "--preset", "honeywell-raw",
                     "--np", "4", "--gmax", "2", "--threads", "1"])
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert 1.0 <= report["optimized"]["c"] <= 60.0

    def test_collapsed_box_equals_direct_evaluation(self, data_csv, tmp_path):
        from svrtune.cli import _prepare, _run_config, build_parser
        from svrtune.svr import SolverSettings
        from svrtune.tuning import evaluate_triple

        out = tmp_path / "run"
        eps = 1e-9
        code = main(["tune", *shared(data_csv, out), "--normalize",
                     "--method", "de", "--np", "4", "--gmax", "2", "--threads", "1",
                     "--c-range", f"2:{2 + eps}",
                     "--epsilon-range", f"0.05:{0.05 + eps}",
                     "--gamma-range", f"0.5:{0.5 + eps}"])
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        triple = report["optimized"]
        assert triple["c"] == pytest.approx(2.0, abs=2e-9)
        args = build_parser().parse_args(
            ["train", *shared(data_csv, out), "--normalize"])
        args._file_config = {}
        train, test, _ = _prepare(_run_config(args))
        direct, _ = evaluate_triple(train, test, triple["c"], triple["epsilon"],
                                    triple["gamma"], settings=SolverSettings())
        assert report["train_mse"] == direct.train_mse
        assert report["test_mse"] == direct.test_mse
        assert report["n_sv"] == direct.n_sv


class TestTrain:
    def test_default_parameters(self, data_csv, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["train", *shared(data_csv, out), "--normalize"]) == 0
        printed = capsys.readouterr().out
        assert "train_mse=" in printed and "test_mse=" in printed and "n_sv=" in printed
        model = model_from_json((out / "model.json").read_text())
        assert model.params.c == 1.0
        assert model.params.epsilon == 0.1
        assert model.params.kernel.gamma == 0.2

    def test_published_exploration_point(self, data_csv, tmp_path):
        out = tmp_path / "run"
        code = main(["train", *shared(data_csv, out), "--normalize",
                     "--c", "500", "--epsilon", "0.039", "--gamma", "0.0625"])
        assert code == 0
        model = model_from_json((out / "model.json").read_text())
        assert model.params.c == 500.0

    def test_invalid_c_exits_2(self, data_csv, tmp_path):
        with pytest.raises(SystemExit) as err:
            main(["train", *shared(data_csv, tmp_path / "o"), "--c", "0"])
        assert err.value.code == 2


class TestPredict:
    def test_round_trip_with_normalizer(self, data_csv, tmp_path):
        out = tmp_path / "run"
        assert main(["ingest", *shared(data_csv, out), "--normalize"]) == 0
        assert main(["train", *shared(data_csv, out), "--normalize"]) == 0
        code = main(["predict", "--model", str(out / "model.json"),
                     "--data", str(out / "supervised.csv"),
                     "--normalizer", str(out / "normalizer.json"),
                     "--out", str(out)])
        assert code == 0
        lines = (out / "predictions.csv").read_text().strip().splitlines()
        assert lines[0] == "actual,predicted"
        assert len(lines) == 171  # header + 170 rows
        # actual column in price units after denormalization
        first_actual = float(lines[1].split(",")[0])
        raw = parse_csv(data_csv.read_text())
        assert first_actual == pytest.approx(raw.rows[1].close, rel=1e-12)

    def test_dimension_mismatch_exits_4(self, data_csv, tmp_path):
        out = tmp_path / "run"
        assert main(["train", *shared(data_csv, out), "--normalize"]) == 0
        stub = tmp_path / "narrow.csv"
        stub.write_text("open,high,low,adj_close,volume,next_close\n")
        # header-only feature file is a data error
        assert main(["predict", "--model", str(out / "model.json"),
                     "--data", str(stub), "--out", str(out)]) == 3

    def test_missing_model_exits_3(self, data_csv, tmp_path):
        assert main(["predict", "--model", str(tmp_path / "nope.json"),
                     "--data", str(data_csv), "--out", str(tmp_path)]) == 3


class TestConfigFile:
    def test_config_supplies_defaults_and_flags_override(self, data_csv, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({
            "data": str(data_csv), "train_n": 120, "test_n": 50,
            "normalize": True, "c": 2.0,
        }))
        out = tmp_path / "run"
        assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
        model = model_from_json((out / "model.json").read_text())
        assert model.params.c == 2.0
        # explicit flag wins over the config value
        assert main(["train", "--config", str(cfg), "--out", str(out), "--c", "3"]) == 0
        model = model_from_json((out / "model.json").read_text())
        assert model.params.c == 3.0

    def test_missing_config_file_exits_2(self, data_csv, tmp_path):
        assert main(["train", *shared(data_csv, tmp_path / "o"),
                     "--config", str(tmp_path / "none.json")]) == 2


class TestSplitValidation:
    def test_oversized_split_exits_3(self, data_csv, tmp_path):
        assert main(["train", "--data", str(data_csv), "--out", str(tmp_path / "o"),
                     "--train-n", "500", "--test-n", "200"]) == 3

    def test_zero_test_rows_rejected_for_evaluation(self, data_csv, tmp_path):
        assert main(["train", "--data", str(data_csv), "--out", str(tmp_path / "o"),
                     "--train-n", "170", "--test-n", "0"]) == 2
