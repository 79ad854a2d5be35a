import json
import subprocess
import sys

import pytest

from abft_guard import fixtures
from abft_guard.cli import main
from abft_guard.documents import dumps


@pytest.fixture
def write_doc(tmp_path):
    def _write(name, doc):
        path = tmp_path / name
        path.write_text(dumps(doc), encoding="utf-8")
        return str(path)

    return _write


@pytest.fixture
def t4_path(write_doc):
    return write_doc("t4.json", fixtures.t4())


class TestAnalyze:
    def test_dlrm_bottom_aggregate(self, write_doc, t4_path, capsys):
        model = write_doc("bottom.json", fixtures.dlrm_mlp_bottom())
        assert main(["analyze", model, t4_path, "--pad", "eight"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["aggregate"]["ai"] == pytest.approx(7.4, abs=0.1)
        assert doc["aggregate"]["bound"] == "bandwidth"

    def test_resnet_first_conv_unpadded(self, write_doc, t4_path, capsys):
        model = write_doc("conv.json", fixtures.resnet50_first_conv())
        assert main(["analyze", model, t4_path, "--pad", "none"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["layers"][0]["ai"] == pytest.approx(44.58, abs=0.05)

    def test_empty_model_exits_2(self, write_doc, t4_path, capsys):
        doc = fixtures.dlrm_mlp_bottom()
        doc["layers"] = []
        model = write_doc("empty.json", doc)
        assert main(["analyze", model, t4_path]) == 2
        assert "no linear layers" in capsys.readouterr().err

    def test_outputs_are_byte_identical(self, write_doc, t4_path, capsys):
        model = write_doc("bottom.json", fixtures.dlrm_mlp_bottom())
        main(["analyze", model, t4_path])
        first = capsys.readouterr().out
        main(["analyze", model, t4_path])
        assert capsys.readouterr().out == first

    def test_csv_emission(self, write_doc, t4_path, tmp_path, capsys):
        model = write_doc("bottom.json", fixtures.dlrm_mlp_bottom())
        csv_path = tmp_path / "ai.csv"
        assert main(["analyze", model, t4_path, "--csv", str(csv_path)]) == 0
        capsys.readouterr()
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "layer_index,ai,bound"
        assert len(lines) == 4

    def test_invalid_json_exits_2(self, tmp_path, t4_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json", encoding="utf-8")
        assert main(["analyze", str(bad), t4_path]) == 2
        assert "error:" in capsys.readouterr().err


class TestSelect:
    def test_dlrm_all_thread_level(self, write_doc, t4_path, capsys):
        model = write_doc("bottom.json", fixtures.dlrm_mlp_bottom())
        assert main(["select", model, t4_path]) == 0
        captured = capsys.readouterr()
        doc = json.loads(captured.out)
        assert all(layer["chosen_scheme"] == "thread-one-sided" for layer in doc["layers"])
        assert "aggregate overhead" in captured.err

    def test_square_2048_goes_global(self, write_doc, t4_path, capsys):
        model = write_doc("square.json", fixtures.square_gemm_model(2048))
        assert main(["select", model, t4_path]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["layers"][0]["chosen_scheme"] == "global-abft"

    def test_timings_override(self, write_doc, t4_path, tmp_path, capsys):
        model = write_doc("square.json", fixtures.square_gemm_model(2048))
        timings = tmp_path / "timings.csv"
        timings.write_text(
            "layer_index,scheme,time_us\n"
            "0,unprotected,100\n0,global-abft,500\n0,thread-one-sided,101\n",
            encoding="utf-8",
        )
        assert main(["select", model, t4_path, "--timings", str(timings)]) == 0
        doc = json.loads(capsys.readouterr().out)
        layer = doc["layers"][0]
        assert layer["chosen_scheme"] == "thread-one-sided"
        assert layer["candidates"]["thread-one-sided"]["source"] == "measured"

    def test_unknown_layer_in_timings_exits_2(self, write_doc, t4_path, tmp_path, capsys):
        model = write_doc("square.json", fixtures.square_gemm_model(64))
        timings = tmp_path / "timings.csv"
        timings.write_text("layer_index,scheme,time_us\n5,global-abft,1\n", encoding="utf-8")
        assert main(["select", model, t4_path, "--timings", str(timings)]) == 2


class TestCheck:
    def test_injected_fault_detected(self, capsys):
        code = main(["check", "--m", "64", "--n", "64", "--k", "64",
                     "--scheme", "one-sided", "--inject", "1", "--expect-detect"])
        assert code == 0
        assert "detected: true" in capsys.readouterr().out

    def test_clean_run(self, capsys):
        code = main(["check", "--m", "32", "--n", "32", "--k", "32",
                     "--scheme", "global", "--expect-clean"])
        assert code == 0
        assert "detected: false" in capsys.readouterr().out

    def test_expectation_mismatch_exits_1(self, capsys):
        code = main(["check", "--m", "32", "--n", "32", "--k", "32",
                     "--scheme", "two-sided", "--expect-detect"])
        assert code == 1

    def test_fault_out_of_range_exits_2(self, capsys):
        code = main(["check", "--m", "16", "--n", "16", "--k", "16",
                     "--scheme", "one-sided", "--fault", "16,0,5"])
        assert code == 2

    def test_explicit_fault_detected(self, capsys):
        code = main(["check", "--m", "16", "--n", "16", "--k", "16",
                     "--scheme", "replication-full", "--fault", "3,4,7", "--expect-detect"])
        assert code == 0

    def test_invalid_tiling_exits_2(self, capsys):
        code = main(["check", "--m", "16", "--n", "16", "--k", "16",
                     "--thread-m", "5", "--scheme", "one-sided"])
        assert code == 2

    def test_deterministic_for_seed(self, capsys):
        argv = ["check", "--m", "24", "--n", "24", "--k", "24",
                "--scheme", "one-sided", "--seed", "9", "--inject", "2"]
        main(argv)
        first = capsys.readouterr().out
        main(argv)
        assert capsys.readouterr().out == first


class TestSimulate:
    def _config(self):
        return {
            "trials": 8,
            "seed": 42,
            "gemm_size": {"min": 8, "max": 16},
            "schemes": ["global-abft", "thread-one-sided"],
            "dtype": "exact-int",
        }

    def test_campaign_runs(self, write_doc, tmp_path, capsys):
        config = write_doc("campaign.json", self._config())
        csv_path = tmp_path / "rates.csv"
        assert main(["simulate", config, "--csv", str(csv_path)]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["schemes"]["global-abft"]["detection_rate"] == 1.0
        assert doc["schemes"]["thread-one-sided"]["false_positive_rate"] == 0.0
        assert csv_path.read_text().startswith("scheme,")

    def test_byte_identical_reports(self, write_doc, capsys):
        config = write_doc("campaign.json", self._config())
        main(["simulate", config])
        first = capsys.readouterr().out
        main(["simulate", config])
        assert capsys.readouterr().out == first

    def test_bad_config_exits_2(self, write_doc, capsys):
        config = write_doc("campaign.json", {"trials": 0, "seed": 1})
        assert main(["simulate", config]) == 2


class TestEntryPoint:
    def test_console_script_help(self):
        result = subprocess.run(
            [sys.executable, "-m", "abft_guard.cli", "--help"],
            capture_output=True,
            text=True,
        )
        assert result.returncode == 0
        assert "analyze" in result.stdout and "simulate" in result.stdout

    def test_fixture_dump(self):
        result = subprocess.run(
            [sys.executable, "-m", "abft_guard.fixtures", "dlrm-mlp-top", "--batch", "2048"],
            capture_output=True,
            text=True,
        )
        assert result.returncode == 0
        doc = json.loads(result.stdout)
        assert doc["batch"] == 2048
