import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from mathsim.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main

ASSETS = Path(__file__).resolve().parent.parent / "assets"


def write_config(tmp_path, **overrides):
    tiny_space = {
        "order": ["omega", "zeta"],
        "ranges": {
            "omega": {"min": 2.0, "max": 3.0, "step": 0.5},
            "zeta": {"min": 0.0, "max": 0.5, "step": 0.5},
        },
    }
    space_path = tmp_path / "space.json"
    space_path.write_text(json.dumps(tiny_space))
    config = {
        "corpus_dir": str(ASSETS / "corpus"),
        "queries_dir": str(ASSETS / "queries"),
        "truth_file": str(ASSETS / "truth.csv"),
        "params_file": str(ASSETS / "params.json"),
        "space_file": str(space_path),
        "weights": {"overall_recall": 1.0, "top10_recall": 1.0, "rho": 1.0, "tau": 1.0},
        "seeds": {"split_seed": 17, "mc_seed": 7151},
        "output_dir": str(tmp_path / "out"),
    }
    config.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    return path


class TestParseCommand:
    def test_parse_bundled_file(self, capsys):
        code = main(["parse", str(ASSETS / "corpus" / "newton.xml")])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "apply" in out and "relation1:eq" in out
        assert "class: equation" in out

    def test_parse_bad_file(self, tmp_path, capsys):
        bad = tmp_path / "bad.xml"
        bad.write_text("<math><nope/></math>")
        assert main(["parse", str(bad)]) == EXIT_DATA
        assert "nope" in capsys.readouterr().err


class TestSearchCommand:
    def test_search_writes_hitlist(self, tmp_path, capsys):
        config = write_config(tmp_path)
        code = main([
            "search", "--config", str(config),
            "--query", str(ASSETS / "queries" / "q_newton.xml"), "--n", "5",
        ])
        assert code == EXIT_OK
        csv_path = tmp_path / "out" / "hits_q_newton.csv"
        assert csv_path.exists()
        rows = csv_path.read_text().strip().splitlines()
        assert rows[0] == "query_id,rank,doc_id,score"
        assert len(rows) == 6
        assert rows[1].split(",")[2] == "newton"

    def test_search_full_corpus_listing(self, tmp_path):
        config = write_config(tmp_path)
        code = main([
            "search", "--config", str(config),
            "--query", str(ASSETS / "queries" / "q_sum.xml"), "--n", "42",
        ])
        assert code == EXIT_OK
        rows = (tmp_path / "out" / "hits_q_sum.csv").read_text().strip().splitlines()
        assert len(rows) == 43

    def test_malformed_query_is_data_error(self, tmp_path):
        config = write_config(tmp_path)
        bad = tmp_path / "query.xml"
        bad.write_text("<math><ci>")
        assert main(["search", "--config", str(config), "--query", str(bad)]) == EXIT_DATA


class TestEvaluateCommand:
    def test_internal_evaluation(self, tmp_path, capsys):
        config = write_config(tmp_path)
        assert main(["evaluate", "--config", str(config), "--jobs", "1"]) == EXIT_OK
        report = (tmp_path / "out" / "report.csv").read_text().strip().splitlines()
        assert len(report) == 13  # header + 11 queries + average
        assert report[-1].startswith("AVERAGE,")
        assert (tmp_path / "out" / "report.json").exists()

    def test_deterministic_reports(self, tmp_path):
        config = write_config(tmp_path)
        main(["evaluate", "--config", str(config), "--jobs", "1"])
        first = (tmp_path / "out" / "report.csv").read_bytes()
        main(["evaluate", "--config", str(config), "--jobs", "1"])
        assert (tmp_path / "out" / "report.csv").read_bytes() == first

    def test_external_hitlists_path(self, tmp_path):
        config = write_config(tmp_path)
        main(["evaluate", "--config", str(config), "--jobs", "1"])
        external = tmp_path / "out" / "hitlists.csv"
        assert external.exists()
        code = main(["evaluate", "--config", str(config), "--hitlists", str(external)])
        assert code == EXIT_OK

    def test_missing_truth_is_data_error(self, tmp_path, capsys):
        truncated = tmp_path / "truth.csv"
        lines = (ASSETS / "truth.csv").read_text().strip().splitlines()
        kept = [line for line in lines if not line.startswith("q_newton,")]
        truncated.write_text("\n".join(kept) + "\n")
        config = write_config(tmp_path, truth_file=str(truncated))
        assert main(["evaluate", "--config", str(config), "--jobs", "1"]) == EXIT_DATA
        assert "q_newton" in capsys.readouterr().err


class TestOptimizeCommand:
    def test_optimize_writes_runs_and_summary(self, tmp_path, capsys):
        config = write_config(tmp_path)
        assert main(["optimize", "--config", str(config), "--jobs", "1"]) == EXIT_OK
        out = tmp_path / "out"
        for kind in ("exponential", "linear", "quadratic", "logarithmic"):
            assert (out / f"optimize_{kind}.json").exists()
        summary = json.loads((out / "optimize_summary.json").read_text())
        assert summary["best_model"] in ("exponential", "linear", "quadratic", "logarithmic")
        assert (out / "best_params.json").exists()


class TestXvalCommand:
    def test_xval_deterministic_csv(self, tmp_path):
        config = write_config(tmp_path)
        assert main(["xval", "--config", str(config)]) == EXIT_OK
        first = (tmp_path / "out" / "xval.csv").read_bytes()
        assert main(["xval", "--config", str(config)]) == EXIT_OK
        assert (tmp_path / "out" / "xval.csv").read_bytes() == first
        header = first.decode().splitlines()[0]
        assert header == (
            "model,protocol,ave_overall_recall,ave_top10_recall,"
            "ave_rho_correlation,ave_tau_correlation"
        )

    def test_seed_override_changes_split(self, tmp_path):
        config = write_config(tmp_path)
        main(["xval", "--config", str(config), "--seed", "1"])
        one = json.loads((tmp_path / "out" / "xval.json").read_text())
        main(["xval", "--config", str(config), "--seed", "2"])
        two = json.loads((tmp_path / "out" / "xval.json").read_text())
        assert one["train_queries"] != two["train_queries"]


class TestExitCodes:
    def test_missing_config_file(self, capsys):
        assert main(["search", "--config", "/nope/config.json", "--query", "x"]) == EXIT_CONFIG

    def test_malformed_config_json(self, tmp_path):
        bad = tmp_path / "config.json"
        bad.write_text("{not json")
        assert main(["evaluate", "--config", str(bad)]) == EXIT_CONFIG

    def test_config_with_missing_path(self, tmp_path):
        config = write_config(tmp_path, corpus_dir=str(tmp_path / "nowhere"))
        assert main(["evaluate", "--config", str(config)]) == EXIT_CONFIG

    def test_invalid_space_file(self, tmp_path):
        space = tmp_path / "bad_space.json"
        space.write_text(json.dumps({"order": ["mu"], "ranges": {"mu": {"min": 0.0, "max": 0.5, "step": 0.1}}}))
        config = write_config(tmp_path, space_file=str(space))
        assert main(["optimize", "--config", str(config), "--jobs", "1"]) == EXIT_CONFIG

    def test_usage_error_is_config_exit(self):
        assert main(["search", "--no-such-flag"]) == EXIT_CONFIG

    def test_unknown_command(self):
        assert main(["frobnicate"]) == EXIT_CONFIG


def test_module_entry_point(tmp_path):
    env = dict(os.environ, PYTHONPATH=str(Path(__file__).resolve().parent.parent / "src"))
    proc = subprocess.run(
        [sys.executable, "-m", "mathsim.cli", "parse", str(ASSETS / "queries" / "q_sum.xml")],
        capture_output=True, text=True, env=env,
    )
    assert proc.returncode == 0
    assert "arith1:plus" in proc.stdout
