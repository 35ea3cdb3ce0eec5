import json
from pathlib import Path

from staykate.cli import main

MINI = Path(__file__).parent / "data" / "mini"
GOLDEN = MINI / "golden"
CACHE = str(MINI / "cache.jsonl")


def config_path(name):
    return str(MINI / "configs" / f"{name}.json")


def run_cli(*args):
    return main(list(args))


class TestRunCommand:
    def test_run_replay_writes_report_and_artifacts(self, tmp_path, capsys):
        code = run_cli(
            "run", "--config", config_path("staykate"), "--cache", CACHE,
            "--replay", "--report-dir", str(tmp_path),
        )
        assert code == 0
        assert (tmp_path / "report.json").is_file()
        assert (tmp_path / "artifacts.json").is_file()
        out = capsys.readouterr().out
        assert "micro avg" in out

    def test_report_matches_golden_bytes(self, tmp_path):
        run_cli(
            "run", "--config", config_path("kate"), "--cache", CACHE,
            "--replay", "--report-dir", str(tmp_path),
        )
        assert (tmp_path / "report.json").read_bytes() == (GOLDEN / "report_kate.json").read_bytes()

    def test_replay_cache_miss_exit_code(self, tmp_path):
        empty_cache = tmp_path / "empty.jsonl"
        code = run_cli(
            "run", "--config", config_path("zero_shot"), "--cache", str(empty_cache),
            "--replay", "--report-dir", str(tmp_path),
        )
        assert code == 3

    def test_validation_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"method": "nope"}), encoding="utf-8")
        code = run_cli("run", "--config", str(bad), "--report-dir", str(tmp_path))
        assert code == 2

    def test_dump_prompts_flag(self, tmp_path):
        run_cli(
            "run", "--config", config_path("staykate"), "--cache", CACHE,
            "--replay", "--report-dir", str(tmp_path), "--dump-prompts",
        )
        dump = tmp_path / "prompts_seed1.json"
        assert dump.is_file()
        assert dump.read_bytes() == (GOLDEN / "prompts_staykate_seed1.json").read_bytes()

    def test_parallel_flag_keeps_report_bytes(self, tmp_path):
        sequential = tmp_path / "seq"
        concurrent = tmp_path / "par"
        run_cli(
            "run", "--config", config_path("kate"), "--cache", CACHE,
            "--replay", "--report-dir", str(sequential),
        )
        code = run_cli(
            "run", "--config", config_path("kate"), "--cache", CACHE,
            "--replay", "--report-dir", str(concurrent), "--parallel", "4",
        )
        assert code == 0
        assert (concurrent / "report.json").read_bytes() == (sequential / "report.json").read_bytes()


class TestScoreCommand:
    def test_score_reproduces_run_report(self, tmp_path):
        run_dir = tmp_path / "run"
        run_cli(
            "run", "--config", config_path("random"), "--cache", CACHE,
            "--replay", "--report-dir", str(run_dir),
        )
        score_dir = tmp_path / "score"
        code = run_cli(
            "score", "--config", config_path("random"),
            "--artifacts", str(run_dir / "artifacts.json"),
            "--report-dir", str(score_dir),
        )
        assert code == 0
        assert (score_dir / "report.json").read_bytes() == (run_dir / "report.json").read_bytes()


class TestSelectionCommands:
    def test_split_outputs_pools(self, tmp_path):
        code = run_cli(
            "split", "--config", config_path("zero_shot"), "--report-dir", str(tmp_path)
        )
        assert code == 0
        payload = json.loads((tmp_path / "splits.json").read_text(encoding="utf-8"))
        pools = payload["seeds"]["1"]
        assert len(pools["labeled_ids"]) == 15
        assert len(pools["unlabeled_ids"]) == 15
        assert set(pools["labeled_ids"]).isdisjoint(pools["unlabeled_ids"])

    def test_select_static_lists_scores(self, tmp_path):
        code = run_cli(
            "select-static", "--config", config_path("representative"),
            "--report-dir", str(tmp_path),
        )
        assert code == 0
        payload = json.loads((tmp_path / "static_selection.json").read_text(encoding="utf-8"))
        chosen = payload["seeds"]["1"]["chosen"]
        assert len(chosen) == 2
        assert chosen[0]["score"] <= chosen[1]["score"]

    def test_select_dynamic_lists_neighbors(self, tmp_path):
        code = run_cli(
            "select-dynamic", "--config", config_path("kate"), "--report-dir", str(tmp_path)
        )
        assert code == 0
        payload = json.loads((tmp_path / "dynamic_selection.json").read_text(encoding="utf-8"))
        neighbors = payload["seeds"]["1"]["test-01"]
        assert len(neighbors) == 2
        assert neighbors[0]["similarity"] <= neighbors[1]["similarity"]

    def test_build_prompts_matches_golden(self, tmp_path):
        code = run_cli(
            "build-prompts", "--config", config_path("staykate"), "--report-dir", str(tmp_path)
        )
        assert code == 0
        produced = (tmp_path / "prompts_seed1.json").read_bytes()
        assert produced == (GOLDEN / "prompts_staykate_seed1.json").read_bytes()


class TestPseudoLabelCommand:
    def test_matches_golden(self, tmp_path):
        out = tmp_path / "pseudo.jsonl"
        code = run_cli(
            "pseudo-label", "--config", config_path("pseudo"), "--cache", CACHE,
            "--replay", "--report-dir", str(tmp_path), "--out", str(out),
        )
        assert code == 0
        assert out.read_bytes() == (GOLDEN / "pseudo_labels.jsonl").read_bytes()


class TestErrorsCommand:
    def test_prints_comparison_table(self, capsys):
        code = run_cli(
            "errors",
            str(GOLDEN / "report_kate.json"),
            str(GOLDEN / "report_staykate.json"),
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "overpredicting" in out
        assert "kate" in out and "staykate" in out

    def test_rejects_non_report(self, tmp_path):
        bogus = tmp_path / "x.json"
        bogus.write_text("{}", encoding="utf-8")
        assert run_cli("errors", str(bogus)) == 2


class TestDiagnoseCommand:
    def test_prints_ratios(self, capsys):
        code = run_cli(
            "diagnose", "--corpus", str(MINI / "corpus.txt"),
            "--manifest", str(MINI / "manifest.json"),
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "train:" in out and "non_entity_ratio=" in out
