import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from grounder.cli import main
from grounder.corpus import benchmark_scene
from grounder.scene_graph import save_graph


@pytest.fixture
def scene_file(tmp_path):
    path = tmp_path / "bench.json"
    path.write_bytes(save_graph(benchmark_scene()))
    return str(path)


@pytest.fixture
def runner():
    return CliRunner()


class TestResolveCommand:
    def test_resolved_exit_zero_with_pointer_json(self, runner, scene_file):
        result = runner.invoke(
            main,
            ["resolve", "--scene", scene_file, "--utterance", "Locate the purple striped cube"],
        )
        assert result.exit_code == 0, result.output
        payload = json.loads(result.output)
        assert payload["resolution"]["target_id"] == "cube_purple"
        assert payload["directive"]["mode"] == "pointer"
        assert "trace" not in payload["resolution"]

    def test_trace_flag_includes_trace(self, runner, scene_file):
        result = runner.invoke(
            main,
            [
                "resolve", "--scene", scene_file,
                "--utterance", "Locate the purple striped cube", "--trace",
            ],
        )
        assert json.loads(result.output)["resolution"]["trace"]

    def test_ambiguous_exit_two(self, runner, scene_file):
        result = runner.invoke(
            main, ["resolve", "--scene", scene_file, "--utterance", "the cube"]
        )
        assert result.exit_code == 2
        payload = json.loads(result.output)
        assert payload["directive"]["mode"] == "fallback_transcript"

    def test_missing_scene_exit_one(self, runner, tmp_path):
        result = runner.invoke(
            main,
            ["resolve", "--scene", str(tmp_path / "nope.json"), "--utterance", "the cube"],
        )
        assert result.exit_code == 1

    def test_camera_file(self, runner, scene_file, tmp_path):
        cam = tmp_path / "cam.json"
        cam.write_text(
            json.dumps(
                {"position": [0, 0.05, 1.0], "orientation": [1, 0, 0, 0]}
            )
        )
        result = runner.invoke(
            main,
            [
                "resolve", "--scene", scene_file, "--camera", str(cam),
                "--utterance", "Locate the purple striped cube",
            ],
        )
        assert result.exit_code == 0, result.output


class TestGenCorpusCommand:
    def test_reproducible_byte_for_byte(self, runner, scene_file, tmp_path):
        out1, out2 = tmp_path / "c1.jsonl", tmp_path / "c2.jsonl"
        for out in (out1, out2):
            result = runner.invoke(
                main,
                [
                    "gen-corpus", "--scene", scene_file, "--n", "40",
                    "--seed", "7", "--out", str(out),
                ],
            )
            assert result.exit_code == 0, result.output
        assert out1.read_bytes() == out2.read_bytes()

    def test_one_hot_weights(self, runner, scene_file, tmp_path):
        out = tmp_path / "direct.jsonl"
        result = runner.invoke(
            main,
            [
                "gen-corpus", "--scene", scene_file, "--n", "6",
                "--weights", "100,0,0,0", "--seed", "1", "--out", str(out),
            ],
        )
        assert result.exit_code == 0
        lines = [json.loads(l) for l in out.read_text().splitlines()]
        assert len(lines) == 6
        assert all(e["patterns"] == ["direct_feature"] for e in lines)

    def test_bad_weights_rejected(self, runner, scene_file, tmp_path):
        result = runner.invoke(
            main,
            [
                "gen-corpus", "--scene", scene_file, "--n", "5",
                "--weights", "1,2", "--out", str(tmp_path / "x.jsonl"),
            ],
        )
        assert result.exit_code == 1


class TestBatchCommand:
    def test_generated_corpus_scores_one(self, runner, scene_file, tmp_path):
        corpus = tmp_path / "c.jsonl"
        report = tmp_path / "r.json"
        assert (
            runner.invoke(
                main,
                [
                    "gen-corpus", "--scene", scene_file, "--n", "40",
                    "--seed", "7", "--out", str(corpus),
                ],
            ).exit_code
            == 0
        )
        result = runner.invoke(
            main,
            [
                "batch", "--scene", scene_file, "--corpus", str(corpus),
                "--report", str(report), "--now", "2026-01-15T12:00:00Z",
            ],
        )
        assert result.exit_code == 0, result.output
        payload = json.loads(report.read_text())
        assert payload["accuracy"] == 1.0
        assert payload["totals"]["entries"] == 40
        rates = payload["totals"]["rates"]
        assert sum(rates.values()) == pytest.approx(1.0)
        assert "p50" in payload["latency_ms"] and "p95" in payload["latency_ms"]

    def test_scene_mismatch_exit_one(self, runner, scene_file, tmp_path):
        corpus = tmp_path / "c.jsonl"
        corpus.write_text(
            json.dumps(
                {
                    "transcript": "the cube",
                    "expected_target_id": "x",
                    "scene_ref": "other_scene.json",
                }
            )
            + "\n"
        )
        result = runner.invoke(
            main,
            [
                "batch", "--scene", scene_file, "--corpus", str(corpus),
                "--report", str(tmp_path / "r.json"),
            ],
        )
        assert result.exit_code == 1

    def test_parallel_refused_for_memory_corpus(self, runner, scene_file, tmp_path):
        corpus = tmp_path / "mem.jsonl"
        report = tmp_path / "r.json"
        assert (
            runner.invoke(
                main,
                [
                    "gen-corpus", "--scene", scene_file, "--n", "4",
                    "--weights", "0,0,100,0", "--seed", "2", "--out", str(corpus),
                ],
            ).exit_code
            == 0
        )
        result = runner.invoke(
            main,
            [
                "batch", "--scene", scene_file, "--corpus", str(corpus),
                "--report", str(report), "--parallel",
            ],
        )
        assert result.exit_code == 1
        assert "memory-free" in result.output
