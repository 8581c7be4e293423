"""Command-line surface: subcommand wiring, report meta, exit codes, and
state snapshot flags."""

import json
import subprocess
import sys

import pytest

from ovq import load_state, load_streams


def run_cli(*args, **kw):
    return subprocess.run(
        [sys.executable, "-m", "ovq.cli", *args], capture_output=True, text=True, **kw
    )


class TestGen:
    def test_writes_streams(self, tmp_path):
        out = tmp_path / "s.jsonl"
        res = run_cli(
            "gen", "--task", "basic_icr", "--num-pairs", "8", "--key-len", "2",
            "--val-len", "2", "--num-queries", "2", "--count", "3", "--out", str(out),
        )
        assert res.returncode == 0
        streams = load_streams(out)
        assert len(streams) == 3
        assert {s.meta["seed"] for s in streams} == {0, 1, 2}

    def test_binary_format(self, tmp_path):
        out = tmp_path / "s.bin"
        res = run_cli(
            "gen", "--task", "icl", "--num-functions", "4", "--num-examples", "6",
            "--io-len", "3", "--format", "bin", "--out", str(out),
        )
        assert res.returncode == 0
        assert len(load_streams(out, fmt="bin")) == 1


class TestRun:
    @pytest.fixture()
    def stream_file(self, tmp_path):
        out = tmp_path / "s.jsonl"
        res = run_cli(
            "gen", "--task", "basic_icr", "--num-pairs", "10", "--key-len", "2",
            "--val-len", "2", "--num-queries", "2", "--out", str(out),
        )
        assert res.returncode == 0
        return out

    def test_json_report_echoes_defaults(self, stream_file):
        res = run_cli(
            "run", "--stream", str(stream_file), "--mixer", "full-attention",
            "--dim", "32", "--format", "json",
        )
        assert res.returncode == 0
        doc = json.loads(res.stdout)
        meta = doc["meta"]
        assert meta["beta"] == 16.0 and meta["chunk_len"] == 128 and meta["n_max"] == 2048
        assert doc["rows"][0]["untrained_probe"] is True

    def test_save_and_load_state(self, stream_file, tmp_path):
        snap = tmp_path / "state.bin"
        res = run_cli(
            "run", "--stream", str(stream_file), "--mixer", "ovq", "--dim", "32",
            "--n-max", "64", "--chunk-len", "16", "--save-state", str(snap),
            "--format", "json", "--out", str(tmp_path / "r.json"),
        )
        assert res.returncode == 0, res.stderr
        state = load_state(snap)
        assert state.tokens_seen > 0
        res = run_cli(
            "run", "--stream", str(stream_file), "--mixer", "ovq", "--dim", "32",
            "--load-state", str(snap), "--format", "json", "--out", str(tmp_path / "r2.json"),
        )
        assert res.returncode == 0, res.stderr

    def test_state_flags_rejected_for_other_mixers(self, stream_file, tmp_path):
        res = run_cli(
            "run", "--stream", str(stream_file), "--mixer", "full-attention",
            "--save-state", str(tmp_path / "x.bin"),
        )
        assert res.returncode == 2

    def test_missing_stream_is_config_error(self):
        res = run_cli("run", "--stream", "/nonexistent/stream.jsonl")
        assert res.returncode == 2


class TestBench:
    def test_state_size_csv(self):
        res = run_cli(
            "bench", "--bench", "state-size", "--mixers", "full-attention,ovq,linear-baseline",
            "--T", "1024,65536", "--n-max-grid", "2048", "--dim", "128",
        )
        assert res.returncode == 0
        lines = res.stdout.splitlines()
        assert lines[0].startswith("# schema: ovq-state-report-v1")
        assert "16777216" in res.stdout

    def test_recall_grid_json(self):
        res = run_cli(
            "bench", "--bench", "recall", "--mixers", "full-attention,linear-baseline",
            "--T", "128", "--probes", "16", "--seeds", "2", "--format", "json",
        )
        assert res.returncode == 0
        doc = json.loads(res.stdout)
        assert len(doc["rows"]) == 4
        full_rows = [r for r in doc["rows"] if r["mixer"] == "full_attention"]
        assert all(r["top1_accuracy"] == 1.0 for r in full_rows)

    def test_unknown_mixer_is_config_error(self):
        res = run_cli("bench", "--mixers", "bogus", "--T", "64")
        assert res.returncode == 2

    def test_bad_ablation_is_config_error(self, tmp_path):
        out = tmp_path / "s.jsonl"
        run_cli("gen", "--task", "icl", "--num-functions", "2", "--num-examples", "2", "--out", str(out))
        res = run_cli("run", "--stream", str(out), "--mixer", "ovq", "--ablation", "sideways")
        assert res.returncode == 2


class TestVerify:
    def test_clean_exit_zero(self, tmp_path):
        res = run_cli("verify", "--scale", "small", "--out", str(tmp_path / "v.json"))
        assert res.returncode == 0
        doc = json.loads((tmp_path / "v.json").read_text())
        assert doc["all_passed"] is True

    def test_fault_exit_one_and_names_check(self, tmp_path):
        res = run_cli(
            "verify", "--scale", "small", "--inject-fault", "count-skip",
            "--out", str(tmp_path / "v.json"),
        )
        assert res.returncode == 1
        assert "count_conservation" in res.stderr
