"""End-to-end tests of the ``morp`` command-line interface.

Every test drives ``morp.cli.main`` in process so exit codes, stdout,
stderr, and environment handling are all observable without spawning a
subprocess.
"""

import filecmp
import json
import os

import pytest

from morp.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def make_corpus(tmp_path, capsys, name="corpus", videos=6, frames=64,
                dim=8, seed=3, **extra):
    out = tmp_path / name
    argv = ["synth", "--out", str(out), "--videos", str(videos),
            "--frames", str(frames), "--dim", str(dim)]
    if seed is not None:
        argv += ["--seed", str(seed)]
    for flag, value in extra.items():
        argv += ["--" + flag.replace("_", "-"), str(value)]
    code, _, err = run(capsys, *argv)
    assert code == 0, err
    return out / "manifest.json"


class TestSynth:
    def test_smoke_and_rerun_identical(self, tmp_path, capsys):
        m1 = make_corpus(tmp_path, capsys, "a")
        m2 = make_corpus(tmp_path, capsys, "b")
        assert filecmp.cmp(m1, m2, shallow=False)

    def test_env_override(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("MORP_SEED", "7")
        env_m = make_corpus(tmp_path, capsys, "env", seed=None)
        flag_m = make_corpus(tmp_path, capsys, "flag", seed=7)
        assert filecmp.cmp(env_m, flag_m, shallow=False)

    def test_flag_beats_env(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("MORP_SEED", "7")
        flag_m = make_corpus(tmp_path, capsys, "flag", seed=3)
        plain = make_corpus(tmp_path, capsys, "plain", seed=3)
        assert filecmp.cmp(flag_m, plain, shallow=False)

    def test_config_file_and_flag_precedence(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"seed": 9, "videos": 6, "frames": 64,
                                   "dim": 8}))
        code, _, err = run(capsys, "--config", str(cfg), "synth",
                           "--out", str(tmp_path / "from_cfg"))
        assert code == 0, err
        ref = make_corpus(tmp_path, capsys, "ref", seed=9)
        assert filecmp.cmp(tmp_path / "from_cfg" / "manifest.json", ref,
                           shallow=False)
        # a flag overrides the same key in the config file
        code, _, _ = run(capsys, "--config", str(cfg), "synth",
                         "--out", str(tmp_path / "flag_wins"),
                         "--seed", "3")
        assert code == 0
        ref3 = make_corpus(tmp_path, capsys, "ref3", seed=3)
        assert filecmp.cmp(tmp_path / "flag_wins" / "manifest.json", ref3,
                           shallow=False)

    def test_bad_config_file(self, tmp_path, capsys):
        cfg = tmp_path / "broken.json"
        cfg.write_text("{not json")
        code, _, err = run(capsys, "--config", str(cfg), "synth",
                           "--out", str(tmp_path / "x"))
        assert code == 1
        obj = json.loads(err.strip())
        assert obj["code"] == "config_error"


def run_pipeline_dir(tmp_path, capsys, manifest, name="pipe"):
    out_dir = tmp_path / name
    code, _, err = run(capsys, "pipeline", "--manifest", str(manifest),
                       "--out-dir", str(out_dir), "--epochs", "3")
    assert code == 0, err
    return out_dir


class TestPipeline:
    def test_artifacts_and_determinism(self, tmp_path, capsys):
        manifest = make_corpus(tmp_path, capsys)
        d1 = run_pipeline_dir(tmp_path, capsys, manifest, "p1")
        for name in ("refined.json", "corrected.json", "trace.jsonl",
                     "refine_report.json"):
            assert (d1 / name).exists()
        d2 = run_pipeline_dir(tmp_path, capsys, manifest, "p2")
        for name in ("refined.json", "corrected.json", "trace.jsonl"):
            assert filecmp.cmp(d1 / name, d2 / name, shallow=False), name

    def test_threads_identical(self, tmp_path, capsys):
        manifest = make_corpus(tmp_path, capsys)
        d1 = run_pipeline_dir(tmp_path, capsys, manifest, "t1")
        out_dir = tmp_path / "t8"
        code, _, err = run(capsys, "pipeline", "--manifest", str(manifest),
                           "--out-dir", str(out_dir), "--epochs", "3",
                           "--threads", "4")
        assert code == 0, err
        for name in ("refined.json", "corrected.json", "trace.jsonl",
                     "refine_report.json"):
            assert filecmp.cmp(d1 / name, out_dir / name, shallow=False), name

    def test_matches_separate_refine_and_correct(self, tmp_path, capsys):
        manifest = make_corpus(tmp_path, capsys)
        pipe = run_pipeline_dir(tmp_path, capsys, manifest, "whole")
        refined = tmp_path / "whole" / "sep_refined.json"
        code, _, err = run(capsys, "refine", "--manifest", str(manifest),
                           "--out-manifest", str(refined))
        assert code == 0, err
        corrected = tmp_path / "whole" / "sep_corrected.json"
        code, _, err = run(capsys, "correct", "--manifest", str(refined),
                           "--out-manifest", str(corrected), "--epochs", "3")
        assert code == 0, err

        # provenance hashes differ (the subcommands hash different option
        # sets), but everything else must agree exactly
        def body(path):
            obj = json.loads(path.read_text())
            obj.pop("provenance", None)
            return obj

        assert body(pipe / "refined.json") == body(refined)
        assert body(pipe / "corrected.json") == body(corrected)


class TestEvaluateAndStats:
    def test_evaluate_pipeline_output(self, tmp_path, capsys):
        manifest = make_corpus(tmp_path, capsys)
        pipe = run_pipeline_dir(tmp_path, capsys, manifest)
        json_out = tmp_path / "metrics.json"
        code, out, err = run(capsys, "evaluate", "--manifest",
                             str(pipe / "corrected.json"),
                             "--json", str(json_out))
        assert code == 0, err
        obj = json.loads(json_out.read_text())
        assert set(obj["recall_at"]) == {"0.3", "0.5", "0.7"}
        assert 0.0 <= obj["mean_iou"] <= 100.0
        assert "mIoU" in out

    def test_stats(self, tmp_path, capsys):
        manifest = make_corpus(tmp_path, capsys)
        json_out = tmp_path / "stats.json"
        code, out, err = run(capsys, "stats", "--manifest", str(manifest),
                             "--json", str(json_out))
        assert code == 0, err
        obj = json.loads(json_out.read_text())
        assert obj["video_count"] == 6
        assert obj["query_count"] == 12
        assert obj["vocabulary_size"] > 0
        assert "videos" in out


class TestSweep:
    def test_clean_ratio_sweep(self, tmp_path, capsys):
        json_out = tmp_path / "sweep.json"
        code, out, err = run(
            capsys, "sweep", "--knob", "clean-ratio",
            "--values", "0.0,0.4", "--seeds", "0",
            "--work-dir", str(tmp_path / "work"),
            "--videos", "6", "--frames", "64", "--dim", "8",
            "--epochs", "2", "--json", str(json_out))
        assert code == 0, err
        obj = json.loads(json_out.read_text())
        assert obj["knob"] == "clean_ratio"
        assert obj["values"] == [0.0, 0.4]
        assert all(0.0 <= m <= 1.0 for m in obj["metric"])
        assert "0" in obj["per_seed"]

    def test_corpus_size_sweep(self, tmp_path, capsys):
        code, out, err = run(
            capsys, "sweep", "--knob", "corpus-size",
            "--values", "4,8", "--seeds", "0",
            "--work-dir", str(tmp_path / "work"),
            "--frames", "64", "--dim", "8", "--epochs", "2")
        assert code == 0, err
        obj = json.loads(out[:out.index("\n\n")])
        assert obj["values"] == [4, 8]
        assert len(obj["metric"]) == 2


class TestErrors:
    def test_missing_manifest(self, tmp_path, capsys):
        code, _, err = run(capsys, "stats", "--manifest",
                           str(tmp_path / "nope.json"))
        assert code == 1
        obj = json.loads(err.strip())
        assert obj["code"] == "missing_file"
        assert "context" in obj

    def test_invalid_clean_ratio(self, tmp_path, capsys):
        manifest = make_corpus(tmp_path, capsys)
        code, _, err = run(capsys, "refine", "--manifest", str(manifest),
                           "--out-manifest", str(tmp_path / "r.json"),
                           "--clean-ratio", "1.0")
        assert code == 1
        obj = json.loads(err.strip())
        assert {"code", "message", "context"} <= set(obj)

    def test_unknown_command(self, capsys):
        with pytest.raises(SystemExit):
            main(["frobnicate"])

    def test_help_lists_defaults(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["refine", "--help"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        assert "default: 0.40" in out
        assert "--clean-ratio" in out
