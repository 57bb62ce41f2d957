"""Subcommand CLI wiring the pipeline end to end.

Configuration precedence: command-line flags beat ``MORP_<FLAG>``
environment variables, which beat the optional ``--config`` JSON file,
which beats the built-in defaults.  Every output artifact carries a
provenance block (tool version, config hash, seed) so runs are
reproducible byte for byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

from . import __version__
from .consensus import CorrectionParams, run_correction
from .errors import MorpError
from .featstore import CorpusManifest, read_manifest, write_manifest
from .metrics import corpus_stats, write_json
from .pipeline import (
    evaluate_manifest,
    run_pipeline,
    sweep_clean_ratio,
    sweep_corpus_size,
)
from .predictor import FilePredictor, ProposalParams, SlidingWindowPredictor
from .refine import AdjustParams, CleanParams, refine_corpus
from .synth import SynthSpec, generate_corpus


def _float_list(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _int_list(text):
    return [int(x) for x in text.split(",") if x.strip()]


# name, type, default, help
COMMON_OPTS = [
    ("seed", int, 0, "base random seed (default: 0)"),
    ("threads", int, 1, "worker threads; any value gives identical output "
                        "(default: 1)"),
]
SYNTH_OPTS = [
    ("videos", int, 500, "number of synthetic videos (default: 500)"),
    ("frames", int, 256, "frames sampled per video (default: 256)"),
    ("dim", int, 16, "embedding dimension (default: 16)"),
    ("annotations_per_video", int, 2, "annotations per video (default: 2)"),
    ("p_imprecise", float, 0.2, "probability of an imprecise boundary "
                                "(default: 0.2)"),
    ("p_unmatched", float, 0.1, "probability of an unmatched query "
                                "(default: 0.1)"),
    ("p_idle", float, 0.1, "probability of an idle video (default: 0.1)"),
    ("signal_level", float, 0.85, "mean in-moment mapped similarity "
                                  "(default: 0.85)"),
    ("noise_level", float, 0.45, "mean out-of-moment mapped similarity "
                                 "(default: 0.45)"),
    ("boundary_noise", float, 0.0, "imprecise-boundary noise sigma in frames;"
                                   " 0 means frames/4 (default: 0)"),
]
REFINE_OPTS = [
    ("clean_ratio", float, 0.40, "fraction of lowest-scored annotations to "
                                 "drop (default: 0.40)"),
    ("alpha1", float, 0.22, "shrink threshold (default: 0.22)"),
    ("alpha2", float, 0.92, "expand threshold (default: 0.92)"),
    ("delta", int, 5, "adjustment step in frames (default: 5)"),
    ("min_len", int, 0, "minimum moment length in frames; 0 means delta "
                        "(default: 0)"),
    ("max_iters", int, 64, "adjustment iteration cap (default: 64)"),
]
CORRECT_OPTS = [
    ("epochs", int, 15, "correction epochs (default: 15)"),
    ("lambda", float, 0.70, "consensus-target blend weight (default: 0.70)"),
    ("capacity", int, 32, "memory bank capacity (default: 32)"),
    ("u", int, 5, "predictions per query per epoch (default: 5)"),
]
EVAL_OPTS = [
    ("thresholds", _float_list, [0.3, 0.5, 0.7],
     "IoU thresholds for R@m (default: 0.3,0.5,0.7)"),
]


def _add_opts(parser, opts):
    for name, typ, default, help_text in opts:
        flag = "--" + name.replace("_", "-")
        parser.add_argument(flag, dest=name, type=typ, default=None,
                            help=help_text)


def _resolve(args, opts, config):
    """flags > MORP_* environment > config file > built-in default."""
    out = {}
    for name, typ, default, _ in opts:
        value = getattr(args, name, None)
        if value is None:
            env = os.environ.get("MORP_" + name.upper())
            if env is not None:
                value = typ(env)
        if value is None and name in config:
            raw = config[name]
            value = typ(raw) if isinstance(raw, str) else raw
        if value is None:
            value = default
        out[name] = value
    return out


def build_parser():
    parser = argparse.ArgumentParser(
        prog="morp",
        description="Pseudo-label refinement pipeline for video moment "
                    "retrieval corpora.",
    )
    parser.add_argument("--config", default=None,
                        help="optional JSON config file (flags override it)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a seeded synthetic corpus")
    p.add_argument("--out", required=True, help="output corpus directory")
    _add_opts(p, SYNTH_OPTS + COMMON_OPTS)

    p = sub.add_parser("refine", help="clean and adjust a raw corpus")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-manifest", required=True)
    p.add_argument("--report", default=None,
                   help="refine report path (default: beside the output "
                        "manifest)")
    _add_opts(p, REFINE_OPTS + COMMON_OPTS)

    p = sub.add_parser("correct", help="memory-consensus boundary correction")
    p.add_argument("--manifest", required=True,
                   help="refined manifest (annotations with status adjusted)")
    p.add_argument("--out-manifest", required=True)
    p.add_argument("--trace", default=None,
                   help="correction trace path (default: beside the output "
                        "manifest)")
    p.add_argument("--predictions", default=None,
                   help="JSON-lines prediction file for file-backed mode")
    _add_opts(p, CORRECT_OPTS + REFINE_OPTS + COMMON_OPTS)

    p = sub.add_parser("pipeline", help="refine then correct")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    _add_opts(p, REFINE_OPTS + CORRECT_OPTS + COMMON_OPTS)

    p = sub.add_parser("evaluate", help="score boundaries against ground truth")
    p.add_argument("--manifest", required=True)
    p.add_argument("--json", dest="json_out", default=None,
                   help="also write the metric report JSON here")
    _add_opts(p, EVAL_OPTS + COMMON_OPTS)

    p = sub.add_parser("stats", help="corpus statistics")
    p.add_argument("--manifest", required=True)
    p.add_argument("--json", dest="json_out", default=None)
    _add_opts(p, COMMON_OPTS)

    p = sub.add_parser("sweep", help="grid a knob and report corpus quality")
    p.add_argument("--knob", choices=["clean-ratio", "corpus-size"],
                   required=True)
    p.add_argument("--values", required=True,
                   help="comma-separated knob values")
    p.add_argument("--seeds", default="0",
                   help="comma-separated seeds to average (default: 0)")
    p.add_argument("--work-dir", required=True,
                   help="scratch directory for generated corpora")
    p.add_argument("--json", dest="json_out", default=None)
    _add_opts(p, SYNTH_OPTS + REFINE_OPTS + CORRECT_OPTS + COMMON_OPTS)

    return parser


def _provenance(config: dict) -> dict:
    # The thread count is a scheduling knob with no effect on results,
    # so it stays out of the provenance hash.
    hashed = {k: v for k, v in config.items() if k != "threads"}
    canon = json.dumps(hashed, sort_keys=True)
    return {
        "tool_version": __version__,
        "config_hash": hashlib.sha256(canon.encode()).hexdigest()[:16],
        "seed": config.get("seed", 0),
    }


def _with_provenance(manifest: CorpusManifest, prov: dict) -> CorpusManifest:
    from dataclasses import replace
    return replace(manifest, provenance=prov)


def _adjust_params(cfg) -> AdjustParams:
    return AdjustParams(delta=cfg["delta"], alpha1=cfg["alpha1"],
                        alpha2=cfg["alpha2"], max_iters=cfg["max_iters"],
                        min_len=cfg["min_len"] or None)


def _correction_params(cfg) -> CorrectionParams:
    return CorrectionParams(epochs=cfg["epochs"], lam=cfg["lambda"],
                            capacity=cfg["capacity"],
                            predictions_per_query=cfg["u"], seed=cfg["seed"])


def _synth_spec(cfg) -> SynthSpec:
    return SynthSpec(
        n_videos=cfg["videos"], num_frames=cfg["frames"], dim=cfg["dim"],
        annotations_per_video=cfg["annotations_per_video"],
        p_idle=cfg["p_idle"], p_unmatched=cfg["p_unmatched"],
        p_imprecise=cfg["p_imprecise"],
        boundary_noise_frames=cfg["boundary_noise"],
        signal_level=cfg["signal_level"], noise_level=cfg["noise_level"],
        seed=cfg["seed"],
    )


def _cmd_synth(args, config):
    cfg = _resolve(args, SYNTH_OPTS + COMMON_OPTS, config)
    spec = _synth_spec(cfg)
    manifest = generate_corpus(spec, args.out, threads=cfg["threads"])
    manifest = _with_provenance(manifest, _provenance(cfg))
    write_manifest(manifest, os.path.join(args.out, "manifest.json"))
    print(f"wrote corpus with {len(manifest.videos)} videos and "
          f"{len(manifest.annotations)} annotations to {args.out}")
    return 0


def _cmd_refine(args, config):
    cfg = _resolve(args, REFINE_OPTS + COMMON_OPTS, config)
    manifest = read_manifest(args.manifest)
    refined, report = refine_corpus(manifest, CleanParams(cfg["clean_ratio"]),
                                    _adjust_params(cfg),
                                    threads=cfg["threads"])
    prov = _provenance(cfg)
    write_manifest(_with_provenance(refined, prov), args.out_manifest)
    report_path = args.report or args.out_manifest + ".report.json"
    obj = report.to_json_obj()
    obj["provenance"] = prov
    write_json(obj, report_path)
    kept = sum(1 for r in report.records if r.decision == "kept")
    print(f"kept {kept} / {len(report.records)} annotations; "
          f"report at {report_path}")
    return 0


def _cmd_correct(args, config):
    cfg = _resolve(args, CORRECT_OPTS + REFINE_OPTS + COMMON_OPTS, config)
    manifest = read_manifest(args.manifest)
    if args.predictions:
        predictor = FilePredictor(args.predictions)
    else:
        predictor = SlidingWindowPredictor(ProposalParams(
            stride=cfg["delta"], jitter=cfg["delta"]))
    corrected, trace = run_correction(manifest, predictor,
                                      _correction_params(cfg),
                                      threads=cfg["threads"])
    prov = _provenance(cfg)
    write_manifest(_with_provenance(corrected, prov), args.out_manifest)
    trace_path = args.trace or args.out_manifest + ".trace.jsonl"
    trace.write(trace_path)
    print(f"corrected {len(corrected.annotations)} annotations; "
          f"trace at {trace_path}")
    return 0


def _cmd_pipeline(args, config):
    cfg = _resolve(args, REFINE_OPTS + CORRECT_OPTS + COMMON_OPTS, config)
    manifest = read_manifest(args.manifest)
    os.makedirs(args.out_dir, exist_ok=True)
    refined, report, corrected, trace = run_pipeline(
        manifest, CleanParams(cfg["clean_ratio"]), _adjust_params(cfg),
        _correction_params(cfg), threads=cfg["threads"])
    prov = _provenance(cfg)
    write_manifest(_with_provenance(refined, prov),
                   os.path.join(args.out_dir, "refined.json"))
    obj = report.to_json_obj()
    obj["provenance"] = prov
    write_json(obj, os.path.join(args.out_dir, "refine_report.json"))
    write_manifest(_with_provenance(corrected, prov),
                   os.path.join(args.out_dir, "corrected.json"))
    trace.write(os.path.join(args.out_dir, "trace.jsonl"))
    print(f"pipeline artifacts in {args.out_dir}")
    return 0


def _cmd_evaluate(args, config):
    cfg = _resolve(args, EVAL_OPTS + COMMON_OPTS, config)
    manifest = read_manifest(args.manifest)
    report = evaluate_manifest(manifest, tuple(cfg["thresholds"]))
    obj = report.to_json_obj()
    obj["provenance"] = _provenance(cfg)
    print(json.dumps(obj, indent=2))
    print()
    print(report.to_text_table())
    if args.json_out:
        write_json(obj, args.json_out)
    return 0


def _cmd_stats(args, config):
    cfg = _resolve(args, COMMON_OPTS, config)
    manifest = read_manifest(args.manifest)
    stats = corpus_stats(manifest)
    obj = stats.to_json_obj()
    obj["provenance"] = _provenance(cfg)
    print(json.dumps(obj, indent=2))
    print()
    print(stats.to_text_table())
    if args.json_out:
        write_json(obj, args.json_out)
    return 0


def _cmd_sweep(args, config):
    cfg = _resolve(args, SYNTH_OPTS + REFINE_OPTS + CORRECT_OPTS + COMMON_OPTS,
                   config)
    seeds = _int_list(args.seeds)
    spec = _synth_spec(cfg)
    adjust = _adjust_params(cfg)
    correction = _correction_params(cfg)
    if args.knob == "clean-ratio":
        result = sweep_clean_ratio(spec, _float_list(args.values), seeds,
                                   args.work_dir, adjust_params=adjust,
                                   correction_params=correction,
                                   threads=cfg["threads"])
    else:
        result = sweep_corpus_size(spec, _int_list(args.values), seeds,
                                   args.work_dir,
                                   clean_ratio=cfg["clean_ratio"],
                                   adjust_params=adjust,
                                   correction_params=correction,
                                   threads=cfg["threads"])
    obj = result.to_json_obj()
    obj["provenance"] = _provenance(cfg)
    print(json.dumps(obj, indent=2))
    print()
    print(result.to_text_table())
    if args.json_out:
        write_json(obj, args.json_out)
    return 0


COMMANDS = {
    "synth": _cmd_synth,
    "refine": _cmd_refine,
    "correct": _cmd_correct,
    "pipeline": _cmd_pipeline,
    "evaluate": _cmd_evaluate,
    "stats": _cmd_stats,
    "sweep": _cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    config = {}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                config = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print(json.dumps({"code": "config_error", "message": str(exc),
                              "context": {"path": args.config}}),
                  file=sys.stderr)
            return 1
    try:
        return COMMANDS[args.command](args, config)
    except MorpError as exc:
        print(json.dumps(exc.to_json_obj()), file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(json.dumps({"code": "missing_file", "message": str(exc),
                          "context": {"path": exc.filename}}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
