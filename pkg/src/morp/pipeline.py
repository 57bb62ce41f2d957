"""Manifest-level orchestration: end-to-end runs, evaluation and sweeps."""

from __future__ import annotations

from dataclasses import dataclass, field

from .consensus import CorrectionParams, run_correction
from .core import iou
from .errors import ContractViolation
from .featstore import CorpusManifest, derive_boundary_frames
from .metrics import MetricReport, metric_report
from .predictor import ProposalParams, SlidingWindowPredictor
from .refine import AdjustParams, CleanParams, refine_corpus
from .synth import SynthSpec, generate_corpus


def gt_frames(manifest: CorpusManifest, ann):
    """Ground-truth Boundary of an annotation, or None when absent."""
    if ann.gt_boundary_seconds is None:
        return None
    video = manifest.video_by_id(ann.video_id)
    return derive_boundary_frames(ann.gt_boundary_seconds[0],
                                  ann.gt_boundary_seconds[1],
                                  video.duration_seconds, video.num_frames)


def evaluate_manifest(manifest: CorpusManifest,
                      thresholds=(0.3, 0.5, 0.7)) -> MetricReport:
    """Score every gt-bearing annotation's boundary against its ground truth."""
    preds, gts = {}, {}
    for ann in manifest.annotations:
        gt = gt_frames(manifest, ann)
        if gt is None:
            continue
        preds[ann.annotation_id] = ann.boundary_frames
        gts[ann.annotation_id] = gt
    if not preds:
        raise ContractViolation("manifest holds no ground-truth annotations")
    return metric_report(preds, gts, thresholds)


def run_pipeline(manifest: CorpusManifest, clean_params: CleanParams,
                 adjust_params: AdjustParams, correction_params: CorrectionParams,
                 proposal_params: ProposalParams = None, threads: int = 1):
    """refine + correct; returns (refined, refine_report, corrected, trace)."""
    refined, report = refine_corpus(manifest, clean_params, adjust_params,
                                    threads=threads)
    predictor = SlidingWindowPredictor(proposal_params or ProposalParams(
        stride=adjust_params.delta, jitter=adjust_params.delta))
    corrected, trace = run_correction(refined, predictor, correction_params,
                                      threads=threads)
    return refined, report, corrected, trace


def corpus_quality(original: CorpusManifest, final: CorpusManifest) -> float:
    """Average usefulness of the final corpus' labels, in [0, 1].

    Retained annotations contribute IoU(final boundary, ground truth);
    retained annotations without ground truth contribute 0 (a label for
    an unmatched or idle query can never be right).  Dropped annotations
    that carry ground truth contribute the IoU of their original pseudo
    boundary (cleaning them away forfeits any refinement they would have
    received); dropped annotations without ground truth leave the
    average entirely, which is exactly what cleaning is for.
    """
    retained = {a.annotation_id: a for a in final.annotations}
    values = []
    for ann in original.annotations:
        gt = gt_frames(original, ann)
        kept = retained.get(ann.annotation_id)
        if kept is not None:
            values.append(iou(kept.boundary_frames, gt) if gt else 0.0)
        elif gt is not None:
            values.append(iou(ann.boundary_frames, gt))
    if not values:
        raise ContractViolation("no annotations to score")
    return sum(values) / len(values)


def mean_iou_vs_gt(manifest: CorpusManifest, ids=None) -> float:
    """Mean IoU against ground truth over gt-bearing annotations (fraction)."""
    values = []
    for ann in manifest.annotations:
        if ids is not None and ann.annotation_id not in ids:
            continue
        gt = gt_frames(manifest, ann)
        if gt is None:
            continue
        values.append(iou(ann.boundary_frames, gt))
    if not values:
        raise ContractViolation("no gt-bearing annotations selected")
    return sum(values) / len(values)


@dataclass
class SweepResult:
    knob: str
    values: list
    metric: list  # mean corpus quality per knob value (seed-averaged)
    per_seed: dict = field(default_factory=dict)

    def to_json_obj(self):
        return {
            "knob": self.knob,
            "values": self.values,
            "metric": self.metric,
            "per_seed": {str(k): v for k, v in self.per_seed.items()},
        }

    def to_text_table(self) -> str:
        rows = [(self.knob, "quality")]
        rows += [(f"{v:g}", f"{m:.4f}") for v, m in zip(self.values, self.metric)]
        widths = [max(len(r[i]) for r in rows) for i in range(2)]
        return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()
                         for r in rows)


def _quality_for(manifest, clean_ratio, adjust_params, correction_params,
                 threads=1):
    _, _, corrected, _ = run_pipeline(
        manifest, CleanParams(ratio=clean_ratio), adjust_params,
        correction_params, threads=threads)
    return corpus_quality(manifest, corrected)


def sweep_clean_ratio(spec: SynthSpec, ratios, seeds, work_dir,
                      adjust_params=None, correction_params=None,
                      threads: int = 1) -> SweepResult:
    """Corpus quality of the corrected corpus across cleaning ratios."""
    import os
    from dataclasses import replace

    adjust_params = adjust_params or AdjustParams()
    correction_params = correction_params or CorrectionParams()
    per_seed = {}
    for seed in seeds:
        corpus_dir = os.path.join(work_dir, f"sweepR_seed{seed}")
        manifest = generate_corpus(replace(spec, seed=seed), corpus_dir,
                                   threads=threads)
        per_seed[seed] = [
            _quality_for(manifest, r, adjust_params,
                         replace(correction_params, seed=seed), threads=threads)
            for r in ratios
        ]
    metric = [sum(per_seed[s][i] for s in seeds) / len(seeds)
              for i in range(len(ratios))]
    return SweepResult(knob="clean_ratio", values=list(ratios), metric=metric,
                       per_seed=per_seed)


def sweep_corpus_size(spec: SynthSpec, sizes, seeds, work_dir, clean_ratio=0.4,
                      adjust_params=None, correction_params=None,
                      threads: int = 1) -> SweepResult:
    """Corpus quality of the corrected corpus across corpus sizes."""
    import os
    from dataclasses import replace

    adjust_params = adjust_params or AdjustParams()
    correction_params = correction_params or CorrectionParams()
    per_seed = {}
    for seed in seeds:
        row = []
        for size in sizes:
            corpus_dir = os.path.join(work_dir, f"sweepN_seed{seed}_n{size}")
            manifest = generate_corpus(
                replace(spec, n_videos=size, seed=seed), corpus_dir,
                threads=threads)
            row.append(_quality_for(manifest, clean_ratio, adjust_params,
                                    replace(correction_params, seed=seed),
                                    threads=threads))
        per_seed[seed] = row
    metric = [sum(per_seed[s][i] for s in seeds) / len(seeds)
              for i in range(len(sizes))]
    return SweepResult(knob="corpus_size", values=list(sizes), metric=metric,
                       per_seed=per_seed)
