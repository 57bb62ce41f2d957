"""Semantics-guided refinement: similarity tracks, contrastive scoring,
corpus cleaning and iterative boundary adjustment.

The per-frame relevance of a query to a video is the cosine similarity
between the query embedding and each frame embedding, affinely mapped to
[0, 1] (``(s + 1) / 2``) so that the contrastive ratio below stays
sign-stable.  The moment contrastive score of a boundary is the mapped
mass inside the boundary divided by the mass outside it; prefix sums make
each evaluation O(1).
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import Boundary
from .errors import ContractViolation
from .featstore import (
    CorpusManifest,
    FrameFeatureMatrix,
    QueryFeature,
    with_updated_boundary,
)

EPS_DENOM = 1e-8
GAMMA_CAP = 1e6


@dataclass(frozen=True)
class SimilarityTrack:
    """Per-frame query relevance: raw cosines, [0,1]-mapped values, prefix sums."""

    raw: np.ndarray
    mapped: np.ndarray
    prefix: np.ndarray

    @classmethod
    def from_raw(cls, raw) -> "SimilarityTrack":
        raw = np.asarray(raw, dtype=np.float64)
        if raw.ndim != 1 or raw.size < 1:
            raise ContractViolation("similarity track must be a 1-D vector")
        mapped = (raw + 1.0) / 2.0
        prefix = np.concatenate(([0.0], np.cumsum(mapped)))
        return cls(raw=raw, mapped=mapped, prefix=prefix)

    @property
    def num_frames(self) -> int:
        return self.raw.shape[0]

    def mass(self, start: int, end: int) -> float:
        """Sum of mapped values over [start, end)."""
        return float(self.prefix[end] - self.prefix[start])

    def window_mean(self, start: int, end: int) -> float:
        return self.mass(start, end) / (end - start)


def frame_similarities(query: QueryFeature, frames: FrameFeatureMatrix) -> SimilarityTrack:
    """Cosine similarity between a query and every frame of a video."""
    if query.dim != frames.dim:
        raise ContractViolation("query and frame dimensions differ",
                                query_dim=query.dim, frame_dim=frames.dim)
    q = query.data.astype(np.float64)
    v = frames.data.astype(np.float64)
    raw = (v @ q) / (np.linalg.norm(v, axis=1) * np.linalg.norm(q))
    return SimilarityTrack.from_raw(np.clip(raw, -1.0, 1.0))


def moment_contrast(track: SimilarityTrack, b: Boundary) -> float:
    """Mapped similarity mass inside the boundary over the mass outside it.

    Returns the cap 1e6 when the outside mass is below 1e-8 (full-span or
    zero-outside-mass boundaries).
    """
    if b.timeline_len != track.num_frames:
        raise ContractViolation("boundary timeline does not match track",
                                boundary=b.as_tuple(),
                                track_len=track.num_frames)
    inside = track.mass(b.start, b.end)
    outside = track.mass(0, track.num_frames) - inside
    if outside < EPS_DENOM:
        return GAMMA_CAP
    return inside / outside


@dataclass(frozen=True)
class CleanParams:
    """Fraction of lowest-scored annotations to drop."""

    ratio: float = 0.40

    def __post_init__(self):
        if not (0.0 <= self.ratio < 1.0):
            raise ContractViolation("cleaning ratio must lie in [0, 1)",
                                    ratio=self.ratio)


@dataclass(frozen=True)
class AdjustParams:
    """Step size and thresholds for iterative boundary adjustment."""

    delta: int = 5
    alpha1: float = 0.22
    alpha2: float = 0.92
    max_iters: int = 64
    min_len: Optional[int] = None

    def __post_init__(self):
        if self.min_len is None:
            object.__setattr__(self, "min_len", self.delta)
        if self.delta < 1:
            raise ContractViolation("delta must be >= 1", delta=self.delta)
        if not (0 < self.alpha1 < self.alpha2):
            raise ContractViolation("thresholds must satisfy 0 < alpha1 < alpha2",
                                    alpha1=self.alpha1, alpha2=self.alpha2)
        if self.max_iters < 1:
            raise ContractViolation("max_iters must be positive")
        if self.min_len < self.delta:
            raise ContractViolation("min_len must be >= delta",
                                    min_len=self.min_len, delta=self.delta)


def clean_corpus(scored_annotations, params: CleanParams):
    """Drop the floor(N * ratio) lowest-scored annotations.

    Input is a list of (annotation, gamma) pairs.  Ranking is by gamma
    descending with ties broken by annotation_id ascending, so results
    are stable across runs and platforms.  Returns (kept, dropped) lists
    of annotations with statuses set to ``kept`` / ``dropped``.
    """
    from dataclasses import replace

    items = list(scored_annotations)
    for _, g in items:
        if not math.isfinite(g):
            raise ContractViolation("non-finite gamma in cleaning input")
    order = sorted(items, key=lambda ag: (-ag[1], ag[0].annotation_id))
    n_drop = math.floor(len(order) * params.ratio)
    kept = [replace(a, status="kept") for a, _ in order[: len(order) - n_drop]]
    dropped = [replace(a, status="dropped") for a, _ in order[len(order) - n_drop:]]
    return kept, dropped


def adjust_boundary(track: SimilarityTrack, b: Boundary,
                    params: AdjustParams) -> Boundary:
    """Iteratively expand or shrink each boundary side in steps of delta.

    Per iteration and side, with mu the mean mapped similarity inside the
    current moment: the side expands outward by delta when the adjacent
    outside window is nearly as strong as the moment (mean >= alpha2*mu),
    otherwise it shrinks inward by delta when the adjacent inside window
    is very weak (mean < alpha1*mu) and the moment stays longer than
    min_len.  The start side is evaluated before the end side; iteration
    stops at a fixpoint or after max_iters rounds.
    """
    if b.timeline_len != track.num_frames:
        raise ContractViolation("boundary timeline does not match track")
    T = track.num_frames
    d = params.delta
    s, e = b.start, b.end

    for _ in range(params.max_iters):
        moved = False

        mu = track.window_mean(s, e)
        pre_lo = max(0, s - d)
        if pre_lo < s and track.window_mean(pre_lo, s) >= params.alpha2 * mu:
            s = max(0, s - d)
            moved = True
        elif e - s > params.min_len + d and \
                track.window_mean(s, s + d) < params.alpha1 * mu:
            s = s + d
            moved = True

        mu = track.window_mean(s, e)
        post_hi = min(T, e + d)
        if post_hi > e and track.window_mean(e, post_hi) >= params.alpha2 * mu:
            e = min(T, e + d)
            moved = True
        elif e - s > params.min_len + d and \
                track.window_mean(e - d, e) < params.alpha1 * mu:
            e = e - d
            moved = True

        if not moved:
            break

    return Boundary(s, e, T)


@dataclass(frozen=True)
class RefineRecord:
    annotation_id: str
    gamma: float
    decision: str  # "kept" or "dropped"
    boundary_before_frames: tuple
    boundary_after_frames: Optional[tuple]

    def to_json_obj(self):
        return {
            "annotation_id": self.annotation_id,
            "gamma": self.gamma,
            "decision": self.decision,
            "boundary_before_frames": list(self.boundary_before_frames),
            "boundary_after_frames": (list(self.boundary_after_frames)
                                      if self.boundary_after_frames else None),
        }


@dataclass
class RefineReport:
    records: list = field(default_factory=list)

    def to_json_obj(self):
        return {"annotations": [r.to_json_obj() for r in self.records]}

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(self.to_json_obj(), indent=2) + "\n")


def compute_tracks(manifest: CorpusManifest, threads: int = 1):
    """Similarity track per annotation, keyed by annotation_id.

    Feature files are read once per video; per-annotation work is pure,
    so the thread count never changes the result.
    """
    queries = manifest.load_query_features()
    by_video = {}
    for ann in manifest.annotations:
        by_video.setdefault(ann.video_id, []).append(ann)

    def one_video(video_id):
        frames = manifest.load_video_features(video_id)
        out = {}
        for ann in by_video[video_id]:
            q = QueryFeature(queries.data[ann.query_feature_ref])
            out[ann.annotation_id] = frame_similarities(q, frames)
        return out

    tracks = {}
    video_ids = sorted(by_video)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for part in pool.map(one_video, video_ids):
                tracks.update(part)
    else:
        for vid in video_ids:
            tracks.update(one_video(vid))
    return tracks


def refine_corpus(manifest: CorpusManifest, clean_params: CleanParams,
                  adjust_params: AdjustParams, threads: int = 1):
    """Score, clean, then adjust a raw corpus.

    Returns (refined_manifest, report).  The refined manifest keeps only
    surviving annotations, each with status ``adjusted`` and its boundary
    replaced by the adjusted one; the report records gamma, the keep/drop
    decision and the boundary delta for every input annotation.
    """
    tracks = compute_tracks(manifest, threads=threads)
    scored = [
        (ann, moment_contrast(tracks[ann.annotation_id], ann.boundary_frames))
        for ann in manifest.annotations
    ]
    gamma_by_id = {ann.annotation_id: g for ann, g in scored}
    kept, dropped = clean_corpus(scored, clean_params)

    def adjust_one(ann):
        new_b = adjust_boundary(tracks[ann.annotation_id], ann.boundary_frames,
                                adjust_params)
        video = manifest.video_by_id(ann.video_id)
        return with_updated_boundary(ann, new_b, video, status="adjusted")

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            adjusted = list(pool.map(adjust_one, kept))
    else:
        adjusted = [adjust_one(ann) for ann in kept]

    adjusted.sort(key=lambda a: a.annotation_id)
    records = []
    after = {a.annotation_id: a for a in adjusted}
    for ann in manifest.annotations:
        out = after.get(ann.annotation_id)
        records.append(RefineRecord(
            annotation_id=ann.annotation_id,
            gamma=gamma_by_id[ann.annotation_id],
            decision="kept" if out is not None else "dropped",
            boundary_before_frames=ann.boundary_frames.as_tuple(),
            boundary_after_frames=out.boundary_frames.as_tuple() if out else None,
        ))
    report = RefineReport(records=records)

    refined = CorpusManifest(
        format_version=manifest.format_version,
        videos=manifest.videos,
        queries_file_path=manifest.queries_file_path,
        annotations=tuple(adjusted),
        synth=manifest.synth,
        provenance=manifest.provenance,
        base_dir=manifest.base_dir,
    )
    return refined, report
