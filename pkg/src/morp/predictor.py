"""Deterministic sliding-window proposal predictor.

Stands in for a trained localization model during desk-scale correction
runs.  Candidate windows are enumerated at several length fractions of
the timeline, shifted by a seeded epoch-dependent jitter so consecutive
epochs contribute diverse candidates.  A handful of thresholded
"actionness" runs are added to the pool so proposals are not limited to
the quantized fraction lengths.  Windows are scored by their
contrast margin (mean mapped similarity inside minus mean outside),
greedily NMS-suppressed, and the survivors' scores are softmaxed into
confidences.

Scoring note: the raw inside/outside mass ratio is strictly increasing
under window growth whenever every frame carries positive mapped mass,
so ranking mixed-length windows by it always elects the longest window.
The mean-contrast margin keeps the intended ordering (the window hugging
the relevant support scores highest) without that length bias.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Boundary, ScoredBoundary
from .errors import ContractViolation, NoCandidatesError, PredictorError
from .refine import SimilarityTrack

DEFAULT_FRACTIONS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8)


@dataclass(frozen=True)
class ProposalParams:
    """Window enumeration and suppression knobs."""

    window_fractions: tuple = DEFAULT_FRACTIONS
    stride: int = 5
    nms_iou: float = 0.5
    jitter: int = 5

    def __post_init__(self):
        fr = tuple(float(f) for f in self.window_fractions)
        if not fr or any(not (0.0 < f <= 1.0) for f in fr):
            raise ContractViolation("window fractions must lie in (0, 1]")
        if list(fr) != sorted(fr):
            raise ContractViolation("window fractions must be sorted ascending")
        object.__setattr__(self, "window_fractions", fr)
        if self.stride < 1:
            raise ContractViolation("stride must be >= 1", stride=self.stride)
        if not (0.0 <= self.nms_iou <= 1.0):
            raise ContractViolation("nms_iou must lie in [0, 1]")
        if self.jitter < 0:
            raise ContractViolation("jitter must be >= 0")


def _support_candidates(track: SimilarityTrack):
    """Maximal runs of high mapped similarity, at a few track-relative levels.

    Sliding windows alone quantize proposal lengths to the configured
    fractions; thresholded "actionness" runs recover moment supports at
    native length, which is what lets consensus correction end up more
    precise than the coarse adjustment stage.
    """
    mapped = track.mapped
    lo, hi = float(mapped.min()), float(mapped.max())
    if hi - lo < 1e-9:
        return []
    out = []
    seen = set()
    for f in (0.35, 0.5, 0.65):
        theta = lo + f * (hi - lo)
        above = np.concatenate(([False], mapped >= theta, [False]))
        edges = np.flatnonzero(above[1:] != above[:-1])
        for s, e in zip(edges[::2], edges[1::2]):
            if (s, e) not in seen:
                seen.add((s, e))
                out.append((int(s), int(e)))
    return out


def _enumerate_windows(track: SimilarityTrack, epoch: int, seed: int,
                       params: ProposalParams):
    """(start, end) candidate arrays, jittered per (seed, epoch)."""
    T = track.num_frames
    rng = np.random.default_rng([seed & 0xFFFFFFFF, epoch])
    starts, ends = [], []
    support = _support_candidates(track)
    if support:
        s, e = zip(*support)
        starts.append(np.asarray(s, dtype=np.int64))
        ends.append(np.asarray(e, dtype=np.int64))
    for f in params.window_fractions:
        length = int(round(f * T))
        if length < 1 or length > T:
            continue
        offset = 0
        if params.jitter > 0:
            offset = int(rng.integers(-params.jitter, params.jitter + 1))
        base = np.arange(0, T - length + 1, params.stride)
        s = np.clip(base + offset, 0, T - length)
        s = np.unique(s)
        starts.append(s)
        ends.append(s + length)
    if not starts:
        raise NoCandidatesError("track too short for every window fraction", T=T)
    return np.concatenate(starts), np.concatenate(ends)


def _contrast_margin(track: SimilarityTrack, starts, ends):
    """Mean mapped similarity inside each window minus the mean outside."""
    T = track.num_frames
    total = track.prefix[T]
    inside = track.prefix[ends] - track.prefix[starts]
    lens = (ends - starts).astype(np.float64)
    out_lens = T - lens
    inside_mean = inside / lens
    outside_mean = np.where(out_lens > 0, (total - inside) / np.maximum(out_lens, 1), inside_mean)
    return inside_mean - outside_mean


def _greedy_nms(starts, ends, order, nms_iou, T):
    """Indices surviving greedy NMS, in ranking order."""
    s = starts[order]
    e = ends[order]
    inter = np.minimum(e[:, None], e[None, :]) - np.maximum(s[:, None], s[None, :])
    inter = np.maximum(inter, 0)
    lens = e - s
    union = lens[:, None] + lens[None, :] - inter
    suppress = inter / union > nms_iou

    keep = []
    dead = np.zeros(len(order), dtype=bool)
    for i in range(len(order)):
        if dead[i]:
            continue
        keep.append(order[i])
        dead |= suppress[i]
    return keep


def propose(track: SimilarityTrack, U: int, epoch: int, seed: int,
            params: Optional[ProposalParams] = None):
    """Return up to U scored boundary proposals for one similarity track.

    Deterministic in (track, U, epoch, seed, params); with jitter 0 the
    output is epoch-invariant.
    """
    if U < 1:
        raise ContractViolation("U must be >= 1", U=U)
    if params is None:
        params = ProposalParams()
    T = track.num_frames
    starts, ends = _enumerate_windows(track, epoch, seed, params)
    scores = _contrast_margin(track, starts, ends)

    # stable ranking: score descending, enumeration index ascending
    order = np.lexsort((np.arange(len(scores)), -scores))
    keep = _greedy_nms(starts, ends, order, params.nms_iou, T)

    kept_scores = scores[keep]
    shifted = kept_scores - np.max(kept_scores)
    weights = np.exp(shifted)
    conf = weights / weights.sum()

    picked = range(min(U, len(keep)))
    return [
        ScoredBoundary(
            boundary=Boundary(int(starts[keep[i]]), int(ends[keep[i]]), T),
            confidence=float(conf[i]),
        )
        for i in picked
    ]


class SlidingWindowPredictor:
    """Predictor-contract adapter around :func:`propose`."""

    def __init__(self, params: Optional[ProposalParams] = None):
        self.params = params or ProposalParams()

    def __call__(self, track: SimilarityTrack, U: int, epoch: int, seed: int):
        return propose(track, U, epoch, seed, self.params)


class FilePredictor:
    """Replays predictions from a JSON-lines file.

    One record per (epoch, annotation_id):
        {"epoch": j, "annotation_id": id,
         "predictions": [{"start": s, "end": e, "confidence": c}, ...]}

    Lets an external model (for example, exported scores from a trained
    network) drive the correction loop.
    """

    def __init__(self, path):
        import json

        self._table = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                self._table[(int(rec["epoch"]), rec["annotation_id"])] = \
                    rec["predictions"]

    def for_annotation(self, annotation_id, track, U, epoch):
        key = (epoch, annotation_id)
        if key not in self._table:
            raise PredictorError("no prediction record for annotation/epoch",
                                 annotation_id=annotation_id, epoch=epoch)
        out = []
        for p in self._table[key][:U]:
            out.append(ScoredBoundary(
                boundary=Boundary(int(p["start"]), int(p["end"]),
                                  track.num_frames),
                confidence=float(p["confidence"]),
            ))
        return out
