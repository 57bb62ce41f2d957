"""Binary feature files and the JSON corpus manifest.

Feature file layout (little-endian, bit-exact):

    bytes 0..3    magic ``VMRP``
    bytes 4..15   three uint32: format_version (=1), T, D
    bytes 16..    T*D float32 values, row-major

A corpus manifest is a single UTF-8 JSON document.  Boundaries in the
manifest are in seconds; frame indices are derived once at load time
using each video's frame count.  Relative paths resolve against the
manifest's directory.
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .core import Boundary
from .errors import (
    ContractViolation,
    DataQualityError,
    FormatError,
    RangeError,
    ReferentialError,
    TruncationError,
    VersionError,
)

MAGIC = b"VMRP"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sIII")

STATUSES = ("raw", "kept", "dropped", "adjusted", "corrected")
ERROR_TAGS = ("idle", "unmatched", "imprecise", "clean")


@dataclass(frozen=True)
class FrameFeatureMatrix:
    """T x D float32 matrix of per-frame embeddings."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ContractViolation("feature matrix must be T x D with T,D >= 1",
                                    shape=list(np.shape(self.data)))
        _check_rows(arr)
        object.__setattr__(self, "data", arr)

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class QueryFeature:
    """A single D-dimensional query embedding."""

    data: np.ndarray

    def __post_init__(self):
        vec = np.ascontiguousarray(self.data, dtype=np.float32)
        if vec.ndim != 1 or vec.size < 1:
            raise ContractViolation("query feature must be a D-vector")
        if not np.all(np.isfinite(vec)):
            raise DataQualityError("query feature has non-finite entries")
        if not np.any(vec):
            raise DataQualityError("query feature has zero norm")
        object.__setattr__(self, "data", vec)

    @property
    def dim(self) -> int:
        return self.data.shape[0]


def _check_rows(arr: np.ndarray):
    if not np.all(np.isfinite(arr)):
        raise DataQualityError("feature matrix has non-finite entries")
    zero = ~np.any(arr, axis=1)
    if np.any(zero):
        raise DataQualityError(
            "feature matrix has all-zero rows",
            rows=np.nonzero(zero)[0][:8].tolist(),
        )


def read_feature_file(path) -> FrameFeatureMatrix:
    """Load a binary feature file, validating header and payload."""
    with open(path, "rb") as fh:
        head = fh.read(HEADER.size)
        if len(head) < HEADER.size:
            raise TruncationError("file too short for header", path=str(path))
        magic, version, t, d = HEADER.unpack(head)
        if magic != MAGIC:
            raise FormatError("bad magic bytes", path=str(path),
                              magic=magic.hex())
        if version != FORMAT_VERSION:
            raise VersionError("unsupported feature-file version",
                               path=str(path), version=version)
        if t < 1 or d < 1:
            raise FormatError("header claims empty matrix", path=str(path),
                              T=t, D=d)
        payload = fh.read(4 * t * d + 1)
    if len(payload) < 4 * t * d:
        raise TruncationError(
            "payload shorter than header claims",
            path=str(path), expected_rows=t,
            actual_rows=len(payload) // (4 * d),
        )
    if len(payload) > 4 * t * d:
        raise FormatError("trailing bytes after payload", path=str(path))
    data = np.frombuffer(payload, dtype="<f4").reshape(t, d)
    return FrameFeatureMatrix(data)


def write_feature_file(matrix: FrameFeatureMatrix, path) -> None:
    """Write a feature file; read_feature_file(path) reproduces it bit-exactly."""
    arr = np.ascontiguousarray(matrix.data, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, FORMAT_VERSION, arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes(order="C"))


def read_feature_header(path):
    """Return (T, D) from a feature file without reading the payload."""
    with open(path, "rb") as fh:
        head = fh.read(HEADER.size)
    if len(head) < HEADER.size:
        raise TruncationError("file too short for header", path=str(path))
    magic, version, t, d = HEADER.unpack(head)
    if magic != MAGIC:
        raise FormatError("bad magic bytes", path=str(path))
    if version != FORMAT_VERSION:
        raise VersionError("unsupported feature-file version",
                           path=str(path), version=version)
    return t, d


def seconds_to_frames(t: float, duration: float, num_frames: int) -> int:
    """Map a timestamp to a frame index: floor(t / duration * T), clamped to [0, T]."""
    if duration <= 0:
        raise RangeError("duration must be positive", duration=duration)
    if not (0 <= t <= duration):
        raise RangeError("timestamp outside [0, duration]",
                         t=t, duration=duration)
    return min(max(int(math.floor(t / duration * num_frames)), 0), num_frames)


def frames_to_seconds(f: int, duration: float, num_frames: int) -> float:
    """Inverse edge mapping: frame index back to a timestamp."""
    return f * duration / num_frames


@dataclass(frozen=True)
class VideoEntry:
    video_id: str
    duration_seconds: float
    num_frames: int
    feature_file_path: str


@dataclass(frozen=True)
class PseudoAnnotation:
    """One (query, temporal boundary) training record.

    ``boundary_frames`` is derived from ``boundary_seconds`` at load time
    and is authoritative inside the pipeline; ``boundary_seconds`` is
    refreshed from it when the record is serialized.
    """

    annotation_id: str
    video_id: str
    query_text: str
    query_feature_ref: int
    boundary_seconds: tuple
    status: str = "raw"
    gt_boundary_seconds: Optional[tuple] = None
    error_tag: Optional[str] = None
    boundary_frames: Optional[Boundary] = None

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ContractViolation("unknown status", status=self.status)
        if self.error_tag is not None and self.error_tag not in ERROR_TAGS:
            raise ContractViolation("unknown error tag", tag=self.error_tag)
        s, e = self.boundary_seconds
        if not (0 <= s < e):
            raise RangeError(
                "boundary seconds must satisfy 0 <= start < end",
                annotation_id=self.annotation_id, start_s=s, end_s=e,
            )


@dataclass(frozen=True)
class CorpusManifest:
    format_version: int
    videos: tuple
    queries_file_path: str
    annotations: tuple
    synth: Optional[dict] = None
    provenance: Optional[dict] = None
    base_dir: str = "."

    def video_by_id(self, video_id: str) -> VideoEntry:
        return self._video_index()[video_id]

    def _video_index(self):
        if not hasattr(self, "_vidx"):
            object.__setattr__(self, "_vidx", {v.video_id: v for v in self.videos})
        return self._vidx

    def resolve(self, path: str) -> str:
        if os.path.isabs(path):
            return path
        return os.path.join(self.base_dir, path)

    def load_video_features(self, video_id: str) -> FrameFeatureMatrix:
        entry = self.video_by_id(video_id)
        mat = read_feature_file(self.resolve(entry.feature_file_path))
        if mat.num_frames != entry.num_frames:
            raise ReferentialError(
                "feature file frame count disagrees with manifest",
                video_id=video_id, manifest=entry.num_frames,
                file=mat.num_frames,
            )
        return mat

    def load_query_features(self) -> FrameFeatureMatrix:
        return read_feature_file(self.resolve(self.queries_file_path))


def derive_boundary_frames(start_s, end_s, duration, num_frames) -> Boundary:
    """Convert a seconds interval to a nondegenerate frame Boundary."""
    fs = seconds_to_frames(start_s, duration, num_frames)
    fe = seconds_to_frames(end_s, duration, num_frames)
    fs = min(fs, num_frames - 1)
    fe = max(fe, fs + 1)
    return Boundary(fs, fe, num_frames)


def _validate_manifest(manifest: CorpusManifest, num_queries: Optional[int]):
    seen = set()
    for v in manifest.videos:
        if v.video_id in seen:
            raise ReferentialError("duplicate video_id", video_id=v.video_id)
        seen.add(v.video_id)
        if v.duration_seconds <= 0 or v.num_frames < 1:
            raise RangeError("video must have positive duration and frames",
                             video_id=v.video_id)
    for a in manifest.annotations:
        if a.video_id not in seen:
            raise ReferentialError("annotation references absent video",
                                   annotation_id=a.annotation_id,
                                   video_id=a.video_id)
        video = manifest.video_by_id(a.video_id)
        s, e = a.boundary_seconds
        if e > video.duration_seconds + 1e-9:
            raise RangeError("boundary exceeds video duration",
                             annotation_id=a.annotation_id,
                             end_s=e, duration=video.duration_seconds)
        if num_queries is not None and not (0 <= a.query_feature_ref < num_queries):
            raise ReferentialError("query_feature_ref out of range",
                                   annotation_id=a.annotation_id,
                                   ref=a.query_feature_ref,
                                   num_queries=num_queries)


def read_manifest(path, check_queries=True) -> CorpusManifest:
    """Parse and validate a manifest JSON file.

    All referential invariants are checked on read; per-annotation frame
    boundaries are derived here using the owning video's frame count.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError("manifest is not valid JSON",
                              path=str(path), detail=str(exc))
    if doc.get("format_version") != FORMAT_VERSION:
        raise VersionError("unknown manifest format_version",
                           version=doc.get("format_version"))
    base_dir = os.path.dirname(os.path.abspath(path))
    videos = tuple(
        VideoEntry(
            video_id=v["video_id"],
            duration_seconds=float(v["duration_seconds"]),
            num_frames=int(v["num_frames"]),
            feature_file_path=v["feature_file_path"],
        )
        for v in doc.get("videos", [])
    )
    vid_index = {v.video_id: v for v in videos}
    annotations = []
    for a in doc.get("annotations", []):
        ann = PseudoAnnotation(
            annotation_id=a["annotation_id"],
            video_id=a["video_id"],
            query_text=a["query_text"],
            query_feature_ref=int(a["query_feature_ref"]),
            boundary_seconds=tuple(a["boundary_seconds"]),
            status=a.get("status", "raw"),
            gt_boundary_seconds=(tuple(a["gt_boundary_seconds"])
                                 if a.get("gt_boundary_seconds") else None),
            error_tag=a.get("error_tag"),
        )
        video = vid_index.get(ann.video_id)
        if video is not None:
            frames = derive_boundary_frames(
                ann.boundary_seconds[0], ann.boundary_seconds[1],
                video.duration_seconds, video.num_frames,
            )
            ann = replace(ann, boundary_frames=frames)
        annotations.append(ann)
    manifest = CorpusManifest(
        format_version=FORMAT_VERSION,
        videos=videos,
        queries_file_path=doc["queries_file_path"],
        annotations=tuple(annotations),
        synth=doc.get("synth"),
        provenance=doc.get("provenance"),
        base_dir=base_dir,
    )
    num_queries = None
    if check_queries:
        qpath = manifest.resolve(manifest.queries_file_path)
        num_queries, _ = read_feature_header(qpath)
    _validate_manifest(manifest, num_queries)
    return manifest


def manifest_to_json_obj(manifest: CorpusManifest) -> dict:
    doc = {"format_version": manifest.format_version}
    if manifest.provenance is not None:
        doc["provenance"] = manifest.provenance
    if manifest.synth is not None:
        doc["synth"] = manifest.synth
    doc["videos"] = [
        {
            "video_id": v.video_id,
            "duration_seconds": v.duration_seconds,
            "num_frames": v.num_frames,
            "feature_file_path": v.feature_file_path,
        }
        for v in manifest.videos
    ]
    doc["queries_file_path"] = manifest.queries_file_path
    anns = []
    for a in manifest.annotations:
        rec = {
            "annotation_id": a.annotation_id,
            "video_id": a.video_id,
            "query_text": a.query_text,
            "query_feature_ref": a.query_feature_ref,
            "boundary_seconds": list(a.boundary_seconds),
            "status": a.status,
        }
        if a.gt_boundary_seconds is not None:
            rec["gt_boundary_seconds"] = list(a.gt_boundary_seconds)
        if a.error_tag is not None:
            rec["error_tag"] = a.error_tag
        anns.append(rec)
    doc["annotations"] = anns
    return doc


def rebase_manifest(manifest: CorpusManifest, new_dir: str) -> CorpusManifest:
    """Rewrite relative feature paths so they resolve from ``new_dir``."""
    new_dir = os.path.abspath(new_dir)

    def rebased(path):
        return os.path.relpath(manifest.resolve(path), new_dir)

    videos = tuple(
        replace(v, feature_file_path=rebased(v.feature_file_path))
        for v in manifest.videos
    )
    return replace(manifest, videos=videos,
                   queries_file_path=rebased(manifest.queries_file_path),
                   base_dir=new_dir)


def write_manifest(manifest: CorpusManifest, path) -> None:
    """Serialize a manifest with a stable field order (byte-deterministic).

    Relative feature paths are rewritten so they still resolve from the
    manifest's new location.
    """
    _validate_manifest(manifest, None)
    out_dir = os.path.dirname(os.path.abspath(path))
    if out_dir != os.path.abspath(manifest.base_dir):
        manifest = rebase_manifest(manifest, out_dir)
    text = json.dumps(manifest_to_json_obj(manifest), indent=2) + "\n"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def with_updated_boundary(ann: PseudoAnnotation, frames: Boundary,
                          video: VideoEntry, status: str) -> PseudoAnnotation:
    """Return a copy of the annotation with new frame boundary and status."""
    secs = (
        frames_to_seconds(frames.start, video.duration_seconds, video.num_frames),
        frames_to_seconds(frames.end, video.duration_seconds, video.num_frames),
    )
    return replace(ann, boundary_frames=frames, boundary_seconds=secs,
                   status=status)
