"""Detector output parsing and per-frame best-detection selection.

Detections arrive as JSON lines::

    {"video_id": "v1", "frame": 0, "bbox": [10, 10, 50, 80], "score": 0.28}

and the video manifest is a CSV with header
``video_id,weak_label,source,frame_count,width,height,frames_dir``.
Frames are pre-extracted images named ``{frame:06d}.png`` inside
``frames_dir`` (relative paths resolve against the manifest's directory).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .errors import (
    MalformedLine,
    ManifestError,
    MixedVideos,
    NonPositiveBox,
    ScoreOutOfRange,
)

SOURCES = ("webcam", "camcorder")
MANIFEST_FIELDS = ["video_id", "weak_label", "source", "frame_count", "width", "height", "frames_dir"]
FRAME_NAME = "{:06d}.png"


@dataclass(frozen=True)
class VideoMeta:
    video_id: str
    weak_label: str
    source: str
    frame_count: int
    width: int
    height: int
    frames_dir: str = ""

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ManifestError(f"video {self.video_id}: unknown source {self.source!r}")
        if self.frame_count < 0:
            raise ManifestError(f"video {self.video_id}: negative frame_count")
        if self.width <= 0 or self.height <= 0:
            raise ManifestError(f"video {self.video_id}: non-positive frame size")

    def frame_path(self, frame_index: int) -> Path:
        return Path(self.frames_dir) / FRAME_NAME.format(frame_index)


@dataclass(frozen=True)
class DetectionRecord:
    video_id: str
    frame_index: int
    bbox: tuple[int, int, int, int]  # x, y, w, h; top-left origin
    score: float

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ScoreOutOfRange(f"score {self.score} not in [0, 1] ({self.video_id}#{self.frame_index})")
        if self.bbox[2] <= 0 or self.bbox[3] <= 0:
            raise NonPositiveBox(f"bbox {self.bbox} has non-positive size ({self.video_id}#{self.frame_index})")
        if self.frame_index < 0:
            raise IngestError(f"negative frame index {self.frame_index} ({self.video_id})")

    def to_json(self) -> str:
        return json.dumps(
            {"video_id": self.video_id, "frame": self.frame_index, "bbox": list(self.bbox), "score": self.score}
        )


def parse_detections(stream: Iterable[str]) -> list[DetectionRecord]:
    """Parse a JSON-lines detection stream; blank lines are skipped."""
    records = []
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            video_id = obj["video_id"]
            frame = obj["frame"]
            bbox = obj["bbox"]
            score = obj["score"]
            if not isinstance(video_id, str) or isinstance(frame, bool) or not isinstance(frame, int):
                raise TypeError("video_id must be a string and frame an integer")
            if frame < 0:
                raise ValueError("frame must be non-negative")
            if len(bbox) != 4 or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in bbox):
                raise TypeError("bbox must be four numbers")
            if not isinstance(score, (int, float)) or isinstance(score, bool) or not math.isfinite(score):
                raise TypeError("score must be a finite number")
        except (ValueError, KeyError, TypeError) as exc:
            raise MalformedLine(line_no, str(exc)) from None
        records.append(
            DetectionRecord(video_id, frame, tuple(int(round(v)) for v in bbox), float(score))
        )
    return records


def read_detections(path) -> list[DetectionRecord]:
    with open(path, encoding="utf-8") as fh:
        return parse_detections(fh)


def serialize_detections(records: Iterable[DetectionRecord]) -> str:
    return "".join(r.to_json() + "\n" for r in records)


def write_detections(path, records: Iterable[DetectionRecord]) -> None:
    Path(path).write_text(serialize_detections(records), encoding="utf-8")


def select_best_per_frame(records: list[DetectionRecord]) -> dict[int, DetectionRecord]:
    """Keep the highest-scoring detection of each frame.

    Equal scores keep the record that came first in ``records``.
    """
    best: dict[int, DetectionRecord] = {}
    video_ids = {r.video_id for r in records}
    if len(video_ids) > 1:
        raise MixedVideos(f"records span {len(video_ids)} videos: {sorted(video_ids)[:5]}")
    for rec in records:
        cur = best.get(rec.frame_index)
        if cur is None or rec.score > cur.score:
            best[rec.frame_index] = rec
    return dict(sorted(best.items()))


def group_by_video(records: Iterable[DetectionRecord]) -> dict[str, list[DetectionRecord]]:
    groups: dict[str, list[DetectionRecord]] = {}
    for rec in records:
        groups.setdefault(rec.video_id, []).append(rec)
    return groups


def best_detections(records: Iterable[DetectionRecord]) -> dict[str, dict[int, DetectionRecord]]:
    """Per-video best detection map, the form ``build_dataset`` consumes."""
    return {vid: select_best_per_frame(recs) for vid, recs in sorted(group_by_video(records).items())}


def read_manifest(path) -> list[VideoMeta]:
    path = Path(path)
    base = path.parent
    videos = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_FIELDS) - set(reader.fieldnames or [])
        if missing:
            raise ManifestError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            try:
                frames_dir = row["frames_dir"]
                if frames_dir and not Path(frames_dir).is_absolute():
                    frames_dir = str(base / frames_dir)
                videos.append(
                    VideoMeta(
                        video_id=row["video_id"],
                        weak_label=row["weak_label"],
                        source=row["source"],
                        frame_count=int(row["frame_count"]),
                        width=int(row["width"]),
                        height=int(row["height"]),
                        frames_dir=frames_dir,
                    )
                )
            except ValueError as exc:
                raise ManifestError(f"{path}:{reader.line_num}: {exc}") from None
    ids = [v.video_id for v in videos]
    if len(ids) != len(set(ids)):
        raise ManifestError(f"{path}: duplicate video_id")
    return videos


def write_manifest(path, videos: Iterable[VideoMeta], relative_to=None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_FIELDS)
        for v in videos:
            frames_dir = v.frames_dir
            if relative_to is not None and frames_dir:
                frames_dir = str(Path(frames_dir).relative_to(relative_to))
            writer.writerow([v.video_id, v.weak_label, v.source, v.frame_count, v.width, v.height, frames_dir])
