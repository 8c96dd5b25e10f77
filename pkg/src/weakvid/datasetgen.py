"""Materialize the ROI/noROI x score-threshold dataset variants."""

from __future__ import annotations

import json
import logging
import os
import warnings
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Optional

from .errors import DatasetError, UnknownVideo
from .ingest import DetectionRecord, VideoMeta

log = logging.getLogger(__name__)


class EmptyDatasetWarning(UserWarning):
    pass


@dataclass(frozen=True)
class DatasetVariant:
    use_roi: bool
    score_threshold: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.score_threshold <= 1.0):
            raise DatasetError(f"score threshold {self.score_threshold} not in [0, 1]")

    @property
    def name(self) -> str:
        return f"{'ROI' if self.use_roi else 'noROI'},S{self.score_threshold:g}"

    @classmethod
    def parse(cls, text: str) -> "DatasetVariant":
        """Parse selectors such as ``roi,s0.5`` or ``noROI,S0``."""
        parts = [p.strip().lower() for p in text.split(",")]
        if len(parts) != 2 or parts[0] not in ("roi", "noroi") or not parts[1].startswith("s"):
            raise DatasetError(f"bad variant selector {text!r}; expected e.g. 'roi,s0.5'")
        try:
            tau = float(parts[1][1:])
        except ValueError:
            raise DatasetError(f"bad score threshold in {text!r}") from None
        return cls(parts[0] == "roi", tau)


STANDARD_VARIANTS = (
    DatasetVariant(False, 0.0),
    DatasetVariant(True, 0.0),
    DatasetVariant(False, 0.5),
    DatasetVariant(True, 0.5),
)


@dataclass(frozen=True)
class Sample:
    sample_id: str
    video_id: str
    frame_index: int
    label: str
    score: float
    image_ref: str
    crop: Optional[tuple[int, int, int, int]] = None


@dataclass
class DatasetStats:
    per_class: dict[str, int] = field(default_factory=dict)
    total: int = 0
    min_per_class: int = 0
    max_per_class: int = 0


def sample_id_for(video_id: str, frame_index: int) -> str:
    return f"{video_id}#{frame_index:06d}"


def clamp_box(bbox, width: int, height: int):
    """Intersect an (x, y, w, h) box with the frame; None when empty."""
    x, y, w, h = bbox
    x0, y0 = max(0, x), max(0, y)
    x1, y1 = min(width, x + w), min(height, y + h)
    if x1 - x0 < 1 or y1 - y0 < 1:
        return None
    return (x0, y0, x1 - x0, y1 - y0)


def build_dataset(
    manifest: list[VideoMeta],
    best: Mapping[str, Mapping[int, DetectionRecord]],
    variant: DatasetVariant,
) -> list[Sample]:
    videos = {v.video_id: v for v in manifest}
    for vid in best:
        if vid not in videos:
            raise UnknownVideo(vid)

    samples = []
    for vid in sorted(best):
        meta = videos[vid]
        for frame, det in sorted(best[vid].items()):
            if det.score < variant.score_threshold:
                continue
            box = clamp_box(det.bbox, meta.width, meta.height)
            if box is None:
                log.warning("dropping %s frame %d: bbox %s outside %dx%d frame",
                            vid, frame, det.bbox, meta.width, meta.height)
                continue
            samples.append(
                Sample(
                    sample_id=sample_id_for(vid, frame),
                    video_id=vid,
                    frame_index=frame,
                    label=meta.weak_label,
                    score=det.score,
                    image_ref=str(meta.frame_path(frame)),
                    crop=box if variant.use_roi else None,
                )
            )
    if not samples:
        warnings.warn(f"no detection passes score >= {variant.score_threshold:g}", EmptyDatasetWarning, stacklevel=2)
    return samples


def dataset_stats(samples: list[Sample]) -> DatasetStats:
    counts = Counter(s.label for s in samples)
    if not counts:
        return DatasetStats()
    return DatasetStats(
        per_class=dict(sorted(counts.items())),
        total=sum(counts.values()),
        min_per_class=min(counts.values()),
        max_per_class=max(counts.values()),
    )


def save_dataset(path, samples: list[Sample], variant: DatasetVariant, provenance: Optional[dict] = None) -> None:
    """Write ``dataset.json``; image paths are stored relative to its directory."""
    path = Path(path)
    base = path.parent.resolve()
    rows = []
    for s in samples:
        row = asdict(s)
        row["image_ref"] = os.path.relpath(Path(s.image_ref).resolve(), base)
        row["crop"] = list(s.crop) if s.crop is not None else None
        rows.append(row)
    doc = {
        "variant": {"name": variant.name, "use_roi": variant.use_roi, "score_threshold": variant.score_threshold},
        "stats": asdict(dataset_stats(samples)),
        "provenance": provenance or {},
        "samples": rows,
    }
    path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_dataset(path) -> tuple[list[Sample], DatasetVariant]:
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    v = doc["variant"]
    variant = DatasetVariant(bool(v["use_roi"]), float(v["score_threshold"]))
    samples = []
    for row in doc["samples"]:
        crop = tuple(row["crop"]) if row.get("crop") is not None else None
        samples.append(
            Sample(
                sample_id=row["sample_id"],
                video_id=row["video_id"],
                frame_index=int(row["frame_index"]),
                label=row["label"],
                score=float(row["score"]),
                image_ref=str(path.parent / row["image_ref"]),
                crop=crop,
            )
        )
    return samples, variant
