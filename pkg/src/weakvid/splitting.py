"""Frame-level stratified k-fold versus video-level train/val/test splits.

The two schemes differ only in the unit that is shuffled. Frame-level folds
scatter near-duplicate frames of one video across train and test; the
video-level split keeps every video on one side.
"""

from __future__ import annotations

import json
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import SplitError, TooFewSamples

SPLIT_NAMES = ("train", "val", "test")
# order in which leftover units are handed out on equal remainders
REMAINDER_PRIORITY = ("train", "test", "val")


class SplitWarning(UserWarning):
    pass


@dataclass
class FoldAssignment:
    k: int
    seed: int
    fold_of: dict[str, int]
    stratified: bool = True
    shuffled: bool = True

    def folds(self) -> list[list[str]]:
        out: list[list[str]] = [[] for _ in range(self.k)]
        for sid, f in self.fold_of.items():
            out[f].append(sid)
        return out

    def to_json(self) -> str:
        doc = {
            "scheme": "kfold_frame",
            "k": self.k,
            "seed": self.seed,
            "stratified": self.stratified,
            "shuffled": self.shuffled,
            "fold_of": dict(sorted(self.fold_of.items())),
        }
        return json.dumps(doc, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "FoldAssignment":
        doc = json.loads(text)
        return cls(int(doc["k"]), int(doc["seed"]), {k: int(v) for k, v in doc["fold_of"].items()},
                   bool(doc.get("stratified", True)), bool(doc.get("shuffled", True)))


@dataclass
class SplitAssignment:
    split_of: dict[str, str]
    ratios: tuple[float, float, float] = (0.6, 0.2, 0.2)
    seed: int = 0
    warnings: list[str] = field(default_factory=list)

    def videos(self, part: str) -> list[str]:
        return sorted(v for v, s in self.split_of.items() if s == part)

    def to_json(self) -> str:
        doc = {name: self.videos(name) for name in SPLIT_NAMES}
        doc.update(scheme="video_level", seed=self.seed, ratios=list(self.ratios), warnings=self.warnings)
        return json.dumps(doc, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SplitAssignment":
        doc = json.loads(text)
        split_of = {vid: name for name in SPLIT_NAMES for vid in doc.get(name, [])}
        return cls(split_of, tuple(doc.get("ratios", (0.6, 0.2, 0.2))), int(doc.get("seed", 0)),
                   list(doc.get("warnings", [])))


def kfold_frame_split(samples, k: int = 10, seed: int = 0, labels=None) -> FoldAssignment:
    """Stratified, seeded k-fold over individual samples.

    ``samples`` are objects with ``sample_id`` and ``label`` (or plain ids
    with ``labels`` given alongside). Within each class the shuffled samples
    are dealt round-robin, continuing the dealer position from one class to
    the next, so fold sizes differ by at most one both per class and overall.
    """
    if k < 2:
        raise SplitError(f"k must be >= 2, got {k}")
    if labels is None:
        ids = [s.sample_id for s in samples]
        labels = [s.label for s in samples]
    else:
        ids = list(samples)
        labels = list(labels)
    if len(ids) != len(labels):
        raise SplitError("ids and labels differ in length")
    if len(set(ids)) != len(ids):
        raise SplitError("duplicate sample ids")
    by_class: dict[str, list[str]] = defaultdict(list)
    for sid, lab in zip(ids, labels):
        by_class[lab].append(sid)
    if not by_class or any(len(v) == 0 for v in by_class.values()):
        raise TooFewSamples("every class needs at least one sample")

    rng = np.random.default_rng(seed)
    fold_of: dict[str, int] = {}
    pos = 0
    for lab in sorted(by_class):
        members = sorted(by_class[lab])
        for i in rng.permutation(len(members)):
            fold_of[members[i]] = pos % k
            pos += 1
    return FoldAssignment(k, seed, fold_of)


def largest_remainder(n: int, ratios: Sequence[float]) -> dict[str, int]:
    """Apportion ``n`` units to train/val/test by largest remainder."""
    quotas = {name: n * r for name, r in zip(SPLIT_NAMES, ratios)}
    counts = {name: math.floor(q + 1e-9) for name, q in quotas.items()}
    left = n - sum(counts.values())
    order = sorted(
        SPLIT_NAMES,
        key=lambda name: (-round(quotas[name] - counts[name], 9), REMAINDER_PRIORITY.index(name)),
    )
    for name in order[:left]:
        counts[name] += 1
    return counts


def video_level_split(videos: Iterable, ratios=(0.6, 0.2, 0.2), seed: int = 0) -> SplitAssignment:
    """Split each individual's videos into train/val/test by video count.

    ``videos`` are objects with ``video_id`` and ``weak_label``. Frame counts
    play no role. An individual with one video keeps it in train (with a
    warning); two videos go to train and test.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise SplitError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    by_label: dict[str, list[str]] = defaultdict(list)
    for v in videos:
        by_label[v.weak_label].append(v.video_id)

    rng = np.random.default_rng(seed)
    split_of: dict[str, str] = {}
    notes = []
    for label in sorted(by_label):
        ids = sorted(by_label[label])
        if len(set(ids)) != len(ids):
            raise SplitError(f"duplicate video ids for {label!r}")
        order = [ids[i] for i in rng.permutation(len(ids))]
        if len(ids) == 1:
            msg = f"individual {label!r} has a single video; it goes to train only"
            warnings.warn(msg, SplitWarning, stacklevel=2)
            notes.append(msg)
            counts = {"train": 1, "val": 0, "test": 0}
        elif len(ids) == 2:
            counts = {"train": 1, "val": 0, "test": 1}
        else:
            counts = largest_remainder(len(ids), ratios)
        pos = 0
        for name in SPLIT_NAMES:
            for vid in order[pos:pos + counts[name]]:
                split_of[vid] = name
            pos += counts[name]
    return SplitAssignment(split_of, ratios, seed, notes)


def leaked_videos(fold_or_split_of: dict[str, str], video_of: dict[str, str]) -> set[str]:
    """Videos whose samples fall in more than one part of a partition.

    ``fold_or_split_of`` maps sample id to its part (fold index or split
    name); ``video_of`` maps sample id to video id.
    """
    parts: dict[str, set] = defaultdict(set)
    for sid, part in fold_or_split_of.items():
        parts[video_of[sid]].add(part)
    return {vid for vid, p in parts.items() if len(p) > 1}
