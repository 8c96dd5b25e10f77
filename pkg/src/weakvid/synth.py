"""Deterministic synthetic video corpora with weak labels and detections.

Each video shows one individual (a striped ellipse whose hue and stripe
frequency identify it) drifting by a small random walk over a per-video
scene (background color, stripes, a static scene object, illumination).
Consecutive frames are therefore near-duplicates, and the scene identifies
the video about as well as the individual's appearance identifies the
class: the setting in which frame-level cross-validation over-reports
accuracy.
"""

from __future__ import annotations

import colorsys
import configparser
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from PIL import Image

from .errors import DiskWrite, InvalidConfig
from .ingest import DetectionRecord, VideoMeta, write_detections, write_manifest


@dataclass(frozen=True)
class SynthConfig:
    n_classes: int = 6
    videos_per_class: Union[int, tuple] = 10
    frames_per_video: int = 100
    frame_width: int = 96
    frame_height: int = 72
    patch_width: int = 30
    patch_height: int = 36
    appearance_strength: float = 0.7  # 0: individuals indistinguishable, 1: saturated distinct hues
    hue_spread: float = 20.0  # per-video hue deviation of the individual, degrees (std)
    nuisance_strength: float = 1.0  # contrast of per-video scene texture and objects
    illumination: float = 0.3  # per-video brightness factor drawn from 1 +- this
    jitter: float = 1.5  # std of the per-frame random-walk step, pixels
    box_noise: float = 1.0  # std of detector box corner noise, pixels
    webcam_fraction: float = 0.5
    webcam_beta: tuple = (2.0, 4.0)
    camcorder_beta: tuple = (6.0, 2.0)
    mislabel_rate: float = 0.05
    seed: int = 0

    def __post_init__(self):
        vpc = self.videos_per_class
        if isinstance(vpc, (list, tuple)):
            object.__setattr__(self, "videos_per_class", tuple(int(v) for v in vpc))
        for name in ("webcam_beta", "camcorder_beta"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        counts = self.video_counts()
        if self.n_classes < 1 or len(counts) != self.n_classes or min(counts) < 1:
            raise InvalidConfig("need n_classes >= 1 and at least one video per class")
        if self.frames_per_video < 1:
            raise InvalidConfig("frames_per_video must be >= 1")
        if not (1 <= self.patch_width <= self.frame_width and 1 <= self.patch_height <= self.frame_height):
            raise InvalidConfig("patch must fit inside the frame")
        for name in ("appearance_strength", "webcam_fraction", "mislabel_rate"):
            if not (0.0 <= getattr(self, name) <= 1.0):
                raise InvalidConfig(f"{name} must lie in [0, 1]")
        for name in ("hue_spread", "nuisance_strength", "illumination", "jitter", "box_noise"):
            if getattr(self, name) < 0:
                raise InvalidConfig(f"{name} must be >= 0")
        if self.illumination >= 1:
            raise InvalidConfig("illumination must be < 1")
        if min(self.webcam_beta + self.camcorder_beta) <= 0:
            raise InvalidConfig("beta parameters must be > 0")

    def video_counts(self) -> tuple:
        vpc = self.videos_per_class
        if isinstance(vpc, tuple):
            return vpc
        return (int(vpc),) * self.n_classes

    def class_names(self) -> list[str]:
        return [f"ind{c}" for c in range(self.n_classes)]


def load_synth_config(path, **overrides) -> SynthConfig:
    """Read a ``[synth]`` section of key = value pairs (INI syntax)."""
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise InvalidConfig(f"cannot read config {path}")
    section = parser["synth"] if parser.has_section("synth") else parser[parser.default_section]
    known = {f.name: f for f in fields(SynthConfig)}
    values = {}
    for key, raw in section.items():
        if key not in known:
            raise InvalidConfig(f"unknown synth key {key!r}")
        values[key] = _coerce(key, raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return SynthConfig(**values)


def _coerce(key, raw: str):
    if key in ("webcam_beta", "camcorder_beta"):
        return tuple(float(v) for v in raw.split(","))
    if key == "videos_per_class":
        parts = [int(v) for v in raw.split(",")]
        return parts[0] if len(parts) == 1 else tuple(parts)
    if key in ("n_classes", "frames_per_video", "frame_width", "frame_height", "patch_width",
               "patch_height", "seed"):
        return int(raw)
    return float(raw)


def color_blob_config(**overrides) -> SynthConfig:
    """Two trivially separable individuals (red vs blue), faint scenes."""
    base = dict(n_classes=2, videos_per_class=6, frames_per_video=10, frame_width=64, frame_height=64,
                patch_width=40, patch_height=40, appearance_strength=1.0, hue_spread=5.0,
                nuisance_strength=0.1, illumination=0.1, mislabel_rate=0.0)
    base.update(overrides)
    return SynthConfig(**base)


@dataclass
class Corpus:
    root: Path
    videos: list
    detections: list
    config: SynthConfig

    @property
    def manifest_path(self) -> Path:
        return self.root / "manifest.csv"

    @property
    def detections_path(self) -> Path:
        return self.root / "detections.jsonl"


def _hsv(h_deg, s, v):
    return np.array(colorsys.hsv_to_rgb((h_deg % 360.0) / 360.0, float(np.clip(s, 0, 1)), float(np.clip(v, 0, 1))))


def _class_hue(cfg: SynthConfig, c: int) -> float:
    return 360.0 * c / cfg.n_classes


def _render_scene(cfg: SynthConfig, rng) -> np.ndarray:
    """Static per-video background, float RGB in [0, 1]."""
    W, H = cfg.frame_width, cfg.frame_height
    k = cfg.nuisance_strength
    base = _hsv(rng.uniform(0, 360), rng.uniform(0.2, 0.9), rng.uniform(0.3, 0.9))
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    theta = rng.uniform(0, np.pi)
    freq = rng.uniform(0.03, 0.25)
    stripes = np.sin(2 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta)) + rng.uniform(0, 2 * np.pi))
    scene = base[None, None, :] * (1.0 + 0.35 * k * stripes[..., None])
    # a static scene object: a rectangle of another color
    ow, oh = int(rng.integers(W // 6, W // 2)), int(rng.integers(H // 6, H // 2))
    ox, oy = int(rng.integers(0, W - ow + 1)), int(rng.integers(0, H - oh + 1))
    obj = _hsv(rng.uniform(0, 360), rng.uniform(0.3, 1.0), rng.uniform(0.3, 1.0))
    region = scene[oy:oy + oh, ox:ox + ow]
    scene[oy:oy + oh, ox:ox + ow] = (1 - min(k, 1.0)) * region + min(k, 1.0) * obj
    return scene


def _render_patch(cfg: SynthConfig, rng, individual: int):
    """Individual's appearance for one video: (rgb_map, alpha_mask)."""
    pw, ph = cfg.patch_width, cfg.patch_height
    a = cfg.appearance_strength
    hue = _class_hue(cfg, individual) + rng.normal(0, cfg.hue_spread)
    sat = 0.15 + 0.75 * a
    val = rng.uniform(0.55, 0.95)
    color = _hsv(hue, sat, val)
    stripe_cycles = 1.5 + 1.0 * individual  # stripes across the patch width
    yy, xx = np.mgrid[0:ph, 0:pw].astype(np.float64)
    stripes = 1.0 + 0.3 * a * np.sin(2 * np.pi * stripe_cycles * xx / pw)
    rgb = color[None, None, :] * stripes[..., None]
    cx, cy = (pw - 1) / 2, (ph - 1) / 2
    mask = ((xx - cx) / (pw / 2)) ** 2 + ((yy - cy) / (ph / 2)) ** 2 <= 1.0
    return rgb, mask


def _walk(cfg: SynthConfig, rng) -> np.ndarray:
    """Top-left patch positions, reflected at the frame borders."""
    max_x, max_y = cfg.frame_width - cfg.patch_width, cfg.frame_height - cfg.patch_height
    pos = np.empty((cfg.frames_per_video, 2))
    cur = np.array([rng.uniform(0, max_x), rng.uniform(0, max_y)])
    for t in range(cfg.frames_per_video):
        if t:
            cur = cur + rng.normal(0, cfg.jitter, 2) if cfg.jitter > 0 else cur
            for i, hi in enumerate((max_x, max_y)):
                if hi == 0:
                    cur[i] = 0
                    continue
                while cur[i] < 0 or cur[i] > hi:
                    cur[i] = -cur[i] if cur[i] < 0 else 2 * hi - cur[i]
        pos[t] = cur
    return np.rint(pos).astype(int)


def generate_corpus(cfg: SynthConfig, out_dir) -> Corpus:
    """Write frames, ``manifest.csv``, ``detections.jsonl`` and ``synth_config.json``."""
    root = Path(out_dir)
    try:
        (root / "frames").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DiskWrite(f"cannot create {root}: {exc}") from None
    names = cfg.class_names()
    videos, detections, truth = [], [], {}
    vidx = 0
    for c, n_videos in enumerate(cfg.video_counts()):
        for j in range(n_videos):
            rng = np.random.default_rng([cfg.seed, vidx])
            vid = f"{names[c]}_v{j:02d}"
            source = "webcam" if rng.random() < cfg.webcam_fraction else "camcorder"
            shown = c
            if cfg.n_classes > 1 and rng.random() < cfg.mislabel_rate:
                shown = int((c + rng.integers(1, cfg.n_classes)) % cfg.n_classes)
            truth[vid] = names[shown]
            scene = _render_scene(cfg, rng)
            patch_rgb, mask = _render_patch(cfg, rng, shown)
            light = 1.0 + rng.uniform(-cfg.illumination, cfg.illumination)
            positions = _walk(cfg, rng)
            a, b = cfg.webcam_beta if source == "webcam" else cfg.camcorder_beta
            scores = rng.beta(a, b, cfg.frames_per_video)
            noise = rng.normal(0, cfg.box_noise, (cfg.frames_per_video, 4)) if cfg.box_noise > 0 else \
                np.zeros((cfg.frames_per_video, 4))
            frame_dir = root / "frames" / vid
            frame_dir.mkdir(exist_ok=True)
            pw, ph = cfg.patch_width, cfg.patch_height
            for t, (x, y) in enumerate(positions):
                frame = scene.copy()
                region = frame[y:y + ph, x:x + pw]
                region[mask] = patch_rgb[mask]
                pixels = np.clip(np.rint(frame * light * 255.0), 0, 255).astype(np.uint8)
                try:
                    Image.fromarray(pixels, "RGB").save(frame_dir / f"{t:06d}.png")
                except OSError as exc:
                    raise DiskWrite(f"cannot write frame: {exc}") from None
                x0, y0 = int(round(x + noise[t, 0])), int(round(y + noise[t, 1]))
                x1, y1 = int(round(x + pw + noise[t, 2])), int(round(y + ph + noise[t, 3]))
                detections.append(DetectionRecord(vid, t, (x0, y0, max(1, x1 - x0), max(1, y1 - y0)),
                                                  float(np.clip(scores[t], 0.0, 1.0))))
            videos.append(VideoMeta(vid, names[c], source, cfg.frames_per_video, cfg.frame_width,
                                    cfg.frame_height, str(frame_dir)))
            vidx += 1

    write_manifest(root / "manifest.csv", videos, relative_to=root)
    write_detections(root / "detections.jsonl", detections)
    meta = {"config": asdict(cfg), "rendered_individual": truth}
    (root / "synth_config.json").write_text(json.dumps(meta, indent=1) + "\n", encoding="utf-8")
    return Corpus(root, videos, detections, cfg)
