"""Handcrafted image descriptor: Hu moments, Haralick texture, color histogram.

The concatenated vector is ``[hu(7) | haralick(13) | histogram]``; with the
default joint 8x8x8 HSV histogram that is 7 + 13 + 512 = 532 values.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from .errors import DegenerateImage, FeatureError, ImageLoadError, NotColor, ZeroMass

HU_DIM = 7
HARALICK_DIM = 13
HARALICK_NAMES = (
    "angular_second_moment",
    "contrast",
    "correlation",
    "sum_of_squares_variance",
    "inverse_difference_moment",
    "sum_average",
    "sum_variance",
    "sum_entropy",
    "entropy",
    "difference_variance",
    "difference_entropy",
    "info_measure_correlation_1",
    "info_measure_correlation_2",
)
# (dy, dx) at distance 1 for 0, 45, 90 and 135 degrees
GLCM_OFFSETS = ((0, 1), (-1, 1), (-1, 0), (-1, -1))


@dataclass(frozen=True)
class FeatureConfig:
    hist_bins: int = 8
    hist_mode: str = "joint"  # or "per-channel"
    glcm_levels: int = 32
    hu_log: bool = False

    def __post_init__(self):
        if self.hist_mode not in ("joint", "per-channel"):
            raise FeatureError(f"unknown histogram mode {self.hist_mode!r}")
        if self.hist_bins < 1 or not (2 <= self.glcm_levels <= 256):
            raise FeatureError("hist_bins must be >= 1 and glcm_levels in [2, 256]")

    @property
    def hist_dim(self) -> int:
        return self.hist_bins ** 3 if self.hist_mode == "joint" else 3 * self.hist_bins

    @property
    def dim(self) -> int:
        return HU_DIM + HARALICK_DIM + self.hist_dim

    def names(self) -> list[str]:
        return (
            [f"hu{i + 1}" for i in range(HU_DIM)]
            + [f"haralick_{n}" for n in HARALICK_NAMES]
            + [f"hist{i}" for i in range(self.hist_dim)]
        )


# ---------------------------------------------------------------- images

def load_image(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            im = im.convert("RGB") if im.mode not in ("L", "RGB") else im
            return np.asarray(im, dtype=np.uint8).copy()
    except (OSError, ValueError) as exc:
        raise ImageLoadError(f"cannot load {path}: {exc}") from None


def crop_image(img: np.ndarray, crop) -> np.ndarray:
    if crop is None:
        return img
    x, y, w, h = crop
    out = img[y:y + h, x:x + w]
    if out.shape[0] == 0 or out.shape[1] == 0:
        raise DegenerateImage(f"crop {crop} is empty for image of shape {img.shape}")
    return out


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """ITU-R 601 luma, rounded half up; single-channel input passes through."""
    if img.ndim == 2:
        return img
    if img.ndim != 3 or img.shape[2] != 3:
        raise FeatureError(f"expected 1 or 3 channels, got shape {img.shape}")
    rgb = img.astype(np.float64)
    luma = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return np.clip(np.floor(luma + 0.5), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------- Hu moments

def central_moments(gray: np.ndarray, order: int = 3) -> tuple[np.ndarray, float]:
    """Central moments mu[p, q] (x along columns, y along rows) and the mass."""
    img = np.asarray(gray, dtype=np.float64)
    m00 = img.sum()
    if m00 <= 0:
        raise ZeroMass("image has zero total intensity")
    h, w = img.shape
    xs = np.arange(w, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)
    xs -= (img.sum(axis=0) @ xs) / m00
    ys -= (img.sum(axis=1) @ ys) / m00
    xp = np.stack([xs ** p for p in range(order + 1)])  # (order+1, w)
    yq = np.stack([ys ** q for q in range(order + 1)])  # (order+1, h)
    mu = xp @ img.T @ yq.T  # mu[p, q] = sum_x sum_y x^p y^q I(y, x)
    return mu, m00


def hu_moments(gray: np.ndarray, log_transform: bool = False) -> np.ndarray:
    mu, m00 = central_moments(gray)

    def eta(p, q):
        return mu[p, q] / m00 ** (1 + (p + q) / 2)

    n20, n02, n11 = eta(2, 0), eta(0, 2), eta(1, 1)
    n30, n03, n21, n12 = eta(3, 0), eta(0, 3), eta(2, 1), eta(1, 2)
    a, b = n30 + n12, n21 + n03
    hu = np.array([
        n20 + n02,
        (n20 - n02) ** 2 + 4 * n11 ** 2,
        (n30 - 3 * n12) ** 2 + (3 * n21 - n03) ** 2,
        a ** 2 + b ** 2,
        (n30 - 3 * n12) * a * (a ** 2 - 3 * b ** 2) + (3 * n21 - n03) * b * (3 * a ** 2 - b ** 2),
        (n20 - n02) * (a ** 2 - b ** 2) + 4 * n11 * a * b,
        (3 * n21 - n03) * a * (a ** 2 - 3 * b ** 2) - (n30 - 3 * n12) * b * (3 * a ** 2 - b ** 2),
    ])
    if log_transform:
        nz = hu != 0
        out = np.zeros_like(hu)
        out[nz] = -np.sign(hu[nz]) * np.log10(np.abs(hu[nz]))
        return out
    return hu


# ---------------------------------------------------------------- Haralick

def quantize(gray: np.ndarray, levels: int) -> np.ndarray:
    """Map 8-bit intensities onto ``levels`` equal-width bins."""
    return (np.asarray(gray, dtype=np.int64) * levels) // 256


def glcm(q: np.ndarray, offset: tuple[int, int], levels: int, symmetric: bool = True) -> np.ndarray:
    """Co-occurrence counts of quantized image ``q`` for one (dy, dx) offset."""
    dy, dx = offset
    h, w = q.shape
    if abs(dy) >= h or abs(dx) >= w:
        return np.zeros((levels, levels))
    ref = q[max(0, -dy):h - max(0, dy), max(0, -dx):w - max(0, dx)]
    nbr = q[max(0, dy):h - max(0, -dy), max(0, dx):w - max(0, -dx)]
    counts = np.bincount((ref * levels + nbr).ravel(), minlength=levels * levels)
    P = counts.reshape(levels, levels).astype(np.float64)
    return P + P.T if symmetric else P


def _plogp(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


def haralick_from_glcm(P: np.ndarray) -> np.ndarray:
    """The 13 Haralick statistics of one co-occurrence matrix."""
    total = P.sum()
    if total <= 0:
        raise DegenerateImage("empty co-occurrence matrix")
    p = P / total
    n = p.shape[0]
    i = np.arange(n, dtype=np.float64)
    I, J = np.meshgrid(i, i, indexing="ij")
    px, py = p.sum(axis=1), p.sum(axis=0)
    mux, muy = px @ i, py @ i
    varx, vary = px @ (i - mux) ** 2, py @ (i - muy) ** 2

    idx = np.arange(n)
    s_idx = (idx[:, None] + idx[None, :]).ravel()
    d_idx = np.abs(idx[:, None] - idx[None, :]).ravel()
    p_sum = np.bincount(s_idx, weights=p.ravel(), minlength=2 * n - 1)
    p_diff = np.bincount(d_idx, weights=p.ravel(), minlength=n)
    k_sum = np.arange(2 * n - 1, dtype=np.float64)
    k_diff = np.arange(n, dtype=np.float64)

    asm = float((p ** 2).sum())
    contrast = float(p_diff @ k_diff ** 2)
    sxsy = np.sqrt(varx * vary)
    correlation = float(((I * J * p).sum() - mux * muy) / sxsy) if sxsy > 1e-15 else 1.0
    sum_sq_var = float(((I - mux) ** 2 * p).sum())
    idm = float((p / (1.0 + (I - J) ** 2)).sum())
    sum_avg = float(p_sum @ k_sum)
    sum_var = float(p_sum @ (k_sum - sum_avg) ** 2)
    sum_ent = _plogp(p_sum)
    ent = _plogp(p)
    diff_mean = p_diff @ k_diff
    diff_var = float(p_diff @ (k_diff - diff_mean) ** 2)
    diff_ent = _plogp(p_diff)

    hx, hy = _plogp(px), _plogp(py)
    pxpy = np.outer(px, py)
    nz = pxpy > 0
    hxy1 = float(-(p[nz] * np.log2(pxpy[nz])).sum())
    hxy2 = _plogp(pxpy)
    hmax = max(hx, hy)
    imc1 = (ent - hxy1) / hmax if hmax > 0 else 0.0
    imc2 = float(np.sqrt(1.0 - np.exp(-2.0 * max(hxy2 - ent, 0.0))))

    return np.array([asm, contrast, correlation, sum_sq_var, idm, sum_avg, sum_var,
                     sum_ent, ent, diff_var, diff_ent, imc1, imc2])


def haralick_features(gray: np.ndarray, levels: int = 32) -> np.ndarray:
    """Direction-averaged Haralick features at distance 1.

    Directions without any valid pixel pair (e.g. vertical on a one-row
    image) are left out of the average.
    """
    q = quantize(gray, levels)
    feats = [haralick_from_glcm(P) for P in (glcm(q, off, levels) for off in GLCM_OFFSETS) if P.sum() > 0]
    if not feats:
        raise DegenerateImage(f"no pixel pairs in a {q.shape[1]}x{q.shape[0]} image")
    return np.mean(feats, axis=0)


# ---------------------------------------------------------------- color

def hsv_bins(img: np.ndarray, bins: int) -> np.ndarray:
    """Per-pixel HSV bin indices, shape (n_pixels, 3)."""
    if img.ndim != 3 or img.shape[2] != 3:
        raise NotColor(f"color histogram needs a 3-channel image, got shape {img.shape}")
    hsv = np.asarray(Image.fromarray(np.ascontiguousarray(img, dtype=np.uint8), "RGB").convert("HSV"))
    return (hsv.reshape(-1, 3).astype(np.int64) * bins) // 256


def color_histogram(img: np.ndarray, bins_per_channel: int = 8, mode: str = "joint") -> np.ndarray:
    b = hsv_bins(img, bins_per_channel)
    if mode == "joint":
        flat = (b[:, 0] * bins_per_channel + b[:, 1]) * bins_per_channel + b[:, 2]
        hist = np.bincount(flat, minlength=bins_per_channel ** 3).astype(np.float64)
    elif mode == "per-channel":
        hist = np.concatenate([np.bincount(b[:, c], minlength=bins_per_channel) for c in range(3)]).astype(np.float64)
    else:
        raise FeatureError(f"unknown histogram mode {mode!r}")
    return hist / hist.sum()


# ---------------------------------------------------------------- assembly

def image_feature_vector(img: np.ndarray, config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    gray = to_grayscale(img)
    vec = np.concatenate([
        hu_moments(gray, config.hu_log),
        haralick_features(gray, config.glcm_levels),
        color_histogram(img, config.hist_bins, config.hist_mode),
    ])
    if not np.all(np.isfinite(vec)):
        raise FeatureError("non-finite descriptor value")
    return vec


def extract_feature_vector(sample, config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    img = crop_image(load_image(sample.image_ref), sample.crop)
    return image_feature_vector(img, config)


def extract_features(samples: Sequence, config: FeatureConfig = FeatureConfig(), threads: int = 1) -> np.ndarray:
    if not samples:
        return np.zeros((0, config.dim))
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            rows = list(pool.map(lambda s: extract_feature_vector(s, config), samples))
    else:
        rows = [extract_feature_vector(s, config) for s in samples]
    return np.vstack(rows)


# ---------------------------------------------------------------- persistence

@dataclass
class FeatureTable:
    sample_ids: list[str]
    labels: list[str]
    video_ids: list[str]
    X: np.ndarray
    config: Optional[dict] = None


def write_feature_csv(path, samples: Sequence, X: np.ndarray, config: FeatureConfig, provenance=None) -> Path:
    """Write the feature CSV and its ``.json`` sidecar; returns the sidecar path."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample_id", "label", "video_id"] + [f"f{i}" for i in range(X.shape[1])])
        for s, row in zip(samples, X):
            writer.writerow([s.sample_id, s.label, s.video_id] + [repr(float(v)) for v in row])
    sidecar = path.with_suffix(".json")
    meta = {
        "descriptor": asdict(config),
        "dim": config.dim,
        "blocks": {"hu": HU_DIM, "haralick": HARALICK_DIM, "histogram": config.hist_dim},
        "glcm": {"distance": 1, "directions_deg": [0, 45, 90, 135], "aggregation": "mean",
                 "symmetric": True, "log_base": 2},
        "histogram_space": "HSV",
        "feature_names": config.names(),
        "n_samples": int(X.shape[0]),
        "provenance": provenance or {},
    }
    sidecar.write_text(json.dumps(meta, indent=1) + "\n", encoding="utf-8")
    return sidecar


def read_feature_csv(path) -> FeatureTable:
    path = Path(path)
    ids, labels, vids, rows = [], [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:3] != ["sample_id", "label", "video_id"]:
            raise FeatureError(f"{path}: unexpected header {header[:3]}")
        for rec in reader:
            ids.append(rec[0])
            labels.append(rec[1])
            vids.append(rec[2])
            rows.append([float(v) for v in rec[3:]])
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(header) - 3)
    sidecar = path.with_suffix(".json")
    config = json.loads(sidecar.read_text(encoding="utf-8")) if sidecar.exists() else None
    return FeatureTable(ids, labels, vids, X, config)
