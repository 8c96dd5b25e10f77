"""Small-CNN training protocol: weighted cross-entropy, random resized crops,
step learning-rate decay, frozen-backbone vs fine-tune, best-on-val checkpoint.

The class weight follows ``w_y = n_classes * n_y / n`` (frequency mode), which
up-weights the frequent classes; ``inverse`` mode gives ``n / (n_classes * n_y)``
for comparison.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import math
import zipfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
from PIL import Image
from torch import nn

from .errors import EmptyTrainingSet, LabelOutOfRange, NeuralError, NonFiniteLoss
from .features import crop_image, load_image

MODES = ("feature_extractor", "fine_tune")
LOSSES = ("ce", "weighted_ce")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    base_lr: float = 1e-3
    lr_decay: float = 0.1
    lr_step: int = 20
    batch_size: int = 64
    loss_reduction: str = "sum"
    mode: str = "fine_tune"
    loss: str = "ce"
    weight_mode: str = "frequency"
    momentum: float = 0.0
    seed: int = 0
    input_size: int = 224
    augment: bool = True
    widths: tuple = (16, 32, 64, 128)

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.base_lr <= 0:
            raise NeuralError("epochs and batch_size must be >= 1 and base_lr > 0")
        if self.mode not in MODES or self.loss not in LOSSES:
            raise NeuralError(f"mode must be one of {MODES}, loss one of {LOSSES}")
        if self.weight_mode not in ("frequency", "inverse"):
            raise NeuralError(f"unknown weight mode {self.weight_mode!r}")
        if self.loss_reduction not in ("sum", "mean"):
            raise NeuralError(f"unknown reduction {self.loss_reduction!r}")

    def lr_at(self, epoch: int) -> float:
        return self.base_lr * self.lr_decay ** (epoch // self.lr_step)


# ---------------------------------------------------------------- loss

@dataclass
class ClassWeights:
    w: np.ndarray
    N: int
    N_y: np.ndarray
    N_classes: int


def class_weights(train_labels: Sequence[int], n_classes: Optional[int] = None, mode: str = "frequency") -> ClassWeights:
    """Per-class loss weights from training-set label counts.

    Labels are class indices. Classes absent from the training set get
    weight 0 (they never appear as a target anyway).
    """
    labels = np.asarray(train_labels, dtype=np.int64)
    if labels.size == 0:
        raise EmptyTrainingSet("class weights need at least one training label")
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    if labels.min() < 0 or labels.max() >= n_classes:
        raise LabelOutOfRange(f"labels must lie in [0, {n_classes})")
    counts = np.bincount(labels, minlength=n_classes)
    N = int(counts.sum())
    w = np.zeros(n_classes)
    present = counts > 0
    if mode == "frequency":
        w[present] = (n_classes * counts[present]) / N
    elif mode == "inverse":
        w[present] = N / (n_classes * counts[present])
    else:
        raise NeuralError(f"unknown weight mode {mode!r}")
    return ClassWeights(w, N, counts, n_classes)


def weighted_ce_loss(logits, labels, w=None, reduction: str = "sum"):
    """Weighted softmax cross-entropy and its gradient w.r.t. the logits.

    ``loss_n = -w[y_n] * log softmax(logits_n)[y_n]``; ``reduction`` is
    ``"sum"`` or ``"none"``. Without ``w`` this is the plain cross-entropy.
    """
    x = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    n, C = x.shape
    if y.shape != (n,) or (n and (y.min() < 0 or y.max() >= C)):
        raise LabelOutOfRange(f"labels must be {n} integers in [0, {C})")
    shifted = x - x.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    logp = shifted - lse[:, None]
    rows = np.arange(n)
    if w is None:
        per = -logp[rows, y]
        scale = np.ones(n)
    else:
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (C,):
            raise NeuralError(f"weight vector must have length {C}")
        scale = w[y]
        per = -(scale * logp[rows, y])
    grad = np.exp(logp)
    grad[rows, y] -= 1.0
    grad *= scale[:, None]
    if reduction == "none":
        return per, grad
    if reduction != "sum":
        raise NeuralError(f"unknown reduction {reduction!r}")
    return per.sum(), grad


def weighted_ce_torch(logits: torch.Tensor, labels: torch.Tensor, w: Optional[torch.Tensor] = None,
                      reduction: str = "sum") -> torch.Tensor:
    logp = torch.log_softmax(logits, dim=1).gather(1, labels[:, None]).squeeze(1)
    per = -logp if w is None else -(w[labels] * logp)
    return per.sum() if reduction == "sum" else per.mean()


# ---------------------------------------------------------------- augmentation

def sample_crop_box(height: int, width: int, rng: np.random.Generator, scale=(0.08, 1.0),
                    ratio=(3 / 4, 4 / 3), attempts: int = 10) -> tuple[int, int, int, int]:
    """(top, left, h, w) of a random crop with bounded area fraction and aspect.

    Each draw picks an area fraction uniformly in ``scale`` and an aspect
    ratio log-uniformly in ``ratio``; the rounded integer box must itself
    satisfy both bounds. After ``attempts`` failures: the largest centred box
    whose aspect is clamped into ``ratio``.
    """
    area = height * width
    log_r = (math.log(ratio[0]), math.log(ratio[1]))
    for _ in range(attempts):
        target = area * rng.uniform(scale[0], scale[1])
        aspect = math.exp(rng.uniform(*log_r))
        w = int(round(math.sqrt(target * aspect)))
        h = int(round(math.sqrt(target / aspect)))
        if 0 < w <= width and 0 < h <= height:
            frac, r = w * h / area, w / h
            if scale[0] <= frac <= scale[1] and ratio[0] <= r <= ratio[1]:
                top = int(rng.integers(0, height - h + 1))
                left = int(rng.integers(0, width - w + 1))
                return top, left, h, w
    in_ratio = width / height
    if in_ratio < ratio[0]:
        w, h = width, max(1, min(height, int(round(width / ratio[0]))))
    elif in_ratio > ratio[1]:
        h, w = height, max(1, min(width, int(round(height * ratio[1]))))
    else:
        w, h = width, height
    return (height - h) // 2, (width - w) // 2, h, w


def resize_image(img: np.ndarray, size: int) -> np.ndarray:
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    out = Image.fromarray(np.ascontiguousarray(img, dtype=np.uint8), "RGB").resize((size, size), Image.BILINEAR)
    return np.asarray(out)


def augment_image(img: np.ndarray, rng: np.random.Generator, size: int = 224,
                  return_params: bool = False):
    """Random resized crop + horizontal flip (p = 0.5), output ``size`` x ``size``."""
    top, left, h, w = sample_crop_box(img.shape[0], img.shape[1], rng)
    flip = bool(rng.random() < 0.5)
    out = resize_image(img[top:top + h, left:left + w], size)
    if flip:
        out = out[:, ::-1]
    out = np.ascontiguousarray(out)
    if return_params:
        return out, {"box": (top, left, h, w), "flip": flip}
    return out


def augment_rng(seed: int, epoch: int, index: int) -> np.random.Generator:
    """Augmentation stream keyed by (seed, epoch, sample index)."""
    return np.random.default_rng([seed, epoch, index])


# ---------------------------------------------------------------- model

class NetModel(nn.Module):
    """Stride-2 conv + group-norm blocks, global average pooling, one linear head.

    Group norm keeps no running statistics, so training and evaluation
    normalize identically and a frozen backbone has no state that changes.
    """

    def __init__(self, n_classes: int, widths=(16, 32, 64, 128), in_channels: int = 3):
        super().__init__()
        layers, c = [], in_channels
        for width in widths:
            layers += [nn.Conv2d(c, width, 3, stride=2, padding=1, bias=False), nn.GroupNorm(min(8, width), width),
                       nn.ReLU(inplace=True)]
            c = width
        self.backbone = nn.Sequential(*layers, nn.AdaptiveAvgPool2d(1), nn.Flatten())
        self.head = nn.Linear(c, n_classes)
        self.n_classes = n_classes
        self.widths = tuple(widths)

    def forward(self, x):
        return self.head(self.backbone(x))

    def set_mode(self, mode: str) -> None:
        if mode not in MODES:
            raise NeuralError(f"unknown mode {mode!r}")
        for p in self.backbone.parameters():
            p.requires_grad_(mode == "fine_tune")
        for p in self.head.parameters():
            p.requires_grad_(True)


def build_net(n_classes: int, widths=(16, 32, 64, 128), seed: int = 0) -> NetModel:
    torch.manual_seed(seed)
    return NetModel(n_classes, widths)


def to_tensor(images: Sequence[np.ndarray]) -> torch.Tensor:
    arr = np.stack(images).astype(np.float32) / 255.0 - 0.5
    return torch.from_numpy(arr.transpose(0, 3, 1, 2).copy())


def load_sample_image(sample) -> np.ndarray:
    img = crop_image(load_image(sample.image_ref), sample.crop)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    return img


# ---------------------------------------------------------------- training

@dataclass
class EpochLog:
    epoch: int
    lr: float
    train_loss: float
    val_acc: float


@dataclass
class TrainResult:
    net: NetModel
    best_epoch: int
    best_val_acc: float
    log: list = field(default_factory=list)
    class_list: list = field(default_factory=list)
    weights: Optional[list] = None


def _accuracy(net: NetModel, batch: torch.Tensor, labels: np.ndarray, chunk: int = 64) -> float:
    preds = predict_tensor(net, batch, chunk)
    return float(np.mean(preds == labels))


def predict_logits(net: NetModel, batch: torch.Tensor, chunk: int = 64) -> np.ndarray:
    net.eval()
    out = []
    with torch.no_grad():
        for start in range(0, len(batch), chunk):
            out.append(net(batch[start:start + chunk]).numpy())
    return np.concatenate(out) if out else np.zeros((0, net.n_classes), dtype=np.float32)


def predict_tensor(net: NetModel, batch: torch.Tensor, chunk: int = 64) -> np.ndarray:
    return np.argmax(predict_logits(net, batch, chunk), axis=1)


def train_network(
    net: NetModel,
    train_images: Sequence[np.ndarray],
    train_labels: Sequence[int],
    val_images: Sequence[np.ndarray],
    val_labels: Sequence[int],
    cfg: TrainConfig,
    class_list: Optional[list] = None,
    progress=None,
) -> TrainResult:
    """Seeded mini-batch SGD; keeps the parameters with the best val accuracy.

    Images are HxWx3 uint8 arrays (already cropped to the ROI when
    applicable); labels are class indices. ``progress`` is an optional
    callable receiving each :class:`EpochLog`.
    """
    if len(train_images) == 0 or len(val_images) == 0:
        raise EmptyTrainingSet("training needs at least one train and one val image")
    y_train = np.asarray(train_labels, dtype=np.int64)
    y_val = np.asarray(val_labels, dtype=np.int64)
    C = net.n_classes
    for ys in (y_train, y_val):
        if ys.min() < 0 or ys.max() >= C:
            raise LabelOutOfRange(f"labels must lie in [0, {C})")

    net.set_mode(cfg.mode)
    weights = None
    if cfg.loss == "weighted_ce":
        weights = torch.tensor(class_weights(y_train, C, cfg.weight_mode).w, dtype=torch.float32)
    params = [p for p in net.parameters() if p.requires_grad]
    opt = torch.optim.SGD(params, lr=cfg.base_lr, momentum=cfg.momentum)

    size = cfg.input_size
    val_batch = to_tensor([resize_image(im, size) for im in val_images])
    plain_train = None if cfg.augment else to_tensor([resize_image(im, size) for im in train_images])
    labels_t = torch.from_numpy(y_train)

    best_state, best_acc, best_epoch = None, -1.0, -1
    log = []
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        for group in opt.param_groups:
            group["lr"] = lr
        net.train()
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(train_images))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            if cfg.augment:
                batch = to_tensor([augment_image(train_images[i], augment_rng(cfg.seed, epoch, int(i)), size)
                                   for i in idx])
            else:
                batch = plain_train[idx]
            loss = weighted_ce_torch(net(batch), labels_t[idx], weights, cfg.loss_reduction)
            if not torch.isfinite(loss):
                raise NonFiniteLoss(f"loss became {loss.item()} at epoch {epoch}, batch starting {start} (lr={lr:g})")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.item())
        val_acc = _accuracy(net, val_batch, y_val)
        entry = EpochLog(epoch, lr, total, val_acc)
        log.append(entry)
        if progress is not None:
            progress(entry)
        if val_acc > best_acc:
            best_acc, best_epoch = val_acc, epoch
            best_state = copy.deepcopy(net.state_dict())

    net.load_state_dict(best_state)
    net.eval()
    return TrainResult(net, best_epoch, best_acc, log, list(class_list or range(C)),
                       weights.tolist() if weights is not None else None)


def evaluate_network(net: NetModel, images: Sequence[np.ndarray], size: int = 224, return_logits: bool = False):
    """Argmax predictions on plainly resized inputs."""
    logits = predict_logits(net, to_tensor([resize_image(im, size) for im in images]))
    preds = np.argmax(logits, axis=1)
    return (preds, logits) if return_logits else preds


# ---------------------------------------------------------------- persistence

def _write_npz(path: Path, arrays: dict) -> None:
    """An ``.npz`` readable by ``np.load`` with fixed zip timestamps (np.savez
    stamps the wall clock, which would break byte-identical reruns)."""
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0)), buf.getvalue())


def save_checkpoint(directory, result: TrainResult, cfg: TrainConfig, provenance: Optional[dict] = None) -> None:
    """``checkpoint.json`` (config, classes, log) + ``weights.npz`` + ``curves.csv``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    state = {k: v.detach().cpu().numpy() for k, v in result.net.state_dict().items()}
    _write_npz(d / "weights.npz", state)
    doc = {
        "config": asdict(cfg),
        "n_classes": result.net.n_classes,
        "widths": list(result.net.widths),
        "class_list": result.class_list,
        "class_weights": result.weights,
        "best_epoch": result.best_epoch,
        "best_val_acc": result.best_val_acc,
        "log": [asdict(e) for e in result.log],
        "parameters": {k: list(v.shape) for k, v in state.items()},
        "provenance": provenance or {},
    }
    (d / "checkpoint.json").write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    with open(d / "curves.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "lr", "train_loss", "val_acc"])
        for e in result.log:
            writer.writerow([e.epoch, repr(e.lr), repr(e.train_loss), repr(e.val_acc)])


def load_checkpoint(directory) -> tuple[NetModel, dict]:
    d = Path(directory)
    doc = json.loads((d / "checkpoint.json").read_text(encoding="utf-8"))
    net = NetModel(doc["n_classes"], tuple(doc["widths"]))
    with np.load(d / "weights.npz") as blob:
        net.load_state_dict({k: torch.from_numpy(blob[k]) for k in blob.files})
    net.eval()
    return net, doc


def train_on_samples(train_samples, val_samples, cfg: TrainConfig, class_list: Optional[list] = None,
                     progress=None) -> TrainResult:
    """Build a fresh network and train it on dataset samples (labels by name)."""
    if class_list is None:
        class_list = sorted({s.label for s in train_samples} | {s.label for s in val_samples})
    index = {c: i for i, c in enumerate(class_list)}
    try:
        y_train = [index[s.label] for s in train_samples]
        y_val = [index[s.label] for s in val_samples]
    except KeyError as exc:
        raise LabelOutOfRange(f"label {exc.args[0]!r} not in class list") from None
    net = build_net(len(class_list), cfg.widths, cfg.seed)
    return train_network(net, [load_sample_image(s) for s in train_samples], y_train,
                         [load_sample_image(s) for s in val_samples], y_val, cfg, class_list, progress)


def evaluate_samples(net: NetModel, samples, class_list: list, size: int = 224) -> list:
    preds = evaluate_network(net, [load_sample_image(s) for s in samples], size)
    return [class_list[i] for i in preds]
