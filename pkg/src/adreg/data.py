"""Datasets: synthetic Gaussian clusters, IDX ingestion, label noise, long-tail resampling."""
from __future__ import annotations

import csv
import gzip
import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import FormatError, InvalidArgumentError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    c: int
    split: str = "train"

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] == 0:
            raise InvalidArgumentError("dataset needs a non-empty (n, d) feature matrix")
        if self.labels.shape != (self.features.shape[0],):
            raise InvalidArgumentError("labels must have one entry per row of features")
        if np.any(self.labels < 0) or np.any(self.labels >= self.c):
            raise InvalidArgumentError(f"labels must lie in [0, {self.c})")
        if not np.all(np.isfinite(self.features)):
            raise InvalidArgumentError("features contain non-finite values")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.c)

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx)
        return replace(self, features=self.features[idx], labels=self.labels[idx])


@dataclass(frozen=True)
class ClusterSpec:
    mean: np.ndarray
    std: float
    n: int

    def __post_init__(self):
        if not self.std > 0:
            raise InvalidArgumentError(f"cluster std must be positive, got {self.std}")
        if self.n < 1:
            raise InvalidArgumentError("cluster needs at least one sample")


def gaussian_clusters(specs: list[ClusterSpec], seed: int) -> LabeledDataset:
    """One isotropic Gaussian blob per class, drawn in class order."""
    if len(specs) < 2:
        raise InvalidArgumentError("need at least two classes")
    d = np.asarray(specs[0].mean).shape[0]
    if any(np.asarray(s.mean).shape != (d,) for s in specs):
        raise InvalidArgumentError("all cluster means must share one dimension")
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for k, s in enumerate(specs):
        xs.append(np.asarray(s.mean, dtype=np.float64) + s.std * rng.standard_normal((s.n, d)))
        ys.append(np.full(s.n, k, dtype=np.int64))
    return LabeledDataset(np.concatenate(xs), np.concatenate(ys), len(specs))


def _centres(n: int, d: int, scale: float) -> np.ndarray:
    """``n`` points at distance ``scale`` from the origin.

    Vertices of a regular simplex when ``d >= n``, otherwise a regular polygon in
    the first two coordinates.
    """
    if d >= n and n > 1:
        v = np.eye(n, d)
        v[:, :n] -= 1.0 / n
        return scale * v / np.linalg.norm(v, axis=1, keepdims=True)
    ang = 2 * np.pi * np.arange(n) / n
    out = np.zeros((n, d))
    out[:, 0] = scale * np.cos(ang)
    if d > 1:
        out[:, 1] = scale * np.sin(ang)
    return out


def separated_specs(c: int, d: int, std: float, n_per_class: int, scale: float = 10.0) -> list[ClusterSpec]:
    """Well-separated classes, one blob per centre."""
    if c < 2 or d < 1:
        raise InvalidArgumentError("need c >= 2 and d >= 1")
    return [ClusterSpec(m, std, n_per_class) for m in _centres(c, d, scale)]


def overlapping_pair_specs(c: int, d: int, gap: float, tight_std: float, loose_std: float,
                           n_per_class: int, scale: float = 4.0) -> list[ClusterSpec]:
    """Cluster layout where classes ``2k`` and ``2k+1`` sit ``gap`` apart.

    Pair centres are spread by :func:`_centres`; within a pair the even class is
    tight and the odd one loose. An odd trailing class sits alone, tight.
    """
    if c < 2 or d < 1:
        raise InvalidArgumentError("need c >= 2 and d >= 1")
    n_groups = (c + 1) // 2
    centres = _centres(n_groups, d, scale)
    specs = []
    for k in range(c):
        centre = centres[k // 2]
        if (k ^ 1) >= c:
            specs.append(ClusterSpec(centre.copy(), tight_std, n_per_class))
            continue
        # offset direction orthogonal to the centre so the pair straddles it
        u = np.zeros(d)
        if d > n_groups:
            u[-1] = 1.0
        elif d > 1:
            u[0], u[1] = -centre[1], centre[0]
        if not np.any(u):
            u[0] = 1.0
        u = u / np.linalg.norm(u)
        sign = -0.5 if k % 2 == 0 else 0.5
        std = tight_std if k % 2 == 0 else loose_std
        specs.append(ClusterSpec(centre + sign * gap * u, std, n_per_class))
    return specs


def overlapping_pairs(c: int = 10, d: int = 2, gap: float = 1.0, tight_std: float = 0.5,
                      loose_std: float = 1.0, n_per_class: int = 100, seed: int = 0,
                      scale: float = 4.0) -> LabeledDataset:
    return gaussian_clusters(overlapping_pair_specs(c, d, gap, tight_std, loose_std, n_per_class, scale), seed)


def split_per_class(ds: LabeledDataset, n_val_per_class: int, seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    """Hold out ``n_val_per_class`` samples of every class as a validation split."""
    rng = np.random.default_rng(seed)
    train_idx, val_idx = [], []
    for k in range(ds.c):
        idx = np.flatnonzero(ds.labels == k)
        idx = idx[rng.permutation(idx.size)]
        if idx.size <= n_val_per_class:
            raise InvalidArgumentError(f"class {k} has too few samples for the validation split")
        val_idx.append(idx[:n_val_per_class])
        train_idx.append(idx[n_val_per_class:])
    train = ds.subset(np.sort(np.concatenate(train_idx)))
    val = replace(ds.subset(np.sort(np.concatenate(val_idx))), split="validation")
    return train, val


def standardize(train: LabeledDataset, *others: LabeledDataset) -> list[LabeledDataset]:
    """Zero-mean unit-variance features using statistics of ``train`` only."""
    mu = train.features.mean(axis=0)
    sd = train.features.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return [replace(ds, features=(ds.features - mu) / sd) for ds in (train, *others)]


# --- IDX ---------------------------------------------------------------------

def _read(path) -> bytes:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _parse_idx(raw: bytes, magic: int, what: str) -> tuple[list[int], bytes]:
    if len(raw) < 4:
        raise FormatError(f"{what} file truncated inside the magic number", len(raw))
    (got,) = struct.unpack_from(">I", raw, 0)
    if got != magic:
        raise FormatError(f"{what} file has magic 0x{got:08x}, expected 0x{magic:08x}", 0)
    ndim = magic & 0xFF
    if len(raw) < 4 + 4 * ndim:
        raise FormatError(f"{what} file truncated inside the dimension header", len(raw))
    dims = list(struct.unpack_from(f">{ndim}I", raw, 4))
    start = 4 + 4 * ndim
    need = math.prod(dims)
    if len(raw) - start < need:
        raise FormatError(f"{what} file truncated: expected {need} data bytes, found {len(raw) - start}", len(raw))
    return dims, raw[start : start + need]


def load_idx(images_path, labels_path) -> LabeledDataset:
    """Read an IDX image/label pair; pixels are scaled to ``[0, 1]`` and flattened."""
    dims, pix = _parse_idx(_read(images_path), IDX_IMAGES_MAGIC, "images")
    (n_labels,), lab = _parse_idx(_read(labels_path), IDX_LABELS_MAGIC, "labels")
    n, rows, cols = dims
    if n != n_labels:
        raise FormatError(f"{n} images but {n_labels} labels", 4)
    x = np.frombuffer(pix, dtype=np.uint8).reshape(n, rows * cols).astype(np.float64) / 255.0
    y = np.frombuffer(lab, dtype=np.uint8).astype(np.int64)
    c = max(int(y.max()) + 1, 2) if n else 2
    return LabeledDataset(x, y, c)


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    """Write ``uint8`` images of shape ``(n, rows, cols)`` and labels as an IDX pair."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    Path(images_path).write_bytes(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols) + images.tobytes())
    Path(labels_path).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, labels.size) + labels.tobytes())


# --- transforms ----------------------------------------------------------------

def inject_label_noise(ds: LabeledDataset, rate: float, seed: int) -> tuple[LabeledDataset, np.ndarray]:
    """Flip ``floor(rate * n)`` labels, each to a uniformly drawn different class.

    Returns the noisy dataset and the sorted corrupted indices.
    """
    if not 0.0 <= rate <= 1.0:
        raise InvalidArgumentError(f"noise rate must lie in [0, 1], got {rate}")
    if ds.c < 2:
        raise InvalidArgumentError("label noise needs at least two classes")
    k = math.floor(rate * ds.n + 1e-9)
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(ds.n, size=k, replace=False))
    labels = ds.labels.copy()
    labels[idx] = (labels[idx] + rng.integers(1, ds.c, size=k)) % ds.c
    return replace(ds, labels=labels), idx


def longtail_resample(ds: LabeledDataset, imbalance: float, seed: int) -> LabeledDataset:
    """Keep ``ceil(n_k * imbalance ** (-k / (c - 1)))`` samples of class ``k``."""
    if imbalance < 1:
        raise InvalidArgumentError(f"imbalance must be >= 1, got {imbalance}")
    rng = np.random.default_rng(seed)
    keep = []
    for k in range(ds.c):
        idx = np.flatnonzero(ds.labels == k)
        m = math.ceil(idx.size * imbalance ** (-k / (ds.c - 1)) - 1e-9)
        if m < 1:
            raise InvalidArgumentError(f"class {k} would be emptied by imbalance {imbalance}")
        keep.append(idx[np.sort(rng.permutation(idx.size)[:m])])
    return ds.subset(np.sort(np.concatenate(keep)))


def batches(ds: LabeledDataset, batch_size: int, seed: int, epoch: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Shuffled minibatches; the order depends only on ``(seed, epoch)``."""
    if batch_size < 1:
        raise InvalidArgumentError("batch size must be >= 1")
    order = np.random.default_rng([seed, epoch]).permutation(ds.n)
    for start in range(0, ds.n, batch_size):
        idx = order[start : start + batch_size]
        yield ds.features[idx], ds.labels[idx]


def export_csv(ds: LabeledDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{i}" for i in range(ds.d)] + ["label"])
        for row, y in zip(ds.features, ds.labels):
            w.writerow([repr(float(v)) for v in row] + [int(y)])
