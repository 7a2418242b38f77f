"""Digit-image ingestion, synthesis and balanced subsampling.

Every dataset is normalised to 16x16 grayscale images flattened row-major
to 256 intensities in [0, 1] with integer labels 0..9.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .exceptions import (
    CountMismatch,
    DataError,
    InsufficientClassCount,
    MagicMismatch,
    MalformedLine,
    RangeError,
    TruncatedFile,
    UnsupportedAngle,
)

SIDE = 16
N_PIXELS = SIDE * SIDE
IDX_IMAGES_MAGIC = 2051
IDX_LABELS_MAGIC = 2049
USPS_TOLERANCE = 1e-6

# braille cells for digits use dots 1, 2, 4, 5 only (letters a..j)
BRAILLE_DOTS = {
    1: (1,),
    2: (1, 2),
    3: (1, 4),
    4: (1, 4, 5),
    5: (1, 5),
    6: (1, 2, 4),
    7: (1, 2, 4, 5),
    8: (1, 2, 5),
    9: (2, 4),
    0: (2, 4, 5),
}
# dot number -> (quadrant row, quadrant column)
_DOT_QUADRANT = {1: (0, 0), 2: (1, 0), 4: (0, 1), 5: (1, 1)}
BRAILLE_RADIUS = 3.0


class ImageSample(NamedTuple):
    pixels: np.ndarray
    label: int


@dataclass(frozen=True)
class SplitSpec:
    n_train_per_class: int
    n_eval_per_class: int
    seed: int = 0

    def __post_init__(self):
        if self.n_train_per_class < 1 or self.n_eval_per_class < 1:
            raise ValueError("split counts must be >= 1")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Labelled 16x16 digit images of one domain.

    Parameters
    ----------
    X : ndarray of shape (n_samples, 256)
        Row-major pixel intensities in [0, 1].
    y : ndarray of shape (n_samples,)
        Integer labels in 0..9.
    domain_tag : str
        Free-form name of the domain.
    manifest : dict
        Provenance record (file paths, transform chain, seed).
    """

    X: np.ndarray
    y: np.ndarray
    domain_tag: str = ""
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        y = np.array(self.y).astype(np.int64)
        if X.ndim != 2 or X.shape[1] != N_PIXELS:
            raise DataError(f"expected (n, {N_PIXELS}) pixels, got {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise CountMismatch(f"{X.shape[0]} images vs {y.shape[0]} labels")
        if X.size and (not np.all(np.isfinite(X)) or X.min() < 0 or X.max() > 1):
            raise RangeError("pixel intensities must lie in [0, 1]")
        if y.size and (y.min() < 0 or y.max() > 9):
            raise DataError("labels must lie in 0..9")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "manifest", dict(self.manifest))

    def __len__(self):
        return self.X.shape[0]

    def __iter__(self):
        for pixels, label in zip(self.X, self.y):
            yield ImageSample(pixels, int(label))

    @property
    def images(self):
        return self.X.reshape(-1, SIDE, SIDE)

    def subset(self, indices, **manifest):
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.X[indices], self.y[indices], self.domain_tag,
                       {**self.manifest, **manifest})


# --------------------------------------------------------------------------
# resampling


def _bilinear_weights(n_in, n_out):
    """Row-stochastic (n_out, n_in) matrix of half-pixel bilinear weights."""
    W = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for i in range(n_out):
        src = min(max((i + 0.5) * scale - 0.5, 0.0), n_in - 1.0)
        lo = int(np.floor(src))
        hi = min(lo + 1, n_in - 1)
        frac = src - lo
        W[i, lo] += 1.0 - frac
        W[i, hi] += frac
    return W


def resize_16(pixels):
    """Bilinearly resample an HxW intensity grid to a flat 256-vector.

    Uses half-pixel centres with edge clamping, so a 16x16 input is returned
    unchanged and constant images stay constant.
    """
    grid = np.asarray(pixels, dtype=np.float64)
    if grid.ndim != 2 or min(grid.shape) < 1:
        raise ValueError("expected a non-empty 2-D grid")
    rows = _bilinear_weights(grid.shape[0], SIDE)
    cols = _bilinear_weights(grid.shape[1], SIDE)
    out = rows @ grid @ cols.T
    return np.clip(out, 0.0, 1.0).ravel()


def resize_batch(images):
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 3:
        raise ValueError("expected (n, H, W) images")
    n, h, w = images.shape
    if (h, w) == (SIDE, SIDE):
        return images.reshape(n, N_PIXELS).copy()
    rows = _bilinear_weights(h, SIDE)
    cols = _bilinear_weights(w, SIDE)
    out = np.einsum("ih,nhw,jw->nij", rows, images, cols)
    return np.clip(out, 0.0, 1.0).reshape(n, N_PIXELS)


# --------------------------------------------------------------------------
# file formats


def _read_bytes(path):
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _parse_idx(raw, expected_magic, path):
    if len(raw) < 8:
        raise TruncatedFile(f"{path}: header too short")
    (magic,) = struct.unpack(">i", raw[:4])
    if magic != expected_magic:
        raise MagicMismatch(f"{path}: magic {magic}, expected {expected_magic}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise TruncatedFile(f"{path}: header too short")
    dims = struct.unpack(f">{ndim}i", raw[4:header])
    size = int(np.prod(dims))
    if len(raw) - header < size:
        raise TruncatedFile(f"{path}: expected {size} bytes of data, "
                            f"found {len(raw) - header}")
    data = np.frombuffer(raw, dtype=np.uint8, count=size, offset=header)
    return data.reshape(dims)


def load_idx(image_path, label_path, domain_tag="idx"):
    """Read an IDX image/label file pair (optionally gzipped)."""
    images = _parse_idx(_read_bytes(image_path), IDX_IMAGES_MAGIC, image_path)
    labels = _parse_idx(_read_bytes(label_path), IDX_LABELS_MAGIC, label_path)
    if images.ndim != 3:
        raise DataError(f"{image_path}: expected 3 dimensions, got {images.ndim}")
    if images.shape[0] != labels.shape[0]:
        raise CountMismatch(
            f"{images.shape[0]} images vs {labels.shape[0]} labels"
        )
    X = resize_batch(images / 255.0)
    return Dataset(X, labels.astype(np.int64), domain_tag, {
        "format": "idx",
        "images": str(image_path),
        "labels": str(label_path),
        "original_shape": "x".join(map(str, images.shape[1:])),
    })


def write_idx(images, labels, image_path, label_path):
    """Write uint8 images (n, H, W) and labels (n,) as an IDX pair."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, h, w = images.shape
    with open(image_path, "wb") as f:
        f.write(struct.pack(">iiii", IDX_IMAGES_MAGIC, n, h, w))
        f.write(images.tobytes())
    with open(label_path, "wb") as f:
        f.write(struct.pack(">ii", IDX_LABELS_MAGIC, labels.shape[0]))
        f.write(labels.tobytes())


def load_usps_text(path, domain_tag="usps"):
    """Read the USPS text format: label then 256 values in [-1, 1] per line."""
    X, y = [], []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != N_PIXELS + 1:
                raise MalformedLine(
                    lineno, f"expected {N_PIXELS + 1} fields, got {len(fields)}"
                )
            try:
                values = np.array(fields, dtype=np.float64)
            except ValueError as exc:
                raise MalformedLine(lineno, str(exc)) from None
            label = values[0]
            if label != int(label) or not 0 <= label <= 9:
                raise MalformedLine(lineno, f"bad label {fields[0]!r}")
            pixels = values[1:]
            if np.any(np.abs(pixels) > 1 + USPS_TOLERANCE):
                raise RangeError(f"line {lineno}: value outside [-1, 1]")
            X.append(np.clip((pixels + 1) / 2, 0.0, 1.0))
            y.append(int(label))
    if not X:
        raise DataError(f"{path}: no samples")
    return Dataset(np.array(X), np.array(y), domain_tag,
                   {"format": "usps_text", "path": str(path)})


def write_manifest(path, manifest):
    with open(path, "w") as f:
        for key, value in manifest.items():
            f.write(f"{key}={value}\n")


def read_manifest(path):
    manifest = {}
    with open(path) as f:
        for line in f:
            line = line.rstrip("\n")
            if line:
                key, _, value = line.partition("=")
                manifest[key] = value
    return manifest


def save_dataset(ds, path):
    """Save as ``.npz`` with a ``.manifest`` key=value file alongside."""
    path = Path(path)
    np.savez(path, X=ds.X, y=ds.y)
    write_manifest(path.with_suffix(".manifest"),
                   {"domain_tag": ds.domain_tag, **ds.manifest})


def load_dataset(path):
    path = Path(path)
    with np.load(path) as data:
        X, y = data["X"], data["y"]
    manifest = {}
    mpath = path.with_suffix(".manifest")
    if mpath.exists():
        manifest = read_manifest(mpath)
    tag = manifest.pop("domain_tag", path.stem)
    return Dataset(X, y, tag, manifest)


# --------------------------------------------------------------------------
# bundled corpora


def load_mnist_subset():
    """The 5000-image balanced MNIST subset shipped with ``mlxtend``."""
    try:
        from mlxtend.data import mnist_data
    except ImportError as exc:
        raise DataError("the bundled MNIST subset requires mlxtend") from exc
    X, y = mnist_data()
    X = resize_batch(X.reshape(-1, 28, 28) / 255.0)
    return Dataset(X, y, "mnist", {"format": "mlxtend_mnist_5k",
                                   "original_shape": "28x28"})


def load_optical_digits():
    """UCI optical handwritten digits (8x8) bundled with scikit-learn."""
    from sklearn.datasets import load_digits

    digits = load_digits()
    X = resize_batch(digits.images / 16.0)
    return Dataset(X, digits.target, "digits", {"format": "sklearn_digits",
                                                "original_shape": "8x8"})


# --------------------------------------------------------------------------
# transforms and synthesis


def rotate_dataset(ds, angle_degrees=90):
    """Rotate every image clockwise by a right angle (exact permutation)."""
    if angle_degrees not in (90, 180, 270):
        raise UnsupportedAngle(f"only 90, 180 and 270 degrees are supported, "
                               f"got {angle_degrees}")
    k = -(angle_degrees // 90)
    rotated = np.rot90(ds.images, k=k, axes=(1, 2)).reshape(len(ds), N_PIXELS)
    chain = ds.manifest.get("transforms", "")
    step = f"rot{angle_degrees}"
    return Dataset(rotated, ds.y, ds.domain_tag, {
        **ds.manifest,
        "transforms": f"{chain},{step}" if chain else step,
    })


def _braille_template(digit):
    rr, cc = np.mgrid[0:SIDE, 0:SIDE]
    img = np.zeros((SIDE, SIDE))
    half = SIDE // 2
    for dot in BRAILLE_DOTS[digit]:
        qr, qc = _DOT_QUADRANT[dot]
        cy = qr * half + (half - 1) / 2
        cx = qc * half + (half - 1) / 2
        img[(rr - cy) ** 2 + (cc - cx) ** 2 <= BRAILLE_RADIUS ** 2] = 1.0
    return img.ravel()


def synth_braille(n_per_class, noise_std=0.0, seed=0):
    """Render digits as 2x2 braille dot cells with Gaussian pixel noise."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(10), n_per_class)
    X = np.stack([_braille_template(d) for d in labels])
    if noise_std > 0:
        X = np.clip(X + rng.normal(0.0, noise_std, X.shape), 0.0, 1.0)
    return Dataset(X, labels, "braille", {
        "format": "synthetic_braille",
        "n_per_class": n_per_class,
        "noise_std": noise_std,
        "seed": seed,
    })


def subsample_balanced(ds, spec):
    """Draw disjoint class-balanced train and eval subsets.

    Returns
    -------
    train, eval : Dataset
        ``spec.n_train_per_class`` and ``spec.n_eval_per_class`` samples per
        class, each in ascending original-index order.
    """
    rng = np.random.default_rng(spec.seed)
    need = spec.n_train_per_class + spec.n_eval_per_class
    train_idx, eval_idx = [], []
    for label in range(10):
        members = np.flatnonzero(ds.y == label)
        if members.size < need:
            raise InsufficientClassCount(label, members.size, need)
        chosen = rng.permutation(members)
        train_idx.append(chosen[:spec.n_train_per_class])
        eval_idx.append(chosen[spec.n_train_per_class:need])
    train_idx = np.sort(np.concatenate(train_idx))
    eval_idx = np.sort(np.concatenate(eval_idx))
    info = {"split_seed": spec.seed,
            "n_train_per_class": spec.n_train_per_class,
            "n_eval_per_class": spec.n_eval_per_class}
    return (ds.subset(train_idx, split="train", **info),
            ds.subset(eval_idx, split="eval", **info))
