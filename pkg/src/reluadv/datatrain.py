"""Datasets (MNIST IDX files and a synthetic generator) and a small SGD trainer."""

from __future__ import annotations

import gzip
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import (
    ConsistencyError,
    DataMissingError,
    DegenerateExampleError,
    FormatError,
    InvalidInputError,
    InvalidLabelError,
    LengthError,
    SamplingError,
    TrainingDivergenceError,
)
from .linalg import RngState, as_generator, normalized_gaussian_matrix
from .relunet import NetworkWeights

logger = logging.getLogger(__name__)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass(frozen=True)
class Dataset:
    """``n x d`` examples with one label each.

    Labels are +/-1 after :func:`parity_labels`; :func:`load_idx` returns the
    raw digits 0-9.
    """

    examples: np.ndarray
    labels: np.ndarray
    provenance: str = "unknown"
    image_shape: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        X = np.asarray(self.examples, dtype=np.float64)
        y = np.asarray(self.labels)
        if X.ndim != 2 or X.shape[0] < 1:
            raise InvalidInputError(f"examples must be a non-empty n x d array, got {X.shape}")
        if y.shape != (X.shape[0],):
            raise InvalidInputError(f"need {X.shape[0]} labels, got shape {y.shape}")
        if not np.all(np.isfinite(X)):
            raise InvalidInputError("examples contain non-finite values")
        object.__setattr__(self, "examples", X)
        object.__setattr__(self, "labels", y)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.provenance == other.provenance
            and np.array_equal(self.examples, other.examples)
            and np.array_equal(self.labels, other.labels)
        )

    __hash__ = None

    @property
    def n(self) -> int:
        return self.examples.shape[0]

    @property
    def d(self) -> int:
        return self.examples.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.examples[idx], self.labels[idx], self.provenance, self.image_shape)


# --- IDX ------------------------------------------------------------------


def _read_bytes(path) -> bytes:
    path = Path(path)
    if not path.exists():
        raise DataMissingError(f"no such file: {path}")
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def _parse_header(buf: bytes, magic: int, ndim: int, path) -> tuple:
    size = 4 * (ndim + 1)
    if len(buf) < size:
        raise LengthError(f"{path}: truncated header ({len(buf)} bytes)")
    got = struct.unpack(">I", buf[:4])[0]
    if got != magic:
        raise FormatError(f"{path}: magic 0x{got:08x}, expected 0x{magic:08x}")
    return struct.unpack(f">{ndim}I", buf[4:size]), size


def load_idx(images_path, labels_path) -> Dataset:
    """Parse an IDX image/label file pair (optionally gzipped)."""
    ibuf = _read_bytes(images_path)
    lbuf = _read_bytes(labels_path)
    (n, rows, cols), ioff = _parse_header(ibuf, IMAGES_MAGIC, 3, images_path)
    (nl,), loff = _parse_header(lbuf, LABELS_MAGIC, 1, labels_path)
    if len(ibuf) - ioff != n * rows * cols:
        raise LengthError(
            f"{images_path}: expected {n * rows * cols} pixel bytes, found {len(ibuf) - ioff}"
        )
    if len(lbuf) - loff != nl:
        raise LengthError(f"{labels_path}: expected {nl} label bytes, found {len(lbuf) - loff}")
    if nl != n:
        raise ConsistencyError(f"{n} images but {nl} labels")
    pixels = np.frombuffer(ibuf, dtype=np.uint8, offset=ioff).reshape(n, rows * cols)
    digits = np.frombuffer(lbuf, dtype=np.uint8, offset=loff).astype(np.int64)
    name = Path(images_path).name
    prov = "mnist-test" if name.startswith("t10k") else "mnist-train" if name.startswith("train") else f"idx:{name}"
    return Dataset(pixels.astype(np.float64), digits, prov, (rows, cols))


def write_idx(ds: Dataset, images_path, labels_path) -> None:
    """Write raw pixel/digit data back to an IDX pair (inverse of :func:`load_idx`)."""
    rows, cols = ds.image_shape or (1, ds.d)
    if rows * cols != ds.d:
        raise InvalidInputError(f"image shape {rows}x{cols} does not match d={ds.d}")
    pix = ds.examples
    if np.any(pix < 0) or np.any(pix > 255) or np.any(pix != np.round(pix)):
        raise InvalidInputError("IDX pixels must be integers in [0, 255]")
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGES_MAGIC, ds.n, rows, cols))
        fh.write(pix.astype(np.uint8).tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", LABELS_MAGIC, ds.n))
        fh.write(np.asarray(ds.labels).astype(np.uint8).tobytes())


def find_mnist(data_dir, split: str = "train") -> tuple[Path, Path]:
    """Locate the MNIST files of ``split`` in ``data_dir``, gzipped or not."""
    if data_dir is None:
        raise DataMissingError("no MNIST directory given")
    base = Path(data_dir)
    found = []
    for stem in MNIST_FILES[split]:
        candidates = [stem, stem.replace("-idx", ".idx")]
        hit = next(
            (base / (c + ext) for c in candidates for ext in ("", ".gz") if (base / (c + ext)).exists()),
            None,
        )
        if hit is None:
            raise DataMissingError(f"{stem} not found in {base}")
        found.append(hit)
    return found[0], found[1]


def load_mnist(data_dir, split: str = "train") -> Dataset:
    return load_idx(*find_mnist(data_dir, split))


# --- dataset cache ----------------------------------------------------------


def save_dataset(ds: Dataset, path) -> None:
    """One JSON header line, then examples and labels as little-endian float64."""
    header = {
        "n": ds.n,
        "d": ds.d,
        "provenance": ds.provenance,
        "image_shape": list(ds.image_shape) if ds.image_shape else None,
        "dtype": "<f8",
        "layout": ["examples", "labels"],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode() + b"\n")
        fh.write(ds.examples.astype("<f8").tobytes())
        fh.write(np.asarray(ds.labels, dtype="<f8").tobytes())


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        payload = fh.read()
    n, d = header["n"], header["d"]
    if len(payload) != 8 * n * (d + 1):
        raise LengthError(f"{path}: payload has {len(payload)} bytes, expected {8 * n * (d + 1)}")
    flat = np.frombuffer(payload, dtype="<f8")
    labels = flat[n * d :]
    labels = labels.astype(np.int64) if np.all(labels == np.round(labels)) else labels.copy()
    shape = tuple(header["image_shape"]) if header.get("image_shape") else None
    return Dataset(flat[: n * d].reshape(n, d).copy(), labels, header["provenance"], shape)


# --- preprocessing ----------------------------------------------------------


def parity_labels(digits) -> np.ndarray:
    """Even digits map to +1, odd digits to -1."""
    digits = np.asarray(digits)
    if digits.size and (np.any(digits < 0) or np.any(digits > 9) or np.any(digits != np.round(digits))):
        bad = digits[(digits < 0) | (digits > 9) | (digits != np.round(digits))][0]
        raise InvalidLabelError(f"digit out of range: {bad}")
    return np.where(digits.astype(np.int64) % 2 == 0, 1, -1)


def normalize_examples(ds: Dataset, target_norm: float) -> Dataset:
    """Rescale every example to Euclidean norm ``target_norm``."""
    if not target_norm > 0:
        raise InvalidInputError("target_norm must be positive")
    norms = np.linalg.norm(ds.examples, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise DegenerateExampleError(int(zero[0]))
    X = ds.examples * (target_norm / norms)[:, None]
    return Dataset(X, ds.labels, ds.provenance, ds.image_shape)


def synthetic_dataset(d: int, n: int, margin: float, rng, max_draws_per_point: int = 1000) -> Dataset:
    """Points uniform on the radius-``sqrt(d)`` sphere labelled by a random hyperplane.

    Points closer than ``margin`` to the hyperplane are rejected.
    """
    if d < 1 or n < 1:
        raise InvalidInputError("d and n must be positive")
    gen = as_generator(rng)
    u = gen.standard_normal(d)
    u /= np.linalg.norm(u)
    kept, have, drawn = [], 0, 0
    batch = max(n, 64)
    while have < n:
        if drawn >= max_draws_per_point * n:
            raise SamplingError(
                f"only {have}/{n} points cleared margin {margin} after {drawn} draws"
            )
        Z = gen.standard_normal((batch, d))
        Z *= np.sqrt(d) / np.linalg.norm(Z, axis=1)[:, None]
        drawn += batch
        Z = Z[np.abs(Z @ u) >= margin]
        kept.append(Z)
        have += Z.shape[0]
    X = np.concatenate(kept)[:n]
    y = np.where(X @ u >= 0, 1, -1)
    seed = rng.seed if isinstance(rng, RngState) else "generator"
    return Dataset(X, y, f"synthetic:{seed}")


# --- training ---------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    hidden_dims: Sequence[int] = (100,)
    epochs: int = 10
    learning_rate: float = 0.05
    batch_size: int = 32
    seed: int = 0
    loss: str = "logistic"
    init: str = "normalized-gaussian"


@dataclass
class TrainResult:
    network: NetworkWeights
    train_accuracy: float
    initial_loss: float
    final_loss: float
    loss_curve: list


def _forward_batch(layers, X):
    acts = [X]
    pre = []
    a = X
    for W in layers[:-1]:
        z = a @ W.T
        pre.append(z)
        a = np.maximum(z, 0.0)
        acts.append(a)
    return (a @ layers[-1].T)[:, 0], pre, acts


def mean_logistic_loss(layers, X, y) -> float:
    out = _forward_batch(layers, X)[0]
    return float(np.mean(np.logaddexp(0.0, -y * out)))


def accuracy(layers, X, y) -> float:
    out = _forward_batch(layers, X)[0]
    return float(np.mean(np.where(out >= 0, 1, -1) == y))


def train_sgd(cfg: TrainConfig, ds: Dataset) -> TrainResult:
    """Mini-batch SGD on the mean logistic loss ``log(1 + exp(-y h(x)))``.

    Weights start as N(0, 1/fan-in). Each epoch visits the examples in the
    order of ``permutation(n)`` drawn from the seeded generator; the last
    batch may be short.
    """
    X = ds.examples
    y = np.asarray(ds.labels, dtype=np.float64)
    if not np.all(np.abs(y) == 1):
        raise InvalidLabelError("training labels must be +/-1")
    if cfg.batch_size < 1 or cfg.batch_size > ds.n:
        raise InvalidInputError(f"batch_size must lie in [1, {ds.n}]")
    if cfg.loss != "logistic" or cfg.init != "normalized-gaussian":
        raise InvalidInputError("only logistic loss with normalized Gaussian init is supported")
    dims = [ds.d, *[int(h) for h in cfg.hidden_dims], 1]
    gen = RngState(cfg.seed).generator()
    layers = [np.array(normalized_gaussian_matrix(dims[j + 1], dims[j], gen)) for j in range(len(dims) - 1)]
    initial = mean_logistic_loss(layers, X, y)
    curve = []
    lr = cfg.learning_rate
    for epoch in range(cfg.epochs):
        order = gen.permutation(ds.n)
        for start in range(0, ds.n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb, yb = X[idx], y[idx]
            out, pre, acts = _forward_batch(layers, xb)
            # d/dout of log(1 + exp(-y out)) = -y * sigmoid(-y out)
            delta = (-yb * _sigmoid(-yb * out) / len(idx))[:, None]
            for i in range(len(layers) - 1, -1, -1):
                grad = delta.T @ acts[i]
                if i > 0:
                    delta = (delta @ layers[i]) * (pre[i - 1] > 0)
                layers[i] -= lr * grad
        loss = mean_logistic_loss(layers, X, y)
        if not np.isfinite(loss) or not all(np.all(np.isfinite(W)) for W in layers):
            raise TrainingDivergenceError(f"loss became non-finite in epoch {epoch}")
        curve.append(loss)
        logger.debug("epoch %d loss %.6f", epoch, loss)
    acc = accuracy(layers, X, y)
    return TrainResult(NetworkWeights(layers), acc, initial, curve[-1] if curve else initial, curve)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))
