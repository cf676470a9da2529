"""Data generation and ingestion.

Covers the synthetic hidden-manifold generator (a ±1 teacher labels
Gaussian latent patterns; the student sees a sign-nonlinear random
projection of them), IDX image/label files (optionally gzipped),
standardization, parity labels, and the label-randomization / pixel-zeroing
transforms used to build poisoned datasets.
"""

import gzip
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (ConfigError, IdxBadMagicError, IdxDimensionError,
                     IdxTruncatedError, ShapeError, ZeroVarianceError)
from .nets import Dataset

IDX_MAGIC_IMAGES = 0x00000803
IDX_MAGIC_LABELS = 0x00000801
_IDX_MAX_ELEMENTS = 1 << 31


@dataclass(frozen=True)
class HmmConfig:
    """Hidden-manifold sizes: teacher dimension D, student dimension N,
    train/test pattern counts."""

    D: int
    N: int
    P: int
    P_test: int
    seed: int

    def __post_init__(self):
        for name in ("D", "N", "P", "P_test"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")

    @property
    def alpha_teacher(self) -> float:
        return self.P / self.D


def hmm_generate(cfg: HmmConfig):
    """Generate (train, test) datasets.

    Teacher weights are ±1 uniform over dimension D; latent patterns are
    i.i.d. standard Gaussians labelled by the teacher's sign; student
    inputs are the elementwise sign of a fixed Gaussian random projection
    into dimension N, shared between train and test. Deterministic in the
    seed.
    """
    ss = np.random.SeedSequence(cfg.seed)
    r_teacher, r_proj, r_train, r_test = [np.random.default_rng(s)
                                          for s in ss.spawn(4)]
    teacher = (r_teacher.integers(0, 2, size=cfg.D) * 2 - 1).astype(np.float64)
    proj = r_proj.standard_normal((cfg.N, cfg.D))

    def draw(rng, count):
        latent = rng.standard_normal((count, cfg.D))
        labels = np.where(latent @ teacher >= 0, 1, -1).astype(np.int64)
        inputs = np.where(latent @ proj.T >= 0, 1, -1).astype(np.float32)
        return Dataset(inputs, labels, 2)

    return draw(r_train, cfg.P), draw(r_test, cfg.P_test)


def _read_exact(fh, count, what):
    buf = fh.read(count)
    if len(buf) != count:
        raise IdxTruncatedError(f"IDX file ends inside {what} "
                                f"({len(buf)} of {count} bytes)")
    return buf


def read_idx(path) -> np.ndarray:
    """Parse an IDX tensor file (unsigned bytes): images (magic 0x803,
    3-D) or labels (magic 0x801, 1-D). Gzip files are detected by their
    two magic bytes."""
    path = Path(path)
    with open(path, "rb") as raw:
        head = raw.read(2)
    opener = gzip.open if head == b"\x1f\x8b" else open
    with opener(path, "rb") as fh:
        magic = struct.unpack(">I", _read_exact(fh, 4, "magic"))[0]
        if magic == IDX_MAGIC_IMAGES:
            ndim = 3
        elif magic == IDX_MAGIC_LABELS:
            ndim = 1
        else:
            raise IdxBadMagicError(f"unsupported IDX magic 0x{magic:08x}")
        dims = struct.unpack(f">{ndim}I",
                             _read_exact(fh, 4 * ndim, "dimension header"))
        total = 1
        for d in dims:
            total *= d
        if total > _IDX_MAX_ELEMENTS:
            raise IdxDimensionError(f"IDX dimensions {dims} overflow the "
                                    f"{_IDX_MAX_ELEMENTS}-element limit")
        payload = _read_exact(fh, total, "payload")
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def write_idx(path, array) -> None:
    """Inverse of :func:`read_idx`; gzip-compresses when the path ends in
    .gz (with a pinned mtime so outputs are byte-reproducible)."""
    array = np.ascontiguousarray(array, dtype=np.uint8)
    if array.ndim == 3:
        magic = IDX_MAGIC_IMAGES
    elif array.ndim == 1:
        magic = IDX_MAGIC_LABELS
    else:
        raise ShapeError("IDX arrays must be 1-D labels or 3-D images")
    blob = struct.pack(">I", magic)
    blob += struct.pack(f">{array.ndim}I", *array.shape)
    blob += array.tobytes()
    path = Path(path)
    if path.suffix == ".gz":
        with open(path, "wb") as fh:
            with gzip.GzipFile(fileobj=fh, mode="wb", mtime=0) as gz:
                gz.write(blob)
    else:
        path.write_bytes(blob)


def standardize(images) -> np.ndarray:
    """Affine map making the whole pixel population zero-mean, unit-variance."""
    x = np.asarray(images, dtype=np.float64)
    if x.size == 0:
        raise ShapeError("cannot standardize an empty array")
    mean = x.mean()
    std = x.std()
    if std == 0:
        raise ZeroVarianceError("pixel population has zero variance")
    return ((x - mean) / std).astype(np.float32)


def parity_labels(digit_labels) -> np.ndarray:
    """Even digit -> +1, odd digit -> -1."""
    d = np.asarray(digit_labels, dtype=np.int64)
    if np.any(d < 0) or np.any(d > 9):
        raise ValueError("digit labels must lie in 0..9")
    return np.where(d % 2 == 0, 1, -1).astype(np.int64)


def _is_pm1(labels) -> bool:
    vals = set(np.unique(labels).tolist())
    return vals <= {-1, 1}


def randomize_labels(data: Dataset, seed: int) -> Dataset:
    """Replace every label with an i.i.d. uniform draw over the classes."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    if _is_pm1(data.labels):
        labels = rng.integers(0, 2, size=data.num_patterns) * 2 - 1
    else:
        labels = rng.integers(0, data.num_classes, size=data.num_patterns)
    return Dataset(data.inputs, labels.astype(np.int64), data.num_classes)


def zero_pixels(data: Dataset, fraction: float, seed: int) -> Dataset:
    """Zero exactly floor(fraction * num_pixels) coordinates per pattern,
    chosen without replacement, independently per pattern."""
    if not 0.0 <= fraction <= 1.0:
        raise ConfigError("fraction must lie in [0, 1]")
    count = int(np.floor(fraction * data.num_features))
    if count == 0:
        return data
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    inputs = np.array(data.inputs, copy=True)
    for row in range(data.num_patterns):
        idx = rng.permutation(data.num_features)[:count]
        inputs[row, idx] = 0
    return Dataset(inputs, data.labels, data.num_classes)


def poison_dataset(data: Dataset, replication: int, zero_fraction: float,
                   seed: int) -> Dataset:
    """Stage-1 dataset for adversarial initialization.

    replication >= 1: originals plus that many label-randomized copies,
    each with ``zero_fraction`` of its pixels zeroed. replication = 0: the
    originals with labels randomized in place (no copies, no zeroing).
    """
    ss = np.random.SeedSequence(seed)
    if replication == 0:
        return randomize_labels(data, ss.generate_state(1)[0])
    parts_x = [data.inputs]
    parts_y = [data.labels]
    for copy_seed in ss.spawn(replication):
        s1, s2 = copy_seed.generate_state(2)
        noisy = randomize_labels(data, s1)
        noisy = zero_pixels(noisy, zero_fraction, s2)
        parts_x.append(noisy.inputs)
        parts_y.append(noisy.labels)
    return Dataset(np.concatenate(parts_x), np.concatenate(parts_y),
                   data.num_classes)


def save_dataset(data: Dataset, directory) -> Path:
    """Persist a dataset as a directory of .npy payloads + a JSON manifest
    (no archive timestamps, so saves are byte-reproducible)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    np.save(directory / "inputs.npy", np.asarray(data.inputs))
    np.save(directory / "labels.npy", np.asarray(data.labels))
    meta = {"format": "netgeom-dataset-v1", "num_classes": int(data.num_classes)}
    (directory / "meta.json").write_text(json.dumps(meta, sort_keys=True) + "\n")
    return directory


def load_dataset(directory) -> Dataset:
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text())
    if meta.get("format") != "netgeom-dataset-v1":
        raise ConfigError(f"unknown dataset format in {directory}")
    return Dataset(np.load(directory / "inputs.npy"),
                   np.load(directory / "labels.npy"),
                   int(meta["num_classes"]))
