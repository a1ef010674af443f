"""
Feature pool storage
====================

Loads, validates, generates and persists pools of pretrained feature vectors.

Binary layout (little-endian, row-major)::

    "BLAF" | u32 version=1 | u32 N | u32 d | u8 normalize | u8 has_labels | 2 zero bytes
    N*d f32 features
    N   u32 labels        (only when has_labels = 1)

CSV is a convenience path: one row per line, comma-separated decimals, with an
optional trailing ``label:<int>`` column.
"""

from __future__ import annotations

import logging
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (
    ConfigurationError,
    DataFormatError,
    PoolIOError,
    SeparationInfeasibleError,
)

logger = logging.getLogger(__name__)

MAGIC = b"BLAF"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sIIIBB2s")
NORM_TOLERANCE = 1e-4
# rows already this close to unit norm are left untouched on load
RENORM_SLACK = 1e-6
MAX_PLACEMENT_ATTEMPTS = 1000
NOISE_STD_FACTOR = 3.0


def _freeze(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class FeaturePool:
    """N x d matrix of float32 features plus optional integer labels.

    Labels are carried for evaluation only; no selector reads them.
    """

    features: np.ndarray
    labels: Optional[np.ndarray] = None
    normalized: bool = False

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float32, copy=True)
        if features.ndim != 2:
            raise ConfigurationError("features must be a 2D array")
        n, dim = features.shape
        if n < 1 or dim < 1:
            raise ConfigurationError(f"pool must have n >= 1 and dim >= 1, got {features.shape}")
        if not np.all(np.isfinite(features)):
            raise ConfigurationError("features contain NaN or Inf entries")
        if self.normalized:
            norms = np.linalg.norm(features.astype(np.float64), axis=1)
            worst = float(np.max(np.abs(norms - 1.0)))
            if worst >= NORM_TOLERANCE:
                raise ConfigurationError(
                    f"pool flagged normalized but a row norm deviates by {worst:.2e}")
        object.__setattr__(self, "features", _freeze(features))

        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (n,):
                raise ConfigurationError(f"expected {n} labels, got shape {labels.shape}")
            if labels.size and (not np.issubdtype(labels.dtype, np.integer) or labels.min() < 0):
                raise ConfigurationError("labels must be non-negative integers")
            object.__setattr__(self, "labels", _freeze(labels.astype(np.int64, copy=True)))

    @property
    def n(self) -> int:
        return int(self.features.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    def as_float64(self) -> np.ndarray:
        return self.features.astype(np.float64)


@dataclass(frozen=True)
class MixtureSpec:
    """Gaussian-mixture stand-in for pretrained features of a labelled dataset."""

    num_classes: int = 10
    samples_per_class: int = 500
    dim: int = 32
    center_separation: float = 6.0
    intra_std: float = 1.0
    noise_fraction: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 1 or self.samples_per_class < 1 or self.dim < 1:
            raise ConfigurationError("num_classes, samples_per_class and dim must be positive")
        if self.center_separation <= 0 or self.intra_std <= 0:
            raise ConfigurationError("center_separation and intra_std must be positive")
        if not 0.0 <= self.noise_fraction < 1.0:
            raise ConfigurationError(f"noise_fraction must lie in [0, 1), got {self.noise_fraction}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")


def normalize_rows(features: np.ndarray) -> np.ndarray:
    """L2-normalize rows that are not already unit norm (zero rows stay zero)."""
    wide = features.astype(np.float64)
    norms = np.linalg.norm(wide, axis=1)
    needs = np.abs(norms - 1.0) > RENORM_SLACK
    needs &= norms > 0
    out = features.astype(np.float32, copy=True)
    if np.any(needs):
        out[needs] = (wide[needs] / norms[needs, None]).astype(np.float32)
    return out


def _normalize_loaded(features: np.ndarray, path: Path) -> np.ndarray:
    zero = np.flatnonzero(~np.any(features, axis=1))
    if zero.size:
        raise DataFormatError(f"row {int(zero[0])} is all zeros and cannot be normalized",
                              path=str(path))
    return normalize_rows(features)


# -----------------------------------------------------------
# Loading
# -----------------------------------------------------------
def load_pool(path, format: str = "binary", normalize: Optional[bool] = None) -> FeaturePool:
    """Read a pool from ``path``.

    For binary files the header's normalize flag decides whether rows are
    normalized; ``normalize`` overrides it when given.  For CSV the flag
    defaults to False.
    """
    path = Path(path)
    if format == "binary":
        return _load_binary(path, normalize)
    if format == "csv":
        return _load_csv(path, bool(normalize))
    raise ConfigurationError(f"unknown pool format '{format}' (expected binary or csv)")


def _read_bytes(path: Path) -> bytes:
    try:
        with open(path, "rb") as f:
            return f.read()
    except OSError as e:
        raise PoolIOError(f"cannot read pool ({e.strerror})", path) from e


def _load_binary(path: Path, normalize: Optional[bool]) -> FeaturePool:
    raw = _read_bytes(path)
    if len(raw) < HEADER.size:
        raise DataFormatError(f"file too short for a {HEADER.size}-byte header",
                              offset=len(raw), path=str(path))
    magic, version, n, dim, norm_flag, label_flag, padding = HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise DataFormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0, path=str(path))
    if version != FORMAT_VERSION:
        raise DataFormatError(f"unsupported version {version}", offset=4, path=str(path))
    if n < 1 or dim < 1:
        raise DataFormatError(f"header declares an empty pool (N={n}, d={dim})",
                              offset=8, path=str(path))
    if norm_flag not in (0, 1):
        raise DataFormatError(f"normalize flag must be 0 or 1, got {norm_flag}",
                              offset=16, path=str(path))
    if label_flag not in (0, 1):
        raise DataFormatError(f"labels flag must be 0 or 1, got {label_flag}",
                              offset=17, path=str(path))
    if padding != b"\x00\x00":
        raise DataFormatError("header padding must be zero", offset=18, path=str(path))

    feature_bytes = 4 * n * dim
    label_bytes = 4 * n if label_flag else 0
    expected = HEADER.size + feature_bytes + label_bytes
    if len(raw) < expected:
        have_floats = max(0, len(raw) - HEADER.size) // 4
        raise DataFormatError(
            f"truncated payload: header declares N={n}, d={dim} "
            f"({n * dim} floats{f' + {n} labels' if label_flag else ''}) "
            f"but only {have_floats} 4-byte words follow",
            offset=len(raw), path=str(path))
    if len(raw) > expected:
        raise DataFormatError(
            f"dimension mismatch: {len(raw) - expected} trailing bytes after the declared payload",
            offset=expected, path=str(path))

    features = np.frombuffer(raw, dtype="<f4", count=n * dim, offset=HEADER.size)
    bad = np.flatnonzero(~np.isfinite(features))
    if bad.size:
        raise DataFormatError("NaN/Inf in feature payload",
                              offset=HEADER.size + 4 * int(bad[0]), path=str(path))
    features = features.astype(np.float32).reshape(n, dim)

    labels = None
    if label_flag:
        labels = np.frombuffer(raw, dtype="<u4", count=n,
                               offset=HEADER.size + feature_bytes).astype(np.int64)

    do_normalize = bool(norm_flag) if normalize is None else normalize
    if do_normalize:
        features = _normalize_loaded(features, path)
    pool = FeaturePool(features, labels, normalized=do_normalize)
    logger.info("Loaded pool %s: N=%d d=%d labels=%s", path, pool.n, pool.dim, pool.has_labels)
    return pool


def _load_csv(path: Path, normalize: bool) -> FeaturePool:
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as e:
        raise PoolIOError(f"cannot read pool ({e.strerror})", path) from e

    rows, labels = [], []
    dim = None
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        tokens = [t.strip() for t in line.split(",")]
        label = None
        if tokens[-1].startswith("label:"):
            try:
                label = int(tokens[-1][len("label:"):])
            except ValueError:
                raise DataFormatError(f"bad label column '{tokens[-1]}'",
                                      line=lineno, path=str(path)) from None
            if label < 0:
                raise DataFormatError("labels must be non-negative", line=lineno, path=str(path))
            tokens = tokens[:-1]
        try:
            values = [float(t) for t in tokens]
        except ValueError:
            raise DataFormatError("non-numeric value in row", line=lineno, path=str(path)) from None
        if not all(np.isfinite(values)):
            raise DataFormatError("NaN/Inf in feature row", line=lineno, path=str(path))
        if dim is None:
            dim = len(values)
        elif len(values) != dim:
            raise DataFormatError(f"dimension mismatch: expected {dim} values, got {len(values)}",
                                  line=lineno, path=str(path))
        if rows and (label is None) != (labels[0] is None):
            raise DataFormatError("label column must be present on every row or on none",
                                  line=lineno, path=str(path))
        rows.append(values)
        labels.append(label)

    if not rows:
        raise DataFormatError("no feature rows found", line=len(lines), path=str(path))

    features = np.asarray(rows, dtype=np.float32)
    if normalize:
        features = _normalize_loaded(features, path)
    label_array = None if labels[0] is None else np.asarray(labels, dtype=np.int64)
    return FeaturePool(features, label_array, normalized=normalize)


# -----------------------------------------------------------
# Saving
# -----------------------------------------------------------
def save_pool(pool: FeaturePool, path, format: str = "binary") -> None:
    """Write ``pool`` so that ``load_pool`` reproduces it bitwise (binary format)."""
    path = Path(path)
    if format == "binary":
        payload = _encode_binary(pool)
        mode = "wb"
    elif format == "csv":
        payload = _encode_csv(pool)
        mode = "w"
    else:
        raise ConfigurationError(f"unknown pool format '{format}' (expected binary or csv)")
    try:
        ensure_parent(path)
        with open(path, mode) as f:
            f.write(payload)
    except OSError as e:
        raise PoolIOError(f"cannot write pool ({e.strerror})", path) from e
    logger.info("Saved pool %s (%s, N=%d, d=%d)", path, format, pool.n, pool.dim)


def _encode_binary(pool: FeaturePool) -> bytes:
    header = HEADER.pack(MAGIC, FORMAT_VERSION, pool.n, pool.dim,
                         int(pool.normalized), int(pool.has_labels), b"\x00\x00")
    parts = [header, np.ascontiguousarray(pool.features, dtype="<f4").tobytes()]
    if pool.has_labels:
        parts.append(pool.labels.astype("<u4").tobytes())
    return b"".join(parts)


def _encode_csv(pool: FeaturePool) -> str:
    out = []
    for i, row in enumerate(pool.features):
        cells = [repr(float(x)) for x in row]
        if pool.has_labels:
            cells.append(f"label:{int(pool.labels[i])}")
        out.append(",".join(cells))
    return "\n".join(out) + "\n"


# -----------------------------------------------------------
# Synthetic mixtures
# -----------------------------------------------------------
def place_centers(spec: MixtureSpec, rng: np.random.Generator) -> np.ndarray:
    """Rejection-place class centers pairwise >= center_separation apart."""
    spread = spec.center_separation / np.sqrt(2.0)
    centers = []
    for c in range(spec.num_classes):
        for _ in range(MAX_PLACEMENT_ATTEMPTS):
            candidate = rng.normal(0.0, spread, size=spec.dim)
            if all(np.linalg.norm(candidate - other) >= spec.center_separation for other in centers):
                centers.append(candidate)
                break
        else:
            raise SeparationInfeasibleError(
                f"could not place class center {c} of {spec.num_classes} at separation "
                f"{spec.center_separation} in dim {spec.dim} after {MAX_PLACEMENT_ATTEMPTS} "
                "attempts; use a smaller --center-separation or a larger --dim")
    return np.asarray(centers)


def generate_mixture(spec: MixtureSpec, return_centers: bool = False):
    """Draw a labelled, L2-normalized Gaussian mixture fully determined by ``spec``.

    A ``noise_fraction`` share of every class is drawn with 3x the class
    standard deviation, producing the peripheral outliers denoising targets.
    With ``return_centers`` the pre-normalization class centers are returned too.
    """
    rng = np.random.default_rng(spec.seed)
    centers = place_centers(spec, rng)

    per_class = spec.samples_per_class
    n_noise = int(np.floor(spec.noise_fraction * per_class))
    blocks, labels = [], []
    for c, center in enumerate(centers):
        std = np.full(per_class, spec.intra_std)
        std[per_class - n_noise:] *= NOISE_STD_FACTOR
        samples = center + rng.normal(0.0, 1.0, size=(per_class, spec.dim)) * std[:, None]
        blocks.append(samples)
        labels.append(np.full(per_class, c, dtype=np.int64))

    raw = np.vstack(blocks)
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    features = (raw / np.where(norms > 0, norms, 1.0)).astype(np.float32)
    pool = FeaturePool(normalize_rows(features), np.concatenate(labels), normalized=True)
    logger.info("Generated mixture: %d classes x %d samples, d=%d, noise=%d/class",
                spec.num_classes, per_class, spec.dim, n_noise)
    if return_centers:
        return pool, centers, raw
    return pool


def pool_metadata(pool: FeaturePool, source: Optional[dict] = None) -> dict:
    meta = {"n": pool.n, "dim": pool.dim, "normalized": pool.normalized,
            "has_labels": pool.has_labels, "format_version": FORMAT_VERSION}
    if source:
        meta["source"] = dict(source)
    return meta


def ensure_parent(path) -> None:
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
