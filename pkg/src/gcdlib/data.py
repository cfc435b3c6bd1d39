"""Embedding datasets: binary file ingestion, synthetic generation, two-view
feature augmentation and labelled/unlabelled batch sampling.

On-disk formats (little-endian):

  feature file  magic "DGCE", u32 version=1, u32 n, u32 d,
                then n*d float32, row-major
  label file    magic "DGCL", u32 version=1, u32 n, u32 M, u32 K,
                then n int32 ground-truth class ids in [0, K),
                then n mask bytes: 1 = labelled (visible to the trainer),
                0 = unlabelled (ground truth reserved for evaluation)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from gcdlib.errors import ConfigError, ConsistencyError, DataError, FormatError

FEATURE_MAGIC = b"DGCE"
LABEL_MAGIC = b"DGCL"
FORMAT_VERSION = 1

UNLABELLED = -1  # sentinel in the trainer-visible label array


@dataclass
class EmbeddingDataset:
    """Fixed-dimension embedding rows with a partial labelling.

    `labels` carries UNLABELLED (-1) wherever the mask hides the class;
    `ground_truth` keeps every row's class id and exists for evaluation and
    logging only -- training code must not read it.
    """

    features: np.ndarray       # (n, d) float64
    labels: np.ndarray         # (n,) int64, UNLABELLED where hidden
    ground_truth: np.ndarray   # (n,) int64
    num_old_classes: int       # M
    num_total_classes: int     # K

    def __post_init__(self):
        n = self.features.shape[0]
        if self.labels.shape != (n,) or self.ground_truth.shape != (n,):
            raise ConsistencyError("labels/ground_truth length must match feature rows")
        if not (0 < self.num_old_classes <= self.num_total_classes):
            raise ConsistencyError("need 0 < M <= K")
        if not np.all(np.isfinite(self.features)):
            raise DataError("features contain non-finite values")
        if np.any((self.ground_truth < 0) | (self.ground_truth >= self.num_total_classes)):
            raise ConsistencyError("ground-truth class id outside [0, K)")
        vis = self.labels != UNLABELLED
        if np.any(self.labels[vis] >= self.num_old_classes):
            raise ConsistencyError("labelled row carries a class id >= M")
        if np.any(self.labels[vis] != self.ground_truth[vis]):
            raise ConsistencyError("visible label disagrees with ground truth")

    @property
    def num_rows(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def labelled_indices(self) -> np.ndarray:
        return np.flatnonzero(self.labels != UNLABELLED)

    @property
    def unlabelled_indices(self) -> np.ndarray:
        return np.flatnonzero(self.labels == UNLABELLED)


@dataclass
class AugConfig:
    """Feature-space augmentation: coordinate dropout, Gaussian noise, renormalize."""

    noise_sigma: float = 0.05
    feature_dropout_p: float = 0.1
    renormalize: bool = True

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if not (0 <= self.feature_dropout_p < 1):
            raise ConfigError("feature_dropout_p must lie in [0, 1)")


@dataclass
class BatchViews:
    """A sampled mini-batch with two stochastic views per row."""

    indices: np.ndarray        # (b,) dataset row ids
    view1: np.ndarray          # (b, d)
    view2: np.ndarray          # (b, d)
    labelled_mask: np.ndarray  # (b,) bool
    labels: np.ndarray         # (b,) int64, UNLABELLED on unlabelled rows

    @property
    def size(self) -> int:
        return self.indices.shape[0]


# ---------------------------------------------------------------------------
# binary file io


def save_embeddings(feature_path, label_path, dataset: EmbeddingDataset) -> None:
    feats = dataset.features.astype(np.float32)
    n, d = feats.shape
    with open(feature_path, "wb") as f:
        f.write(FEATURE_MAGIC)
        f.write(struct.pack("<III", FORMAT_VERSION, n, d))
        f.write(feats.tobytes(order="C"))
    mask = (dataset.labels != UNLABELLED).astype(np.uint8)
    with open(label_path, "wb") as f:
        f.write(LABEL_MAGIC)
        f.write(struct.pack("<IIII", FORMAT_VERSION, n,
                            dataset.num_old_classes, dataset.num_total_classes))
        f.write(dataset.ground_truth.astype("<i4").tobytes(order="C"))
        f.write(mask.tobytes(order="C"))


def _read_exact(f, count, what):
    buf = f.read(count)
    if len(buf) != count:
        raise FormatError(f"truncated file: expected {count} bytes of {what}")
    return buf


def load_embeddings(feature_path, label_path) -> EmbeddingDataset:
    with open(feature_path, "rb") as f:
        if _read_exact(f, 4, "magic") != FEATURE_MAGIC:
            raise FormatError("feature file: bad magic, expected DGCE")
        version, n, d = struct.unpack("<III", _read_exact(f, 12, "header"))
        if version != FORMAT_VERSION:
            raise FormatError(f"feature file: unsupported version {version}")
        payload = _read_exact(f, 4 * n * d, "float32 payload")
        feats = np.frombuffer(payload, dtype="<f4").reshape(n, d).astype(np.float64)

    with open(label_path, "rb") as f:
        if _read_exact(f, 4, "magic") != LABEL_MAGIC:
            raise FormatError("label file: bad magic, expected DGCL")
        version, ln, m, k = struct.unpack("<IIII", _read_exact(f, 16, "header"))
        if version != FORMAT_VERSION:
            raise FormatError(f"label file: unsupported version {version}")
        gt = np.frombuffer(_read_exact(f, 4 * ln, "labels"), dtype="<i4").astype(np.int64)
        mask = np.frombuffer(_read_exact(f, ln, "mask"), dtype=np.uint8)

    if ln != n:
        raise ConsistencyError(f"feature file has {n} rows but label file has {ln}")
    if not np.all(np.isfinite(feats)):
        raise DataError("feature file contains non-finite values")
    labels = np.where(mask == 1, gt, UNLABELLED)
    return EmbeddingDataset(
        features=feats,
        labels=labels,
        ground_truth=gt,
        num_old_classes=int(m),
        num_total_classes=int(k),
    )


# ---------------------------------------------------------------------------
# synthetic data


def synth_generate(k_classes: int, m_old: int, per_class: int, dim: int,
                   cluster_sigma: float, seed: int) -> EmbeddingDataset:
    """Unit-norm Gaussian clusters around orthogonally-biased random centers.

    Half of each old class is labelled (rounded), new classes are fully
    unlabelled; ground truth is retained for evaluation.
    """
    if m_old > k_classes or m_old < 1:
        raise ConfigError("need 1 <= m_old <= k_classes")
    if per_class < 2:
        raise ConfigError("per_class must be >= 2")
    if dim < 2:
        raise ConfigError("dim must be >= 2")
    if cluster_sigma < 0:
        raise ConfigError("cluster_sigma must be >= 0")
    if k_classes > dim:
        raise ConfigError("orthogonally-biased centers need k_classes <= dim")

    rng = np.random.default_rng(np.uint64(seed))
    # Orthonormal frame blended with a random unit direction per center: the
    # unit-norm orthogonal part dominates the 0.35-norm jitter at any dim, so
    # centers stay orthogonally biased while low dims yield confusable pairs.
    basis, _ = np.linalg.qr(rng.standard_normal((dim, k_classes)))
    jitter = rng.standard_normal((k_classes, dim))
    jitter /= np.linalg.norm(jitter, axis=1, keepdims=True)
    centers = basis.T + 0.35 * jitter
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)

    n = k_classes * per_class
    feats = np.empty((n, dim))
    gt = np.empty(n, dtype=np.int64)
    labels = np.full(n, UNLABELLED, dtype=np.int64)
    row = 0
    for c in range(k_classes):
        samples = centers[c] + cluster_sigma * rng.standard_normal((per_class, dim))
        norms = np.linalg.norm(samples, axis=1, keepdims=True)
        feats[row:row + per_class] = samples / norms
        gt[row:row + per_class] = c
        if c < m_old:
            n_lab = int(round(0.5 * per_class))
            chosen = rng.choice(per_class, size=n_lab, replace=False)
            labels[row + chosen] = c
        row += per_class
    return EmbeddingDataset(
        features=feats,
        labels=labels,
        ground_truth=gt,
        num_old_classes=m_old,
        num_total_classes=k_classes,
    )


# ---------------------------------------------------------------------------
# augmentation and sampling


def augment_batch(rows: np.ndarray, aug: AugConfig, rng: np.random.Generator) -> np.ndarray:
    """One stochastic view of a batch of feature rows."""
    out = rows.copy()
    if aug.feature_dropout_p > 0:
        keep = rng.random(rows.shape) >= aug.feature_dropout_p
        out *= keep
    if aug.noise_sigma > 0:
        out += aug.noise_sigma * rng.standard_normal(rows.shape)
    if aug.renormalize:
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        safe = norms > 1e-12  # an all-zero row stays as-is rather than dividing by ~0
        out = np.where(safe, out / np.where(safe, norms, 1.0), out)
    return out


def make_views(h: np.ndarray, aug: AugConfig, rng: np.random.Generator):
    """Two independent stochastic views of one feature row."""
    row = np.asarray(h, dtype=np.float64).reshape(1, -1)
    if not np.all(np.isfinite(row)):
        raise DataError("make_views: non-finite feature row")
    return augment_batch(row, aug, rng)[0], augment_batch(row, aug, rng)[0]


def sample_batch(dataset: EmbeddingDataset, batch_size: int, labelled_fraction: float,
                 aug: AugConfig, rng: np.random.Generator) -> BatchViews:
    """Mixed labelled/unlabelled batch with two views per row.

    Draws round(batch_size * labelled_fraction) labelled rows and fills the
    rest with unlabelled rows, each without replacement within the batch.
    """
    lab_pool = dataset.labelled_indices
    unlab_pool = dataset.unlabelled_indices
    if lab_pool.size == 0 or unlab_pool.size == 0:
        raise DataError("sample_batch needs at least one labelled and one unlabelled row")
    n_lab = int(round(batch_size * labelled_fraction))
    n_unlab = batch_size - n_lab
    if n_lab > lab_pool.size:
        raise DataError(f"batch wants {n_lab} labelled rows but pool has {lab_pool.size}")
    if n_unlab > unlab_pool.size:
        raise DataError(f"batch wants {n_unlab} unlabelled rows but pool has {unlab_pool.size}")
    idx_lab = rng.choice(lab_pool, size=n_lab, replace=False)
    idx_unlab = rng.choice(unlab_pool, size=n_unlab, replace=False)
    indices = np.concatenate([idx_lab, idx_unlab])
    rows = dataset.features[indices]
    view1 = augment_batch(rows, aug, rng)
    view2 = augment_batch(rows, aug, rng)
    labels = dataset.labels[indices]
    return BatchViews(
        indices=indices,
        view1=view1,
        view2=view2,
        labelled_mask=labels != UNLABELLED,
        labels=labels,
    )
