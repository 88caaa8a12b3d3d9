"""Dataset synthesis, IDX loading, normalization, and party partitioning.

Synthetic data stands in for the image benchmarks at desk scale: clean
samples come from labeled Gaussian clusters, noise samples from a shifted
and rotated cluster family, mirroring the substitution of whole off-task
samples into unreliable parties' shards.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError, UsageError

_IDX_IMAGES_MAGIC = 0x00000803
_IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with integer class labels."""

    X: np.ndarray
    y: np.ndarray
    class_count: int

    def __post_init__(self):
        if self.X.shape[0] != self.y.shape[0]:
            raise ConfigError("feature and label counts differ")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.class_count):
            raise ConfigError("labels outside [0, class_count)")

    def __len__(self):
        return self.X.shape[0]

    def subset(self, idx) -> "Dataset":
        return Dataset(X=self.X[idx], y=self.y[idx], class_count=self.class_count)


@dataclass(frozen=True)
class Shard:
    """One party's local train/test split.

    For unreliable parties, clean_train is the clean sub-part of the mixed
    training shard (baselines pool it; the party itself never sees the split).
    """

    train: Dataset
    test: Dataset
    clean_train: Dataset | None = None


@dataclass(frozen=True)
class PartitionPlan:
    """Sample counts per party role; all counts are >= 0."""

    initiator_size: int
    initiator_test_size: int
    rp_count: int
    rp_size: int
    rp_test_size: int
    up_count: int
    up_clean_size: int
    up_noise_size: int
    up_clean_test_size: int
    up_noise_test_size: int

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value < 0:
                raise ConfigError(f"partition.{name} must be >= 0")

    @property
    def clean_total(self) -> int:
        return (
            self.initiator_size
            + self.initiator_test_size
            + self.rp_count * (self.rp_size + self.rp_test_size)
            + self.up_count * (self.up_clean_size + self.up_clean_test_size)
        )

    @property
    def noise_total(self) -> int:
        return self.up_count * (self.up_noise_size + self.up_noise_test_size)


@dataclass(frozen=True)
class NoiseSpec:
    """Where unreliable parties' noise samples come from.

    synthetic_disjoint draws from the synthetic off-task generator;
    supplied_file loads an IDX pair. Label policies: uniform_random
    relabels samples uniformly, cluster_consistent labels each synthetic
    noise cluster by its own identity (an off-task dataset with its own
    classes), preserve keeps a supplied file's labels.
    """

    source: str = "synthetic_disjoint"
    label_policy: str = "uniform_random"
    images_path: str = ""
    labels_path: str = ""
    shift: float = 8.0
    feature_scale: float = 1.0
    cluster_count: int = 0  # 0 = one cluster per task class

    def __post_init__(self):
        if self.source not in ("synthetic_disjoint", "supplied_file"):
            raise ConfigError(f"unknown noise source {self.source!r}")
        if self.label_policy not in ("uniform_random", "cluster_consistent", "preserve"):
            raise ConfigError(f"unknown noise label policy {self.label_policy!r}")
        if self.label_policy == "preserve" and self.source != "supplied_file":
            raise ConfigError("label_policy=preserve requires source=supplied_file")
        if self.label_policy == "cluster_consistent" and self.source != "synthetic_disjoint":
            raise ConfigError("label_policy=cluster_consistent requires synthetic noise")
        if self.cluster_count < 0:
            raise ConfigError("noise.cluster_count must be >= 0")


def synth_classification(
    n_samples: int,
    input_dim: int,
    class_count: int,
    seed: int,
    class_separation: float = 3.0,
    cluster_std: float = 1.0,
) -> Dataset:
    """Balanced Gaussian class clusters; deterministic under seed."""
    if n_samples < 1 or input_dim < 1 or class_count < 2:
        raise ConfigError("n_samples, input_dim must be >= 1 and class_count >= 2")
    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((class_count, input_dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    means = directions * class_separation
    # Balanced within +-1: remainder spread over the first classes.
    counts = np.full(class_count, n_samples // class_count)
    counts[: n_samples % class_count] += 1
    y = np.repeat(np.arange(class_count), counts)
    X = means[y] + rng.standard_normal((n_samples, input_dim)) * cluster_std
    order = rng.permutation(n_samples)
    return Dataset(X=X[order], y=y[order].astype(np.int64), class_count=class_count)


def synth_noise(
    n_samples: int,
    input_dim: int,
    class_count: int,
    seed: int,
    shift: float = 8.0,
    feature_scale: float = 1.0,
    cluster_count: int = 0,
    label_policy: str = "uniform_random",
) -> Dataset:
    """Off-task samples: a rotated cluster family moved `shift` away from the
    origin. Labels are assigned uniformly at random by default; the
    cluster_consistent policy instead labels each noise cluster by its own
    identity, the way an off-task benchmark dataset carries its own classes.
    """
    if n_samples < 1 or input_dim < 1 or class_count < 2:
        raise ConfigError("n_samples, input_dim must be >= 1 and class_count >= 2")
    if label_policy not in ("uniform_random", "cluster_consistent"):
        raise ConfigError(f"unknown synthetic noise label policy {label_policy!r}")
    if cluster_count < 1:
        cluster_count = class_count
    rng = np.random.default_rng(seed)
    offset_dir = rng.standard_normal(input_dim)
    offset = offset_dir / np.linalg.norm(offset_dir) * shift
    rotation, _ = np.linalg.qr(rng.standard_normal((input_dim, input_dim)))
    local = rng.standard_normal((cluster_count, input_dim))
    local /= np.linalg.norm(local, axis=1, keepdims=True)
    means = (local * 3.0) @ rotation
    cluster = rng.integers(0, cluster_count, size=n_samples)
    spread = means[cluster] + rng.standard_normal((n_samples, input_dim))
    X = spread * feature_scale + offset
    if label_policy == "cluster_consistent":
        y = (cluster % class_count).astype(np.int64)
    else:
        y = rng.integers(0, class_count, size=n_samples).astype(np.int64)
    return Dataset(X=X, y=y, class_count=class_count)


def load_idx(images_path: str, labels_path: str) -> Dataset:
    """Parse a big-endian IDX image/label file pair; pixels scaled to [0, 1]."""
    with open(images_path, "rb") as fh:
        header = fh.read(16)
        if len(header) < 16:
            raise FormatError(f"{images_path}: truncated IDX image header")
        magic, count, rows, cols = struct.unpack(">IIII", header)
        if magic != _IDX_IMAGES_MAGIC:
            raise FormatError(f"{images_path}: bad image magic {magic:#010x}")
        body = fh.read()
    expected = count * rows * cols
    if len(body) != expected:
        raise FormatError(
            f"{images_path}: expected {expected} pixel bytes, found {len(body)}"
        )
    X = np.frombuffer(body, dtype=np.uint8).astype(np.float64).reshape(count, rows * cols)
    X /= 255.0

    with open(labels_path, "rb") as fh:
        header = fh.read(8)
        if len(header) < 8:
            raise FormatError(f"{labels_path}: truncated IDX label header")
        magic, label_count = struct.unpack(">II", header)
        if magic != _IDX_LABELS_MAGIC:
            raise FormatError(f"{labels_path}: bad label magic {magic:#010x}")
        label_body = fh.read()
    if len(label_body) != label_count:
        raise FormatError(
            f"{labels_path}: expected {label_count} label bytes, found {len(label_body)}"
        )
    if label_count != count:
        raise FormatError(
            f"image count {count} does not match label count {label_count}"
        )
    y = np.frombuffer(label_body, dtype=np.uint8).astype(np.int64)
    class_count = int(y.max()) + 1 if y.size else 1
    return Dataset(X=X, y=y, class_count=class_count)


def pad_features(ds: Dataset, target_dim: int) -> Dataset:
    """Zero-pad feature vectors up to target_dim (for mixing datasets of
    different dimensionality)."""
    current = ds.X.shape[1]
    if target_dim < current:
        raise ConfigError(f"cannot pad {current}-dim features down to {target_dim}")
    if target_dim == current:
        return ds
    padded = np.zeros((ds.X.shape[0], target_dim))
    padded[:, :current] = ds.X
    return Dataset(X=padded, y=ds.y, class_count=ds.class_count)


def relabel_uniform(ds: Dataset, class_count: int, seed: int) -> Dataset:
    """Replace labels with uniform draws; used by the uniform_random policy."""
    rng = np.random.default_rng(seed)
    y = rng.integers(0, class_count, size=len(ds)).astype(np.int64)
    return Dataset(X=ds.X, y=y, class_count=class_count)


def normalize_center(ds: Dataset) -> Dataset:
    """Scale each feature to unit range, then subtract its mean.

    Constant features become all-zero columns. Idempotent: a second
    application is an exact no-op up to float rounding.
    """
    if len(ds) == 0:
        raise UsageError("cannot normalize an empty dataset")
    lo = ds.X.min(axis=0)
    hi = ds.X.max(axis=0)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    scaled = np.where(span > 0, (ds.X - lo) / safe, 0.0)
    centered = scaled - scaled.mean(axis=0)
    return Dataset(X=centered, y=ds.y, class_count=ds.class_count)


def partition(
    ds: Dataset,
    noise: Dataset | None,
    plan: PartitionPlan,
    seed: int,
    class_alpha: float = 0.0,
) -> dict:
    """Split clean and noise pools into per-party shards.

    Clean indices are assigned at most once (disjoint shards); unreliable
    parties' shards interleave clean and noise samples. Returns a dict
    keyed by party id: "initiator", "rp1"..., "up1"....

    class_alpha > 0 skews each party's clean *training* shard toward
    Dirichlet(class_alpha)-weighted class proportions (smaller alpha means
    stronger skew); test shards always draw uniformly.
    """
    if plan.rp_count + plan.up_count < 1:
        raise ConfigError("plan must include at least one participant")
    if plan.clean_total > len(ds):
        raise ConfigError(
            f"plan needs {plan.clean_total} clean samples, dataset has {len(ds)}"
        )
    if plan.noise_total > 0:
        if noise is None:
            raise ConfigError("plan allocates noise samples but no noise dataset given")
        if plan.noise_total > len(noise):
            raise ConfigError(
                f"plan needs {plan.noise_total} noise samples, noise pool has {len(noise)}"
            )
        if noise.class_count != ds.class_count:
            raise ConfigError("noise and clean datasets disagree on class_count")
    if class_alpha < 0:
        raise ConfigError("class_alpha must be >= 0")

    rng = np.random.default_rng(seed)
    clean_order = rng.permutation(len(ds))
    noise_order = rng.permutation(len(noise)) if noise is not None else np.array([], int)
    clean_pos = 0
    noise_pos = 0
    # Per-class queues over the not-yet-assigned clean samples, used only
    # for skewed draws; uniform draws consume clean_order directly and the
    # queues are kept in sync by dropping consumed indices lazily.
    consumed = np.zeros(len(ds), dtype=bool)
    class_queues = {
        c: [i for i in clean_order if ds.y[i] == c] for c in range(ds.class_count)
    }
    class_heads = {c: 0 for c in class_queues}

    def _pick_uniform(count):
        nonlocal clean_pos
        picked = []
        while len(picked) < count:
            idx = clean_order[clean_pos]
            clean_pos += 1
            if not consumed[idx]:
                consumed[idx] = True
                picked.append(idx)
        return picked

    def _pick_skewed(count):
        weights = rng.dirichlet(np.full(ds.class_count, class_alpha))
        targets = rng.multinomial(count, weights)
        picked = []
        for c, want in enumerate(targets):
            head = class_heads[c]
            queue = class_queues[c]
            while want > 0 and head < len(queue):
                idx = queue[head]
                head += 1
                if not consumed[idx]:
                    consumed[idx] = True
                    picked.append(idx)
                    want -= 1
            class_heads[c] = head
        # Class pool exhausted: fall back to uniform draws for the remainder.
        if len(picked) < count:
            picked.extend(_pick_uniform(count - len(picked)))
        return picked

    def take_clean(count):
        return ds.subset(np.array(_pick_uniform(count), dtype=int))

    def take_clean_skewed(count):
        if class_alpha <= 0 or count == 0:
            return take_clean(count)
        return ds.subset(np.array(_pick_skewed(count), dtype=int))

    def take_noise(count):
        nonlocal noise_pos
        idx = noise_order[noise_pos : noise_pos + count]
        noise_pos += count
        return noise.subset(idx)

    def mix(clean_part: Dataset, noise_part: Dataset) -> Dataset:
        X = np.vstack([clean_part.X, noise_part.X])
        y = np.concatenate([clean_part.y, noise_part.y])
        order = rng.permutation(len(y))
        return Dataset(X=X[order], y=y[order], class_count=ds.class_count)

    shards = {
        "initiator": Shard(
            train=take_clean_skewed(plan.initiator_size),
            test=take_clean(plan.initiator_test_size),
        )
    }
    for i in range(plan.rp_count):
        shards[f"rp{i + 1}"] = Shard(
            train=take_clean_skewed(plan.rp_size), test=take_clean(plan.rp_test_size)
        )
    for i in range(plan.up_count):
        up_clean = take_clean_skewed(plan.up_clean_size)
        shards[f"up{i + 1}"] = Shard(
            train=mix(up_clean, take_noise(plan.up_noise_size)),
            test=mix(
                take_clean(plan.up_clean_test_size),
                take_noise(plan.up_noise_test_size),
            ),
            clean_train=up_clean,
        )
    return shards


def to_csv(ds: Dataset, path: str) -> None:
    """Debug dump: one row per sample, label last."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(ds.X.shape[1])] + ["label"])
        for row, label in zip(ds.X, ds.y):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])
