"""Feature-vector classification datasets: CSV I/O, synthesis, splitting, SMOTE.

All operations are pure functions of their inputs plus an integer seed, so
pipelines rerun bit-identically. Datasets are immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

_CLASS_DIRECTIVE = "# classes="


@dataclass(frozen=True)
class FeatureDataset:
    """N x D matrix of finite features with integer labels in [0, num_classes).

    Arrays are coerced to float64 / int64 and frozen; share freely across
    threads for reading.
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        features = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        labels = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int64))
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        if features.ndim != 2:
            raise ValueError("features must be a 2-D array")
        if features.shape[0] < 1:
            raise ValueError("dataset must contain at least one sample")
        if features.shape[1] < 1:
            raise ValueError("dataset must have at least one feature")
        if labels.shape != (features.shape[0],):
            raise ValueError("labels must be a vector with one entry per feature row")
        if self.num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        if not np.all(np.isfinite(features)):
            raise ValueError("features contain non-finite values")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        features.setflags(write=False)
        labels.setflags(write=False)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


@dataclass(frozen=True)
class SplitRatios:
    """Train/val/test fractions, each in (0, 1), summing to 1."""

    train: float = 0.70
    val: float = 0.15
    test: float = 0.15

    def __post_init__(self):
        for name in ("train", "val", "test"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} ratio must lie in (0, 1), got {value}")
        if abs(self.train + self.val + self.test - 1.0) > 1e-9:
            raise ValueError("split ratios must sum to 1")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.train, self.val, self.test)


@dataclass(frozen=True)
class SyntheticConfig:
    """Recipe for a separable-by-construction Gaussian blob dataset.

    Class means sit on a sphere of radius class_separation; samples add
    isotropic noise of scale noise_scale.
    """

    num_classes: int
    feature_dim: int
    samples_per_class: tuple[int, ...]
    class_separation: float = 4.0
    noise_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(
            self, "samples_per_class", tuple(int(c) for c in self.samples_per_class)
        )
        if self.num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be at least 1")
        if len(self.samples_per_class) != self.num_classes:
            raise ValueError("samples_per_class must list one count per class")
        for c, count in enumerate(self.samples_per_class):
            if count < 1:
                raise ValueError(f"class {c} needs at least 1 sample, got {count}")
        if not self.class_separation > 0:
            raise ValueError("class_separation must be positive")
        if not self.noise_scale > 0:
            raise ValueError("noise_scale must be positive")


def _format_feature(x: float) -> str:
    # %.17g keeps enough digits for an exact float64 round trip
    return format(x, ".17g")


def save_csv(ds: FeatureDataset, path) -> None:
    """Write the dataset CSV: class directive, header, one row per sample."""
    header = ",".join(f"f{j}" for j in range(ds.feature_dim)) + ",label"
    lines = [f"{_CLASS_DIRECTIVE}{ds.num_classes}", header]
    for row, label in zip(ds.features, ds.labels):
        lines.append(",".join(_format_feature(x) for x in row) + f",{label}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_csv(path) -> FeatureDataset:
    """Read a dataset CSV written by :func:`save_csv` or by hand.

    Layout: optional first line ``# classes=K``, then a header naming the
    feature columns ``f0..f{D-1}`` plus ``label``, then data rows. Malformed
    rows raise ValueError naming the 1-based physical line number.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    lineno = 0
    declared_classes = None

    if lines and lines[0].startswith("#"):
        lineno = 1
        if lines[0].startswith(_CLASS_DIRECTIVE):
            raw = lines[0][len(_CLASS_DIRECTIVE):].strip()
            try:
                declared_classes = int(raw)
            except ValueError:
                raise ValueError(f"line 1: bad class directive {lines[0]!r}") from None
            if declared_classes < 2:
                raise ValueError("line 1: declared class count must be at least 2")

    if lineno >= len(lines):
        raise ValueError(f"{path}: missing header row")
    header = lines[lineno].split(",")
    lineno += 1
    if len(header) < 2 or header[-1] != "label":
        raise ValueError(f"line {lineno}: header must end with a 'label' column")
    dim = len(header) - 1
    expected = [f"f{j}" for j in range(dim)]
    if header[:-1] != expected:
        raise ValueError(f"line {lineno}: feature columns must be named f0..f{dim - 1}")

    features: list[list[float]] = []
    labels: list[int] = []
    for raw_line in lines[lineno:]:
        lineno += 1
        if not raw_line.strip():
            continue
        fields = raw_line.split(",")
        if len(fields) != dim + 1:
            raise ValueError(
                f"line {lineno}: expected {dim + 1} fields, got {len(fields)}"
            )
        row = []
        for j, field in enumerate(fields[:-1]):
            try:
                value = float(field)
            except ValueError:
                raise ValueError(
                    f"line {lineno}: non-numeric feature value {field!r}"
                ) from None
            if not np.isfinite(value):
                raise ValueError(f"line {lineno}: non-finite feature value {field!r}")
            row.append(value)
        try:
            label = int(fields[-1])
        except ValueError:
            raise ValueError(
                f"line {lineno}: non-integer label {fields[-1]!r}"
            ) from None
        if label < 0:
            raise ValueError(f"line {lineno}: negative label {label}")
        if declared_classes is not None and label >= declared_classes:
            raise ValueError(
                f"line {lineno}: label {label} exceeds declared classes {declared_classes}"
            )
        features.append(row)
        labels.append(label)

    if not features:
        raise ValueError(f"{path}: no data rows")
    label_arr = np.array(labels, dtype=np.int64)
    num_classes = declared_classes if declared_classes is not None else int(label_arr.max()) + 1
    return FeatureDataset(np.array(features, dtype=np.float64), label_arr, num_classes)


def _largest_remainder_counts(n: int, fractions: tuple[float, ...]) -> list[int]:
    """Split n into len(fractions) integer counts by largest-remainder rounding.

    Guarantees every part gets at least one when n >= len(fractions), taking
    from the currently largest part (lowest index on ties).
    """
    quotas = [f * n for f in fractions]
    counts = [int(np.floor(q)) for q in quotas]
    remainder = n - sum(counts)
    order = sorted(range(len(fractions)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:remainder]:
        counts[i] += 1
    if n >= len(fractions):
        # With n >= #parts and counts summing to n, any zero part implies some
        # other part holds >= 2, so each transfer strictly reduces the number
        # of zeros and the loop terminates.
        while min(counts) == 0:
            recipient = counts.index(0)
            donor = int(np.argmax(counts))
            counts[donor] -= 1
            counts[recipient] += 1
    return counts


def stratified_split(
    ds: FeatureDataset, ratios: SplitRatios, seed: int
) -> tuple[FeatureDataset, FeatureDataset, FeatureDataset]:
    """Shuffle each class with a seeded RNG and partition it by the ratios.

    Per-class counts follow largest-remainder rounding, with every split
    receiving at least one sample of every class. The three outputs are
    disjoint and their union is the input.
    """
    counts = ds.class_counts()
    for c, count in enumerate(counts):
        if count < 3:
            raise ValueError(
                f"class {c} has only {int(count)} samples; need at least 3 to split"
            )
    rng = np.random.default_rng(seed)
    fractions = ratios.as_tuple()
    parts: list[list[np.ndarray]] = [[], [], []]
    for c in range(ds.num_classes):
        idx = np.flatnonzero(ds.labels == c)
        idx = rng.permutation(idx)
        n_train, n_val, _ = _largest_remainder_counts(idx.size, fractions)
        parts[0].append(idx[:n_train])
        parts[1].append(idx[n_train : n_train + n_val])
        parts[2].append(idx[n_train + n_val :])
    out = []
    for bucket in parts:
        sel = np.concatenate(bucket)
        out.append(FeatureDataset(ds.features[sel], ds.labels[sel], ds.num_classes))
    return out[0], out[1], out[2]


def smote_oversample(
    ds: FeatureDataset,
    target_counts,
    k_neighbors: int = 5,
    seed: int = 0,
) -> FeatureDataset:
    """Grow minority classes by interpolating between same-class neighbors.

    Each synthetic point is x + u * (x_nn - x) for a random class member x,
    one of its k nearest same-class neighbors x_nn (Euclidean), and
    u ~ Uniform(0, 1). Originals are kept; per-class output counts equal
    target_counts exactly.
    """
    target_counts = np.asarray(target_counts, dtype=np.int64)
    if target_counts.shape != (ds.num_classes,):
        raise ValueError("target_counts must list one count per class")
    if k_neighbors < 1:
        raise ValueError("k_neighbors must be at least 1")
    current = ds.class_counts()
    for c in range(ds.num_classes):
        if target_counts[c] < current[c]:
            raise ValueError(
                f"class {c}: target {int(target_counts[c])} below current count {int(current[c])}"
            )
        if target_counts[c] > current[c] and current[c] < 2:
            raise ValueError(f"class {c} needs at least 2 samples to synthesize from")

    rng = np.random.default_rng(seed)
    new_rows: list[np.ndarray] = []
    new_labels: list[int] = []
    for c in range(ds.num_classes):
        need = int(target_counts[c] - current[c])
        if need == 0:
            continue
        members = ds.features[ds.labels == c]
        n_c = members.shape[0]
        sq = (members**2).sum(axis=1)
        dist = np.maximum(sq[:, None] + sq[None, :] - 2.0 * members @ members.T, 0.0)
        np.fill_diagonal(dist, np.inf)
        k_eff = min(k_neighbors, n_c - 1)
        neighbors = np.argsort(dist, axis=1, kind="stable")[:, :k_eff]
        for _ in range(need):
            i = int(rng.integers(n_c))
            j = int(neighbors[i, rng.integers(k_eff)])
            u = rng.random()
            new_rows.append(members[i] + u * (members[j] - members[i]))
            new_labels.append(c)

    if not new_rows:
        return ds
    features = np.vstack([ds.features, np.array(new_rows)])
    labels = np.concatenate([ds.labels, np.array(new_labels, dtype=np.int64)])
    return FeatureDataset(features, labels, ds.num_classes)


def generate_synthetic(cfg: SyntheticConfig, seed: int) -> FeatureDataset:
    """Sample the blob dataset described by cfg, deterministically per seed.

    Class means are drawn first (uniform direction scaled to the separation
    radius), then per-class samples, so the class geometry for a given seed
    does not depend on the sample counts.
    """
    rng = np.random.default_rng(seed)
    means = np.empty((cfg.num_classes, cfg.feature_dim))
    for c in range(cfg.num_classes):
        direction = rng.standard_normal(cfg.feature_dim)
        direction /= np.linalg.norm(direction)
        means[c] = cfg.class_separation * direction
    blocks = []
    labels = []
    for c in range(cfg.num_classes):
        n_c = cfg.samples_per_class[c]
        blocks.append(means[c] + cfg.noise_scale * rng.standard_normal((n_c, cfg.feature_dim)))
        labels.append(np.full(n_c, c, dtype=np.int64))
    return FeatureDataset(np.vstack(blocks), np.concatenate(labels), cfg.num_classes)
