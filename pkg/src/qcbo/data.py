"""Dataset ingestion, leakage-free preprocessing and fixed splits."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

EPSILON = 1e-8


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: list[str] | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features must be (N, D) with one label per row")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain NaN or Inf")
        if not np.all(np.isin(self.labels, (0, 1))):
            raise ValueError("labels must be binary (0/1)")

    def __len__(self) -> int:
        return self.labels.shape[0]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], self.feature_names)


@dataclass(frozen=True)
class SplitSpec:
    test_size: int = 2000
    val_size: int = 1000
    seed: int = 0


@dataclass
class Preprocessor:
    selected_indices: list[int]
    lower: np.ndarray
    upper: np.ndarray
    epsilon: float = EPSILON
    f_scores: np.ndarray | None = field(default=None, repr=False)

    def transform(self, features: np.ndarray) -> np.ndarray:
        """Select features and min-max scale to angles in [0, pi] (clamped)."""
        x = np.asarray(features, dtype=float)[..., self.selected_indices]
        return np.clip(angle_scale(x, self.lower, self.upper, self.epsilon), 0.0, math.pi)

    def to_dict(self) -> dict:
        return {
            "selected_indices": [int(i) for i in self.selected_indices],
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "epsilon": self.epsilon,
        }


def angle_scale(x, lower, upper, epsilon: float = EPSILON):
    """Unclamped min-max scaling onto [0, pi]."""
    return math.pi * (np.asarray(x, dtype=float) - lower) / (upper - lower + epsilon)


def load_csv(path: str | Path, label_column: str) -> Dataset:
    """Read a numeric CSV with a header row; rows with missing or non-numeric values are dropped."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such CSV file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if label_column not in header:
            raise ValueError(f"label column {label_column!r} not in header {header}")
        li = header.index(label_column)
        names = [h for i, h in enumerate(header) if i != li]
        rows, labels, dropped = [], [], 0
        for row in reader:
            if not row:
                continue
            try:
                vals = [float(v) for v in row]
            except ValueError:
                dropped += 1
                continue
            if len(vals) != len(header) or not all(math.isfinite(v) for v in vals):
                dropped += 1
                continue
            labels.append(vals[li])
            rows.append([v for i, v in enumerate(vals) if i != li])
    if dropped:
        log.warning("dropped %d row(s) with missing or non-numeric values from %s", dropped, path)
    labels = np.asarray(labels)
    if not np.all(np.isin(labels, (0.0, 1.0))):
        bad = sorted(set(labels[~np.isin(labels, (0.0, 1.0))].tolist()))
        raise ValueError(f"label column {label_column!r} is not binary; found {bad[:5]}")
    features = np.asarray(rows, dtype=float).reshape(len(rows), len(names))
    return Dataset(features, labels.astype(int), names)


def synth_generate(
    n: int,
    d: int,
    informative: int,
    seed: int = 0,
    margin: float = 2.0,
    noise: float = 1.0,
    task: str = "linear",
) -> Dataset:
    """Balanced two-class Gaussian-mixture task.

    ``task="linear"``: class 1 is shifted by ``margin`` on the first
    ``informative`` coordinates. ``task="parity"``: each class is a mixture of
    corners of the informative hypercube (coordinates at ``+-margin/2``) whose
    sign pattern has even (class 0) or odd (class 1) parity; class means
    coincide, so no single feature is linearly informative on its own.
    Remaining coordinates are pure noise.
    """
    if informative > d:
        raise ValueError(f"informative={informative} exceeds d={d}")
    rng = np.random.default_rng(seed)
    labels = np.zeros(n, dtype=int)
    labels[n // 2:] = 1
    rng.shuffle(labels)
    x = rng.normal(0.0, noise, size=(n, d))
    if task == "linear":
        x[:, :informative] += margin * labels[:, None]
    elif task == "parity":
        if informative:
            signs = rng.choice((-1.0, 1.0), size=(n, informative))
            odd = (signs < 0).sum(axis=1) % 2
            fix = odd != labels
            signs[fix, 0] *= -1.0
            x[:, :informative] += 0.5 * margin * signs
    else:
        raise ValueError(f"unknown synthetic task {task!r}")
    return Dataset(x, labels, [f"f{i}" for i in range(d)])


def anova_f(features: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Two-group one-way ANOVA F statistic per feature.

    Zero within-group variance gives +inf, unless the between-group term is
    also zero (a constant feature), which gives 0.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels)
    groups = [x[y == c] for c in (0, 1)]
    if any(len(g) == 0 for g in groups):
        raise ValueError("both classes must be present")
    n = x.shape[0]
    grand = x.mean(axis=0)
    ss_between = sum(len(g) * (g.mean(axis=0) - grand) ** 2 for g in groups)
    ss_within = sum(((g - g.mean(axis=0)) ** 2).sum(axis=0) for g in groups)
    ms_between = ss_between / 1.0
    ms_within = ss_within / (n - 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = ms_between / ms_within
    f = np.where(ms_within > 0, f, np.where(ms_between > 0, np.inf, 0.0))
    return f


def anova_f_select(features: np.ndarray, labels: np.ndarray, k: int) -> list[int]:
    """Top-k feature indices by ANOVA F, ties broken by lower index."""
    if k > np.asarray(features).shape[1]:
        raise ValueError(f"cannot select {k} of {np.asarray(features).shape[1]} features")
    f = anova_f(features, labels)
    order = sorted(range(len(f)), key=lambda i: (-f[i], i))
    return order[:k]


def fit_preprocessor(train: Dataset, k: int, epsilon: float = EPSILON) -> Preprocessor:
    """Fit feature selection and scaling bounds on the train pool only."""
    f = anova_f(train.features, train.labels)
    idx = sorted(range(len(f)), key=lambda i: (-f[i], i))[:k]
    if len(idx) < k:
        raise ValueError(f"cannot select {k} of {len(f)} features")
    sel = train.features[:, idx]
    return Preprocessor(idx, sel.min(axis=0), sel.max(axis=0), epsilon, f)


def make_splits(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Stratified, seed-deterministic (train_pool, val, test) partition."""
    n = len(dataset)
    if spec.test_size < 1 or spec.val_size < 1 or spec.test_size + spec.val_size >= n:
        raise ValueError(f"infeasible split sizes test={spec.test_size} val={spec.val_size} for N={n}")
    rng = np.random.default_rng(spec.seed)
    y = dataset.labels
    test_idx, val_idx, pool_idx = [], [], []
    frac_test = spec.test_size / n
    frac_val = spec.val_size / n
    classes = [np.flatnonzero(y == c) for c in (0, 1)]
    # allocate per-class counts by largest remainder so totals are exact
    n_test = _allocate(spec.test_size, [len(c) for c in classes], frac_test)
    n_val = _allocate(spec.val_size, [len(c) for c in classes], frac_val)
    for members, nt, nv in zip(classes, n_test, n_val):
        perm = rng.permutation(members)
        test_idx.append(perm[:nt])
        val_idx.append(perm[nt:nt + nv])
        pool_idx.append(perm[nt + nv:])
    parts = [np.sort(np.concatenate(p)) for p in (pool_idx, val_idx, test_idx)]
    return tuple(dataset.subset(p) for p in parts)


def _allocate(total: int, sizes: list[int], frac: float) -> list[int]:
    raw = [s * frac for s in sizes]
    out = [int(math.floor(r)) for r in raw]
    rem = sorted(range(len(sizes)), key=lambda i: (-(raw[i] - out[i]), i))
    for i in rem[: total - sum(out)]:
        out[i] += 1
    return out


def stratified_subset(dataset: Dataset, size: int, rng: np.random.Generator) -> Dataset:
    """Seeded class-proportional subsample (the whole set if ``size >= len``)."""
    n = len(dataset)
    if size >= n:
        return dataset
    classes = [np.flatnonzero(dataset.labels == c) for c in (0, 1)]
    counts = _allocate(size, [len(c) for c in classes], size / n)
    idx = np.concatenate([rng.choice(c, k, replace=False) for c, k in zip(classes, counts)])
    return dataset.subset(np.sort(idx))


@dataclass
class PreparedData:
    """Angle-scaled splits. The search path only ever receives :meth:`search_view`."""

    train: Dataset
    val: Dataset
    test: Dataset
    preprocessor: Preprocessor

    def search_view(self) -> "SearchData":
        return SearchData(self.train, self.val)


@dataclass
class SearchData:
    train: Dataset
    val: Dataset


def prepare(dataset: Dataset, spec: SplitSpec, k: int) -> PreparedData:
    pool, val, test = make_splits(dataset, spec)
    pre = fit_preprocessor(pool, k)

    def scale(ds):
        return Dataset(pre.transform(ds.features), ds.labels, [ds.feature_names[i] for i in pre.selected_indices]
                       if ds.feature_names else None)

    return PreparedData(scale(pool), scale(val), scale(test), pre)
