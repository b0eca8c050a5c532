"""Datasets, the synthetic label-shift generator and JSON-lines serialization."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .distributions import SimplexVector


@dataclass
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    L: int
    ids: list[str] | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError("features must be an n x d matrix")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("one label per feature row required")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.L):
            raise ValueError(f"labels outside [0, {self.L})")
        if self.ids is not None and len(self.ids) != len(self.labels):
            raise ValueError("one id per row required")

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def __len__(self):
        return self.features.shape[0]

    def subset(self, idx) -> LabeledDataset:
        ids = None if self.ids is None else [self.ids[i] for i in idx]
        return LabeledDataset(self.features[idx], self.labels[idx], self.L, ids)


@dataclass
class UnlabeledDataset:
    """Target-domain features.

    ``hidden_labels`` exist only for scoring synthetic or benchmark runs and
    are never read by training or estimation code.
    """

    features: np.ndarray
    L: int
    hidden_labels: np.ndarray | None = None
    ids: list[str] | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError("features must be an n x d matrix")
        if self.hidden_labels is not None:
            self.hidden_labels = np.asarray(self.hidden_labels, dtype=np.int64)
            if self.hidden_labels.shape != (self.features.shape[0],):
                raise ValueError("one hidden label per feature row required")

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def __len__(self):
        return self.features.shape[0]


@dataclass
class SyntheticSpec:
    """Two domains sharing isotropic Gaussian class conditionals.

    Only the class priors differ between source (``alpha``) and target
    (``beta``), so p(x|y) is identical across domains by construction.
    """

    class_means: np.ndarray
    alpha: SimplexVector
    beta: SimplexVector
    n_source: int
    n_target: int
    class_covariance_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.class_means = np.asarray(self.class_means, dtype=np.float64)
        if not isinstance(self.alpha, SimplexVector):
            self.alpha = SimplexVector(self.alpha)
        if not isinstance(self.beta, SimplexVector):
            self.beta = SimplexVector(self.beta)
        if self.class_means.ndim != 2 or self.class_means.shape[0] != self.L:
            raise ValueError("class_means must be an L x d matrix")
        if self.alpha.L != self.L or self.beta.L != self.L:
            raise ValueError("priors must have one entry per class")
        if self.class_covariance_scale <= 0:
            raise ValueError("class_covariance_scale must be positive")
        if self.n_source < 1 or self.n_target < 1:
            raise ValueError("sample sizes must be positive")

    @property
    def L(self) -> int:
        return self.class_means.shape[0]

    @property
    def d(self) -> int:
        return self.class_means.shape[1]


def make_synthetic_spec(L=2, d=10, alpha=(0.5, 0.5), beta=(0.9, 0.1), n_source=4000,
                        n_target=4000, separation=2.0, scale=1.0, seed=0) -> SyntheticSpec:
    """Spec with class means on orthogonal directions, ``separation`` apart pairwise."""
    if L > d:
        raise ValueError("need d >= L to place class means orthogonally")
    rng = np.random.default_rng([seed, 1])
    q, _ = np.linalg.qr(rng.normal(size=(d, L)))
    means = q.T * (separation / np.sqrt(2.0))
    return SyntheticSpec(means, SimplexVector(alpha), SimplexVector(beta),
                         n_source, n_target, scale, seed)


def generate_synthetic(spec: SyntheticSpec) -> tuple[LabeledDataset, UnlabeledDataset]:
    rng = np.random.default_rng(spec.seed)

    def draw(prior, n, prefix):
        y = rng.choice(spec.L, size=n, p=prior.probs)
        x = spec.class_means[y] + spec.class_covariance_scale * rng.normal(size=(n, spec.d))
        return x, y, [f"{prefix}-{i}" for i in range(n)]

    xs, ys, ids_s = draw(spec.alpha, spec.n_source, "source")
    xt, yt, ids_t = draw(spec.beta, spec.n_target, "target")
    return LabeledDataset(xs, ys, spec.L, ids_s), UnlabeledDataset(xt, spec.L, yt, ids_t)


def split_validation(dataset: LabeledDataset, fraction: float = 0.1,
                     seed: int = 0) -> tuple[LabeledDataset, LabeledDataset]:
    """Stratified hold-out split; every class keeps at least one training row."""
    if not 0 < fraction < 1:
        raise ValueError("validation fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    train_idx, val_idx = [], []
    for c in range(dataset.L):
        idx = np.flatnonzero(dataset.labels == c)
        idx = idx[rng.permutation(idx.size)]
        n_val = min(int(round(fraction * idx.size)), max(idx.size - 1, 0))
        val_idx.append(idx[:n_val])
        train_idx.append(idx[n_val:])
    train_idx = np.sort(np.concatenate(train_idx))
    val_idx = np.sort(np.concatenate(val_idx))
    return dataset.subset(train_idx), dataset.subset(val_idx)


def label_by_rating(mean_rating: float) -> int | None:
    """1 below 3.4, 0 above 3.6, ``None`` (filtered out) inside the gap."""
    if mean_rating < 3.4:
        return 1
    if mean_rating > 3.6:
        return 0
    return None


# --- JSON-lines dataset files -------------------------------------------------


@dataclass
class DatasetFile:
    dataset: LabeledDataset | UnlabeledDataset
    domain: str
    meta: dict = field(default_factory=dict)


def save_dataset(dataset: LabeledDataset | UnlabeledDataset, path, domain: str = "",
                 meta: dict | None = None) -> None:
    """Write a header record then one record per entity.

    Target datasets store their hidden labels under ``label``; the header's
    ``labeled`` flag tells :func:`load_dataset` which type to rebuild.
    """
    labeled = isinstance(dataset, LabeledDataset)
    labels = dataset.labels if labeled else dataset.hidden_labels
    ids = dataset.ids or [str(i) for i in range(len(dataset))]
    header = {"L": dataset.L, "d": dataset.d, "domain": domain, "labeled": labeled,
              "n": len(dataset), **(meta or {})}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for i in range(len(dataset)):
            rec = {"id": ids[i]}
            if labels is not None:
                rec["label"] = int(labels[i])
            rec["features"] = dataset.features[i].tolist()
            fh.write(json.dumps(rec) + "\n")


def load_dataset(path) -> DatasetFile:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty dataset file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}:1: malformed header ({exc})") from None
    for key in ("L", "d"):
        if not isinstance(header.get(key), int):
            raise ValueError(f"{path}:1: header field {key!r} missing or not an integer")
    L, d = header["L"], header["d"]
    ids, labels, rows = [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{lineno}: malformed record ({exc})") from None
        feats = rec.get("features")
        if not isinstance(feats, list) or len(feats) != d:
            raise ValueError(f"{path}:{lineno}: field 'features' must be a list of {d} numbers")
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in feats):
            raise ValueError(f"{path}:{lineno}: field 'features' holds a non-numeric value")
        if "label" in rec:
            lab = rec["label"]
            if not isinstance(lab, int) or isinstance(lab, bool) or not 0 <= lab < L:
                raise ValueError(f"{path}:{lineno}: field 'label' must be an integer in [0, {L})")
            labels.append(lab)
        ids.append(str(rec.get("id", lineno - 2)))
        rows.append(feats)
    if labels and len(labels) != len(rows):
        raise ValueError(f"{path}: labels present on some records but not others")
    x = np.array(rows, dtype=np.float64).reshape(len(rows), d)
    meta = {k: v for k, v in header.items() if k not in ("L", "d", "domain", "labeled", "n")}
    if header.get("labeled", bool(labels)):
        if not labels:
            raise ValueError(f"{path}: labeled dataset without labels")
        ds = LabeledDataset(x, np.array(labels), L, ids)
    else:
        ds = UnlabeledDataset(x, L, np.array(labels) if labels else None, ids)
    return DatasetFile(ds, header.get("domain", ""), meta)
