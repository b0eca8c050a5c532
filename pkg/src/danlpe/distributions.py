"""Probability vectors, confusion matrices and their plug-in estimators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SUM_TOL = 1e-9
RENORM_TOL = 1e-6


def _as_class_indices(values, L: int, name: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if arr.size == 0:
        raise ValueError("empty sample set")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise ValueError(f"{name} must hold integer class indices")
        arr = arr.astype(np.int64)
    if arr.min() < 0 or arr.max() >= L:
        raise ValueError(f"{name} contains a class index outside [0, {L})")
    return arr


@dataclass(frozen=True)
class SimplexVector:
    """Probability vector over ``L`` classes.

    Small float drift (up to 1e-6 in the total) is renormalised away on
    construction; anything larger is rejected.
    """

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probability vector must be a non-empty 1-d array")
        if not np.all(np.isfinite(p)):
            raise ValueError("probability vector has non-finite entries")
        if p.min() < 0:
            raise ValueError(f"negative probability {p.min():.3g}")
        total = p.sum()
        if abs(total - 1.0) > RENORM_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        if abs(total - 1.0) > SUM_TOL:
            p = p / total
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def L(self) -> int:
        return self.probs.size

    @classmethod
    def uniform(cls, L: int) -> SimplexVector:
        return cls(np.full(L, 1.0 / L))

    def __array__(self, dtype=None, copy=None):
        return self.probs if dtype is None else self.probs.astype(dtype)

    def __len__(self):
        return self.L

    def __getitem__(self, i):
        return self.probs[i]

    def tolist(self) -> list[float]:
        return self.probs.tolist()


@dataclass(frozen=True)
class JointConfusion:
    """Joint frequencies ``cells[i, j] ~ p(y=i, yhat=j)``."""

    cells: np.ndarray
    count: int

    def __post_init__(self):
        c = np.array(self.cells, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("joint confusion must be a square matrix")
        if c.min() < 0:
            raise ValueError("joint confusion has negative cells")
        if abs(c.sum() - 1.0) > SUM_TOL:
            raise ValueError(f"joint confusion sums to {c.sum()!r}, not 1")
        c.setflags(write=False)
        object.__setattr__(self, "cells", c)

    @property
    def L(self) -> int:
        return self.cells.shape[0]


@dataclass(frozen=True)
class RowConditional:
    """Row-normalised confusion ``rows[i, j] ~ p(yhat=j | y=i)``."""

    rows: np.ndarray

    def __post_init__(self):
        r = np.array(self.rows, dtype=np.float64)
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise ValueError("row-conditional matrix must be square")
        if r.min() < 0 or r.max() > 1:
            raise ValueError("row-conditional entries must lie in [0, 1]")
        if np.max(np.abs(r.sum(axis=1) - 1.0)) > SUM_TOL:
            raise ValueError("row-conditional rows must each sum to 1")
        r.setflags(write=False)
        object.__setattr__(self, "rows", r)

    @property
    def L(self) -> int:
        return self.rows.shape[0]

    @property
    def response_matrix(self) -> np.ndarray:
        """Matrix with entry ``(j, i) = p(yhat=j | y=i)``; column i is the
        classifier's response to true class i."""
        return self.rows.T


def estimate_joint_confusion(labels, predictions, L: int) -> JointConfusion:
    """Empirical joint distribution of (true label, predicted label)."""
    y = _as_class_indices(labels, L, "labels")
    yhat = _as_class_indices(predictions, L, "predictions")
    if y.size != yhat.size:
        raise ValueError("labels and predictions differ in length")
    counts = np.bincount(y * L + yhat, minlength=L * L).reshape(L, L)
    return JointConfusion(counts / y.size, int(y.size))


def row_normalize(joint: JointConfusion) -> RowConditional:
    row_sums = joint.cells.sum(axis=1)
    for i, s in enumerate(row_sums):
        if s <= 0:
            raise ValueError(f"class {i} absent from sample")
    rows = joint.cells / row_sums[:, None]
    # exact unit rows despite the division
    rows = rows / rows.sum(axis=1, keepdims=True)
    return RowConditional(np.clip(rows, 0.0, 1.0))


def prediction_histogram(predictions, L: int) -> SimplexVector:
    """Fraction of predictions falling in each class."""
    yhat = _as_class_indices(predictions, L, "predictions")
    return SimplexVector(np.bincount(yhat, minlength=L) / yhat.size)


def empirical_prior(labels, L: int) -> SimplexVector:
    """Class frequencies of a labelled sample."""
    y = _as_class_indices(labels, L, "labels")
    return SimplexVector(np.bincount(y, minlength=L) / y.size)
