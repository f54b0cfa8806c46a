"""Activity sequences, temporal aggregation, weighted distance and centroids.

Sequences are stored as integer label codes (``Activity`` values) in an
``int8`` array of shape ``(N, T)``.  An aggregate matrix of a sequence at
interval ``a`` is a float array of shape ``(T // a, 4)`` whose entry
``(i, act)`` is the fraction of minutes in interval ``i`` labelled ``act``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

ROW_SUM_TOL = 1e-9
MINUTES_PER_DAY = 1440
MINUTES_PER_HOUR = 60


class Activity(IntEnum):
    STATIONARY = 0
    WALKING = 1
    RUNNING = 2
    MISSING = 3

    @property
    def symbol(self) -> str:
        return SYMBOLS[self]


SYMBOLS = ("S", "W", "R", "M")
N_ACTIVITIES = len(SYMBOLS)
_CODE_OF = {s: i for i, s in enumerate(SYMBOLS)}


class DataValidationError(ValueError):
    """Input data does not satisfy a dataset or matrix contract."""


@dataclass(frozen=True)
class ActivitySequence:
    subject_id: str
    labels: np.ndarray

    @property
    def epoch_minutes(self) -> int:
        return int(self.labels.shape[0])

    @classmethod
    def from_symbols(cls, subject_id: str, symbols: Iterable[str]) -> "ActivitySequence":
        return cls(subject_id, encode(symbols))

    def symbols(self) -> str:
        return decode(self.labels)


@dataclass(frozen=True)
class Dataset:
    """A collection of equal-length sequences.

    ``codes[i]`` is the label trace of subject ``ids[i]``.
    """

    ids: tuple[str, ...]
    codes: np.ndarray

    def __post_init__(self):
        codes = np.asarray(self.codes)
        if codes.ndim != 2:
            raise DataValidationError(f"codes must be 2-D (N, T), got shape {codes.shape}")
        if len(self.ids) != codes.shape[0]:
            raise DataValidationError(
                f"{len(self.ids)} subject ids for {codes.shape[0]} sequences"
            )
        if codes.size and (codes.min() < 0 or codes.max() >= N_ACTIVITIES):
            raise DataValidationError("label codes must lie in 0..3")
        codes = codes.astype(np.int8, copy=False)
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "ids", tuple(self.ids))

    def __len__(self) -> int:
        return self.codes.shape[0]

    def __getitem__(self, i: int) -> ActivitySequence:
        return ActivitySequence(self.ids[i], self.codes[i])

    @property
    def epoch_minutes(self) -> int:
        return int(self.codes.shape[1])

    def subset(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=np.intp)
        return Dataset(tuple(self.ids[i] for i in idx), self.codes[idx])

    @classmethod
    def from_sequences(cls, seqs: Sequence[ActivitySequence]) -> "Dataset":
        if not seqs:
            return cls((), np.zeros((0, 0), dtype=np.int8))
        lengths = {s.epoch_minutes for s in seqs}
        if len(lengths) != 1:
            raise DataValidationError(f"sequences have differing lengths {sorted(lengths)}")
        return cls(tuple(s.subject_id for s in seqs), np.stack([s.labels for s in seqs]))


def encode(symbols: Iterable[str]) -> np.ndarray:
    try:
        return np.array([_CODE_OF[s] for s in symbols], dtype=np.int8)
    except KeyError as exc:
        raise DataValidationError(f"unknown activity label {exc.args[0]!r}") from None


def decode(codes: np.ndarray) -> str:
    return "".join(SYMBOLS[c] for c in codes)


def _check_interval(T: int, interval_minutes: int) -> None:
    if interval_minutes <= 0 or T % interval_minutes != 0:
        raise ValueError(
            f"aggregation interval {interval_minutes} does not divide sequence length T={T}"
        )


def aggregate(seq, interval_minutes: int) -> np.ndarray:
    """Per-interval activity fractions.

    Accepts an ``ActivitySequence``, a 1-D code array (returns ``(T/a, 4)``)
    or a 2-D batch of codes / a ``Dataset`` (returns ``(N, T/a, 4)``).
    """
    if isinstance(seq, (ActivitySequence, Dataset)):
        codes = seq.labels if isinstance(seq, ActivitySequence) else seq.codes
    else:
        codes = np.asarray(seq)
    T = codes.shape[-1]
    _check_interval(T, interval_minutes)
    blocks = codes.reshape(codes.shape[:-1] + (T // interval_minutes, interval_minutes))
    counts = np.stack(
        [np.count_nonzero(blocks == c, axis=-1) for c in range(N_ACTIVITIES)], axis=-1
    )
    return counts / float(interval_minutes)


def reaggregate(agg: np.ndarray, factor: int) -> np.ndarray:
    """Coarsen an aggregate matrix by averaging ``factor`` consecutive rows."""
    n_rows = agg.shape[-2]
    if factor <= 0 or n_rows % factor != 0:
        raise ValueError(f"factor {factor} does not divide {n_rows} intervals")
    shape = agg.shape[:-2] + (n_rows // factor, factor, agg.shape[-1])
    return agg.reshape(shape).mean(axis=-2)


def as_weights(w: Sequence[float] | None) -> np.ndarray:
    """Validate a weight vector; ``None`` gives equal unit weights."""
    if w is None:
        return np.ones(N_ACTIVITIES)
    arr = np.asarray(w, dtype=float)
    if arr.shape != (N_ACTIVITIES,):
        raise ValueError(f"weights need {N_ACTIVITIES} entries, got {arr.shape}")
    if np.any(arr < 0) or not np.any(arr > 0) or not np.all(np.isfinite(arr)):
        raise ValueError(f"weights must be finite, non-negative and not all zero: {arr}")
    return arr


def dist_euc(X: np.ndarray, Y: np.ndarray, w: Sequence[float] | None = None) -> float:
    """Weighted sum over activity channels of the per-channel Euclidean norm."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape != Y.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {Y.shape}")
    return float(dist_to(X[None], Y, as_weights(w))[0])


def dist_to(points: np.ndarray, ref: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``dist_euc`` from each of ``points`` (n, I, 4) to ``ref`` (I, 4)."""
    diff = points - ref
    # fixed accumulation order (intervals, then channels) so exact ties stay exact
    norms = np.sqrt((diff * diff).sum(axis=1))
    total = w[0] * norms[:, 0]
    for c in range(1, norms.shape[1]):
        total = total + w[c] * norms[:, c]
    return total


def centroid_of(members) -> np.ndarray:
    """Elementwise mean of a non-empty stack of aggregate matrices."""
    arr = np.asarray(members, dtype=float)
    if arr.ndim < 1 or arr.shape[0] == 0:
        raise ValueError("centroid of an empty set is undefined")
    return arr.mean(axis=0)


def check_distribution_rows(values: np.ndarray, tol: float = ROW_SUM_TOL) -> None:
    if np.any(values < -tol) or np.any(values > 1 + tol):
        raise DataValidationError("entries outside [0, 1]")
    if not np.allclose(values.sum(axis=-1), 1.0, rtol=0, atol=tol):
        raise DataValidationError("rows do not sum to 1")


def read_dataset(path: str | Path) -> Dataset:
    """Load a dataset CSV (``subject_id,m0,...,m{T-1}``)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataValidationError(f"{path}: empty file") from None
        if not header or header[0] != "subject_id":
            raise DataValidationError(f"{path}: header must start with subject_id")
        T = len(header) - 1
        expected = [f"m{i}" for i in range(T)]
        if header[1:] != expected:
            raise DataValidationError(f"{path}: label columns must be m0..m{T - 1}")
        ids, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != T + 1:
                raise DataValidationError(
                    f"{path}:{lineno}: expected {T + 1} cells, got {len(row)}"
                )
            ids.append(row[0])
            rows.append(encode(row[1:]))
    if len(set(ids)) != len(ids):
        raise DataValidationError(f"{path}: duplicate subject ids")
    codes = np.stack(rows) if rows else np.zeros((0, T), dtype=np.int8)
    return Dataset(tuple(ids), codes)


def write_dataset(ds: Dataset, path: str | Path) -> None:
    T = ds.epoch_minutes
    sym = np.array(SYMBOLS)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(["subject_id"] + [f"m{i}" for i in range(T)]) + "\n")
        for sid, row in zip(ds.ids, ds.codes):
            fh.write(sid + "," + ",".join(sym[row]) + "\n")
