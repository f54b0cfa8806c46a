"""Synthetic activity corpora from per-subject, per-hour Markov chains."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    MINUTES_PER_HOUR,
    N_ACTIVITIES,
    SYMBOLS,
    Activity,
    Dataset,
    DataValidationError,
)

KL_SMOOTHING = 1e-9


class GenConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GenConfig:
    n_subjects: int
    hours: int = 336
    minutes_per_hour: int = MINUTES_PER_HOUR
    mix_prob: float = 0.01
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 <= self.mix_prob <= 1.0:
            raise GenConfigError(f"mix_prob must lie in [0, 1], got {self.mix_prob}")
        if self.n_subjects < 1:
            raise GenConfigError(f"n_subjects must be positive, got {self.n_subjects}")
        if self.hours < 1:
            raise GenConfigError(f"hours must be positive, got {self.hours}")
        if self.minutes_per_hour < 1:
            raise GenConfigError(f"minutes_per_hour must be positive, got {self.minutes_per_hour}")


@dataclass(frozen=True)
class MatrixSet:
    """Row-stochastic transition matrices indexed ``[subject, hour, from, to]``.

    ``start`` is the distribution of the very first label of a sequence.
    """

    subject_ids: tuple[str, ...]
    matrices: np.ndarray
    start: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrices, dtype=float)
        if m.ndim != 4 or m.shape[2:] != (N_ACTIVITIES, N_ACTIVITIES):
            raise DataValidationError(f"matrices must have shape (n, hours, 4, 4), got {m.shape}")
        if len(self.subject_ids) != m.shape[0]:
            raise DataValidationError("one subject id per matrix row is required")
        if np.any(m < 0) or not np.allclose(m.sum(axis=-1), 1.0, atol=1e-9):
            raise DataValidationError("transition matrix rows must be non-negative and sum to 1")
        object.__setattr__(self, "matrices", m)
        object.__setattr__(self, "start", np.asarray(self.start, dtype=float))

    @property
    def n_subjects(self) -> int:
        return self.matrices.shape[0]

    @property
    def hours(self) -> int:
        return self.matrices.shape[1]


def estimate_matrices(corpus: Dataset, minutes_per_hour: int = MINUTES_PER_HOUR) -> MatrixSet:
    """Add-one smoothed first-order transition frequencies per subject and hour."""
    if len(corpus) == 0:
        raise DataValidationError("cannot estimate matrices from an empty corpus")
    n, T = corpus.codes.shape
    if T % minutes_per_hour != 0:
        raise DataValidationError(f"sequence length {T} is not a multiple of {minutes_per_hour}")
    hours = T // minutes_per_hour
    blocks = corpus.codes.reshape(n, hours, minutes_per_hour).astype(np.intp)
    pair = blocks[:, :, :-1] * N_ACTIVITIES + blocks[:, :, 1:]
    counts = np.zeros((n, hours, N_ACTIVITIES * N_ACTIVITIES))
    for code in range(N_ACTIVITIES * N_ACTIVITIES):
        counts[:, :, code] = np.count_nonzero(pair == code, axis=-1)
    counts = counts.reshape(n, hours, N_ACTIVITIES, N_ACTIVITIES) + 1.0
    mats = counts / counts.sum(axis=-1, keepdims=True)
    start = np.bincount(corpus.codes[:, 0], minlength=N_ACTIVITIES) / n
    return MatrixSet(corpus.ids, mats, start)


def random_matrices(n_subjects: int, hours: int, seed: int = 0) -> MatrixSet:
    """Built-in randomized matrix family used when no seed corpus is given.

    Each subject has its own activity level, missing-data propensity and
    persistence.  Hour slots follow a day/night profile; each matrix mixes
    "stay" with a jump to the slot's target distribution, so the target is
    the chain's stationary distribution.
    """
    rng = np.random.default_rng(seed)
    hod = np.arange(hours) % 24
    awake = ((hod >= 8) & (hod < 23)).astype(float)
    evening = ((hod >= 17) & (hod < 21)).astype(float)

    level = rng.lognormal(0.0, 0.6, n_subjects)
    runner = rng.lognormal(-0.5, 0.8, n_subjects)
    missing = rng.beta(2.0, 10.0, n_subjects)
    stick = rng.uniform(0.80, 0.95, n_subjects)

    jitter = rng.lognormal(0.0, 0.3, (n_subjects, hours, N_ACTIVITIES))
    target = np.empty((n_subjects, hours, N_ACTIVITIES))
    target[..., Activity.STATIONARY] = 1.0
    target[..., Activity.WALKING] = level[:, None] * (0.015 + 0.08 * awake)
    target[..., Activity.RUNNING] = runner[:, None] * (0.002 + 0.02 * evening + 0.005 * awake)
    target[..., Activity.MISSING] = missing[:, None] * (1.0 + 0.8 * (1 - awake))
    target *= jitter
    target /= target.sum(axis=-1, keepdims=True)

    eye = np.eye(N_ACTIVITIES)
    s = stick[:, None, None, None]
    mats = s * eye + (1 - s) * target[:, :, None, :]
    ids = tuple(f"seed-{i}" for i in range(n_subjects))
    return MatrixSet(ids, mats, np.full(N_ACTIVITIES, 1.0 / N_ACTIVITIES))


def simulate(cfg: GenConfig, matrices: MatrixSet) -> Dataset:
    """Simulate ``cfg.n_subjects`` sequences of ``cfg.hours`` hours.

    Simulated subject ``i`` owns source matrices ``i mod n_source``.  For
    each hour, with probability ``cfg.mix_prob`` a uniformly chosen other
    source subject's matrix for that slot is used instead.  Each hour
    continues the chain from the previous hour's last label.
    """
    cfg.validate()
    if cfg.hours > matrices.hours:
        raise DataValidationError(
            f"matrices cover {matrices.hours} hour slots, {cfg.hours} requested"
        )
    n, H, M = cfg.n_subjects, cfg.hours, cfg.minutes_per_hour
    n_src = matrices.n_subjects
    owner = np.arange(n) % n_src

    src = np.empty((n, H), dtype=np.intp)
    first = np.empty(n, dtype=np.int8)
    u = np.empty((n, H * M))
    start_cum = np.cumsum(matrices.start)[:-1]
    for i, ss in enumerate(np.random.SeedSequence(cfg.seed).spawn(n)):
        rng = np.random.default_rng(ss)
        swap = rng.random(H) < cfg.mix_prob
        other = rng.integers(0, max(n_src - 1, 1), H)
        other = other + (other >= owner[i])
        src[i] = np.where(swap & (n_src > 1), other, owner[i])
        first[i] = np.count_nonzero(rng.random() >= start_cum)
        u[i] = rng.random(H * M)

    codes = np.empty((n, H * M), dtype=np.int8)
    rows = np.arange(n)
    state = first.astype(np.intp)
    t = 0
    for h in range(H):
        cum = np.cumsum(matrices.matrices[src[:, h], h], axis=-1)[:, :, :-1]
        for _ in range(M):
            if t > 0:
                state = np.count_nonzero(u[:, t, None] >= cum[rows, state], axis=-1)
            codes[:, t] = state
            t += 1
    return Dataset(tuple(f"sim-{i}" for i in range(n)), codes)


def marginal(dataset: Dataset | np.ndarray) -> np.ndarray:
    """Pooled label distribution across all subjects and minutes."""
    codes = dataset.codes if isinstance(dataset, Dataset) else np.asarray(dataset)
    return np.bincount(codes.ravel(), minlength=N_ACTIVITIES) / codes.size


def kl_divergence(P: Sequence[float], Q: Sequence[float]) -> float:
    """KL(P || Q) in nats, after adding 1e-9 to every entry and renormalising."""
    p = np.asarray(P, dtype=float)
    q = np.asarray(Q, dtype=float)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError(f"distributions must be 1-D of equal length: {p.shape}, {q.shape}")
    for name, d in (("P", p), ("Q", q)):
        if np.any(d < 0) or not np.isfinite(d).all() or abs(d.sum() - 1.0) > 1e-6:
            raise ValueError(f"{name} is not a probability distribution: {d}")
    p = (p + KL_SMOOTHING) / (1 + KL_SMOOTHING * p.size)
    q = (q + KL_SMOOTHING) / (1 + KL_SMOOTHING * q.size)
    return float(max(np.sum(p * np.log(p / q)), 0.0))


def active_fraction(dataset: Dataset | np.ndarray) -> np.ndarray:
    """Per-subject fraction of Walking or Running minutes."""
    codes = dataset.codes if isinstance(dataset, Dataset) else np.asarray(dataset)
    active = (codes == Activity.WALKING) | (codes == Activity.RUNNING)
    return active.mean(axis=1)


def linked_outcome(
    activity: np.ndarray, r: float, mean: float, sd: float, rng: np.random.Generator
) -> np.ndarray:
    """Linear-plus-noise outcome whose sample correlation with ``activity`` is ``r``.

    The noise is residualised against the activity, so the correlation
    holds exactly rather than in expectation.
    """
    if not -1.0 <= r <= 1.0:
        raise ValueError(f"target correlation must lie in [-1, 1], got {r}")
    x = np.asarray(activity, dtype=float)
    if x.size < 3 or np.std(x) == 0:
        raise ValueError("need at least 3 non-constant activity values")
    z = (x - x.mean()) / x.std()
    e = rng.standard_normal(x.size)
    e -= e.mean()
    e -= (e @ z) / (z @ z) * z
    e /= e.std()
    return mean + sd * (r * z + np.sqrt(1.0 - r * r) * e)


def synth_outcomes(
    dataset: Dataset,
    seed: int = 0,
    r_flourishing: float = 0.15,
    r_cgpa: float = -0.29,
) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[1])
    act = active_fraction(dataset)
    return {
        "cgpa": linked_outcome(act, r_cgpa, 3.2, 0.4, rng),
        "flourishing": linked_outcome(act, r_flourishing, 44.0, 6.0, rng),
    }


def write_matrices(ms: MatrixSet, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["subject_id", "hour", "from", "to", "prob"])
        for i, sid in enumerate(ms.subject_ids):
            for h in range(ms.hours):
                for a in range(N_ACTIVITIES):
                    for b in range(N_ACTIVITIES):
                        wr.writerow([sid, h, SYMBOLS[a], SYMBOLS[b], repr(float(ms.matrices[i, h, a, b]))])


def read_matrices(path: str | Path) -> MatrixSet:
    code = {s: i for i, s in enumerate(SYMBOLS)}
    entries: dict[str, dict[int, np.ndarray]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                h = int(row["hour"])
                a, b = code[row["from"]], code[row["to"]]
                p = float(row["prob"])
            except (KeyError, ValueError) as exc:
                raise DataValidationError(f"{path}: bad matrix row {row}: {exc}") from None
            per = entries.setdefault(row["subject_id"], {})
            per.setdefault(h, np.full((N_ACTIVITIES, N_ACTIVITIES), np.nan))[a, b] = p
    if not entries:
        raise DataValidationError(f"{path}: no matrices")
    ids = tuple(entries)
    hours = max(max(per) for per in entries.values()) + 1
    mats = np.full((len(ids), hours, N_ACTIVITIES, N_ACTIVITIES), np.nan)
    for i, sid in enumerate(ids):
        for h, m in entries[sid].items():
            mats[i, h] = m
    if np.isnan(mats).any():
        raise DataValidationError(f"{path}: missing matrix entries for some (subject, hour) slot")
    return MatrixSet(ids, mats, np.full(N_ACTIVITIES, 1.0 / N_ACTIVITIES))


def write_outcomes(ids: Sequence[str], outcomes: dict[str, np.ndarray], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["subject_id", "cgpa", "flourishing"])
        for sid, c, f in zip(ids, outcomes["cgpa"], outcomes["flourishing"]):
            wr.writerow([sid, f"{c:.6f}", f"{f:.6f}"])


def read_outcomes(path: str | Path) -> dict[str, tuple[float, float]]:
    with open(path, newline="") as fh:
        return {
            row["subject_id"]: (float(row["cgpa"]), float(row["flourishing"]))
            for row in csv.DictReader(fh)
        }
