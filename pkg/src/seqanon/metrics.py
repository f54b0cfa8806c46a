"""Utility measures: relative difference of daily durations, and test statistics."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import betainc

from .core import MINUTES_PER_DAY, N_ACTIVITIES, SYMBOLS, Dataset


def relative_difference(x, y):
    """|x - y| / max(x, y), with d(0, 0) = 0.  Works elementwise on arrays."""
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if np.any(xa < 0) or np.any(ya < 0):
        raise ValueError("relative difference is defined for non-negative values only")
    top = np.maximum(xa, ya)
    with np.errstate(invalid="ignore", divide="ignore"):
        d = np.where(top > 0, np.abs(xa - ya) / np.where(top > 0, top, 1.0), 0.0)
    return float(d) if d.ndim == 0 else d


def daily_durations(codes: np.ndarray, minutes_per_day: int = MINUTES_PER_DAY) -> np.ndarray:
    """Minutes per activity per day, shape (N, days, 4)."""
    codes = np.asarray(codes)
    n, T = codes.shape
    if T % minutes_per_day != 0:
        raise ValueError(f"sequence length {T} is not a whole number of days")
    days = codes.reshape(n, T // minutes_per_day, minutes_per_day)
    return np.stack([np.count_nonzero(days == c, axis=-1) for c in range(N_ACTIVITIES)], axis=-1)


def check_pairing(pairs: Sequence[tuple[int, int, int]], n: int) -> None:
    """Each original and released row used exactly once, within one cluster each."""
    orig = [p[0] for p in pairs]
    rel = [p[1] for p in pairs]
    if sorted(orig) != list(range(n)) or sorted(rel) != list(range(n)):
        raise ValueError("pairing is not a bijection between original and released rows")


def relative_differences(
    original: np.ndarray,
    released: np.ndarray,
    pairs: Sequence[tuple[int, int, int]] | None = None,
    minutes_per_day: int = MINUTES_PER_DAY,
) -> np.ndarray:
    """Per (subject, day, activity) relative differences of paired daily durations.

    ``pairs`` holds ``(original_row, released_row, cluster)``; ``None`` pairs
    rows by position.
    """
    original = np.asarray(original)
    released = np.asarray(released)
    if original.shape != released.shape:
        raise ValueError(f"shape mismatch {original.shape} vs {released.shape}")
    n = original.shape[0]
    if pairs is None:
        pairs = [(i, i, 0) for i in range(n)]
    check_pairing(pairs, n)
    oi = np.array([p[0] for p in pairs], dtype=np.intp)
    ri = np.array([p[1] for p in pairs], dtype=np.intp)
    a = daily_durations(original[oi], minutes_per_day)
    b = daily_durations(released[ri], minutes_per_day)
    return relative_difference(a, b)


def utility_relative_difference(original, released, pairs=None, minutes_per_day=MINUTES_PER_DAY):
    """Mean daily relative difference per activity, keyed by label symbol."""
    d = relative_differences(original, released, pairs, minutes_per_day)
    means = d.reshape(-1, N_ACTIVITIES).mean(axis=0)
    return {s: float(m) for s, m in zip(SYMBOLS, means)}


def _student_t_two_sided(t: float, df: float) -> float:
    if math.isinf(t):
        return 0.0
    x = df / (df + t * t)
    return float(min(1.0, max(0.0, betainc(df / 2.0, 0.5, x))))


def _sample(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=float).ravel()
    if arr.size < 2:
        raise ValueError(f"{name} needs at least 2 observations")
    return arr


def welch_t_test(a, b) -> tuple[float, float]:
    """Unequal-variance two-sample t statistic and two-sided p-value."""
    a = _sample(a, "sample_a")
    b = _sample(b, "sample_b")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    se2 = va + vb
    if se2 == 0:
        raise ValueError("both samples have zero variance")
    t = (a.mean() - b.mean()) / math.sqrt(se2)
    df = se2 * se2 / (va * va / (a.size - 1) + vb * vb / (b.size - 1))
    return float(t), _student_t_two_sided(t, df)


def cohens_d(a, b) -> float:
    """Mean difference over the pooled (n - 1 weighted) standard deviation."""
    a = _sample(a, "sample_a")
    b = _sample(b, "sample_b")
    pooled = ((a.size - 1) * a.var(ddof=1) + (b.size - 1) * b.var(ddof=1)) / (a.size + b.size - 2)
    if pooled == 0:
        raise ValueError("pooled standard deviation is zero")
    return float((a.mean() - b.mean()) / math.sqrt(pooled))


def pearson(x, y) -> tuple[float, float]:
    """Product-moment correlation and its two-sided p-value."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise ValueError("series must have equal length")
    if x.size < 3:
        raise ValueError("need at least 3 observations")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = dx @ dx, dy @ dy
    if sxx == 0 or syy == 0:
        raise ValueError("correlation undefined for a constant series")
    r = float(np.clip((dx @ dy) / math.sqrt(sxx * syy), -1.0, 1.0))
    if abs(r) == 1.0:
        return r, 0.0
    df = x.size - 2
    t = r * math.sqrt(df / (1.0 - r * r))
    return r, _student_t_two_sided(t, df)


@dataclass
class UtilityReport:
    relative_difference: dict[str, float]
    comparison: dict[str, dict[str, float]] = field(default_factory=dict)
    correlations: dict[str, dict[str, float]] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    violations: list[str] = field(default_factory=list)

    def to_json(self, path: str | Path) -> None:
        doc = {k: v for k, v in asdict(self).items() if v or k == "relative_difference"}
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    def write_tables(self, stem: str | Path) -> list[Path]:
        """Flat CSV tables: relative differences, t-tests, correlations."""
        stem = Path(stem)
        out = []
        p = stem.with_name(stem.name + "_reldiff.csv")
        with open(p, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["activity", "mean_relative_difference"])
            for s in SYMBOLS:
                wr.writerow([f"Daily ({s})", f"{self.relative_difference[s]:.6f}"])
        out.append(p)
        if self.comparison:
            p = stem.with_name(stem.name + "_ttest.csv")
            with open(p, "w", newline="") as fh:
                wr = csv.writer(fh, lineterminator="\n")
                wr.writerow(["activity", "t", "p_value", "cohens_d"])
                for s in SYMBOLS:
                    c = self.comparison[s]
                    wr.writerow([f"Daily ({s})", f"{c['t']:.6g}", f"{c['p']:.6g}", f"{c['d']:.6g}"])
            out.append(p)
        if self.correlations:
            p = stem.with_name(stem.name + "_correlation.csv")
            with open(p, "w", newline="") as fh:
                wr = csv.writer(fh, lineterminator="\n")
                wr.writerow(["data", "flourishing_r", "flourishing_p", "cgpa_r", "cgpa_p"])
                for name, c in self.correlations.items():
                    wr.writerow([name, f"{c['flourishing_r']:.6f}", f"{c['flourishing_p']:.6g}",
                                 f"{c['cgpa_r']:.6f}", f"{c['cgpa_p']:.6g}"])
            out.append(p)
        return out


def compare_runs(d_a: np.ndarray, d_b: np.ndarray) -> dict[str, dict[str, float]]:
    """Per-activity Welch t-test and Cohen's d between two relative-difference arrays."""
    out = {}
    for c, s in enumerate(SYMBOLS):
        a = d_a[..., c].ravel()
        b = d_b[..., c].ravel()
        try:
            t, p = welch_t_test(a, b)
            d = cohens_d(a, b)
        except ValueError:
            t, p, d = 0.0, 1.0, 0.0
        out[s] = {"t": t, "p": p, "d": d}
    return out


def correlation_block(activity: np.ndarray, cgpa: np.ndarray, flourishing: np.ndarray) -> dict[str, float]:
    rf, pf = pearson(activity, flourishing)
    rc, pc = pearson(activity, cgpa)
    return {"flourishing_r": rf, "flourishing_p": pf, "cgpa_r": rc, "cgpa_p": pc}
