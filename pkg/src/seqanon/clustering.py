"""MDAV microaggregation and multi-level (coarse-to-fine) clustering."""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import Dataset, aggregate, as_weights, dist_to, reaggregate

DEFAULT_CELL_BUDGET = 250_000_000


class ConfigError(ValueError):
    """Invalid clustering or run configuration."""


class MemoryGuardError(RuntimeError):
    """Raw MDAV would need more memory than the configured cell budget."""


@dataclass(frozen=True)
class ClusterPartition:
    """Disjoint groups of dataset indices.

    ``level_paths[g]`` lists the ``(level, interval_minutes)`` splits that
    produced group ``g``.
    """

    groups: tuple[tuple[int, ...], ...]
    level_paths: tuple[tuple[tuple[int, int], ...], ...] = ()

    def __post_init__(self):
        if not self.level_paths:
            object.__setattr__(self, "level_paths", tuple(() for _ in self.groups))
        if len(self.level_paths) != len(self.groups):
            raise ValueError("one level path per group is required")

    def __len__(self) -> int:
        return len(self.groups)

    def sizes(self) -> list[int]:
        return [len(g) for g in self.groups]

    def canonical(self) -> "ClusterPartition":
        """Groups sorted internally and ordered by smallest member."""
        pairs = sorted(
            ((tuple(sorted(g)), p) for g, p in zip(self.groups, self.level_paths)),
            key=lambda gp: gp[0][0] if gp[0] else -1,
        )
        return ClusterPartition(tuple(g for g, _ in pairs), tuple(p for _, p in pairs))

    def group_sets(self) -> set[frozenset[int]]:
        return {frozenset(g) for g in self.groups}

    def validate(self, n: int, k: int) -> None:
        seen: set[int] = set()
        for g in self.groups:
            if len(g) < k:
                raise AssertionError(f"group of size {len(g)} < k={k}")
            overlap = seen.intersection(g)
            if overlap:
                raise AssertionError(f"indices {sorted(overlap)[:5]} in more than one group")
            seen.update(g)
        if seen != set(range(n)):
            raise AssertionError(f"partition covers {len(seen)} of {n} indices")


def _pick_group(d: np.ndarray, anchor: int, size: int) -> np.ndarray:
    """Positions of ``anchor`` and its ``size - 1`` nearest points by distance ``d``."""
    d = d.copy()
    d[anchor] = -np.inf
    if size < d.size:
        # a partition pre-pass keeps the stable sort small; ties then resolve by position
        cut = np.partition(d, size - 1)[size - 1]
        cand = np.flatnonzero(d <= cut)
        return np.sort(cand[np.argsort(d[cand], kind="stable")[:size]])
    return np.arange(d.size)


def mdav(points, k: int, w: Sequence[float] | None = None) -> ClusterPartition:
    """Partition ``points`` (n, I, 4) into groups of at least ``k``.

    Ties (farthest point, nearest neighbours, nearest centroid) go to the
    lowest index.  Group sizes are in ``[k, 2k-1]`` except for at most one
    group that absorbed a remainder of fewer than ``k`` points.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 2:
        pts = pts[:, None, :]
    n = pts.shape[0]
    if k < 1:
        raise ConfigError(f"group size must be positive, got {k}")
    if n < k:
        raise ValueError(f"mdav needs at least k={k} points, got {n}")
    wv = as_weights(w)

    # rows of `cur` are the remaining points, `idx` their dataset indices (ascending)
    cur, idx = pts, np.arange(n)
    groups: list[np.ndarray] = []
    while idx.size >= 2 * k:
        r = int(np.argmax(dist_to(cur, cur.mean(axis=0), wv)))
        d_r = dist_to(cur, cur[r], wv)
        g = _pick_group(d_r, r, k)
        groups.append(idx[g])
        keep = np.ones(idx.size, dtype=bool)
        keep[g] = False
        cur, idx, d_r = cur[keep], idx[keep], d_r[keep]
        s = int(np.argmax(d_r))
        g = _pick_group(dist_to(cur, cur[s], wv), s, k)
        groups.append(idx[g])
        keep = np.ones(idx.size, dtype=bool)
        keep[g] = False
        cur, idx = cur[keep], idx[keep]

    if idx.size >= k:
        groups.append(idx)
    elif idx.size > 0:
        cents = np.stack([pts[g].mean(axis=0) for g in groups])
        target = int(np.argmin(dist_to(cents, cur.mean(axis=0), wv)))
        groups[target] = np.sort(np.concatenate((groups[target], idx)))

    return ClusterPartition(tuple(tuple(int(i) for i in g) for g in groups))


@dataclass(frozen=True)
class MCConfig:
    """Multi-level clustering settings.

    ``aggregations`` run from root (coarsest) to leaf; an entry of ``None``
    means the whole sequence duration.  When ``sizes`` is omitted, level
    ``t`` of ``l`` uses ``min(k * p**(l - t), N // 2)`` (never below ``k``).
    """

    k: int = 5
    levels: int = 2
    aggregations: tuple[int | None, ...] = (None, 1440)
    fanout: int = 50
    sizes: tuple[int, ...] | None = None
    weights: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0)
    seed: int = 0
    threads: int = 1

    def validate(self, n: int | None = None, T: int | None = None) -> None:
        if self.k < 1:
            raise ConfigError(f"k must be positive, got {self.k}")
        if self.levels < 1:
            raise ConfigError(f"levels must be positive, got {self.levels}")
        if self.fanout < 1:
            raise ConfigError(f"fan-out must be positive, got {self.fanout}")
        if len(self.aggregations) != self.levels:
            raise ConfigError(
                f"{self.levels} levels need {self.levels} aggregations, got {len(self.aggregations)}"
            )
        try:
            as_weights(self.weights)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.sizes is not None:
            if len(self.sizes) != self.levels:
                raise ConfigError("one partition size per level is required")
            if self.sizes[-1] != self.k:
                raise ConfigError(f"leaf partition size {self.sizes[-1]} must equal k={self.k}")
            if any(s < self.k for s in self.sizes):
                raise ConfigError("partition sizes must be at least k")
        if n is not None and n < self.k:
            raise ConfigError(f"dataset has {n} sequences, fewer than k={self.k}")
        if T is not None:
            ivals = self.resolved_intervals(T)
            for a in ivals:
                if a <= 0 or T % a != 0:
                    raise ConfigError(f"aggregation interval {a} does not divide T={T}")
            if any(b > a for a, b in zip(ivals, ivals[1:])):
                raise ConfigError(f"aggregations must not get coarser toward the leaves: {ivals}")

    def resolved_intervals(self, T: int) -> list[int]:
        return [T if a is None else int(a) for a in self.aggregations]

    def resolved_sizes(self, n: int) -> list[int]:
        if self.sizes is not None:
            return list(self.sizes)
        out = []
        for t in range(1, self.levels + 1):
            height = self.levels - t
            if height == 0:
                out.append(self.k)
            else:
                out.append(max(self.k, min(self.k * self.fanout**height, n // 2)))
        return out


def _level_aggregates(codes: np.ndarray, intervals: list[int]) -> dict[int, np.ndarray]:
    # aggregate once at the finest interval, coarsen the rest by row averaging
    finest = min(intervals)
    base = aggregate(codes, finest)
    out = {finest: base}
    for a in intervals:
        if a not in out:
            out[a] = reaggregate(base, a // finest) if a % finest == 0 else aggregate(codes, a)
    return out


def multilevel_cluster(dataset: Dataset | np.ndarray, cfg: MCConfig) -> ClusterPartition:
    """Coarse-to-fine MDAV clustering.

    All sequences start in one root cluster.  At level ``t`` every current
    cluster is aggregated to interval ``a_t`` and split by MDAV into groups
    of size ``s_t``; clusters smaller than ``2 * s_t`` pass through unsplit.
    """
    codes = dataset.codes if isinstance(dataset, Dataset) else np.asarray(dataset)
    n, T = codes.shape
    cfg.validate(n, T)
    intervals = cfg.resolved_intervals(T)
    sizes = cfg.resolved_sizes(n)
    w = as_weights(cfg.weights)
    aggs = _level_aggregates(codes, intervals)

    clusters: list[tuple[np.ndarray, tuple]] = [(np.arange(n), ())]
    for t, (a, s) in enumerate(zip(intervals, sizes), start=1):
        pts = aggs[a]

        def split(item, pts=pts, a=a, s=s, t=t):
            members, path = item
            if members.size < 2 * s:
                return [(members, path)]
            part = mdav(pts[members], s, w)
            return [(members[list(g)], path + ((t, a),)) for g in part.groups]

        if cfg.threads > 1 and len(clusters) > 1:
            with ThreadPoolExecutor(cfg.threads) as pool:
                results = list(pool.map(split, clusters))
        else:
            results = [split(c) for c in clusters]
        clusters = [c for res in results for c in res]

    part = ClusterPartition(
        tuple(tuple(int(i) for i in m) for m, _ in clusters),
        tuple(p for _, p in clusters),
    ).canonical()
    part.validate(n, cfg.k)
    return part


def clustering_cost(
    partition: ClusterPartition, dataset: Dataset | np.ndarray, w: Sequence[float] | None = None
) -> float:
    """Sum of minute-level distances from each member to its group centroid."""
    codes = dataset.codes if isinstance(dataset, Dataset) else np.asarray(dataset)
    wv = as_weights(w)
    total = 0.0
    for g in partition.groups:
        pts = aggregate(codes[list(g)], 1)
        total += float(dist_to(pts, pts.mean(axis=0), wv).sum())
    return total


def check_memory_budget(n: int, T: int, interval: int, budget: int = DEFAULT_CELL_BUDGET) -> int:
    """Raise ``MemoryGuardError`` when an MDAV input exceeds ``budget`` cells."""
    cells = n * (T // interval) * 4
    if cells > budget:
        raise MemoryGuardError(
            f"MDAV on {n} sequences at {interval}-minute aggregation needs {cells:,} cells, "
            f"over the budget of {budget:,}; aggregate further or pass --force"
        )
    return cells


def write_partition(partition: ClusterPartition, ids: Sequence[str], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["group_id", "subject_id"])
        for gid, g in enumerate(partition.groups):
            for i in g:
                wr.writerow([gid, ids[i]])


def read_partition(path: str | Path, ids: Sequence[str]) -> ClusterPartition:
    pos = {sid: i for i, sid in enumerate(ids)}
    groups: dict[int, list[int]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            groups.setdefault(int(row["group_id"]), []).append(pos[row["subject_id"]])
    return ClusterPartition(tuple(tuple(groups[g]) for g in sorted(groups)))
