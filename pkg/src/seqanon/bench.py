"""Timing and parameter-sweep harness for the clustering methods."""
from __future__ import annotations

import csv
import itertools
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .anonymize import release, released_indices
from .clustering import MCConfig, mdav, multilevel_cluster
from .core import MINUTES_PER_DAY, Dataset, aggregate
from .datagen import GenConfig, random_matrices, simulate
from .metrics import utility_relative_difference


@dataclass(frozen=True)
class SweepSpec:
    n_values: tuple[int, ...] = (250, 500, 1000)
    days_values: tuple[int, ...] = (7,)
    k_values: tuple[int, ...] = (5,)
    fanouts: tuple[int, ...] = (50,)
    levels_values: tuple[int, ...] = (2,)
    leaf_aggs: tuple[int, ...] = (MINUTES_PER_DAY,)
    weights: tuple[tuple[float, ...], ...] = ((1.0, 1.0, 1.0, 1.0),)
    repetitions: int = 5
    include_mdav: bool = False
    utility: bool = False
    seed: int = 0

    def validate(self) -> None:
        grids = (self.n_values, self.days_values, self.k_values, self.fanouts,
                 self.levels_values, self.leaf_aggs, self.weights)
        if any(len(g) == 0 for g in grids):
            raise ValueError("every sweep axis needs at least one value")
        if self.repetitions < 1:
            raise ValueError("repetitions must be positive")

    def cells(self):
        return itertools.product(self.n_values, self.days_values, self.k_values, self.fanouts,
                                 self.levels_values, self.leaf_aggs, self.weights)


def corpus(n: int, days: int, seed: int = 0) -> Dataset:
    hours = days * 24
    return simulate(GenConfig(n, hours=hours, seed=seed), random_matrices(n, hours, seed=seed))


def mc_config(k: int, levels: int, fanout: int, leaf_agg: int, weights=(1.0, 1.0, 1.0, 1.0)) -> MCConfig:
    """Root level at whole duration, every other level at ``leaf_agg``."""
    aggs = (None,) + (leaf_agg,) * (levels - 1) if levels > 1 else (leaf_agg,)
    return MCConfig(k=k, levels=levels, aggregations=aggs, fanout=fanout, weights=tuple(weights))


def time_mc(ds: Dataset, cfg: MCConfig, repetitions: int) -> tuple[float, object]:
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        part = multilevel_cluster(ds, cfg)
        times.append(time.perf_counter() - t0)
    return float(np.mean(times)), part


def time_mdav(ds: Dataset, k: int, interval: int, repetitions: int, weights=None) -> tuple[float, object]:
    """MDAV on data aggregated to ``interval``; aggregation is inside the timed region."""
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        part = mdav(aggregate(ds.codes, interval), k, weights)
        times.append(time.perf_counter() - t0)
    return float(np.mean(times)), part


def linear_r2(x: Sequence[float], y: Sequence[float]) -> float:
    """Coefficient of determination of an ordinary least-squares line."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    return float(1.0 - resid @ resid / ss_tot) if ss_tot > 0 else 1.0


def run_sweep(spec: SweepSpec, log=None) -> list[dict]:
    spec.validate()
    rows = []
    cache: dict[tuple[int, int], Dataset] = {}
    for n, days, k, p, levels, leaf, w in spec.cells():
        ds = cache.get((n, days))
        if ds is None:
            ds = cache[(n, days)] = corpus(n, days, spec.seed)
        cfg = mc_config(k, levels, p, leaf, w)
        secs, part = time_mc(ds, cfg, spec.repetitions)
        row = {"n": n, "days": days, "k": k, "fanout": p, "levels": levels,
               "leaf_agg": leaf, "weights": "/".join(f"{x:g}" for x in w),
               "mc_seconds": secs, "n_clusters": len(part)}
        if spec.include_mdav:
            md_secs, _ = time_mdav(ds, k, leaf, spec.repetitions, w)
            row["mdav_seconds"] = md_secs
            row["speedup"] = md_secs / secs if secs > 0 else float("inf")
        if spec.utility:
            rel = release(ds, part, "mcka", seed=spec.seed)
            pairs = released_indices(rel.pairing, ds, rel.dataset)
            for s, v in utility_relative_difference(ds.codes, rel.dataset.codes, pairs).items():
                row[f"reldiff_{s}"] = v
        rows.append(row)
        if log:
            log(row)
    return rows


def write_rows(rows: list[dict], path: str | Path) -> None:
    keys: list[str] = []
    for r in rows:
        keys.extend(k for k in r if k not in keys)
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, keys, lineterminator="\n")
        wr.writeheader()
        for r in rows:
            wr.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in r.items()})
