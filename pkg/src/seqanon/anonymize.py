"""Release anonymized sequences from clusters.

MCKA samples each output minute from the exact cluster centroid.  MCDP
first perturbs the centroid with the Fourier Perturbation Algorithm: per
activity channel it keeps the lowest ``l`` DFT coefficients, adds Laplace
noise to their real and imaginary parts, and inverts.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .clustering import ClusterPartition
from .core import N_ACTIVITIES, Dataset, aggregate
from .fourier import dft, idft

METHODS = ("mcka", "mcdp", "mdav-ka", "mdav-dp")


@dataclass(frozen=True)
class DPParams:
    epsilon: float = 1.0
    coefficients: int = 14
    interval: int = 1
    max_diff: int | None = None  # None: the sequence length T

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.coefficients < 1:
            raise ValueError(f"coefficient count must be positive, got {self.coefficients}")
        if self.interval < 1:
            raise ValueError(f"interval must be positive, got {self.interval}")
        if self.max_diff is not None and self.max_diff < 1:
            raise ValueError(f"max_diff must be positive, got {self.max_diff}")


def sensitivity(params: DPParams, cluster_size: int, T: int) -> float:
    """L2 sensitivity of a cluster's centroid query: sqrt(m) * a / s."""
    m = T if params.max_diff is None else params.max_diff
    return math.sqrt(m) * params.interval / cluster_size


def noise_scale(params: DPParams, cluster_size: int, T: int) -> float:
    """Laplace scale lambda = sqrt(l) * sensitivity / epsilon."""
    if cluster_size < 1:
        raise ValueError("cluster size must be at least 1")
    return math.sqrt(params.coefficients) * sensitivity(params, cluster_size, T) / params.epsilon


def laplace_noise(scale: float, size, rng: np.random.Generator) -> np.ndarray:
    """Laplace(0, scale) draws by inverse CDF."""
    if scale < 0:
        raise ValueError(f"Laplace scale must be non-negative, got {scale}")
    u = rng.random(size) - 0.5
    if scale == 0:
        return np.zeros_like(u)
    tail = np.maximum(1.0 - 2.0 * np.abs(u), np.finfo(float).tiny)
    return -scale * np.sign(u) * np.log(tail)


def laplace_sample(scale: float, rng: np.random.Generator) -> float:
    return float(laplace_noise(scale, None, rng))


@dataclass(frozen=True)
class PerturbedCentroid:
    """Per-minute activity distribution released for one cluster.

    ``raw`` holds the inverse-DFT reconstruction before clamping and
    renormalisation (``None`` for exact centroids).
    """

    values: np.ndarray
    provenance: dict = field(default_factory=lambda: {"kind": "exact"})
    raw: np.ndarray | None = None


def lowpass(series: np.ndarray, l: int, noise: np.ndarray | None = None) -> np.ndarray:
    """Real reconstruction from the first ``l`` DFT coefficients of each row.

    ``series`` has shape (..., T); ``noise`` (..., l) is added to the kept
    coefficients.  Mirror coefficients are set to the conjugates so the
    reconstruction of a real series stays real.
    """
    T = series.shape[-1]
    if l > T:
        raise ValueError(f"cannot keep {l} coefficients of a length-{T} series")
    coef = dft(series)
    kept = coef[..., :l]
    if noise is not None:
        kept = kept + noise
    padded = np.zeros_like(coef)
    padded[..., :l] = kept
    mirror = [k for k in range(1, l) if T - k >= l]
    if mirror:
        padded[..., [T - k for k in mirror]] = np.conj(kept[..., mirror])
    return idft(padded).real


def project_rows(values: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1] and renormalise rows; all-zero rows become uniform."""
    clipped = np.clip(values, 0.0, 1.0)
    sums = clipped.sum(axis=-1, keepdims=True)
    uniform = np.full_like(clipped, 1.0 / clipped.shape[-1])
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(sums > 0, clipped / np.where(sums > 0, sums, 1.0), uniform)


def fpa_perturb(
    centroid: np.ndarray,
    params: DPParams,
    cluster_size: int,
    rng: np.random.Generator,
    scale: float | None = None,
) -> PerturbedCentroid:
    """Fourier-perturb a (T, 4) centroid for a cluster of ``cluster_size``.

    ``scale`` overrides the Laplace scale derived from ``params`` (testing aid).
    """
    centroid = np.asarray(centroid, dtype=float)
    T = centroid.shape[0]
    l = params.coefficients
    if cluster_size < 1:
        raise ValueError("cluster size must be at least 1")
    if T < l:
        raise ValueError(f"sequence length {T} shorter than {l} coefficients")
    lam = noise_scale(params, cluster_size, T) if scale is None else float(scale)
    # exactly 2l draws per channel: real and imaginary part of each kept coefficient
    draws = laplace_noise(lam, (N_ACTIVITIES, 2, l), rng)
    noise = draws[:, 0, :] + 1j * draws[:, 1, :]
    raw = lowpass(centroid.T, l, noise).T
    prov = {
        "kind": "fpa",
        "coefficients": l,
        "epsilon": params.epsilon,
        "lambda": lam,
        "noise_draws_per_channel": int(draws.shape[1] * draws.shape[2]),
    }
    return PerturbedCentroid(project_rows(raw), prov, raw)


def minute_centroid(codes: np.ndarray) -> np.ndarray:
    """Per-minute activity distribution of a cluster's code rows, shape (T, 4)."""
    codes = np.asarray(codes)
    if codes.shape[0] == 0:
        raise ValueError("centroid of an empty cluster is undefined")
    return aggregate(codes, 1).mean(axis=0)


def sample_sequences(dist: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` label sequences, each minute independently from ``dist`` (T, 4)."""
    cum = np.cumsum(dist, axis=-1)[:, :-1]
    u = rng.random((count, dist.shape[0]))
    out = np.zeros((count, dist.shape[0]), dtype=np.int8)
    for c in range(cum.shape[1]):
        out += u >= cum[:, c]
    return out


def mcka_release(members: Dataset | np.ndarray, rng: np.random.Generator) -> np.ndarray:
    codes = members.codes if isinstance(members, Dataset) else np.asarray(members)
    cent = minute_centroid(codes)
    return sample_sequences(cent, codes.shape[0], rng)


def mcdp_release(
    members: Dataset | np.ndarray, params: DPParams, rng: np.random.Generator
) -> tuple[np.ndarray, PerturbedCentroid]:
    codes = members.codes if isinstance(members, Dataset) else np.asarray(members)
    noisy = fpa_perturb(minute_centroid(codes), params, codes.shape[0], rng)
    return sample_sequences(noisy.values, codes.shape[0], rng), noisy


@dataclass
class Release:
    """Released dataset plus per-cluster provenance.

    ``pairing`` maps original to released subject ids by ordinal position
    within each cluster; it is only written out on explicit request.
    """

    dataset: Dataset
    clusters: list[dict]
    pairing: list[tuple[str, str, int]]


def cluster_seeds(seed: int, n_clusters: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(n_clusters)


def release(
    dataset: Dataset,
    partition: ClusterPartition,
    method: str,
    params: DPParams | None = None,
    seed: int = 0,
    threads: int = 1,
    k: int | None = None,
) -> Release:
    """Anonymize every group of ``partition`` and assemble the released dataset."""
    dp = method in ("mcdp", "mdav-dp")
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    params = params or DPParams()
    groups = partition.groups
    seqs = cluster_seeds(seed, len(groups))

    def run(j: int):
        g = list(groups[j])
        if not g:
            raise ValueError(f"cluster {j} is empty")
        if k is not None and len(g) < k:
            raise ValueError(f"cluster {j} has {len(g)} members, fewer than k={k}")
        rng = np.random.default_rng(seqs[j])
        codes = dataset.codes[g]
        if dp:
            out, noisy = mcdp_release(codes, params, rng)
            info = {"cluster": j, "size": len(g), **noisy.provenance}
        else:
            out = mcka_release(codes, rng)
            info = {"cluster": j, "size": len(g), "kind": "exact"}
        return out, info

    if threads > 1 and len(groups) > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(run, range(len(groups))))
    else:
        results = [run(j) for j in range(len(groups))]

    ids, rows, infos, pairing = [], [], [], []
    for j, (out, info) in enumerate(results):
        infos.append(info)
        for o, orig in enumerate(groups[j]):
            rid = f"anon-{j}-{o}"
            ids.append(rid)
            pairing.append((dataset.ids[orig], rid, j))
        rows.append(out)
    T = dataset.epoch_minutes
    codes = np.concatenate(rows) if rows else np.zeros((0, T), dtype=np.int8)
    return Release(Dataset(tuple(ids), codes), infos, pairing)


def released_indices(pairing: Sequence[tuple[str, str, int]], original: Dataset, released: Dataset):
    """Align rows: returns (original_row, released_row, cluster) index triples."""
    opos = {sid: i for i, sid in enumerate(original.ids)}
    rpos = {sid: i for i, sid in enumerate(released.ids)}
    return [(opos[o], rpos[r], c) for o, r, c in pairing]
