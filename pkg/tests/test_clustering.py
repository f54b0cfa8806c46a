import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_codes
from oracles import mdav_trace
from seqanon.clustering import (
    ClusterPartition,
    ConfigError,
    MCConfig,
    MemoryGuardError,
    check_memory_budget,
    clustering_cost,
    mdav,
    multilevel_cluster,
    read_partition,
    write_partition,
)
from seqanon.core import Dataset, aggregate, encode


def line_points(values):
    """Scalar values as single-interval matrices (value on the S channel)."""
    pts = np.zeros((len(values), 1, 4))
    pts[:, 0, 0] = values
    return pts


def test_mdav_two_k_points_gives_two_groups(rng):
    part = mdav(rng.random((6, 2, 4)), 3)
    assert sorted(part.sizes()) == [3, 3]


def test_mdav_separated_line():
    part = mdav(line_points([0, 1, 2, 10, 11, 12]), 3)
    assert part.group_sets() == {frozenset({0, 1, 2}), frozenset({3, 4, 5})}
    assert {frozenset(g) for g in mdav_trace(line_points([0, 1, 2, 10, 11, 12]).tolist(), 3, [1] * 4)} == part.group_sets()


def test_mdav_remainder_merge():
    # centroid 5; r = 0 (tie with 10 -> lowest index), groups {0,1} and {9,10};
    # the leftover 5 is equidistant from both group centroids -> first group
    part = mdav(line_points([0, 1, 5, 9, 10]), 2)
    assert sorted(part.sizes()) == [2, 3]
    assert part.group_sets() == {frozenset({0, 1, 2}), frozenset({3, 4})}


def test_mdav_small_inputs():
    assert mdav(line_points([3, 1, 2]), 3).groups == ((0, 1, 2),)
    assert sorted(mdav(line_points(range(5)), 3).sizes()) == [5]
    with pytest.raises(ValueError):
        mdav(line_points([1, 2]), 3)


def test_mdav_all_identical_points():
    part = mdav(np.zeros((7, 2, 4)), 3)
    part.validate(7, 3)
    # ties resolve to the lowest index; the leftover joins the first group
    assert part.groups == ((0, 1, 2, 6), (3, 4, 5))


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(0, 9), st.integers(1, 3))
def test_mdav_matches_trace_oracle(seed, k, extra, n_int):
    r = np.random.default_rng(seed)
    n = k + extra
    pts = r.integers(0, 5, (n, n_int, 4)) / 4.0
    w = r.choice([0.5, 1.0, 2.0, 3.0], 4)
    got = mdav(pts, k, w).group_sets()
    want = {frozenset(g) for g in mdav_trace(pts.tolist(), k, list(w))}
    assert got == want


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 120), st.sampled_from([2, 3, 5]))
def test_mdav_size_bounds(seed, n, k):
    if n < k:
        return
    pts = np.random.default_rng(seed).random((n, 3, 4))
    part = mdav(pts, k)
    part.validate(n, k)
    sizes = sorted(part.sizes())
    big = [s for s in sizes if s > 2 * k - 1]
    assert len(big) <= 1 and all(s <= 3 * k - 2 for s in big)


def two_scale_dataset():
    """Four mostly-S and four mostly-R days; within each, pairs differ by hour of an excursion."""
    rows = []
    for base, excursion in (("S", "W"), ("R", "S")):
        for hours in ((0, 1), (0, 1), (12, 13), (12, 13)):
            day = [base] * 24
            for h in hours:
                day[h] = excursion
            rows.append(encode("".join(c * 60 for c in day)))
    return Dataset(tuple(f"U{i + 1}" for i in range(8)), np.stack(rows))


def test_coarse_split_then_fine_split():
    ds = two_scale_dataset()
    cfg = MCConfig(k=2, levels=2, aggregations=(None, 60), fanout=2)
    assert cfg.resolved_sizes(8) == [4, 2]
    part = multilevel_cluster(ds, cfg)
    assert part.groups == ((0, 1), (2, 3), (4, 5), (6, 7))
    assert all(p == ((1, 1440), (2, 60)) for p in part.level_paths)
    assert clustering_cost(part, ds) == 0


def test_single_level_minute_equals_mdav(rng):
    codes = random_codes(rng, 23, 30)
    cfg = MCConfig(k=3, levels=1, aggregations=(1,))
    assert multilevel_cluster(codes, cfg).group_sets() == mdav(aggregate(codes, 1), 3).group_sets()


def test_identical_sequences():
    codes = np.zeros((17, 48), dtype=np.int8)
    part = multilevel_cluster(codes, MCConfig(k=3, levels=2, aggregations=(None, 12), fanout=2))
    part.validate(17, 3)
    assert clustering_cost(part, codes) == 0


def test_intermediate_sizes():
    cfg = MCConfig(k=5, levels=3, aggregations=(None, 1440, 60), fanout=50)
    assert cfg.resolved_sizes(9800) == [4900, 250, 5]
    assert cfg.resolved_sizes(1000) == [500, 250, 5]
    assert MCConfig(k=5).resolved_sizes(500) == [250, 5]


@pytest.mark.parametrize(
    "kwargs, match",
    [
        (dict(k=0), "k must"),
        (dict(levels=2, aggregations=(None,)), "aggregations"),
        (dict(sizes=(10, 4), k=5), "leaf partition size"),
        (dict(aggregations=(60, 1440)), "coarser"),
        (dict(aggregations=(None, 7)), "does not divide"),
        (dict(weights=(0, 0, 0, 0)), "weights"),
    ],
)
def test_config_errors(kwargs, match):
    with pytest.raises(ConfigError, match=match):
        multilevel_cluster(np.zeros((20, 1440), dtype=np.int8), MCConfig(**kwargs))


def test_too_few_sequences():
    with pytest.raises(ConfigError, match="fewer than k"):
        multilevel_cluster(np.zeros((3, 1440), dtype=np.int8), MCConfig(k=5))


def test_cost_two_points():
    codes = np.array([[0, 0], [1, 1]], dtype=np.int8)
    part = ClusterPartition(((0, 1),))
    # each member sits at half the pairwise distance from the centroid
    d = np.sqrt(2.0)  # S channel: (1,1) vs (0,0); W channel likewise, unit weights on one channel
    assert clustering_cost(part, codes, [1, 0, 0, 0]) == pytest.approx(d)
    assert clustering_cost(part, codes, [1, 0, 0, 0]) == pytest.approx(
        clustering_cost(ClusterPartition(((1, 0),)), codes, [1, 0, 0, 0])
    )


def test_cost_group_order_invariant(rng):
    codes = random_codes(rng, 10, 24)
    a = ClusterPartition(((0, 1, 2, 3, 4), (5, 6, 7, 8, 9)))
    b = ClusterPartition(((9, 8, 7, 6, 5), (4, 3, 2, 1, 0)))
    assert clustering_cost(a, codes) == pytest.approx(clustering_cost(b, codes))


def test_threads_do_not_change_result(rng):
    codes = random_codes(rng, 60, 48)
    base = MCConfig(k=3, levels=2, aggregations=(None, 12), fanout=3)
    threaded = MCConfig(k=3, levels=2, aggregations=(None, 12), fanout=3, threads=4)
    assert multilevel_cluster(codes, base) == multilevel_cluster(codes, threaded)


def test_memory_guard():
    with pytest.raises(MemoryGuardError, match="--force"):
        check_memory_budget(9800, 20160, 1)
    assert check_memory_budget(9800, 20160, 1440) == 9800 * 14 * 4


def test_partition_csv_round_trip(tmp_path):
    part = ClusterPartition(((0, 2), (1, 3, 4)))
    ids = ["a", "b", "c", "d", "e"]
    write_partition(part, ids, tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "group_id,subject_id"
    assert read_partition(tmp_path / "p.csv", ids) == part


def test_validate_catches_bad_partitions():
    with pytest.raises(AssertionError, match="more than one"):
        ClusterPartition(((0, 1), (1, 2))).validate(3, 2)
    with pytest.raises(AssertionError, match="covers"):
        ClusterPartition(((0, 1),)).validate(3, 2)
    with pytest.raises(AssertionError, match="< k"):
        ClusterPartition(((0,), (1, 2))).validate(3, 2)
