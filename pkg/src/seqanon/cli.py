"""Command-line entry point: ``seqanon {gen,anonymize,evaluate,bench}``.

Exit codes: 0 success, 1 usage or configuration error, 2 data validation
error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .anonymize import METHODS, DPParams, release, released_indices
from .bench import SweepSpec, linear_r2, run_sweep, write_rows
from .clustering import (
    DEFAULT_CELL_BUDGET,
    ConfigError,
    MCConfig,
    MemoryGuardError,
    check_memory_budget,
    mdav,
    multilevel_cluster,
    write_partition,
)
from .core import MINUTES_PER_DAY, DataValidationError, aggregate, read_dataset, write_dataset
from .datagen import (
    GenConfig,
    GenConfigError,
    active_fraction,
    estimate_matrices,
    random_matrices,
    read_matrices,
    read_outcomes,
    simulate,
    synth_outcomes,
    write_matrices,
    write_outcomes,
)
from .metrics import UtilityReport, compare_runs, correlation_block, relative_differences

log = logging.getLogger("seqanon")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3
DEFAULT_K = {"mcka": 5, "mdav-ka": 5, "mcdp": 50, "mdav-dp": 50}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_interval(text: str) -> int | None:
    """``whole`` -> None (entire duration), ``daily``/``hourly`` or minutes."""
    named = {"whole": None, "daily": MINUTES_PER_DAY, "hourly": 60}
    t = str(text).strip().lower()
    if t in named:
        return named[t]
    try:
        v = int(t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad aggregation {text!r}") from None
    if v <= 0:
        raise argparse.ArgumentTypeError(f"aggregation must be positive, got {v}")
    return v


def parse_weights(text: str) -> tuple[float, ...]:
    try:
        w = tuple(float(x) for x in str(text).split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad weights {text!r}") from None
    if len(w) != 4:
        raise argparse.ArgumentTypeError("weights need four values s,w,r,m")
    return w


def int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in str(text).split(",") if x)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None


def read_config_file(path: str) -> dict[str, str]:
    """Flat ``key = value`` file; keys are long flag names without dashes."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    try:
        cp.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise UsageError(f"bad config file {path}: {exc}") from None
    return {k.replace("-", "_"): v for k, v in cp["run"].items()}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (falls back to $SEQANON_SEED, then 0)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="seqanon", description="Anonymize categorical activity sequences.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("gen", help="generate a synthetic corpus")
    _add_common(g)
    g.add_argument("--n", type=int, default=100, help="number of subjects")
    g.add_argument("--hours", type=int, default=336)
    g.add_argument("--mix-prob", type=float, default=0.01)
    g.add_argument("--corpus", help="seed corpus CSV to estimate matrices from")
    g.add_argument("--matrices", help="transition matrices CSV to simulate from")
    g.add_argument("--matrices-out", help="write the matrices used")
    g.add_argument("--out", required=True, help="dataset CSV to write")
    g.add_argument("--outcomes", help="also write subject_id,cgpa,flourishing")
    g.add_argument("--r-flourishing", type=float, default=0.15)
    g.add_argument("--r-cgpa", type=float, default=-0.29)

    a = sub.add_parser("anonymize", help="cluster and release a dataset")
    _add_common(a)
    a.add_argument("--method", choices=METHODS, default="mcka")
    a.add_argument("--k", type=int, default=None, help="default 5 (k-anonymity) or 50 (DP)")
    a.add_argument("--epsilon", type=float, default=1.0)
    a.add_argument("--coefficients", type=int, default=14)
    a.add_argument("--max-diff", type=int, default=None, help="m in the sensitivity (default T)")
    a.add_argument("--levels", type=int, default=2)
    a.add_argument("--fanout", type=int, default=50)
    a.add_argument("--root-agg", type=parse_interval, default=None)
    a.add_argument("--leaf-agg", type=parse_interval, default=MINUTES_PER_DAY)
    a.add_argument("--weights", type=parse_weights, default=(1.0, 1.0, 1.0, 1.0))
    a.add_argument("--in", dest="inp", required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--report", help="run manifest JSON (default: <out>.manifest.json)")
    a.add_argument("--debug-pairing", help="write original-to-released id map (not private)")
    a.add_argument("--partition-out", help="write group_id,subject_id")
    a.add_argument("--force", action="store_true", help="ignore the raw-MDAV memory guard")
    a.add_argument("--cell-budget", type=int, default=DEFAULT_CELL_BUDGET)

    e = sub.add_parser("evaluate", help="utility report for a release")
    _add_common(e)
    e.add_argument("--in", dest="inp", required=True, help="original dataset")
    e.add_argument("--released", required=True)
    e.add_argument("--pairing", required=True, help="pairing file from anonymize --debug-pairing")
    e.add_argument("--manifest")
    e.add_argument("--outcomes")
    e.add_argument("--compare-released", help="second release for t-test / Cohen's d")
    e.add_argument("--compare-pairing")
    e.add_argument("--report", required=True, help="report JSON; CSV tables share its stem")

    b = sub.add_parser("bench", help="timing / parameter sweep")
    _add_common(b)
    b.add_argument("--n", type=int_list, default=(250, 500, 1000))
    b.add_argument("--days", type=int_list, default=(7,))
    b.add_argument("--k", type=int_list, default=(5,))
    b.add_argument("--fanout", type=int_list, default=(50,))
    b.add_argument("--levels", type=int_list, default=(2,))
    b.add_argument("--leaf-agg", type=int_list, default=(MINUTES_PER_DAY,))
    b.add_argument("--weights", type=parse_weights, action="append")
    b.add_argument("--repetitions", type=int, default=5)
    b.add_argument("--mdav", action="store_true", help="also time MDAV on leaf-aggregated data")
    b.add_argument("--utility", action="store_true", help="also report MCKA relative differences")
    b.add_argument("--out", required=True, help="plot-ready CSV")
    return ap


def _config_path(argv: list[str]) -> str | None:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def apply_config(sub: argparse.ArgumentParser, values: dict[str, str]) -> None:
    """Install config-file values as subcommand defaults."""
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in values.items():
        dest = "inp" if key == "in" else key
        act = known.get(dest)
        if act is None or dest in ("help", "config"):
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(act, argparse._StoreTrueAction):
            defaults[dest] = raw.strip().lower() in ("1", "true", "yes", "on")
            continue
        try:
            defaults[dest] = act.type(raw) if act.type is not None else raw
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise UsageError(f"config key {key}: {exc}") from None
        if act.choices is not None and defaults[dest] not in act.choices:
            raise UsageError(f"config key {key}: {raw!r} not in {list(act.choices)}")
        act.required = False
    sub.set_defaults(**defaults)


def parse_args(argv: list[str]) -> argparse.Namespace:
    ap = build_parser()
    cfg_path = _config_path(argv)
    if cfg_path:
        subs = ap._subparsers._group_actions[0].choices
        command = next((tok for tok in argv if tok in subs), None)
        if command is not None:
            apply_config(subs[command], read_config_file(cfg_path))
    ns = ap.parse_args(argv)
    if ns.seed is None:
        env = os.environ.get("SEQANON_SEED")
        try:
            ns.seed = int(env) if env else 0
        except ValueError:
            raise UsageError(f"SEQANON_SEED must be an integer, got {env!r}") from None
    return ns


def cmd_gen(ns) -> int:
    cfg = GenConfig(ns.n, hours=ns.hours, mix_prob=ns.mix_prob, seed=ns.seed)
    cfg.validate()
    if ns.corpus and ns.matrices:
        raise UsageError("give at most one of --corpus and --matrices")
    if ns.corpus:
        ms = estimate_matrices(read_dataset(ns.corpus))
    elif ns.matrices:
        ms = read_matrices(ns.matrices)
    else:
        ms = random_matrices(ns.n, ns.hours, seed=ns.seed)
    ds = simulate(cfg, ms)
    write_dataset(ds, ns.out)
    if ns.outcomes:
        write_outcomes(ds.ids, synth_outcomes(ds, ns.seed, ns.r_flourishing, ns.r_cgpa), ns.outcomes)
    if ns.matrices_out:
        write_matrices(ms, ns.matrices_out)
    log.info("wrote %d x %d sequences to %s", len(ds), ds.epoch_minutes, ns.out)
    return EXIT_OK


def resolve_run(ns, T: int) -> tuple[MCConfig, DPParams, dict]:
    k = ns.k if ns.k is not None else DEFAULT_K[ns.method]
    if ns.method.startswith("mdav"):
        aggs: tuple = (ns.leaf_agg,)
        levels = 1
    else:
        levels = ns.levels
        if levels < 1:
            raise ConfigError(f"levels must be positive, got {levels}")
        aggs = (ns.root_agg,) + (ns.leaf_agg,) * (levels - 1) if levels > 1 else (ns.leaf_agg,)
    mc = MCConfig(k=k, levels=levels, aggregations=aggs, fanout=ns.fanout,
                  weights=tuple(ns.weights), seed=ns.seed, threads=ns.threads)
    try:
        dp = DPParams(ns.epsilon, ns.coefficients, 1, ns.max_diff)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    resolved = {
        "method": ns.method, "k": k, "levels": levels,
        "aggregations": [T if a is None else a for a in aggs],
        "fanout": ns.fanout, "weights": list(ns.weights), "seed": ns.seed,
        "epsilon": dp.epsilon, "coefficients": dp.coefficients, "interval": dp.interval,
        "max_diff": dp.max_diff if dp.max_diff is not None else T,
        "force": ns.force, "cell_budget": ns.cell_budget,
    }
    return mc, dp, resolved


def cmd_anonymize(ns) -> int:
    ds = read_dataset(ns.inp)
    n, T = ds.codes.shape
    mc, dp, resolved = resolve_run(ns, T)
    mc.validate(n, T)

    t0 = time.monotonic()
    if ns.method.startswith("mdav"):
        a = mc.resolved_intervals(T)[0]
        if not ns.force:
            check_memory_budget(n, T, a, ns.cell_budget)
        part = mdav(aggregate(ds.codes, a), mc.k, mc.weights).canonical()
        part.validate(n, mc.k)
    else:
        part = multilevel_cluster(ds, mc)
    t_cluster = time.monotonic() - t0

    t0 = time.monotonic()
    rel = release(ds, part, ns.method, dp, seed=ns.seed, threads=ns.threads, k=mc.k)
    t_release = time.monotonic() - t0

    write_dataset(rel.dataset, ns.out)
    if ns.debug_pairing:
        with open(ns.debug_pairing, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["original_id", "released_id", "cluster"])
            wr.writerows(rel.pairing)
    if ns.partition_out:
        write_partition(part, ds.ids, ns.partition_out)
    manifest = {
        "tool": f"seqanon {__version__}",
        "config": resolved,
        "n": n,
        "T": T,
        "clusters": [
            {**info, "level_path": [list(x) for x in path]}
            for info, path in zip(rel.clusters, part.level_paths)
        ],
        "timings": {"clustering_seconds": t_cluster, "release_seconds": t_release},
    }
    report = ns.report or f"{ns.out}.manifest.json"
    Path(report).write_text(json.dumps(manifest, indent=2) + "\n")
    log.info("released %d sequences in %d clusters (clustering %.2fs, release %.2fs)",
             n, len(part), t_cluster, t_release)
    return EXIT_OK


def _read_pairing(path: str, original, released):
    with open(path, newline="") as fh:
        rows = [(r["original_id"], r["released_id"], int(r["cluster"])) for r in csv.DictReader(fh)]
    try:
        return released_indices(rows, original, released)
    except KeyError as exc:
        raise DataValidationError(f"{path}: unknown subject id {exc.args[0]!r}") from None


def _released_activity(pairs, released, n: int) -> np.ndarray:
    act = active_fraction(released)
    out = np.empty(n)
    for o, r, _ in pairs:
        out[o] = act[r]
    return out


def cmd_evaluate(ns) -> int:
    orig = read_dataset(ns.inp)
    rel = read_dataset(ns.released)
    if orig.codes.shape != rel.codes.shape:
        raise DataValidationError(
            f"original {orig.codes.shape} and released {rel.codes.shape} shapes differ"
        )
    pairs = _read_pairing(ns.pairing, orig, rel)
    violations = []
    if ns.manifest:
        man = json.loads(Path(ns.manifest).read_text())
        k = man["config"]["k"]
        for c in man["clusters"]:
            if c["size"] < k:
                violations.append(f"cluster {c['cluster']} has {c['size']} members < k={k}")
        by_cluster: dict[int, int] = {}
        for _, _, c in pairs:
            by_cluster[c] = by_cluster.get(c, 0) + 1
        for c in man["clusters"]:
            if by_cluster.get(c["cluster"], 0) != c["size"]:
                violations.append(f"pairing disagrees with manifest size of cluster {c['cluster']}")
    try:
        d = relative_differences(orig.codes, rel.codes, pairs)
    except ValueError as exc:
        raise DataValidationError(str(exc)) from None
    means = d.reshape(-1, 4).mean(axis=0)
    report = UtilityReport({s: float(m) for s, m in zip("SWRM", means)}, violations=violations)

    if ns.compare_released:
        if not ns.compare_pairing:
            raise UsageError("--compare-released needs --compare-pairing")
        rel2 = read_dataset(ns.compare_released)
        d2 = relative_differences(orig.codes, rel2.codes, _read_pairing(ns.compare_pairing, orig, rel2))
        report.comparison = compare_runs(d, d2)

    if ns.outcomes:
        outc = read_outcomes(ns.outcomes)
        try:
            cg = np.array([outc[s][0] for s in orig.ids])
            fl = np.array([outc[s][1] for s in orig.ids])
        except KeyError as exc:
            raise DataValidationError(f"no outcomes for subject {exc.args[0]!r}") from None
        report.correlations = {
            "original": correlation_block(active_fraction(orig), cg, fl),
            "released": correlation_block(_released_activity(pairs, rel, len(orig)), cg, fl),
        }

    report.to_json(ns.report)
    stem = Path(ns.report).with_suffix("")
    report.write_tables(stem)
    for v in violations:
        log.error("invariant violation: %s", v)
    return EXIT_DATA if violations else EXIT_OK


def cmd_bench(ns) -> int:
    spec = SweepSpec(
        n_values=ns.n, days_values=ns.days, k_values=ns.k, fanouts=ns.fanout,
        levels_values=ns.levels, leaf_aggs=ns.leaf_agg,
        weights=tuple(ns.weights) if ns.weights else ((1.0, 1.0, 1.0, 1.0),),
        repetitions=ns.repetitions, include_mdav=ns.mdav, utility=ns.utility, seed=ns.seed,
    )
    try:
        spec.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    rows = run_sweep(spec, log=lambda r: log.info("%s", r))
    write_rows(rows, ns.out)
    for axis, other in (("n", "days"), ("days", "n")):
        for fixed in sorted({r[other] for r in rows}):
            sel = [r for r in rows if r[other] == fixed]
            if len({r[axis] for r in sel}) >= 3:
                r2 = linear_r2([r[axis] for r in sel], [r["mc_seconds"] for r in sel])
                print(f"linear fit of MC time vs {axis} ({other}={fixed}): R^2 = {r2:.3f}")
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "anonymize": cmd_anonymize, "evaluate": cmd_evaluate, "bench": cmd_bench}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        ns = parse_args(argv)
    except UsageError as exc:
        print(f"seqanon: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[ns.command](ns)
    except (UsageError, ConfigError, GenConfigError, MemoryGuardError) as exc:
        print(f"seqanon: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataValidationError, FileNotFoundError) as exc:
        print(f"seqanon: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.debug("failure", exc_info=True)
        print(f"seqanon: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
