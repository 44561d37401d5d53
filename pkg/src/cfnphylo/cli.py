"""Command-line harness for the desk-scale experiments.

Subcommands: simulate, infer, asr, distance, battery-power, tv-curve,
phase-transition.  Global flags: --seed, --threads, --out, --config (a
JSON file supplying defaults that explicit flags override).  Exit codes:
0 success, 2 configuration error, 3 exact-mode scale refusal.

Every CSV row echoes the effective configuration as a JSON column, so a
result file is self-describing; the trailing wall_s column is the only
field allowed to vary between reruns of the same seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from typing import Dict, List, Optional

import numpy as np

from . import experiments as xp
from .battery import (
    build_battery,
    empirical_error,
    estimate_means,
    validate_battery,
)
from .distances import blowup_distance_exact, blowup_upper_bound, swap_distance_exact
from .instances import (
    many_r_close_equal,
    many_r_close_unequal,
    many_r_cohanging,
    many_r_far,
    single_swap_homogeneous,
    two_cluster_overlap,
)
from .likelihood import flow_bound, ml_estimate, reconstruction_accuracy
from .model import (
    read_alignment,
    read_fasta,
    sample_markov,
    sample_random_cluster,
    write_alignment,
)
from .newick import parse_newick, read_tree, tree_to_newick
from .trees import Phylogeny, ScaleLimitError, TreeError, build_homogeneous

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SCALE = 3

INSTANCES = {
    "single-swap-h4": lambda: single_swap_homogeneous(4, 0.2),
    "single-swap-h3": lambda: single_swap_homogeneous(3, 0.2),
    "many-r-cohanging": many_r_cohanging,
    "many-r-far": many_r_far,
    "many-r-close-equal": many_r_close_equal,
    "many-r-close-unequal": many_r_close_unequal,
    "overlap": two_cluster_overlap,
}


class ConfigError(Exception):
    pass


def _write_csv(path: Optional[str], fieldnames: List[str], rows: List[Dict]) -> None:
    out = open(path, "w", newline="", encoding="utf-8") if path else sys.stdout
    try:
        writer = csv.DictWriter(out, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    finally:
        if path:
            out.close()


def _config_blob(args, keys: List[str]) -> str:
    cfg = {k: getattr(args, k) for k in keys}
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))


def _parse_grid(text: str) -> List[int]:
    try:
        grid = [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad integer grid {text!r}") from exc
    if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("grid must be non-empty and strictly increasing")
    return grid


def _parse_floats(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad float list {text!r}") from exc


def _load_tree_arg(args, attr: str) -> Phylogeny:
    path = getattr(args, attr)
    if path is None:
        raise ConfigError(f"missing --{attr.replace('_', '-')}")
    return read_tree(path, args.upsilon)


def _maybe_plot(path: Optional[str], xs, series: Dict[str, list], xlabel: str, ylabel: str) -> None:
    if not path:
        return
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for label, ys in series.items():
        ax.plot(xs[: len(ys)], ys, marker="o", label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------


def cmd_simulate(args) -> int:
    if args.tree:
        tree = read_tree(args.tree, args.upsilon)
    elif args.h is not None:
        tree = build_homogeneous(args.h, args.g)
    else:
        raise ConfigError("simulate needs --tree or --h/--g")
    if args.sampler == "markov":
        aln = sample_markov(tree, args.k, args.seed, r=args.r)
    elif args.sampler == "cluster":
        aln = sample_random_cluster(tree, args.k, args.seed)
    else:
        raise ConfigError(f"unknown sampler {args.sampler!r}")
    if not args.out:
        raise ConfigError("simulate needs --out")
    write_alignment(args.out, aln)
    print(f"wrote {aln.k} sites x {aln.n} leaves to {args.out}")
    return EXIT_OK


def cmd_infer(args) -> int:
    if args.alignment.endswith(".fasta") or args.alignment.endswith(".fa"):
        aln = read_fasta(args.alignment)
    else:
        aln = read_alignment(args.alignment)
    if args.candidates:
        with open(args.candidates, "r", encoding="utf-8") as fh:
            cands = [parse_newick(line, args.upsilon) for line in fh if line.strip()]
        result = ml_estimate(aln, cands, mode="candidate-list")
    else:
        if args.n is None or args.f is None or args.g is None:
            raise ConfigError("space search needs --n, --f, --g, --upsilon")
        _check_band(args.f, args.g, args.upsilon)
        space = {"n": args.n, "f": args.f, "g": args.g, "upsilon": args.upsilon}
        result = ml_estimate(aln, space, mode=args.mode)
    print(tree_to_newick(result.tree))
    print(
        f"neg-log-likelihood {result.neg_log_lik:.6f}  candidates {result.candidates_scored}"
        + ("  (tie)" if result.tie else "")
    )
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(tree_to_newick(result.tree) + "\n")
    return EXIT_OK


def cmd_asr(args) -> int:
    keys = ["h_list", "g_list", "mode", "trials", "seed"]
    cfg = _config_blob(args, keys)
    rows = []
    for h in _parse_grid(args.h_list):
        for g in _parse_floats(args.g_list):
            start = time.perf_counter()
            tree = build_homogeneous(h, g)
            mode = args.mode
            if mode == "auto":
                mode = "exact" if 2 ** h <= 12 else "monte-carlo"
            acc, beta, se = reconstruction_accuracy(
                tree, mode=mode, trials=args.trials, seed=args.seed
            )
            bound = flow_bound(tree)
            # accuracy relates to the posterior gap via acc = (1 + E|gap|)/2,
            # so 2*acc - 1 estimates E|gap| with standard error 2*se
            gap_ok = 2 * acc - 1 >= bound - 3 * (2 * se) - 1e-12
            rows.append(
                {
                    "experiment": "asr", "h": h, "g": g, "mode": mode,
                    "accuracy": f"{acc:.8f}", "beta": f"{beta:.8f}",
                    "se": f"{se:.8f}", "flow_bound": f"{bound:.8f}",
                    "gap_bound_ok": int(gap_ok),
                    "seed": args.seed, "config": cfg,
                    "wall_s": f"{time.perf_counter() - start:.3f}",
                }
            )
    _write_csv(
        args.out,
        ["experiment", "h", "g", "mode", "accuracy", "beta", "se", "flow_bound",
         "gap_bound_ok", "seed", "config", "wall_s"],
        rows,
    )
    return EXIT_OK


def cmd_distance(args) -> int:
    t0 = _load_tree_arg(args, "tree1")
    t1 = _load_tree_arg(args, "tree2")
    if args.kind == "swap":
        d = swap_distance_exact(t0, t1)
    elif args.kind == "blowup":
        d = blowup_distance_exact(t0, t1)
    elif args.kind == "blowup-upper":
        d = blowup_upper_bound(t0.replaced(root=t0.root), t1, ell=args.ell)
    else:
        raise ConfigError(f"unknown distance kind {args.kind!r}")
    print(d)
    return EXIT_OK


def cmd_battery_power(args) -> int:
    if args.instance not in INSTANCES:
        raise ConfigError(f"unknown instance {args.instance!r}; choose from {sorted(INSTANCES)}")
    keys = ["instance", "k_grid", "trials", "seed"]
    cfg = _config_blob(args, keys)
    t0, t1, ell = INSTANCES[args.instance]()
    battery, coloring, overlap, regime = build_battery(t0, t1, ell)
    report = validate_battery(battery)
    print(f"instance {args.instance}: regime {regime}, panels {battery.size}")
    print(report.summary())
    if not report.ok:
        raise TreeError("battery failed validation")
    means = estimate_means(battery, 1)
    rows = []
    ks = _parse_grid(args.k_grid)
    errs = []
    for k in ks:
        start = time.perf_counter()
        e0, e1 = empirical_error(
            battery, k, args.trials, args.seed, means=(means[0] * k, means[1] * k),
            validate=False,
        )
        errs.append(max(e0, e1))
        rows.append(
            {
                "experiment": "battery-power", "instance": args.instance,
                "regime": regime, "panels": battery.size, "k": k,
                "trials": args.trials, "err_ref": f"{e0:.6f}", "err_alt": f"{e1:.6f}",
                "err_max": f"{max(e0, e1):.6f}", "seed": args.seed, "config": cfg,
                "wall_s": f"{time.perf_counter() - start:.3f}",
            }
        )
    a, b, r2 = xp.fit_error_decay(ks, errs, args.trials)
    print(f"fitted ln(max err) = {a:.4f} - {b:.6f} * k   (R^2 = {r2:.4f})")
    _write_csv(
        args.out,
        ["experiment", "instance", "regime", "panels", "k", "trials",
         "err_ref", "err_alt", "err_max", "seed", "config", "wall_s"],
        rows,
    )
    _maybe_plot(args.plot, ks, {"max error": errs}, "k", "max error")
    return EXIT_OK


def _check_band(f: float, g: float, upsilon: float) -> None:
    if f > g:
        raise ConfigError("need f <= g")
    if upsilon < 1.0 / f:
        raise ConfigError("need Upsilon >= 1/f so the grid resolves f")


def cmd_tv_curve(args) -> int:
    keys = ["n", "pairs", "k_grid", "trials", "f", "g", "upsilon", "seed"]
    cfg = _config_blob(args, keys)
    _check_band(args.f, args.g, args.upsilon)
    ks = _parse_grid(args.k_grid)
    fam = xp.tv_pair_family(args.n, args.pairs, args.f, args.g, args.upsilon, args.seed)
    rows = []
    rates = {1: [], 2: []}
    for i, (t0, t1, t2) in enumerate(fam):
        for dbl, alt in ((1, t1), (2, t2)):
            tvs = []
            for k in ks:
                start = time.perf_counter()
                tv, se = xp.estimate_tv_for_pair(t0, alt, k, args.trials, args.seed, i, dbl)
                tvs.append(tv)
                rows.append(
                    {
                        "experiment": "tv-curve", "pair": i, "delta_bl": dbl, "k": k,
                        "trials": args.trials, "tv": f"{tv:.6f}", "se": f"{se:.6f}",
                        "seed": args.seed, "config": cfg,
                        "wall_s": f"{time.perf_counter() - start:.3f}",
                    }
                )
            b = xp.fit_tv_rate(ks, tvs, args.trials)
            if b is not None:
                rates[dbl].append(b)
            rows.append(
                {
                    "experiment": "tv-fit", "pair": i, "delta_bl": dbl, "k": "",
                    "trials": args.trials,
                    "tv": f"{b:.6f}" if b is not None else "saturated",
                    "se": "", "seed": args.seed, "config": cfg, "wall_s": "0.000",
                }
            )
    for dbl in (1, 2):
        if rates[dbl]:
            print(f"mean fitted decay rate b (Delta_BL={dbl}): {np.mean(rates[dbl]):.5f}")
    _write_csv(
        args.out,
        ["experiment", "pair", "delta_bl", "k", "trials", "tv", "se", "seed",
         "config", "wall_s"],
        rows,
    )
    return EXIT_OK


PT_FIELDS = ["experiment", "h", "n", "g", "mode", "k", "trials", "successes",
             "fraction", "k90", "candidates", "seed", "config", "wall_s"]


def cmd_phase_transition(args) -> int:
    keys = ["heights", "g_list", "k_grid", "trials", "ml_mode", "seed", "threads"]
    cfg = _config_blob(args, keys)
    heights = _parse_grid(args.heights)
    if any(h < 2 or h > 5 for h in heights):
        raise ScaleLimitError("phase transition supports h in {2,...,5}")
    if args.trials <= 0:
        _write_csv(args.out, PT_FIELDS, [])
        return EXIT_OK
    ks = _parse_grid(args.k_grid)
    rows = []
    k90s = {}
    for h in heights:
        for g in _parse_floats(args.g_list):
            t0 = build_homogeneous(h, g)
            mode = args.ml_mode
            if mode == "auto":
                mode = "topology-only" if h == 2 else "candidate-set"
            if mode == "candidate-set":
                cands = xp.swap1_candidates(t0)
            elif mode == "topology-only" and h <= 3:
                cands = None
            else:
                raise ScaleLimitError(
                    f"ml mode {mode!r} infeasible at h={h}; use candidate-set"
                )
            seed_hg = int(
                np.random.SeedSequence(
                    entropy=args.seed, spawn_key=(h, int(round(g * 10000)))
                ).generate_state(1)[0]
            )
            start = time.perf_counter()
            if cands is not None:
                k90, sweep = xp.k90_sweep(
                    t0, cands, ks, args.trials, seed_hg, threads=args.threads
                )
            else:
                k90, sweep = _k90_topology_mode(t0, g, ks, args.trials, seed_hg)
            wall = time.perf_counter() - start
            k90s[(h, g)] = k90
            for row in sweep:
                rows.append(
                    {
                        "experiment": "phase-transition", "h": h, "n": 2 ** h,
                        "g": g, "mode": mode, "k": row.k, "trials": row.trials,
                        "successes": row.successes, "fraction": f"{row.fraction:.6f}",
                        "k90": k90 if k90 is not None else -1,
                        "candidates": len(cands) if cands is not None else -1,
                        "seed": args.seed, "config": cfg, "wall_s": f"{wall:.3f}",
                    }
                )
            print(f"h={h} n={2**h} g={g}: k90 = {k90}")
    _write_csv(args.out, PT_FIELDS, rows)
    if args.plot:
        series = {}
        for g in _parse_floats(args.g_list):
            series[f"g={g}"] = [
                k90s.get((h, g)) if k90s.get((h, g)) is not None else float("nan")
                for h in heights
            ]
        _maybe_plot(args.plot, [2 ** h for h in heights], series, "n", "k90")
    return EXIT_OK


def _k90_topology_mode(t0, g, ks, trials, seed):
    """Per-trial topology-only ML (coordinate descent over the grid)."""
    n = t0.n
    space = {"n": n, "f": g, "g": g, "upsilon": t0.upsilon}
    rows = []
    k90 = None
    target_topo = t0.topology_key()
    for k in ks:
        succ = 0
        for t in range(trials):
            aln = sample_markov(t0, k, xp._derive_seed(seed, k, t))
            res = ml_estimate(aln, space, mode="topology-only")
            # a tie counts against the estimator, as in the candidate-set mode
            succ += int(res.tree.topology_key() == target_topo and not res.tie)
        frac = succ / trials
        rows.append(xp.SweepRow(k, trials, succ, frac))
        if frac >= 0.9:
            k90 = k
            break
    return k90, rows


# ----------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cfnphylo",
        description="Desk-scale experiments for symmetric-model phylogeny inference.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out", type=str, default=None)
        p.add_argument("--config", type=str, default=None, help="JSON file with defaults")

    p = sub.add_parser("simulate", help="sample an alignment")
    common(p)
    p.add_argument("--tree", type=str, default=None, help="newick file")
    p.add_argument("--upsilon", type=float, default=10.0)
    p.add_argument("--h", type=int, default=None)
    p.add_argument("--g", type=float, default=0.2)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--r", type=int, default=2)
    p.add_argument("--sampler", choices=["markov", "cluster"], default="markov")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("infer", help="maximum-likelihood tree estimation")
    common(p)
    p.add_argument("--alignment", type=str, required=True)
    p.add_argument("--candidates", type=str, default=None, help="newick list file")
    p.add_argument("--mode", choices=["exhaustive", "topology-only"], default="topology-only")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--f", type=float, default=None)
    p.add_argument("--g", type=float, default=None)
    p.add_argument("--upsilon", type=float, default=10.0)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("asr", help="ancestral reconstruction accuracy and flow bound")
    common(p)
    p.add_argument("--h-list", type=str, default="2,4,6")
    p.add_argument("--g-list", type=str, default="0.2,0.3")
    p.add_argument("--mode", choices=["auto", "exact", "monte-carlo"], default="auto")
    p.add_argument("--trials", type=int, default=20000)
    p.set_defaults(func=cmd_asr)

    p = sub.add_parser("distance", help="combinatorial tree distances")
    common(p)
    p.add_argument("--kind", choices=["swap", "blowup", "blowup-upper"], default="blowup")
    p.add_argument("--tree1", type=str, required=True)
    p.add_argument("--tree2", type=str, required=True)
    p.add_argument("--upsilon", type=float, default=10.0)
    p.add_argument("--ell", type=int, default=2)
    p.set_defaults(func=cmd_distance)

    p = sub.add_parser("battery-power", help="build a battery and sweep its error")
    common(p)
    p.add_argument("--instance", type=str, default="single-swap-h4")
    p.add_argument("--k-grid", type=str, default="4,8,16,32,64")
    p.add_argument("--trials", type=int, default=2000)
    p.add_argument("--plot", type=str, default=None)
    p.set_defaults(func=cmd_battery_power)

    p = sub.add_parser("tv-curve", help="TV distance versus k per blow-up distance")
    common(p)
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--pairs", type=int, default=10)
    p.add_argument("--k-grid", type=str, default="1,2,4,8,16")
    p.add_argument("--trials", type=int, default=300)
    p.add_argument("--f", type=float, default=0.1)
    p.add_argument("--g", type=float, default=0.3)
    p.add_argument("--upsilon", type=float, default=10.0)
    p.set_defaults(func=cmd_tv_curve)

    p = sub.add_parser("phase-transition", help="k90 versus n around the threshold")
    common(p)
    p.add_argument("--heights", type=str, default="2,3,4,5")
    p.add_argument("--g-list", type=str, default="0.2,0.6")
    p.add_argument("--k-grid", type=str, default="8,16,32,64,128,256,512,1024,2048,4096,8192,16384")
    p.add_argument("--trials", type=int, default=40)
    p.add_argument(
        "--ml-mode", choices=["auto", "candidate-set", "topology-only"], default="candidate-set"
    )
    p.add_argument("--plot", type=str, default=None)
    p.set_defaults(func=cmd_phase_transition)

    return parser


def _apply_config_file(args) -> None:
    if not getattr(args, "config", None):
        return
    with open(args.config, "r", encoding="utf-8") as fh:
        defaults = json.load(fh)
    for key, val in defaults.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise ConfigError(f"unknown config key {key!r}")
        if attr not in args._explicit:
            setattr(args, attr, val)


class _TrackingParser(argparse.ArgumentParser):
    pass


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        # remember which flags were given explicitly so --config cannot
        # override them
        explicit = set()
        for tok in argv:
            if tok.startswith("--"):
                explicit.add(tok[2:].split("=")[0].replace("-", "_"))
        args._explicit = explicit
        _apply_config_file(args)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ScaleLimitError as exc:
        print(f"scale limit: {exc}", file=sys.stderr)
        return EXIT_SCALE
    except TreeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
