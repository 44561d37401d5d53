"""Batched experiment kernels behind the CLI: candidate-set maximum
likelihood trials, k90 sweeps, TV-curve estimation and curve fits.

Trials are partitioned into a fixed number of seed blocks, so results are
bit-identical for any worker count; parallelism only distributes whole
blocks.
"""

from __future__ import annotations

import math
import multiprocessing
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .distances import BlowupMove, blowup_apply, blowup_distance_exact, swap_moves, swap_apply
from .likelihood import site_loglik
from .model import rng_for, sample_markov
from .trees import Phylogeny, TreeError, random_regular_phylogeny

N_SEED_BLOCKS = 8


def tree_spec(tree: Phylogeny):
    return (
        tuple(tree.edges()),
        tuple(sorted(tree.vertex_of_label.items())),
        tree.upsilon,
        tree.root,
    )


def tree_from_spec(spec) -> Phylogeny:
    edges, labels, upsilon, root = spec
    return Phylogeny(list(edges), dict(labels), upsilon, root=root)


def swap1_candidates(t0: Phylogeny) -> List[Phylogeny]:
    """{t0} plus all metric classes at swap distance one, in canonical order."""
    seen = {t0.metric_key(): t0}
    for mv in swap_moves(t0):
        t2 = swap_apply(t0, mv)
        seen.setdefault(t2.metric_key(), t2)
    return sorted(seen.values(), key=lambda t: t.canonical_key())


def _ml_block(args) -> np.ndarray:
    """Per-trial strict success flags for one seed block.

    Success means the true topology is strictly preferred over every other
    candidate; a likelihood tie counts against the estimator, matching the
    failure events {L_alt <= L_true} whose union the theory bounds.
    """
    t0_spec, cand_specs, topo_match, k, trials, seed, block = args
    t0 = tree_from_spec(t0_spec)
    cands = [tree_from_spec(s) for s in cand_specs]
    aln = sample_markov(t0, k * trials, seed)
    ll = np.empty((len(cands), trials))
    for i, cand in enumerate(cands):
        ll[i] = site_loglik(cand, aln.states, 2).reshape(trials, k).sum(axis=1)
    is_true = np.asarray(topo_match, dtype=bool)
    best_true = ll[is_true].max(axis=0)
    best_other = ll[~is_true].max(axis=0)
    return best_true > best_other


def ml_success_fraction(
    t0: Phylogeny,
    candidates: Sequence[Phylogeny],
    k: int,
    trials: int,
    seed: int,
    threads: int = 1,
) -> float:
    """Fraction of trials in which the true leaf-labeled topology strictly
    beats every other candidate (ties count as failures)."""
    cands = sorted(candidates, key=lambda t: t.canonical_key())
    target = t0.topology_key()
    topo_match = tuple(c.topology_key() == target for c in cands)
    if not any(topo_match) or all(topo_match):
        raise TreeError("candidate set must contain the truth and a rival")
    blocks = min(N_SEED_BLOCKS, trials)
    sizes = [trials // blocks + (1 if b < trials % blocks else 0) for b in range(blocks)]
    t0s = tree_spec(t0)
    cspecs = [tree_spec(c) for c in cands]
    tasks = [
        (t0s, cspecs, topo_match, k, sizes[b], _derive_seed(seed, k, b), b)
        for b in range(blocks)
        if sizes[b] > 0
    ]
    results = parallel_map(_ml_block, tasks, threads)
    return float(np.concatenate(results).mean())


def _derive_seed(seed: int, k: int, block: int) -> int:
    return int(np.random.SeedSequence(entropy=seed, spawn_key=(k, block)).generate_state(1)[0])


def parallel_map(fn, tasks, threads: int):
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with multiprocessing.get_context("fork").Pool(min(threads, len(tasks))) as pool:
        return pool.map(fn, tasks)


@dataclass
class SweepRow:
    k: int
    trials: int
    successes: int
    fraction: float


def k90_sweep(
    t0: Phylogeny,
    candidates: Sequence[Phylogeny],
    k_grid: Sequence[int],
    trials: int,
    seed: int,
    threads: int = 1,
    target: float = 0.9,
) -> Tuple[Optional[int], List[SweepRow]]:
    """Walk the k grid upward until the success fraction reaches ``target``;
    returns (k90 or None, rows for every evaluated k)."""
    rows = []
    k90 = None
    for k in k_grid:
        frac = ml_success_fraction(t0, candidates, k, trials, seed, threads)
        rows.append(SweepRow(k, trials, int(round(frac * trials)), frac))
        if frac >= target:
            k90 = k
            break
    return k90, rows


# ----------------------------------------------------------------------
# blow-up pair construction for the TV curve
# ----------------------------------------------------------------------


def _random_one_blowup(
    tree: Phylogeny, g: float, rng: np.random.Generator, max_tries: int = 200
) -> Phylogeny:
    edges = [(u, v) for (u, v, _) in tree.edges()]
    max_units = int(round(g * tree.upsilon))
    for _ in range(max_tries):
        u, v = edges[int(rng.integers(0, len(edges)))]
        adj = {x: dict(tree.adj[x]) for x in tree.adj}
        del adj[u][v]
        del adj[v][u]
        verts = sorted(x for x in adj if adj[x] or tree.is_leaf(x))
        pairs = [
            (a, b)
            for ai, a in enumerate(verts)
            for b in verts[ai + 1 :]
            if b not in adj[a]
        ]
        a, b = pairs[int(rng.integers(0, len(pairs)))]
        w = int(rng.integers(1, max_units + 1))
        try:
            return blowup_apply(tree, BlowupMove(((u, v),), ((a, b, w),)))
        except TreeError:
            continue
    raise TreeError("could not sample a valid 1-blowup")


def random_blowup_at_distance(
    t0: Phylogeny, target: int, g: float, rng: np.random.Generator, max_tries: int = 400
) -> Phylogeny:
    """A tree at exact blow-up distance ``target`` from t0 (verified by the
    exact oracle), reached by composing valid 1-blowups."""
    for _ in range(max_tries):
        t = t0
        try:
            for _ in range(target):
                t = _random_one_blowup(t, g, rng)
        except TreeError:
            continue
        if blowup_distance_exact(t0, t) == target:
            return t
    raise TreeError(f"could not hit blow-up distance {target} in {max_tries} tries")


def estimate_tv_for_pair(
    t0: Phylogeny, alt: Phylogeny, k: int, trials: int, seed: int, pair: int, dbl: int
) -> Tuple[float, float]:
    """k-sample TV estimate with a stream derived from (pair, distance, k)."""
    from .likelihood import estimate_tv_k

    sub = _derive_seed(seed, 1000 * pair + dbl, k)
    return estimate_tv_k(t0, alt, k, trials, sub)


def tv_pair_family(
    n: int,
    count: int,
    f: float,
    g: float,
    upsilon: float,
    seed: int,
) -> List[Tuple[Phylogeny, Phylogeny, Phylogeny]]:
    """(t0, t1 at distance 1, t2 at distance 2) triples for the TV study."""
    out = []
    for i in range(count):
        rng = rng_for(seed, 20, i)
        t0 = random_regular_phylogeny(n, f, g, upsilon, rng)
        t1 = random_blowup_at_distance(t0, 1, g, rng)
        t2 = random_blowup_at_distance(t0, 2, g, rng)
        out.append((t0, t1, t2))
    return out


# ----------------------------------------------------------------------
# fits
# ----------------------------------------------------------------------


def linear_fit(x: Sequence[float], y: Sequence[float]) -> Tuple[float, float, float]:
    """Least-squares y = a + b x; returns (a, b, r_squared)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two points to fit")
    b, a = np.polyfit(x, y, 1)
    resid = y - (a + b * x)
    ss_res = float((resid ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(a), float(b), r2


def fit_error_decay(ks: Sequence[int], errors: Sequence[float], trials: int) -> Tuple[float, float, float]:
    """Fit ln(err) = a - b k, clamping zero error estimates to 1/(2*trials).

    Returns (a, b, r_squared) with b > 0 meaning exponential decay.
    """
    floor = 1.0 / (2.0 * trials)
    ys = [math.log(max(e, floor)) for e in errors]
    a, slope, r2 = linear_fit(list(ks), ys)
    return a, -slope, r2


def fit_tv_rate(ks: Sequence[int], tvs: Sequence[float], trials: int) -> Optional[float]:
    """Fit TV^k ~ 1 - a*exp(-b k) via ln(1 - TV) = ln a - b k, using only
    non-saturated points; returns b (None if fewer than two usable points)."""
    ceil = 1.0 - 1.0 / (2.0 * trials)
    pts = [(k, math.log(1.0 - tv)) for k, tv in zip(ks, tvs) if tv < ceil]
    if len(pts) < 2:
        return None
    _, slope, _ = linear_fit([p[0] for p in pts], [p[1] for p in pts])
    return -slope
