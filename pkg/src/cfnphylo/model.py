"""The r-state symmetric substitution model on a phylogeny.

States are 0..r-1 internally with the uniform stationary distribution.
For r = 2 the spin convention is sigma = +1 for state 0 and -1 for state 1,
so that E[sigma_a sigma_b] = exp(-d(a,b)).

Two samplers are provided: the direct Markov broadcast and, for r = 2, the
random-cluster (percolation) representation.  Both are pure functions of
(tree, k, seed); seeds are derived with counter-based streams so results
are bit-reproducible regardless of scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .trees import Phylogeny, TreeError, _default_root


def rng_for(seed: int, *path: int) -> np.random.Generator:
    """Independent deterministic stream for a (seed, path) pair."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def delta_from_weight(w: float, r: int = 2) -> float:
    """Substitution parameter delta = (1/r)(1 - e^{-w})."""
    if w < 0:
        raise ValueError("negative branch length")
    if r < 2:
        raise ValueError("need r >= 2")
    return (1.0 - math.exp(-w)) / r


@dataclass(frozen=True)
class SubstitutionModel:
    """Rate matrix Q with off-diagonal 1/r and stationary uniform distribution."""

    r: int = 2

    @property
    def rate_matrix(self) -> np.ndarray:
        r = self.r
        q = np.full((r, r), 1.0 / r)
        np.fill_diagonal(q, -(r - 1) / r)
        return q

    @property
    def stationary(self) -> np.ndarray:
        return np.full(self.r, 1.0 / self.r)


@dataclass(frozen=True)
class EdgeChannel:
    """Per-edge transition matrix M = exp(w Q) in closed form."""

    w: float
    r: int = 2

    @property
    def delta(self) -> float:
        return delta_from_weight(self.w, self.r)

    @property
    def theta(self) -> float:
        return math.exp(-self.w)

    @property
    def matrix(self) -> np.ndarray:
        d = self.delta
        m = np.full((self.r, self.r), d)
        np.fill_diagonal(m, 1.0 - (self.r - 1) * d)
        return m


def transition_matrix(w: float, r: int = 2) -> EdgeChannel:
    return EdgeChannel(w, r)


class Alignment:
    """k x n matrix of leaf states; column a-1 holds leaf label a."""

    __slots__ = ("states", "r")

    def __init__(self, states: np.ndarray, r: int = 2):
        states = np.asarray(states, dtype=np.int8)
        if states.ndim != 2:
            raise ValueError("alignment must be a k x n matrix")
        if states.size and (states.min() < 0 or states.max() >= r):
            raise ValueError("states outside [0, r)")
        self.states = states
        self.r = int(r)

    @property
    def k(self) -> int:
        return self.states.shape[0]

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def spins(self) -> np.ndarray:
        """+/-1 representation (r = 2 only)."""
        if self.r != 2:
            raise ValueError("spin view requires r = 2")
        return (1 - 2 * self.states.astype(np.int64)).astype(np.int8)

    @classmethod
    def from_spins(cls, spins: np.ndarray) -> "Alignment":
        spins = np.asarray(spins)
        return cls(((1 - spins) // 2).astype(np.int8), r=2)

    def __eq__(self, other):
        return (
            isinstance(other, Alignment)
            and self.r == other.r
            and np.array_equal(self.states, other.states)
        )


def _downward_order(tree: Phylogeny, root: int) -> List[Tuple[int, int]]:
    """Edges (parent, child) in top-down order."""
    par = tree.parents_from(root)
    order = sorted(tree.adj, key=lambda v: tree.graph_dist(root, v))
    return [(par[v], v) for v in order if par[v] is not None]


def sample_markov(tree: Phylogeny, k: int, seed: int, r: int = 2) -> Alignment:
    """k i.i.d. sites: uniform root state, each edge applies its channel."""
    root = tree.root if tree.root is not None else _default_root(tree)
    rng = rng_for(seed, 0)
    states: Dict[int, np.ndarray] = {root: rng.integers(0, r, size=k, dtype=np.int8)}
    for parent, child in _downward_order(tree, root):
        w = tree.weight(parent, child)
        sub_p = (r - 1) * delta_from_weight(w, r)
        mutate = rng.random(k) < sub_p
        shift = rng.integers(1, r, size=k, dtype=np.int8)
        s = states[parent].copy()
        s[mutate] = (s[mutate] + shift[mutate]) % r
        states[child] = s
    cols = [states[tree.vertex_of_label[a]] for a in range(1, tree.n + 1)]
    return Alignment(np.stack(cols, axis=1) if cols else np.zeros((k, 0), np.int8), r=r)


def sample_random_cluster(tree: Phylogeny, k: int, seed: int, r: int = 2) -> Alignment:
    """Percolation sampler: edge open w.p. 1 - 2*delta_e, uniform spin per
    open component (random-cluster representation; r = 2 only).

    On a tree the open components are labeled in one top-down pass: a child
    joins its parent's component exactly when the connecting edge is open.
    """
    if r != 2:
        raise ValueError("random-cluster sampler requires r = 2")
    rng = rng_for(seed, 1)
    root = tree.root if tree.root is not None else _default_root(tree)
    verts = sorted(tree.adj)
    vidx = {v: i for i, v in enumerate(verts)}
    comp: Dict[int, np.ndarray] = {root: np.full(k, vidx[root], dtype=np.int32)}
    for parent, child in _downward_order(tree, root):
        p_open = 1.0 - 2.0 * delta_from_weight(tree.weight(parent, child), 2)
        is_open = rng.random(k) < p_open
        comp[child] = np.where(is_open, comp[parent], vidx[child]).astype(np.int32)
    spins_pool = rng.integers(0, 2, size=(k, len(verts)), dtype=np.int8)
    cols = [
        spins_pool[np.arange(k), comp[tree.vertex_of_label[a]]]
        for a in range(1, tree.n + 1)
    ]
    out = np.stack(cols, axis=1) if cols else np.zeros((k, 0), np.int8)
    return Alignment(out, r=2)


def exact_leaf_distribution(
    tree: Phylogeny, r: int = 2, root: Optional[int] = None, limit: int = 16
) -> Dict[tuple, float]:
    """Exact distribution of the leaf pattern, as {pattern tuple: probability}.

    For r = 2 patterns are spin tuples (+1/-1); otherwise state tuples.
    Computed by one dynamic program over all r^n patterns; n is capped.
    """
    n = tree.n
    if r ** n > 2 ** limit:
        raise TreeError(f"exact distribution limited to r^n <= 2^{limit}")
    if root is None:
        root = tree.root if tree.root is not None else _default_root(tree)
    leaf_order = {tree.vertex_of_label[a]: a - 1 for a in range(1, n + 1)}

    # message[v] has shape (r, r**m) over the m leaves at or below v; children
    # are folded in with an outer product.
    def message(v: int, parent: Optional[int]):
        if tree.is_leaf(v):
            msg = np.eye(r)
            cols = [leaf_order[v]]
        else:
            msg = np.ones((r, 1), dtype=float)
            cols = []
        for c in tree.adj[v]:
            if c == parent:
                continue
            cm, ccols = message(c, v)
            ch = EdgeChannel(tree.weight(v, c), r).matrix
            lifted = ch @ cm.reshape(r, -1)
            msg = (msg[:, :, None] * lifted[:, None, :]).reshape(r, -1)
            cols.extend(ccols)
        return msg, cols

    msg, cols = message(root, None)
    probs = msg.sum(axis=0) / r
    # cols[i] is the leaf (0-based) whose state varies with stride r**(m-1-i)
    out: Dict[tuple, float] = {}
    m = len(cols)
    for idx, p in enumerate(probs):
        states = [0] * n
        rem = idx
        for i in range(m - 1, -1, -1):
            states[cols[i]] = rem % r
            rem //= r
        if r == 2:
            key = tuple(1 - 2 * s for s in states)
        else:
            key = tuple(states)
        out[key] = out.get(key, 0.0) + float(p)
    return out


def two_point_correlation(tree: Phylogeny, a: int, b: int) -> float:
    """E[sigma_a sigma_b] = exp(-d(a, b)) for the 2-state model."""
    units = tree.metric().units[a - 1, b - 1]
    return math.exp(-units / tree.upsilon)


# ----------------------------------------------------------------------
# alignment file format
# ----------------------------------------------------------------------

_FASTA_MAP = {"A": 0, "C": 1, "G": 2, "T": 3}


def write_alignment(path: str, aln: Alignment) -> None:
    """Plain text: header "k n r", then one site per line ('+'/'-' for r=2,
    digits 0..r-1 otherwise)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{aln.k} {aln.n} {aln.r}\n")
        if aln.r == 2:
            lut = np.array(["+", "-"])
        else:
            if aln.r > 10:
                raise ValueError("text format supports r <= 10")
            lut = np.array([str(i) for i in range(aln.r)])
        for row in aln.states:
            fh.write("".join(lut[row]) + "\n")


def read_alignment(path: str) -> Alignment:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ValueError("bad alignment header; expected 'k n r'")
        k, n, r = (int(x) for x in header)
        states = np.zeros((k, n), dtype=np.int8)
        for i in range(k):
            line = fh.readline().strip()
            if len(line) != n:
                raise ValueError(f"site {i} has {len(line)} states, expected {n}")
            if r == 2:
                states[i] = [0 if ch == "+" else 1 for ch in line]
            else:
                states[i] = [int(ch) for ch in line]
    return Alignment(states, r=r)


def read_fasta(path: str) -> Alignment:
    """FASTA import for r = 4 (ACGT -> 0..3); record names are leaf labels."""
    seqs: Dict[int, str] = {}
    name = None
    buf: List[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith(">"):
                if name is not None:
                    seqs[name] = "".join(buf)
                raw = line[1:].strip()
                try:
                    name = int(raw)
                except ValueError:
                    name = len(seqs) + 1
                buf = []
            else:
                buf.append(line.upper())
        if name is not None:
            seqs[name] = "".join(buf)
    if not seqs:
        raise ValueError("empty FASTA file")
    n = len(seqs)
    if sorted(seqs) != list(range(1, n + 1)):
        raise ValueError("FASTA records must be labeled 1..n")
    k = len(seqs[1])
    states = np.zeros((k, n), dtype=np.int8)
    for a in range(1, n + 1):
        if len(seqs[a]) != k:
            raise ValueError("FASTA sequences have unequal lengths")
        try:
            states[:, a - 1] = [_FASTA_MAP[ch] for ch in seqs[a]]
        except KeyError as exc:
            raise ValueError(f"non-ACGT character {exc} in FASTA input")
    return Alignment(states, r=4)
