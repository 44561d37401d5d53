"""Likelihood computation, ML tree estimation, ancestral state
reconstruction and information-distance oracles for the symmetric model.

The log-likelihood convention follows the estimation target used across
the package: L_T = -sum_i ln mu_T(site_i), so smaller is better and the
ML estimate is the argmin over the candidate set.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .model import Alignment, EdgeChannel, delta_from_weight, rng_for, sample_markov
from .trees import (
    Phylogeny,
    Point,
    RestrictedSubtree,
    ScaleLimitError,
    TreeError,
    _default_root,
    edge_key,
)

_CLAMP = 1e-300


@dataclass(frozen=True)
class LogLikelihood:
    """Negative log-probability of an alignment under one tree."""

    value: float
    k: int
    clamped: bool = False


@dataclass(frozen=True)
class PosteriorPair:
    p_plus: float
    p_minus: float

    def mle_state(self) -> int:
        """+1 iff p_plus > p_minus, else -1 (ties to -1)."""
        return 1 if self.p_plus > self.p_minus else -1


@dataclass
class MLResult:
    tree: Phylogeny
    neg_log_lik: float
    candidates_scored: int
    tie: bool


# ----------------------------------------------------------------------
# pruning
# ----------------------------------------------------------------------


def _postorder(tree: Phylogeny, root: int) -> List[int]:
    return sorted(tree.adj, key=lambda v: -tree.graph_dist(root, v))


def site_loglik(tree: Phylogeny, states: np.ndarray, r: int = 2) -> np.ndarray:
    """Vector of per-site natural-log likelihoods for a (k, n) state matrix."""
    k = states.shape[0]
    if states.shape[1] != tree.n:
        raise TreeError("alignment width does not match leaf count")
    root = tree.root if tree.root is not None else _default_root(tree)
    par = tree.parents_from(root)
    msgs: Dict[int, np.ndarray] = {}
    lognorm = np.zeros(k)
    col = {tree.vertex_of_label[a]: a - 1 for a in range(1, tree.n + 1)}
    for v in _postorder(tree, root):
        if tree.is_leaf(v) and tree.degree(v) <= 1 and v != root:
            m = np.zeros((r, k))
            m[states[:, col[v]].astype(np.intp), np.arange(k)] = 1.0
        else:
            m = np.ones((r, k))
            if tree.is_leaf(v):  # degenerate: a leaf serving as root
                m = np.zeros((r, k))
                m[states[:, col[v]].astype(np.intp), np.arange(k)] = 1.0
            for c in tree.adj[v]:
                if c == par[v]:
                    continue
                ch = EdgeChannel(tree.weight(v, c), r).matrix
                m = m * (ch @ msgs.pop(c))
            z = m.sum(axis=0)
            np.maximum(z, _CLAMP, out=z)
            m /= z
            lognorm += np.log(z)
        msgs[v] = m
    lik = msgs[root].sum(axis=0) / r
    out = np.where(lik > 0, np.log(np.maximum(lik, _CLAMP)) + lognorm, -np.inf)
    return out


def site_likelihood(tree: Phylogeny, pattern: Sequence[int], r: int = 2) -> float:
    """Probability of one leaf pattern (spins for r=2, else states)."""
    states = _pattern_to_states(pattern, r)
    return float(np.exp(site_loglik(tree, states[None, :], r)[0]))


def _pattern_to_states(pattern: Sequence[int], r: int) -> np.ndarray:
    arr = np.asarray(pattern)
    if r == 2 and arr.size and set(np.unique(arr)).issubset({-1, 1}):
        arr = (1 - arr) // 2
    return arr.astype(np.int8)


def brute_force_site_likelihood(tree: Phylogeny, pattern: Sequence[int], r: int = 2) -> float:
    """Oracle: explicit sum over all internal-state assignments."""
    states = _pattern_to_states(pattern, r)
    root = tree.root if tree.root is not None else _default_root(tree)
    internal = [v for v in tree.adj if not tree.is_leaf(v)]
    if tree.is_leaf(root) and root in internal:
        internal.remove(root)
    fixed = {tree.vertex_of_label[a]: int(states[a - 1]) for a in range(1, tree.n + 1)}
    if len(internal) > 16:
        raise ScaleLimitError("brute force limited to 16 internal vertices")
    total = 0.0
    channels = {edge_key(u, v): EdgeChannel(w / tree.upsilon, r).matrix for u, v, w in tree.edges()}
    for assign in itertools.product(range(r), repeat=len(internal)):
        s = dict(fixed)
        s.update(zip(internal, assign))
        p = 1.0 / r
        for u, v, _ in tree.edges():
            p *= channels[edge_key(u, v)][s[u], s[v]]
        total += p
    return total


def log_likelihood(tree: Phylogeny, aln: Alignment) -> LogLikelihood:
    if aln.k == 0:
        return LogLikelihood(0.0, 0)
    ll = site_loglik(tree, aln.states, aln.r)
    if np.isneginf(ll).any():
        return LogLikelihood(math.inf, aln.k, clamped=True)
    return LogLikelihood(-float(ll.sum()), aln.k)


# ----------------------------------------------------------------------
# maximum likelihood over tree space
# ----------------------------------------------------------------------


def _compress_sites(states: np.ndarray, r: int) -> Tuple[np.ndarray, np.ndarray]:
    """Unique site patterns and their counts (sites are i.i.d., so the
    log-likelihood is a weighted sum over distinct patterns)."""
    n = states.shape[1]
    if n <= 16 and r ** n < states.shape[0] // 2:
        uniq, counts = np.unique(states, axis=0, return_counts=True)
        return uniq, counts.astype(float)
    return states, np.ones(states.shape[0])


def _score_candidates(cands: List[Phylogeny], states: np.ndarray, r: int) -> np.ndarray:
    uniq, counts = _compress_sites(states, r)
    return np.array([-(counts * site_loglik(t, uniq, r)).sum() for t in cands])


def ml_estimate(
    aln: Alignment,
    space: Union[List[Phylogeny], dict],
    mode: str = "candidate-list",
) -> MLResult:
    """Minimize L_T over a candidate space.

    Modes: "candidate-list" (space = explicit list of trees), "exhaustive"
    (all topologies x full per-edge weight grid; tiny n only) and
    "topology-only" (all topologies, branch lengths fitted by cyclic
    coordinate descent on the grid).  Ties are broken by canonical
    topology order, so results are deterministic.
    """
    from .trees import enumerate_topologies

    if mode == "candidate-list":
        cands = list(space)
        if not cands:
            raise TreeError("empty candidate set")
        scores = _score_candidates(cands, aln.states, aln.r)
        order = sorted(range(len(cands)), key=lambda i: (scores[i], cands[i].canonical_key()))
        best = order[0]
        tie = len(cands) > 1 and scores[order[1]] == scores[best]
        return MLResult(cands[best], float(scores[best]), len(cands), tie)

    if mode not in ("exhaustive", "topology-only"):
        raise TreeError(f"unknown ml mode {mode!r}")
    n = int(space["n"])
    f, g, upsilon = float(space["f"]), float(space["g"]), float(space["upsilon"])
    lo, hi = int(round(f * upsilon)), int(round(g * upsilon))
    grid = list(range(lo, hi + 1))
    topo_limit = int(space.get("limit", 8))

    if mode == "exhaustive":
        from .trees import double_factorial_odd

        if n > 6:
            raise ScaleLimitError("exhaustive weight-grid mode limited to n <= 6")
        n_edges = 2 * n - 3
        total = (len(grid) ** n_edges) * double_factorial_odd(n)
        if total > int(space.get("max_candidates", 500_000)):
            raise ScaleLimitError("exhaustive candidate space too large")
        uniq, counts = _compress_sites(aln.states, aln.r)
        best = None
        count = 0
        tie = False
        for topo in enumerate_topologies(n, upsilon=upsilon, limit=topo_limit):
            edges = topo.edges()
            for combo in itertools.product(grid, repeat=len(edges)):
                t = topo.replaced(
                    edges=[(u, v, w) for (u, v, _), w in zip(edges, combo)], check=False
                )
                count += 1
                s = -(counts * site_loglik(t, uniq, aln.r)).sum()
                key = (s, t.canonical_key())
                if best is None or key < best[0]:
                    tie = best is not None and s == best[0][0]
                    best = (key, t)
                elif s == best[0][0]:
                    tie = True
        return MLResult(best[1], float(best[0][0]), count, tie)

    # topology-only: coordinate descent per topology
    uniq, counts = _compress_sites(aln.states, aln.r)
    best = None
    count = 0
    tie = False
    init = int(round((f + g) / 2 * upsilon))
    init = min(max(init, lo), hi)
    for topo in enumerate_topologies(n, upsilon=upsilon, limit=topo_limit):
        edges = topo.edges()

        def score(units_vec):
            t = topo.replaced(
                edges=[(u, v, w) for (u, v, _), w in zip(edges, units_vec)], check=False
            )
            return t, -(counts * site_loglik(t, uniq, aln.r)).sum()

        units = [init] * len(edges)
        t, s = score(units)
        improved = True
        while improved:
            improved = False
            for ei in range(len(edges)):
                for w in grid:
                    if w == units[ei]:
                        continue
                    trial = list(units)
                    trial[ei] = w
                    t2, s2 = score(trial)
                    if s2 < s:
                        s, units, t = s2, trial, t2
                        improved = True
        count += 1
        key = (s, t.canonical_key())
        if best is None or key < best[0]:
            tie = best is not None and s == best[0][0]
            best = (key, t)
        elif s == best[0][0]:
            tie = True
    return MLResult(best[1], float(best[0][0]), count, tie)


# ----------------------------------------------------------------------
# rooted computation structure (posteriors, accuracy, flow bound)
# ----------------------------------------------------------------------


class RootedStructure:
    """A rooted weighted tree prepared for vectorized upward/downward passes.

    Nodes are indexed 0..m-1 in a postorder (children before parents);
    ``children[i]`` lists (child_index, branch_length).  Leaves carry the
    leaf label they observe.  Built from a whole rooted phylogeny or from a
    rooted restricted subtree (interior-point roots split their edge).
    """

    def __init__(self):
        self.children: List[List[Tuple[int, float]]] = []
        self.leaf_label: List[Optional[int]] = []
        self.order: List[int] = []
        self.root_index: int = -1

    # -- constructors ---------------------------------------------------

    @classmethod
    def from_tree(cls, tree: Phylogeny, root: Optional[int] = None) -> "RootedStructure":
        root = root if root is not None else (tree.root if tree.root is not None else _default_root(tree))
        struct = cls()

        def add_node(v: int, parent) -> int:
            idx = len(struct.children)
            struct.children.append([])
            struct.leaf_label.append(tree.label_of_vertex.get(v))
            for c in tree.adj[v]:
                if c == parent:
                    continue
                ci = add_node(c, v)
                struct.children[idx].append((ci, tree.weight(v, c)))
            return idx

        struct.root_index = add_node(root, None)
        struct.order = list(range(len(struct.children)))
        return struct

    @classmethod
    def from_subtree(cls, sub: RestrictedSubtree) -> "RootedStructure":
        tree = sub.tree
        if sub.root is None:
            raise TreeError("need a rooted subtree")
        kids = sub.rooted_children()
        struct = cls()

        def add_node(v: int) -> int:
            idx = len(struct.children)
            struct.children.append([])
            struct.leaf_label.append(tree.label_of_vertex.get(v) if tree.is_leaf(v) else None)
            for c in kids.get(v, []):
                ci = add_node(c)
                struct.children[idx].append((ci, tree.weight(v, c)))
            return idx

        if isinstance(sub.root, Point):
            ridx_children = []
            w = tree.weight_units(sub.root.u, sub.root.v)
            for end, units in ((sub.root.u, sub.root.offset), (sub.root.v, w - sub.root.offset)):
                if end in sub.vertices:
                    ridx_children.append((add_node(end), units / tree.upsilon))
            idx = len(struct.children)
            struct.children.append(ridx_children)
            struct.leaf_label.append(None)
            struct.root_index = idx
        else:
            if sub.root not in sub.vertices and not sub.edges:
                # single-vertex subtree
                struct.children.append([])
                struct.leaf_label.append(tree.label_of_vertex.get(sub.root))
                struct.root_index = 0
            else:
                struct.root_index = add_node(sub.root)
        struct.order = list(range(len(struct.children)))
        return struct

    # -- derived quantities ----------------------------------------------

    def leaf_labels(self) -> List[int]:
        return sorted(l for l in self.leaf_label if l is not None)

    def num_leaves(self) -> int:
        return sum(1 for l in self.leaf_label if l is not None)

    def _upward(self, spin_cols: Dict[int, np.ndarray], k: int) -> Tuple[np.ndarray, np.ndarray]:
        """Unnormalized (m_plus, m_minus) messages at the root; columns are sites."""
        mp: Dict[int, np.ndarray] = {}
        mm: Dict[int, np.ndarray] = {}

        def rec(i: int):
            lab = self.leaf_label[i]
            if lab is not None and not self.children[i]:
                s = spin_cols[lab]
                mp[i] = (s == 1).astype(float)
                mm[i] = (s == -1).astype(float)
                return
            p = np.ones(k)
            m = np.ones(k)
            if lab is not None:
                s = spin_cols[lab]
                p = (s == 1).astype(float)
                m = (s == -1).astype(float)
            for ci, w in self.children[i]:
                rec(ci)
                d = delta_from_weight(w, 2)
                lp = (1 - d) * mp[ci] + d * mm[ci]
                lm = d * mp[ci] + (1 - d) * mm[ci]
                p = p * lp
                m = m * lm
                del mp[ci], mm[ci]
            z = np.maximum(p + m, _CLAMP)
            mp[i] = p / z
            mm[i] = m / z

        rec(self.root_index)
        return mp[self.root_index], mm[self.root_index]

    def root_posteriors(self, spins: np.ndarray, labels: Sequence[int]) -> np.ndarray:
        """(k, 2) array of (p_plus, p_minus) for k sites of +-1 leaf spins.

        ``spins[:, j]`` is the column for leaf label ``labels[j]``.
        """
        k = spins.shape[0]
        cols = {lab: spins[:, j] for j, lab in enumerate(labels)}
        p, m = self._upward(cols, k)
        z = np.maximum(p + m, _CLAMP)
        return np.stack([p / z, m / z], axis=1)

    def root_sign(self, spins: np.ndarray, labels: Sequence[int]) -> np.ndarray:
        """Per-site MLE sign of the root state: +1 iff p_plus > p_minus else -1."""
        post = self.root_posteriors(spins, labels)
        return np.where(post[:, 0] > post[:, 1], 1, -1).astype(np.int8)

    def enumerate_patterns(self) -> Tuple[np.ndarray, List[int]]:
        """All 2^L spin patterns as a (2^L, L) matrix plus the label order."""
        labels = self.leaf_labels()
        L = len(labels)
        if L > 20:
            raise ScaleLimitError("pattern enumeration limited to 20 leaves")
        grid = np.array(list(itertools.product((1, -1), repeat=L)), dtype=np.int8)
        return grid.reshape(-1, L), labels

    def conditional_pattern_probs(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, List[int]]:
        """(P[pattern | +1], P[pattern | -1], patterns, labels) by enumeration."""
        patterns, labels = self.enumerate_patterns()
        k = patterns.shape[0]
        cols = {lab: patterns[:, j] for j, lab in enumerate(labels)}
        # unnormalized messages conditioned on the root state are exactly
        # P[pattern | state]; redo the upward pass without normalization
        mp: Dict[int, np.ndarray] = {}
        mm: Dict[int, np.ndarray] = {}

        def rec(i: int):
            lab = self.leaf_label[i]
            if lab is not None and not self.children[i]:
                s = cols[lab]
                mp[i] = (s == 1).astype(float)
                mm[i] = (s == -1).astype(float)
                return
            p = np.ones(k)
            m = np.ones(k)
            if lab is not None:
                s = cols[lab]
                p = (s == 1).astype(float)
                m = (s == -1).astype(float)
            for ci, w in self.children[i]:
                rec(ci)
                d = delta_from_weight(w, 2)
                lp = (1 - d) * mp[ci] + d * mm[ci]
                lm = d * mp[ci] + (1 - d) * mm[ci]
                p, m = p * lp, m * lm
                del mp[ci], mm[ci]
            mp[i], mm[i] = p, m

        rec(self.root_index)
        return mp[self.root_index], mm[self.root_index], patterns, labels

    def sample_leaf_spins(self, k: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, List[int]]:
        """Simulate k sites; returns (root_spins, leaf_spins (k,L), labels)."""
        labels = self.leaf_labels()
        pos = {lab: j for j, lab in enumerate(labels)}
        out = np.zeros((k, len(labels)), dtype=np.int8)
        root_spin = rng.integers(0, 2, size=k, dtype=np.int8) * (-2) + 1

        def rec(i: int, spins: np.ndarray):
            lab = self.leaf_label[i]
            if lab is not None:
                out[:, pos[lab]] = spins
            for ci, w in self.children[i]:
                flip = rng.random(k) < delta_from_weight(w, 2)
                rec(ci, np.where(flip, -spins, spins).astype(np.int8))

        rec(self.root_index, root_spin)
        return root_spin, out, labels


def as_rooted_structure(obj: Union[Phylogeny, RestrictedSubtree], root=None) -> RootedStructure:
    if isinstance(obj, RestrictedSubtree):
        return RootedStructure.from_subtree(obj)
    return RootedStructure.from_tree(obj, root)


def ancestral_posterior(obj, pattern: Sequence[int], root=None) -> PosteriorPair:
    """Exact conditional distribution of the root state given one leaf pattern."""
    struct = as_rooted_structure(obj, root)
    labels = struct.leaf_labels()
    spins = np.asarray(pattern, dtype=np.int8).reshape(1, -1)
    if spins.shape[1] != len(labels):
        raise TreeError("pattern length does not match subtree leaf count")
    post = struct.root_posteriors(spins, labels)
    return PosteriorPair(float(post[0, 0]), float(post[0, 1]))


def mle_root_state(obj, pattern: Sequence[int], root=None) -> int:
    return ancestral_posterior(obj, pattern, root).mle_state()


def reconstruction_accuracy(
    obj,
    mode: str = "exact",
    trials: int = 20000,
    seed: int = 0,
    root=None,
) -> Tuple[float, float, float]:
    """P[root MLE equals the true root state] and the implied beta.

    Returns (accuracy, beta, standard_error); beta solves
    accuracy = (1 + e^{-beta}) / 2.  Exact mode enumerates leaf patterns
    (subtree leaf count <= 16); Monte Carlo mode simulates.
    """
    struct = as_rooted_structure(obj, root)
    if mode == "exact":
        if struct.num_leaves() > 16:
            raise ScaleLimitError("exact accuracy limited to 16 leaves")
        mp, mm, patterns, labels = struct.conditional_pattern_probs()
        sign = np.where(mp > mm, 1, -1)
        acc = 0.5 * float(mp[sign == 1].sum()) + 0.5 * float(mm[sign == -1].sum())
        se = 0.0
    elif mode == "monte-carlo":
        rng = rng_for(seed, 2)
        root_spin, spins, labels = struct.sample_leaf_spins(trials, rng)
        est = struct.root_sign(spins, labels)
        hits = (est == root_spin).astype(float)
        acc = float(hits.mean())
        se = float(hits.std(ddof=1) / math.sqrt(trials))
    else:
        raise TreeError(f"unknown accuracy mode {mode!r}")
    beta = -math.log(2 * acc - 1) if acc > 0.5 else math.inf
    if acc >= 1.0:
        beta = 0.0
    return acc, beta, se


def conditional_sign_expectation(obj, root=None) -> Tuple[float, float]:
    """(E[sign | root=+1], E[sign | root=-1]) by exact enumeration."""
    struct = as_rooted_structure(obj, root)
    if struct.num_leaves() > 16:
        raise ScaleLimitError("exact expectation limited to 16 leaves")
    mp, mm, _, _ = struct.conditional_pattern_probs()
    sign = np.where(mp > mm, 1.0, -1.0)
    return float((sign * mp).sum()), float((sign * mm).sum())


def exact_expected_gap(obj, root=None) -> float:
    """E |P[root=+1 | leaves] - P[root=-1 | leaves]| by exact enumeration."""
    struct = as_rooted_structure(obj, root)
    if struct.num_leaves() > 16:
        raise ScaleLimitError("exact gap limited to 16 leaves")
    mp, mm, _, _ = struct.conditional_pattern_probs()
    return float(np.abs(mp - mm).sum() / 2.0)


def mc_expected_gap(obj, trials: int, seed: int, root=None) -> Tuple[float, float]:
    """Monte Carlo estimate (mean, standard error) of E|P_+ - P_-|."""
    struct = as_rooted_structure(obj, root)
    rng = rng_for(seed, 3)
    _, spins, labels = struct.sample_leaf_spins(trials, rng)
    post = struct.root_posteriors(spins, labels)
    gaps = np.abs(post[:, 0] - post[:, 1])
    return float(gaps.mean()), float(gaps.std(ddof=1) / math.sqrt(trials))


def flow_bound(obj, flow: Optional[Dict[Tuple[int, int], float]] = None, root=None) -> float:
    """Lower bound 1 / (1 + sum_e R(e) Psi(e)^2) on E|P_+ - P_-|.

    R(e) = (1 - theta_e^2) * exp(2 d(root, lower end)); the default unit
    flow splits equally at every branching.  A custom ``flow`` maps node
    pairs (parent_idx, child_idx) of the rooted structure -- use
    :func:`default_flow` to obtain the index layout.
    """
    struct = as_rooted_structure(obj, root)
    if flow is None:
        flow = default_flow(struct)
    else:
        _check_unit_flow(struct, flow)
    depth = {struct.root_index: 0.0}
    total = [0.0]

    def rec(i: int):
        for ci, w in struct.children[i]:
            depth[ci] = depth[i] + w
            theta = math.exp(-w)
            resistance = (1 - theta * theta) * math.exp(2 * depth[ci])
            total[0] += resistance * flow[(i, ci)] ** 2
            rec(ci)

    rec(struct.root_index)
    return 1.0 / (1.0 + total[0])


def default_flow(struct: RootedStructure) -> Dict[Tuple[int, int], float]:
    flow: Dict[Tuple[int, int], float] = {}

    def rec(i: int, val: float):
        kids = struct.children[i]
        for ci, _ in kids:
            flow[(i, ci)] = val / len(kids)
            rec(ci, val / len(kids))

    rec(struct.root_index, 1.0)
    return flow


def _check_unit_flow(struct: RootedStructure, flow) -> None:
    def rec(i: int) -> float:
        kids = struct.children[i]
        if not kids:
            return None
        out = 0.0
        for ci, _ in kids:
            if (i, ci) not in flow:
                raise TreeError("flow missing an edge")
            out += flow[(i, ci)]
            sub = rec(ci)
            if sub is not None and abs(sub - flow[(i, ci)]) > 1e-9:
                raise TreeError("flow is not conserved")
        return out

    total = rec(struct.root_index)
    if total is not None and abs(total - 1.0) > 1e-9:
        raise TreeError("flow is not a unit flow")


# ----------------------------------------------------------------------
# divergences and the likelihood ratio test
# ----------------------------------------------------------------------


def _exact_pattern_table(tree: Phylogeny, n_cap: int = 14):
    if tree.n > n_cap:
        raise ScaleLimitError(f"exact enumeration limited to n <= {n_cap}")
    patterns = np.array(list(itertools.product((0, 1), repeat=tree.n)), dtype=np.int8)
    ll = site_loglik(tree, patterns, 2)
    return patterns, ll


def kl_divergence(t0: Phylogeny, t1: Phylogeny) -> float:
    """KL(D[t0] || D[t1]) over single-site leaf patterns, by enumeration."""
    patterns, ll0 = _exact_pattern_table(t0)
    _, ll1 = _exact_pattern_table(t1)
    p = np.exp(ll0)
    return float(np.sum(p * (ll0 - ll1)))


def tv_single_site(t0: Phylogeny, t1: Phylogeny) -> float:
    patterns, ll0 = _exact_pattern_table(t0)
    _, ll1 = _exact_pattern_table(t1)
    return float(0.5 * np.abs(np.exp(ll0) - np.exp(ll1)).sum())


def estimate_tv_k(
    t0: Phylogeny, t1: Phylogeny, k: int, trials: int, seed: int
) -> Tuple[float, float]:
    """Monte Carlo estimate of the k-sample total variation distance via
    TV = E_{t0}[(1 - mu_1/mu_0)^+]; returns (estimate, standard error)."""
    aln = sample_markov(t0, k * trials, seed)
    d0 = site_loglik(t0, aln.states, 2).reshape(trials, k).sum(axis=1)
    d1 = site_loglik(t1, aln.states, 2).reshape(trials, k).sum(axis=1)
    vals = np.clip(1.0 - np.exp(d1 - d0), 0.0, 1.0)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0


def lr_test_errors(
    t0: Phylogeny, t1: Phylogeny, k: int, trials: int, seed: int
) -> Tuple[float, float]:
    """(TypeI, TypeII) Monte Carlo estimates for the likelihood-ratio event
    {L_{t1} <= L_{t0}} (ML prefers t1, ties included)."""
    a0 = sample_markov(t0, k * trials, seed)
    l0 = site_loglik(t0, a0.states, 2).reshape(trials, k).sum(axis=1)
    l1 = site_loglik(t1, a0.states, 2).reshape(trials, k).sum(axis=1)
    type1 = float(np.mean(-l1 <= -l0))
    a1 = sample_markov(t1, k * trials, seed + 1)
    m0 = site_loglik(t0, a1.states, 2).reshape(trials, k).sum(axis=1)
    m1 = site_loglik(t1, a1.states, 2).reshape(trials, k).sum(axis=1)
    type2 = float(np.mean(-m1 > -m0))
    return type1, type2
