"""Combinatorial distances between phylogenies.

Swap distance: exchanges of same-level non-sibling subtrees of a
homogeneous tree, counted up to metric equivalence (BFS oracle at desk
scale).  Blow-up distance: remove B edges / add B weighted edges; the
exact oracle searches matching remainder forests by iterative deepening,
and the constructive upper bound keeps a verified common sub-forest
derived from a coloring of the tree pair.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Dict, List, Sequence, Set, Tuple

from .trees import Phylogeny, ScaleLimitError, TreeError, edge_key


# ----------------------------------------------------------------------
# swaps (homogeneous trees)
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class SwapMove:
    """Two same-level, non-sibling vertices whose subtrees get exchanged."""

    u: int
    v: int


def _require_homogeneous(tree: Phylogeny) -> Tuple[int, int]:
    """(height, root) of a complete binary tree; the root is the designated
    one or the unique internal degree-2 vertex."""
    root = tree.root
    if root is None:
        deg2 = [v for v in tree.adj if not tree.is_leaf(v) and tree.degree(v) == 2]
        if len(deg2) != 1:
            raise TreeError("tree has no unique complete-binary root")
        root = deg2[0]
    depths = {tree.graph_dist(root, leaf) for leaf in tree.leaves}
    if len(depths) != 1:
        raise TreeError("leaves are not all at the same depth; not homogeneous")
    h = depths.pop()
    if tree.n != 2 ** h or len(tree.adj) != 2 ** (h + 1) - 1:
        raise TreeError("vertex count is not that of a complete binary tree")
    return h, root


def swap_apply(tree: Phylogeny, move: SwapMove) -> Phylogeny:
    """Exchange the subtrees rooted at move.u and move.v."""
    h, root = _require_homogeneous(tree)
    u, v = move.u, move.v
    du = tree.graph_dist(root, u)
    dv = tree.graph_dist(root, v)
    if du != dv:
        raise TreeError("swap vertices must be on the same level")
    if du == 0:
        raise TreeError("cannot swap the root")
    par = tree.parents_from(root)
    pu, pv = par[u], par[v]
    if pu == pv:
        raise TreeError("swap vertices must not be siblings")
    wu = tree.weight_units(pu, u)
    wv = tree.weight_units(pv, v)
    edges = []
    drop = {edge_key(pu, u), edge_key(pv, v)}
    for a, b, w in tree.edges():
        if edge_key(a, b) in drop:
            continue
        edges.append((a, b, w))
    edges.append((pu, v, wu))
    edges.append((pv, u, wv))
    return Phylogeny(edges, tree.vertex_of_label, tree.upsilon, root=root)


def swap_moves(tree: Phylogeny) -> List[SwapMove]:
    """All legal swap moves: same-level, non-sibling vertex pairs."""
    h, root = _require_homogeneous(tree)
    par = tree.parents_from(root)
    moves = []
    by_level: Dict[int, List[int]] = {}
    for v in tree.adj:
        if v == root:
            continue
        by_level.setdefault(tree.graph_dist(root, v), []).append(v)
    for level, vs in sorted(by_level.items()):
        vs = sorted(vs)
        for i, u in enumerate(vs):
            for v in vs[i + 1 :]:
                if par[u] != par[v]:
                    moves.append(SwapMove(u, v))
    return moves


def swap_neighbors(tree: Phylogeny) -> Dict[Tuple[int, ...], Phylogeny]:
    """Metric classes reachable by exactly one swap, keyed by metric."""
    out: Dict[Tuple[int, ...], Phylogeny] = {}
    for mv in swap_moves(tree):
        t2 = swap_apply(tree, mv)
        out.setdefault(t2.metric_key(), t2)
    return out


def _uniform_units(tree: Phylogeny) -> int:
    units = {w for (_, _, w) in tree.edges()}
    if len(units) != 1:
        raise TreeError("homogeneous tree must have uniform weights")
    return units.pop()


def swap_distance_map(t0: Phylogeny, class_limit: int = 20000) -> Dict[Tuple[int, ...], int]:
    """BFS distances from t0 to every metric-equivalence class."""
    _require_homogeneous(t0)
    dist = {t0.metric_key(): 0}
    frontier = [t0]
    d = 0
    while frontier:
        d += 1
        nxt = []
        for t in frontier:
            for mv in swap_moves(t):
                t2 = swap_apply(t, mv)
                key = t2.metric_key()
                if key not in dist:
                    dist[key] = d
                    nxt.append(t2)
                    if len(dist) > class_limit:
                        raise ScaleLimitError("swap BFS class limit exceeded")
        frontier = nxt
    return dist


def swap_distance_exact(t0: Phylogeny, t1: Phylogeny, class_limit: int = 20000) -> int:
    """BFS over metric-equivalence classes; exact up to h = 3 by default
    (the h = 4 class space exceeds ``class_limit``)."""
    h0, _ = _require_homogeneous(t0)
    h1, _ = _require_homogeneous(t1)
    if h0 != h1:
        raise TreeError("swap distance needs equal heights")
    if _uniform_units(t0) != _uniform_units(t1) or t0.upsilon != t1.upsilon:
        raise TreeError("swap distance needs equal edge weights")
    target = t1.metric_key()
    start = t0.metric_key()
    if start == target:
        return 0
    seen = {start}
    frontier = [t0]
    dist = 0
    while frontier:
        dist += 1
        nxt = []
        for t in frontier:
            for mv in swap_moves(t):
                t2 = swap_apply(t, mv)
                key = t2.metric_key()
                if key == target:
                    return dist
                if key not in seen:
                    seen.add(key)
                    nxt.append(t2)
                    if len(seen) > class_limit:
                        raise ScaleLimitError("swap BFS class limit exceeded")
        frontier = nxt
    raise TreeError("swap BFS exhausted without reaching the target")


# ----------------------------------------------------------------------
# blow-up distance
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class BlowupMove:
    """Remove ``removed`` edges, then add ``added`` weighted edges."""

    removed: Tuple[Tuple[int, int], ...]
    added: Tuple[Tuple[int, int, int], ...]


def blowup_apply(tree: Phylogeny, move: BlowupMove) -> Phylogeny:
    """Apply a B-blowup; the result must be a valid phylogeny on the same leaves."""
    if len(move.removed) != len(move.added):
        raise TreeError("blow-up must remove and add the same number of edges")
    adj = {v: dict(tree.adj[v]) for v in tree.adj}
    for (u, v) in move.removed:
        if v not in adj.get(u, {}):
            raise TreeError(f"removed edge ({u},{v}) not present")
        del adj[u][v]
        del adj[v][u]
    # non-leaf isolated vertices disappear
    for v in [v for v in adj if not adj[v] and not tree.is_leaf(v)]:
        del adj[v]
    edges = [(u, v, w) for u in adj for v, w in adj[u].items() if u < v]
    for (u, v, w) in move.added:
        edges.append((u, v, w))
    return Phylogeny(edges, tree.vertex_of_label, tree.upsilon, root=None)


def _forest_canonical(tree: Phylogeny, removed: Sequence[Tuple[int, int]]):
    """Canonical form of the leaf-labeled weighted forest left after removing
    the given edges (isolated internal vertices dropped)."""
    removed_set = {edge_key(u, v) for (u, v) in removed}
    adj: Dict[int, List[Tuple[int, int]]] = {}
    for (u, v, w) in tree.edges():
        if edge_key(u, v) in removed_set:
            continue
        adj.setdefault(u, []).append((v, w))
        adj.setdefault(v, []).append((u, w))
    comps = []
    seen: Set[int] = set()
    keep = [v for v in tree.adj if v in adj or tree.is_leaf(v)]
    for v0 in keep:
        if v0 in seen:
            continue
        comp = [v0]
        seen.add(v0)
        i = 0
        while i < len(comp):
            x = comp[i]
            i += 1
            for (y, _) in adj.get(x, []):
                if y not in seen:
                    seen.add(y)
                    comp.append(y)

        def rooted(v, parent):
            lab = tree.label_of_vertex.get(v, 0)
            kids = tuple(sorted((w, rooted(y, v)) for (y, w) in adj.get(v, []) if y != parent))
            return (lab, kids)

        canon = min(rooted(v, None) for v in comp)
        comps.append(canon)
    return tuple(sorted(comps))


def blowup_distance_exact(t0: Phylogeny, t1: Phylogeny, n_limit: int = 6) -> int:
    """Iterative deepening over B: the smallest B for which some B-subset
    removals leave isomorphic remainder forests in both trees."""
    if t0.n != t1.n:
        raise TreeError("blow-up distance needs equal leaf sets")
    if t0.n > n_limit:
        raise ScaleLimitError(f"exact blow-up search limited to n <= {n_limit}")
    e0 = [(u, v) for (u, v, _) in t0.edges()]
    e1 = [(u, v) for (u, v, _) in t1.edges()]
    if len(e0) != len(e1):
        raise TreeError("trees must have equal edge counts")
    for b in range(0, len(e0) + 1):
        forms0 = {_forest_canonical(t0, rm) for rm in itertools.combinations(e0, b)}
        for rm in itertools.combinations(e1, b):
            if _forest_canonical(t1, rm) in forms0:
                return b
    raise TreeError("unreachable: full removal always matches")


def blowup_enumerate_distance_one(
    tree: Phylogeny, g: float, include_isomorphic: bool = True
) -> Dict[tuple, Phylogeny]:
    """All phylogenies reachable by a 1-blowup with weights on the (0, g] grid."""
    max_units = int(round(g * tree.upsilon))
    out: Dict[tuple, Phylogeny] = {}
    for (u, v, _) in tree.edges():
        adj = {x: dict(tree.adj[x]) for x in tree.adj}
        del adj[u][v]
        del adj[v][u]
        verts = [x for x in adj if adj[x] or tree.is_leaf(x)]
        for a, b in itertools.combinations(verts, 2):
            if b in adj[a]:
                continue
            for w in range(1, max_units + 1):
                try:
                    t2 = blowup_apply(tree, BlowupMove(((u, v),), ((a, b, w),)))
                except TreeError:
                    continue
                out.setdefault(t2.canonical_key(), t2)
    if not include_isomorphic:
        out.pop(tree.canonical_key(), None)
    return out


def blowup_neighborhood_count_check(
    tree: Phylogeny, delta: int, g: float, n_limit: int = 5
) -> Tuple[int, float, bool]:
    """Enumerated count of Delta-blowup results vs the (12 g Upsilon n^2)^Delta cap.

    For Delta <= 2 no added edge can create a new vertex (a fresh vertex
    could pick up at most 2 incident edges, short of internal degree 3),
    so additions range over pairs of surviving vertices only.
    """
    if tree.n > n_limit or delta > 2:
        raise ScaleLimitError("neighborhood enumeration limited to n <= 5, Delta <= 2")
    bound = (12.0 * g * tree.upsilon * tree.n ** 2) ** delta
    if delta == 0:
        return 1, bound, 1 <= bound
    max_units = int(round(g * tree.upsilon))
    edges = [(u, v) for (u, v, _) in tree.edges()]
    results: Dict[tuple, Phylogeny] = {}
    for removal in itertools.combinations(edges, delta):
        adj = {x: dict(tree.adj[x]) for x in tree.adj}
        for (u, v) in removal:
            del adj[u][v]
            del adj[v][u]
        verts = sorted(x for x in adj if adj[x] or tree.is_leaf(x))
        pairs = [
            (a, b)
            for a, b in itertools.combinations(verts, 2)
            if b not in adj[a]
        ]
        options = [(a, b, w) for (a, b) in pairs for w in range(1, max_units + 1)]
        for adds in itertools.combinations(options, delta):
            if len({(a, b) for (a, b, _) in adds}) < delta:
                continue
            try:
                t2 = blowup_apply(tree, BlowupMove(removal, adds))
            except TreeError:
                continue
            results.setdefault(t2.canonical_key(), t2)
    count = len(results)
    return count, bound, count <= bound


def blowup_upper_bound(t0: Phylogeny, t1: Phylogeny, coloring=None, ell: int = 2) -> int:
    """Certified upper bound on the blow-up distance.

    Keeps the sub-forest of t0 made of maximal-cluster edges whose images in
    t1 are single whole edges outside the overlap, greedily discarding any
    edge whose image would clash with an already kept one; the remainder is
    verified to embed edge-for-edge in t1, so removing everything else and
    adding the t1 complement is a valid blow-up.
    """
    from .coloring import color_vertices, maximal_g_clusters
    from .trees import MatchingMap

    if coloring is None:
        coloring = color_vertices(t0, t1, ell)
    n_edges = t0.num_edges()
    if t1.num_edges() != n_edges:
        raise TreeError("trees must have equal edge counts")
    kept_images: Dict[Tuple[int, int], Tuple[int, int]] = {}
    vertex_map: Dict[int, int] = {}
    used_targets: Set[Tuple[int, int]] = set()
    used_target_vertices: Dict[int, int] = {}
    clusters = sorted(
        maximal_g_clusters(coloring), key=lambda c: -len(coloring.cluster_leaves[c])
    )
    for croot in clusters:
        labels = coloring.cluster_leaves[croot]
        if len(labels) < 2:
            continue
        mm = MatchingMap(t0, t1, labels)
        for (u, v) in mm.span0.edges:
            intervals = mm.edge_intervals_in_t1(u, v)
            if len(intervals) != 1:
                continue
            (e1, lo, hi) = intervals[0]
            if (lo, hi) != (0, t1.weight_units(*e1)):
                continue
            if e1 in used_targets:
                continue
            iu = mm.locate_in_t1(u)
            iv = mm.locate_in_t1(v)
            if not isinstance(iu, int) or not isinstance(iv, int):
                continue
            ok = True
            for src, dst in ((u, iu), (v, iv)):
                if vertex_map.get(src, dst) != dst or used_target_vertices.get(dst, src) != src:
                    ok = False
            if not ok:
                continue
            kept_images[edge_key(u, v)] = e1
            used_targets.add(e1)
            vertex_map[u] = iu
            vertex_map[v] = iv
            used_target_vertices[iu] = u
            used_target_vertices[iv] = v
    # weights must agree edge-for-edge for the sub-forest embedding
    kept = {
        e: e1
        for e, e1 in kept_images.items()
        if t0.weight_units(*e) == t1.weight_units(*e1)
    }
    return n_edges - len(kept)
