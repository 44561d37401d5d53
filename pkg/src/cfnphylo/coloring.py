"""Bottom-up coloring of a tree pair, G-clusters and overlap analysis.

Given the reference tree t0 (rooted) and a candidate t1 on the same
leaves, every vertex of t0 whose depth is a multiple of ell (plus every
leaf) gets one of the colors

  G  -- the cluster grown from its G-descendants matches the subtree of
        t1 restricted to the same leaves (exact unit metrics),
  R  -- the child condition holds but the matching fails: a test pair
        lives among its G-children,
  Y  -- at least two non-G children,
  B  -- an R-vertex dropped by the overlap re-coloring pass.

When counting the ell-children of a vertex, a leaf at graph distance d
counts as 2^(ell-d) vertices (binary completion weighting), so the total
weighted child count of an internal vertex is always 2^ell per side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Optional, Set, Tuple

import numpy as np

from .trees import (
    Location,
    MatchingMap,
    Phylogeny,
    RestrictedSubtree,
    TreeError,
    _default_root,
    edge_key,
    restrict,
)

SHALLOW_DENOM = 1.0 - 1.0 / math.sqrt(2.0)


@dataclass
class Coloring:
    t0: Phylogeny
    t1: Phylogeny
    ell: int
    root0: int
    color: Dict[int, str]
    ell_children: Dict[int, List[Tuple[int, int, bool]]]  # x -> [(child, weight, is_leaf)]
    parent_ell: Dict[int, int]
    cluster_leaves: Dict[int, FrozenSet[int]]

    @property
    def n_g(self) -> int:
        return sum(1 for c in self.color.values() if c == "G")

    @property
    def n_r(self) -> int:
        return sum(1 for c in self.color.values() if c == "R")

    @property
    def n_y(self) -> int:
        return sum(1 for c in self.color.values() if c == "Y")

    @property
    def n_b(self) -> int:
        return sum(1 for c in self.color.values() if c == "B")

    def r_vertices(self) -> List[int]:
        return sorted(v for v, c in self.color.items() if c == "R")

    def g_children_of(self, x: int) -> List[int]:
        return [c for (c, _, _) in self.ell_children.get(x, []) if self.color.get(c) == "G"]

    def recolored(self, black: Set[int]) -> "Coloring":
        color = dict(self.color)
        for v in black:
            if color.get(v) != "R":
                raise TreeError("only R-vertices can be re-colored black")
            color[v] = "B"
        return Coloring(
            self.t0, self.t1, self.ell, self.root0, color,
            self.ell_children, self.parent_ell, self.cluster_leaves,
        )


def _ell_children(tree: Phylogeny, root: int, x: int, ell: int):
    """(child, weight, is_leaf) triples for the next ell-level below x."""
    par = tree.parents_from(root)
    out = []
    stack = [(c, 1) for c in tree.adj[x] if c != par[x]]
    while stack:
        v, d = stack.pop()
        if tree.is_leaf(v):
            out.append((v, 2 ** (ell - d), True))
        elif d == ell:
            out.append((v, 1, False))
        else:
            stack.extend((c, d + 1) for c in tree.adj[v] if c != par[v])
    out.sort()
    return out


def color_vertices(
    t0: Phylogeny, t1: Phylogeny, ell: int, root: Optional[int] = None
) -> Coloring:
    """Run the bottom-up coloring of the ell-vertices of t0 against t1."""
    if ell < 1:
        raise TreeError("ell must be >= 1")
    if sorted(t0.vertex_of_label) != sorted(t1.vertex_of_label):
        raise TreeError("trees must share the leaf label set")
    root0 = root if root is not None else (t0.root if t0.root is not None else _default_root(t0))
    m0 = t0.metric()
    m1 = t1.metric()
    color: Dict[int, str] = {}
    cluster_leaves: Dict[int, FrozenSet[int]] = {}
    ell_children: Dict[int, List[Tuple[int, int, bool]]] = {}
    parent_ell: Dict[int, int] = {}

    for v in t0.adj:
        if t0.is_leaf(v):
            color[v] = "G"
            cluster_leaves[v] = frozenset({t0.label_of_vertex[v]})

    internal_lv = [
        v
        for v in t0.adj
        if not t0.is_leaf(v) and t0.graph_dist(root0, v) % ell == 0
    ]
    internal_lv.sort(key=lambda v: -t0.graph_dist(root0, v))
    for x in internal_lv:
        kids = _ell_children(t0, root0, x, ell)
        ell_children[x] = kids
        for (c, _, _) in kids:
            parent_ell[c] = x
        non_g_weight = sum(w for (c, w, _) in kids if color.get(c) not in ("G",))
        if non_g_weight <= 1:
            leafset = frozenset().union(
                *[cluster_leaves[c] for (c, _, _) in kids if color.get(c) == "G"]
            )
            sub0 = m0.sub_units(sorted(leafset))
            sub1 = m1.sub_units(sorted(leafset))
            if np.array_equal(sub0, sub1):
                color[x] = "G"
                cluster_leaves[x] = leafset
            else:
                color[x] = "R"
        else:
            color[x] = "Y"
    return Coloring(t0, t1, ell, root0, color, ell_children, parent_ell, cluster_leaves)


def g_cluster(coloring: Coloring, x: int) -> RestrictedSubtree:
    """The G-cluster rooted at the G-vertex x, as a rooted restricted subtree."""
    if coloring.color.get(x) != "G":
        raise TreeError(f"vertex {x} is not colored G")
    labels = coloring.cluster_leaves[x]
    return restrict(coloring.t0, labels, root=x)


def maximal_g_clusters(coloring: Coloring) -> List[int]:
    """Roots of the maximal G-clusters: G-vertices whose parent ell-vertex is
    non-G (or that are the tree root)."""
    out = []
    for v, c in coloring.color.items():
        if c != "G":
            continue
        p = coloring.parent_ell.get(v)
        if p is None or coloring.color.get(p) != "G":
            out.append(v)
    return sorted(out)


# ----------------------------------------------------------------------
# overlap
# ----------------------------------------------------------------------


@dataclass
class Overlap:
    coloring: Coloring
    rho_sharp: int
    cluster_roots: List[int]
    m_edges: Dict[int, FrozenSet[Tuple[int, int]]]
    multiplicity: Dict[Tuple[int, int], int]
    o_sharp: Set[Tuple[int, int]]
    o_zero: Set[Tuple[int, int]]
    cluster_o0: Dict[int, Set[Tuple[int, int]]]
    maps: Dict[int, MatchingMap]
    m_root: Dict[int, int]  # root of the matching subtree in t1
    reroot0: Dict[int, Location]  # location of that root back in t0

    @property
    def o_sharp_size(self) -> int:
        return len(self.o_sharp)

    @property
    def o_zero_size(self) -> int:
        return len(self.o_zero)


def compute_overlap(
    t0: Phylogeny, t1: Phylogeny, coloring: Coloring, rho_sharp: Optional[int] = None
) -> Overlap:
    """Edges of t1 claimed by the matchings of two or more maximal
    G-clusters, pulled back to t0 through the matching maps."""
    if rho_sharp is None:
        rho_sharp = t1.root if t1.root is not None else _default_root(t1)
    roots = maximal_g_clusters(coloring)
    m_edges: Dict[int, FrozenSet[Tuple[int, int]]] = {}
    maps: Dict[int, MatchingMap] = {}
    mult: Dict[Tuple[int, int], int] = {}
    for croot in roots:
        labels = sorted(coloring.cluster_leaves[croot])
        span1 = restrict(t1, labels)
        m_edges[croot] = span1.edges
        for e in span1.edges:
            mult[e] = mult.get(e, 0) + 1
        if len(labels) >= 2:
            maps[croot] = MatchingMap(t0, t1, labels)
    o_sharp = {e for e, c in mult.items() if c >= 2}
    o_zero: Set[Tuple[int, int]] = set()
    cluster_o0: Dict[int, Set[Tuple[int, int]]] = {r: set() for r in roots}
    for croot in roots:
        if croot not in maps:
            continue
        mm = maps[croot]
        if not (m_edges[croot] & o_sharp):
            continue
        for (u, v) in mm.span0.edges:
            for (e1, lo, hi) in mm.edge_intervals_in_t1(u, v):
                if e1 in o_sharp and hi > lo:
                    o_zero.add(edge_key(u, v))
                    cluster_o0[croot].add(edge_key(u, v))
                    break
    m_root: Dict[int, int] = {}
    reroot0: Dict[int, Location] = {}
    for croot in roots:
        labels = sorted(coloring.cluster_leaves[croot])
        if len(labels) == 1:
            m_root[croot] = t1.vertex_of_label[labels[0]]
            reroot0[croot] = t0.vertex_of_label[labels[0]]
            continue
        span1 = restrict(t1, labels)
        best = min(span1.vertices, key=lambda v: (t1.graph_dist(rho_sharp, v), v))
        m_root[croot] = best
        rev = MatchingMap(t1, t0, labels)
        reroot0[croot] = rev.locate_in_t1(best)
    return Overlap(
        coloring, rho_sharp, roots, m_edges, mult, o_sharp, o_zero, cluster_o0,
        maps, m_root, reroot0,
    )


def overlap_vertices_in_cluster(overlap: Overlap, croot: int) -> Set[int]:
    """t0 vertices adjacent to an overlap edge of this cluster."""
    verts: Set[int] = set()
    for (u, v) in overlap.cluster_o0.get(croot, set()):
        verts.add(u)
        verts.add(v)
    return verts


def _below(tree: Phylogeny, root_loc: Location, x: int, y: int) -> bool:
    """True iff y lies weakly below x when the subtree is oriented away from root_loc."""
    if x == y:
        return True
    return tree.point_unit_dist(root_loc, y) == tree.point_unit_dist(root_loc, x) + tree.unit_dist(x, y)


def shallow_vertices(overlap: Overlap, croot: int, beta: float) -> Set[int]:
    """Overlap-shallow vertices of a maximal cluster (parameter beta):
    sum over overlap vertices weakly below x of 2^(-graphdist/2) stays
    under beta / (1 - 1/sqrt 2).  Vertices of an overlap-free cluster are
    all trivially shallow."""
    t0 = overlap.coloring.t0
    w_all = overlap_vertices_in_cluster(overlap, croot)
    span = overlap.maps[croot].span0 if croot in overlap.maps else None
    verts = span.vertices if span is not None else {t0.vertex_of_label[next(iter(overlap.coloring.cluster_leaves[croot]))]}
    rloc = overlap.reroot0[croot]
    thresh = beta / SHALLOW_DENOM
    out = set()
    for x in verts:
        s = sum(
            2.0 ** (-t0.graph_dist(x, y) / 2.0)
            for y in w_all
            if _below(t0, rloc, x, y)
        )
        if s < thresh:
            out.add(x)
    return out


@dataclass(frozen=True)
class UsefulEdge:
    cluster_i: int
    edge_i: Tuple[int, int]
    cluster_j: int
    edge_j: Tuple[int, int]
    sharp_edge: Tuple[int, int]


def useful_edges(overlap: Overlap, beta: float) -> List[UsefulEdge]:
    """Overlap-shallow t0 edges whose t1 image shares an edge with the image
    of a shallow edge from a distinct cluster."""
    shallow: Dict[int, Set[int]] = {}
    shallow_edges: Dict[int, List[Tuple[int, int]]] = {}
    for croot in overlap.cluster_roots:
        if not overlap.cluster_o0.get(croot):
            continue
        sset = shallow_vertices(overlap, croot, beta)
        shallow[croot] = sset
        shallow_edges[croot] = [
            e for e in sorted(overlap.cluster_o0[croot]) if e[0] in sset and e[1] in sset
        ]
    # image intervals per shallow edge, restricted to overlap edges of t1
    images: Dict[Tuple[int, Tuple[int, int]], List[Tuple[Tuple[int, int], int, int]]] = {}
    for croot, edges in shallow_edges.items():
        mm = overlap.maps[croot]
        for e in edges:
            images[(croot, e)] = [
                seg for seg in mm.edge_intervals_in_t1(*e) if seg[0] in overlap.o_sharp
            ]
    out = []
    items = sorted(images)
    for a in range(len(items)):
        ci, ei = items[a]
        for b in range(len(items)):
            cj, ej = items[b]
            if cj == ci:
                continue
            hit = None
            for (e1, lo, hi) in images[(ci, ei)]:
                for (e2, lo2, hi2) in images[(cj, ej)]:
                    if e1 == e2 and min(hi, hi2) > max(lo, lo2):
                        hit = e1
                        break
                if hit:
                    break
            if hit:
                out.append(UsefulEdge(ci, ei, cj, ej, hit))
                break  # one partner per useful edge is enough
    return out
