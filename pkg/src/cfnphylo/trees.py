"""Core tree structures: phylogenies on a weight grid, tree metrics,
restricted subtrees, quartets, density/co-hanging predicates and
exhaustive topology enumeration.

Conventions used throughout the package:

* A phylogeny is an undirected tree whose internal vertices have degree
  exactly 3 (a designated root may have degree 2) and whose leaves carry
  the labels 1..n bijectively.
* Edge weights are stored as positive integers ("units"); the real
  branch length of an edge is ``units / upsilon``.  All metric equality
  tests are exact integer comparisons, so two trees can only be compared
  when they share the same ``upsilon``.
* Positions strictly inside an edge are represented by :class:`Point`
  objects; they arise when a vertex of one tree is mapped into a
  metric-matching subtree of another tree ("extra vertices").
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np


class TreeError(Exception):
    """Structural error in a tree or tree operation."""


class ScaleLimitError(TreeError):
    """An exact/exhaustive operation was asked to run beyond its size limit."""


class CohangingIntersectionError(TreeError):
    """Co-hanging test invoked on subtrees with a non-empty edge intersection."""


def edge_key(u: int, v: int) -> Tuple[int, int]:
    """Canonical undirected edge key."""
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class Point:
    """A position strictly inside edge (u, v), ``offset`` units away from u.

    ``0 < offset < weight_units(u, v)``; positions that coincide with a
    vertex are represented by the bare vertex id instead.
    """

    u: int
    v: int
    offset: int

    def normalized(self, tree: "Phylogeny") -> "Point":
        w = tree.weight_units(self.u, self.v)
        if not 0 < self.offset < w:
            raise TreeError("point offset outside open edge interval")
        if self.u > self.v:
            return Point(self.v, self.u, w - self.offset)
        return self

    def closest_vertex(self, tree: "Phylogeny") -> int:
        """Nearest endpoint by unit offset (ties broken by smaller id)."""
        w = tree.weight_units(self.u, self.v)
        if self.offset < w - self.offset:
            return self.u
        if self.offset > w - self.offset:
            return self.v
        return min(self.u, self.v)


Location = Union[int, Point]


class Phylogeny:
    """Immutable leaf-labeled weighted binary tree on the 1/upsilon grid."""

    __slots__ = (
        "upsilon",
        "adj",
        "vertex_of_label",
        "label_of_vertex",
        "root",
        "n",
        "_metric",
        "_vdist",
        "_gdist",
        "_parents",
        "_canon",
    )

    def __init__(
        self,
        edges: Iterable[Tuple[int, int, int]],
        leaf_labels: Dict[int, int],
        upsilon: float,
        root: Optional[int] = None,
        check: bool = True,
    ):
        adj: Dict[int, Dict[int, int]] = {}
        for u, v, units in edges:
            units = int(units)
            if units <= 0:
                raise TreeError(f"edge ({u},{v}) has non-positive weight")
            adj.setdefault(u, {})[v] = units
            adj.setdefault(v, {})[u] = units
        if not adj and len(leaf_labels) == 1:
            # single-leaf degenerate tree
            (only,) = leaf_labels.values()
            adj[only] = {}
        self.adj = adj
        self.vertex_of_label = dict(leaf_labels)
        self.label_of_vertex = {v: a for a, v in leaf_labels.items()}
        self.upsilon = float(upsilon)
        self.root = root
        self.n = len(leaf_labels)
        self._metric = None
        self._vdist: Dict[int, Dict[int, int]] = {}
        self._gdist: Dict[int, Dict[int, int]] = {}
        self._parents: Dict[int, Dict[int, Optional[int]]] = {}
        self._canon = None
        if check:
            self.validate()

    # ------------------------------------------------------------------
    # basic structure
    # ------------------------------------------------------------------

    @property
    def vertices(self) -> List[int]:
        return list(self.adj.keys())

    @property
    def leaves(self) -> List[int]:
        return [self.vertex_of_label[a] for a in sorted(self.vertex_of_label)]

    @property
    def labels(self) -> List[int]:
        return sorted(self.vertex_of_label)

    def edges(self) -> List[Tuple[int, int, int]]:
        out = []
        for u, nbrs in self.adj.items():
            for v, w in nbrs.items():
                if u < v:
                    out.append((u, v, w))
        out.sort()
        return out

    def num_edges(self) -> int:
        return sum(len(nb) for nb in self.adj.values()) // 2

    def degree(self, v: int) -> int:
        return len(self.adj[v])

    def is_leaf(self, v: int) -> bool:
        return v in self.label_of_vertex

    def weight_units(self, u: int, v: int) -> int:
        try:
            return self.adj[u][v]
        except KeyError:
            raise TreeError(f"no edge ({u},{v})")

    def weight(self, u: int, v: int) -> float:
        return self.weight_units(u, v) / self.upsilon

    def validate(self, f: Optional[float] = None, g: Optional[float] = None) -> None:
        """Check the phylogeny invariants; optionally the [f, g] regularity band."""
        lv = set(self.label_of_vertex)
        if len(lv) != self.n or len(self.vertex_of_label) != self.n:
            raise TreeError("leaf labeling is not a bijection")
        if sorted(self.vertex_of_label) != list(range(1, self.n + 1)):
            raise TreeError("leaf labels must be exactly 1..n")
        for v in self.adj:
            d = self.degree(v)
            if self.is_leaf(v):
                if self.n > 1 and d != 1:
                    raise TreeError(f"leaf {v} has degree {d}")
            elif v == self.root:
                if d not in (2, 3):
                    raise TreeError(f"root {v} has degree {d}")
            elif d != 3:
                raise TreeError(f"internal vertex {v} has degree {d}")
        nv = len(self.adj)
        if self.num_edges() != nv - 1:
            raise TreeError("edge count does not match a tree")
        if nv:
            seen = {next(iter(self.adj))}
            dq = deque(seen)
            while dq:
                u = dq.popleft()
                for w in self.adj[u]:
                    if w not in seen:
                        seen.add(w)
                        dq.append(w)
            if len(seen) != nv:
                raise TreeError("tree is not connected")
        if f is not None or g is not None:
            lo = 1 if f is None else int(round(f * self.upsilon))
            hi = None if g is None else int(round(g * self.upsilon))
            for u, v, w in self.edges():
                if w < lo or (hi is not None and w > hi):
                    raise TreeError(f"edge ({u},{v}) weight off the [f,g] grid band")

    # ------------------------------------------------------------------
    # distances and paths
    # ------------------------------------------------------------------

    def _scan_from(self, s: int) -> None:
        dist = {s: 0}
        gdist = {s: 0}
        par: Dict[int, Optional[int]] = {s: None}
        dq = deque([s])
        while dq:
            u = dq.popleft()
            for v, w in self.adj[u].items():
                if v not in dist:
                    dist[v] = dist[u] + w
                    gdist[v] = gdist[u] + 1
                    par[v] = u
                    dq.append(v)
        self._vdist[s] = dist
        self._gdist[s] = gdist
        self._parents[s] = par

    def unit_dist(self, u: int, v: int) -> int:
        if u not in self._vdist:
            self._scan_from(u)
        return self._vdist[u][v]

    def graph_dist(self, u: int, v: int) -> int:
        if u not in self._gdist:
            self._scan_from(u)
        return self._gdist[u][v]

    def parents_from(self, root: int) -> Dict[int, Optional[int]]:
        if root not in self._parents:
            self._scan_from(root)
        return self._parents[root]

    def path_vertices(self, u: int, v: int) -> List[int]:
        par = self.parents_from(u)
        out = [v]
        while out[-1] != u:
            out.append(par[out[-1]])
        out.reverse()
        return out

    def path_edges(self, u: int, v: int) -> List[Tuple[int, int]]:
        pv = self.path_vertices(u, v)
        return [edge_key(a, b) for a, b in zip(pv, pv[1:])]

    def point_unit_dist(self, p: Location, q: Location) -> int:
        """Exact unit distance between two locations (vertices or points)."""
        if isinstance(p, Point) and isinstance(q, Point) and edge_key(p.u, p.v) == edge_key(q.u, q.v):
            po = p.offset if p.u < p.v else self.weight_units(p.u, p.v) - p.offset
            qo = q.offset if q.u < q.v else self.weight_units(q.u, q.v) - q.offset
            return abs(po - qo)
        if isinstance(p, Point):
            return min(
                p.offset + self.point_unit_dist(p.u, q),
                self.weight_units(p.u, p.v) - p.offset + self.point_unit_dist(p.v, q),
            )
        if isinstance(q, Point):
            return self.point_unit_dist(q, p)
        return self.unit_dist(p, q)

    def point_graph_dist(self, p: Location, q: Location) -> int:
        """Graph distance, mapping interior points to their closest endpoint."""
        pv = p.closest_vertex(self) if isinstance(p, Point) else p
        qv = q.closest_vertex(self) if isinstance(q, Point) else q
        return self.graph_dist(pv, qv)

    def locate(self, start_leaf_label: int, end_leaf_label: int, offset: int) -> Location:
        """Location at ``offset`` units from leaf `start` along the path to leaf `end`."""
        a = self.vertex_of_label[start_leaf_label]
        b = self.vertex_of_label[end_leaf_label]
        pv = self.path_vertices(a, b)
        acc = 0
        for x, y in zip(pv, pv[1:]):
            w = self.weight_units(x, y)
            if acc + w > offset:
                if offset == acc:
                    return x
                return Point(x, y, offset - acc).normalized(self)
            acc += w
        if acc == offset:
            return pv[-1]
        raise TreeError("offset beyond path length")

    # ------------------------------------------------------------------
    # metric and canonical forms
    # ------------------------------------------------------------------

    def metric(self) -> "TreeMetric":
        if self._metric is None:
            n = self.n
            units = np.zeros((n, n), dtype=np.int64)
            gd = np.zeros((n, n), dtype=np.int64)
            for a in range(1, n + 1):
                va = self.vertex_of_label[a]
                if va not in self._vdist:
                    self._scan_from(va)
                dl = self._vdist[va]
                gl = self._gdist[va]
                for b in range(1, n + 1):
                    vb = self.vertex_of_label[b]
                    units[a - 1, b - 1] = dl[vb]
                    gd[a - 1, b - 1] = gl[vb]
            self._metric = TreeMetric(units, gd, self.upsilon)
        return self._metric

    def metric_key(self) -> Tuple[int, ...]:
        m = self.metric().units
        n = self.n
        return tuple(int(m[i, j]) for i in range(n) for j in range(i + 1, n))

    def _spliced_adj(self) -> Dict[int, Dict[int, int]]:
        """Adjacency with any internal degree-2 vertex (a root marker)
        contracted away, so rooted and unrooted copies compare equal."""
        adj = {v: dict(nb) for v, nb in self.adj.items()}
        for v in list(adj):
            if v in self.label_of_vertex or len(adj[v]) != 2:
                continue
            (a, wa), (b, wb) = adj[v].items()
            del adj[v]
            del adj[a][v]
            del adj[b][v]
            adj[a][b] = wa + wb
            adj[b][a] = wa + wb
        return adj

    def canonical_key(self):
        """Canonical form of the weighted leaf-labeled tree (root markers
        ignored): equal keys iff the phylogenies are isomorphic by a graph
        isomorphism preserving edge weights and the leaf labeling."""
        if self._canon is not None:
            return self._canon
        if self.n == 1:
            self._canon = (1,)
            return self._canon
        adj = self._spliced_adj()

        def sub(v: int, parent: int):
            lab = self.label_of_vertex.get(v, 0)
            kids = tuple(
                sorted((adj[v][c], sub(c, v)) for c in adj[v] if c != parent)
            )
            return (lab, kids)

        start = self.vertex_of_label[1]
        nxt = next(iter(adj[start]))
        self._canon = (adj[start][nxt], sub(nxt, start))
        return self._canon

    def topology_key(self):
        """Canonical form of the leaf-labeled topology, ignoring weights
        and root markers."""
        if self.n == 1:
            return (1,)
        adj = self._spliced_adj()

        def sub(v: int, parent: int):
            lab = self.label_of_vertex.get(v, 0)
            kids = tuple(sorted(sub(c, v) for c in adj[v] if c != parent))
            return (lab, kids)

        start = self.vertex_of_label[1]
        nxt = next(iter(adj[start]))
        return sub(nxt, start)

    # ------------------------------------------------------------------
    # rebuilding helpers
    # ------------------------------------------------------------------

    def replaced(self, edges=None, root="keep", check: bool = True) -> "Phylogeny":
        e = self.edges() if edges is None else edges
        r = self.root if root == "keep" else root
        return Phylogeny(e, self.vertex_of_label, self.upsilon, root=r, check=check)

    def __repr__(self):
        return f"<Phylogeny n={self.n} edges={self.num_edges()} upsilon={self.upsilon:g}>"


class TreeMetric:
    """Pairwise evolutionary (unit) and graph distances between the n leaves."""

    __slots__ = ("units", "graph", "upsilon")

    def __init__(self, units: np.ndarray, graph: np.ndarray, upsilon: float):
        self.units = units
        self.graph = graph
        self.upsilon = float(upsilon)

    @property
    def dist(self) -> np.ndarray:
        return self.units / self.upsilon

    @property
    def n(self) -> int:
        return self.units.shape[0]

    def sub_units(self, labels: Sequence[int]) -> np.ndarray:
        idx = np.array([a - 1 for a in labels], dtype=np.intp)
        return self.units[np.ix_(idx, idx)]


def tree_metric(tree: Phylogeny) -> TreeMetric:
    """Evolutionary + graph distance matrices of ``tree`` (cached on the tree)."""
    return tree.metric()


def check_four_point(matrix, tol: float = 1e-9) -> bool:
    """Four-point condition: in every quadruple the two largest of the three
    pair-sums are equal (within ``tol``; exact for integer matrices)."""
    m = np.asarray(matrix)
    n = m.shape[0]
    exact = np.issubdtype(m.dtype, np.integer)
    for a, b, c, d in itertools.combinations(range(n), 4):
        s = sorted((m[a, b] + m[c, d], m[a, c] + m[b, d], m[a, d] + m[b, c]))
        if exact:
            if s[2] != s[1]:
                return False
        elif abs(s[2] - s[1]) > tol:
            return False
    return True


@dataclass(frozen=True)
class QuartetTopology:
    """Split class of four leaf labels: ((a,b),(c,d)) means ab|cd; None = degenerate."""

    labels: Tuple[int, int, int, int]
    split: Optional[Tuple[Tuple[int, int], Tuple[int, int]]]

    @property
    def degenerate(self) -> bool:
        return self.split is None


def quartet_topology(metric: TreeMetric, quartet: Sequence[int]) -> QuartetTopology:
    """Quartet split by the smallest pair-sum; degenerate unless one sum is
    strictly smallest (ties are exact on the unit grid)."""
    a, b, c, d = sorted(quartet)
    if len({a, b, c, d}) != 4:
        raise TreeError("quartet labels must be distinct")
    m = metric.units
    sums = [
        (int(m[a - 1, b - 1] + m[c - 1, d - 1]), ((a, b), (c, d))),
        (int(m[a - 1, c - 1] + m[b - 1, d - 1]), ((a, c), (b, d))),
        (int(m[a - 1, d - 1] + m[b - 1, c - 1]), ((a, d), (b, c))),
    ]
    sums.sort(key=lambda t: t[0])
    if sums[0][0] < sums[1][0]:
        return QuartetTopology((a, b, c, d), sums[0][1])
    return QuartetTopology((a, b, c, d), None)


# ----------------------------------------------------------------------
# construction
# ----------------------------------------------------------------------


def build_homogeneous(
    h: int,
    g: float,
    labeling: Optional[Sequence[int]] = None,
    upsilon: Optional[float] = None,
    units: int = 1,
) -> Phylogeny:
    """Complete binary tree with 2**h leaves, every edge weight g, rooted.

    ``labeling`` permutes which label sits at which leaf position (left to
    right); identity by default.  If ``upsilon`` is omitted it is chosen as
    ``units / g`` so the weight lies on the grid with the given unit count.
    """
    if h < 0:
        raise TreeError("h must be >= 0")
    if g <= 0:
        raise TreeError("edge weight must be positive")
    n = 2 ** h
    if labeling is None:
        labeling = list(range(1, n + 1))
    if sorted(labeling) != list(range(1, n + 1)):
        raise TreeError("labeling must be a permutation of 1..2^h")
    if upsilon is None:
        upsilon = units / g
    u = int(round(g * upsilon))
    if u <= 0:
        raise TreeError("g is below the grid resolution")
    # vertices numbered heap-style: root 1, children 2i, 2i+1
    edges = []
    for i in range(2, 2 ** (h + 1)):
        edges.append((i // 2, i, u))
    first_leaf = 2 ** h
    leaf_labels = {labeling[i]: first_leaf + i for i in range(n)}
    return Phylogeny(edges, leaf_labels, upsilon, root=1)


def random_regular_phylogeny(
    n: int,
    f: float,
    g: float,
    upsilon: float,
    rng: np.random.Generator,
    root: bool = False,
) -> Phylogeny:
    """Uniform random leaf-labeled topology with i.i.d. uniform grid weights in [f, g]."""
    if n < 2:
        raise TreeError("need n >= 2")
    lo = int(round(f * upsilon))
    hi = int(round(g * upsilon))
    if lo < 1 or hi < lo:
        raise TreeError("invalid [f, g] grid band")

    def w():
        return int(rng.integers(lo, hi + 1))

    next_id = [n + 1]

    def fresh():
        next_id[0] += 1
        return next_id[0] - 1

    edges = {}

    def add(u, v):
        edges[edge_key(u, v)] = w()

    def rm(u, v):
        del edges[edge_key(u, v)]

    add(1, 2)
    for leaf in range(3, n + 1):
        u, v = list(edges)[int(rng.integers(0, len(edges)))]
        mid = fresh()
        rm(u, v)
        add(u, mid)
        add(mid, v)
        add(mid, leaf)
    tree = Phylogeny(
        [(u, v, units) for (u, v), units in edges.items()],
        {a: a for a in range(1, n + 1)},
        upsilon,
    )
    if root:
        tree = tree.replaced(root=_default_root(tree))
    return tree


def _default_root(tree: Phylogeny) -> int:
    """Deterministic root choice: internal neighbor of leaf 1."""
    v1 = tree.vertex_of_label[1]
    return next(iter(tree.adj[v1])) if tree.adj[v1] else v1


def enumerate_topologies(
    n: int, upsilon: float = 1.0, units: int = 1, limit: int = 8
) -> Iterator[Phylogeny]:
    """All unrooted leaf-labeled binary topologies on n leaves, each once.

    Weights are set uniformly to ``units``.  The count is (2n-5)!!; n is
    capped at ``limit`` because the enumeration is exhaustive.
    """
    if n < 3:
        raise ScaleLimitError("enumeration needs n >= 3")
    if n > limit:
        raise ScaleLimitError(f"n={n} above enumeration limit {limit}")

    partial = [({edge_key(1, 2)}, n + 1)]
    for m in range(3, n + 1):
        nxt = []
        for edges, fresh in partial:
            for (u, v) in edges:
                e2 = set(edges)
                e2.remove((u, v))
                e2.add(edge_key(u, fresh))
                e2.add(edge_key(fresh, v))
                e2.add(edge_key(fresh, m))
                nxt.append((e2, fresh + 1))
        partial = nxt
    for edges, _ in partial:
        yield Phylogeny(
            [(u, v, units) for (u, v) in edges],
            {a: a for a in range(1, n + 1)},
            upsilon,
        )


def double_factorial_odd(n: int) -> int:
    """(2n-5)!! -- the number of unrooted binary topologies on n labeled leaves."""
    out = 1
    k = 2 * n - 5
    while k > 1:
        out *= k
        k -= 2
    return out


# ----------------------------------------------------------------------
# restricted subtrees
# ----------------------------------------------------------------------


@dataclass
class RestrictedSubtree:
    """Edges of ``tree`` lying on paths between the spanned leaves, with an
    optional root location (the root may sit above the leaf span)."""

    tree: Phylogeny
    edges: FrozenSet[Tuple[int, int]]
    vertices: FrozenSet[int]
    leaf_labels: FrozenSet[int]
    root: Optional[Location] = None

    def metric_units(self) -> np.ndarray:
        labels = sorted(self.leaf_labels)
        return self.tree.metric().sub_units(labels)

    def contains_edge(self, u: int, v: int) -> bool:
        return edge_key(u, v) in self.edges

    def subtree_leaf_vertices(self) -> List[int]:
        return [self.tree.vertex_of_label[a] for a in sorted(self.leaf_labels)]

    def rooted_children(self) -> Dict[int, List[int]]:
        """Orientation of the subtree edges away from the root."""
        if self.root is None:
            raise TreeError("subtree has no root")
        adj: Dict[int, List[int]] = {}
        for (u, v) in self.edges:
            adj.setdefault(u, []).append(v)
            adj.setdefault(v, []).append(u)
        kids: Dict[int, List[int]] = {}
        if isinstance(self.root, Point):
            start = [self.root.u, self.root.v]
        else:
            start = [self.root]
        seen = set(start)
        dq = deque(start)
        while dq:
            x = dq.popleft()
            for y in adj.get(x, []):
                if y not in seen:
                    seen.add(y)
                    kids.setdefault(x, []).append(y)
                    dq.append(y)
        return kids


def restrict(tree: Phylogeny, leaf_labels: Iterable[int], root: Optional[Location] = None) -> RestrictedSubtree:
    """Subtree of ``tree`` spanned by the given leaf labels (union of pairwise paths)."""
    labels = sorted(set(leaf_labels))
    for a in labels:
        if a not in tree.vertex_of_label:
            raise TreeError(f"label {a} not present in tree")
    verts = set()
    edges = set()
    if labels:
        anchor = tree.vertex_of_label[labels[0]]
        verts.add(anchor)
        for a in labels[1:]:
            pv = tree.path_vertices(anchor, tree.vertex_of_label[a])
            # walk until we re-enter the known part, collecting new edges
            for x, y in zip(pv, pv[1:]):
                verts.add(x)
                verts.add(y)
                edges.add(edge_key(x, y))
    if root is not None and not isinstance(root, Point):
        # include the path from the root down to where it meets the span
        if labels:
            a0 = tree.vertex_of_label[labels[0]]
            pv = tree.path_vertices(root, a0)
            span_verts = frozenset(verts)
            for x, y in zip(pv, pv[1:]):
                if x in span_verts:
                    break
                edges.add(edge_key(x, y))
                verts.add(x)
                verts.add(y)
        verts.add(root)
    return RestrictedSubtree(tree, frozenset(edges), frozenset(verts), frozenset(labels), root)


def is_metric_matching(y: RestrictedSubtree, z: RestrictedSubtree) -> bool:
    """True iff the two restricted subtrees span the same labels with
    entrywise-identical unit metrics (exact on the grid)."""
    if y.leaf_labels != z.leaf_labels:
        raise TreeError("matching check needs equal leaf-label sets")
    return bool(np.array_equal(y.metric_units(), z.metric_units()))


class MatchingMap:
    """Point correspondence between a restricted subtree of ``t0`` and the
    subtree of ``t1`` spanning the same leaf labels.

    Built from the shared leaf metric: a location of the first span maps to
    the location at equal unit distances in the second span.  An edge of the
    first span maps to a list of (edge, lo, hi) unit intervals of the second.
    """

    def __init__(self, t0: Phylogeny, t1: Phylogeny, leaf_labels: Iterable[int]):
        self.t0 = t0
        self.t1 = t1
        self.labels = sorted(set(leaf_labels))
        self.span0 = restrict(t0, self.labels)
        self.span1 = restrict(t1, self.labels)
        if not np.array_equal(self.span0.metric_units(), self.span1.metric_units()):
            raise TreeError("subtrees are not metric-matching")
        self._anchor = self.labels[0]
        # leaf "direction" for every span0 vertex: a second leaf whose path
        # from the anchor passes through it
        self._via: Dict[int, int] = {}
        a0 = t0.vertex_of_label[self._anchor]
        for b in self.labels:
            vb = t0.vertex_of_label[b]
            for x in t0.path_vertices(a0, vb):
                self._via.setdefault(x, b)

    def locate_in_t1(self, x: Location) -> Location:
        """Image in t1 of a location on the t0 span."""
        if isinstance(x, Point):
            base, off = x.u, x.offset
        else:
            base, off = x, 0
        if base not in self._via:
            raise TreeError("location not on the restricted span")
        b = self._via[base]
        if isinstance(x, Point):
            # choose the via-leaf consistent with the point's edge direction
            b = self._via.get(x.v, b)
        a0 = self.t0.vertex_of_label[self._anchor]
        q = self.t0.point_unit_dist(a0, x)
        return self.t1.locate(self._anchor, b, q)

    def edge_intervals_in_t1(self, u: int, v: int) -> List[Tuple[Tuple[int, int], int, int]]:
        """Unit intervals of t1 edges covered by the image of span0 edge (u, v)."""
        if edge_key(u, v) not in self.span0.edges:
            raise TreeError("edge not on the restricted span")
        # walk along a leaf-to-leaf t1 path that covers the image of (u, v)
        a0v = self.t0.vertex_of_label[self._anchor]
        du = self.t0.unit_dist(a0v, u)
        dv = self.t0.unit_dist(a0v, v)
        near, far = (u, v) if du < dv else (v, u)
        b = self._via[far]
        lo = min(du, dv)
        hi = max(du, dv)
        av = self.t1.vertex_of_label[self._anchor]
        bv = self.t1.vertex_of_label[b]
        pv = self.t1.path_vertices(av, bv)
        out = []
        acc = 0
        for x, y in zip(pv, pv[1:]):
            w = self.t1.weight_units(x, y)
            s = max(lo, acc)
            e = min(hi, acc + w)
            if s < e:
                if x < y:
                    out.append((edge_key(x, y), s - acc, e - acc))
                else:
                    out.append((edge_key(x, y), acc + w - e, acc + w - s))
            acc += w
        if hi > acc:
            raise TreeError("span edge image exceeds path; metrics inconsistent")
        return out


# ----------------------------------------------------------------------
# density / co-hanging predicates
# ----------------------------------------------------------------------


def _rooted_depths(sub: RestrictedSubtree) -> Tuple[Dict[int, int], List[int]]:
    """Graph depths of subtree vertices below the root; returns (depths, leaves)."""
    if sub.root is None:
        raise TreeError("density check needs a rooted subtree")
    kids = sub.rooted_children()
    if isinstance(sub.root, Point):
        # the point splits its edge; both endpoints hang one step below it
        depths = {v: 1 for v in (sub.root.u, sub.root.v) if v in sub.vertices}
    else:
        depths = {sub.root: 0}
    order = list(depths)
    i = 0
    while i < len(order):
        x = order[i]
        i += 1
        for c in kids.get(x, []):
            depths[c] = depths[x] + 1
            order.append(c)
    tips = [v for v in order if not kids.get(v)]
    return depths, tips


def is_dense(sub: RestrictedSubtree, ell: int, wp: int) -> bool:
    """(ell, wp)-density of a rooted subtree.

    The ell-completion pads complete binary subtrees with 0-length edges
    below every tip so all tips sit at the completion height H (the smallest
    multiple of ell >= the subtree height); level i*ell (for i*ell < H) must
    then hold at least (2^ell - wp)^i vertices.
    """
    if not 0 <= wp <= 2 ** ell - 1:
        raise TreeError("need 0 <= wp <= 2^ell - 1")
    depths, tips = _rooted_depths(sub)
    if not depths:
        return True
    height = max(depths[v] for v in tips) if tips else 0
    if height == 0:
        return True
    h_pad = ell * ((height + ell - 1) // ell)
    level_counts: Dict[int, int] = {}
    for v, d in depths.items():
        level_counts[d] = level_counts.get(d, 0) + 1
    tip_depths = [depths[v] for v in tips]
    i = 0
    while i * ell < h_pad:
        lvl = i * ell
        count = level_counts.get(lvl, 0)
        count += sum(2 ** (lvl - d) for d in tip_depths if d < lvl)
        if count < (2 ** ell - wp) ** i:
            return False
        i += 1
    return True


class EdgeSegmentSet:
    """Set of unit intervals on tree edges; used for forest-intersection tests."""

    def __init__(self):
        self.by_edge: Dict[Tuple[int, int], List[Tuple[int, int]]] = {}

    def add(self, e: Tuple[int, int], lo: int, hi: int) -> None:
        if hi > lo:
            self.by_edge.setdefault(e, []).append((lo, hi))

    def add_whole(self, tree: Phylogeny, u: int, v: int) -> None:
        self.add(edge_key(u, v), 0, tree.weight_units(u, v))

    def intersects(self, other: "EdgeSegmentSet") -> bool:
        for e, segs in self.by_edge.items():
            for (lo, hi) in segs:
                for (lo2, hi2) in other.by_edge.get(e, []):
                    if min(hi, hi2) > max(lo, lo2):
                        return True
        return False

    def union_in_place(self, other: "EdgeSegmentSet") -> None:
        for e, segs in other.by_edge.items():
            self.by_edge.setdefault(e, []).extend(segs)


def path_segments(tree: Phylogeny, a: Location, b: Location) -> EdgeSegmentSet:
    """Unit segments of the unique path between two locations."""
    if isinstance(a, Point):
        a = a.normalized(tree)
    if isinstance(b, Point):
        b = b.normalized(tree)
    segs = EdgeSegmentSet()
    if isinstance(a, Point) and isinstance(b, Point) and edge_key(a.u, a.v) == edge_key(b.u, b.v):
        segs.add(edge_key(a.u, a.v), min(a.offset, b.offset), max(a.offset, b.offset))
        return segs

    def anchor(p: Location, q: Location) -> Tuple[int, Optional[Tuple[Tuple[int, int], int, int]]]:
        # vertex where the path from p toward q leaves p's edge, plus the
        # partial edge segment between p and that vertex
        if not isinstance(p, Point):
            return p, None
        w = tree.weight_units(p.u, p.v)
        e = edge_key(p.u, p.v)  # normalized: p.u < p.v, offset measured from p.u
        du = tree.point_unit_dist(p.u, q)
        dv = tree.point_unit_dist(p.v, q)
        if du + p.offset <= dv + (w - p.offset):
            return p.u, (e, 0, p.offset)
        return p.v, (e, p.offset, w)

    va, sa = anchor(a, b)
    vb, sb = anchor(b, va)
    if sa is not None:
        segs.add(*sa)
    if sb is not None:
        segs.add(*sb)
    for (u, v) in tree.path_edges(va, vb):
        segs.add_whole(tree, u, v)
    return segs


def subtree_segments(sub: RestrictedSubtree) -> EdgeSegmentSet:
    segs = EdgeSegmentSet()
    for (u, v) in sub.edges:
        segs.add_whole(sub.tree, u, v)
    return segs


def is_cohanging(y: RestrictedSubtree, z: RestrictedSubtree) -> bool:
    """True iff the rooted subtrees are edge-disjoint and the path between
    their roots avoids every edge of their union."""
    if y.tree is not z.tree:
        raise TreeError("co-hanging test needs subtrees of the same tree")
    if y.root is None or z.root is None:
        raise TreeError("co-hanging test needs rooted subtrees")
    if y.edges & z.edges:
        raise CohangingIntersectionError("subtrees share edges")
    union = subtree_segments(y)
    union.union_in_place(subtree_segments(z))
    path = path_segments(y.tree, y.root, z.root)
    return not path.intersects(union)


def linkage(y: RestrictedSubtree, z: RestrictedSubtree) -> EdgeSegmentSet:
    """Edge segments of Y + Z + the path joining their roots."""
    segs = subtree_segments(y)
    segs.union_in_place(subtree_segments(z))
    segs.union_in_place(path_segments(y.tree, y.root, z.root))
    return segs


def topping(sub: RestrictedSubtree, gamma: int, tree_root: int) -> EdgeSegmentSet:
    """Subtree plus its hat: up to ``gamma`` edges from the subtree root
    toward the global tree root."""
    segs = subtree_segments(sub)
    tree = sub.tree
    r = sub.root
    start = r.closest_vertex(tree) if isinstance(r, Point) else r
    pv = tree.path_vertices(start, tree_root)
    for x, ynext in list(zip(pv, pv[1:]))[:gamma]:
        segs.add_whole(tree, x, ynext)
    return segs
