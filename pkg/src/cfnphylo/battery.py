"""Test-panel batteries: construction from a coloring (homogeneous,
many-R and large-overlap modes), sparsification, validation against the
panel/cluster/global requirements, and the distinguishing statistic.

A panel carries a pair of rooted test subtrees per tree.  Within one
panel the T0 and T# subtrees are metric-matching, the two subtrees of a
tree are co-hanging, and the root distances differ between the trees by
at least one grid unit; the sign alpha records which tree holds the
smaller distance.  The statistic sums alpha * (reconstructed root state
products) over panels and sites and is thresholded midway between its
two model means.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from .coloring import (
    Coloring,
    Overlap,
    color_vertices,
    compute_overlap,
    overlap_vertices_in_cluster,
    useful_edges,
)
from .likelihood import RootedStructure, conditional_sign_expectation
from .model import Alignment, sample_markov
from .trees import (
    EdgeSegmentSet,
    Location,
    MatchingMap,
    Phylogeny,
    Point,
    RestrictedSubtree,
    TreeError,
    _default_root,
    edge_key,
    is_cohanging,
    is_dense,
    linkage,
    path_segments,
    restrict,
    topping,
)

G_STAR = math.log(math.sqrt(2.0))

PROXIMAL = "proximal"
SEMI_PROXIMAL = "semi-proximal"
NON_PROXIMAL = "non-proximal"


class BatteryConstructionError(TreeError):
    pass


def default_ell(g: float, wp: int, max_ell: int = 14) -> int:
    """Smallest ell >= 2 with 2^ell / (2^ell - wp)^2 <= exp(-2 ell g'),
    g' = (g* + g)/2; this is what accurate ancestral reconstruction on
    (ell, wp)-dense subtrees needs, so it only exists for g < g*."""
    if g >= G_STAR:
        raise BatteryConstructionError("no valid ell: g is not below ln(sqrt 2)")
    gp = (G_STAR + g) / 2.0
    for ell in range(2, max_ell + 1):
        if wp >= 2 ** ell:
            continue
        if 2.0 ** ell / (2.0 ** ell - wp) ** 2 <= math.exp(-2.0 * ell * gp):
            return ell
    raise BatteryConstructionError("no ell <= max_ell satisfies the density inequality")


def gamma_homogeneous(ell: int) -> int:
    return 2 * ell


def gamma_many_r(ell: int, g: float, upsilon: float) -> int:
    return math.ceil((6 + 2 * upsilon * g) * ell)


def gamma_large_overlap(ell: int, g: float, upsilon: float) -> int:
    return math.ceil(
        6 * g * upsilon * math.log2(8.0 / (1.0 - 1.0 / math.sqrt(2.0)))
        + 2 * ell * g * upsilon
        + 4
    )


def default_gamma_t(gamma: int, ell: int) -> int:
    """Smallest multiple of ell that is >= Gamma."""
    return ell * math.ceil(gamma / ell)


def witness_radius(beta: float) -> int:
    return math.ceil(3 * math.log2(4.0 * beta / (1.0 - 1.0 / math.sqrt(2.0))))


def overlap_beta(g: float, upsilon: float) -> float:
    """beta = 12 g Upsilon / (12 g Upsilon - 1), as used inside the
    large-overlap pipeline (always <= 2 since g Upsilon >= 1)."""
    gu = g * upsilon
    return 12.0 * gu / (12.0 * gu - 1.0)


@dataclass
class TestPanel:
    y0: Location
    z0: Location
    ysharp: Location
    zsharp: Location
    sub_y0: RestrictedSubtree
    sub_z0: RestrictedSubtree
    sub_ysharp: RestrictedSubtree
    sub_zsharp: RestrictedSubtree
    alpha: int
    d0_units: int
    dsharp_units: int
    gd0: int
    gdsharp: int
    prox0: str
    proxsharp: str
    origin: str = ""


@dataclass
class Battery:
    t0: Phylogeny
    t1: Phylogeny
    panels: List[TestPanel]
    ell: int
    wp: int
    gamma: int
    gamma_t: int
    root0: int
    rho_sharp: int
    mode: str
    skipped: List[str] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.panels)


def _classify(gd: int, gamma: int, gamma_t: int) -> str:
    if gd < gamma:
        return PROXIMAL
    if gd <= gamma_t:
        return SEMI_PROXIMAL
    return NON_PROXIMAL


def _subtree_pair(
    t0: Phylogeny,
    t1: Phylogeny,
    labels: Sequence[int],
    root0_loc: Location,
) -> Tuple[RestrictedSubtree, RestrictedSubtree, Location]:
    """Rooted restricted subtrees of both trees on ``labels``, with the t1
    root at the location matching ``root0_loc``; single-leaf subtrees are
    rooted at the leaf on both sides."""
    labels = sorted(labels)
    if len(labels) == 1:
        a = labels[0]
        s0 = restrict(t0, labels, root=t0.vertex_of_label[a])
        s1 = restrict(t1, labels, root=t1.vertex_of_label[a])
        return s0, s1, t1.vertex_of_label[a]
    mm = MatchingMap(t0, t1, labels)
    loc1 = mm.locate_in_t1(root0_loc)
    s0 = restrict(t0, labels, root=root0_loc)
    s1 = restrict(t1, labels, root=loc1)
    return s0, s1, loc1


def _panel_from_parts(
    t0: Phylogeny,
    t1: Phylogeny,
    sub_y0: RestrictedSubtree,
    sub_z0: RestrictedSubtree,
    sub_ysharp: RestrictedSubtree,
    sub_zsharp: RestrictedSubtree,
    gamma: int,
    gamma_t: int,
    origin: str,
) -> TestPanel:
    y0, z0 = sub_y0.root, sub_z0.root
    yloc1, zloc1 = sub_ysharp.root, sub_zsharp.root
    d0 = t0.point_unit_dist(y0, z0)
    ds = t1.point_unit_dist(yloc1, zloc1)
    if d0 == ds:
        raise BatteryConstructionError("root distances equal; no distance gap")
    gd0 = t0.point_graph_dist(y0, z0)
    gds = t1.point_graph_dist(yloc1, zloc1)
    return TestPanel(
        y0=y0,
        z0=z0,
        ysharp=yloc1,
        zsharp=zloc1,
        sub_y0=sub_y0,
        sub_z0=sub_z0,
        sub_ysharp=sub_ysharp,
        sub_zsharp=sub_zsharp,
        alpha=1 if d0 < ds else -1,
        d0_units=int(d0),
        dsharp_units=int(ds),
        gd0=int(gd0),
        gdsharp=int(gds),
        prox0=_classify(gd0, gamma, gamma_t),
        proxsharp=_classify(gds, gamma, gamma_t),
        origin=origin,
    )


def _panel_from_roots(
    t0: Phylogeny,
    t1: Phylogeny,
    y_labels: Sequence[int],
    z_labels: Sequence[int],
    y_root0: Location,
    z_root0: Location,
    gamma: int,
    gamma_t: int,
    origin: str,
) -> TestPanel:
    sub_y0, sub_ysharp, _ = _subtree_pair(t0, t1, y_labels, y_root0)
    sub_z0, sub_zsharp, _ = _subtree_pair(t0, t1, z_labels, z_root0)
    return _panel_from_parts(
        t0, t1, sub_y0, sub_z0, sub_ysharp, sub_zsharp, gamma, gamma_t, origin
    )


def _panel_pair_ok(panel: TestPanel) -> Optional[str]:
    """First violated pair requirement, or None."""
    try:
        if not is_cohanging(panel.sub_y0, panel.sub_z0):
            return "co-hanging (T0)"
        if not is_cohanging(panel.sub_ysharp, panel.sub_zsharp):
            return "co-hanging (T#)"
    except TreeError:
        return "subtree intersection"
    if abs(panel.d0_units - panel.dsharp_units) < 1:
        return "distance gap"
    if PROXIMAL not in (panel.prox0, panel.proxsharp):
        return "no proximal side"
    return None


def _min_cluster_label(coloring: Coloring, v: int) -> int:
    return min(coloring.cluster_leaves[v])


def _consistently_rooted(
    coloring: Coloring, rho_sharp: int, croot: int
) -> bool:
    labels = sorted(coloring.cluster_leaves[croot])
    if len(labels) == 1:
        return True
    t0, t1 = coloring.t0, coloring.t1
    mm = MatchingMap(t0, t1, labels)
    loc1 = mm.locate_in_t1(croot)
    if isinstance(loc1, Point):
        return False
    span1 = restrict(t1, labels)
    m_root = min(span1.vertices, key=lambda v: (t1.graph_dist(rho_sharp, v), v))
    return loc1 == m_root


def _consistent_root_choice(
    coloring: Coloring,
    rho_sharp: int,
    croot: int,
    exclude_below: Optional[Location] = None,
) -> Optional[int]:
    """croot itself if consistently rooted, else a consistently rooted
    G-child (smallest leaf label first); ``exclude_below`` drops children
    on the side of croot containing that location."""
    t0 = coloring.t0
    if exclude_below is None and _consistently_rooted(coloring, rho_sharp, croot):
        return croot
    cands = sorted(coloring.g_children_of(croot), key=lambda c: _min_cluster_label(coloring, c))
    if exclude_below is not None:
        anchor = exclude_below.u if isinstance(exclude_below, Point) else exclude_below
        keep = []
        for c in cands:
            pv = t0.path_vertices(croot, c)
            side = pv[1] if len(pv) > 1 else c
            on_side = t0.unit_dist(croot, anchor) == t0.unit_dist(croot, side) + t0.unit_dist(side, anchor) or anchor == side
            if not on_side:
                keep.append(c)
        cands = keep
    for c in cands:
        if _consistently_rooted(coloring, rho_sharp, c):
            return c
    return None


def _g_members(coloring: Coloring, croot: int) -> List[int]:
    """All G-vertices of the cluster rooted at croot (itself included)."""
    out = [croot]
    stack = [croot]
    while stack:
        x = stack.pop()
        for c in coloring.g_children_of(x):
            out.append(c)
            stack.append(c)
    return out


def _closest_consistent_g_below(
    coloring: Coloring,
    rho_sharp: int,
    croot: int,
    loc: Location,
    max_gd: int,
) -> Optional[int]:
    t0 = coloring.t0
    cands = []
    for v in _g_members(coloring, croot):
        d_root_v = t0.point_unit_dist(croot, v)
        via = t0.point_unit_dist(croot, loc) + t0.point_unit_dist(loc, v)
        if d_root_v != via:
            continue  # not weakly below loc
        gd = t0.point_graph_dist(loc, v)
        if gd > max_gd:
            continue
        cands.append((gd, _min_cluster_label(coloring, v), v))
    for _, _, v in sorted(cands):
        if _consistently_rooted(coloring, rho_sharp, v):
            return v
    return None


# ----------------------------------------------------------------------
# homogeneous / many-R constructions
# ----------------------------------------------------------------------


def build_panels_homogeneous(
    t0: Phylogeny,
    t1: Phylogeny,
    coloring: Coloring,
    gamma: Optional[int] = None,
    gamma_t: Optional[int] = None,
) -> Battery:
    """One panel per R-vertex: a pair of its G-children whose cluster-root
    distance differs between the trees (smallest leaf-label pair first)."""
    ell = coloring.ell
    gamma = gamma if gamma is not None else gamma_homogeneous(ell)
    gamma_t = gamma_t if gamma_t is not None else default_gamma_t(gamma, ell)
    rho_sharp = t1.root if t1.root is not None else _default_root(t1)
    panels: List[TestPanel] = []
    skipped: List[str] = []
    for x in coloring.r_vertices():
        gch = sorted(coloring.g_children_of(x), key=lambda c: _min_cluster_label(coloring, c))
        made = False
        for i in range(len(gch)):
            for j in range(i + 1, len(gch)):
                y, z = gch[i], gch[j]
                try:
                    panel = _panel_from_roots(
                        t0, t1,
                        coloring.cluster_leaves[y], coloring.cluster_leaves[z],
                        y, z, gamma, gamma_t, origin=f"R@{x}",
                    )
                except BatteryConstructionError:
                    continue
                if _panel_pair_ok(panel) is None:
                    panels.append(panel)
                    made = True
                    break
            if made:
                break
        if not made:
            raise BatteryConstructionError(
                f"no valid G-children pair at R-vertex {x}; the R-coloring promises one"
            )
    return Battery(
        t0, t1, panels, ell, 1, gamma, gamma_t, coloring.root0, rho_sharp, "homogeneous", skipped
    )


def recolor_black(coloring: Coloring, overlap: Overlap) -> Coloring:
    """Blacken R-vertices owning a G-child whose cluster image in t1 meets
    the overlap (such clusters cannot serve as test subtrees)."""
    black: Set[int] = set()
    for x in coloring.r_vertices():
        for c in coloring.g_children_of(x):
            edges = overlap.m_edges.get(c)
            if edges and (edges & overlap.o_sharp):
                black.add(x)
                break
    return coloring.recolored(black)


def _gateway(t1: Phylogeny, span: RestrictedSubtree, target: Location) -> int:
    """Vertex of the span closest to ``target`` (the unique exit point)."""
    return min(span.vertices, key=lambda v: (t1.point_unit_dist(v, target), v))


def build_panels_many_r(
    t0: Phylogeny,
    t1: Phylogeny,
    coloring: Coloring,
    gamma: Optional[int] = None,
    gamma_t: Optional[int] = None,
    g: Optional[float] = None,
    rho_sharp: Optional[int] = None,
) -> Battery:
    """Panels for the small-overlap regime of a general pair.

    Per remaining R-vertex: if every pair of its G-children roots
    co-hanging, non-overlapping matching subtrees in t1, use a pair with
    a distance gap (re-rooting each side to a consistently rooted
    G-child when needed).  Otherwise take a non-co-hanging pair and work
    through the exit vertices v/w of the connecting path, splitting into
    the far case and the close case (equal and unequal sub-cases).
    """
    ell = coloring.ell
    if g is None:
        g = max(w for (_, _, w) in t0.edges()) / t0.upsilon
    gamma = gamma if gamma is not None else gamma_many_r(ell, g, t0.upsilon)
    gamma_t = gamma_t if gamma_t is not None else default_gamma_t(gamma, ell)
    if rho_sharp is None:
        rho_sharp = t1.root if t1.root is not None else _default_root(t1)
    panels: List[TestPanel] = []
    skipped: List[str] = []
    close_units = int(round(2 * g * ell * t0.upsilon))

    for x in coloring.r_vertices():
        gch = sorted(coloring.g_children_of(x), key=lambda c: _min_cluster_label(coloring, c))
        pair_info = []
        bad_pair = None
        for i in range(len(gch)):
            for j in range(i + 1, len(gch)):
                y, z = gch[i], gch[j]
                ly = sorted(coloring.cluster_leaves[y])
                lz = sorted(coloring.cluster_leaves[z])
                sy0, sy1, yloc1 = _subtree_pair(t0, t1, ly, y)
                sz0, sz1, zloc1 = _subtree_pair(t0, t1, lz, z)
                if sy1.edges & sz1.edges:
                    bad_pair = (y, z, sy1, sz1, yloc1, zloc1, "overlapping")
                    break
                path = path_segments(t1, yloc1, zloc1)
                union = EdgeSegmentSet()
                for (u, v) in sy1.edges | sz1.edges:
                    union.add_whole(t1, u, v)
                if path.intersects(union):
                    bad_pair = (y, z, sy1, sz1, yloc1, zloc1, "non-co-hanging")
                    break
                pair_info.append((y, z, yloc1, zloc1))
            if bad_pair:
                break

        made = False
        if bad_pair is None:
            # case 1: all pairs co-hanging; pick one with a distance gap
            for (y, z, yloc1, zloc1) in pair_info:
                d0 = t0.point_unit_dist(y, z)
                ds = t1.point_unit_dist(yloc1, zloc1)
                if d0 == ds:
                    continue
                ry = _consistent_root_choice(coloring, rho_sharp, y)
                rz = _consistent_root_choice(coloring, rho_sharp, z)
                if ry is None or rz is None:
                    continue
                try:
                    panel = _panel_from_roots(
                        t0, t1,
                        coloring.cluster_leaves[ry], coloring.cluster_leaves[rz],
                        ry, rz, gamma, gamma_t, origin=f"manyR-cohanging@{x}",
                    )
                except BatteryConstructionError:
                    continue
                if _panel_pair_ok(panel) is None:
                    panels.append(panel)
                    made = True
                    break
            if not made:
                skipped.append(f"R-vertex {x}: no co-hanging pair with a distance gap")
            continue

        # case 2: a non-co-hanging pair exists
        ty, tz, sy1, sz1, yloc1, zloc1, why = bad_pair
        vq = _gateway(t1, sy1, zloc1)
        wq = _gateway(t1, sz1, yloc1)
        ly = sorted(coloring.cluster_leaves[ty])
        lz = sorted(coloring.cluster_leaves[tz])
        rev_y = MatchingMap(t1, t0, ly) if len(ly) > 1 else None
        rev_z = MatchingMap(t1, t0, lz) if len(lz) > 1 else None
        v0 = rev_y.locate_in_t1(vq) if rev_y is not None else t0.vertex_of_label[ly[0]]
        w0 = rev_z.locate_in_t1(wq) if rev_z is not None else t0.vertex_of_label[lz[0]]
        ds_yz = t1.point_unit_dist(yloc1, zloc1)
        d0_yz = t0.point_unit_dist(ty, tz)

        def far_choice(croot, exit_sharp, anchor_sharp, exit0):
            # "if the exit vertex is the test root itself, keep the root"
            if not isinstance(anchor_sharp, Point) and exit_sharp == anchor_sharp:
                return croot
            return _consistent_root_choice(coloring, rho_sharp, croot, exclude_below=exit0)

        if ds_yz > close_units or d0_yz != ds_yz:
            # far case, and the unequal sub-case of the close case
            ry = far_choice(ty, vq, yloc1, v0)
            rz = far_choice(tz, wq, zloc1, w0)
            origin = f"manyR-far@{x}" if ds_yz > close_units else f"manyR-close-unequal@{x}"
        else:
            # close case with equal distances: move below the exit vertices
            ry = _closest_consistent_g_below(coloring, rho_sharp, ty, v0, 2 * ell)
            rz = _closest_consistent_g_below(coloring, rho_sharp, tz, w0, 2 * ell)
            origin = f"manyR-close-equal@{x}"
        if ry is None or rz is None:
            skipped.append(f"R-vertex {x}: no consistently rooted test vertices ({why})")
            continue
        try:
            panel = _panel_from_roots(
                t0, t1,
                coloring.cluster_leaves[ry], coloring.cluster_leaves[rz],
                ry, rz, gamma, gamma_t, origin=origin,
            )
        except BatteryConstructionError as exc:
            skipped.append(f"R-vertex {x}: {exc}")
            continue
        bad = _panel_pair_ok(panel)
        if bad is None:
            panels.append(panel)
        else:
            skipped.append(f"R-vertex {x}: candidate panel violates {bad}")
    return Battery(
        t0, t1, panels, ell, 1, gamma, gamma_t, coloring.root0, rho_sharp, "many-r", skipped
    )


# ----------------------------------------------------------------------
# large-overlap construction
# ----------------------------------------------------------------------


def _component_sides(t1: Phylogeny, sharp_edge: Tuple[int, int]) -> Dict[int, int]:
    """0/1 component labels of t1 vertices after removing one edge."""
    u, v = sharp_edge
    side: Dict[int, int] = {u: 0, v: 1}
    stack = [u, v]
    while stack:
        x = stack.pop()
        for y in t1.adj[x]:
            if edge_key(x, y) == edge_key(u, v):
                continue
            if y not in side:
                side[y] = side[x]
                stack.append(y)
    return side


def _witnesses_for(
    overlap: Overlap, croot: int, edge: Tuple[int, int], cprime: int
) -> List[Tuple[int, int, Location]]:
    """Witness candidates for a useful edge: cluster vertices outside the
    overlap (or leaves) within graph distance ``cprime`` of the endpoint
    nearer the cluster root, sorted by (distance, vertex)."""
    col = overlap.coloring
    t0 = col.t0
    rloc = overlap.reroot0[croot]
    u, v = edge
    w_plus = u if t0.point_unit_dist(rloc, u) <= t0.point_unit_dist(rloc, v) else v
    span = overlap.maps[croot].span0
    wverts = overlap_vertices_in_cluster(overlap, croot)
    mm = overlap.maps[croot]
    out = []
    for y in sorted(span.vertices):
        if y in wverts and not t0.is_leaf(y):
            continue
        gd = t0.graph_dist(w_plus, y)
        if gd > cprime:
            continue
        out.append((gd, y, mm.locate_in_t1(y)))
    out.sort(key=lambda rec: rec[:2])
    return out


def build_panels_large_overlap(
    t0: Phylogeny,
    t1: Phylogeny,
    coloring: Coloring,
    overlap: Overlap,
    beta: Optional[float] = None,
    gamma: Optional[int] = None,
    gamma_t: Optional[int] = None,
    g: Optional[float] = None,
) -> Battery:
    """Panels around the boundary of the overlap: per useful edge, find four
    witnesses outside the overlap whose quartet splits differ between the
    trees, keep the pair with the strict distance inequality, and root the
    final test subtrees at consistently rooted G-vertices below them."""
    ell = coloring.ell
    if g is None:
        g = max(w for (_, _, w) in t0.edges()) / t0.upsilon
    if beta is None:
        beta = overlap_beta(g, t0.upsilon)
    gamma = gamma if gamma is not None else gamma_large_overlap(ell, g, t0.upsilon)
    gamma_t = gamma_t if gamma_t is not None else default_gamma_t(gamma, ell)
    cprime = witness_radius(beta)
    wp = min(5, 2 ** ell - 1)  # the definition needs wp <= 2^ell - 1
    panels: List[TestPanel] = []
    skipped: List[str] = []
    for ue in useful_edges(overlap, beta):
        side = _component_sides(t1, ue.sharp_edge)

        def classify(witnesses: List[Tuple[int, int, Location]]):
            out: Dict[int, Tuple[int, Location]] = {}
            for _, w, loc1 in witnesses:
                anchor = loc1.closest_vertex(t1) if isinstance(loc1, Point) else loc1
                out.setdefault(side[anchor], (w, loc1))
            return out

        wit_i = classify(_witnesses_for(overlap, ue.cluster_i, ue.edge_i, cprime))
        wit_j = classify(_witnesses_for(overlap, ue.cluster_j, ue.edge_j, cprime))
        if set(wit_i) != {0, 1} or set(wit_j) != {0, 1}:
            skipped.append(f"useful edge {ue.edge_i}: no witness on each side within C'={cprime}")
            continue
        # same-side pairs: (y_i, y_j) on side 0, (z_i, z_j) on side 1
        candidates = []
        for s in (0, 1):
            wi, li = wit_i[s]
            wj, lj = wit_j[s]
            d0w = t0.unit_dist(wi, wj)
            dsw = t1.point_unit_dist(li, lj)
            if d0w > dsw:
                candidates.append((s, wi, wj))
        if not candidates:
            skipped.append(f"useful edge {ue.edge_i}: four-point inequality not strict")
            continue
        made = False
        for s, wi, wj in candidates:
            ri = _closest_consistent_g_below(coloring, overlap.rho_sharp, ue.cluster_i, wi, 2 * ell + 2)
            rj = _closest_consistent_g_below(coloring, overlap.rho_sharp, ue.cluster_j, wj, 2 * ell + 2)
            if ri is None or rj is None:
                continue
            try:
                panel = _panel_from_roots(
                    t0, t1,
                    coloring.cluster_leaves[ri], coloring.cluster_leaves[rj],
                    ri, rj, gamma, gamma_t, origin=f"overlap@{ue.edge_i}",
                )
            except BatteryConstructionError:
                continue
            if panel.d0_units <= panel.dsharp_units:
                continue  # the construction promises d0 > d#
            if _panel_pair_ok(panel) is None:
                panels.append(panel)
                made = True
                break
        if not made:
            skipped.append(f"useful edge {ue.edge_i}: no valid witness pair panel")
    return Battery(
        t0, t1, panels, ell, wp, gamma, gamma_t, coloring.root0, overlap.rho_sharp,
        "large-overlap", skipped,
    )


# ----------------------------------------------------------------------
# regime selection and the end-to-end pipeline
# ----------------------------------------------------------------------


def regime_constant(ell: int, g: float, upsilon: float, beta: float = 2.0) -> float:
    """The constant relating the blow-up distance to #R + |O^#|: the edge
    removal/addition construction gives 15 * 2^(ell+1) edges per unit, and
    each t1 overlap edge accounts for at most 12*(2^((C'+1) g Upsilon + 1) - 1)
    t0 overlap edges."""
    cprime = witness_radius(beta)
    rel = 12.0 * (2.0 ** ((cprime + 1) * g * upsilon + 1) - 1.0)
    return 15.0 * 2.0 ** (ell + 1) * max(1.0, rel)


def build_battery(
    t0: Phylogeny,
    t1: Phylogeny,
    ell: int,
    g: Optional[float] = None,
    blowup_distance: Optional[int] = None,
    root: Optional[int] = None,
) -> Tuple[Battery, Coloring, Overlap, str]:
    """Color, measure the overlap, pick the regime and build + sparsify.

    The regime test compares |O^#| against Delta_BL / (10 C_O); a boundary
    hit classifies as large overlap.  When the blow-up distance is not
    supplied, any non-empty overlap selects the large-overlap route (the
    regime constant makes the threshold smaller than one edge at desk
    scale).
    """
    coloring = color_vertices(t0, t1, ell, root=root)
    overlap = compute_overlap(t0, t1, coloring)
    if g is None:
        g = max(w for (_, _, w) in t0.edges()) / t0.upsilon
    if blowup_distance is not None:
        thr = blowup_distance / (10.0 * regime_constant(ell, g, t0.upsilon))
    else:
        thr = 1.0  # any overlap edge at all lands above Delta/(10 C_O) at desk scale
    if overlap.o_sharp_size >= thr and overlap.o_sharp_size > 0:
        battery = build_panels_large_overlap(t0, t1, coloring, overlap, g=g)
        regime = "large-overlap"
    else:
        homogeneous = False
        if overlap.o_sharp_size == 0:
            from .distances import _require_homogeneous

            try:
                _require_homogeneous(t0)
                _require_homogeneous(t1)
                homogeneous = len({w for (_, _, w) in t0.edges()}) == 1
            except TreeError:
                homogeneous = False
        if homogeneous:
            battery = build_panels_homogeneous(t0, t1, coloring)
            regime = "homogeneous"
        else:
            battery = build_panels_many_r(t0, t1, recolor_black(coloring, overlap), g=g)
            regime = "many-r"
    battery = sparsify(battery)
    return battery, coloring, overlap, regime


# ----------------------------------------------------------------------
# sparsification
# ----------------------------------------------------------------------


def _subtree_vertices_with_anchor(sub: RestrictedSubtree) -> Set[int]:
    verts = set(sub.vertices)
    if isinstance(sub.root, Point):
        verts.update((sub.root.u, sub.root.v))
    elif sub.root is not None:
        verts.add(sub.root)
    return verts


def sparsify(battery: Battery) -> Battery:
    """Greedy rejection pass enforcing the global requirements.

    Homogeneous/many-R mode: keep a panel, drop any other whose t1 test
    subtrees come within graph distance 2*gamma_t of its t1 roots.  The
    large-overlap mode uses radius 6*gamma_t between root sets in both
    trees and then cleaves retained subtrees apart.
    """
    if battery.mode == "large-overlap":
        return _sparsify_large_overlap(battery)
    t1 = battery.t1
    keep: List[TestPanel] = []
    remaining = list(battery.panels)
    radius = 2 * battery.gamma_t
    while remaining:
        head = remaining.pop(0)
        keep.append(head)
        root_anchors = []
        for loc in (head.ysharp, head.zsharp):
            root_anchors.append(loc.closest_vertex(t1) if isinstance(loc, Point) else loc)
        survivors = []
        for p in remaining:
            verts = _subtree_vertices_with_anchor(p.sub_ysharp) | _subtree_vertices_with_anchor(p.sub_zsharp)
            dmin = min(t1.graph_dist(a, w) for a in root_anchors for w in verts)
            if dmin > radius:
                survivors.append(p)
        remaining = survivors
    return Battery(
        battery.t0, battery.t1, keep, battery.ell, battery.wp, battery.gamma,
        battery.gamma_t, battery.root0, battery.rho_sharp, battery.mode, battery.skipped,
    )


def _sparsify_large_overlap(battery: Battery) -> Battery:
    t0, t1 = battery.t0, battery.t1
    radius = 6 * battery.gamma_t
    keep: List[TestPanel] = []
    remaining = list(battery.panels)

    def anchors(panel: TestPanel, tree: Phylogeny, sharp: bool) -> List[int]:
        locs = (panel.ysharp, panel.zsharp) if sharp else (panel.y0, panel.z0)
        return [l.closest_vertex(tree) if isinstance(l, Point) else l for l in locs]

    while remaining:
        head = remaining.pop(0)
        keep.append(head)
        a1 = anchors(head, t1, True)
        a0 = anchors(head, t0, False)
        survivors = []
        for p in remaining:
            d_sharp = min(t1.graph_dist(a, b) for a in a1 for b in anchors(p, t1, True))
            d_zero = min(t0.graph_dist(a, b) for a in a0 for b in anchors(p, t0, False))
            if d_sharp > radius and d_zero > radius:
                survivors.append(p)
        remaining = survivors
    keep = _cleave_subtrees(battery, keep)
    return Battery(
        t0, t1, keep, battery.ell, battery.wp, battery.gamma,
        battery.gamma_t, battery.root0, battery.rho_sharp, battery.mode, battery.skipped,
    )


def _anchor(tree: Phylogeny, loc: Location) -> int:
    return loc.closest_vertex(tree) if isinstance(loc, Point) else loc


def _cleave_one_side(
    tree: Phylogeny,
    tree_root: int,
    labels: Set[int],
    my_anchor: int,
    other_anchor: int,
    gamma_t: int,
) -> Set[int]:
    """Drop the labels hanging below the 2*gamma_t-long upward path starting
    at another panel's root, when that root sits below our own."""
    if other_anchor == my_anchor:
        return labels
    up = tree.path_vertices(other_anchor, tree_root)
    if my_anchor not in up:
        return labels  # the other root is not below ours
    cut = set(up[: 2 * gamma_t + 1]) - {my_anchor}
    kept = set()
    for lab in labels:
        lp = tree.path_vertices(tree.vertex_of_label[lab], tree_root)
        if not any(c in lp for c in cut):
            kept.add(lab)
    return kept


def _rebuild_subtree(tree: Phylogeny, labels: Set[int], root: Location) -> Optional[RestrictedSubtree]:
    labels = sorted(labels)
    if isinstance(root, Point):
        sub = restrict(tree, labels)
        if edge_key(root.u, root.v) not in sub.edges:
            return None  # point root fell off the reduced span
        return RestrictedSubtree(tree, sub.edges, sub.vertices, sub.leaf_labels, root)
    return restrict(tree, labels, root=root)


def _cleave_subtrees(battery: Battery, panels: List[TestPanel]) -> List[TestPanel]:
    """Pull retained subtrees apart: remove from each the leaves claimed by
    other retained subtrees rooted below it, along with everything hanging
    within 2*gamma_t above those roots, in both trees; panels that lose a
    whole side or their root are dropped (the construction may have re-used
    one maximal cluster several times)."""
    t0, t1 = battery.t0, battery.t1
    out = []
    for idx, p in enumerate(panels):
        reduced: Dict[str, Set[int]] = {}
        for name, sub, root0_loc, root1_loc in (
            ("y", p.sub_y0, p.y0, p.ysharp),
            ("z", p.sub_z0, p.z0, p.zsharp),
        ):
            labels = set(sub.leaf_labels)
            a0 = _anchor(t0, root0_loc)
            a1 = _anchor(t1, root1_loc)
            for jdx, q in enumerate(panels):
                if jdx == idx:
                    continue
                for o0, o1 in ((q.y0, q.ysharp), (q.z0, q.zsharp)):
                    labels = _cleave_one_side(
                        t0, battery.root0, labels, a0, _anchor(t0, o0), battery.gamma_t
                    )
                    labels = _cleave_one_side(
                        t1, battery.rho_sharp, labels, a1, _anchor(t1, o1), battery.gamma_t
                    )
            reduced[name] = labels
        if not reduced["y"] or not reduced["z"]:
            continue
        subs = [
            _rebuild_subtree(t0, reduced["y"], p.y0),
            _rebuild_subtree(t0, reduced["z"], p.z0),
            _rebuild_subtree(t1, reduced["y"], p.ysharp),
            _rebuild_subtree(t1, reduced["z"], p.zsharp),
        ]
        if any(s is None for s in subs):
            continue
        try:
            out.append(
                _panel_from_parts(
                    t0, t1, subs[0], subs[1], subs[2], subs[3],
                    battery.gamma, battery.gamma_t, origin=p.origin,
                )
            )
        except (BatteryConstructionError, TreeError):
            continue
    return out


# ----------------------------------------------------------------------
# validation
# ----------------------------------------------------------------------


@dataclass
class PanelCheck:
    index: int
    ok: bool
    failed: Optional[str] = None


@dataclass
class BatteryReport:
    panel_checks: List[PanelCheck]
    global_ok: bool
    global_detail: Optional[str]

    @property
    def ok(self) -> bool:
        return self.global_ok and all(c.ok for c in self.panel_checks)

    def summary(self) -> str:
        lines = []
        for c in self.panel_checks:
            lines.append(
                f"panel {c.index}: " + ("pass" if c.ok else f"FAIL ({c.failed})")
            )
        lines.append(
            "global: " + ("pass" if self.global_ok else f"FAIL ({self.global_detail})")
        )
        return "\n".join(lines)


def _forest_segments(battery: Battery, panel: TestPanel, sharp: bool) -> EdgeSegmentSet:
    """The F_i forest of a panel on one side: the linkage for proximal and
    semi-proximal pairs, the union of gamma_t-toppings otherwise."""
    if sharp:
        tree, suby, subz, prox, troot = (
            battery.t1, panel.sub_ysharp, panel.sub_zsharp, panel.proxsharp, battery.rho_sharp,
        )
    else:
        tree, suby, subz, prox, troot = (
            battery.t0, panel.sub_y0, panel.sub_z0, panel.prox0, battery.root0,
        )
    if prox in (PROXIMAL, SEMI_PROXIMAL):
        return linkage(suby, subz)
    segs = topping(suby, battery.gamma_t, troot)
    segs.union_in_place(topping(subz, battery.gamma_t, troot))
    return segs


def validate_battery(battery: Battery) -> BatteryReport:
    """Check every cluster, pair and global battery requirement; each panel
    reports the first violated requirement."""
    checks: List[PanelCheck] = []
    t0, t1 = battery.t0, battery.t1
    for i, p in enumerate(battery.panels):
        failed = None
        for name, sub in (
            ("Y0", p.sub_y0), ("Z0", p.sub_z0), ("Y#", p.sub_ysharp), ("Z#", p.sub_zsharp),
        ):
            if not is_dense(sub, battery.ell, battery.wp):
                failed = f"density 1(a) on {name}"
                break
        if failed is None:
            if p.sub_y0.leaf_labels != p.sub_ysharp.leaf_labels or not np.array_equal(
                p.sub_y0.metric_units(), p.sub_ysharp.metric_units()
            ):
                failed = "matching 2(a) on Y"
            elif p.sub_z0.leaf_labels != p.sub_zsharp.leaf_labels or not np.array_equal(
                p.sub_z0.metric_units(), p.sub_zsharp.metric_units()
            ):
                failed = "matching 2(a) on Z"
        if failed is None:
            try:
                if not is_cohanging(p.sub_y0, p.sub_z0):
                    failed = "co-hanging 2(b) in T0"
                elif not is_cohanging(p.sub_ysharp, p.sub_zsharp):
                    failed = "co-hanging 2(b) in T#"
            except TreeError:
                failed = "co-hanging 2(b): subtrees intersect"
        if failed is None:
            gd0 = t0.point_graph_dist(p.y0, p.z0)
            gds = t1.point_graph_dist(p.ysharp, p.zsharp)
            if _classify(gd0, battery.gamma, battery.gamma_t) != p.prox0 or _classify(
                gds, battery.gamma, battery.gamma_t
            ) != p.proxsharp:
                failed = "proximity class 2(c)"
        if failed is None:
            d0 = t0.point_unit_dist(p.y0, p.z0)
            ds = t1.point_unit_dist(p.ysharp, p.zsharp)
            if abs(d0 - ds) < 1:
                failed = "evolutionary distance gap 2(d)"
            elif PROXIMAL not in (p.prox0, p.proxsharp):
                failed = "no proximal pair 2(d)"
            elif p.alpha != (1 if d0 < ds else -1):
                failed = "alpha sign 2(d)"
        checks.append(PanelCheck(i, failed is None, failed))
    global_ok = True
    detail = None
    for sharp in (False, True):
        forests = [_forest_segments(battery, p, sharp) for p in battery.panels]
        for i in range(len(forests)):
            for j in range(i + 1, len(forests)):
                if forests[i].intersects(forests[j]):
                    global_ok = False
                    detail = f"forests of panels {i} and {j} intersect in {'T#' if sharp else 'T0'}"
                    break
            if not global_ok:
                break
        if not global_ok:
            break
    return BatteryReport(checks, global_ok, detail)


# ----------------------------------------------------------------------
# distinguishing statistic
# ----------------------------------------------------------------------


@dataclass
class DistinguishingResult:
    statistic: float
    mean_zero: float
    mean_sharp: float
    accept_reference: bool

    @property
    def threshold(self) -> float:
        return 0.5 * (self.mean_zero + self.mean_sharp)


class BatteryStatistic:
    """The battery statistic as a single function of the leaf states.

    Per panel the root states of the two test subtrees are reconstructed
    with the subtree MLE and multiplied; the panel terms are weighted by
    alpha and summed over panels and sites.  Estimators can be built from
    either tree's subtrees (``side``); they agree entrywise because the
    paired subtrees are metric-matching.
    """

    def __init__(self, battery: Battery, side: str = "zero"):
        self.battery = battery
        self.side = side
        self.parts = []
        for p in battery.panels:
            suby = p.sub_y0 if side == "zero" else p.sub_ysharp
            subz = p.sub_z0 if side == "zero" else p.sub_zsharp
            sy = RootedStructure.from_subtree(suby)
            sz = RootedStructure.from_subtree(subz)
            self.parts.append((p.alpha, sy, sy.leaf_labels(), sz, sz.leaf_labels()))

    def site_terms(self, aln: Alignment) -> np.ndarray:
        """(k,) array of per-site battery terms."""
        spins = aln.spins
        out = np.zeros(aln.k)
        for alpha, sy, ly, sz, lz in self.parts:
            sgy = sy.root_sign(spins[:, [a - 1 for a in ly]], ly)
            sgz = sz.root_sign(spins[:, [a - 1 for a in lz]], lz)
            out += alpha * (sgy.astype(np.int64) * sgz)
        return out

    def value(self, aln: Alignment) -> float:
        return float(self.site_terms(aln).sum())


def distinguishing_statistic(battery: Battery, aln: Alignment, side: str = "zero") -> float:
    return BatteryStatistic(battery, side).value(aln)


def estimate_means(
    battery: Battery,
    k: int,
    mode: str = "exact",
    trials: int = 100_000,
    seed: int = 0,
    leaf_cap: int = 12,
) -> Tuple[float, float]:
    """Expected statistic under T0 and under T# for a k-site alignment.

    Exact mode enumerates subtree patterns (every test subtree must have at
    most ``leaf_cap`` leaves) and uses the co-hanging conditional
    independence of the two root-state estimators; Monte Carlo mode samples
    whole-tree alignments.
    """
    if mode == "exact":
        if any(
            len(p.sub_y0.leaf_labels) > leaf_cap or len(p.sub_z0.leaf_labels) > leaf_cap
            for p in battery.panels
        ):
            raise TreeError("exact means limited by subtree leaf cap; use monte-carlo")
        means = []
        for tree, ysel, zsel in (
            (battery.t0, "y0", "z0"),
            (battery.t1, "ysharp", "zsharp"),
        ):
            total = 0.0
            for p in battery.panels:
                ey = conditional_sign_expectation(p.sub_y0)
                ez = conditional_sign_expectation(p.sub_z0)
                d = tree.point_unit_dist(getattr(p, ysel), getattr(p, zsel)) / tree.upsilon
                rho = math.exp(-d)
                same = (1.0 + rho) / 4.0
                diff = (1.0 - rho) / 4.0
                e = same * (ey[0] * ez[0] + ey[1] * ez[1]) + diff * (
                    ey[0] * ez[1] + ey[1] * ez[0]
                )
                total += p.alpha * e
            means.append(k * total)
        return means[0], means[1]
    if mode != "monte-carlo":
        raise TreeError(f"unknown means mode {mode!r}")
    stat = BatteryStatistic(battery)
    out = []
    for which, tree in ((10, battery.t0), (11, battery.t1)):
        aln = sample_markov(tree, trials, seed * 1000 + which)
        out.append(float(stat.site_terms(aln).mean()) * k)
    return out[0], out[1]


def run_test(
    battery: Battery, aln: Alignment, mean_zero: float, mean_sharp: float
) -> DistinguishingResult:
    """Evaluate the distinguishing event A = {stat - (D0 + D#)/2 > 0}."""
    report = validate_battery(battery)
    if not report.ok:
        raise TreeError("refusing to run an invalid battery:\n" + report.summary())
    stat = distinguishing_statistic(battery, aln)
    return DistinguishingResult(
        stat, mean_zero, mean_sharp, stat - 0.5 * (mean_zero + mean_sharp) > 0
    )


def empirical_error(
    battery: Battery,
    k: int,
    trials: int,
    seed: int,
    means: Optional[Tuple[float, float]] = None,
    validate: bool = True,
) -> Tuple[float, float]:
    """(P_T0[A^c], P_T#[A]) over seeded trials, batched site-wise."""
    if validate:
        report = validate_battery(battery)
        if not report.ok:
            raise TreeError("refusing to run an invalid battery:\n" + report.summary())
    if means is None:
        means = estimate_means(battery, k)
    mid = 0.5 * (means[0] + means[1])
    stat = BatteryStatistic(battery)
    aln0 = sample_markov(battery.t0, k * trials, seed)
    vals0 = stat.site_terms(aln0).reshape(trials, k).sum(axis=1)
    err0 = float(np.mean(vals0 - mid <= 0))
    aln1 = sample_markov(battery.t1, k * trials, seed + 1)
    vals1 = stat.site_terms(aln1).reshape(trials, k).sum(axis=1)
    err1 = float(np.mean(vals1 - mid > 0))
    return err0, err1


# ----------------------------------------------------------------------
# JSON serialization
# ----------------------------------------------------------------------


def _location_anchor(tree: Phylogeny, loc: Location, labels: Sequence[int]) -> List[int]:
    """(leaf_a, leaf_b, offset_units) triple pinning a location on the span."""
    labels = sorted(labels)
    a = labels[0]
    va = tree.vertex_of_label[a]
    if not isinstance(loc, Point) and tree.is_leaf(loc):
        lab = tree.label_of_vertex[loc]
        return [lab, lab, 0]
    for b in labels[1:] + [labels[0]]:
        vb = tree.vertex_of_label[b]
        da = tree.point_unit_dist(va, loc)
        if da + tree.point_unit_dist(loc, vb) == tree.unit_dist(va, vb):
            return [a, b, int(da)]
    raise TreeError("location not anchored on the subtree span")


def battery_to_json(battery: Battery) -> str:
    payload = {
        "ell": battery.ell,
        "wp": battery.wp,
        "gamma": battery.gamma,
        "gamma_t": battery.gamma_t,
        "mode": battery.mode,
        "panels": [],
    }
    for p in battery.panels:
        payload["panels"].append(
            {
                "y_leaves": sorted(p.sub_y0.leaf_labels),
                "z_leaves": sorted(p.sub_z0.leaf_labels),
                "y0": _location_anchor(battery.t0, p.y0, p.sub_y0.leaf_labels),
                "z0": _location_anchor(battery.t0, p.z0, p.sub_z0.leaf_labels),
                "ysharp": _location_anchor(battery.t1, p.ysharp, p.sub_ysharp.leaf_labels),
                "zsharp": _location_anchor(battery.t1, p.zsharp, p.sub_zsharp.leaf_labels),
                "alpha": p.alpha,
                "proximity": [p.prox0, p.proxsharp],
                "origin": p.origin,
            }
        )
    return json.dumps(payload, indent=2, sort_keys=True)


def battery_from_json(text: str, t0: Phylogeny, t1: Phylogeny) -> Battery:
    data = json.loads(text)
    panels = []
    for row in data["panels"]:
        y0 = t0.locate(row["y0"][0], row["y0"][1], row["y0"][2])
        z0 = t0.locate(row["z0"][0], row["z0"][1], row["z0"][2])
        ys = t1.locate(row["ysharp"][0], row["ysharp"][1], row["ysharp"][2])
        zs = t1.locate(row["zsharp"][0], row["zsharp"][1], row["zsharp"][2])
        sub_y0 = restrict(t0, row["y_leaves"], root=y0) if not isinstance(y0, Point) else _rebuild_subtree(t0, set(row["y_leaves"]), y0)
        sub_z0 = restrict(t0, row["z_leaves"], root=z0) if not isinstance(z0, Point) else _rebuild_subtree(t0, set(row["z_leaves"]), z0)
        sub_ys = restrict(t1, row["y_leaves"], root=ys) if not isinstance(ys, Point) else _rebuild_subtree(t1, set(row["y_leaves"]), ys)
        sub_zs = restrict(t1, row["z_leaves"], root=zs) if not isinstance(zs, Point) else _rebuild_subtree(t1, set(row["z_leaves"]), zs)
        panels.append(
            _panel_from_parts(
                t0, t1, sub_y0, sub_z0, sub_ys, sub_zs,
                data["gamma"], data["gamma_t"], origin=row.get("origin", ""),
            )
        )
    root0 = t0.root if t0.root is not None else _default_root(t0)
    rho_sharp = t1.root if t1.root is not None else _default_root(t1)
    return Battery(
        t0, t1, panels, data["ell"], data["wp"], data["gamma"], data["gamma_t"],
        root0, rho_sharp, data["mode"],
    )
