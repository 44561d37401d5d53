"""Canonical regression instances for the battery pipeline.

Each constructor returns (t0, t1, ell) where t0 is the rooted reference
tree, t1 the alternative, and ell the coloring scale the instance was
designed for.  The instances exercise, in order: the homogeneous
construction, the co-hanging many-R case, both non-co-hanging sub-cases
(connecting path re-entering a matching subtree, far and close in the
candidate tree), and a two-cluster overlap with a quartet-split flip.
"""

from __future__ import annotations

from typing import Tuple

from .distances import SwapMove, swap_apply
from .trees import Phylogeny, build_homogeneous

# vertex ids for the hand-built general trees
RHO, A1, A2, X, B, C, D, M, S, Y, Z, T, DQ, K1, K2 = range(100, 115)


def single_swap_homogeneous(h: int = 4, g: float = 0.2) -> Tuple[Phylogeny, Phylogeny, int]:
    """Homogeneous tree plus the tree with the first leaves of two adjacent
    cherries exchanged."""
    t0 = build_homogeneous(h, g)
    first = 2 ** h
    t1 = swap_apply(t0, SwapMove(first, first + 2))
    from .battery import default_ell

    return t0, t1, default_ell(g, 1)


def _base_many_r(y_arm2: int, ym: int, mz: int) -> Phylogeny:
    """Shared skeleton of the many-R instances (upsilon = 1, f = 1, g = 3).

    Cluster layout: x carries the test clusters {1,2} (at y) and {3,4}
    (at z) plus the leaf pair 5,6 under s; b, c, d are undisturbed
    two-leaf clusters keeping the rest of the tree matching.
    """
    edges = [
        (RHO, A1, 1), (RHO, A2, 1),
        (A1, X, 1), (A1, B, 1),
        (A2, C, 1), (A2, D, 1),
        (X, M, 1), (X, S, 1),
        (M, Y, ym), (M, Z, mz),
        (Y, 1, 1), (Y, 2, y_arm2),
        (Z, 3, 1), (Z, 4, 2),
        (S, 5, 1), (S, 6, 1),
        (B, 7, 1), (B, 8, 1),
        (C, 9, 1), (C, 10, 1),
        (D, 11, 1), (D, 12, 1),
    ]
    return Phylogeny(edges, {a: a for a in range(1, 13)}, upsilon=1.0, root=RHO)


def many_r_cohanging() -> Tuple[Phylogeny, Phylogeny, int]:
    """Case 1: exchanging the z and b subtrees keeps every pair of
    G-children co-hanging in t1 while changing their root distances."""
    t0 = _base_many_r(y_arm2=2, ym=1, mz=1)
    edges = []
    for (u, v, w) in t0.edges():
        if (u, v) in ((min(M, Z), max(M, Z)), (min(A1, B), max(A1, B))):
            continue
        edges.append((u, v, w))
    edges += [(M, B, 1), (A1, Z, 1)]
    t1 = Phylogeny(edges, t0.vertex_of_label, 1.0, root=RHO)
    return t0, t1, 2


def _rewire(t0: Phylogeny, removed, added, root=None) -> Phylogeny:
    drop = {tuple(sorted(e)) for e in removed}
    edges = [(u, v, w) for (u, v, w) in t0.edges() if (u, v) not in drop]
    edges += added
    return Phylogeny(edges, t0.vertex_of_label, t0.upsilon, root=root)


def many_r_close_unequal() -> Tuple[Phylogeny, Phylogeny, int]:
    """Case 2, close sub-case with unequal root distances: the z subtree is
    re-hung from a vertex subdividing the (y, 2) arm, so the connecting
    path in t1 runs through the matching subtree of {1, 2}."""
    t0 = _base_many_r(y_arm2=2, ym=1, mz=1)
    t1 = _rewire(
        t0,
        removed=[(M, Z), (M, Y), (X, M), (Y, 2)],
        added=[(X, Y, 2), (Y, T, 1), (T, 2, 1), (T, Z, 3)],
        root=RHO,
    )
    return t0, t1, 2


def many_r_close_equal() -> Tuple[Phylogeny, Phylogeny, int]:
    """Case 2, close sub-case with equal root distances: forces the variant
    that moves the test roots below the path-entry vertices."""
    t0 = _base_many_r(y_arm2=2, ym=2, mz=2)
    t1 = _rewire(
        t0,
        removed=[(M, Z), (M, Y), (X, M), (Y, 2)],
        added=[(X, Y, 3), (Y, T, 1), (T, 2, 1), (T, Z, 3)],
        root=RHO,
    )
    return t0, t1, 2


def many_r_far() -> Tuple[Phylogeny, Phylogeny, int]:
    """Case 2, far sub-case: leaf 2 moves onto the old y--z path and the z
    subtree travels to the end of the caterpillar under dq, so the
    connecting path still enters the {1, 2} subtree but is long."""
    edges = [
        (RHO, A1, 2), (RHO, A2, 2),
        (A1, X, 2), (A1, B, 2),
        (A2, C, 2), (A2, DQ, 2),
        (X, M, 2), (X, S, 2),
        (M, Y, 2), (M, Z, 2),
        (Y, 1, 2), (Y, 2, 4),
        (Z, 3, 2), (Z, 4, 2),
        (S, 5, 2), (S, 6, 2),
        (B, 7, 2), (B, 8, 2),
        (C, 9, 2), (C, 10, 2),
        (DQ, 11, 2), (DQ, K1, 2),
        (K1, 12, 2), (K1, K2, 2),
        (K2, 13, 2), (K2, 14, 2),
    ]
    t0 = Phylogeny(edges, {a: a for a in range(1, 15)}, upsilon=2.0, root=RHO)
    t1 = _rewire(
        t0,
        removed=[(Y, 2), (M, Z), (K2, 13)],
        added=[(M, 2, 2), (K2, Z, 2), (Y, 13, 2)],
        root=RHO,
    )
    return t0, t1, 2


def two_cluster_overlap() -> Tuple[Phylogeny, Phylogeny, int]:
    """Two cherry clusters of t0 whose matching subtrees in t1 share the
    central path: t0 holds quartets 12|34, t1 holds 13|24 with arm lengths
    chosen so both cherry metrics still match."""
    P, P2, C1, C2, C1P, C2P = 200, 201, 202, 203, 204, 205
    U, V, J, Q, D1, D2 = 210, 211, 212, 213, 214, 215
    e0 = [
        (RHO, P, 2), (RHO, P2, 2),
        (P, C1, 2), (P, C2, 2),
        (C1, 1, 2), (C1, 2, 2),
        (C2, 3, 2), (C2, 4, 2),
        (P2, C1P, 2), (P2, C2P, 2),
        (C1P, 5, 2), (C1P, 6, 2),
        (C2P, 7, 2), (C2P, 8, 2),
    ]
    t0 = Phylogeny(e0, {a: a for a in range(1, 9)}, upsilon=2.0, root=RHO)
    e1 = [
        (U, 1, 1), (U, 3, 1), (U, J, 1),
        (V, 2, 1), (V, 4, 1), (V, J, 1),
        (J, Q, 2),
        (Q, D1, 2), (Q, D2, 2),
        (D1, 5, 2), (D1, 6, 2),
        (D2, 7, 2), (D2, 8, 2),
    ]
    t1 = Phylogeny(e1, {a: a for a in range(1, 9)}, upsilon=2.0)
    return t0, t1, 2
