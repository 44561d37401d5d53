"""Newick serialization with branch lengths, exact on the 1/upsilon grid.

Leaf names are the integer labels 1..n.  Weights are printed as decimals
with enough digits to recover the integer unit count on parsing
(``units = round(length * upsilon)``), so write -> parse round-trips are
exact in units for any positive ``upsilon``.
"""

from __future__ import annotations

from typing import Optional

from .trees import Phylogeny, TreeError


def _format_length(units: int, upsilon: float) -> str:
    w = units / upsilon
    s = f"{w:.12g}"
    if round(float(s) * upsilon) != units:
        s = repr(w)
    return s


def tree_to_newick(tree: Phylogeny) -> str:
    """Serialize; rooted trees start at the designated root, unrooted trees
    at the internal vertex next to leaf 1 (yielding a top-level trifurcation)."""
    if tree.n == 1:
        return "1;"
    root = tree.root
    if root is None:
        v1 = tree.vertex_of_label[1]
        root = next(iter(tree.adj[v1]))

    def sub(v: int, parent: Optional[int]) -> str:
        kids = [c for c in tree.adj[v] if c != parent]
        if not kids:
            return str(tree.label_of_vertex[v])
        parts = []
        for c in sorted(kids, key=lambda c: min_label_below(c, v)):
            parts.append(f"{sub(c, v)}:{_format_length(tree.adj[v][c], tree.upsilon)}")
        return "(" + ",".join(parts) + ")"

    def min_label_below(v: int, parent: int) -> int:
        if tree.is_leaf(v):
            return tree.label_of_vertex[v]
        return min(min_label_below(c, v) for c in tree.adj[v] if c != parent)

    return sub(root, None) + ";"


def parse_newick(text: str, upsilon: float, root_marker: bool = None) -> Phylogeny:
    """Parse a Newick string into a Phylogeny on the 1/upsilon grid.

    A top-level bifurcation produces a rooted tree (degree-2 root); a
    trifurcation produces an unrooted one.  Set ``root_marker`` to force
    either reading.
    """
    s = text.strip()
    if s.endswith(";"):
        s = s[:-1]
    pos = 0
    next_id = [10 ** 6]  # internal ids; leaf vertices are numbered by label below
    edges = []
    leaf_labels = {}

    def fresh() -> int:
        next_id[0] += 1
        return next_id[0] - 1

    def parse_node():
        nonlocal pos
        if pos < len(s) and s[pos] == "(":
            me = fresh()
            pos += 1
            while True:
                child, length = parse_child()
                if length is None:
                    raise TreeError("missing branch length in newick input")
                units = int(round(length * upsilon))
                if units <= 0 or abs(units / upsilon - length) > 1e-6 * max(1.0, length):
                    raise TreeError(f"branch length {length} is off the 1/upsilon grid")
                edges.append((me, child, units))
                if pos >= len(s) or s[pos] not in ",)":
                    raise TreeError("malformed newick string")
                if s[pos] == ",":
                    pos += 1
                    continue
                pos += 1  # closing paren
                break
            # skip any internal name
            while pos < len(s) and s[pos] not in ":,()":
                pos += 1
            return me
        # leaf
        start = pos
        while pos < len(s) and s[pos] not in ":,()":
            pos += 1
        name = s[start:pos].strip()
        if not name:
            raise TreeError("empty leaf name")
        try:
            label = int(name)
        except ValueError:
            raise TreeError(f"leaf names must be integer labels, got {name!r}")
        v = -label  # negative ids for leaves, remapped below
        leaf_labels[label] = v
        return v

    def parse_child():
        nonlocal pos
        node = parse_node()
        length = None
        if pos < len(s) and s[pos] == ":":
            pos += 1
            start = pos
            while pos < len(s) and s[pos] not in ",()":
                pos += 1
            length = float(s[start:pos])
        return node, length

    top = parse_node()
    if pos != len(s):
        raise TreeError("trailing characters in newick string")
    if not leaf_labels:
        raise TreeError("no leaves found")
    if len(leaf_labels) == 1:
        (label,) = leaf_labels
        return Phylogeny([], {label: -label}, upsilon)
    top_degree = sum(1 for (u, v, w) in edges if u == top or v == top)
    rooted = top_degree == 2 if root_marker is None else root_marker
    return Phylogeny(edges, leaf_labels, upsilon, root=top if rooted else None)


def write_tree(path: str, tree: Phylogeny) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(tree_to_newick(tree) + "\n")


def read_tree(path: str, upsilon: float) -> Phylogeny:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_newick(fh.read(), upsilon)
