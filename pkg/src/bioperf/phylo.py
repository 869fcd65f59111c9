"""Neighbor-joining tree inference over network-node distance matrices.

Leaves (OTUs) are network endpoints, internal nodes (HTUs) are inferred
junctions, and edges are the links later mapped onto the path/link
incidence matrix. The join criterion is the classic net-divergence
adjusted distance: at each step the pair minimizing
``(n - 2) * d(i, j) - U_i - U_j`` is collapsed, where ``U_i`` is the sum
of distances from i to everything else.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

# Characters that would corrupt Newick output or CSV headers.
_FORBIDDEN_LABEL_CHARS = set("(),:;'\"\t\n ")


@dataclass(frozen=True)
class Edge:
    """One undirected tree edge (a link), with its branch length."""

    label: str
    u: str
    v: str
    length: float

    def other(self, node: str) -> str:
        if node == self.u:
            return self.v
        if node == self.v:
            return self.u
        raise KeyError(node)


class DistanceMatrix:
    """Symmetric pairwise distances between labeled nodes."""

    def __init__(self, labels, d):
        self.labels = list(labels)
        self.d = np.asarray(d, dtype=float)
        self._validate()

    def _validate(self) -> None:
        n = len(self.labels)
        if n < 2:
            raise ValidationError("distance matrix needs at least 2 labels")
        if len(set(self.labels)) != n:
            raise ValidationError("duplicate labels in distance matrix")
        for label in self.labels:
            if not label or any(ch in _FORBIDDEN_LABEL_CHARS for ch in label):
                raise ValidationError(f"invalid node label {label!r}")
        if self.d.shape != (n, n):
            raise ValidationError(
                f"distance matrix shape {self.d.shape} does not match {n} labels"
            )
        if not np.isfinite(self.d).all():
            raise ValidationError("distance matrix entries must be finite")
        if (self.d < 0).any():
            raise ValidationError("distance matrix entries must be >= 0")
        if np.diagonal(self.d).any():
            raise ValidationError("distance matrix diagonal must be zero")
        if not np.array_equal(self.d, self.d.T):
            bad = np.argwhere(self.d != self.d.T)[0]
            a, b = self.labels[bad[0]], self.labels[bad[1]]
            raise ValidationError(f"distance matrix is asymmetric at ({a}, {b})")

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValidationError(f"unknown label {label!r}") from None


class PhyloTree:
    """Unrooted (optionally rooted) tree over OTU leaves and HTU internals."""

    def __init__(self, leaves, edges, root=None, negative_branches_clamped=False):
        self.leaves = list(leaves)
        self.edges = list(edges)
        self.root = root
        self.negative_branches_clamped = negative_branches_clamped
        self._adjacency: dict[str, list[Edge]] = {}
        for edge in self.edges:
            self._adjacency.setdefault(edge.u, []).append(edge)
            self._adjacency.setdefault(edge.v, []).append(edge)

    @property
    def nodes(self) -> list[str]:
        return list(self._adjacency)

    @property
    def internal_nodes(self) -> list[str]:
        leaf_set = set(self.leaves)
        return [n for n in self._adjacency if n not in leaf_set]

    def is_leaf(self, name: str) -> bool:
        return name in set(self.leaves)

    def neighbors(self, node: str):
        for edge in self._adjacency.get(node, []):
            yield edge.other(node), edge

    def path_edges(self, a: str, b: str) -> list[Edge]:
        """Edge sequence of the unique simple path between leaves a and b."""
        leaf_set = set(self.leaves)
        for name in (a, b):
            if name not in leaf_set:
                raise ValidationError(f"unknown leaf {name!r}")
        if a == b:
            return []
        # iterative DFS; trees are tiny but recursion limits are cheap to avoid
        stack = [a]
        parent_edge: dict[str, Edge | None] = {a: None}
        while stack:
            node = stack.pop()
            if node == b:
                break
            for neighbor, edge in self.neighbors(node):
                if neighbor not in parent_edge:
                    parent_edge[neighbor] = edge
                    stack.append(neighbor)
        if b not in parent_edge:
            raise ValidationError(f"no path between {a!r} and {b!r}")
        path = []
        node = b
        while node != a:
            edge = parent_edge[node]
            path.append(edge)
            node = edge.other(node)
        path.reverse()
        return path

    def leaf_distance(self, a: str, b: str) -> float:
        return sum(edge.length for edge in self.path_edges(a, b))

    def splits(self) -> set[frozenset]:
        """Leaf bipartitions induced by internal edges, canonicalized to the
        side not containing the first leaf. Topology comparison helper."""
        leaf_set = set(self.leaves)
        anchor = self.leaves[0]
        out = set()
        for edge in self.edges:
            if edge.u in leaf_set or edge.v in leaf_set:
                continue
            side = self._leaves_beyond(edge, edge.u)
            if anchor in side:
                side = leaf_set - side
            out.add(frozenset(side))
        return out

    def _leaves_beyond(self, cut: Edge, start: str) -> set[str]:
        """Leaves reachable from ``start`` without crossing ``cut``."""
        leaf_set = set(self.leaves)
        seen = {start}
        stack = [start]
        found = set()
        while stack:
            node = stack.pop()
            if node in leaf_set:
                found.add(node)
            for neighbor, edge in self.neighbors(node):
                if edge is cut or neighbor in seen:
                    continue
                seen.add(neighbor)
                stack.append(neighbor)
        return found

    def to_newick(self) -> str:
        """Newick text with branch lengths, rooted at ``root`` when set,
        else at the last internal node (first leaf for a 2-leaf tree)."""
        if self.root is not None:
            start = self.root
        elif self.internal_nodes:
            start = self.internal_nodes[-1]
        else:
            start = self.leaves[0]

        def render(node: str, incoming: Edge | None) -> str:
            children = [
                (neighbor, edge)
                for neighbor, edge in self.neighbors(node)
                if edge is not incoming
            ]
            name = node if node in set(self.leaves) else ""
            if children:
                inner = ",".join(
                    f"{render(child, edge)}:{_format_length(edge.length)}"
                    for child, edge in children
                )
                return f"({inner}){name}"
            return name

        return render(start, None) + ";"


def _format_length(x: float) -> str:
    text = format(x, ".10g")
    return text


def net_divergence(dm: DistanceMatrix, a: int) -> float:
    """Total distance U_a from node ``a`` to every other node."""
    n = len(dm)
    if not 0 <= a < n:
        raise ValidationError(f"index {a} out of range for {n} nodes")
    return float(dm.d[a].sum())


def nj_build(dm: DistanceMatrix) -> PhyloTree:
    """Build the neighbor-joining tree for a distance matrix.

    Pairs are joined in order of the adjusted distance
    ``(n - 2) * d(i, j) - U_i - U_j`` (ties broken by lowest index pair),
    with branch lengths ``d(i, j) / 2 +- (U_i - U_j) / (2 (n - 2))`` and
    the reduced matrix ``d(u, k) = (d(i, k) + d(j, k) - d(i, j)) / 2``.
    On additive input the leaf-to-leaf path lengths of the result equal
    the input distances. Negative branch lengths (possible on noisy,
    non-additive input) are clamped to zero with the deficit moved to the
    sibling branch, and ``negative_branches_clamped`` is set on the tree.
    """
    labels = list(dm.labels)
    n = len(labels)
    if n == 2:
        edge = Edge("L1", labels[0], labels[1], float(dm.d[0, 1]))
        return PhyloTree(labels, [edge])

    d = dm.d.copy()
    active = list(labels)
    taken = set(labels)
    edges: list[Edge] = []
    clamped = False
    htu_count = 0

    def fresh_htu() -> str:
        nonlocal htu_count
        htu_count += 1
        name = f"HTU{htu_count}"
        while name in taken:
            name = "_" + name
        taken.add(name)
        return name

    def add_edge(u: str, v: str, length: float) -> None:
        edges.append(Edge(f"L{len(edges) + 1}", u, v, length))

    while len(active) > 3:
        m = len(active)
        u_vec = d.sum(axis=1)
        best = None
        best_pair = (0, 1)
        for i in range(m):
            for j in range(i + 1, m):
                q = (m - 2) * d[i, j] - u_vec[i] - u_vec[j]
                if best is None or q < best:
                    best = q
                    best_pair = (i, j)
        i, j = best_pair
        li = 0.5 * d[i, j] + (u_vec[i] - u_vec[j]) / (2.0 * (m - 2))
        lj = d[i, j] - li
        li, lj, was_clamped = _clamp_pair(li, lj)
        clamped = clamped or was_clamped

        new_node = fresh_htu()
        add_edge(active[i], new_node, li)
        add_edge(active[j], new_node, lj)

        merged = 0.5 * (d[i] + d[j] - d[i, j])
        d[i] = merged
        d[:, i] = merged
        d[i, i] = 0.0
        active[i] = new_node
        d = np.delete(np.delete(d, j, axis=0), j, axis=1)
        del active[j]

    # Final three nodes attach to one HTU; the three-point equations are
    # exact here, so additive inputs resolve with no residual error.
    center = fresh_htu()
    (a, b, c) = active
    la = 0.5 * (d[0, 1] + d[0, 2] - d[1, 2])
    lb = 0.5 * (d[0, 1] + d[1, 2] - d[0, 2])
    lc = 0.5 * (d[0, 2] + d[1, 2] - d[0, 1])
    for node, length in ((a, la), (b, lb), (c, lc)):
        if length < 0:
            clamped = True
            length = 0.0
        add_edge(node, center, length)

    return PhyloTree(labels, edges, negative_branches_clamped=clamped)


def _clamp_pair(li: float, lj: float) -> tuple[float, float, bool]:
    """Zero out a negative branch, shifting the deficit to its sibling so
    the joined pair's total separation is preserved."""
    if li < 0:
        return 0.0, lj + li, True
    if lj < 0:
        return li + lj, 0.0, True
    return li, lj, False


def paths_between_leaves(tree: PhyloTree, a: str, b: str) -> list[Edge]:
    """Ordered edges of the unique path between two leaves ((a, a) -> [])."""
    return tree.path_edges(a, b)


def midpoint_root(tree: PhyloTree) -> PhyloTree:
    """Root a tree at the midpoint of its longest leaf-to-leaf path.

    Optional post-step; the estimator pipeline works on the unrooted tree.
    The midpoint edge is split by a ROOT node and edges are relabeled in
    the order they now appear.
    """
    if len(tree.leaves) < 2:
        raise ValidationError("midpoint rooting needs at least 2 leaves")
    best = None
    for a, b in itertools.combinations(tree.leaves, 2):
        dist = tree.leaf_distance(a, b)
        if best is None or dist > best[0]:
            best = (dist, a, b)
    total, a, b = best
    target = total / 2.0
    path = tree.path_edges(a, b)

    root_name = "ROOT"
    existing = {e.u for e in tree.edges} | {e.v for e in tree.edges}
    while root_name in existing:
        root_name = "_" + root_name

    new_edges: list[tuple[str, str, float]] = []
    consumed = [(e.u, e.v, e.length) for e in tree.edges]
    walked = 0.0
    node = a
    root = None
    for edge in path:
        nxt = edge.other(node)
        if walked + edge.length >= target and root is None:
            offset = target - walked
            if offset == 0.0:
                root = node
            elif offset == edge.length:
                root = nxt
            else:
                consumed.remove((edge.u, edge.v, edge.length))
                consumed.append((node, root_name, offset))
                consumed.append((root_name, nxt, edge.length - offset))
                root = root_name
        walked += edge.length
        node = nxt
    relabeled = [Edge(f"L{i + 1}", u, v, length) for i, (u, v, length) in enumerate(consumed)]
    return PhyloTree(
        tree.leaves,
        relabeled,
        root=root,
        negative_branches_clamped=tree.negative_branches_clamped,
    )


def read_distance_csv(path) -> DistanceMatrix:
    """Read a labeled square distance matrix CSV.

    Layout: header row of labels (first cell ignored), then one labeled
    row per node in the same order.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if len(rows) < 2:
        raise ValidationError(f"{path}: expected a header row and data rows")
    labels = [cell.strip() for cell in rows[0][1:]]
    n = len(labels)
    if len(rows) - 1 != n:
        raise ValidationError(f"{path}: {n} labels but {len(rows) - 1} data rows")
    data = []
    for line_no, row in enumerate(rows[1:], start=2):
        row_label = row[0].strip()
        expected = labels[line_no - 2]
        if row_label != expected:
            raise ValidationError(
                f"{path}: line {line_no} labeled {row_label!r}, expected {expected!r}"
            )
        if len(row) - 1 != n:
            raise ValidationError(f"{path}: line {line_no} has {len(row) - 1} cells, expected {n}")
        try:
            data.append([float(cell) for cell in row[1:]])
        except ValueError:
            raise ValidationError(f"{path}: line {line_no} has a non-numeric cell") from None
    return DistanceMatrix(labels, data)


def write_distance_csv(dm: DistanceMatrix, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["", *dm.labels])
        for label, row in zip(dm.labels, dm.d):
            writer.writerow([label, *(repr(float(x)) for x in row)])
