"""Random additive-tree oracle, independent of the package under test.

Builds random unrooted binary trees by repeatedly splitting an edge and
hanging a new leaf off the split point, then reads distances and leaf
bipartitions straight off the generated adjacency structure. A correct
tree builder fed the induced distance matrix must recover the topology
(same non-trivial bipartitions) and every pairwise path length.
"""


def random_binary_tree(rng, n_leaves):
    """Adjacency map {node: {neighbor: branch_length}} for a random
    unrooted binary tree with leaves A, B, C, ..."""
    if not 3 <= n_leaves <= 26:
        raise ValueError("n_leaves must be in 3..26")
    labels = [chr(ord("A") + i) for i in range(n_leaves)]
    adj = {}
    counter = 0

    def connect(u, v, w):
        adj.setdefault(u, {})[v] = w
        adj.setdefault(v, {})[u] = w

    def fresh():
        nonlocal counter
        counter += 1
        return f"x{counter}"

    hub = fresh()
    for leaf in labels[:3]:
        connect(hub, leaf, rng.uniform(0.1, 10.0))
    for leaf in labels[3:]:
        pairs = sorted((u, v) for u in adj for v in adj[u] if u < v)
        u, v = rng.choice(pairs)
        weight = adj[u][v]
        cut = rng.uniform(0.15, 0.85)
        mid = fresh()
        del adj[u][v]
        del adj[v][u]
        connect(u, mid, weight * cut)
        connect(mid, v, weight * (1.0 - cut))
        connect(mid, leaf, rng.uniform(0.1, 10.0))
    return labels, adj


def tree_distances(labels, adj):
    """Pairwise leaf distance matrix (list of lists, label order)."""
    n = len(labels)
    d = [[0.0] * n for _ in range(n)]
    for i, src in enumerate(labels):
        dist = {src: 0.0}
        stack = [src]
        while stack:
            node = stack.pop()
            for nxt, w in adj[node].items():
                if nxt not in dist:
                    dist[nxt] = dist[node] + w
                    stack.append(nxt)
        # mirror each pair so float summation order cannot skew symmetry
        for j in range(i + 1, n):
            d[i][j] = d[j][i] = dist[labels[j]]
    return d


def tree_splits(labels, adj):
    """Non-trivial leaf bipartitions, each canonicalized to the side
    that excludes the first leaf."""
    leaf_set = set(labels)
    anchor = labels[0]
    splits = set()
    for u in adj:
        for v in adj[u]:
            if not (u < v) or u in leaf_set or v in leaf_set:
                continue
            side = set()
            stack = [(v, u)]
            while stack:
                node, prev = stack.pop()
                for nxt in adj[node]:
                    if nxt == prev:
                        continue
                    if nxt in leaf_set:
                        side.add(nxt)
                    else:
                        stack.append((nxt, node))
            if anchor in side:
                side = leaf_set - side
            splits.add(frozenset(side))
    return splits
