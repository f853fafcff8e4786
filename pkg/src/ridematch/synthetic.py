"""Synthetic graph families used by tests and the desk-scale experiments."""
from __future__ import annotations

import random
from typing import Optional

from .graph import RoadGraph


def chain_graph(n: int, weight: int = 1, symmetric: bool = True) -> RoadGraph:
    edges = [(i, i + 1, weight) for i in range(n - 1)]
    return RoadGraph.from_edges(n, edges, symmetric=symmetric)


def star_graph(leaves: int, seed: int = 0, max_weight: int = 10) -> RoadGraph:
    """Node 0 is the center; every leaf is joined to it in both directions."""
    rng = random.Random(seed)
    edges = [(0, i, rng.randint(1, max_weight)) for i in range(1, leaves + 1)]
    return RoadGraph.from_edges(leaves + 1, edges, symmetric=True)


def random_graph(
    n: int,
    avg_degree: float = 3.0,
    seed: int = 0,
    max_weight: int = 100,
    directed: bool = True,
    min_weight: int = 0,
) -> RoadGraph:
    """Sparse random graph: a random spanning tree plus uniform extra edges.

    Directed instances are not guaranteed strongly connected, so some pairs
    are unreachable; that is intended.
    """
    rng = random.Random(seed)
    edges = []
    order = list(range(n))
    rng.shuffle(order)
    for i in range(1, n):
        a, b = order[rng.randrange(i)], order[i]
        if rng.random() < 0.5:
            a, b = b, a
        edges.append((a, b, rng.randint(min_weight, max_weight)))
    extra = int(n * avg_degree) - len(edges)
    for _ in range(max(extra, 0)):
        a, b = rng.randrange(n), rng.randrange(n)
        edges.append((a, b, rng.randint(min_weight, max_weight)))
    return RoadGraph.from_edges(n, edges, symmetric=not directed)


def grid_graph(
    rows: int,
    cols: int,
    seed: int = 0,
    min_weight: int = 20,
    max_weight: int = 60,
    arterial_every: Optional[int] = None,
    arterial_factor: float = 0.35,
    drop_fraction: float = 0.0,
) -> RoadGraph:
    """Undirected grid with random travel times and optional fast arterials.

    Every ``arterial_every``-th row and column is scaled by
    ``arterial_factor``, which gives the graph a road-like hierarchy.
    ``drop_fraction`` removes non-arterial edges at random while keeping
    the graph connected (a random spanning tree is always kept).
    """
    rng = random.Random(seed)

    def nid(r, c):
        return r * cols + c

    cand = []
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                fast = arterial_every is not None and r % arterial_every == 0
                cand.append((nid(r, c), nid(r, c + 1), fast))
            if r + 1 < rows:
                fast = arterial_every is not None and c % arterial_every == 0
                cand.append((nid(r, c), nid(r + 1, c), fast))
    keep = [True] * len(cand)
    if drop_fraction > 0:
        # union-find spanning tree over a random edge order keeps connectivity
        parent = list(range(rows * cols))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        order = list(range(len(cand)))
        rng.shuffle(order)
        tree = set()
        for i in order:
            a, b = find(cand[i][0]), find(cand[i][1])
            if a != b:
                parent[a] = b
                tree.add(i)
        for i, (_, _, fast) in enumerate(cand):
            if i not in tree and not fast and rng.random() < drop_fraction:
                keep[i] = False
    edges = []
    for (a, b, fast), k in zip(cand, keep):
        w = rng.randint(min_weight, max_weight)
        if fast:
            w = max(1, int(w * arterial_factor))
        if k:
            edges.append((a, b, w))
    g = RoadGraph.from_edges(rows * cols, edges, symmetric=True)
    g.coords = [(float(r), float(c)) for r in range(rows) for c in range(cols)]
    return g


def road_like_graph(n_target: int, seed: int = 0) -> RoadGraph:
    """Square arterial grid with at least ``n_target`` nodes."""
    side = 1
    while side * side < n_target:
        side += 1
    return grid_graph(side, side, seed=seed, arterial_every=8, drop_fraction=0.3)
