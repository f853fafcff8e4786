"""Contraction hierarchy: preprocessing, upward searches, point-to-point queries.

Edges are kept in two rank-ascending adjacency lists:

* ``upward[u]``   -- edges ``u -> v`` with ``rank[v] > rank[u]`` (forward search)
* ``downward[v]`` -- edges ``u -> v`` with ``rank[u] > rank[v]``, stored at the
  lower endpoint as ``(u, w, mid)`` (backward search walks them from v to u)

``mid`` is the bypassed node of a shortcut, or -1 for an original edge.
"""
from __future__ import annotations

import heapq
import logging
import struct
import time
from dataclasses import dataclass, field
from typing import BinaryIO, Optional, Sequence

import numpy as np

from .graph import BACKWARD, FORWARD, UNREACHABLE, RoadGraph

log = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b"RMCH"
SNAPSHOT_VERSION = 1

CHEdge = tuple[int, int, int]


@dataclass
class ContractionHierarchy:
    rank: list[int]
    upward: list[list[CHEdge]]
    downward: list[list[CHEdge]]
    fingerprint: str = ""
    build_seconds: float = 0.0
    _lookup: Optional[dict] = field(default=None, repr=False)

    @property
    def node_count(self) -> int:
        return len(self.rank)

    @property
    def shortcut_count(self) -> int:
        return sum(1 for adj in self.upward for e in adj if e[2] >= 0) + sum(
            1 for adj in self.downward for e in adj if e[2] >= 0
        )

    def edge(self, u: int, v: int) -> tuple[int, int]:
        """Weight and middle node of the hierarchy edge ``u -> v``."""
        if self._lookup is None:
            lookup = {}
            for a, adj in enumerate(self.upward):
                for b, w, m in adj:
                    lookup[a, b] = (w, m)
            for b, adj in enumerate(self.downward):
                for a, w, m in adj:
                    lookup[a, b] = (w, m)
            self._lookup = lookup
        return self._lookup[u, v]

    def unpack_edge(self, u: int, v: int) -> list[int]:
        """Original-graph node sequence of hierarchy edge ``u -> v``, both ends included."""
        out = [u]
        stack = [(u, v)]
        while stack:
            a, b = stack.pop()
            _, m = self.edge(a, b)
            if m < 0:
                out.append(b)
            else:
                stack.append((m, b))
                stack.append((a, m))
        return out


@dataclass
class SearchSpace:
    """Settled nodes of one upward search, with their (possibly suboptimal) distances."""

    origin: int
    direction: str
    dist: dict[int, int]
    parent: Optional[dict[int, int]] = None

    def __len__(self):
        return len(self.dist)


# ---------------------------------------------------------------- preprocessing


def _witness_search(out, source, skip, targets, limit, hop_limit, settle_limit):
    """Hop- and settle-limited Dijkstra from ``source`` avoiding ``skip``.

    Returns tentative distances; they are upper bounds on true distances,
    which is all soundness needs (a missed witness only adds a shortcut).
    """
    dist = {source: 0}
    hops = {source: 0}
    heap = [(0, source)]
    remaining = len(targets)
    settled = 0
    seen = set()
    while heap:
        d, x = heapq.heappop(heap)
        if x in seen:
            continue
        if d > limit:
            break
        seen.add(x)
        if x in targets:
            remaining -= 1
            if remaining == 0:
                break
        settled += 1
        if settled > settle_limit:
            break
        h = hops[x] + 1
        if h > hop_limit:
            continue
        for y, w in out[x].items():
            if y == skip:
                continue
            nd = d + w
            if nd < dist.get(y, UNREACHABLE):
                dist[y] = nd
                hops[y] = h
                heapq.heappush(heap, (nd, y))
    return dist


def _shortcuts(out, inn, v, hop_limit, settle_limit):
    found = []
    out_v = out[v]
    for u, cu in inn[v].items():
        targets = {}
        for w, cw in out_v.items():
            if w != u:
                targets[w] = cu + cw
        if not targets:
            continue
        dist = _witness_search(out, u, v, targets, max(targets.values()), hop_limit, settle_limit)
        for w, need in targets.items():
            if dist.get(w, UNREACHABLE) > need:
                found.append((u, w, need))
    return found


def build_ch(
    g: RoadGraph,
    ordering: str = "edge-difference",
    rank: Optional[Sequence[int]] = None,
    hop_limit: int = 16,
    settle_limit: int = 60,
    sim_settle_limit: int = 30,
) -> ContractionHierarchy:
    """Contract ``g`` into a hierarchy.

    ``ordering`` is ``"edge-difference"`` (lazy-updated edge difference plus
    contracted-neighbour count and level) or ``"given-rank"`` with ``rank`` a
    permutation of node ids (rank 0 is contracted first).
    """
    t0 = time.perf_counter()
    n = g.node_count
    out = [dict(adj) for adj in g.out_edges]
    inn = [dict(adj) for adj in g.in_edges]
    mid: dict[tuple[int, int], int] = {}
    upward: list[list[CHEdge]] = [[] for _ in range(n)]
    downward: list[list[CHEdge]] = [[] for _ in range(n)]
    final_rank = [0] * n
    deleted = [0] * n
    level = [0] * n

    def contract(v):
        sc = _shortcuts(out, inn, v, hop_limit, settle_limit)
        upward[v] = [(w, c, mid.pop((v, w), -1)) for w, c in out[v].items()]
        downward[v] = [(u, c, mid.pop((u, v), -1)) for u, c in inn[v].items()]
        for u in inn[v]:
            del out[u][v]
        for w in out[v]:
            del inn[w][v]
        for u, w, c in sc:
            cur = out[u].get(w)
            if cur is None or c < cur:
                out[u][w] = c
                inn[w][u] = c
                mid[u, w] = v
        neighbours = set(inn[v]) | set(out[v])
        for x in neighbours:
            deleted[x] += 1
            if level[v] + 1 > level[x]:
                level[x] = level[v] + 1
        out[v] = {}
        inn[v] = {}
        return neighbours

    if ordering == "given-rank":
        if rank is None or sorted(rank) != list(range(n)):
            raise ValueError("given-rank ordering needs a permutation of node ids")
        order = sorted(range(n), key=lambda x: rank[x])
        for r, v in enumerate(order):
            final_rank[v] = r
            contract(v)
    elif ordering == "edge-difference":

        def priority(v):
            sc = _shortcuts(out, inn, v, hop_limit, sim_settle_limit)
            edge_diff = len(sc) - len(inn[v]) - len(out[v])
            return 2 * edge_diff + deleted[v] + level[v]

        heap = [(priority(v), v) for v in range(n)]
        heapq.heapify(heap)
        done = bytearray(n)
        r = 0
        while heap:
            _, v = heapq.heappop(heap)
            if done[v]:
                continue
            p = priority(v)
            if heap and (p, v) > heap[0]:
                heapq.heappush(heap, (p, v))
                continue
            done[v] = 1
            final_rank[v] = r
            r += 1
            contract(v)
    else:
        raise ValueError(f"unknown ordering {ordering!r}")

    ch = ContractionHierarchy(final_rank, upward, downward, g.fingerprint())
    ch.build_seconds = time.perf_counter() - t0
    log.info("built CH on %d nodes in %.1fs, %d shortcuts", n, ch.build_seconds, ch.shortcut_count)
    return ch


# ---------------------------------------------------------------- queries


def search_space(
    ch: ContractionHierarchy,
    origin: int,
    direction: str = FORWARD,
    bound: Optional[int] = None,
    stall: bool = True,
    parents: bool = False,
) -> SearchSpace:
    """Upward search from ``origin``; stalled nodes are left out of the space.

    Distances of settled nodes are lengths of real upward paths but may
    exceed the true shortest distance; only the combination of a forward and
    a backward space is exact.
    """
    if direction == FORWARD:
        adj, opp = ch.upward, ch.downward
    else:
        adj, opp = ch.downward, ch.upward
    limit = UNREACHABLE if bound is None else bound
    tent = {origin: 0}
    done: dict[int, int] = {}
    closed = set()
    parent = {origin: -1} if parents else None
    heap = [(0, origin)]
    pop, push = heapq.heappop, heapq.heappush
    while heap:
        d, u = pop(heap)
        if u in closed:
            continue
        if d > limit:
            break
        closed.add(u)
        if stall:
            stalled = False
            for x, w, _ in opp[u]:
                tx = tent.get(x)
                if tx is not None and tx + w < d:
                    stalled = True
                    break
            if stalled:
                continue
        done[u] = d
        for v, w, _ in adj[u]:
            nd = d + w
            if nd < tent.get(v, UNREACHABLE) and v not in closed:
                tent[v] = nd
                if parent is not None:
                    parent[v] = u
                push(heap, (nd, v))
    return SearchSpace(origin, direction, done, parent)


def meet(forward: SearchSpace, backward: SearchSpace) -> int:
    """min over common nodes m of fwd[m] + bwd[m]; UNREACHABLE if none."""
    a, b = forward.dist, backward.dist
    if len(a) > len(b):
        a, b = b, a
    best = UNREACHABLE
    for m, d in a.items():
        e = b.get(m)
        if e is not None and d + e < best:
            best = d + e
    return best


def ch_query(ch: ContractionHierarchy, s: int, t: int, stall: bool = True) -> int:
    """Exact shortest distance by alternating upward searches from both ends."""
    if s == t:
        return 0
    up, down = ch.upward, ch.downward
    tent = ({s: 0}, {t: 0})
    closed = (set(), set())
    heaps = ([(0, s)], [(0, t)])
    adjs = (up, down)
    opps = (down, up)
    best = UNREACHABLE
    pop, push = heapq.heappop, heapq.heappush
    side = 0
    while True:
        h0, h1 = heaps
        live0 = bool(h0) and h0[0][0] < best
        live1 = bool(h1) and h1[0][0] < best
        if not (live0 or live1):
            break
        if not live0:
            side = 1
        elif not live1:
            side = 0
        heap = heaps[side]
        d, u = pop(heap)
        cl = closed[side]
        if u in cl:
            side ^= 1
            continue
        cl.add(u)
        my = tent[side]
        other = tent[side ^ 1].get(u)
        if other is not None and d + other < best:
            best = d + other
        stalled = False
        if stall:
            for x, w, _ in opps[side][u]:
                tx = my.get(x)
                if tx is not None and tx + w < d:
                    stalled = True
                    break
        if not stalled:
            for v, w, _ in adjs[side][u]:
                nd = d + w
                if nd < my.get(v, UNREACHABLE) and v not in cl:
                    my[v] = nd
                    push(heap, (nd, v))
        side ^= 1
    return best


def query_path(ch: ContractionHierarchy, s: int, t: int) -> Optional[list[int]]:
    """Original-graph node sequence of a shortest s-t path, or None."""
    if s == t:
        return [s]
    fwd = search_space(ch, s, FORWARD, stall=False, parents=True)
    bwd = search_space(ch, t, BACKWARD, stall=False, parents=True)
    best, top = UNREACHABLE, -1
    for m, d in fwd.dist.items():
        e = bwd.dist.get(m)
        if e is not None and d + e < best:
            best, top = d + e, m
    if top < 0:
        return None
    up_chain = [top]
    while fwd.parent[up_chain[-1]] >= 0:
        up_chain.append(fwd.parent[up_chain[-1]])
    up_chain.reverse()
    down_chain = [top]
    while bwd.parent[down_chain[-1]] >= 0:
        down_chain.append(bwd.parent[down_chain[-1]])
    chain = up_chain + down_chain[1:]
    nodes = [s]
    for a, b in zip(chain, chain[1:]):
        nodes.extend(ch.unpack_edge(a, b)[1:])
    return nodes


def unpack_search_space(
    ch: ContractionHierarchy,
    origin: int,
    direction: str,
    bound: int,
) -> dict[int, int]:
    """Original-graph nodes on the unpacked paths of the bounded upward search.

    Each node maps to the smallest distance from (forward) or to (backward)
    ``origin`` seen along any unpacked search-tree path; all are <= ``bound``.
    """
    space = search_space(ch, origin, direction, bound=bound, stall=False, parents=True)
    out = {origin: 0}
    parent = space.parent
    for v, d_v in space.dist.items():
        u = parent[v]
        if u < 0:
            continue
        d_u = space.dist[u]
        if direction == FORWARD:
            seq = ch.unpack_edge(u, v)
            acc = d_u
            prev = seq[0]
            for x in seq[1:]:
                acc += ch.edge(prev, x)[0]
                if acc < out.get(x, UNREACHABLE):
                    out[x] = acc
                prev = x
        else:
            # edge v -> u in the graph; distances run toward origin
            seq = ch.unpack_edge(v, u)
            acc = d_u
            nxt = seq[-1]
            for x in reversed(seq[:-1]):
                acc += ch.edge(x, nxt)[0]
                if acc < out.get(x, UNREACHABLE):
                    out[x] = acc
                nxt = x
    return out


# ---------------------------------------------------------------- snapshots


def _pack_adjacency(adj: list[list[CHEdge]]) -> list[np.ndarray]:
    offsets = np.zeros(len(adj) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(a) for a in adj])
    flat = np.array([e for a in adj for e in a], dtype=np.int64).reshape(-1, 3)
    return [offsets, flat[:, 0].copy(), flat[:, 1].copy(), flat[:, 2].copy()]


def _unpack_adjacency(offsets, targets, weights, mids) -> list[list[CHEdge]]:
    triples = list(zip(targets.tolist(), weights.tolist(), mids.tolist()))
    off = offsets.tolist()
    return [triples[off[i] : off[i + 1]] for i in range(len(off) - 1)]


def save_snapshot(ch: ContractionHierarchy, fh: BinaryIO) -> None:
    """Versioned binary dump: header, rank array, upward and downward CSR arrays."""
    n = ch.node_count
    fp = bytes.fromhex(ch.fingerprint) if ch.fingerprint else b"\0" * 32
    fh.write(SNAPSHOT_MAGIC + struct.pack("<IQ", SNAPSHOT_VERSION, n) + fp)
    fh.write(np.asarray(ch.rank, dtype=np.int64).tobytes())
    for adj in (ch.upward, ch.downward):
        offsets, t, w, m = _pack_adjacency(adj)
        fh.write(struct.pack("<Q", len(t)))
        for arr in (offsets, t, w, m):
            fh.write(arr.tobytes())


class SnapshotError(ValueError):
    pass


def load_snapshot(fh: BinaryIO) -> ContractionHierarchy:
    head = fh.read(4 + 12 + 32)
    if len(head) < 48 or head[:4] != SNAPSHOT_MAGIC:
        raise SnapshotError("not a hierarchy snapshot")
    version, n = struct.unpack("<IQ", head[4:16])
    if version != SNAPSHOT_VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    fingerprint = head[16:48].hex()

    def read(count):
        buf = fh.read(8 * count)
        if len(buf) != 8 * count:
            raise SnapshotError("truncated snapshot")
        return np.frombuffer(buf, dtype=np.int64)

    rank = read(n).tolist()
    adjs = []
    for _ in range(2):
        (m,) = struct.unpack("<Q", fh.read(8))
        adjs.append(_unpack_adjacency(read(n + 1), read(m), read(m), read(m)))
    return ContractionHierarchy(rank, adjs[0], adjs[1], fingerprint)
