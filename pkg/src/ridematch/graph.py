"""Road network representation, file loaders and the plain Dijkstra oracle.

Graph file formats
------------------

``dimacs-gr`` (9th DIMACS challenge shortest-path format)::

    c  free-form comment
    p sp <nodes> <edges>
    a <u> <v> <w>

Node ids are 1-based, weights are non-negative integers (seconds). The
header must precede every arc line and the number of arc lines must equal
``<edges>``.

``edge-list``::

    # comment
    <u> <v> <w>

Node ids are arbitrary non-negative integers; the node set is the set of ids
appearing in some edge, densified in ascending id order.

In both formats self-loops are dropped and parallel edges collapse to the
minimum weight.
"""
from __future__ import annotations

import hashlib
import heapq
import io
import os
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Optional, Sequence, TextIO, Union

UNREACHABLE = 1 << 62
"""Distance sentinel, larger than any finite path length."""

FORWARD = "forward"
BACKWARD = "backward"

Edge = tuple[int, int, int]


class GraphFormatError(ValueError):
    """Raised for malformed graph input; carries the offending line number."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass
class RoadGraph:
    """Directed graph with integer travel-time weights on dense node ids."""

    node_count: int
    out_edges: list[list[tuple[int, int]]]
    in_edges: list[list[tuple[int, int]]]
    external_ids: list[int] = field(default_factory=list)
    coords: Optional[list[tuple[float, float]]] = None

    def __post_init__(self):
        if not self.external_ids:
            self.external_ids = list(range(self.node_count))
        self._index = {ext: i for i, ext in enumerate(self.external_ids)}

    @classmethod
    def from_edges(
        cls,
        node_count: int,
        edges: Iterable[Edge],
        symmetric: bool = False,
        external_ids: Optional[Sequence[int]] = None,
    ) -> "RoadGraph":
        best: list[dict[int, int]] = [{} for _ in range(node_count)]
        for u, v, w in edges:
            if not (0 <= u < node_count and 0 <= v < node_count):
                raise ValueError(f"edge ({u}, {v}) outside [0, {node_count})")
            if w < 0:
                raise ValueError(f"negative weight on edge ({u}, {v})")
            if u == v:
                continue
            pairs = ((u, v), (v, u)) if symmetric else ((u, v),)
            for a, b in pairs:
                cur = best[a].get(b)
                if cur is None or w < cur:
                    best[a][b] = w
        out_edges = [sorted(d.items()) for d in best]
        in_edges: list[list[tuple[int, int]]] = [[] for _ in range(node_count)]
        for u, adj in enumerate(out_edges):
            for v, w in adj:
                in_edges[v].append((u, w))
        return cls(node_count, out_edges, in_edges, list(external_ids or []))

    @property
    def edge_count(self) -> int:
        return sum(len(adj) for adj in self.out_edges)

    def edges(self) -> Iterable[Edge]:
        for u, adj in enumerate(self.out_edges):
            for v, w in adj:
                yield u, v, w

    def node(self, external_id: int) -> int:
        """Map an external id to the dense internal id (KeyError if unknown)."""
        return self._index[external_id]

    def external(self, node: int) -> int:
        return self.external_ids[node]

    def weight(self, u: int, v: int) -> Optional[int]:
        for x, w in self.out_edges[u]:
            if x == v:
                return w
        return None

    def reverse(self) -> "RoadGraph":
        return RoadGraph(
            self.node_count,
            [list(adj) for adj in self.in_edges],
            [list(adj) for adj in self.out_edges],
            list(self.external_ids),
            self.coords,
        )

    def fingerprint(self) -> str:
        """Content hash over node count and the sorted edge set."""
        h = hashlib.sha256()
        h.update(self.node_count.to_bytes(8, "little"))
        for u, v, w in self.edges():
            h.update(u.to_bytes(8, "little"))
            h.update(v.to_bytes(8, "little"))
            h.update(w.to_bytes(8, "little"))
        return h.hexdigest()


@dataclass(frozen=True)
class Path:
    nodes: tuple[int, ...]
    length: int


def path_cost(g: RoadGraph, nodes: Sequence[int]) -> Path:
    """Sum the edge weights along ``nodes``; raises if two consecutive nodes are not joined."""
    total = 0
    for a, b in zip(nodes, nodes[1:]):
        w = g.weight(a, b)
        if w is None:
            raise ValueError(f"no edge {a} -> {b}")
        total += w
    return Path(tuple(nodes), total)


def _read_lines(source: Union[str, os.PathLike, bytes, BinaryIO, TextIO]) -> list[str]:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            data = fh.read()
    elif isinstance(source, bytes):
        data = source
    else:
        data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return io.StringIO(data).read().splitlines()


def _parse_int(token: str, lineno: int, what: str) -> int:
    try:
        value = int(token)
    except ValueError:
        raise GraphFormatError(f"bad {what} {token!r}", lineno) from None
    if value < 0:
        raise GraphFormatError(f"negative {what} {value}", lineno)
    return value


def _load_dimacs(lines: list[str], symmetric: bool) -> RoadGraph:
    header: Optional[tuple[int, int]] = None
    edges: list[Edge] = []
    for lineno, raw in enumerate(lines, 1):
        parts = raw.split()
        if not parts or parts[0] == "c":
            continue
        tag = parts[0]
        if tag == "p":
            if header is not None:
                raise GraphFormatError("duplicate problem line", lineno)
            if len(parts) != 4 or parts[1] != "sp":
                raise GraphFormatError("expected 'p sp <nodes> <edges>'", lineno)
            header = (_parse_int(parts[2], lineno, "node count"), _parse_int(parts[3], lineno, "edge count"))
        elif tag == "a":
            if header is None:
                raise GraphFormatError("arc before problem line", lineno)
            if len(parts) != 4:
                raise GraphFormatError("expected 'a <u> <v> <w>'", lineno)
            u = _parse_int(parts[1], lineno, "node id")
            v = _parse_int(parts[2], lineno, "node id")
            w = _parse_int(parts[3], lineno, "weight")
            for x in (u, v):
                if not 1 <= x <= header[0]:
                    raise GraphFormatError(f"node {x} outside 1..{header[0]}", lineno)
            edges.append((u - 1, v - 1, w))
        else:
            raise GraphFormatError(f"unknown line type {tag!r}", lineno)
    if header is None:
        raise GraphFormatError("missing problem line")
    if len(edges) != header[1]:
        raise GraphFormatError(f"header declares {header[1]} arcs, found {len(edges)}")
    n = header[0]
    return RoadGraph.from_edges(n, edges, symmetric, list(range(1, n + 1)))


def _load_edge_list(lines: list[str], symmetric: bool) -> RoadGraph:
    raw_edges = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].split()
        if not line:
            continue
        if len(line) != 3:
            raise GraphFormatError("expected '<u> <v> <w>'", lineno)
        raw_edges.append(tuple(_parse_int(t, lineno, what) for t, what in zip(line, ("node id", "node id", "weight"))))
    ids = sorted({x for u, v, _ in raw_edges for x in (u, v)})
    index = {ext: i for i, ext in enumerate(ids)}
    edges = [(index[u], index[v], w) for u, v, w in raw_edges]
    return RoadGraph.from_edges(len(ids), edges, symmetric, ids)


def load_graph(source, format: str = "dimacs-gr", symmetric: bool = False) -> RoadGraph:
    """Parse a graph from a path, bytes or a binary/text stream.

    ``symmetric`` adds the reverse of every edge, for undirected inputs.
    """
    lines = _read_lines(source)
    if format == "dimacs-gr":
        return _load_dimacs(lines, symmetric)
    if format == "edge-list":
        return _load_edge_list(lines, symmetric)
    raise ValueError(f"unknown graph format {format!r}")


def write_dimacs(g: RoadGraph, fh: TextIO) -> None:
    fh.write(f"p sp {g.node_count} {g.edge_count}\n")
    for u, v, w in g.edges():
        fh.write(f"a {u + 1} {v + 1} {w}\n")


def dijkstra(
    g: RoadGraph,
    source: int,
    direction: str = FORWARD,
    bound: Optional[int] = None,
) -> dict[int, int]:
    """Exact distances from (forward) or to (backward) ``source``.

    Unreached nodes and nodes farther than ``bound`` are absent.
    """
    adj = g.out_edges if direction == FORWARD else g.in_edges
    limit = UNREACHABLE if bound is None else bound
    dist = {source: 0}
    done: dict[int, int] = {}
    heap = [(0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        if d > limit:
            break
        done[u] = d
        for v, w in adj[u]:
            nd = d + w
            if nd < dist.get(v, UNREACHABLE):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return done


def shortest_distance(g: RoadGraph, u: int, v: int) -> int:
    """mu(u, v) by early-exit Dijkstra; ``UNREACHABLE`` if no path."""
    if u == v:
        return 0
    dist = {u: 0}
    done = set()
    heap = [(0, u)]
    adj = g.out_edges
    while heap:
        d, x = heapq.heappop(heap)
        if x in done:
            continue
        if x == v:
            return d
        done.add(x)
        for y, w in adj[x]:
            nd = d + w
            if nd < dist.get(y, UNREACHABLE):
                dist[y] = nd
                heapq.heappush(heap, (nd, y))
    return UNREACHABLE
