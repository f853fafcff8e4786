"""Desk-scale experiment pipeline: workloads, endpoint perturbation, latency and match-rate tables."""
from __future__ import annotations

import heapq
import logging
import random
import statistics
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .ch import ContractionHierarchy, ch_query, unpack_search_space
from .graph import BACKWARD, FORWARD, UNREACHABLE, RoadGraph
from .index import OfferError, OfferIndex, distance_table
from .matching import MatchConfig, match_request_p2p
from .model import Request
from .service import Engine, ServiceError

log = logging.getLogger(__name__)

Trip = tuple[int, int]


@dataclass
class WorkloadSpec:
    offer_counts: tuple[int, ...] = (1000, 10000, 100000)
    request_count: int = 1000
    # exponential trip-length rate per second; default mean is two hours
    trip_rate: float = 1 / 7200
    perturb_budget: int = 3000
    detour_grid: tuple[Fraction, ...] = (Fraction(1, 20), Fraction(1, 10), Fraction(1, 5))
    seed: int = 0
    places: int = 450
    offer_epsilon: Fraction = Fraction(1, 10)
    warmup: int = 20
    baseline_requests: int = 3

    def __post_init__(self):
        if any(c <= 0 for c in self.offer_counts) or self.request_count <= 0:
            raise ValueError("counts must be positive")
        if self.trip_rate <= 0:
            raise ValueError("trip rate must be positive")
        if self.perturb_budget < 0:
            raise ValueError("perturbation budget must be non-negative")
        self.detour_grid = tuple(Fraction(x) if not isinstance(x, float) else Fraction(repr(x)) for x in self.detour_grid)


# ---------------------------------------------------------------- workloads


def _ring_target(g: RoadGraph, s: int, d: float) -> Optional[int]:
    """Node whose distance from ``s`` is closest to ``d`` (Dijkstra stopped just past d)."""
    below: Optional[tuple[int, int]] = None
    dist = {s: 0}
    done = set()
    heap = [(0, s)]
    adj = g.out_edges
    while heap:
        du, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u != s:
            if du >= d:
                if below is None or du - d < d - below[0]:
                    return u
                return below[1]
            below = (du, u)
        for v, w in adj[u]:
            nd = du + w
            if nd < dist.get(v, UNREACHABLE):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return None if below is None else below[1]


@dataclass
class PlaceModel:
    """A fixed set of designated endpoints with their pairwise distances."""

    nodes: list[int]
    table: list[list[int]]

    @classmethod
    def sample(cls, g: RoadGraph, ch: ContractionHierarchy, count: int, rng: random.Random) -> "PlaceModel":
        nodes = rng.sample(range(g.node_count), min(count, g.node_count))
        return cls(nodes, distance_table(ch, nodes, nodes))

    def target_for(self, i: int, d: float) -> Optional[int]:
        row = self.table[i]
        best, best_j = None, None
        for j, mu in enumerate(row):
            if j == i or mu >= UNREACHABLE or mu == 0:
                continue
            gap = abs(mu - d)
            if best is None or gap < best:
                best, best_j = gap, j
        return best_j


def generate_offers(
    g: RoadGraph,
    ch: ContractionHierarchy,
    spec: WorkloadSpec,
    count: int,
    rng: random.Random,
    places: Optional[PlaceModel] = None,
    max_retries: int = 100,
) -> list[Trip]:
    """Trips with exponentially distributed shortest-path lengths.

    Sources are uniform over all nodes (or over ``places``); the target is the
    node (place) whose distance from the source is closest to a draw
    ``d ~ Exp(trip_rate)``.
    """
    trips = []
    for _ in range(count):
        for _attempt in range(max_retries):
            d = rng.expovariate(spec.trip_rate)
            if places is None:
                s = rng.randrange(g.node_count)
                t = _ring_target(g, s, d)
            else:
                i = rng.randrange(len(places.nodes))
                j = places.target_for(i, d)
                s, t = places.nodes[i], None if j is None else places.nodes[j]
            if t is not None:
                trips.append((s, t))
                break
        else:
            raise RuntimeError(f"no reachable target after {max_retries} source draws")
    return trips


def uniform_trips(g: RoadGraph, ch: ContractionHierarchy, count: int, rng: random.Random) -> list[Trip]:
    """Uniformly random connected pairs (the 'random' workload)."""
    trips = []
    while len(trips) < count:
        s, t = rng.randrange(g.node_count), rng.randrange(g.node_count)
        if s != t and ch_query(ch, s, t) < UNREACHABLE:
            trips.append((s, t))
    return trips


def perturb_endpoint(
    ch: ContractionHierarchy,
    node: int,
    budget: int,
    rng: random.Random,
    direction: str = FORWARD,
) -> int:
    """Uniform draw from the budget-bounded unpacked search space of ``node``.

    Use ``FORWARD`` for trip sources and ``BACKWARD`` for destinations.
    """
    if budget <= 0:
        return node
    space = unpack_search_space(ch, node, direction, budget)
    return rng.choice(sorted(space))


def perturb_trips(ch: ContractionHierarchy, trips: Sequence[Trip], budget: int, rng: random.Random) -> list[Trip]:
    out = []
    for s, t in trips:
        while True:
            ps = perturb_endpoint(ch, s, budget, rng, FORWARD)
            pt = perturb_endpoint(ch, t, budget, rng, BACKWARD)
            if ps != pt:
                break
        out.append((ps, pt))
    return out


def trip_lengths(ch: ContractionHierarchy, trips: Sequence[Trip]) -> list[int]:
    return [ch_query(ch, s, t) for s, t in trips]


def ks_distance(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sample Kolmogorov-Smirnov statistic."""
    from scipy.stats import ks_2samp

    return float(ks_2samp(a, b).statistic)


# ---------------------------------------------------------------- latency


@dataclass
class LatencyRow:
    workload: str
    offers: int
    requests: int
    mean_ms: float
    median_ms: float
    p99_ms: float
    baseline_ms: Optional[float]
    entries: int

    @property
    def speedup(self) -> Optional[float]:
        if self.baseline_ms is None or self.mean_ms == 0:
            return None
        return self.baseline_ms / self.mean_ms


def fill_index(engine: Engine, trips: Sequence[Trip], epsilon: Fraction) -> int:
    """Insert trips until exhausted; returns the number inserted."""
    added = 0
    for s, t in trips:
        try:
            engine.add_offer(engine.graph.external(s), engine.graph.external(t), epsilon)
        except ServiceError as exc:
            if exc.status != 422:
                raise
        else:
            added += 1
    return added


def time_requests(engine: Engine, requests: Sequence[Request], warmup: int) -> list[float]:
    for req in requests[:warmup]:
        engine.match(req)
    samples = []
    clock = time.perf_counter
    for req in requests:
        t0 = clock()
        engine.match(req)
        samples.append(clock() - t0)
    return samples


def bench_latency(
    engine: Engine,
    spec: WorkloadSpec,
    offers: Sequence[Trip],
    requests: Sequence[Trip],
    workload: str = "real",
    baseline: bool = True,
) -> list[LatencyRow]:
    """Mean/median/p99 match time as the index grows through ``spec.offer_counts``.

    ``offers`` must hold at least ``max(offer_counts)`` trips; offers are added
    incrementally so each row extends the previous index. The 2k+1 baseline
    runs on the first ``spec.baseline_requests`` requests of each row.
    """
    rows = []
    reqs = [Request(s, t) for s, t in requests]
    cursor = 0
    for k in sorted(spec.offer_counts):
        while len(engine.index) < k and cursor < len(offers):
            s, t = offers[cursor]
            cursor += 1
            try:
                engine.index.insert_offer(s, t, spec.offer_epsilon)
            except OfferError:
                continue
        samples = time_requests(engine, reqs, spec.warmup)
        ms = sorted(x * 1e3 for x in samples)
        base_ms = None
        if baseline and spec.baseline_requests:
            b = []
            for req in reqs[: spec.baseline_requests]:
                t0 = time.perf_counter()
                match_request_p2p(engine.index, engine.ch, req, engine.match_config)
                b.append(time.perf_counter() - t0)
            base_ms = statistics.fmean(b) * 1e3
        fwd, bwd = engine.index.entry_counts()
        row = LatencyRow(
            workload, len(engine.index), len(reqs), statistics.fmean(ms), statistics.median(ms),
            ms[min(len(ms) - 1, int(0.99 * len(ms)))], base_ms, fwd + bwd,
        )
        log.info("bench %s k=%d mean %.2f ms", workload, row.offers, row.mean_ms)
        rows.append(row)
    return rows


def format_latency(rows: Sequence[LatencyRow]) -> str:
    lines = ["workload\toffers\trequests\tmean_ms\tmedian_ms\tp99_ms\tbaseline_ms\tspeedup\tentries"]
    for r in rows:
        base = "" if r.baseline_ms is None else f"{r.baseline_ms:.2f}"
        speed = "" if r.speedup is None else f"{r.speedup:.1f}"
        lines.append(
            f"{r.workload}\t{r.offers}\t{r.requests}\t{r.mean_ms:.3f}\t{r.median_ms:.3f}\t{r.p99_ms:.3f}\t{base}\t{speed}\t{r.entries}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- match rates


@dataclass
class RateTable:
    detour_grid: tuple[Fraction, ...]
    rows: dict[int, dict[Fraction, float]] = field(default_factory=dict)
    perfect_fit: dict[int, float] = field(default_factory=dict)
    # per size, the smallest achievable detour per request (inf if none within the largest grid value)
    best_detours: dict[int, list[float]] = field(default_factory=dict)

    def format(self) -> str:
        head = "offers\t" + "\t".join(str(float(e)) for e in self.detour_grid) + "\tperfect_fit_only"
        lines = [head]
        for size in sorted(self.rows):
            cells = "\t".join(f"{self.rows[size][e]:.3f}" for e in self.detour_grid)
            lines.append(f"{size}\t{cells}\t{self.perfect_fit[size]:.3f}")
        return "\n".join(lines) + "\n"

    def curve(self, size: int, points: Sequence[float]) -> list[tuple[float, float]]:
        """Fraction of requests matched at each detour value, as a plot-ready series."""
        best = np.asarray(self.best_detours[size], dtype=float)
        return [(x, float(np.mean(best <= x))) for x in points]


def rate_experiment(
    graph: RoadGraph,
    ch: ContractionHierarchy,
    spec: WorkloadSpec,
    sizes: Optional[Sequence[int]] = None,
    perturbed: bool = False,
    places: Optional[PlaceModel] = None,
) -> RateTable:
    """Fraction of requests with at least one fitting offer, per size and detour bound.

    Offers and requests come from the same place-based generator; each size
    gets a fresh index while the request set stays fixed. Every request is
    matched once with the largest grid value as a global detour bound, and
    the smallest detour found decides all grid cells, so each row is
    monotone by construction.
    """
    rng = random.Random(spec.seed)
    if places is None:
        places = PlaceModel.sample(graph, ch, spec.places, rng)
    sizes = sorted(sizes or spec.offer_counts)
    requests = generate_offers(graph, ch, spec, spec.request_count, rng, places)
    pool = generate_offers(graph, ch, spec, max(sizes), rng, places)
    if perturbed:
        requests = perturb_trips(ch, requests, spec.perturb_budget, rng)
        pool = perturb_trips(ch, pool, spec.perturb_budget, rng)
    top = max(spec.detour_grid)
    cfg = MatchConfig(epsilon_override=top)
    table = RateTable(tuple(spec.detour_grid))
    for size in sizes:
        engine = Engine(graph, ch, OfferIndex(ch), cfg)
        for s, t in pool[:size]:
            try:
                engine.index.insert_offer(s, t, top)
            except OfferError:
                continue
        offered = {(o.source, o.target) for o in engine.index.offers.values()}
        exact = []
        for s, t in requests:
            matches = engine.match(Request(s, t, max_results=1))
            exact.append(matches[0].driver_detour if matches else None)
        best = [float("inf") if x is None else float(x) for x in exact]
        table.rows[size] = {
            e: sum(1 for x in exact if x is not None and x <= e) / len(exact) for e in spec.detour_grid
        }
        table.perfect_fit[size] = sum(1 for r in requests if r in offered) / len(requests)
        table.best_detours[size] = best
        log.info("rates k=%d %s", size, table.rows[size])
    return table
