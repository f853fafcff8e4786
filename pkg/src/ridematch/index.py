"""Dynamic offer index: forward and backward buckets over CH search spaces.

Every live offer ``(s, t)`` leaves an ``(offer id, distance)`` entry in the
forward bucket of each node of the forward search space of ``s`` and in the
backward bucket of each node of the backward search space of ``t``. A single
backward search from a pickup point that scans forward buckets then yields
the distance from every offer source to it, and a single forward search from
a drop-off point scanning backward buckets yields the distances onward to
every offer target.

Buckets are ``array('q')`` of interleaved ``id, distance`` pairs so scans can
view them as numpy arrays without copying. Entry order within a bucket is
insertion order; removal is stable, which makes the serialized state a pure
function of the set of live offers and their insertion order.
"""
from __future__ import annotations

import struct
from array import array
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Optional

import numpy as np

from .ch import ContractionHierarchy, SearchSpace, meet, search_space
from .graph import BACKWARD, FORWARD, UNREACHABLE
from .model import ConstraintSet, Offer, Rational, to_fraction

FORWARD_BUCKETS = "forward-buckets"
BACKWARD_BUCKETS = "backward-buckets"

Buckets = dict[Optional[int], dict[int, array]]


class OfferError(ValueError):
    """An offer that cannot be indexed (unreachable target or s == t)."""

    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(message)


@dataclass
class IndexConfig:
    stall: bool = True
    # store each offer's bucket nodes at insert instead of re-searching on removal
    track_locations: bool = False
    # partition buckets by departure day of the offer
    shard_by_day: bool = False


class OfferIndex:
    def __init__(self, ch: ContractionHierarchy, config: Optional[IndexConfig] = None):
        self.ch = ch
        self.config = config or IndexConfig()
        self.offers: dict[int, Offer] = {}
        self.forward_buckets: Buckets = {}
        self.backward_buckets: Buckets = {}
        self.next_id = 0
        self._locations: dict[int, tuple[tuple[int, ...], tuple[int, ...]]] = {}
        # dense per-id columns for vectorized screening; dead ids keep stale values
        self._base = np.zeros(0, dtype=np.int64)
        self._cap = np.zeros(0, dtype=np.int64)
        self._latest = np.zeros(0, dtype=np.int64)

    def __len__(self):
        return len(self.offers)

    def __contains__(self, offer_id):
        return offer_id in self.offers

    def _shard(self, offer: Offer) -> Optional[int]:
        return offer.shard if self.config.shard_by_day else None

    def _spaces(self, s: int, t: int) -> tuple[SearchSpace, SearchSpace]:
        stall = self.config.stall
        return (
            search_space(self.ch, s, FORWARD, stall=stall),
            search_space(self.ch, t, BACKWARD, stall=stall),
        )

    def insert_offer(
        self,
        s: int,
        t: int,
        epsilon: Rational,
        constraints: Optional[ConstraintSet] = None,
        offer_id: Optional[int] = None,
    ) -> int:
        """Index a new offer and return its id.

        ``offer_id`` is only for journal replay; it must not collide with a
        live offer and the id counter moves past it.
        """
        eps = to_fraction(epsilon)
        if eps < 0:
            raise OfferError("bad_epsilon", f"epsilon {eps} is negative")
        n = self.ch.node_count
        for x in (s, t):
            if not 0 <= x < n:
                raise OfferError("unknown_node", f"node {x} not in graph")
        if s == t:
            raise OfferError("degenerate_offer", "offer source equals target")
        fwd, bwd = self._spaces(s, t)
        base = meet(fwd, bwd)
        if base >= UNREACHABLE:
            raise OfferError("unreachable_offer", f"no path from {s} to {t}")
        if base == 0:
            raise OfferError("degenerate_offer", "offer has zero length")
        if offer_id is None:
            offer_id = self.next_id
        elif offer_id in self.offers:
            raise OfferError("duplicate_id", f"offer {offer_id} already live")
        self.next_id = max(self.next_id, offer_id + 1)
        offer = Offer(offer_id, s, t, eps, base, constraints or ConstraintSet())
        self.offers[offer_id] = offer
        self._set_columns(offer)
        shard = self._shard(offer)
        for buckets, space in ((self.forward_buckets, fwd), (self.backward_buckets, bwd)):
            per_node = buckets.setdefault(shard, {})
            for node, d in space.dist.items():
                b = per_node.get(node)
                if b is None:
                    per_node[node] = array("q", (offer_id, d))
                else:
                    b.append(offer_id)
                    b.append(d)
        if self.config.track_locations:
            self._locations[offer_id] = (tuple(fwd.dist), tuple(bwd.dist))
        return offer_id

    def remove_offer(self, offer_id: int) -> bool:
        offer = self.offers.pop(offer_id, None)
        if offer is None:
            return False
        if self.config.track_locations:
            fwd_nodes, bwd_nodes = self._locations.pop(offer_id)
        else:
            fwd, bwd = self._spaces(offer.source, offer.target)
            fwd_nodes, bwd_nodes = fwd.dist, bwd.dist
        shard = self._shard(offer)
        for buckets, nodes in ((self.forward_buckets, fwd_nodes), (self.backward_buckets, bwd_nodes)):
            per_node = buckets[shard]
            for node in nodes:
                _drop(per_node, node, offer_id)
            if not per_node:
                del buckets[shard]
        return True

    def _set_columns(self, offer: Offer) -> None:
        i = offer.id
        if i >= len(self._cap):
            size = max(1024, 2 * len(self._cap), i + 1)
            for name in ("_base", "_cap", "_latest"):
                old = getattr(self, name)
                new = np.zeros(size, dtype=np.int64)
                new[: len(old)] = old
                setattr(self, name, new)
        self._base[i] = offer.base_length
        self._cap[i] = epsilon_cap(offer.base_length, offer.epsilon)
        w = offer.constraints.window
        self._latest[i] = UNREACHABLE if w is None else w[1]

    def caps(self, ids: np.ndarray, epsilon: Optional[Fraction] = None) -> np.ndarray:
        """Largest admissible route length per offer id, exact (floor of a rational)."""
        if epsilon is None:
            return self._cap[ids]
        base = self._base[ids]
        p, q = epsilon.numerator, epsilon.denominator
        if len(base) and int(base.max()) * (p + q) >= 1 << 62:
            return np.array([epsilon_cap(int(b), epsilon) for b in base], dtype=np.int64)
        return (base * (q + p)) // q

    def shards_for(self, constraints: Optional[ConstraintSet]) -> Optional[list]:
        """Shard keys that may hold offers passing the departure prefilter."""
        if not self.config.shard_by_day or constraints is None or constraints.window is None:
            return None
        first_day = constraints.window[0] // 86400
        return [k for k in self.forward_buckets if k is None or k >= first_day]

    def scan_arrays(
        self,
        space: SearchSpace,
        side: str,
        shards: Optional[Iterable] = None,
        earliest: Optional[int] = None,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized scan: sorted offer ids with their minimum combined distance.

        ``earliest`` drops offers whose latest departure precedes it.
        """
        buckets = self.forward_buckets if side == FORWARD_BUCKETS else self.backward_buckets
        keys = list(buckets) if shards is None else [k for k in shards if k in buckets]
        ids_parts = []
        dist_parts = []
        for key in keys:
            per_node = buckets[key]
            for node, d in space.dist.items():
                b = per_node.get(node)
                if b is None:
                    continue
                pairs = np.frombuffer(b, dtype=np.int64)
                ids_parts.append(pairs[0::2].copy())
                dist_parts.append(pairs[1::2] + d)
                del pairs
        if not ids_parts:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty
        ids = np.concatenate(ids_parts)
        dists = np.concatenate(dist_parts)
        if self.next_id <= 4 * len(ids) + 4096:
            best = np.full(self.next_id, UNREACHABLE, dtype=np.int64)
            np.minimum.at(best, ids, dists)
            hit = np.flatnonzero(best < UNREACHABLE)
            out_d = best[hit]
        else:
            hit, inverse = np.unique(ids, return_inverse=True)
            out_d = np.full(len(hit), UNREACHABLE, dtype=np.int64)
            np.minimum.at(out_d, inverse, dists)
        if earliest is not None:
            keep = self._latest[hit] >= earliest
            hit, out_d = hit[keep], out_d[keep]
        return hit, out_d

    def scan_buckets(
        self,
        space: SearchSpace,
        side: str,
        prefilter: Optional[Callable[[Offer], bool]] = None,
        shards: Optional[Iterable] = None,
    ) -> dict[int, int]:
        """Minimum of entry distance + space distance per offer over common nodes."""
        ids, dists = self.scan_arrays(space, side, shards)
        result = dict(zip(ids.tolist(), dists.tolist()))
        if prefilter is not None:
            offers = self.offers
            result = {i: d for i, d in result.items() if prefilter(offers[i])}
        return result

    # -- inspection

    def entry_counts(self) -> tuple[int, int]:
        return (_count(self.forward_buckets), _count(self.backward_buckets))

    def bucket_count(self) -> int:
        return sum(len(p) for p in self.forward_buckets.values()) + sum(
            len(p) for p in self.backward_buckets.values()
        )

    def entries(self, side: str, node: int) -> list[tuple[int, int]]:
        buckets = self.forward_buckets if side == FORWARD_BUCKETS else self.backward_buckets
        out = []
        for per_node in buckets.values():
            b = per_node.get(node)
            if b is not None:
                out.extend(zip(b[0::2], b[1::2]))
        return out

    def state_bytes(self) -> bytes:
        """Canonical serialization of offers and both bucket structures."""
        parts = [struct.pack("<Q", len(self.offers))]
        for oid in sorted(self.offers):
            o = self.offers[oid]
            eps = f"{o.epsilon.numerator}/{o.epsilon.denominator}".encode()
            cons = " ".join(o.constraints.to_tokens()).encode()
            parts.append(struct.pack("<qqqqHH", oid, o.source, o.target, o.base_length, len(eps), len(cons)))
            parts.append(eps + cons)
        for buckets in (self.forward_buckets, self.backward_buckets):
            keys = sorted(buckets, key=lambda k: (k is not None, k or 0))
            parts.append(struct.pack("<Q", len(keys)))
            for key in keys:
                per_node = buckets[key]
                parts.append(struct.pack("<qQ", -1 if key is None else key, len(per_node)))
                for node in sorted(per_node):
                    b = per_node[node]
                    parts.append(struct.pack("<qQ", node, len(b)))
                    parts.append(b.tobytes())
        return b"".join(parts)

    def detour_bound(self) -> int:
        """Largest admissible detoured route length over live offers."""
        return max((epsilon_cap(o.base_length, o.epsilon) for o in self.offers.values()), default=0)


def _drop(per_node: dict[int, array], node: int, offer_id: int) -> None:
    b = per_node.get(node)
    if b is None:
        return
    if len(b) <= 64:
        kept = array("q")
        for i in range(0, len(b), 2):
            if b[i] != offer_id:
                kept.append(b[i])
                kept.append(b[i + 1])
    else:
        pairs = np.frombuffer(b, dtype=np.int64).reshape(-1, 2)
        keep = pairs[:, 0] != offer_id
        kept = array("q")
        kept.frombytes(pairs[keep].tobytes())
        del pairs
    if kept:
        per_node[node] = kept
    else:
        del per_node[node]


def _count(buckets: Buckets) -> int:
    return sum(len(b) for per_node in buckets.values() for b in per_node.values()) // 2


def distance_table(ch: ContractionHierarchy, sources: list[int], targets: list[int]) -> list[list[int]]:
    """Many-to-many distances via backward buckets: |T| backward plus |S| forward searches."""
    buckets: dict[int, list[tuple[int, int]]] = {}
    for j, t in enumerate(targets):
        for node, d in search_space(ch, t, BACKWARD).dist.items():
            buckets.setdefault(node, []).append((j, d))
    table = []
    for s in sources:
        row = [UNREACHABLE] * len(targets)
        for node, d in search_space(ch, s, FORWARD).dist.items():
            for j, e in buckets.get(node, ()):
                if d + e < row[j]:
                    row[j] = d + e
        table.append(row)
    return table


def epsilon_cap(base: int, epsilon: Fraction) -> int:
    return (base * (epsilon.denominator + epsilon.numerator)) // epsilon.denominator
