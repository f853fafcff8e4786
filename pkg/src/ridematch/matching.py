"""Request matching: three searches, exact detour test, constraint filters, ranking.

The combined route for offer ``(s, t)`` and request ``(s', t')`` is
``s -> s' -> t' -> t``. Its minimal length is
``mu(s, s') + mu(s', t') + mu(t', t)`` and the pair fits when that length is
at most ``(1 + epsilon) * mu(s, t)``. All comparisons are done on integers
and ``Fraction``s, so the boundary case counts as a fit without any
floating-point tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .ch import ContractionHierarchy, ch_query, search_space
from .graph import BACKWARD, FORWARD, UNREACHABLE
from .index import BACKWARD_BUCKETS, FORWARD_BUCKETS, OfferIndex, epsilon_cap
from .model import Offer, Rational, Request, format_fraction, to_fraction


@dataclass
class MatchConfig:
    driver_weight: Fraction = Fraction(1)
    passenger_weight: Fraction = Fraction(0)
    epsilon_override: Optional[Fraction] = None
    # bound request-side searches by the largest admissible route length
    bound_searches: bool = False
    stall: bool = True

    def __post_init__(self):
        self.driver_weight = to_fraction(self.driver_weight)
        self.passenger_weight = to_fraction(self.passenger_weight)
        if self.epsilon_override is not None:
            self.epsilon_override = to_fraction(self.epsilon_override)
            if self.epsilon_override < 0:
                raise ValueError("epsilon override must be non-negative")
        if self.driver_weight < 0 or self.passenger_weight < 0:
            raise ValueError("detour weights must be non-negative")
        if self.driver_weight + self.passenger_weight <= 0:
            raise ValueError("at least one detour weight must be positive")


@dataclass
class Match:
    offer: int
    pickup: int
    shared: int
    dropoff: int
    base: int
    driver_detour: Fraction
    passenger_detour: Fraction = Fraction(0)
    score: Fraction = field(default=Fraction(0))

    @property
    def route_length(self) -> int:
        return self.pickup + self.shared + self.dropoff

    def to_dict(self) -> dict:
        return {
            "offer": self.offer,
            "pickup": self.pickup,
            "shared": self.shared,
            "dropoff": self.dropoff,
            "base": self.base,
            "driver_detour": format_fraction(self.driver_detour),
            "passenger_detour": format_fraction(self.passenger_detour),
            "score": format_fraction(self.score),
            "driver_detour_float": float(self.driver_detour),
        }


def evaluate_fit(pickup: int, shared: int, dropoff: int, base: int, epsilon: Rational) -> tuple[Fraction, bool]:
    """Driver detour ratio and whether the route stays within ``(1 + epsilon) * base``."""
    if base <= 0:
        raise ValueError("base length must be positive")
    eps = to_fraction(epsilon)
    total = pickup + shared + dropoff
    detour = Fraction(total - base, base)
    # total <= (1 + p/q) * base  <=>  q * total <= (q + p) * base
    fits = eps.denominator * total <= (eps.denominator + eps.numerator) * base
    return detour, fits


def prefilter(offer: Offer, req: Request) -> bool:
    """False only when a constraint fails whatever the travel times turn out to be."""
    oc, rc = offer.constraints, req.constraints
    if oc.window is not None and rc.window is not None and oc.window[1] < rc.window[0]:
        return False
    return not oc.conflicts(rc)


def postfilter(match: Match, offer: Offer, req: Request) -> bool:
    """Full constraint check once the pickup travel time is known.

    With both windows set, some departure inside the offer window must put
    the driver at the pickup point inside the request window.
    """
    oc, rc = offer.constraints, req.constraints
    if oc.conflicts(rc):
        return False
    if oc.window is not None and rc.window is not None:
        arrive_lo = oc.window[0] + match.pickup
        arrive_hi = oc.window[1] + match.pickup
        if arrive_hi < rc.window[0] or arrive_lo > rc.window[1]:
            return False
    return True


def _assemble(idx, req, cfg, candidates, shared) -> list[Match]:
    """Exact fit test, filters and ranking over ``(offer id, pickup, dropoff)`` triples."""
    out = []
    wd, wp = cfg.driver_weight, cfg.passenger_weight
    check = not req.constraints.empty
    for oid, pickup, dropoff in candidates:
        offer = idx.offers[oid]
        if check and not prefilter(offer, req):
            continue
        eps = offer.epsilon if cfg.epsilon_override is None else cfg.epsilon_override
        detour, fits = evaluate_fit(pickup, shared, dropoff, offer.base_length, eps)
        if not fits:
            continue
        m = Match(oid, pickup, shared, dropoff, offer.base_length, detour)
        m.score = wd * m.driver_detour + wp * m.passenger_detour
        if check and not postfilter(m, offer, req):
            continue
        out.append(m)
    out.sort(key=lambda m: (m.score, m.offer))
    if req.max_results is not None:
        del out[req.max_results :]
    return out


def match_request(
    idx: OfferIndex,
    ch: ContractionHierarchy,
    req: Request,
    cfg: Optional[MatchConfig] = None,
) -> list[Match]:
    """All fitting offers for ``req``, best score first (ties by offer id).

    One backward search from the pickup point scans forward buckets, one
    forward search from the drop-off point scans backward buckets, and one
    point-to-point query gives the shared leg. Candidates are screened
    against exact integer length caps before the rational detour is formed.
    """
    cfg = cfg or MatchConfig()
    shared = ch_query(ch, req.source, req.target, stall=cfg.stall)
    if shared >= UNREACHABLE or not idx.offers:
        return []
    bound = None
    if cfg.bound_searches:
        if cfg.epsilon_override is None:
            bound = idx.detour_bound()
        else:
            bound = max(epsilon_cap(o.base_length, cfg.epsilon_override) for o in idx.offers.values())
        bound -= shared
    window = req.constraints.window
    earliest = None if window is None else window[0]
    shards = idx.shards_for(req.constraints)
    back = search_space(ch, req.source, BACKWARD, bound=bound, stall=cfg.stall)
    p_ids, p_dist = idx.scan_arrays(back, FORWARD_BUCKETS, shards, earliest)
    if not len(p_ids):
        return []
    fwd = search_space(ch, req.target, FORWARD, bound=bound, stall=cfg.stall)
    d_ids, d_dist = idx.scan_arrays(fwd, BACKWARD_BUCKETS, shards, earliest)
    ids, pi, di = np.intersect1d(p_ids, d_ids, assume_unique=True, return_indices=True)
    pickup, dropoff = p_dist[pi], d_dist[di]
    ok = pickup + dropoff + shared <= idx.caps(ids, cfg.epsilon_override)
    candidates = zip(ids[ok].tolist(), pickup[ok].tolist(), dropoff[ok].tolist())
    return _assemble(idx, req, cfg, candidates, shared)


def match_request_p2p(
    idx: OfferIndex,
    ch: ContractionHierarchy,
    req: Request,
    cfg: Optional[MatchConfig] = None,
) -> list[Match]:
    """Baseline: one point-to-point query per distance, 2k + 1 in total."""
    cfg = cfg or MatchConfig()
    shared = ch_query(ch, req.source, req.target, stall=cfg.stall)
    if shared >= UNREACHABLE:
        return []
    candidates = []
    for oid, offer in idx.offers.items():
        p = ch_query(ch, offer.source, req.source, stall=cfg.stall)
        d = ch_query(ch, req.target, offer.target, stall=cfg.stall)
        if p < UNREACHABLE and d < UNREACHABLE:
            candidates.append((oid, p, d))
    return _assemble(idx, req, cfg, candidates, shared)
