"""Ride-share offer matching over contraction hierarchies with bucket indices."""
from .ch import ContractionHierarchy, SearchSpace, build_ch, ch_query, search_space, unpack_search_space
from .graph import BACKWARD, FORWARD, UNREACHABLE, RoadGraph, dijkstra, load_graph, shortest_distance
from .index import BACKWARD_BUCKETS, FORWARD_BUCKETS, IndexConfig, OfferError, OfferIndex
from .matching import Match, MatchConfig, evaluate_fit, match_request, postfilter, prefilter
from .model import ConstraintSet, Offer, Request

__all__ = [
    "BACKWARD",
    "BACKWARD_BUCKETS",
    "FORWARD",
    "FORWARD_BUCKETS",
    "UNREACHABLE",
    "ConstraintSet",
    "ContractionHierarchy",
    "IndexConfig",
    "Match",
    "MatchConfig",
    "Offer",
    "OfferError",
    "OfferIndex",
    "Request",
    "RoadGraph",
    "SearchSpace",
    "build_ch",
    "ch_query",
    "dijkstra",
    "evaluate_fit",
    "load_graph",
    "match_request",
    "postfilter",
    "prefilter",
    "search_space",
    "shortest_distance",
    "unpack_search_space",
]
