import random
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ridematch.ch import build_ch, search_space
from ridematch.graph import BACKWARD, FORWARD, UNREACHABLE, dijkstra
from ridematch.index import (
    BACKWARD_BUCKETS,
    FORWARD_BUCKETS,
    IndexConfig,
    OfferError,
    OfferIndex,
    distance_table,
)
from ridematch.matching import match_request
from ridematch.model import ConstraintSet, Request
from ridematch.synthetic import random_graph

from .conftest import A, B, C, D


def _random_offers(g, rng, k):
    pairs = []
    while len(pairs) < k:
        s, t = rng.randrange(g.node_count), rng.randrange(g.node_count)
        if s != t:
            pairs.append((s, t))
    return pairs


def _fill(idx, pairs, eps="1/4"):
    ids = []
    for s, t in pairs:
        try:
            ids.append(idx.insert_offer(s, t, eps))
        except OfferError:
            pass
    return ids


def test_insert_chain_offer(chain4_ch):
    idx = OfferIndex(chain4_ch)
    oid = idx.insert_offer(A, D, "0.3")
    offer = idx.offers[oid]
    assert offer.base_length == 3
    assert offer.epsilon == Fraction(3, 10)
    assert (oid, 0) in idx.entries(FORWARD_BUCKETS, A)
    assert (oid, 0) in idx.entries(BACKWARD_BUCKETS, D)


def test_insert_then_remove_restores_state(random200_ch):
    idx = OfferIndex(random200_ch)
    rng = random.Random(3)
    _fill(idx, _random_offers(random200_ch, rng, 20))
    before = idx.state_bytes()
    (oid,) = _fill(idx, [(10, 20)])
    assert idx.state_bytes() != before
    assert idx.remove_offer(oid)
    assert idx.state_bytes() == before


@pytest.mark.parametrize("offer", [(A, A), (0, 99)])
def test_rejects_degenerate_and_unknown(chain4_ch, offer):
    idx = OfferIndex(chain4_ch)
    with pytest.raises(OfferError):
        idx.insert_offer(*offer, "0.1")


def test_rejects_unreachable():
    g = random_graph(2, avg_degree=0.5, seed=0)
    # one spanning edge only, so one direction is unreachable
    ch = build_ch(g)
    (u, v, _), = list(g.edges())
    idx = OfferIndex(ch)
    with pytest.raises(OfferError) as err:
        idx.insert_offer(v, u, 1)
    assert err.value.code == "unreachable_offer"
    assert len(idx) == 0 and idx.entry_counts() == (0, 0)


def test_rejects_negative_epsilon(chain4_ch):
    with pytest.raises(OfferError):
        OfferIndex(chain4_ch).insert_offer(A, D, "-1/10")


def test_entries_equal_search_space_distances(random200, random200_ch):
    idx = OfferIndex(random200_ch)
    rng = random.Random(5)
    ids = _fill(idx, _random_offers(random200, rng, 50))
    for oid in ids:
        o = idx.offers[oid]
        fwd = search_space(random200_ch, o.source, FORWARD)
        bwd = search_space(random200_ch, o.target, BACKWARD)
        for node, d in fwd.dist.items():
            assert (oid, d) in idx.entries(FORWARD_BUCKETS, node)
        for node, d in bwd.dist.items():
            assert (oid, d) in idx.entries(BACKWARD_BUCKETS, node)
        # the stored base length is the true distance
        assert o.base_length == dijkstra(random200, o.source)[o.target]


def test_entry_count_is_sum_of_space_sizes(random200_ch):
    idx = OfferIndex(random200_ch)
    ids = _fill(idx, _random_offers(random200_ch, random.Random(8), 40))
    want_f = sum(len(search_space(random200_ch, idx.offers[i].source, FORWARD)) for i in ids)
    want_b = sum(len(search_space(random200_ch, idx.offers[i].target, BACKWARD)) for i in ids)
    assert idx.entry_counts() == (want_f, want_b)


def test_remove_unknown_is_noop(chain4_ch):
    idx = OfferIndex(chain4_ch)
    idx.insert_offer(A, D, 0)
    before = idx.state_bytes()
    assert idx.remove_offer(12345) is False
    assert idx.state_bytes() == before


def test_remove_all_empties_buckets(random200_ch):
    idx = OfferIndex(random200_ch)
    ids = _fill(idx, _random_offers(random200_ch, random.Random(1), 30))
    for oid in ids:
        assert idx.remove_offer(oid)
    assert idx.forward_buckets == {} and idx.backward_buckets == {}
    assert len(idx) == 0


def test_ids_never_reused(chain4_ch):
    idx = OfferIndex(chain4_ch)
    first = idx.insert_offer(A, D, 0)
    idx.remove_offer(first)
    assert idx.insert_offer(A, D, 0) != first


def test_remove_one_of_overlapping_offers_keeps_others(grid_small, grid_small_ch):
    idx = OfferIndex(grid_small_ch)
    # ten offers along roughly the same corridor
    ids = [idx.insert_offer(i, 399 - i, "1/2") for i in range(10)]
    requests = [Request(s, t) for s, t in [(21, 378), (45, 350), (3, 396), (60, 300)]]
    before = {r.source: [m for m in match_request(idx, grid_small_ch, r) if m.offer != ids[4]] for r in requests}
    idx.remove_offer(ids[4])
    after = {r.source: match_request(idx, grid_small_ch, r) for r in requests}
    assert before == after


def test_scan_empty_index(chain4_ch):
    idx = OfferIndex(chain4_ch)
    space = search_space(chain4_ch, B, BACKWARD)
    assert idx.scan_buckets(space, FORWARD_BUCKETS) == {}


def test_scan_chain_pickup_distance(chain4_ch):
    idx = OfferIndex(chain4_ch)
    oid = idx.insert_offer(A, D, "0.5")
    space = search_space(chain4_ch, B, BACKWARD)
    assert idx.scan_buckets(space, FORWARD_BUCKETS) == {oid: 1}


@pytest.mark.parametrize("seed", range(5))
def test_scan_matches_dijkstra(seed):
    g = random_graph(150, avg_degree=2.5, seed=100 + seed, max_weight=40)
    ch = build_ch(g)
    rng = random.Random(seed)
    idx = OfferIndex(ch)
    _fill(idx, _random_offers(g, rng, 60))
    for _ in range(10):
        x = rng.randrange(150)
        to_x = dijkstra(g, x, BACKWARD)
        from_x = dijkstra(g, x, FORWARD)
        pickups = idx.scan_buckets(search_space(ch, x, BACKWARD), FORWARD_BUCKETS)
        dropoffs = idx.scan_buckets(search_space(ch, x, FORWARD), BACKWARD_BUCKETS)
        want_p = {oid: to_x[o.source] for oid, o in idx.offers.items() if o.source in to_x}
        want_d = {oid: from_x[o.target] for oid, o in idx.offers.items() if o.target in from_x}
        assert pickups == want_p
        assert dropoffs == want_d


def test_scan_prefilter(chain4_ch):
    idx = OfferIndex(chain4_ch)
    keep = idx.insert_offer(A, D, 0, ConstraintSet(attributes={"smoking": "false"}))
    idx.insert_offer(A, D, 0, ConstraintSet(attributes={"smoking": "true"}))
    space = search_space(chain4_ch, B, BACKWARD)
    got = idx.scan_buckets(space, FORWARD_BUCKETS, lambda o: o.constraints.attributes.get("smoking") == "false")
    assert got == {keep: 1}


@pytest.mark.parametrize("config", [IndexConfig(track_locations=True), IndexConfig(shard_by_day=True), IndexConfig(stall=False)])
def test_alternative_configs_agree(grid_small, grid_small_ch, config):
    rng = random.Random(17)
    plain = OfferIndex(grid_small_ch)
    other = OfferIndex(grid_small_ch, config)
    pairs = _random_offers(grid_small, rng, 80)
    windows = [ConstraintSet(window=(d * 86400 + 3600, d * 86400 + 7200)) for d in (0, 1, 2)] + [ConstraintSet()]
    for s, t in pairs:
        cons = rng.choice(windows)
        plain.insert_offer(s, t, "1/5", cons)
        other.insert_offer(s, t, "1/5", cons)
    for oid in rng.sample(sorted(plain.offers), 30):
        plain.remove_offer(oid)
        other.remove_offer(oid)
    for _ in range(40):
        s, t = rng.randrange(400), rng.randrange(400)
        req = Request(s, t, rng.choice(windows + [ConstraintSet(window=(86400, 2 * 86400))]))
        assert match_request(plain, grid_small_ch, req) == match_request(other, grid_small_ch, req)
    if not config.shard_by_day:
        assert plain.entry_counts() == other.entry_counts() or not config.stall


def test_distance_table(random200, random200_ch):
    rng = random.Random(0)
    src = rng.sample(range(200), 12)
    dst = rng.sample(range(200), 9)
    table = distance_table(random200_ch, src, dst)
    for i, s in enumerate(src):
        row = dijkstra(random200, s)
        assert table[i] == [row.get(t, UNREACHABLE) for t in dst]


def test_detour_bound(chain4_ch):
    idx = OfferIndex(chain4_ch)
    assert idx.detour_bound() == 0
    idx.insert_offer(A, D, "1/2")  # 3 * 1.5 = 4.5 -> 4
    idx.insert_offer(A, C, 1)  # 2 * 2 = 4
    assert idx.detour_bound() == 4


@given(st.lists(st.tuples(st.booleans(), st.integers(0, 199), st.integers(0, 199)), min_size=1, max_size=60))
def test_round_trip_property(random200_ch, ops):
    idx = OfferIndex(random200_ch)
    live = []
    log = []
    for is_insert, s, t in ops:
        if is_insert or not live:
            try:
                oid = idx.insert_offer(s, t, "1/10")
            except OfferError:
                continue
            live.append(oid)
            log.append((oid, s, t))
        else:
            oid = live.pop(s % len(live))
            assert idx.remove_offer(oid)
    replay = OfferIndex(random200_ch)
    survivors = set(live)
    for oid, s, t in log:
        if oid in survivors:
            replay.insert_offer(s, t, "1/10", offer_id=oid)
    assert replay.state_bytes() == idx.state_bytes()
