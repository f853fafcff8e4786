"""Match latency per offer count on a synthetic road-like grid, for both workloads.

The 2k+1 point-to-point baseline runs only up to ``--baseline-max`` offers
because it grows linearly and dominates the runtime beyond that.

    python3 scripts/run_latency_table.py --nodes 100000 --out results/latency.tsv
"""
import argparse
import logging
import random
from pathlib import Path

from ridematch.experiments import PlaceModel, WorkloadSpec, bench_latency, format_latency, generate_offers, uniform_trips
from ridematch.index import OfferIndex
from ridematch.service import Engine, load_hierarchy
from ridematch.synthetic import road_like_graph


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--nodes", type=int, default=100_000)
    p.add_argument("--graph-seed", type=int, default=1)
    p.add_argument("--offer-counts", default="1000,10000,100000")
    p.add_argument("--requests", type=int, default=1000)
    p.add_argument("--trip-rate", type=float, default=1 / 2000)
    p.add_argument("--places", type=int, default=450)
    p.add_argument("--baseline-max", type=int, default=10_000)
    p.add_argument("--baseline-requests", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ch", default="", help="hierarchy snapshot cache")
    p.add_argument("--out", default="")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    g = road_like_graph(args.nodes, seed=args.graph_seed)
    ch = load_hierarchy(g, args.ch or None)
    counts = sorted(int(x) for x in args.offer_counts.split(","))
    rng = random.Random(args.seed)
    spec = WorkloadSpec(offer_counts=tuple(counts), request_count=args.requests, trip_rate=args.trip_rate,
                        places=args.places, seed=args.seed, baseline_requests=args.baseline_requests)
    places = PlaceModel.sample(g, ch, args.places, rng)
    workloads = {
        "random": (uniform_trips(g, ch, counts[-1], rng), uniform_trips(g, ch, args.requests, rng)),
        "real": (generate_offers(g, ch, spec, counts[-1], rng, places),
                 generate_offers(g, ch, spec, args.requests, rng, places)),
    }
    rows = []
    for name, (offers, requests) in workloads.items():
        engine = Engine(g, ch, OfferIndex(ch))
        for k in counts:
            spec.offer_counts = (k,)
            rows += bench_latency(engine, spec, offers, requests, name, baseline=k <= args.baseline_max)
    text = format_latency(rows)
    print(text, end="")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)


if __name__ == "__main__":
    main()
