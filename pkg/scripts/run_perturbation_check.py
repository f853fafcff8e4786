"""Kolmogorov-Smirnov distance between trip lengths before and after endpoint perturbation.

    python3 scripts/run_perturbation_check.py --budgets 50,100,200,400
"""
import argparse
import random
import statistics

from ridematch.ch import build_ch
from ridematch.experiments import PlaceModel, WorkloadSpec, generate_offers, ks_distance, perturb_trips, trip_lengths
from ridematch.synthetic import road_like_graph


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--nodes", type=int, default=10_000)
    p.add_argument("--graph-seed", type=int, default=3)
    p.add_argument("--trips", type=int, default=10_000)
    p.add_argument("--trip-rate", type=float, default=1 / 1000)
    p.add_argument("--places", type=int, default=450)
    p.add_argument("--budgets", default="50,100,200,400")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    g = road_like_graph(args.nodes, seed=args.graph_seed)
    ch = build_ch(g)
    rng = random.Random(args.seed)
    spec = WorkloadSpec(trip_rate=args.trip_rate, places=args.places)
    places = PlaceModel.sample(g, ch, args.places, rng)
    trips = generate_offers(g, ch, spec, args.trips, rng, places)
    before = trip_lengths(ch, trips)
    mean = statistics.fmean(before)
    print("budget\tbudget_over_mean\tks_distance")
    for budget in (int(x) for x in args.budgets.split(",")):
        after = trip_lengths(ch, perturb_trips(ch, trips, budget, random.Random(budget)))
        print(f"{budget}\t{budget / mean:.3f}\t{ks_distance(before, after):.4f}")


if __name__ == "__main__":
    main()
