"""Matching rate per offer count and detour bound, plus plot-ready matched-fraction curves.

    python3 scripts/run_rate_table.py --out results/rates.tsv --curve results/rates_curve.tsv
"""
import argparse
import logging
from fractions import Fraction
from pathlib import Path

from ridematch.ch import build_ch
from ridematch.experiments import WorkloadSpec, rate_experiment
from ridematch.synthetic import road_like_graph


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--nodes", type=int, default=10_000)
    p.add_argument("--graph-seed", type=int, default=3)
    p.add_argument("--sizes", default="1000,3000,10000")
    p.add_argument("--requests", type=int, default=1000)
    p.add_argument("--trip-rate", type=float, default=1 / 1000)
    p.add_argument("--places", type=int, default=450)
    p.add_argument("--budget", type=int, default=100, help="perturbation budget for the perturbed table")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", default="")
    p.add_argument("--curve", default="")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    g = road_like_graph(args.nodes, seed=args.graph_seed)
    ch = build_ch(g)
    sizes = tuple(int(x) for x in args.sizes.split(","))
    spec = WorkloadSpec(offer_counts=sizes, request_count=args.requests, trip_rate=args.trip_rate,
                        places=args.places, perturb_budget=args.budget, seed=args.seed)
    out, curves = [], ["mode\toffers\tdetour\tmatched"]
    points = [Fraction(i, 100) for i in range(31)]
    for mode in ("places", "perturbed"):
        table = rate_experiment(g, ch, spec, perturbed=mode == "perturbed")
        out.append(f"# {mode}\n{table.format()}")
        for size in sorted(table.rows):
            curves += [f"{mode}\t{size}\t{float(x):.2f}\t{y:.4f}" for x, y in table.curve(size, points)]
    text = "\n".join(out)
    print(text, end="")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    if args.curve:
        Path(args.curve).parent.mkdir(parents=True, exist_ok=True)
        Path(args.curve).write_text("\n".join(curves) + "\n")


if __name__ == "__main__":
    main()
