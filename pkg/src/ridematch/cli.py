"""Command line entry point: ``ridematch <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from fractions import Fraction
from pathlib import Path

from .graph import BACKWARD, FORWARD, load_graph, write_dimacs
from .index import OfferIndex
from .journal import JournalRecord, apply_records, read_journal
from .model import to_fraction
from .service import Engine, ServiceConfig, load_hierarchy, read_config_file, serve
from .synthetic import road_like_graph


def _csv_ints(text):
    return tuple(int(x) for x in text.split(",") if x)


def _csv_fractions(text):
    return tuple(to_fraction(x) for x in text.split(",") if x)


def _add_graph_args(p):
    p.add_argument("--graph", help="graph file (DIMACS .gr or edge list)")
    p.add_argument("--format", default="dimacs-gr", choices=["dimacs-gr", "edge-list"])
    p.add_argument("--symmetric", action="store_true", help="add reverse edges")
    p.add_argument("--grid", type=int, default=0, help="use a synthetic road-like grid with this many nodes")
    p.add_argument("--graph-seed", type=int, default=1)
    p.add_argument("--ch", default="", help="hierarchy snapshot path (built and saved if missing)")


def _add_workload_args(p):
    p.add_argument("--offer-counts", type=_csv_ints, default=(1000, 10000, 100000))
    p.add_argument("--requests", type=int, default=1000)
    p.add_argument("--trip-rate", type=float, default=1 / 7200, help="exponential rate per second")
    p.add_argument("--budget", type=int, default=3000, help="perturbation budget in seconds")
    p.add_argument("--detour-grid", type=_csv_fractions, default=(Fraction(1, 20), Fraction(1, 10), Fraction(1, 5)))
    p.add_argument("--places", type=int, default=450, help="designated endpoints; 0 means every node")
    p.add_argument("--epsilon", type=to_fraction, default=Fraction(1, 10))
    p.add_argument("--seed", type=int, default=0)


def _spec(args):
    from .experiments import WorkloadSpec

    return WorkloadSpec(
        offer_counts=args.offer_counts,
        request_count=args.requests,
        trip_rate=args.trip_rate,
        perturb_budget=args.budget,
        detour_grid=args.detour_grid,
        seed=args.seed,
        places=args.places,
        offer_epsilon=args.epsilon,
    )


def _graph_and_ch(args):
    if args.grid:
        g = road_like_graph(args.grid, seed=args.graph_seed)
    elif args.graph:
        g = load_graph(args.graph, args.format, args.symmetric)
    else:
        raise SystemExit("need --graph or --grid")
    return g, load_hierarchy(g, args.ch or None)


def _write(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_make_graph(args):
    g = road_like_graph(args.nodes, seed=args.graph_seed)
    with open(args.out, "w") as fh:
        write_dimacs(g, fh)
    print(f"wrote {g.node_count} nodes, {g.edge_count} arcs to {args.out}")


def cmd_gen(args):
    from .experiments import PlaceModel, generate_offers, uniform_trips

    g, ch = _graph_and_ch(args)
    spec = _spec(args)
    rng = random.Random(args.seed)
    count = spec.offer_counts[0] if args.count is None else args.count
    if args.workload == "random":
        trips = uniform_trips(g, ch, count, rng)
    else:
        places = PlaceModel.sample(g, ch, spec.places, rng) if spec.places else None
        trips = generate_offers(g, ch, spec, count, rng, places)
    lines = [
        JournalRecord("INSERT", i, g.external(s), g.external(t), spec.offer_epsilon).to_line()
        for i, (s, t) in enumerate(trips)
    ]
    _write("".join(lines), args.out)


def cmd_perturb(args):
    from .experiments import ks_distance, perturb_endpoint, trip_lengths

    g, ch = _graph_and_ch(args)
    rng = random.Random(args.seed)
    records, _, _ = read_journal(args.journal)
    out, before, after = [], [], []
    for rec in records:
        if rec.op != "INSERT":
            out.append(rec.to_line())
            continue
        s, t = g.node(rec.source), g.node(rec.target)
        ps, pt = s, s
        while ps == pt:
            ps = perturb_endpoint(ch, s, args.budget, rng, FORWARD)
            pt = perturb_endpoint(ch, t, args.budget, rng, BACKWARD)
        before.append((s, t))
        after.append((ps, pt))
        out.append(JournalRecord("INSERT", rec.offer_id, g.external(ps), g.external(pt), rec.epsilon, rec.constraints).to_line())
    _write("".join(out), args.out)
    if before:
        ks = ks_distance(trip_lengths(ch, before), trip_lengths(ch, after))
        print(f"ks_distance\t{ks:.4f}", file=sys.stderr)


def cmd_bench(args):
    from .experiments import PlaceModel, bench_latency, format_latency, generate_offers, uniform_trips

    g, ch = _graph_and_ch(args)
    spec = _spec(args)
    spec.baseline_requests = args.baseline_requests
    rng = random.Random(spec.seed)
    need = max(spec.offer_counts)
    if args.workload == "random":
        offers = uniform_trips(g, ch, need, rng)
        requests = uniform_trips(g, ch, spec.request_count, rng)
    else:
        places = PlaceModel.sample(g, ch, spec.places, rng) if spec.places else None
        offers = generate_offers(g, ch, spec, need, rng, places)
        requests = generate_offers(g, ch, spec, spec.request_count, rng, places)
    engine = Engine(g, ch, OfferIndex(ch))
    rows = bench_latency(engine, spec, offers, requests, args.workload, baseline=spec.baseline_requests > 0)
    _write(format_latency(rows), args.out)


def cmd_rates(args):
    from .experiments import rate_experiment

    g, ch = _graph_and_ch(args)
    spec = _spec(args)
    table = rate_experiment(g, ch, spec, perturbed=args.perturbed)
    _write(table.format(), args.out)
    if args.curve:
        points = [i / 100 for i in range(0, 31)]
        lines = ["offers\tdetour\tmatched"]
        for size in sorted(table.rows):
            lines.extend(f"{size}\t{x:.2f}\t{y:.4f}" for x, y in table.curve(size, points))
        Path(args.curve).write_text("\n".join(lines) + "\n")


def cmd_serve_replay(args):
    g, ch = _graph_and_ch(args)
    engine = Engine(g, ch, OfferIndex(ch))
    records, _, torn = read_journal(args.journal)
    if torn:
        logging.getLogger(__name__).warning("ignoring torn final journal record")
    apply_records(records, engine.index, g)
    print(json.dumps({"stats": engine.stats().to_dict()}))
    if args.requests:
        for line in Path(args.requests).read_text().splitlines():
            parts = line.split()
            if len(parts) < 2 or line.startswith("#"):
                continue
            req = engine.request(int(parts[0]), int(parts[1]), max_results=args.max_results or None)
            matches = engine.match(req)
            print(json.dumps({"source": int(parts[0]), "target": int(parts[1]), "matches": [m.to_dict() for m in matches]}))


def cmd_serve(args):
    values = read_config_file(args.config) if args.config else {}
    for key in ("graph", "graph_format", "ch_snapshot", "journal", "host", "port", "max_results", "driver_weight", "passenger_weight"):
        v = getattr(args, key)
        if v is not None:
            values[key] = v
    for flag in ("symmetric", "no_fsync", "shard_by_day"):
        if getattr(args, flag):
            values["fsync" if flag == "no_fsync" else flag] = flag != "no_fsync"
    serve(ServiceConfig.from_mapping(values))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ridematch", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-graph", help="write a synthetic road-like grid as DIMACS")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--graph-seed", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_graph)

    p = sub.add_parser("gen", help="generate an offer workload as a journal")
    _add_graph_args(p)
    _add_workload_args(p)
    p.add_argument("--count", type=int)
    p.add_argument("--workload", choices=["real", "random"], default="real")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("perturb", help="perturb the endpoints of a journal's offers")
    _add_graph_args(p)
    p.add_argument("--journal", required=True)
    p.add_argument("--budget", type=int, default=3000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("bench", help="match latency per offer count, with the 2k+1 baseline")
    _add_graph_args(p)
    _add_workload_args(p)
    p.add_argument("--workload", choices=["real", "random"], default="real")
    p.add_argument("--baseline-requests", type=int, default=3)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("rates", help="matching rate per offer count and detour bound")
    _add_graph_args(p)
    _add_workload_args(p)
    p.add_argument("--perturbed", action="store_true")
    p.add_argument("--out")
    p.add_argument("--curve", help="write plot-ready matched-fraction series here")
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("serve-replay", help="rebuild the index from a journal and answer requests from a file")
    _add_graph_args(p)
    p.add_argument("--journal", required=True)
    p.add_argument("--requests", help="file of '<source> <target>' lines (external ids)")
    p.add_argument("--max-results", type=int, default=0)
    p.set_defaults(func=cmd_serve_replay)

    p = sub.add_parser("serve", help="run the matching service")
    p.add_argument("--config", help="key = value config file; flags override it")
    p.add_argument("--graph")
    p.add_argument("--graph-format", dest="graph_format")
    p.add_argument("--symmetric", action="store_true")
    p.add_argument("--ch-snapshot", dest="ch_snapshot")
    p.add_argument("--journal")
    p.add_argument("--host")
    p.add_argument("--port")
    p.add_argument("--max-results", dest="max_results")
    p.add_argument("--driver-weight", dest="driver_weight")
    p.add_argument("--passenger-weight", dest="passenger_weight")
    p.add_argument("--shard-by-day", action="store_true")
    p.add_argument("--no-fsync", action="store_true")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args.func(args)


if __name__ == "__main__":
    main()
