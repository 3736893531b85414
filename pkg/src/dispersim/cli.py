"""Experiment runner: single simulations, seed sweeps, traces and CSV rows.

Exit codes: 0 run ok and checks pass, 1 a check failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import random
import sys

from . import analysis
from .dfs import DfsProtocol
from .disperse import DisperseProtocol
from .engine import SimState, run_until, make_adversary, CyclicWait
from .graph import FAMILIES, generate, load_graph, GraphError


class ConfigError(ValueError):
    pass


def random_placement(n, k, sources, mult, seed):
    """Place k robots on `sources` nodes, `mult` of them holding >= 2 robots.

    Deterministic in the seed; robot ids 1..k assigned in shuffled order.
    """
    if not (1 <= sources <= min(n, k)):
        raise ConfigError(f"sources={sources} infeasible for n={n}, k={k}")
    if not (0 <= mult <= sources):
        raise ConfigError(f"mult={mult} must lie in [0, sources={sources}]")
    if k < sources + mult:
        raise ConfigError(f"k={k} too small for {sources} sources with "
                          f"{mult} multiplicity nodes")
    if mult == 0 and k > sources:
        raise ConfigError("extra robots need at least one multiplicity node")
    rng = random.Random(("placement", n, k, sources, mult, seed).__repr__())
    nodes = rng.sample(range(n), sources)
    counts = [1] * sources
    for i in range(mult):
        counts[i] += 1
    spare = k - sum(counts)
    for _ in range(spare):
        counts[rng.randrange(mult)] += 1
    rids = list(range(1, k + 1))
    rng.shuffle(rids)
    placement = []
    at = 0
    for node, c in zip(nodes, counts):
        placement.append((node, rids[at:at + c]))
        at += c
    return placement


def single_source_placement(k, node=0):
    return [(node, list(range(1, k + 1)))]


def build_graph_from_args(args):
    if args.graph:
        return load_graph(args.graph)
    if not args.family:
        raise ConfigError("need --graph FILE or --family NAME")
    if args.family not in FAMILIES:
        raise ConfigError(f"unknown family {args.family!r}")
    if args.n is None:
        raise ConfigError("--family needs --n")
    return generate(args.family, args.n, dmax=args.dmax, seed=args.graph_seed)


def build_placement_from_args(args, g):
    if args.placement_file:
        with open(args.placement_file) as fh:
            raw = json.load(fh)
        return [(int(node), list(map(int, rids))) for node, rids in raw]
    k = args.k if args.k is not None else g.n
    if args.single_source:
        return single_source_placement(k, node=args.source_node)
    sources = args.sources if args.sources is not None else 1
    if sources == 1 and (args.mult or 0) in (0, 1):
        return single_source_placement(k, node=args.source_node)
    mult = args.mult if args.mult is not None else min(sources, max(1, k - sources))
    return random_placement(g.n, k, sources, mult, args.place_seed)


def run_one(args):
    g = build_graph_from_args(args)
    placement = build_placement_from_args(args, g)
    k = sum(len(r) for _, r in placement)
    sources = len(placement)
    mult = sum(1 for _, r in placement if len(r) >= 2)

    state = SimState(g, placement)
    protocol = DfsProtocol() if args.protocol == "dfs" else DisperseProtocol()
    adversary = make_adversary(args.adversary if args.sched == "async" else None)
    max_ticks = args.max_ticks or analysis.multi_source_budget(g, k, args.bound_const)

    outcome = run_until(state, protocol, adversary=adversary,
                        max_ticks=max_ticks)
    verdicts = {"dispersed": outcome.dispersed}
    if args.check and outcome.dispersed:
        mode = ("single_source_exact" if args.check == "single"
                else "multi_source_linear")
        ok, bound, ratio = analysis.check_time_bound(outcome, g, k, mode,
                                                     c=args.bound_const)
        verdicts["time_bound"] = ok
        verdicts["bound"] = bound
        verdicts["ratio"] = round(ratio, 4)
        if args.check == "single":
            ok_e, _, bad = analysis.edge_traversal_audit(outcome.log, g)
            verdicts["edge_audit"] = ok_e
    mem = analysis.memory_report(state)
    verdicts["memory"] = mem.within_budget

    row = {
        "n": g.n, "m": g.m, "dmax": g.max_degree, "k": k, "sources": sources,
        "mult": mult, "rounds": outcome.rounds, "ticks": outcome.ticks,
        "epochs": outcome.epochs, "dispersed": outcome.dispersed,
        "max_bits": mem.global_max, "bits_budget": mem.budget,
        "graph_seed": args.graph_seed, "place_seed": args.place_seed,
    }
    row.update({f"check_{k_}": v for k_, v in verdicts.items()})

    if args.trace:
        with open(args.trace, "w") as fh:
            for ev in outcome.log:
                fh.write(json.dumps(ev) + "\n")
    if args.csv:
        write_csv(args.csv, [row])
    ok = outcome.dispersed and all(v for k_, v in verdicts.items()
                                   if isinstance(v, bool))
    return row, (0 if ok else 1)


def write_csv(path, rows):
    if not rows:
        return
    keys = sorted({k for row in rows for k in row})
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for row in rows:
            w.writerow(row)


def sweep(args):
    seeds = list(range(args.seed_start, args.seed_end))
    if not seeds:
        raise ConfigError("empty seed range")
    rows = []
    failures = 0
    for seed in seeds:
        sub = argparse.Namespace(**vars(args))
        sub.graph_seed = seed
        sub.place_seed = seed
        sub.trace = None
        sub.csv = None
        try:
            row, rc = run_one(sub)
        except CyclicWait as exc:
            row, rc = {"graph_seed": seed, "error": f"deadlock: {exc}"}, 1
        except Exception as exc:  # keep sweeping; record the failure
            row, rc = {"graph_seed": seed, "error": str(exc)}, 1
        row["seed"] = seed
        rows.append(row)
        failures += rc != 0
    rows.sort(key=lambda r: r["seed"])
    if args.csv:
        write_csv(args.csv, rows)
    return rows, (1 if failures else 0)


def add_common(p):
    p.add_argument("--graph", help="graph spec file")
    p.add_argument("--family", help=f"generator family: {', '.join(FAMILIES)}")
    p.add_argument("--n", type=int)
    p.add_argument("--dmax", type=int, default=None)
    p.add_argument("--graph-seed", type=int, default=0)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--single-source", action="store_true")
    p.add_argument("--source-node", type=int, default=0)
    p.add_argument("--sources", type=int, default=None)
    p.add_argument("--mult", type=int, default=None)
    p.add_argument("--place-seed", type=int, default=0)
    p.add_argument("--placement-file")
    p.add_argument("--protocol", choices=("disperse", "dfs"), default="disperse")
    p.add_argument("--sched", choices=("sync", "async"), default="sync")
    p.add_argument("--adversary", default="random:0.5:0",
                   help="async policy: all | random:p:seed | rr:batch")
    p.add_argument("--max-ticks", type=int, default=None)
    p.add_argument("--check", choices=("single", "multi"), default=None)
    p.add_argument("--bound-const", type=int, default=64)
    p.add_argument("--trace", help="write JSONL event trace here")
    p.add_argument("--csv", help="write summary CSV here")


def main(argv=None):
    parser = argparse.ArgumentParser(prog="dispersim")
    sub = parser.add_subparsers(dest="cmd", required=True)
    p_run = sub.add_parser("run", help="run one simulation")
    add_common(p_run)
    p_sweep = sub.add_parser("sweep", help="run a seed sweep")
    add_common(p_sweep)
    p_sweep.add_argument("--seed-start", type=int, default=0)
    p_sweep.add_argument("--seed-end", type=int, default=10)

    args = parser.parse_args(argv)
    try:
        if args.cmd == "run":
            row, rc = run_one(args)
            print(json.dumps(row, default=str))
            return rc
        rows, rc = sweep(args)
        bad = [r for r in rows if r.get("error") or not r.get("dispersed", True)]
        print(json.dumps({"runs": len(rows), "failures": len(bad)}))
        for r in bad[:10]:
            print(json.dumps(r, default=str), file=sys.stderr)
        return rc
    except (ConfigError, GraphError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
