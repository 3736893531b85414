"""Replay one corpus instance step by step and dump state around failures."""
import random
import sys

from dispersim import generate, SimState, DisperseProtocol, step_round
from dispersim import analysis
from dispersim.cli import random_placement


def instance(seed):
    rng = random.Random(seed)
    n = rng.randint(4, 30)
    dmax = rng.randint(2, 6)
    fam = rng.choice(['random_connected', 'random_tree', 'ring', 'grid'])
    g = generate(fam, n, dmax=(dmax if fam == 'random_connected' else None), seed=seed)
    k = rng.randint(3, g.n)
    kp = rng.randint(2, max(2, k // 2))
    kp = min(kp, k, g.n)
    ell = rng.randint(1, kp)
    if k < kp + ell:
        ell = max(1 if k > kp else 0, k - kp)
    if ell == 0:
        k = kp + 1
        ell = 1
    placement = random_placement(g.n, k, kp, ell, seed)
    return g, placement, k


def dump(s, tick_from=0):
    print(f"--- tick {s.tick} ---")
    by_node = {}
    for rid, node in s.pos.items():
        by_node.setdefault(node, []).append(rid)
    for node in sorted(by_node):
        parts = []
        for rid in sorted(by_node[node]):
            r = s.robots[rid]
            bits = f"r{rid}[{r.treelabel}]{r.mode}/{r.state}"
            extra = []
            if r.rank: extra.append(f"rk{r.rank}")
            if r.parent is not None: extra.append(f"p{r.parent}")
            if r.child != -1: extra.append(f"c{r.child}")
            if r.retrace is not None: extra.append(f"R{r.retrace}")
            if r.collapse is not None: extra.append(f"C{r.collapse}")
            if r.locked_by is not None: extra.append(f"L{r.locked_by}")
            if r.aux is not None: extra.append(f"x{r.aux}")
            if r.is_collapsing: extra.append("FLG")
            if r.junction_active: extra.append("JCT")
            if r.collapsing_children: extra.append(f"cc{r.collapsing_children}")
            parts.append(bits + ("(" + ",".join(extra) + ")" if extra else ""))
        print(f"  n{node}: " + "  ".join(parts))


def main(seed, until=10000, dump_from=None, dump_every=1):
    g, placement, k = instance(seed)
    print(f"seed {seed}: n={g.n} m={g.m} dmax={g.max_degree} k={k} placement={placement}")
    s = SimState(g, placement)
    proto = DisperseProtocol()
    budget = analysis.multi_source_budget(g, k, 64)
    try:
        while s.tick < min(until, budget):
            if dump_from is not None and s.tick >= dump_from and s.tick % dump_every == 0:
                dump(s)
            step_round(s, proto)
            analysis.round_invariants(s)
            if s.dispersed():
                print(f"DISPERSED at round {s.rounds}")
                return
        print(f"TIMEOUT at {s.tick}")
        dump(s)
    except Exception as exc:
        print(f"FAIL at tick {s.tick}: {type(exc).__name__}: {exc}")
        dump(s)
        raise


if __name__ == "__main__":
    seed = int(sys.argv[1])
    dump_from = int(sys.argv[2]) if len(sys.argv) > 2 else None
    main(seed, dump_from=dump_from)
