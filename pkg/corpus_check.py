"""Quick corpus scan used while iterating on the protocol."""
import sys
import random

from dispersim import generate, SimState, DisperseProtocol, run_until
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


def run_one(seed, check_oracle=True):
    g, placement, k = instance(seed)
    s = SimState(g, placement)
    budget = analysis.multi_source_budget(g, k, 64)
    out = run_until(s, DisperseProtocol(), max_ticks=budget)
    if not out.dispersed:
        return (seed, 'TIMEOUT', out.rounds, budget)
    mem = analysis.memory_report(s)
    if not mem.within_budget:
        return (seed, 'MEM', mem.global_max, mem.budget)
    if check_oracle:
        labels = [min(r) for _, r in placement]
        mism = analysis.oracle_agreement(out.log, s, labels)
        if mism:
            return (seed, 'ORACLE', len(mism), str(mism[0])[:160])
    return None


if __name__ == "__main__":
    lo = int(sys.argv[1]) if len(sys.argv) > 1 else 0
    hi = int(sys.argv[2]) if len(sys.argv) > 2 else 200
    fails = []
    for seed in range(lo, hi):
        try:
            r = run_one(seed)
        except Exception as e:
            r = (seed, type(e).__name__, str(e)[:140])
        if r:
            fails.append(r)
    print(f"failures: {len(fails)} / {hi - lo}")
    for f in fails[:25]:
        print(f)
