"""Post-hoc verification: dispersion predicate, per-round invariants, memory
audit, edge-traversal audit, time bounds, meeting graph/tree reconstruction
and the log-replay master oracle."""

from __future__ import annotations

from dataclasses import dataclass, field

from .robot import (memory_bits, memory_budget, SETTLED_OPEN,
                    COLLAPSE_TO_ROOT, FOLLOW, COLLECT_SWEEP, COLLECT_WALK)
from .engine import InvariantViolation


class MalformedLog(ValueError):
    pass


class UnresolvedTimestamps(MalformedLog):
    pass


# ----------------------------------------------------------------------
def check_dispersed(state) -> bool:
    """True iff all k robots are settled on k distinct nodes."""
    if not all(r.settled for r in state.robots.values()):
        return False
    return len({state.pos[rid] for rid in state.robots}) == state.k


def round_invariants(state):
    """Raised-on-failure checks run after every committed round."""
    # settled uniqueness (raises on duplicates)
    state.settled_map()
    # robot conservation
    if len(state.pos) != state.k:
        raise InvariantViolation("robot count changed")
    # rank contiguity per component, skipping components mid-collapse
    dissolving = set()
    ranks = {}
    for rid, r in state.robots.items():
        if r.settled:
            if r.is_collapsing or r.mode == SETTLED_OPEN or r.collapse is not None:
                dissolving.add(r.treelabel)
            ranks.setdefault(r.treelabel, []).append(r.rank)
        elif r.mode in (COLLAPSE_TO_ROOT, FOLLOW, COLLECT_SWEEP,
                        COLLECT_WALK):
            dissolving.add(r.treelabel)
    for label, rs in ranks.items():
        if label in dissolving:
            continue
        if sorted(rs) != list(range(1, len(rs) + 1)):
            raise InvariantViolation(
                f"component {label} settled ranks {sorted(rs)} not 1..{len(rs)}")
    # memory ceiling tracking
    k, dmax = state.k, state.graph.max_degree
    worst = max(memory_bits(r, k, dmax) for r in state.robots.values())
    state.max_memory_bits = max(getattr(state, "max_memory_bits", 0), worst)


# ----------------------------------------------------------------------
@dataclass
class MemoryReport:
    per_robot: dict
    global_max: int
    budget: int

    @property
    def within_budget(self) -> bool:
        return self.global_max <= self.budget


def memory_report(state) -> MemoryReport:
    k, dmax = state.k, state.graph.max_degree
    per = {rid: memory_bits(r, k, dmax) for rid, r in state.robots.items()}
    observed = getattr(state, "max_memory_bits", max(per.values(), default=0))
    return MemoryReport(per, max(observed, max(per.values(), default=0)),
                        memory_budget(k, dmax))


# ----------------------------------------------------------------------
def edge_traversal_counts(log, graph):
    """Traversals per undirected edge; a cohort crossing counts once."""
    crossings = set()
    for ev in log:
        if ev["kind"] != "move":
            continue
        src = ev["detail"]["src"]
        port = ev["detail"]["port"]
        crossings.add((ev["tick"], src, port))
    counts = {}
    for _, src, port in crossings:
        dst, q = graph.neighbor_via_port(src, port)
        key = (min(src, dst), max(src, dst))
        counts[key] = counts.get(key, 0) + 1
    return counts


def edge_traversal_audit(log, graph, limit=4):
    counts = edge_traversal_counts(log, graph)
    bad = {e: c for e, c in counts.items() if c > limit}
    return len(bad) == 0, counts, bad


# ----------------------------------------------------------------------
def single_source_bound(graph, k) -> int:
    return min(4 * graph.m - 2 * graph.n + 2, 4 * k * graph.max_degree)


def multi_source_budget(graph, k, c=64) -> int:
    return c * min(graph.m, k * graph.max_degree)


def check_time_bound(outcome, graph, k, mode, c=64):
    """Returns (ok, bound, ratio)."""
    if mode == "single_source_exact":
        bound = single_source_bound(graph, k)
        return outcome.rounds <= bound, bound, outcome.rounds / max(1, bound)
    if mode == "multi_source_linear":
        base = min(graph.m, k * graph.max_degree)
        bound = c * base
        used = max(outcome.rounds, outcome.epochs)
        return used <= bound, bound, used / max(1, base)
    raise ValueError(f"unknown bound mode {mode!r}")


# ----------------------------------------------------------------------
# meeting structures

MERGE_KINDS = ("subsume", "absorb")


def _merge_events(log):
    evs = []
    for ev in log:
        if ev["kind"] == "subsume":
            evs.append((ev["tick"], 0, ev["detail"]["src"], ev["detail"]["dst"], ev))
        elif ev["kind"] == "absorb":
            evs.append((ev["tick"], 0, ev["detail"]["src"], ev["detail"]["into"], ev))
        elif ev["kind"] == "settle":
            evs.append((ev["tick"], 1, ev["dfs_id"], None, ev))
    evs.sort(key=lambda t: (t[0], t[1]))
    return evs


@dataclass
class MeetingTree:
    nodes: set = field(default_factory=set)          # (label, h)
    children: dict = field(default_factory=dict)     # (M,h) -> [(label,h)...]
    episode_master: dict = field(default_factory=dict)  # merge-event id -> (M,h)
    leaves: set = field(default_factory=set)

    @property
    def height(self):
        return max((h for _, h in self.nodes), default=0)


def build_meeting_tree(log, initial_labels) -> MeetingTree:
    """Reconstruct which components merged into which master, at which depth."""
    tree = MeetingTree()
    level = {}
    for lab in initial_labels:
        level[lab] = 0
        tree.nodes.add((lab, 0))
        tree.leaves.add((lab, 0))
    sink = {}       # dissolved label -> label it flowed into
    pending = {}    # live master label -> [(child node, event ids)...]

    def resolve(label, guard=0):
        while label in sink:
            label = sink[label]
            guard += 1
            if guard > 10000:
                raise MalformedLog("cyclic dissolution chain")
        return label

    def close(master):
        entries = pending.pop(master, [])
        if not entries:
            return
        kids = [node for node, _ in entries]
        own = (master, level.get(master, 0))
        h_new = 1 + max([h for _, h in kids] + [own[1]])
        node = (master, h_new)
        tree.nodes.add(node)
        tree.children[node] = kids + [own]
        for _, ev_ids in entries:
            for ev_id in ev_ids:
                tree.episode_master[ev_id] = node
        level[master] = h_new

    for tick, prio, src, dst, ev in _merge_events(log):
        if prio == 1:  # settle
            label = src
            if label in sink:
                del sink[label]       # a leftover robot re-seeded this label
                level.setdefault(label, 0)
            if label in pending:
                close(label)
            continue
        if src is None or dst is None:
            raise MalformedLog(f"merge event without labels: {ev}")
        if src in sink:
            continue  # stragglers riding a caravan after src dissolved
        target = resolve(dst)
        entry = ((src, level.get(src, 0)), [id(ev)])
        moved = pending.pop(src, [])
        pending.setdefault(target, []).extend(moved + [entry])
        sink[src] = dst
    for master in list(pending):
        close(master)
    return tree


def build_meeting_graph_timeline(log):
    """Directed meet edges with [open, close) tick intervals per source."""
    intervals = []
    open_edge = {}
    for ev in log:
        k = ev["kind"]
        if k == "meet":
            src, dst = ev["detail"]["src"], ev["detail"]["dst"]
            if src in open_edge:
                intervals.append((src, *open_edge.pop(src), ev["tick"]))
            open_edge[src] = (dst, ev["tick"])
        elif k in MERGE_KINDS:
            src = ev["detail"]["src"]
            if src in open_edge:
                intervals.append((src, *open_edge.pop(src), ev["tick"]))
    for src, (dst, t0) in open_edge.items():
        intervals.append((src, dst, t0, None))
    return intervals


def meeting_graph_out_degree_ok(log) -> bool:
    """Out-degree of every live component stays at most one."""
    spans = {}
    for src, dst, t0, t1 in build_meeting_graph_timeline(log):
        spans.setdefault(src, []).append((t0, t1 if t1 is not None else float("inf")))
    for src, sp in spans.items():
        sp.sort()
        for (a0, a1), (b0, b1) in zip(sp, sp[1:]):
            if b0 < a1:
                return False
    return True


@dataclass
class ComponentPartition:
    x_set: dict = field(default_factory=dict)        # (M,h) -> set of labels
    y_trunk: dict = field(default_factory=dict)
    y_branch: dict = field(default_factory=dict)


def build_partition(log, tree: MeetingTree) -> ComponentPartition:
    flavor = {}
    for ev in log:
        if ev["kind"] == "collapse_start":
            flavor[(ev["tick"], ev["dfs_id"])] = ev["detail"]["flavor"]
    # flavor of each merge event's source at its tick
    part = ComponentPartition()
    by_event = {}
    for ev in log:
        if ev["kind"] in MERGE_KINDS:
            src = ev["detail"]["src"]
            fl = flavor.get((ev["tick"], src), "parent")
            by_event[id(ev)] = (src, fl)
    # group children per episode
    kids = {}
    for ev_id, node in tree.episode_master.items():
        kids.setdefault(node, []).append(by_event[ev_id])
    for node, members in kids.items():
        xs, trunk, branch = set(), set(), set()
        child_ward = {lab for lab, fl in members if fl == "child"}
        for lab, fl in members:
            if fl == "child":
                trunk.add(lab)
            elif child_ward:
                # parent-ward collapse feeding an episode that had child-ward
                # legs: branch if its destination chain crossed one
                branch.add(lab)
            else:
                xs.add(lab)
        part.x_set[node] = xs
        part.y_trunk[node] = trunk
        part.y_branch[node] = branch
    return part


def build_meeting_structures(log, initial_labels):
    tree = build_meeting_tree(log, initial_labels)
    timeline = build_meeting_graph_timeline(log)
    partition = build_partition(log, tree)
    return timeline, tree, partition


# ----------------------------------------------------------------------
# master oracle (log replay of the paper's recursion)

def _episode_window(label, log, at_tick):
    """Ticks (lo, hi] bounding label's episode that dissolves at at_tick."""
    lo = -1
    for ev in log:
        if ev["tick"] >= at_tick:
            break
        if ev["kind"] in MERGE_KINDS and ev["detail"].get("src") == label:
            lo = ev["tick"]
    return lo


def determine_master(label, log, at_tick=None, _depth=0):
    """Replay the master recursion for `label` from the event log."""
    if _depth > 1000:
        raise UnresolvedTimestamps(f"master recursion diverged at {label}")
    if at_tick is None:
        at_tick = max((ev["tick"] for ev in log), default=0) + 1
    lo = _episode_window(label, log, at_tick)

    meet = None
    t1 = None
    verdict = None
    locks = []  # (tick, locker), withdrawn ones removed
    for ev in log:
        t = ev["tick"]
        if t <= lo or t > at_tick:
            continue
        k = ev["kind"]
        d = ev["detail"]
        if k == "meet" and d["src"] == label:
            meet = d
            t1 = verdict = None
        elif k == "explore_return" and ev["dfs_id"] == label and t1 is None:
            t1 = t
            verdict = d["verdict"]
        elif k == "lock" and d.get("target") == label:
            locks.append((t, d["locker"]))
        elif k == "unlock" and d.get("target") == label:
            locks = [(t0, l0) for t0, l0 in locks if l0 != d["locker"]]
    t2, locker = (locks[0][0], locks[0][1]) if locks else (None, None)

    def recurse(w):
        # only a subsume removes w's tree; an absorbed cohort leaves the
        # tree behind as a living target
        nxt = None
        prev = None
        for ev in log:
            if ev["kind"] == "subsume" and ev["detail"].get("src") == w:
                if ev["tick"] >= at_tick:
                    nxt = ev["tick"]
                    break
                prev = ev["tick"]
        if nxt is None:
            if prev is not None and not any(
                    ev["kind"] == "settle" and ev["dfs_id"] == w
                    and ev["tick"] > prev for ev in log):
                # w's tree was already gone; the merge rode its caravan
                return determine_master(w, log, prev, _depth + 1)
            return w  # its tree lives on: w survived this episode
        # if w grew again before its own collapse, this episode closed on
        # it; a leftover robot settling at the instant of an absorption does
        # not count as growth
        absorb_ticks = {ev["tick"] for ev in log if ev["kind"] == "absorb"
                        and ev["detail"].get("src") == w}
        for ev in log:
            if ev["kind"] == "settle" and ev["dfs_id"] == w \
                    and at_tick < ev["tick"] < nxt \
                    and ev["tick"] not in absorb_ticks:
                return w
        return determine_master(w, log, nxt, _depth + 1)

    if meet is not None and verdict == "parent_bigger":
        if t2 is not None and t2 <= t1:
            return recurse(locker)
        return recurse(meet["dst"])
    if meet is not None and verdict == "parent_collapsing":
        if t2 is not None:
            return recurse(locker)
        return recurse(meet["dst"])
    if t2 is not None:
        return recurse(locker)
    return label


def oracle_agreement(log, state, initial_labels):
    """Check every merge event against the replayed master recursion.

    The survivor of each episode is the label of the meeting-tree node the
    event was folded into; the oracle must name the same component.
    """
    tree = build_meeting_tree(log, initial_labels)
    mismatches = []
    for ev in log:
        if ev["kind"] not in MERGE_KINDS:
            continue
        node = tree.episode_master.get(id(ev))
        if node is None:
            continue  # a rider event folded into an earlier dissolution
        src = ev["detail"]["src"]
        got = determine_master(src, log, at_tick=ev["tick"])
        want = node[0]
        if got != want:
            mismatches.append((ev, got, want))
    return mismatches


# ----------------------------------------------------------------------
def fit_slope(xs, ys):
    """Least-squares slope of ys over xs."""
    n = len(xs)
    if n < 2:
        return 0.0
    mx = sum(xs) / n
    my = sum(ys) / n
    num = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    den = sum((x - mx) ** 2 for x in xs)
    return num / den if den else 0.0
