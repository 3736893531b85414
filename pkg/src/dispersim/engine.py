"""Round engine: Communicate-Compute-Move cycles over a port-labeled graph.

Each robot activation sees only a LocalView (arrival port, node degree,
co-located robot memories) and returns an Action (writes to co-located
robots plus an exit port). All views in a round are snapshots of the
start-of-round state, so intra-round compute order is unobservable. Moves
apply simultaneously; robots leaving a node through the same port in the
same round arrive together.

The asynchronous scheduler executes the same rounds piecewise: an adversary
activates subsets of robots, each robot performs its pending round-cycle at
its own activation, and the round's writes and moves commit once every robot
has acted. Robots that already acted block until the stragglers of their
round arrive, which is exactly the cohort re-synchronization rule the
asynchronous model requires. Time is charged in ticks and epochs.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace

from .graph import PortLabeledGraph
from .robot import RobotState, SETTLED, FORWARD, GROW, MODE_SETTLED


class EngineError(RuntimeError):
    pass


class TooManyRobots(EngineError):
    pass


class DuplicateRobotId(EngineError):
    pass


class EmptyPlacement(EngineError):
    pass


class WriteConflict(EngineError):
    pass


class IllegalMove(EngineError):
    pass


class CyclicWait(EngineError):
    """Watchdog: no state change for the full deadlock window before dispersion."""


class InvariantViolation(EngineError):
    pass


@dataclass(frozen=True)
class LocalView:
    """What one robot may legally observe during Communicate.

    arrivals holds the port through which each co-located robot entered the
    node this activation (None for robots that held still); every robot knows
    its own entry port and co-located robots exchange memories freely.
    """
    arrival_port: int | None
    node_degree: int
    colocated: tuple  # RobotState snapshots at this node, sorted by rid
    arrivals: dict = None

    def arrival_of(self, rid):
        return self.arrivals.get(rid) if self.arrivals else None


@dataclass
class Action:
    """Result of Compute: memory writes to co-located robots, then a move."""
    writes: list = field(default_factory=list)   # (target_rid, field, value)
    move: int | None = None
    events: list = field(default_factory=list)   # (kind, detail) stamped by engine

    def write(self, rid, **fields):
        for f, v in fields.items():
            self.writes.append((rid, f, v))

    def emit(self, kind, **detail):
        self.events.append((kind, detail))


class EventLog:
    def __init__(self):
        self.records = []

    def append(self, tick, epoch, kind, robot=None, dfs_id=None, node=None, detail=None):
        self.records.append({
            "tick": tick, "epoch": epoch, "kind": kind, "robot": robot,
            "dfs_id": dfs_id, "node": node, "detail": detail or {},
        })

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)


class SimState:
    def __init__(self, graph: PortLabeledGraph, placement):
        """placement: iterable of (node, iterable of robot ids)."""
        robots = {}
        pos = {}
        items = [(node, sorted(set(rids))) for node, rids in placement]
        if not items or all(not rids for _, rids in items):
            raise EmptyPlacement("placement holds no robots")
        for node, rids in items:
            if not (0 <= node < graph.n):
                raise EngineError(f"placement node {node} out of range")
            for rid in rids:
                if rid in robots:
                    raise DuplicateRobotId(f"robot id {rid} placed twice")
                robots[rid] = RobotState(rid=rid)
                pos[rid] = node
        k = len(robots)
        if k > graph.n:
            raise TooManyRobots(f"k={k} robots exceed n={graph.n} nodes")
        bad = [rid for rid in robots if not (1 <= rid <= k)]
        if bad:
            raise EngineError(f"robot ids must lie in [1, {k}], got {bad}")

        self.graph = graph
        self.robots = robots
        self.pos = pos
        self.arrival = {rid: None for rid in robots}
        self.k = k
        self.tick = 0
        self.rounds = 0
        self.epoch = 0
        self.log = EventLog()

        # initial protocol state per node group
        by_node = {}
        for rid, node in pos.items():
            by_node.setdefault(node, []).append(rid)
        for node, rids in by_node.items():
            if len(rids) == 1:
                # a lone robot is a settled size-1 component from the start
                r = robots[rids[0]]
                r.state = SETTLED
                r.mode = MODE_SETTLED
                r.treelabel = r.rid
                r.rank = 1
                r.parent = None
                r.child = -1
                self.log.append(0, 0, "settle", robot=r.rid, dfs_id=r.treelabel,
                                node=node, detail={"rank": 1})
            else:
                label = min(rids)
                for rid in rids:
                    r = robots[rid]
                    r.state = FORWARD
                    r.mode = GROW
                    r.treelabel = label
                    r.rank = 0
                    r.child = -1

    # ------------------------------------------------------------------
    def occupants(self, node):
        return sorted(rid for rid, p in self.pos.items() if p == node)

    def settled_map(self):
        """node -> settled robot id (asserts uniqueness)."""
        out = {}
        for rid, r in self.robots.items():
            if r.settled:
                node = self.pos[rid]
                if node in out:
                    raise InvariantViolation(
                        f"two settled robots ({out[node]}, {rid}) on node {node}")
                out[node] = rid
        return out

    def fingerprint(self):
        parts = []
        for rid in sorted(self.robots):
            r = self.robots[rid]
            parts.append((rid, self.pos[rid], r.state, r.mode, r.treelabel,
                          r.rank, r.collapsing_children, r.locked_by, r.aux,
                          r.parent, r.child, r.retrace, r.collapse,
                          r.is_collapsing, r.junction_active))
        return hash(tuple(parts))

    def dispersed(self) -> bool:
        if not all(r.settled for r in self.robots.values()):
            return False
        return len({self.pos[rid] for rid in self.robots}) == self.k


# ----------------------------------------------------------------------
def _compute_round_actions(state: SimState, protocol, snapshots, rids):
    """Run Compute for the given robots against the round snapshot."""
    by_node = {}
    for rid in state.robots:
        by_node.setdefault(state.pos[rid], []).append(rid)
    views = {}
    for node, occ in by_node.items():
        occ.sort()
        views[node] = (tuple(snapshots[r] for r in occ),
                       {r: state.arrival[r] for r in occ})
    actions = {}
    for rid in rids:
        node = state.pos[rid]
        colocated, arrivals = views[node]
        view = LocalView(
            arrival_port=state.arrival[rid],
            node_degree=state.graph.degree(node),
            colocated=colocated,
            arrivals=arrivals,
        )
        actions[rid] = protocol.compute(view, snapshots[rid])
    return actions


def _apply_round(state: SimState, actions):
    """Commit one round's writes and moves simultaneously."""
    g = state.graph
    # conflict detection: a robot's later writes supersede its earlier ones,
    # and its writes to itself outrank foreign writes (it may be rewriting
    # its whole memory while unsettling); distinct foreign writers that
    # disagree reveal a protocol bug and abort the run
    staged = {}
    writer = {}
    for rid, act in actions.items():
        for target, fieldname, value in act.writes:
            key = (target, fieldname)
            if key in staged and staged[key] != value and writer[key] != rid:
                if writer[key] == target:
                    continue  # the robot's own write stands
                if rid != target:
                    raise WriteConflict(
                        f"robots {writer[key]} and {rid} write {fieldname}="
                        f"{staged[key]!r} vs {value!r} on robot {target}")
            staged[key] = value
            writer[key] = rid
    for (target, fieldname), value in staged.items():
        setattr(state.robots[target], fieldname, value)

    # moves: simultaneous, against post-write states
    moved = {}
    for rid, act in actions.items():
        if act.move is None:
            continue
        r = state.robots[rid]
        if r.settled:
            raise IllegalMove(f"settled robot {rid} attempted to move")
        node = state.pos[rid]
        if not (0 <= act.move < g.degree(node)):
            raise IllegalMove(f"robot {rid} used port {act.move} at degree-"
                              f"{g.degree(node)} node")
        moved[rid] = g.neighbor_via_port(node, act.move)

    for rid in state.robots:
        if rid in moved:
            dest, q = moved[rid]
            src = state.pos[rid]
            state.pos[rid] = dest
            state.arrival[rid] = q
            state.log.append(state.tick + 1, state.epoch, "move", robot=rid,
                             dfs_id=state.robots[rid].treelabel, node=dest,
                             detail={"src": src, "port": actions[rid].move,
                                     "in_port": q})
        else:
            state.arrival[rid] = None

    # protocol events, stamped with the robot's post-move node
    for rid, act in actions.items():
        for kind, detail in act.events:
            state.log.append(state.tick + 1, state.epoch, kind, robot=rid,
                             dfs_id=state.robots[rid].treelabel,
                             node=state.pos[rid], detail=detail)


def step_round(state: SimState, protocol):
    """One synchronous round: every robot runs one CCM cycle."""
    snapshots = {rid: r.snapshot() for rid, r in state.robots.items()}
    actions = _compute_round_actions(state, protocol, snapshots, list(state.robots))
    _apply_round(state, actions)
    state.tick += 1
    state.rounds += 1
    state.epoch += 1
    return state


# ----------------------------------------------------------------------
class Adversary:
    """Activation policy; must activate every robot within a finite window."""

    def pick(self, tick, rids):
        raise NotImplementedError


class AllAdversary(Adversary):
    name = "all"

    def pick(self, tick, rids):
        return set(rids)


class RandomSubsetAdversary(Adversary):
    def __init__(self, p=0.5, seed=0):
        if not (0 < p <= 1):
            raise ValueError("activation probability must be in (0, 1]")
        self.p = p
        self.rng = random.Random(("adversary", p, seed).__repr__())
        self.starve = {}
        # force-activate anyone starved this long: keeps windows finite
        self.window = max(2, int(4 / p))
        self.name = f"random:{p}:{seed}"

    def pick(self, tick, rids):
        chosen = {rid for rid in rids if self.rng.random() < self.p}
        for rid in rids:
            if self.starve.get(rid, 0) >= self.window:
                chosen.add(rid)
        for rid in rids:
            self.starve[rid] = 0 if rid in chosen else self.starve.get(rid, 0) + 1
        if not chosen:
            chosen = {min(rids)}
        return chosen


class RoundRobinAdversary(Adversary):
    def __init__(self, batch=1):
        if batch < 1:
            raise ValueError("batch must be >= 1")
        self.batch = batch
        self.cursor = 0
        self.name = f"rr:{batch}"

    def pick(self, tick, rids):
        order = sorted(rids)
        chosen = set()
        for i in range(self.batch):
            chosen.add(order[(self.cursor + i) % len(order)])
        self.cursor = (self.cursor + self.batch) % len(order)
        return chosen


class AsyncRunner:
    """Piecewise execution of rounds under an adversary.

    Robots that have acted in the current round are blocked until the round
    commits (their cohort has "fully arrived"); an epoch closes at the first
    tick by which every robot has been activated since the previous close.
    """

    def __init__(self, state: SimState, protocol, adversary: Adversary):
        self.state = state
        self.protocol = protocol
        self.adversary = adversary
        self.snapshots = None
        self.staged = {}
        self.pending = set()
        self.active_since_epoch = set()

    def _open_round(self):
        self.snapshots = {rid: r.snapshot() for rid, r in self.state.robots.items()}
        self.pending = set(self.state.robots)
        self.staged = {}

    def step_tick(self):
        state = self.state
        if self.snapshots is None:
            self._open_round()
        chosen = self.adversary.pick(state.tick, sorted(state.robots))
        todo = [rid for rid in sorted(chosen) if rid in self.pending]
        if todo:
            acts = _compute_round_actions(state, self.protocol, self.snapshots, todo)
            self.staged.update(acts)
            self.pending.difference_update(todo)
        state.tick += 1
        self.active_since_epoch.update(chosen)
        if self.active_since_epoch >= set(state.robots):
            state.epoch += 1
            self.active_since_epoch = set()
        if not self.pending:
            _apply_round(state, self.staged)
            state.rounds += 1
            self.snapshots = None
        return state


# ----------------------------------------------------------------------
@dataclass
class Outcome:
    dispersed: bool
    rounds: int
    ticks: int
    epochs: int
    timed_out: bool
    state: SimState

    @property
    def log(self):
        return self.state.log


def deadlock_window(k: int, max_degree: int) -> int:
    return 8 * k * max_degree + 8 * k


def run_until(state: SimState, protocol, adversary: Adversary | None = None,
              max_ticks: int = 1_000_000, check_invariants: bool = True,
              watchdog: bool = True) -> Outcome:
    """Run to dispersion or the tick budget; raises CyclicWait on stall."""
    if max_ticks < 1:
        raise ValueError("max_ticks must be >= 1")
    from . import analysis  # local import: analysis is observer-level

    sync = adversary is None or isinstance(adversary, AllAdversary)
    runner = None if sync else AsyncRunner(state, protocol, adversary)
    window = deadlock_window(state.k, state.graph.max_degree)
    last_change = state.tick
    last_fp = state.fingerprint()

    def finish(timed_out):
        if state.dispersed() and not timed_out:
            state.log.append(state.tick, state.epoch, "disperse_done",
                             detail={"rounds": state.rounds})
        return Outcome(state.dispersed(), state.rounds, state.tick,
                       state.epoch, timed_out, state)

    if state.dispersed():
        return finish(False)

    while state.tick < max_ticks:
        if sync:
            step_round(state, protocol)
        else:
            runner.step_tick()
        if check_invariants and (sync or runner.snapshots is None):
            analysis.round_invariants(state)
        fp = state.fingerprint()
        if fp != last_fp:
            last_fp = fp
            last_change = state.tick
        elif watchdog and state.tick - last_change > window and not state.dispersed():
            raise CyclicWait(
                f"no state change for {state.tick - last_change} ticks "
                f"(window {window}) before dispersion")
        if state.dispersed():
            return finish(False)
    return finish(True)


def make_adversary(spec: str | None) -> Adversary | None:
    """Parse 'all', 'random:p:seed', 'rr:batch'."""
    if spec is None or spec == "all" or spec == "sync":
        return None
    parts = spec.split(":")
    if parts[0] == "random":
        p = float(parts[1]) if len(parts) > 1 else 0.5
        seed = int(parts[2]) if len(parts) > 2 else 0
        return RandomSubsetAdversary(p, seed)
    if parts[0] == "rr":
        return RoundRobinAdversary(int(parts[1]) if len(parts) > 1 else 1)
    raise ValueError(f"unknown adversary spec {spec!r}")
