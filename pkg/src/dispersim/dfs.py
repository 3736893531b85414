"""Single-source DFS dispersion automaton.

The cohort of unsettled robots moves as one group, leaving the highest-id
robot behind at each newly discovered free node. Every robot keeps five
variables: parent (port of first entry, on the settled robot), child (last
port taken), treelabel (component id), state (forward/backtrack/settled) and
rank (settle serial; the moving cohort uses it as its settled-count).

Port rule per round: entering through port c, the cohort leaves through
(c+1) mod degree in forward mode at a fresh node or in backtrack mode,
switching phase when the next port equals the settled robot's parent port;
entering an occupied node in forward mode bounces straight back through c.
"""

from __future__ import annotations

from .engine import Action, LocalView
from .robot import (RobotState, FORWARD, BACKTRACK, SETTLED, GROW,
                    MODE_SETTLED)


class ProtocolInvariantViolated(RuntimeError):
    pass


def settled_here(view: LocalView) -> RobotState | None:
    found = None
    for r in view.colocated:
        if r.settled:
            if found is not None:
                raise ProtocolInvariantViolated("two settled robots co-located")
            found = r
    return found


def grow_cohort(view: LocalView, label: int):
    """Unsettled robots of one component currently in grow mode, sorted by rid."""
    return [r for r in view.colocated
            if not r.settled and r.mode == GROW and r.treelabel == label]


def grow_action(view: LocalView, me: RobotState, multi: bool):
    """One Algorithm-1 round for an unsettled grow-mode robot.

    Returns an Action, or the string "meet" when the robot stands at a node
    whose settled robot belongs to a different component (only with multi=True;
    the caller owns meeting behavior).
    """
    act = Action()
    host = settled_here(view)
    entry = view.arrival_of(me.rid)
    child_now = entry if entry is not None else me.child
    deg = view.node_degree

    if me.state == FORWARD:
        if host is None:
            arrivals = sorted({r.treelabel for r in view.colocated
                               if not r.settled and r.mode == GROW
                               and r.state == FORWARD})
            winner = arrivals[-1] if arrivals else me.treelabel
            if me.treelabel != winner:
                # lost a simultaneous arrival at a free node: the highest-id
                # component settles here; this cohort meets it next round
                if not multi:
                    raise ProtocolInvariantViolated(
                        "foreign cohort in single-source run")
                act.write(me.rid, child=child_now)
                return act
            cohort = grow_cohort(view, me.treelabel)
            cohort = [r for r in cohort if r.state == FORWARD]
            settler = max(r.rid for r in cohort)
            new_rank = me.rank + 1
            if me.rid == settler:
                act.write(me.rid, state=SETTLED, mode=MODE_SETTLED,
                          rank=new_rank,
                          parent=child_now if child_now != -1 else None)
                if len(cohort) == 1:
                    act.write(me.rid, child=-1)
                act.emit("settle", rank=new_rank)
            else:
                new_child = (child_now + 1) % deg
                act.write(me.rid, rank=new_rank, child=new_child)
                act.write(settler, child=new_child)
                if new_child == child_now:  # next port is the new parent (deg 1)
                    act.write(me.rid, state=BACKTRACK)
                act.move = new_child
            return act
        if host.treelabel == me.treelabel:
            # occupied by own component: bounce back, now backtracking
            act.write(me.rid, state=BACKTRACK, child=child_now)
            act.move = child_now
            return act
        if not multi:
            raise ProtocolInvariantViolated(
                f"robot {me.rid} met foreign component {host.treelabel}")
        return "meet"

    # backtrack phase: always at a node settled by the own component
    if host is None or host.treelabel != me.treelabel:
        raise ProtocolInvariantViolated(
            f"backtrack arrival of robot {me.rid} at an unexpected node")
    new_child = (child_now + 1) % deg
    act.write(me.rid, child=new_child)
    act.write(host.rid, child=new_child)
    if host.parent is None or new_child != host.parent:
        act.write(me.rid, state=FORWARD)
    act.move = new_child
    return act


class DfsProtocol:
    """Pure single-source automaton; settled robots hold still and accept writes."""

    name = "dfs"

    def compute(self, view: LocalView, me: RobotState) -> Action:
        if me.settled:
            return Action()
        out = grow_action(view, me, multi=False)
        assert isinstance(out, Action)
        return out
