"""Multi-source dispersion: parallel DFS growth with size-based subsumption.

Components grow by the single-source DFS rules until a cohort steps onto a
node settled by another component. The arrival node becomes the cohort's
junction: the cohort claims it (tenant label + claim mark on the settled
robot) and walks the met component by following each settled robot's
last-exit pointer, which self-routes to that component's head. The walk
compares every settled rank against the walker's own size and aborts as soon
as a larger rank proves the met component bigger. Retrace marks dropped along
the walk guide the way home; a walker that runs into someone else's live mark
retreats and retries later, so every mark chain has a single owner.

Size order is total: (settled count, component id), larger id winning ties.
The smaller side always collapses. Collapsing parent-ward: the loser flags
its tree, marks the ancestor path of its junction with delivery pointers,
sweeps the tree with a port-probing DFS that unsettles robots as it
backtracks off them, hauls everyone along the marked path, rewrites their
component id and walks the winner's last-exit trail to its head. Collapsing
child-ward: the winner's explorers park at the loser's head; the loser walks
home with them, then runs the same flag/mark/sweep/deliver machinery over its
own tree with the winner's junction as the delivery target. Junction latches
(collapsing_children) and live retrace marks stall sweeps so in-flight
caravans and explorers are never stranded.
"""

from __future__ import annotations

from dataclasses import dataclass

from .engine import Action, LocalView
from .robot import (
    RobotState, FORWARD, BACKTRACK, SETTLED, GROW, EXPLORE,
    EXPLORE_RETURN, RETURN_EVIDENCE, LOCK_WAIT, WAIT_SWEPT, ABSORBED,
    COLLAPSE_TO_ROOT, FOLLOW, COLLECT_SWEEP, COLLECT_WALK, MOVE_TO_HEAD,
    MODE_SETTLED, SETTLED_OPEN,
)
from .dfs import ProtocolInvariantViolated, settled_here, grow_action


class RetraceSlotsExhausted(RuntimeError):
    """Never raised in normal flow: a walker that cannot place its retrace
    mark retreats home and retries instead of overwriting or waiting."""


RETURN_MODES = (EXPLORE_RETURN, RETURN_EVIDENCE)
# modes that promise the component's tree is being (or will be) swept
DOOMED_MODES = (COLLAPSE_TO_ROOT, COLLECT_SWEEP, COLLECT_WALK, FOLLOW)
# modes in which a cohort neither grows nor responds to claims
LIMBO_MODES = (WAIT_SWEPT, ABSORBED)
CARAVAN_MODES = (COLLAPSE_TO_ROOT, COLLECT_SWEEP, COLLECT_WALK)


def size_compare(d_i, d_j, id_i, id_j):
    """Total order over components: by settled count, component id breaks ties."""
    if id_i == id_j:
        raise ValueError("size_compare needs distinct component ids")
    return "greater" if (d_i, id_i) > (d_j, id_j) else "less"


def bigger(d_a, id_a, d_b, id_b) -> bool:
    return (d_a, id_a) > (d_b, id_b)


def groups_by(view: LocalView):
    out = {}
    for r in view.colocated:
        if not r.settled:
            out.setdefault((r.treelabel, r.mode), []).append(r)
    return out


def outranked_rival(view: LocalView, me: RobotState) -> bool:
    """A bigger co-located explorer cohort targeting the same component."""
    for r in view.colocated:
        if r.settled or r.treelabel == me.treelabel:
            continue
        if r.mode in (EXPLORE, LOCK_WAIT) and r.aux == me.aux \
                and (r.rank, r.treelabel) > (me.rank, me.treelabel):
            return True
    return False


def is_lead(view: LocalView, me: RobotState) -> bool:
    rids = [r.rid for r in view.colocated
            if not r.settled and r.treelabel == me.treelabel and r.mode == me.mode]
    return me.rid == min(rids)


def host_flagged(host: RobotState) -> bool:
    return host.is_collapsing or host.mode == SETTLED_OPEN


@dataclass
class Decision:
    kind: str
    port: int | None = None


# ----------------------------------------------------------------------
# shared caravan decisions (computed identically by caravan members,
# collected robots, escorts and parked watchers)

def sweep_decision(view: LocalView, m: RobotState) -> Decision:
    """Port-probing tree DFS; m.parent doubles as a mid-probe marker so a
    probe into a node is never mistaken for that node's own scan."""
    host = settled_here(view)
    arrival = view.arrival_of(m.rid)
    own = host is not None and host.treelabel == m.treelabel
    if m.parent is not None:
        # arriving on a probe: enter a fresh child of this tree, else bounce
        if own and host.mode == MODE_SETTLED and arrival is not None \
                and host.parent == arrival:
            return Decision("descend")
        if arrival is None:
            raise ProtocolInvariantViolated("sweep probe lost its way back")
        return Decision("bounce", port=arrival)
    if own and host.mode == SETTLED_OPEN:
        deg = view.node_degree
        nxt = host.child + 1
        while nxt < deg and host.parent is not None and nxt == host.parent:
            nxt += 1
        if nxt >= deg:
            if host.parent is None:
                return Decision("done")
            if host.collapse is not None:
                return Decision("ascend", port=host.parent)
            if (host.retrace is not None and not host.junction_active) \
                    or host.collapsing_children > 0:
                return Decision("stay")
            return Decision("collect-up", port=host.parent)
        return Decision("probe", port=nxt)
    raise ProtocolInvariantViolated("sweep lost its position")


def walk_decision(view: LocalView, m: RobotState) -> Decision:
    host = settled_here(view)
    if m.state == FORWARD and host is not None and host.junction_active \
            and host.aux == m.treelabel:
        return Decision("terminal")  # back at the own junction
    if host is not None and host.collapse is not None:
        if host.collapsing_children > 0 or \
                (host.retrace is not None and not host.junction_active):
            return Decision("stay")
        return Decision("collect-hop", port=host.collapse)
    if m.state == BACKTRACK:
        if host is not None and host.treelabel == m.treelabel:
            return Decision("terminal-collect")
        return Decision("terminal")
    if host is None:
        raise ProtocolInvariantViolated("parent-ward delivery lost its junction")
    return Decision("terminal")


def collection_this_round(view: LocalView):
    """If the settled robot here is unsettled-and-taken this round, return
    (collector member snapshot, Decision)."""
    host = settled_here(view)
    if host is None:
        return None
    for (label, mode), members in groups_by(view).items():
        m = members[0]
        if mode == COLLECT_SWEEP and label == host.treelabel:
            d = sweep_decision(view, m)
            if d.kind == "collect-up":
                return m, d
        elif mode == COLLECT_WALK and label == host.treelabel:
            d = walk_decision(view, m)
            if d.kind in ("collect-hop", "terminal-collect"):
                return m, d
    return None


# ----------------------------------------------------------------------
class DisperseProtocol:
    name = "disperse"

    def compute(self, view: LocalView, me: RobotState) -> Action:
        if me.settled:
            return self._settled(view, me)
        step = {
            GROW: self._grow,
            EXPLORE: self._explore,
            EXPLORE_RETURN: self._return,
            RETURN_EVIDENCE: self._return,
            LOCK_WAIT: self._lock_wait,
            FOLLOW: self._follow,
            WAIT_SWEPT: self._wait_swept,
            ABSORBED: self._absorbed,
            COLLAPSE_TO_ROOT: self._collapse_to_root,
            COLLECT_SWEEP: self._collect_sweep,
            COLLECT_WALK: self._collect_walk,
            MOVE_TO_HEAD: self._move_to_head,
        }[me.mode]
        return step(view, me)

    # -- helpers -------------------------------------------------------
    def _post_state(self, m: RobotState, act: Action) -> dict:
        fields = {f: getattr(m, f) for f in (
            "state", "mode", "treelabel", "rank", "collapsing_children",
            "locked_by", "aux", "parent", "child", "retrace", "collapse",
            "is_collapsing", "junction_active")}
        for rid, f, v in act.writes:
            if rid == m.rid and f in fields:
                fields[f] = v
        return fields

    def _adopt(self, view: LocalView, me: RobotState, target: RobotState,
               emit_absorb=False) -> Action:
        """Mirror another robot's post-round state and move (join its group)."""
        t_act = self.compute(view, target)
        fields = self._post_state(target, t_act)
        act = Action(move=t_act.move)
        act.write(me.rid, **fields)
        if emit_absorb and is_lead(view, me):
            dest = target.aux if target.mode in CARAVAN_MODES else \
                fields["treelabel"]
            if dest != me.treelabel:
                act.emit("absorb", src=me.treelabel, into=dest,
                         via=target.treelabel)
        return act

    def _claimant(self, view: LocalView, me: RobotState):
        """A parked lock-wait cohort targeting my component and outranking it."""
        best = None
        for (label, mode), members in groups_by(view).items():
            if mode != LOCK_WAIT or label == me.treelabel:
                continue
            m = members[0]
            if m.aux == me.treelabel and bigger(m.rank, label, me.rank,
                                                me.treelabel):
                if best is None or (m.rank, label) > (best.rank, best.treelabel):
                    best = m
        return best

    # -- settled -------------------------------------------------------
    def _settled(self, view: LocalView, me: RobotState) -> Action:
        col = collection_this_round(view)
        if col is not None:
            return self._adopt(view, me, col[0])
        return Action()

    # -- grow ----------------------------------------------------------
    def _grow(self, view: LocalView, me: RobotState) -> Action:
        host = settled_here(view)
        entry = view.arrival_of(me.rid)
        child_now = entry if entry is not None else me.child
        stalled = host is not None and host.treelabel != me.treelabel \
            and me.state == FORWARD
        if stalled:
            claimant = self._claimant(view, me)
            if claimant is not None:
                # a larger component's explorers caught this stalled cohort
                act = Action()
                act.write(me.rid, child=child_now)
                return self._honor_claim(view, me, act, claimant)
        out = grow_action(view, me, multi=True)
        if out != "meet":
            return out
        return self._meet(view, me, host, child_now)

    def _meet(self, view: LocalView, me: RobotState, host: RobotState,
              child_now: int) -> Action:
        act = Action()
        act.write(me.rid, child=child_now)
        if host_flagged(host) or host.locked_by is not None \
                or host.junction_active or host.retrace is not None:
            return act  # busy or dissolving target: hold position
        # claim race among co-located would-be tenants
        rivals = [label for (label, mode), ms in groups_by(view).items()
                  if mode == GROW and label != host.treelabel
                  and any(r.state == FORWARD for r in ms)]
        if me.treelabel != max(rivals):
            return act
        act.write(host.rid, junction_active=True, retrace=child_now,
                  aux=me.treelabel)
        act.write(me.rid, mode=EXPLORE, state=FORWARD, aux=host.treelabel,
                  parent=None)
        if is_lead(view, me):
            act.emit("meet", src=me.treelabel, dst=host.treelabel,
                     d_src=me.rank, host_rank=host.rank)
        return act

    def _honor_claim(self, view, me, act, claimant) -> Action:
        """Collapse into the child whose explorers claimed this component."""
        if is_lead(view, me):
            act.emit("lock", locker=claimant.treelabel, target=me.treelabel,
                     d_locker=claimant.rank, d_target=me.rank, honored=True)
            act.emit("collapse_start", flavor="child", into=claimant.treelabel,
                     d_from=me.rank, d_to=claimant.rank)
            act.emit("subsume", src=me.treelabel, dst=claimant.treelabel,
                     d_src=me.rank, d_dst=claimant.rank)
        c_act = self.compute(view, claimant)
        act.write(me.rid, mode=FOLLOW, aux=claimant.treelabel, parent=None)
        act.move = c_act.move
        return act

    # -- explore (single-leg walk along last-exit pointers) -------------
    def _explore(self, view: LocalView, me: RobotState) -> Action:
        act = Action()
        arrived = view.arrival_of(me.rid)
        if arrived is not None:
            act.write(me.rid, parent=arrived)
        last_hop = arrived if arrived is not None else me.parent
        at_home = last_hop is None

        def retreat(mode_to, hard=False):
            act.write(me.rid, mode=mode_to,
                      state=BACKTRACK if hard else FORWARD)
            if not at_home:
                act.move = last_hop
            return act

        host = settled_here(view)

        # the explored component's own cohort, co-located: sizes are readable
        prey = None
        for (label, mode), members in groups_by(view).items():
            if label == me.aux:
                prey = (mode, members[0])
                break
        if prey is not None:
            mode_p, m_p = prey
            if mode_p in DOOMED_MODES:
                return retreat(RETURN_EVIDENCE, hard=True)
            if mode_p in RETURN_MODES or mode_p == MOVE_TO_HEAD:
                return act  # in transit; catch it once it lands
            if not bigger(me.rank, me.treelabel, m_p.rank, m_p.treelabel):
                return retreat(EXPLORE_RETURN)
            stalled = (mode_p in (LOCK_WAIT,) + LIMBO_MODES
                       or (mode_p == GROW and host is not None
                           and host.treelabel != me.aux)
                       or (mode_p == EXPLORE and host is not None
                           and host.junction_active and host.aux == me.aux))
            if stalled:
                act.write(me.rid, mode=LOCK_WAIT)
                if host is not None and host.locked_by is None \
                        and not outranked_rival(view, me):
                    act.write(host.rid, locked_by=me.treelabel)
                return act
            return act  # moving target: wait for it to stall or move on

        if host is None:
            return retreat(RETURN_EVIDENCE)

        if host.junction_active:
            tenant = host.aux
            if tenant == me.treelabel:
                # my own junction: claim round, or the walk passing through it
                if not at_home:
                    if host.child == -1:
                        return retreat(RETURN_EVIDENCE)
                    act.move = host.child
                    return act
                # fall through to the on-tree walk below (claim round)
            elif tenant == me.aux:
                # the explored component's own junction: its head, tenant away
                if me.treelabel > tenant:
                    act.write(me.rid, mode=LOCK_WAIT)
                    if host.locked_by is None \
                            and not outranked_rival(view, me):
                        act.write(host.rid, locked_by=me.treelabel)
                        if is_lead(view, me):
                            act.emit("lock", locker=me.treelabel,
                                     target=me.aux, d_locker=me.rank)
                    return act
                return retreat(RETURN_EVIDENCE)
            else:
                # some rival explorer's junction sits on my path: retry later
                return retreat(RETURN_EVIDENCE)

        if host.treelabel != me.aux:
            return retreat(RETURN_EVIDENCE)
        if host_flagged(host):
            return retreat(RETURN_EVIDENCE, hard=True)
        if host.rank > me.rank:
            return retreat(EXPLORE_RETURN)
        if host.child == -1:
            # reached an exhausted head: its rank is the full component size
            if not bigger(me.rank, me.treelabel, host.rank, host.treelabel):
                return retreat(EXPLORE_RETURN)
            if host.locked_by is not None:
                return retreat(RETURN_EVIDENCE, hard=True)
            if outranked_rival(view, me):
                return retreat(RETURN_EVIDENCE)
            # claim the headless tree; commit the collapse from home
            # (at my own junction the tenancy already bars rival conquerors)
            if not at_home:
                act.write(host.rid, locked_by=me.treelabel)
            if is_lead(view, me):
                act.emit("lock", locker=me.treelabel, target=me.aux,
                         d_locker=me.rank, d_target=host.rank)
            return retreat(EXPLORE_RETURN, hard=True)
        if not at_home:
            if host.retrace is not None:
                return retreat(RETURN_EVIDENCE)  # someone's live mark
            act.write(host.rid, retrace=last_hop)
        act.move = host.child
        return act

    # -- homeward ------------------------------------------------------
    def _return(self, view: LocalView, me: RobotState) -> Action:
        act = Action()
        host = settled_here(view)
        if host is None:
            # home junction freed: resume growing from it
            act.write(me.rid, mode=GROW, state=FORWARD, aux=None, parent=None)
            return act
        if host.junction_active and host.aux == me.treelabel:
            return self._verdict(view, me, host, act)
        if host.retrace is not None:
            act.write(host.rid, retrace=None)
            act.move = host.retrace
            return act
        # the home junction was collected and resettled under us: meet afresh
        act.write(me.rid, mode=GROW, state=FORWARD, aux=None, parent=None)
        return act

    def _verdict(self, view: LocalView, me: RobotState, host: RobotState,
                 act: Action) -> Action:
        cic_intent = me.mode == EXPLORE_RETURN and me.state == BACKTRACK
        if is_lead(view, me):
            if me.mode == EXPLORE_RETURN:
                verdict = "parent_smaller" if cic_intent else "parent_bigger"
            else:
                verdict = "parent_collapsing"
            act.emit("explore_return", verdict=verdict)
        if cic_intent:
            followers = [ms[0] for (lab, mode), ms in groups_by(view).items()
                         if mode == FOLLOW and lab == me.aux
                         and ms[0].aux == me.treelabel]
            if followers:
                # escorted conquest: the claimed cohort collapses its own
                # tree onto this junction; I anchor the delivery here
                # (the merge was logged when the claim was honored)
                act.write(host.rid, junction_active=False, retrace=None,
                          aux=None, locked_by=None)
                act.write(me.rid, mode=LOCK_WAIT, state=FORWARD)
                return act
            # conquest of a headless tree: adopt its label and collect it
            if is_lead(view, me):
                act.emit("collapse_start", flavor="child", into=me.treelabel,
                         d_from=None, d_to=me.rank)
                act.emit("subsume", src=me.aux, dst=me.treelabel, d_src=None,
                         d_dst=me.rank)
            act.write(host.rid, junction_active=False, retrace=None, aux=None)
            act.write(me.rid, mode=COLLAPSE_TO_ROOT, state=BACKTRACK,
                      treelabel=me.aux, aux=me.treelabel, parent=None)
            act.move = host.parent
            if host.parent is None:
                # my junction host is the explored component's root
                act.write(host.rid, mode=SETTLED_OPEN, child=-1,
                          is_collapsing=True)
                act.write(me.rid, mode=COLLECT_SWEEP)
                act.move = None
            return act
        claimant = self._claimant(view, me)
        if claimant is not None:
            act.write(host.rid, junction_active=False, retrace=None, aux=None,
                      locked_by=None)
            return self._honor_claim(view, me, act, claimant)
        if me.mode == EXPLORE_RETURN:
            # the explored component is larger: collapse into it
            if is_lead(view, me):
                act.emit("collapse_start", flavor="parent", into=me.aux,
                         d_from=me.rank)
                act.emit("subsume", src=me.treelabel, dst=me.aux,
                         d_src=me.rank, d_dst=None)
                act.write(host.rid,
                          collapsing_children=host.collapsing_children + 1)
            act.write(me.rid, mode=COLLAPSE_TO_ROOT, state=FORWARD,
                      parent=None)
            act.move = me.child if me.child != -1 else None
            return act
        hard = me.state == BACKTRACK
        if hard or host_flagged(host):
            act.write(host.rid, junction_active=False, retrace=None, aux=None)
            act.write(me.rid, mode=WAIT_SWEPT, state=FORWARD, parent=None)
            return act
        # soft evidence and a healthy junction: look again
        act.write(me.rid, mode=EXPLORE, state=FORWARD, parent=None)
        return act

    # -- parked / attached states ---------------------------------------
    def _lock_wait(self, view: LocalView, me: RobotState) -> Action:
        host = settled_here(view)
        # a larger component's explorers may claim me while I claim another
        claimant = self._claimant(view, me)
        if claimant is not None:
            act = Action()
            if host is not None and host.locked_by == me.treelabel:
                act.write(host.rid, locked_by=None)
                if is_lead(view, me):
                    act.emit("unlock", locker=me.treelabel, target=me.aux)
            return self._honor_claim(view, me, act, claimant)
        # escort a caravan delivering to me: move with it, never join it
        for (label, mode), members in groups_by(view).items():
            if mode in CARAVAN_MODES and members[0].aux == me.treelabel:
                t_act = self.compute(view, members[0])
                post = self._post_state(members[0], t_act)
                act = Action(move=t_act.move)
                if post["mode"] == GROW:
                    act.write(me.rid, mode=GROW, state=FORWARD, aux=None,
                              parent=None)
                return act
        # the claimed component's cohort, present
        for (label, mode), members in groups_by(view).items():
            if label != me.aux or mode == MODE_SETTLED:
                continue
            m = members[0]
            if mode == FOLLOW and m.aux == me.treelabel:
                return self._escort_home(view, me)
            if mode in DOOMED_MODES:
                # committed to a different collapse: my claim is moot
                act = Action()
                if host is not None and host.locked_by == me.treelabel:
                    act.write(host.rid, locked_by=None)
                    if is_lead(view, me):
                        act.emit("unlock", locker=me.treelabel, target=me.aux)
                act.write(me.rid, mode=RETURN_EVIDENCE, state=BACKTRACK)
                if me.parent is not None:
                    act.move = me.parent
                return act
            if mode in RETURN_MODES or mode in LIMBO_MODES:
                return Action()  # it resolves at its junction, or I outlast it
            if not bigger(me.rank, me.treelabel, m.rank, m.treelabel):
                # outgrown: withdraw
                act = Action()
                if host is not None and host.locked_by == me.treelabel:
                    act.write(host.rid, locked_by=None)
                    if is_lead(view, me):
                        act.emit("unlock", locker=me.treelabel, target=me.aux)
                act.write(me.rid, mode=RETURN_EVIDENCE, state=FORWARD)
                if me.parent is not None:
                    act.move = me.parent
                return act
            honors_now = (mode == LOCK_WAIT
                          or (mode == GROW and host is not None
                              and host.treelabel != label))
            if honors_now:
                return self._escort_home(view, me)
            return Action()  # hold the claim until it stalls or leaves
        act = Action()
        if host is None:
            return act  # junction host gone; the tenant returns and resettles
        if not host.junction_active:
            if host.locked_by == me.treelabel:
                act.write(host.rid, locked_by=None)
                if is_lead(view, me):
                    act.emit("unlock", locker=me.treelabel, target=me.aux)
            if host.treelabel == me.aux and not host_flagged(host):
                act.write(me.rid, mode=EXPLORE)  # target moved on: chase
                return act
            act.write(me.rid, mode=RETURN_EVIDENCE,
                      state=BACKTRACK if host_flagged(host) else FORWARD)
            if me.parent is not None:
                act.move = me.parent
            return act
        return act

    def _escort_home(self, view: LocalView, me: RobotState) -> Action:
        """Lead the claimed cohort back to my junction, the delivery target."""
        act = Action()
        act.write(me.rid, mode=EXPLORE_RETURN, state=BACKTRACK)
        if me.parent is not None:
            act.move = me.parent
        return act

    def _follow(self, view: LocalView, me: RobotState) -> Action:
        for (label, mode), members in groups_by(view).items():
            if label == me.aux and (mode in RETURN_MODES or mode == LOCK_WAIT):
                leader = members[0]
                l_act = self.compute(view, leader)
                post = self._post_state(leader, l_act)
                if mode in RETURN_MODES and post["mode"] == LOCK_WAIT:
                    # the leader reached its junction: collapse my tree there
                    act = Action()
                    act.write(me.rid, mode=COLLAPSE_TO_ROOT, state=BACKTRACK,
                              aux=leader.treelabel, parent=None)
                    return act
                return Action(move=l_act.move)
            if mode in CARAVAN_MODES and label == me.treelabel:
                return self._adopt(view, me, members[0])
        raise ProtocolInvariantViolated(
            f"following robot {me.rid} lost its leader")

    def _wait_swept(self, view: LocalView, me: RobotState) -> Action:
        host = settled_here(view)
        act = Action()
        if host is None:
            act.write(me.rid, mode=GROW, state=FORWARD, aux=None, parent=None)
            return act
        col = collection_this_round(view)
        if col is None:
            return act
        collector, dec = col
        cohort = [r for r in view.colocated if not r.settled
                  and r.treelabel == me.treelabel and r.mode == WAIT_SWEPT]
        settler = max(r.rid for r in cohort)
        if me.rid == settler:
            act.write(me.rid, state=SETTLED, mode=MODE_SETTLED,
                      rank=me.rank + 1,
                      parent=me.child if me.child != -1 else None,
                      child=-1, aux=None)
            act.emit("settle", rank=me.rank + 1)
            return act
        return self._adopt(view, me, collector, emit_absorb=True)

    def _absorbed(self, view: LocalView, me: RobotState) -> Action:
        col = collection_this_round(view)
        if col is not None:
            return self._adopt(view, me, col[0], emit_absorb=True)
        host = settled_here(view)
        if host is None:
            raise ProtocolInvariantViolated(
                f"absorbed group of robot {me.rid} lost its collector")
        return Action()

    # -- collapse machinery --------------------------------------------
    def _collapse_to_root(self, view: LocalView, me: RobotState) -> Action:
        act = Action()
        host = settled_here(view)
        if host is None or host.treelabel != me.treelabel:
            hop_back = view.arrival_of(me.rid)
            if hop_back is None:
                hop_back = me.parent
            if me.state == FORWARD and hop_back is not None:
                # my tree was dismantled while I was away: deliver myself
                act.write(me.rid, mode=COLLECT_WALK)
                act.move = hop_back
                return act
            raise ProtocolInvariantViolated("collapse walk left its own tree")
        # another caravan already dismantles this tree: yield and ride along
        rival = None
        for (label, mode), members in groups_by(view).items():
            if mode in CARAVAN_MODES and (label, members[0].aux) != \
                    (me.treelabel, me.aux):
                if label == me.treelabel or members[0].aux == me.treelabel:
                    rival = members[0]
        if rival is not None and (rival.treelabel, rival.aux or 0,
                                  rival.rank) > (me.treelabel, me.aux or 0,
                                                 me.rank):
            act.write(me.rid, mode=ABSORBED, parent=None)
            return act
        if host.mode == SETTLED_OPEN and rival is None:
            col = collection_this_round(view)
            if col is not None:
                return self._adopt(view, me, col[0], emit_absorb=True)
            act.write(me.rid, mode=ABSORBED, parent=None)
            return act
        arrival = view.arrival_of(me.rid)
        if arrival is not None:
            act.write(me.rid, parent=arrival)
        back = arrival if arrival is not None else me.parent
        if host.collapse is None:
            if host.retrace is not None and not host.junction_active:
                # live mark of a fleeing explorer: flag and wait it out
                act.write(host.rid, is_collapsing=True)
                return act
            act.write(host.rid, collapse=back, is_collapsing=True)
        else:
            act.write(host.rid, is_collapsing=True)
        if host.parent is None:
            act.write(host.rid, mode=SETTLED_OPEN, child=-1)
            act.write(me.rid, mode=COLLECT_SWEEP, parent=None)
            return act
        act.move = host.parent
        return act

    def _collect_sweep(self, view: LocalView, me: RobotState) -> Action:
        act = Action()
        host = settled_here(view)
        dec = sweep_decision(view, me)
        if dec.kind == "descend":
            act.write(host.rid, mode=SETTLED_OPEN, child=-1,
                      is_collapsing=True)
            act.write(me.rid, parent=None)
            return act
        if dec.kind == "probe":
            act.write(host.rid, child=dec.port)
            act.write(me.rid, parent=dec.port)
            act.move = dec.port
            return act
        if dec.kind in ("bounce", "ascend", "collect-up"):
            act.write(me.rid, parent=None)
            act.move = dec.port
            return act
        if dec.kind == "done":
            act.write(me.rid, mode=COLLECT_WALK, parent=None)
            return act
        return act  # stay

    def _collect_walk(self, view: LocalView, me: RobotState) -> Action:
        act = Action()
        host = settled_here(view)
        dec = walk_decision(view, me)
        if dec.kind == "stay":
            return act
        if dec.kind == "collect-hop":
            act.move = dec.port
            return act
        if me.state == BACKTRACK:
            # child-ward terminal: the delivery reached the winner's junction
            escort = None
            for (label, mode), members in groups_by(view).items():
                if mode == LOCK_WAIT and members[0].aux == me.treelabel:
                    escort = members[0]
                    break
            if escort is not None:
                new_label, new_rank, new_child = (escort.treelabel,
                                                  escort.rank, escort.child)
            else:
                new_label, new_rank, new_child = me.aux, me.rank, me.child
            act.write(me.rid, treelabel=new_label, rank=new_rank,
                      child=new_child, aux=None, parent=None, mode=GROW,
                      state=FORWARD)
            return act
        # parent-ward terminal at the own junction
        if host is None:
            raise ProtocolInvariantViolated("junction host vanished under latch")
        if is_lead(view, me):
            act.write(host.rid,
                      collapsing_children=max(0, host.collapsing_children - 1),
                      junction_active=False, retrace=None, aux=None,
                      locked_by=None)
        new_mode = ABSORBED if host_flagged(host) else MOVE_TO_HEAD
        act.write(me.rid, treelabel=me.aux, rank=0, aux=me.aux, parent=None,
                  mode=new_mode, state=FORWARD)
        return act

    # -- delivery into the surviving component --------------------------
    def _move_to_head(self, view: LocalView, me: RobotState) -> Action:
        act = Action()
        for (label, mode), members in groups_by(view).items():
            if label == me.treelabel and mode != MOVE_TO_HEAD:
                return self._adopt(view, me, members[0])
        host = settled_here(view)
        if host is None or host.treelabel != me.treelabel:
            return act  # junction of the surviving component: wait for it
        if host_flagged(host):
            col = collection_this_round(view)
            if col is not None:
                return self._adopt(view, me, col[0])
            return act
        if host.child == -1:
            if host.locked_by is not None:
                return act  # claimed by a conqueror: wait and join its sweep
            # exhausted head: continue this component's traversal in place
            act.write(me.rid, mode=GROW, state=BACKTRACK, rank=host.rank,
                      child=host.parent if host.parent is not None else -1,
                      aux=None, parent=None)
            return act
        act.move = host.child
        return act
