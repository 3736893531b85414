"""Per-robot memory model.

Every robot carries the same field set; which fields are live depends on its
role. Field widths are what the memory auditor charges:

  port-width  ceil(log2(max_degree+2)) : parent, child, retrace, collapse
  id-width    ceil(log2(k+1))          : treelabel, rank, collapsing_children,
                                         locked_by, aux
  fixed 8 bits                         : state (2) + mode (4) + 2 flags

`aux` is role-dependent: on a settled robot hosting a junction it holds the
posted size of the tenant component; on an unsettled explorer or collapse
caravan it holds the label of the component being explored / delivered into.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

# state values (2 bits)
FORWARD = "forward"
BACKTRACK = "backtrack"
SETTLED = "settled"

# mode values (4 bits)
GROW = "grow"
EXPLORE = "explore"
EXPLORE_RETURN = "explore_return"        # homeward with a size verdict
RETURN_EVIDENCE = "return_evidence"      # homeward, target busy or dissolving
LOCK_WAIT = "lock_wait"                  # parked at the target's head
FOLLOW = "follow"                        # prey cohort tailing its claimant
WAIT_SWEPT = "wait_swept"                # parked at own junction, tree intact
ABSORBED = "absorbed"                    # parked caravan waiting to merge
COLLAPSE_TO_ROOT = "collapse_to_root"
COLLECT_SWEEP = "collect_sweep"
COLLECT_WALK = "collect_walk"
MOVE_TO_HEAD = "move_to_head"
MODE_SETTLED = "settled"
SETTLED_OPEN = "settled_open"            # settled, opened by a collect sweep

UNSETTLED_MODES = (
    GROW, EXPLORE, EXPLORE_RETURN, RETURN_EVIDENCE, LOCK_WAIT, FOLLOW,
    WAIT_SWEPT, ABSORBED, COLLAPSE_TO_ROOT, COLLECT_SWEEP, COLLECT_WALK,
    MOVE_TO_HEAD,
)


@dataclass
class RobotState:
    rid: int                      # immutable identity in [1, k]; trace-level
    state: str = FORWARD
    mode: str = GROW
    treelabel: int = 0
    rank: int = 0                 # settled: serial; unsettled: component size
    collapsing_children: int = 0
    locked_by: int | None = None
    aux: int | None = None
    parent: int | None = None     # settled: first-entry port; walker: last hop
    child: int = -1               # last port taken; -1 means none yet
    retrace: int | None = None    # explorer path mark / junction claim mark
    collapse: int | None = None   # collapse delivery-path mark
    is_collapsing: bool = False
    junction_active: bool = False

    @property
    def settled(self) -> bool:
        return self.state == SETTLED

    def snapshot(self) -> "RobotState":
        return replace(self)


def port_width(max_degree: int) -> int:
    return max(1, math.ceil(math.log2(max_degree + 2)))


def id_width(k: int) -> int:
    return max(1, math.ceil(math.log2(k + 1)))


def memory_bits(r: RobotState, k: int, max_degree: int) -> int:
    """Bits of live protocol state: null-valued fields cost nothing."""
    pw = port_width(max_degree)
    iw = id_width(k)
    bits = 8  # state + mode + flags
    for v in (r.parent, r.retrace, r.collapse):
        if v is not None:
            bits += pw
    if r.child != -1:
        bits += pw
    if r.treelabel:
        bits += iw
    if r.rank:
        bits += iw
    if r.collapsing_children:
        bits += iw
    if r.locked_by is not None:
        bits += iw
    if r.aux is not None:
        bits += iw
    return bits


def memory_budget(k: int, max_degree: int) -> int:
    """Static per-robot ceiling: 4 ports + 5 ids + 8 fixed bits."""
    return 4 * port_width(max_degree) + 5 * id_width(k) + 8
