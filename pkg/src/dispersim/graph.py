"""Anonymous port-labeled graphs: construction, generation, validation, text I/O.

A graph here is undirected, connected, simple, and anonymous: nodes carry no
usable identity for the protocols (node indices exist only for the simulator
and traces), and each node labels its incident edges with local ports
0..degree-1. The two endpoints of an edge carry independent port labels.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field


class GraphError(ValueError):
    pass


class SelfLoop(GraphError):
    pass


class DuplicateEdge(GraphError):
    pass


class AsymmetricEdge(GraphError):
    pass


class PortGap(GraphError):
    pass


class Disconnected(GraphError):
    pass


class PortOutOfRange(GraphError):
    pass


class InfeasibleParams(GraphError):
    pass


FAMILIES = ("ring", "path", "complete", "grid", "random_tree", "random_connected")


@dataclass(frozen=True)
class PortLabeledGraph:
    """Immutable port-labeled graph.

    adjacency[u][p] == (v, q) means port p of node u leads to node v and the
    robot enters v through v's port q. Symmetry: adjacency[v][q] == (u, p).
    """

    node_count: int
    adjacency: tuple  # tuple of tuples of (node, port)
    edge_count: int = field(init=False)
    max_degree: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "edge_count",
                           sum(len(a) for a in self.adjacency) // 2)
        object.__setattr__(self, "max_degree",
                           max((len(a) for a in self.adjacency), default=0))

    @property
    def n(self) -> int:
        return self.node_count

    @property
    def m(self) -> int:
        return self.edge_count

    def degree(self, u: int) -> int:
        return len(self.adjacency[u])

    def neighbor_via_port(self, u: int, p: int):
        """Follow port p out of u; returns (v, arrival_port)."""
        if p < 0 or p >= len(self.adjacency[u]):
            raise PortOutOfRange(f"node {u} has degree {len(self.adjacency[u])}, port {p} invalid")
        return self.adjacency[u][p]

    def edges(self):
        """Canonical edge list: (u, p_u, v, p_v) with u < v, sorted."""
        out = []
        for u, adj in enumerate(self.adjacency):
            for p, (v, q) in enumerate(adj):
                if u < v:
                    out.append((u, p, v, q))
        out.sort()
        return out


def build_graph(edges, node_count=None) -> PortLabeledGraph:
    """Build and fully validate a graph from (u, p_u, v, p_v) tuples.

    Rejects self-loops, parallel edges, asymmetric/duplicated port use,
    non-contiguous ports, and disconnected graphs.
    """
    if node_count is None:
        node_count = 0
        for u, pu, v, pv in edges:
            node_count = max(node_count, u + 1, v + 1)
    if node_count < 1:
        raise GraphError("graph needs at least one node")

    ports = [dict() for _ in range(node_count)]
    seen_pairs = set()
    for u, pu, v, pv in edges:
        if not (0 <= u < node_count and 0 <= v < node_count):
            raise GraphError(f"node index out of range in edge ({u},{pu},{v},{pv})")
        if pu < 0 or pv < 0:
            raise PortOutOfRange(f"negative port in edge ({u},{pu},{v},{pv})")
        if u == v:
            raise SelfLoop(f"self-loop at node {u}")
        if (u, v) in seen_pairs or (v, u) in seen_pairs:
            raise DuplicateEdge(f"parallel edge between {u} and {v}")
        seen_pairs.add((u, v))
        if pu in ports[u]:
            raise DuplicateEdge(f"port {pu} of node {u} used twice")
        if pv in ports[v]:
            raise DuplicateEdge(f"port {pv} of node {v} used twice")
        ports[u][pu] = (v, pv)
        ports[v][pv] = (u, pu)

    adjacency = []
    for u in range(node_count):
        deg = len(ports[u])
        if sorted(ports[u]) != list(range(deg)):
            raise PortGap(f"ports at node {u} are {sorted(ports[u])}, expected 0..{deg - 1}")
        adjacency.append(tuple(ports[u][p] for p in range(deg)))

    g = PortLabeledGraph(node_count, tuple(adjacency))
    _check_symmetry(g)
    _check_connected(g)
    return g


def _check_symmetry(g: PortLabeledGraph):
    for u in range(g.n):
        for p, (v, q) in enumerate(g.adjacency[u]):
            if g.adjacency[v][q] != (u, p):
                raise AsymmetricEdge(f"adjacency[{u}][{p}]=({v},{q}) but adjacency[{v}][{q}]={g.adjacency[v][q]}")


def _check_connected(g: PortLabeledGraph):
    if g.n == 0:
        raise Disconnected("empty graph")
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v, _ in g.adjacency[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    if len(seen) != g.n:
        raise Disconnected(f"only {len(seen)} of {g.n} nodes reachable from node 0")


def _assign_ports(node_count, pairs, rng) -> PortLabeledGraph:
    """Turn an undirected edge list into a graph with per-node shuffled ports.

    Ports are shuffled per node so endpoint labels are uncorrelated; the
    shuffle is a pure function of the RNG state, hence of the seed.
    """
    incident = [[] for _ in range(node_count)]
    for u, v in pairs:
        incident[u].append(v)
        incident[v].append(u)
    order = []
    for u in range(node_count):
        idx = list(range(len(incident[u])))
        rng.shuffle(idx)
        order.append(idx)
    # port of u toward v: position of that incidence in u's shuffled order
    port_of = [dict() for _ in range(node_count)]
    for u in range(node_count):
        for slot, idx in enumerate(order[u]):
            v = incident[u][idx]
            # parallel edges already excluded, so (u, v) is unique
            port_of[u][v] = slot
    edges = [(u, port_of[u][v], v, port_of[v][u]) for u, v in pairs]
    return build_graph(edges, node_count)


def generate(family: str, n: int, dmax: int | None = None, seed: int = 0) -> PortLabeledGraph:
    """Deterministically generate a test instance.

    Same (family, n, dmax, seed) always yields the same graph.
    """
    if family not in FAMILIES:
        raise InfeasibleParams(f"unknown family {family!r}")
    if n < 1:
        raise InfeasibleParams("n must be >= 1")
    rng = random.Random((family, n, dmax, seed).__repr__())

    if n == 1:
        return PortLabeledGraph(1, ((),))

    if family == "path":
        pairs = [(i, i + 1) for i in range(n - 1)]
    elif family == "ring":
        if n == 2:
            pairs = [(0, 1)]
        else:
            pairs = [(i, (i + 1) % n) for i in range(n)]
    elif family == "complete":
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    elif family == "grid":
        side = 1
        while side * side < n:
            side += 1
        coords = [(i // side, i % side) for i in range(n)]
        index = {c: i for i, c in enumerate(coords)}
        pairs = []
        for i, (r, c) in enumerate(coords):
            if (r, c + 1) in index:
                pairs.append((i, index[(r, c + 1)]))
            if (r + 1, c) in index:
                pairs.append((i, index[(r + 1, c)]))
    elif family == "random_tree":
        pairs = _random_tree_pairs(n, dmax, rng)
    else:  # random_connected
        pairs = _random_connected_pairs(n, dmax, rng)

    return _assign_ports(n, pairs, rng)


def _random_tree_pairs(n, dmax, rng):
    cap = dmax if dmax is not None else n
    if cap < 2 and n > 2:
        raise InfeasibleParams(f"dmax={cap} cannot connect {n} nodes")
    deg = [0] * n
    pairs = []
    for v in range(1, n):
        candidates = [u for u in range(v) if deg[u] < cap]
        if not candidates:
            raise InfeasibleParams(f"dmax={cap} too small for a tree on {n} nodes")
        u = rng.choice(candidates)
        pairs.append((u, v))
        deg[u] += 1
        deg[v] += 1
    return pairs


def _random_connected_pairs(n, dmax, rng):
    if n >= 3 and dmax is not None and dmax < 2:
        raise InfeasibleParams("random_connected needs dmax >= 2 for n >= 3")
    cap = dmax if dmax is not None else n - 1
    pairs = _random_tree_pairs(n, cap, rng)
    deg = [0] * n
    have = set()
    for u, v in pairs:
        deg[u] += 1
        deg[v] += 1
        have.add((min(u, v), max(u, v)))
    # sprinkle extra edges under the degree cap; density fixed by seed
    candidates = [(u, v) for u in range(n) for v in range(u + 1, n) if (u, v) not in have]
    rng.shuffle(candidates)
    extra_budget = rng.randint(0, max(0, n))
    for u, v in candidates:
        if extra_budget <= 0:
            break
        if deg[u] < cap and deg[v] < cap:
            pairs.append((u, v))
            deg[u] += 1
            deg[v] += 1
            extra_budget -= 1
    return pairs


def parse_graph_file(text: str) -> PortLabeledGraph:
    """Parse the plain-text format: header "n m", then m lines "u p_u v p_v".

    Lines starting with '#' (and inline '#' tails) are comments. Errors carry
    the 1-based line number.
    """
    header = None
    edges = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if header is None:
            if len(parts) != 2:
                raise GraphError(f"line {lineno}: header must be 'n m'")
            try:
                header = (int(parts[0]), int(parts[1]))
            except ValueError:
                raise GraphError(f"line {lineno}: header must be two integers") from None
            continue
        if len(parts) != 4:
            raise GraphError(f"line {lineno}: expected 'u p_u v p_v'")
        try:
            u, pu, v, pv = (int(x) for x in parts)
        except ValueError:
            raise GraphError(f"line {lineno}: expected four integers") from None
        edges.append((u, pu, v, pv))
    if header is None:
        raise GraphError("empty graph file")
    n, m = header
    if len(edges) != m:
        raise GraphError(f"header announces {m} edges, file has {len(edges)}")
    try:
        return build_graph(edges, node_count=n)
    except GraphError as exc:
        raise type(exc)(f"invalid graph file: {exc}") from exc


def serialize_graph(g: PortLabeledGraph) -> str:
    """Canonical text form: 'n m' header, edges with u < v, lines sorted."""
    lines = [f"{g.n} {g.m}"]
    for u, pu, v, pv in g.edges():
        lines.append(f"{u} {pu} {v} {pv}")
    return "\n".join(lines) + "\n"


def load_graph(path) -> PortLabeledGraph:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_graph_file(fh.read())
