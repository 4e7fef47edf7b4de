"""Acyclic directed mixed graphs and the graph primitives used by identification.

Nodes are ``NodeId(name, time)`` pairs. Static graphs simply use ``time=0``.
Bidirected edges stand for an unobserved common parent of their endpoints.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Iterator, List, Mapping, NamedTuple, Optional, Set, Tuple

__all__ = [
    "NodeId",
    "node",
    "Admg",
    "Hedge",
    "GraphError",
    "CycleError",
    "ancestors",
    "descendants",
    "cut_incoming",
    "cut_outgoing",
    "d_separated",
    "c_components",
    "is_c_forest",
    "is_hedge",
    "find_hedge",
    "find_hedge_exhaustive",
    "latent_project",
    "topo_order",
]


class GraphError(ValueError):
    """Malformed graph input or an operation applied to unknown nodes."""


class CycleError(GraphError):
    def __init__(self, cycle: List["NodeId"]):
        self.cycle = cycle
        super().__init__("directed cycle: " + " -> ".join(map(str, cycle)))


class NodeId(NamedTuple):
    name: str
    time: int = 0

    def __str__(self) -> str:
        return self.name if self.time == 0 else f"{self.name}@{self.time}"

    @property
    def label(self) -> str:
        """Unambiguous ``name@time`` form used in JSON documents."""
        return f"{self.name}@{self.time}"

    @classmethod
    def parse(cls, text: str) -> "NodeId":
        text = text.strip()
        if "@" in text:
            name, _, t = text.rpartition("@")
            try:
                return cls(name, int(t))
            except ValueError:
                raise GraphError(f"bad node label {text!r}") from None
        return cls(text, 0)


def node(x) -> NodeId:
    """Coerce a ``NodeId``, ``(name, time)`` tuple or label string to a ``NodeId``."""
    if isinstance(x, NodeId):
        return x
    if isinstance(x, str):
        return NodeId.parse(x)
    if isinstance(x, tuple) and len(x) == 2:
        return NodeId(str(x[0]), int(x[1]))
    raise GraphError(f"cannot interpret {x!r} as a node")


def _nodeset(xs: Iterable) -> FrozenSet[NodeId]:
    if isinstance(xs, (str, NodeId)):
        xs = [xs]
    return frozenset(node(x) for x in xs)


def _pair(a: NodeId, b: NodeId) -> Tuple[NodeId, NodeId]:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class Admg:
    """Immutable acyclic directed mixed graph.

    ``directed`` holds ordered ``(tail, head)`` pairs and ``bidirected`` holds
    pairs sorted in canonical node order. ``card`` maps each node to its domain
    size; nodes missing from ``card`` default to binary.
    """

    nodes: Tuple[NodeId, ...]
    directed: FrozenSet[Tuple[NodeId, NodeId]] = frozenset()
    bidirected: FrozenSet[Tuple[NodeId, NodeId]] = frozenset()
    card: Mapping[NodeId, int] = field(default_factory=dict)
    _pa: Dict[NodeId, FrozenSet[NodeId]] = field(init=False, repr=False, compare=False)
    _ch: Dict[NodeId, FrozenSet[NodeId]] = field(init=False, repr=False, compare=False)
    _sib: Dict[NodeId, FrozenSet[NodeId]] = field(init=False, repr=False, compare=False)

    def __init__(self, nodes=(), directed=(), bidirected=(), card=None):
        ns = sorted(_nodeset(nodes))
        nset = set(ns)
        dir_ = set()
        for a, b in directed:
            a, b = node(a), node(b)
            for n in (a, b):
                if n not in nset:
                    raise GraphError(f"edge endpoint {n} is not a declared node")
            if a == b:
                raise GraphError(f"self-loop on {a}")
            dir_.add((a, b))
        bi = set()
        for a, b in bidirected:
            a, b = node(a), node(b)
            for n in (a, b):
                if n not in nset:
                    raise GraphError(f"edge endpoint {n} is not a declared node")
            if a == b:
                raise GraphError(f"bidirected self-loop on {a}")
            bi.add(_pair(a, b))
        cards = {}
        for n in ns:
            c = int((card or {}).get(n, 2))
            if c < 2:
                raise GraphError(f"cardinality of {n} must be >= 2, got {c}")
            cards[n] = c
        object.__setattr__(self, "nodes", tuple(ns))
        object.__setattr__(self, "directed", frozenset(dir_))
        object.__setattr__(self, "bidirected", frozenset(bi))
        object.__setattr__(self, "card", cards)
        pa: Dict[NodeId, Set[NodeId]] = {n: set() for n in ns}
        ch: Dict[NodeId, Set[NodeId]] = {n: set() for n in ns}
        sib: Dict[NodeId, Set[NodeId]] = {n: set() for n in ns}
        for a, b in dir_:
            pa[b].add(a)
            ch[a].add(b)
        for a, b in bi:
            sib[a].add(b)
            sib[b].add(a)
        object.__setattr__(self, "_pa", {n: frozenset(v) for n, v in pa.items()})
        object.__setattr__(self, "_ch", {n: frozenset(v) for n, v in ch.items()})
        object.__setattr__(self, "_sib", {n: frozenset(v) for n, v in sib.items()})
        self._check_acyclic()

    def _check_acyclic(self) -> None:
        state: Dict[NodeId, int] = {}
        for root in self.nodes:
            if root in state:
                continue
            stack = [(root, iter(sorted(self._ch[root])))]
            state[root] = 1
            path = [root]
            while stack:
                n, it = stack[-1]
                nxt = next(it, None)
                if nxt is None:
                    state[n] = 2
                    stack.pop()
                    path.pop()
                elif state.get(nxt) == 1:
                    raise CycleError(path[path.index(nxt):] + [nxt])
                elif nxt not in state:
                    state[nxt] = 1
                    stack.append((nxt, iter(sorted(self._ch[nxt]))))
                    path.append(nxt)

    # -- accessors -----------------------------------------------------------------
    def __contains__(self, n) -> bool:
        return node(n) in self._pa

    def __iter__(self) -> Iterator[NodeId]:
        return iter(self.nodes)

    def __len__(self) -> int:
        return len(self.nodes)

    def parents(self, n) -> FrozenSet[NodeId]:
        return self._pa[node(n)]

    def children(self, n) -> FrozenSet[NodeId]:
        return self._ch[node(n)]

    def siblings(self, n) -> FrozenSet[NodeId]:
        """Nodes joined to ``n`` by a bidirected edge."""
        return self._sib[node(n)]

    def check_nodes(self, s: Iterable) -> FrozenSet[NodeId]:
        s = _nodeset(s)
        for n in sorted(s):
            if n not in self._pa:
                raise GraphError(f"unknown node {n}")
        return s

    def subgraph(self, keep: Iterable) -> "Admg":
        keep = self.check_nodes(keep)
        return Admg(
            keep,
            [(a, b) for a, b in self.directed if a in keep and b in keep],
            [(a, b) for a, b in self.bidirected if a in keep and b in keep],
            {n: self.card[n] for n in keep},
        )

    def relabel(self, mapping: Mapping) -> "Admg":
        m = {node(k): node(v) for k, v in mapping.items()}
        f = lambda n: m.get(n, n)  # noqa: E731
        return Admg(
            [f(n) for n in self.nodes],
            [(f(a), f(b)) for a, b in self.directed],
            [(f(a), f(b)) for a, b in self.bidirected],
            {f(n): c for n, c in self.card.items()},
        )

    # -- serialization -------------------------------------------------------------
    def to_json(self) -> dict:
        return {
            "nodes": [{"name": n.name, "time": n.time, "card": self.card[n]} for n in self.nodes],
            "directed": [[a.label, b.label] for a, b in sorted(self.directed)],
            "bidirected": [[a.label, b.label] for a, b in sorted(self.bidirected)],
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "Admg":
        try:
            nodes = [NodeId(str(d["name"]), int(d.get("time", 0))) for d in doc["nodes"]]
            card = {NodeId(str(d["name"]), int(d.get("time", 0))): int(d.get("card", 2)) for d in doc["nodes"]}
        except (KeyError, TypeError) as e:
            raise GraphError(f"malformed 'nodes' entry: {e}") from None
        return cls(nodes, doc.get("directed", []), doc.get("bidirected", []), card)

    def __repr__(self) -> str:
        d = ", ".join(f"{a}->{b}" for a, b in sorted(self.directed))
        b = ", ".join(f"{a}<->{b}" for a, b in sorted(self.bidirected))
        return f"Admg(nodes=[{', '.join(map(str, self.nodes))}], directed=[{d}], bidirected=[{b}])"


@dataclass(frozen=True)
class Hedge:
    """Witness of non-identifiability: two C-forests sharing the root set."""

    forest_f: FrozenSet[NodeId]
    forest_f_prime: FrozenSet[NodeId]
    root: FrozenSet[NodeId]

    def to_json(self) -> dict:
        return {
            "F": [n.label for n in sorted(self.forest_f)],
            "F_prime": [n.label for n in sorted(self.forest_f_prime)],
            "R": [n.label for n in sorted(self.root)],
        }


# -- reachability ----------------------------------------------------------------------


def _reach(start: Iterable[NodeId], step) -> Set[NodeId]:
    seen = set(start)
    queue = deque(seen)
    while queue:
        n = queue.popleft()
        for m in step(n):
            if m not in seen:
                seen.add(m)
                queue.append(m)
    return seen


def ancestors(g: Admg, s: Iterable) -> FrozenSet[NodeId]:
    """Nodes with a directed path into ``s``, including ``s`` itself."""
    s = g.check_nodes(s)
    return frozenset(_reach(s, g.parents))


def descendants(g: Admg, s: Iterable) -> FrozenSet[NodeId]:
    """Nodes reachable from ``s`` along directed edges, including ``s``."""
    s = g.check_nodes(s)
    return frozenset(_reach(s, g.children))


def cut_incoming(g: Admg, x: Iterable) -> Admg:
    """Remove directed edges into ``x`` and every bidirected edge touching ``x``."""
    x = g.check_nodes(x)
    if not x:
        return g
    return Admg(
        g.nodes,
        [(a, b) for a, b in g.directed if b not in x],
        [(a, b) for a, b in g.bidirected if a not in x and b not in x],
        g.card,
    )


def cut_outgoing(g: Admg, z: Iterable) -> Admg:
    """Remove directed edges out of ``z``; bidirected edges are kept."""
    z = g.check_nodes(z)
    if not z:
        return g
    return Admg(g.nodes, [(a, b) for a, b in g.directed if a not in z], g.bidirected, g.card)


def d_separated(g: Admg, y: Iterable, z: Iterable, w: Iterable = ()) -> bool:
    """True when every path between ``y`` and ``z`` is blocked by ``w``.

    Bidirected edges are read as forks through an implicit latent parent.
    Uses the moralized ancestral graph criterion.
    """
    y, z, w = g.check_nodes(y), g.check_nodes(z), g.check_nodes(w)
    if (y & z) or (y & w) or (z & w):
        raise GraphError("d_separated requires pairwise disjoint node sets")
    if not y or not z:
        return True
    anc = ancestors(g, y | z | w)
    # moral graph over anc plus one latent per bidirected edge inside anc
    adj: Dict[object, Set[object]] = {n: set() for n in anc}

    def link(a, b):
        adj[a].add(b)
        adj[b].add(a)

    lat_parents: Dict[NodeId, List[object]] = {n: [] for n in anc}
    for a, b in g.directed:
        if b in anc:
            link(a, b)
    for i, (a, b) in enumerate(sorted(g.bidirected)):
        if a in anc and b in anc:
            u = ("__latent__", i)
            adj[u] = set()
            link(u, a)
            link(u, b)
            lat_parents[a].append(u)
            lat_parents[b].append(u)
    for n in anc:
        pas = list(g.parents(n)) + lat_parents[n]
        for a, b in itertools.combinations(pas, 2):
            link(a, b)
    seen = set(y)
    queue = deque(y)
    while queue:
        n = queue.popleft()
        for m in adj[n]:
            if m in w or m in seen:
                continue
            if m in z:
                return False
            seen.add(m)
            queue.append(m)
    return True


def c_components(g: Admg) -> List[FrozenSet[NodeId]]:
    """Partition of the nodes into maximal bidirected-connected blocks."""
    out = []
    seen: Set[NodeId] = set()
    for n in g.nodes:
        if n in seen:
            continue
        block = _reach([n], g.siblings)
        seen |= block
        out.append(frozenset(block))
    return out


def topo_order(g: Admg) -> List[NodeId]:
    """Kahn's algorithm with ties broken by canonical node order."""
    import heapq

    indeg = {n: len(g.parents(n)) for n in g.nodes}
    heap = [n for n in g.nodes if indeg[n] == 0]
    heapq.heapify(heap)
    out = []
    while heap:
        n = heapq.heappop(heap)
        out.append(n)
        for m in g.children(n):
            indeg[m] -= 1
            if indeg[m] == 0:
                heapq.heappush(heap, m)
    return out


# -- C-forests and hedges --------------------------------------------------------------


def is_c_forest(g: Admg, c: Iterable, root: Iterable, *, induced: bool = False) -> bool:
    """Whether ``c`` with root set ``root`` is a C-forest in ``g``.

    A C-forest is bidirectionally connected and, after choosing some of its
    directed edges, every node has at most one child and ``root`` is exactly
    the set of childless nodes. With edge choice allowed this reduces to:
    the induced bidirected edges connect ``c`` and each non-root node has a
    child inside ``c``.

    With ``induced=True`` all induced directed edges must be kept, so every
    node needs at most one child in ``c`` and ``root`` must equal the nodes
    without children in ``c``.
    """
    c = g.check_nodes(c)
    root = _nodeset(root)
    if not c or not root or not root <= c:
        return False
    sub = g.subgraph(c)
    if len(c_components(sub)) != 1:
        return False
    if induced:
        if any(len(sub.children(n)) > 1 for n in c):
            return False
        return root == frozenset(n for n in c if not sub.children(n))
    return all(sub.children(n) for n in c - root)


def is_hedge(g: Admg, h: Hedge, x: Iterable, y: Iterable, *, induced: bool = False) -> bool:
    """Check the hedge definition for the query ``P(y | do(x))``."""
    x, y = g.check_nodes(x), g.check_nodes(y)
    f, fp, r = h.forest_f, h.forest_f_prime, h.root
    if not (fp <= f and r <= fp and r):
        return False
    if not (f & x) or (fp & x):
        return False
    if not (is_c_forest(g, f, r, induced=induced) and is_c_forest(g, fp, r, induced=induced)):
        return False
    return r <= ancestors(cut_incoming(g, x), y)


def _bits(mask: int) -> Iterator[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def find_hedge_exhaustive(
    g: Admg, x: Iterable, y: Iterable, within: Optional[Iterable] = None, *, induced: bool = False
) -> Optional[Hedge]:
    """Blind search over all node-subset pairs ``F' ⊆ F`` and root sets.

    Exponential in the node count; intended for graphs of at most a handful
    of nodes, where it serves as an independent check on :func:`find_hedge`.
    ``within`` restricts the candidate forests to subsets of a node set.
    Returns the hedge with the smallest ``R``, then ``F``, then ``F'``.
    """
    x, y = g.check_nodes(x), g.check_nodes(y)
    if not x:
        return None
    an = ancestors(cut_incoming(g, x), y)
    nodes = list(g.nodes) if within is None else sorted(g.check_nodes(within))
    k = len(nodes)
    idx = {n: i for i, n in enumerate(nodes)}
    ch = [sum(1 << idx[m] for m in g.children(n) if m in idx) for n in nodes]
    sib = [sum(1 << idx[m] for m in g.siblings(n) if m in idx) for n in nodes]
    an_mask = sum(1 << idx[n] for n in nodes if n in an)
    x_mask = sum(1 << idx[n] for n in nodes if n in x)

    def connected(mask: int) -> bool:
        start = mask & -mask
        seen, frontier = start, start
        while frontier:
            nxt = 0
            for i in _bits(frontier):
                nxt |= sib[i]
            frontier = nxt & mask & ~seen
            seen |= frontier
        return seen == mask

    forests: Dict[int, List[int]] = {}
    for mask in range(1, 1 << k):
        if not connected(mask):
            continue
        sinks = 0
        multi = False
        for i in _bits(mask):
            kids = ch[i] & mask
            if not kids:
                sinks |= 1 << i
            elif kids & (kids - 1):
                multi = True
        if sinks & ~an_mask:
            continue
        if induced:
            if not multi:
                forests.setdefault(sinks, []).append(mask)
            continue
        free = mask & an_mask & ~sinks
        sub = free
        while True:
            forests.setdefault(sinks | sub, []).append(mask)
            if sub == 0:
                break
            sub = (sub - 1) & free

    def key(m: int):
        return (bin(m).count("1"), [i for i in _bits(m)])

    def to_set(m: int) -> FrozenSet[NodeId]:
        return frozenset(nodes[i] for i in _bits(m))

    for r in sorted(forests, key=key):
        cands = forests[r]
        with_x = sorted((m for m in cands if m & x_mask), key=key)
        without_x = sorted((m for m in cands if not m & x_mask), key=key)
        for f in with_x:
            for fp in without_x:
                if fp & ~f == 0:
                    return Hedge(to_set(f), to_set(fp), to_set(r))
    return None


def find_hedge(g: Admg, x: Iterable, y: Iterable) -> Optional[Hedge]:
    """Return a hedge for ``P(y | do(x))`` if one exists, else ``None``.

    Runs the identification recursion; on failure its certificate seeds the
    witness search.
    """
    from .identification import Unidentifiable, identify

    x, y = g.check_nodes(x), g.check_nodes(y)
    if x & y:
        raise GraphError("x and y must be disjoint")
    if not x or not y:
        return None
    try:
        identify(g, y, x)
    except Unidentifiable as e:
        return e.hedge
    return None


# -- latent projection -----------------------------------------------------------------


def latent_project(nodes: Iterable, directed: Iterable, latent: Iterable, card: Optional[Mapping] = None) -> Admg:
    """Project latent nodes out of a DAG.

    Observed ``m -> n`` is added when a directed path from ``m`` to ``n`` runs
    only through latents; ``m <-> n`` when some latent reaches both along
    latent-only directed paths.
    """
    nodes = _nodeset(nodes)
    latent = _nodeset(latent)
    observed = nodes - latent
    ch: Dict[NodeId, Set[NodeId]] = {n: set() for n in nodes}
    for a, b in directed:
        a, b = node(a), node(b)
        if a not in nodes or b not in nodes:
            raise GraphError(f"edge {a}->{b} has an undeclared endpoint")
        ch[a].add(b)

    def observed_reach(src: NodeId) -> Set[NodeId]:
        # observed nodes reachable from src via latent-only interior nodes
        out, seen, stack = set(), set(), list(ch[src])
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            if n in latent:
                stack.extend(ch[n])
            else:
                out.add(n)
        return out

    dir_ = {(m, n) for m in observed for n in observed_reach(m)}
    bi = set()
    for u in latent:
        tgt = sorted(observed_reach(u))
        for a, b in itertools.combinations(tgt, 2):
            bi.add((a, b))
    card = {node(k): v for k, v in (card or {}).items()}
    try:
        return Admg(observed, dir_, bi, {n: card.get(n, 2) for n in observed})
    except CycleError as e:
        raise CycleError(e.cycle) from None
