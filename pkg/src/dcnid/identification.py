"""Identification of interventional distributions in ADMGs.

:func:`identify` is the seven-case recursion of Shpitser and Pearl. It returns
a do-free :data:`~dcnid.expr.ProbExpr` or raises :class:`Unidentifiable`
carrying a hedge witness. :func:`transport` answers the same query in a target
domain from source-domain experiments plus target observations.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, FrozenSet, Iterable, Optional, Tuple

from .expr import InterventionalAtom, ObsFactor, ProbExpr, Quotient, product, sum_over
from .graph import (
    Admg,
    GraphError,
    Hedge,
    NodeId,
    ancestors,
    c_components,
    cut_incoming,
    d_separated,
    descendants,
    find_hedge_exhaustive,
    is_hedge,
    node,
    topo_order,
)

__all__ = [
    "IdentificationError",
    "Unidentifiable",
    "UnsupportedTransport",
    "SelectionDiagram",
    "identify",
    "identify_conditional",
    "transport",
    "transport_conditional",
    "WITNESS_SEARCH_LIMIT",
]

# failing sub-graphs up to this many nodes get an exhaustive witness search
WITNESS_SEARCH_LIMIT = 14


class IdentificationError(ValueError):
    """Malformed query: overlapping sets, unknown nodes, empty outcome."""


class Unidentifiable(Exception):
    """``P(y | do(x))`` is not identifiable from the observational distribution.

    Attributes
    ----------
    hedge : Hedge
        Witness for the query in the input graph.
    graph : Admg
        Sub-graph at which the recursion failed.
    s_set : frozenset
        The C-component of ``graph`` minus the intervened nodes.
    origin : str or None
        ``"numerator"`` or ``"denominator"`` for conditional queries.
    stage : str or None
        Set by callers running several identifications, e.g. ``"M_7"``.
    """

    def __init__(self, hedge: Hedge, graph: Admg, s_set: FrozenSet[NodeId], origin: Optional[str] = None):
        self.hedge = hedge
        self.graph = graph
        self.s_set = s_set
        self.origin = origin
        self.stage: Optional[str] = None
        where = f" ({origin})" if origin else ""
        super().__init__(
            f"not identifiable{where}: hedge F={sorted(map(str, hedge.forest_f))} "
            f"F'={sorted(map(str, hedge.forest_f_prime))} R={sorted(map(str, hedge.root))}"
        )

    def to_json(self) -> dict:
        doc = {"status": "unidentifiable", "hedge": self.hedge.to_json()}
        doc["failed_subgraph"] = [n.label for n in self.graph.nodes]
        doc["s_set"] = [n.label for n in sorted(self.s_set)]
        if self.origin:
            doc["origin"] = self.origin
        if self.stage:
            doc["stage"] = self.stage
        return doc


class UnsupportedTransport(Exception):
    """The transport query falls outside the patterns this package handles.

    This does not prove the effect is non-transportable.
    """

    def __init__(self, message: str, graph: Optional[Admg] = None):
        self.graph = graph
        super().__init__(message)

    def to_json(self) -> dict:
        return {"status": "unsupported_transport", "reason": str(self)}


def _vs(xs) -> FrozenSet[NodeId]:
    if isinstance(xs, (str, NodeId)):
        xs = [xs]
    return frozenset(node(x) for x in xs)


# -- distributions threaded through the recursion -------------------------------------


class _Base:
    """The input distribution restricted to a node set.

    ``leaf(targets, conditions)`` builds the atom for a conditional of the
    input joint; marginalizing only shrinks ``vars`` so every conditional
    stays an atom.
    """

    def __init__(self, vars: FrozenSet[NodeId], leaf: Callable[[FrozenSet[NodeId], FrozenSet[NodeId]], ProbExpr]):
        self.vars = vars
        self.leaf = leaf

    def marginal(self, keep: FrozenSet[NodeId]) -> "_Base":
        return _Base(self.vars & keep, self.leaf)

    def cond(self, v: NodeId, given: FrozenSet[NodeId]) -> ProbExpr:
        return self.leaf(frozenset([v]), given & self.vars)

    def expr(self, keep: FrozenSet[NodeId]) -> ProbExpr:
        return self.leaf(keep & self.vars, frozenset())


class _Derived:
    """A distribution over ``vars`` given as an explicit expression.

    The expression may mention extra free variables (fixed intervention
    values from earlier steps).
    """

    def __init__(self, vars: FrozenSet[NodeId], body: ProbExpr):
        self.vars = vars
        self.body = body

    def marginal(self, keep: FrozenSet[NodeId]) -> "_Derived":
        return _Derived(self.vars & keep, sum_over(self.vars - keep, self.body))

    def cond(self, v: NodeId, given: FrozenSet[NodeId]) -> ProbExpr:
        given = given & self.vars
        num = sum_over(self.vars - given - {v}, self.body)
        den = sum_over(self.vars - given, self.body)
        return Quotient(num, den)

    def expr(self, keep: FrozenSet[NodeId]) -> ProbExpr:
        return sum_over(self.vars - keep, self.body)


def _obs_leaf(targets, conditions) -> ProbExpr:
    return ObsFactor(targets, conditions)


class _Failure(Exception):
    def __init__(self, graph: Admg, s: FrozenSet[NodeId], y: FrozenSet[NodeId], x: FrozenSet[NodeId]):
        self.graph, self.s, self.y, self.x = graph, s, y, x


def _id(y: FrozenSet[NodeId], x: FrozenSet[NodeId], p, g: Admg, on_fail) -> ProbExpr:
    v = frozenset(g.nodes)
    # 1: nothing to intervene on
    if not x:
        return p.expr(y)
    # 2: drop non-ancestors of y
    an = ancestors(g, y)
    if an != v:
        return _id(y, x & an, p.marginal(an), g.subgraph(an), on_fail)
    # 3: add nodes that cannot reach y once x is cut
    w = (v - x) - ancestors(cut_incoming(g, x), y)
    if w:
        return _id(y, x | w, p, g, on_fail)
    rest = v - x
    comps = c_components(g.subgraph(rest))
    # 4: factor over the C-components of g minus x
    if len(comps) > 1:
        terms = [_id(s, v - s, p, g, on_fail) for s in comps]
        return sum_over(v - (y | x), product(terms))
    s = comps[0]
    g_comps = c_components(g)
    # 5: g is one C-component and s is strictly inside it
    if len(g_comps) == 1:
        return on_fail(y, x, p, g, s)
    order = topo_order(g)
    pos = {n: i for i, n in enumerate(order)}
    # 6: s is itself a C-component of g
    if s in g_comps:
        terms = [p.cond(n, frozenset(order[: pos[n]])) for n in sorted(s, key=pos.get)]
        return sum_over(s - y, product(terms))
    # 7: s sits inside a larger C-component s'
    s_big = next(c for c in g_comps if s < c)
    factors = [p.cond(n, frozenset(order[: pos[n]])) for n in sorted(s_big, key=pos.get)]
    return _id(y, x & s_big, _Derived(s_big, product(factors)), g.subgraph(s_big), on_fail)


# -- hedge witnesses -----------------------------------------------------------------


def _trim_witness(g: Admg, f: FrozenSet[NodeId], s: FrozenSet[NodeId], y_orig, x_orig) -> Hedge:
    """Cut ``f`` and ``s`` down towards forests sharing a root set."""
    an_y = ancestors(cut_incoming(g, x_orig), y_orig)
    fp = set(s)
    sub = g.subgraph(fp)
    root = frozenset(n for n in fp if not sub.children(n)) & an_y or frozenset(fp)
    ff = set(f)
    for nodes in (ff, fp):
        changed = True
        while changed:
            changed = False
            sub = g.subgraph(nodes)
            keep = ancestors(sub, root & nodes)
            for n in sorted(nodes):
                if n not in keep or (len(sub.children(n)) > 1 and n not in root):
                    nodes.discard(n)
                    changed = True
                    break
    return Hedge(frozenset(ff), frozenset(fp), frozenset(root))


def _witness(g_orig: Admg, fail: _Failure, y_orig, x_orig) -> Hedge:
    f = frozenset(fail.graph.nodes)
    # the failing call's graph and component are both rooted at its outcome set
    direct = Hedge(f, fail.s, fail.y)
    if is_hedge(g_orig, direct, x_orig, y_orig):
        return direct
    if len(f) <= WITNESS_SEARCH_LIMIT:
        h = find_hedge_exhaustive(g_orig, x_orig, y_orig, within=f)
        if h is not None:
            return h
    if len(g_orig) <= WITNESS_SEARCH_LIMIT:
        h = find_hedge_exhaustive(g_orig, x_orig, y_orig)
        if h is not None:
            return h
    return _trim_witness(g_orig, f, fail.s, y_orig, x_orig)


# -- public entry points --------------------------------------------------------------


def _check_query(g: Admg, y, x) -> Tuple[FrozenSet[NodeId], FrozenSet[NodeId]]:
    try:
        y, x = g.check_nodes(y), g.check_nodes(x)
    except GraphError as e:
        raise IdentificationError(str(e)) from None
    if not y:
        raise IdentificationError("outcome set y must be nonempty")
    if x & y:
        raise IdentificationError(f"x and y overlap on {sorted(map(str, x & y))}")
    return y, x


def identify(g: Admg, y: Iterable, x: Iterable = ()) -> ProbExpr:
    """Do-free expression for ``P(y | do(x))`` over the observational joint of ``g``.

    Raises
    ------
    Unidentifiable
        With a hedge witness when no such expression exists.
    IdentificationError
        On a malformed query.
    """
    y, x = _check_query(g, y, x)

    def fail(y_, x_, p, g_, s):
        raise _Failure(g_, s, y_, x_)

    try:
        return _id(y, x, _Base(frozenset(g.nodes), _obs_leaf), g, fail)
    except _Failure as e:
        raise Unidentifiable(_witness(g, e, y, x), e.graph, e.s) from None


def identify_conditional(g: Admg, y: Iterable, z: Iterable, x: Iterable = ()) -> ProbExpr:
    """``P(y | z, do(x))`` as the quotient ``P(y, z | do(x)) / P(z | do(x))``."""
    y, x = _check_query(g, y, x)
    z = g.check_nodes(z) if z else frozenset()
    if (z & y) or (z & x):
        raise IdentificationError("y, z and x must be pairwise disjoint")
    if not z:
        return identify(g, y, x)
    parts = []
    for label, target in (("numerator", y | z), ("denominator", z)):
        try:
            parts.append(identify(g, target, x))
        except Unidentifiable as e:
            e.origin = label
            raise
    return Quotient(parts[0], parts[1])


# -- transport ------------------------------------------------------------------------


@dataclass(frozen=True)
class SelectionDiagram:
    """An ADMG plus selection nodes marking mechanisms that differ between domains.

    ``selection`` is a set of ``(selection_node, target_node)`` pairs. Each
    selection node is outside ``base``, has no parents and one child.
    """

    base: Admg
    selection: FrozenSet[Tuple[NodeId, NodeId]] = frozenset()
    source: str = "source"
    target: str = "target"

    def __post_init__(self):
        pairs = frozenset((node(s), node(t)) for s, t in self.selection)
        object.__setattr__(self, "selection", pairs)
        sel_nodes = [s for s, _ in pairs]
        if len(set(sel_nodes)) != len(sel_nodes):
            raise GraphError("each selection node must have exactly one child")
        for s, t in pairs:
            if s in self.base:
                raise GraphError(f"selection node {s} collides with a graph node")
            if t not in self.base:
                raise GraphError(f"selection target {t} is not a graph node")

    @classmethod
    def on(cls, base: Admg, targets: Iterable, **kw) -> "SelectionDiagram":
        """One selection node ``S_<name>`` per target node."""
        pairs = [(NodeId("S_" + n.name, n.time), n) for n in sorted(_vs(targets))]
        return cls(base, frozenset(pairs), **kw)

    @property
    def selection_nodes(self) -> FrozenSet[NodeId]:
        return frozenset(s for s, _ in self.selection)

    @property
    def selected(self) -> FrozenSet[NodeId]:
        return frozenset(t for _, t in self.selection)

    def graph(self) -> Admg:
        """Base graph with the selection nodes and their edges added."""
        b = self.base
        card = dict(b.card)
        card.update({s: 2 for s in self.selection_nodes})
        return Admg(
            list(b.nodes) + list(self.selection_nodes),
            list(b.directed) + list(self.selection),
            b.bidirected,
            card,
        )


def _adjustment_set(d: SelectionDiagram, y, x) -> Optional[FrozenSet[NodeId]]:
    gs = d.graph()
    cut = cut_incoming(gs, x)
    sel = d.selection_nodes
    cands = sorted(frozenset(d.base.nodes) - descendants(d.base, x) - y - x)
    for k in range(len(cands) + 1):
        for w in itertools.combinations(cands, k):
            if d_separated(cut, sel, y, x | frozenset(w)):
                return frozenset(w)
    return None


def transport(d: SelectionDiagram, y: Iterable, x: Iterable) -> ProbExpr:
    """Target-domain ``P(y | do(x))`` from source experiments on ``x`` and target observations.

    Tried in order:

    1. no selection nodes: plain identification in the target;
    2. no selected node is an ancestor of ``y`` once ``x`` is cut: the source
       experiment applies unchanged;
    3. a set ``w`` of non-descendants of ``x`` separating the selection nodes
       from ``y``: ``sum_w P_source(y | do(x), w) P_target(w)``;
    4. the identification recursion on target observations, switching to the
       source experiment at any sub-problem whose outcome is separated from
       the selection nodes.

    ``InterventionalAtom`` leaves are tagged with ``d.source`` and read the
    source experiments; ``ObsFactor`` leaves read target observations.

    Raises
    ------
    UnsupportedTransport
        When none of the above applies.
    """
    g = d.base
    y, x = _check_query(g, y, x)
    if not d.selection or not x:
        return identify(g, y, x)
    if not (d.selected & ancestors(cut_incoming(g, x), y)):
        return InterventionalAtom(d.source, y, x, frozenset())
    w = _adjustment_set(d, y, x)
    if w is not None:
        atom = InterventionalAtom(d.source, y, x, w)
        return sum_over(w, product([atom, ObsFactor(w)])) if w else atom
    return _recursive_transport(d, y, x)


def _recursive_transport(d: SelectionDiagram, y, x) -> ProbExpr:
    g = d.base
    gs = d.graph()
    sel = d.selection_nodes
    every = frozenset(g.nodes)

    def source_leaf(targets, conditions):
        return InterventionalAtom(d.source, targets, x, conditions)

    def fail(y_, x_, p, g_, s):
        # all of the current sub-problem's context is held fixed
        fixed = x_ | (every - frozenset(g_.nodes))
        if not (x <= fixed):
            raise UnsupportedTransport(
                f"sub-problem for {sorted(map(str, y_))} does not fix every experimental variable", g_
            )
        if not d_separated(cut_incoming(gs, fixed), sel, y_, fixed):
            raise UnsupportedTransport(
                f"selection nodes reach {sorted(map(str, y_))} in the failing sub-problem", g_
            )
        # P_target(y_ | do(fixed)) = P_source(y_ | do(fixed)); identify it from do(x) data
        g_src = g.subgraph(every - x)
        try:
            return _id(y_, fixed - x, _Base(frozenset(g_src.nodes), source_leaf), g_src, _no_source)
        except _Failure:
            raise UnsupportedTransport(
                f"{sorted(map(str, y_))} is not identifiable from the source experiment", g_
            ) from None

    return _id(y, x, _Base(every, _obs_leaf), g, fail)


def _no_source(y_, x_, p, g_, s):
    raise _Failure(g_, s, y_, x_)


def transport_conditional(d: SelectionDiagram, y: Iterable, z: Iterable, x: Iterable) -> ProbExpr:
    """``P_target(y | z, do(x))`` as a quotient of two :func:`transport` calls."""
    z = _vs(z)
    if not z:
        return transport(d, y, x)
    return Quotient(transport(d, _vs(y) | z, x), transport(d, z, x))


def validate_witness(g: Admg, e: Unidentifiable, x, y) -> bool:
    return is_hedge(g, e.hedge, x, y)
