"""Compact dynamic causal network specifications.

A :class:`DcnSpec` describes one time slice: metavariables, edges inside a
slice, edges from slice ``t`` to slice ``t+1``, and unobserved confounders
either inside a slice or spanning two consecutive slices. :func:`unroll`
expands it into a finite :class:`~dcnid.graph.Admg` window.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

from .graph import Admg, CycleError, GraphError, NodeId, latent_project

__all__ = [
    "SpecError",
    "DcnSpec",
    "ConfounderClass",
    "Classification",
    "STATIC",
    "FIRST_ORDER",
    "HIGHER_ORDER",
    "classify",
    "unroll",
    "slice_nodes",
    "dynamic_time_span",
    "window_graph",
]

STATIC = "Static"
FIRST_ORDER = "FirstOrderDynamic"
HIGHER_ORDER = "HigherOrderDynamic"
_RANK = {STATIC: 0, FIRST_ORDER: 1, HIGHER_ORDER: 2}


class SpecError(GraphError):
    pass


Pair = Tuple[str, str]


@dataclass(frozen=True)
class DcnSpec:
    """Recurrent causal structure of one slice.

    Parameters
    ----------
    metavars : sequence of (name, cardinality)
        Declared order fixes the state-index order (first most significant).
    intra_edges : pairs ``(a, b)`` meaning ``a@t -> b@t``
    cross_edges : pairs ``(a, b)`` meaning ``a@t -> b@t+1``
    intra_conf : pairs ``(a, b)`` meaning ``a@t <-> b@t``
    cross_conf : pairs ``(a, b)`` meaning ``a@t <-> b@t+1``
    """

    metavars: Tuple[Tuple[str, int], ...]
    intra_edges: Tuple[Pair, ...] = ()
    cross_edges: Tuple[Pair, ...] = ()
    intra_conf: Tuple[Pair, ...] = ()
    cross_conf: Tuple[Pair, ...] = ()

    def __post_init__(self):
        mv = tuple((str(n), int(c)) for n, c in self.metavars)
        object.__setattr__(self, "metavars", mv)
        names = [n for n, _ in mv]
        if len(set(names)) != len(names):
            raise SpecError("duplicate metavariable name")
        for n, c in mv:
            if c < 2:
                raise SpecError(f"cardinality of {n} must be >= 2, got {c}")
            if "@" in n or "," in n or "=" in n:
                raise SpecError(f"metavariable name {n!r} may not contain '@', ',' or '='")
        known = set(names)
        for field in ("intra_edges", "cross_edges", "intra_conf", "cross_conf"):
            pairs = []
            for pair in getattr(self, field):
                a, b = (str(p) for p in pair)
                for e in (a, b):
                    if e not in known:
                        raise SpecError(f"{field}: unknown metavariable {e!r}")
                if a == b and field in ("intra_edges", "intra_conf"):
                    raise SpecError(f"{field}: self-loop on {a}")
                if field == "intra_conf":
                    a, b = min(a, b), max(a, b)
                pairs.append((a, b))
            object.__setattr__(self, field, tuple(sorted(set(pairs))))
        try:
            Admg([NodeId(n) for n in names], [(NodeId(a), NodeId(b)) for a, b in self.intra_edges])
        except CycleError as e:
            raise SpecError(f"intra-slice edges are cyclic: {e}") from None

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(n for n, _ in self.metavars)

    @property
    def card(self) -> Dict[str, int]:
        return dict(self.metavars)

    def rename(self, mapping: Mapping[str, str]) -> "DcnSpec":
        f = lambda n: mapping.get(n, n)  # noqa: E731
        fp = lambda ps: tuple((f(a), f(b)) for a, b in ps)  # noqa: E731
        return DcnSpec(
            tuple((f(n), c) for n, c in self.metavars),
            fp(self.intra_edges),
            fp(self.cross_edges),
            fp(self.intra_conf),
            fp(self.cross_conf),
        )

    def to_json(self) -> dict:
        return {
            "metavars": [{"name": n, "card": c} for n, c in self.metavars],
            "intra_edges": [list(p) for p in self.intra_edges],
            "cross_edges": [list(p) for p in self.cross_edges],
            "intra_conf": [list(p) for p in self.intra_conf],
            "cross_conf": [list(p) for p in self.cross_conf],
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "DcnSpec":
        try:
            mv = [(d["name"], d.get("card", 2)) for d in doc["metavars"]]
        except (KeyError, TypeError) as e:
            raise SpecError(f"malformed 'metavars' entry: {e}") from None
        pairs = {}
        for field in ("intra_edges", "cross_edges", "intra_conf", "cross_conf"):
            items = doc.get(field, [])
            for i, p in enumerate(items):
                if not isinstance(p, (list, tuple)) or len(p) != 2:
                    raise SpecError(f"{field}[{i}] must be a two-element list, got {p!r}")
            pairs[field] = tuple(tuple(p) for p in items)
        return cls(tuple(mv), **pairs)

    @classmethod
    def load(cls, path) -> "DcnSpec":
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as e:
                raise SpecError(f"{path}: line {e.lineno}: {e.msg}") from None
        try:
            return cls.from_json(doc)
        except SpecError as e:
            raise SpecError(f"{path}: {e}") from None


@dataclass(frozen=True)
class ConfounderClass:
    """Span class of one confounder.

    ``alpha`` counts the slices the confounder touches, ``beta`` the
    longest direct edge span in slices (always 1 in the compact form).
    """

    kind: str
    alpha: int
    beta: int

    @classmethod
    def of(cls, alpha: int, beta: int = 1) -> "ConfounderClass":
        if alpha <= beta:
            kind = STATIC
        elif alpha <= 2 * beta:
            kind = FIRST_ORDER
        else:
            kind = HIGHER_ORDER
        return cls(kind, alpha, beta)


@dataclass(frozen=True)
class Classification:
    per_confounder: Tuple[Tuple[str, Pair, ConfounderClass], ...]
    overall: str

    @property
    def is_static(self) -> bool:
        return self.overall == STATIC


def classify(spec: DcnSpec) -> Classification:
    """Classify every confounder and report the worst class present."""
    out = []
    for p in spec.intra_conf:
        out.append(("intra", p, ConfounderClass.of(1)))
    for p in spec.cross_conf:
        out.append(("cross", p, ConfounderClass.of(2)))
    overall = STATIC
    for _, _, c in out:
        if _RANK[c.kind] > _RANK[overall]:
            overall = c.kind
    return Classification(tuple(out), overall)


def slice_nodes(spec: DcnSpec, t: int) -> List[NodeId]:
    """Nodes of slice ``t`` in declared metavariable order."""
    return [NodeId(n, t) for n in spec.names]


def unroll(spec: DcnSpec, t_from: int, t_to: int) -> Admg:
    """The finite graph over slices ``t_from..t_to``.

    Edges and confounders reaching outside the window are dropped.
    """
    if t_from > t_to:
        raise SpecError(f"empty window: t_from={t_from} > t_to={t_to}")
    ts = range(t_from, t_to + 1)
    nodes = [NodeId(n, t) for t in ts for n in spec.names]
    card = {NodeId(n, t): c for t in ts for n, c in spec.metavars}
    directed = [(NodeId(a, t), NodeId(b, t)) for t in ts for a, b in spec.intra_edges]
    directed += [(NodeId(a, t), NodeId(b, t + 1)) for t in ts[:-1] for a, b in spec.cross_edges]
    bidirected = [(NodeId(a, t), NodeId(b, t)) for t in ts for a, b in spec.intra_conf]
    bidirected += [(NodeId(a, t), NodeId(b, t + 1)) for t in ts[:-1] for a, b in spec.cross_conf]
    return Admg(nodes, directed, bidirected, card)


def dynamic_time_span(spec: DcnSpec, x: Iterable[str], t_x: int = 0) -> int:
    """Furthest slice offset from ``t_x`` linked to ``x`` by confounder chains.

    Raises
    ------
    SpecError
        If the chain reaches some metavariable at two different offsets, in
        which case it continues forever; only finite spans are supported.
    """
    x = [str(v) for v in x]
    for v in x:
        if v not in spec.card:
            raise SpecError(f"unknown metavariable {v!r}")
    adj: Dict[str, List[Tuple[str, int]]] = {n: [] for n in spec.names}
    for a, b in spec.intra_conf:
        adj[a].append((b, 0))
        adj[b].append((a, 0))
    for a, b in spec.cross_conf:
        adj[a].append((b, 1))
        adj[b].append((a, -1))
    span = 0
    # each start is searched on its own: a component of the unrolled confounder
    # graph is infinite exactly when it holds one metavariable at two offsets
    for start in x:
        offset: Dict[str, int] = {start: 0}
        queue = deque([start])
        while queue:
            n = queue.popleft()
            for m, step in adj[n]:
                o = offset[n] + step
                if m in offset:
                    if offset[m] != o:
                        raise SpecError(
                            f"infinite dynamic time span: {m} is confounded with {start} at offsets "
                            f"{offset[m]} and {o}; only finite dynamic time spans are supported"
                        )
                    continue
                offset[m] = o
                queue.append(m)
        span = max(span, max(offset.values()))
    return span


def window_graph(spec: DcnSpec, t_from: int, t_to: int, *, history: bool = False, depth: Optional[int] = None) -> Admg:
    """The graph over slices ``t_from..t_to``.

    With ``history=False`` this is :func:`unroll`. With ``history=True`` the
    slices before ``t_from`` are treated as unobserved and projected out, so
    common causes in the past show up as bidirected edges inside the window.
    ``depth`` bounds how many past slices are unrolled for the projection
    (default ``2 * len(metavars) + 2``).
    """
    if not history:
        return unroll(spec, t_from, t_to)
    if depth is None:
        depth = 2 * len(spec.metavars) + 2
    big = unroll(spec, t_from - depth, t_to)
    latents = [n for n in big.nodes if n.time < t_from]
    directed = list(big.directed)
    nodes = list(big.nodes)
    for a, b in sorted(big.bidirected):
        u = NodeId(f"_L[{a.label}|{b.label}]", a.time)
        nodes.append(u)
        latents.append(u)
        directed += [(u, a), (u, b)]
    return latent_project(nodes, directed, latents, big.card)
