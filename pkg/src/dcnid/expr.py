"""Symbolic probability expressions and their exact evaluation.

Identification returns trees built from five node kinds:

``ObsFactor``            observational conditional ``P(targets | conditions)``
``InterventionalAtom``   ``P_domain(targets | do(...), conditions)``, used by transport
``Product``              product of sub-expressions
``Quotient``             ratio of two sub-expressions
``SumOver``              marginalization over a set of variables

Evaluation is tensor based: each node becomes a :class:`~dcnid.factor.Factor`
over its free variables, so one pass yields the value at every assignment.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .factor import Factor
from .graph import NodeId, node

__all__ = [
    "ObsFactor",
    "InterventionalAtom",
    "Product",
    "Quotient",
    "SumOver",
    "ProbExpr",
    "JointTable",
    "Experiments",
    "EvaluationError",
    "Evaluator",
    "evaluate",
    "evaluate_factor",
    "free_variables",
    "render",
    "parse",
    "to_json",
    "from_json",
    "atoms",
    "sum_over",
    "product",
]


class EvaluationError(ValueError):
    pass


def _vs(xs) -> FrozenSet[NodeId]:
    if isinstance(xs, (str, NodeId)):
        xs = [xs]
    return frozenset(node(x) for x in xs)


@dataclass(frozen=True)
class ObsFactor:
    targets: FrozenSet[NodeId]
    conditions: FrozenSet[NodeId] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "targets", _vs(self.targets))
        object.__setattr__(self, "conditions", _vs(self.conditions))
        if self.targets & self.conditions:
            raise ValueError("ObsFactor targets and conditions must be disjoint")


@dataclass(frozen=True)
class InterventionalAtom:
    domain: str
    targets: FrozenSet[NodeId]
    do: FrozenSet[NodeId]
    conditions: FrozenSet[NodeId] = frozenset()

    def __post_init__(self):
        for f in ("targets", "do", "conditions"):
            object.__setattr__(self, f, _vs(getattr(self, f)))
        if (self.targets & self.do) or (self.targets & self.conditions) or (self.do & self.conditions):
            raise ValueError("InterventionalAtom variable sets must be disjoint")


@dataclass(frozen=True)
class Product:
    terms: Tuple["ProbExpr", ...] = ()

    def __post_init__(self):
        flat: List[ProbExpr] = []
        for t in self.terms:
            if isinstance(t, Product):
                flat.extend(t.terms)
            else:
                flat.append(t)
        object.__setattr__(self, "terms", tuple(flat))


@dataclass(frozen=True)
class Quotient:
    num: "ProbExpr"
    den: "ProbExpr"


@dataclass(frozen=True)
class SumOver:
    vars: FrozenSet[NodeId]
    body: "ProbExpr"

    def __post_init__(self):
        object.__setattr__(self, "vars", _vs(self.vars))


ProbExpr = Union[ObsFactor, InterventionalAtom, Product, Quotient, SumOver]


def sum_over(vars, body: ProbExpr) -> ProbExpr:
    vars = _vs(vars)
    return SumOver(vars, body) if vars else body


def product(terms: Iterable[ProbExpr]) -> ProbExpr:
    p = Product(tuple(terms))
    return p.terms[0] if len(p.terms) == 1 else p


# -- structural queries -------------------------------------------------------------


def free_variables(e: ProbExpr) -> FrozenSet[NodeId]:
    """Variables mentioned in ``e`` that no enclosing ``SumOver`` binds."""
    if isinstance(e, ObsFactor):
        return e.targets | e.conditions
    if isinstance(e, InterventionalAtom):
        return e.targets | e.do | e.conditions
    if isinstance(e, Product):
        return frozenset().union(*(free_variables(t) for t in e.terms))
    if isinstance(e, Quotient):
        return free_variables(e.num) | free_variables(e.den)
    if isinstance(e, SumOver):
        return free_variables(e.body) - e.vars
    raise TypeError(f"not a probability expression: {e!r}")


def atoms(e: ProbExpr) -> Iterator[Union[ObsFactor, InterventionalAtom]]:
    if isinstance(e, (ObsFactor, InterventionalAtom)):
        yield e
    elif isinstance(e, Product):
        for t in e.terms:
            yield from atoms(t)
    elif isinstance(e, Quotient):
        yield from atoms(e.num)
        yield from atoms(e.den)
    elif isinstance(e, SumOver):
        yield from atoms(e.body)
    else:
        raise TypeError(f"not a probability expression: {e!r}")


# -- joint tables ---------------------------------------------------------------------


class JointTable:
    """Dense joint distribution over an ordered variable list.

    ``probs`` is indexed mixed-radix with the first variable most significant,
    which is exactly C-order on the array of shape ``cards``.
    """

    def __init__(self, variables: Sequence, probs, cards: Optional[Sequence[int]] = None, *, atol: float = 1e-9):
        self.variables: Tuple[NodeId, ...] = tuple(node(v) for v in variables)
        arr = np.asarray(probs, dtype=float)
        if cards is None:
            cards = arr.shape if arr.ndim == len(self.variables) else [2] * len(self.variables)
        self.cards: Tuple[int, ...] = tuple(int(c) for c in cards)
        arr = arr.reshape(self.cards)
        if np.any(arr < -atol):
            raise ValueError("joint table has negative entries")
        if abs(arr.sum() - 1.0) > atol:
            raise ValueError(f"joint table sums to {float(arr.sum())!r}, expected 1")
        self.array = np.clip(arr, 0.0, None)

    @property
    def probs(self) -> np.ndarray:
        return self.array.reshape(-1)

    @classmethod
    def from_factor(cls, f: Factor, order: Optional[Sequence] = None, **kw) -> "JointTable":
        if order is not None:
            f = f.transpose([node(v) for v in order])
        return cls(f.vars, f.values, f.values.shape, **kw)

    def factor(self) -> Factor:
        return Factor(self.variables, self.array)

    def card(self) -> Dict[NodeId, int]:
        return dict(zip(self.variables, self.cards))

    def marginal(self, keep: Iterable) -> Factor:
        keep = _vs(keep)
        missing = keep - set(self.variables)
        if missing:
            raise EvaluationError(f"variables {sorted(map(str, missing))} not in joint table")
        return self.factor().marginal(keep)

    def __repr__(self) -> str:
        return f"JointTable({[str(v) for v in self.variables]})"


class Experiments:
    """Interventional joint tables from one domain, keyed by intervention value.

    ``tables[(v1, v2, ...)]`` is the joint under ``do(x1=v1, x2=v2, ...)``
    with ``do_vars`` giving the ``x`` order.
    """

    def __init__(self, do_vars: Sequence, tables: Mapping[Tuple[int, ...], JointTable]):
        self.do_vars: Tuple[NodeId, ...] = tuple(node(v) for v in do_vars)
        self.tables = {tuple(int(i) for i in k): v for k, v in tables.items()}

    def table(self, value: Tuple[int, ...]) -> JointTable:
        try:
            return self.tables[tuple(value)]
        except KeyError:
            raise EvaluationError(f"no interventional table for do({self.do_vars}={value})") from None


# -- evaluation -----------------------------------------------------------------------


class Evaluator:
    """Evaluates expressions against an observational table plus optional
    interventional tables (``experiments[domain]``).

    ``zero_divisions`` counts ``0/0`` entries encountered, which evaluate to 0.
    """

    def __init__(self, p: JointTable, experiments: Optional[Mapping[str, Experiments]] = None):
        self.p = p
        self.experiments = dict(experiments or {})
        self.card = p.card()
        for ex in self.experiments.values():
            for t in ex.tables.values():
                for v, c in t.card().items():
                    self.card.setdefault(v, c)
        self.zero_divisions = 0
        self._marg: Dict[FrozenSet[NodeId], Factor] = {}
        self._cache: Dict[int, Tuple[ProbExpr, Factor]] = {}

    def _marginal(self, vs: FrozenSet[NodeId]) -> Factor:
        f = self._marg.get(vs)
        if f is None:
            f = self.p.marginal(vs)
            self._marg[vs] = f
        return f

    def _div(self, a: Factor, b: Factor) -> Factor:
        try:
            q, z = a.divide(b)
        except ZeroDivisionError as e:
            raise EvaluationError(str(e)) from None
        self.zero_divisions += z
        return q

    def factor(self, e: ProbExpr) -> Factor:
        hit = self._cache.get(id(e))
        if hit is not None and hit[0] is e:
            return hit[1]
        out = self._factor(e)
        self._cache[id(e)] = (e, out)
        return out

    def _factor(self, e: ProbExpr) -> Factor:
        if isinstance(e, ObsFactor):
            return self._div(self._marginal(e.targets | e.conditions), self._marginal(e.conditions))
        if isinstance(e, InterventionalAtom):
            return self._interventional(e)
        if isinstance(e, Product):
            out = Factor.scalar(1.0)
            for t in e.terms:
                out = out * self.factor(t)
            return out
        if isinstance(e, Quotient):
            return self._div(self.factor(e.num), self.factor(e.den))
        if isinstance(e, SumOver):
            body = self.factor(e.body)
            out = body.sum_out(e.vars)
            # summing over a variable the body ignores multiplies by its domain size
            for v in e.vars:
                if v not in body.vars:
                    out = Factor(out.vars, out.values * self.card[v])
            return out
        raise TypeError(f"not a probability expression: {e!r}")

    def _interventional(self, e: InterventionalAtom) -> Factor:
        ex = self.experiments.get(e.domain)
        if ex is None:
            raise EvaluationError(f"no interventional tables supplied for domain {e.domain!r}")
        if set(e.do) != set(ex.do_vars):
            raise EvaluationError(
                f"{e.domain!r} experiments intervene on {sorted(map(str, ex.do_vars))}, "
                f"expression needs {sorted(map(str, e.do))}"
            )
        do_order = ex.do_vars
        do_cards = [self.card[v] for v in do_order]
        inner_vars = None
        slabs = []
        for value in np.ndindex(*do_cards):
            t = ex.table(value)
            num = t.marginal(e.targets | e.conditions)
            den = t.marginal(e.conditions)
            q = self._div(num, den)
            if inner_vars is None:
                inner_vars = q.vars
            slabs.append(q.transpose(inner_vars).values)
        arr = np.stack(slabs).reshape(tuple(do_cards) + slabs[0].shape)
        return Factor(tuple(do_order) + tuple(inner_vars), arr)


def evaluate_factor(e: ProbExpr, p: JointTable, experiments: Optional[Mapping[str, Experiments]] = None) -> Factor:
    """Value of ``e`` at every assignment of its free variables."""
    return Evaluator(p, experiments).factor(e)


def evaluate(
    e: ProbExpr,
    p: JointTable,
    assignment: Mapping,
    experiments: Optional[Mapping[str, Experiments]] = None,
) -> float:
    """Value of ``e`` at one assignment of its free variables."""
    assignment = {node(k): int(v) for k, v in assignment.items()}
    unbound = free_variables(e) - set(assignment)
    if unbound:
        raise EvaluationError(f"unbound free variables: {sorted(map(str, unbound))}")
    f = Evaluator(p, experiments).factor(e)
    return f.value(assignment)


# -- rendering ------------------------------------------------------------------------


def _names(vs: Iterable[NodeId]) -> str:
    return ",".join(str(v) for v in sorted(vs))


def _is_atom(e: ProbExpr) -> bool:
    return isinstance(e, (ObsFactor, InterventionalAtom, SumOver))


def render(e: ProbExpr) -> str:
    """ASCII rendering, e.g. ``sum_{z} (P(y|x,z) * P(z))``."""
    if isinstance(e, ObsFactor):
        if e.conditions:
            return f"P({_names(e.targets)}|{_names(e.conditions)})"
        return f"P({_names(e.targets)})"
    if isinstance(e, InterventionalAtom):
        cond = f"do({_names(e.do)})"
        if e.conditions:
            cond += "," + _names(e.conditions)
        return f"P_{{{e.domain}}}({_names(e.targets)}|{cond})"
    if isinstance(e, Product):
        if not e.terms:
            return "1"
        return " * ".join(render(t) if _is_atom(t) else f"({render(t)})" for t in e.terms)
    if isinstance(e, Quotient):
        num = render(e.num) if isinstance(e.num, (ObsFactor, InterventionalAtom, SumOver, Product)) else f"({render(e.num)})"
        den = render(e.den) if _is_atom(e.den) else f"({render(e.den)})"
        return f"{num} / {den}"
    if isinstance(e, SumOver):
        return f"sum_{{{_names(e.vars)}}} ({render(e.body)})"
    raise TypeError(f"not a probability expression: {e!r}")


_TOKEN = re.compile(r"\s*(sum_\{|P_\{|do\(|P\(|[()|,*/}]|1(?![\w@])|[A-Za-z_][\w.]*(?:@-?\d+)?)")


class _Parser:
    def __init__(self, text: str):
        self.toks: List[str] = []
        pos = 0
        text = text.rstrip()
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if not m:
                raise ValueError(f"unexpected input at {pos}: {text[pos:pos + 20]!r}")
            self.toks.append(m.group(1))
            pos = m.end()
        self.i = 0

    def peek(self) -> Optional[str]:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self, expect: Optional[str] = None) -> str:
        t = self.peek()
        if t is None or (expect is not None and t != expect):
            raise ValueError(f"expected {expect!r}, found {t!r}")
        self.i += 1
        return t

    def names(self, stop: Sequence[str]) -> FrozenSet[NodeId]:
        out = []
        while self.peek() not in stop:
            out.append(NodeId.parse(self.take()))
            if self.peek() == ",":
                self.take(",")
        return frozenset(out)

    def expr(self) -> ProbExpr:
        num = self.prod()
        if self.peek() == "/":
            self.take("/")
            return Quotient(num, self.prod())
        return num

    def prod(self) -> ProbExpr:
        terms = [self.unit()]
        while self.peek() == "*":
            self.take("*")
            terms.append(self.unit())
        return terms[0] if len(terms) == 1 else Product(tuple(terms))

    def unit(self) -> ProbExpr:
        t = self.peek()
        if t == "1":
            self.take()
            return Product(())
        if t == "(":
            self.take("(")
            e = self.expr()
            self.take(")")
            return e
        if t == "sum_{":
            self.take()
            vs = self.names(["}"])
            self.take("}")
            self.take("(")
            body = self.expr()
            self.take(")")
            return SumOver(vs, body)
        if t == "P(":
            self.take()
            tg = self.names(["|", ")"])
            cond: FrozenSet[NodeId] = frozenset()
            if self.peek() == "|":
                self.take("|")
                cond = self.names([")"])
            self.take(")")
            return ObsFactor(tg, cond)
        if t == "P_{":
            self.take()
            dom = self.take()
            self.take("}")
            self.take("(")
            tg = self.names(["|"])
            self.take("|")
            self.take("do(")
            do = self.names([")"])
            self.take(")")
            cond = frozenset()
            if self.peek() == ",":
                self.take(",")
                cond = self.names([")"])
            self.take(")")
            return InterventionalAtom(dom, tg, do, cond)
        raise ValueError(f"unexpected token {t!r}")


def parse(text: str) -> ProbExpr:
    """Inverse of :func:`render`."""
    p = _Parser(text)
    e = p.expr()
    if p.peek() is not None:
        raise ValueError(f"trailing input starting at token {p.peek()!r}")
    return e


# -- JSON -----------------------------------------------------------------------------


def _labels(vs) -> List[str]:
    return [v.label for v in sorted(vs)]


def to_json(e: ProbExpr) -> dict:
    if isinstance(e, ObsFactor):
        return {"type": "obs", "targets": _labels(e.targets), "conditions": _labels(e.conditions)}
    if isinstance(e, InterventionalAtom):
        return {
            "type": "do",
            "domain": e.domain,
            "targets": _labels(e.targets),
            "do": _labels(e.do),
            "conditions": _labels(e.conditions),
        }
    if isinstance(e, Product):
        return {"type": "product", "terms": [to_json(t) for t in e.terms]}
    if isinstance(e, Quotient):
        return {"type": "quotient", "num": to_json(e.num), "den": to_json(e.den)}
    if isinstance(e, SumOver):
        return {"type": "sum", "vars": _labels(e.vars), "body": to_json(e.body)}
    raise TypeError(f"not a probability expression: {e!r}")


def from_json(doc: Mapping) -> ProbExpr:
    kind = doc.get("type")
    if kind == "obs":
        return ObsFactor(_vs(doc["targets"]), _vs(doc.get("conditions", [])))
    if kind == "do":
        return InterventionalAtom(doc["domain"], _vs(doc["targets"]), _vs(doc["do"]), _vs(doc.get("conditions", [])))
    if kind == "product":
        return Product(tuple(from_json(t) for t in doc["terms"]))
    if kind == "quotient":
        return Quotient(from_json(doc["num"]), from_json(doc["den"]))
    if kind == "sum":
        return SumOver(_vs(doc["vars"]), from_json(doc["body"]))
    raise ValueError(f"unknown expression node type {kind!r}")
