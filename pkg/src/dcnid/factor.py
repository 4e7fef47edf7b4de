"""Named-axis probability tables.

A :class:`Factor` is a dense ``numpy`` array whose axes are labelled by
variables. Products broadcast over the union of labels, marginals sum axes out.
Everything that multiplies conditional probability tables in this package goes
through here.
"""

from __future__ import annotations

from typing import Dict, Hashable, Iterable, Mapping, Sequence, Tuple

import numpy as np

__all__ = ["Factor"]


class Factor:
    __slots__ = ("vars", "values")

    def __init__(self, vars: Sequence[Hashable], values):
        vars = tuple(vars)
        values = np.asarray(values, dtype=float)
        if values.ndim != len(vars):
            raise ValueError(f"factor over {len(vars)} variables given {values.ndim}-d array")
        if len(set(vars)) != len(vars):
            raise ValueError("duplicate variable in factor")
        self.vars = vars
        self.values = values

    @classmethod
    def scalar(cls, v: float) -> "Factor":
        return cls((), np.asarray(float(v)))

    @property
    def card(self) -> Dict[Hashable, int]:
        return dict(zip(self.vars, self.values.shape))

    def __repr__(self) -> str:
        return f"Factor({list(map(str, self.vars))}, shape={self.values.shape})"

    def transpose(self, order: Sequence[Hashable]) -> "Factor":
        order = tuple(order)
        if set(order) != set(self.vars):
            raise ValueError("transpose order must list the same variables")
        return Factor(order, np.transpose(self.values, [self.vars.index(v) for v in order]))

    def expand(self, order: Sequence[Hashable], card: Mapping[Hashable, int]) -> np.ndarray:
        """View of the values broadcastable to the axis layout ``order``."""
        missing = [v for v in self.vars if v not in order]
        if missing:
            raise ValueError(f"cannot expand: {missing} not in target order")
        t = self.transpose([v for v in order if v in self.vars]).values
        shape = [card[v] if v in self.vars else 1 for v in order]
        return t.reshape(shape)

    def _aligned(self, other: "Factor"):
        order = self.vars + tuple(v for v in other.vars if v not in self.vars)
        card = {**other.card, **self.card}
        for v in set(self.vars) & set(other.vars):
            if self.card[v] != other.card[v]:
                raise ValueError(f"cardinality mismatch on {v}")
        return order, card, self.expand(order, card), other.expand(order, card)

    def __mul__(self, other: "Factor") -> "Factor":
        order, card, a, b = self._aligned(other)
        return Factor(order, np.broadcast_to(a * b, [card[v] for v in order]).copy())

    def divide(self, other: "Factor", *, zero_tol: float = 1e-15) -> Tuple["Factor", int]:
        """Entrywise quotient with ``0/0 = 0``.

        Returns the quotient and the number of ``0/0`` entries. A nonzero
        numerator over a zero denominator raises ``ZeroDivisionError``.
        """
        order, card, a, b = self._aligned(other)
        shape = [card[v] for v in order]
        a = np.broadcast_to(a, shape)
        b = np.broadcast_to(b, shape)
        zero = b == 0.0
        if np.any(zero & (np.abs(a) > zero_tol)):
            raise ZeroDivisionError("nonzero numerator over zero denominator")
        out = np.divide(a, b, out=np.zeros(shape), where=~zero)
        return Factor(order, out), int(np.count_nonzero(zero))

    def sum_out(self, vs: Iterable[Hashable]) -> "Factor":
        vs = [v for v in vs if v in self.vars]
        if not vs:
            return self
        axes = tuple(self.vars.index(v) for v in vs)
        keep = tuple(v for v in self.vars if v not in vs)
        return Factor(keep, self.values.sum(axis=axes))

    def marginal(self, keep: Iterable[Hashable]) -> "Factor":
        keep = set(keep)
        return self.sum_out([v for v in self.vars if v not in keep])

    def reduce(self, assignment: Mapping[Hashable, int]) -> "Factor":
        """Fix the listed variables to values, dropping their axes."""
        idx = []
        keep = []
        for v in self.vars:
            if v in assignment:
                idx.append(int(assignment[v]))
            else:
                idx.append(slice(None))
                keep.append(v)
        return Factor(keep, self.values[tuple(idx)])

    def value(self, assignment: Mapping[Hashable, int]) -> float:
        return float(self.values[tuple(int(assignment[v]) for v in self.vars)])
