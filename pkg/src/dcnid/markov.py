"""Slice-state distributions and row-stochastic transition matrices.

States of a slice are indexed mixed-radix over an ordered variable list, the
first variable most significant. Distributions are row vectors and
``entries[i, j] = P(next = j | previous = i)``, so one step is ``p @ T``.
"""

from __future__ import annotations

import csv
import io
import itertools
from bisect import bisect_right
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

__all__ = [
    "MarkovError",
    "StateIndex",
    "TransitionMatrix",
    "StateDistribution",
    "Schedule",
    "step",
    "power",
    "chain",
    "marginalize",
    "restrict_matrix",
    "rollout",
    "read_matrix_csv",
    "write_matrix_csv",
    "read_schedule_csv",
    "write_schedule_csv",
    "read_distribution_csv",
    "write_distribution_csv",
]

ROW_TOL = 1e-9


class MarkovError(ValueError):
    pass


@dataclass(frozen=True)
class StateIndex:
    variables: Tuple[str, ...]
    radix: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(str(v) for v in self.variables))
        object.__setattr__(self, "radix", tuple(int(r) for r in self.radix))
        if len(self.variables) != len(self.radix):
            raise MarkovError("variables and radix differ in length")
        if len(set(self.variables)) != len(self.variables):
            raise MarkovError("duplicate variable in state index")
        if any(r < 1 for r in self.radix):
            raise MarkovError("radix entries must be positive")

    @classmethod
    def binary(cls, variables: Sequence[str]) -> "StateIndex":
        return cls(tuple(variables), (2,) * len(variables))

    @property
    def size(self) -> int:
        return int(np.prod(self.radix, dtype=np.int64)) if self.radix else 1

    def encode(self, assignment: Union[Mapping[str, int], Sequence[int]]) -> int:
        if isinstance(assignment, Mapping):
            try:
                values = [int(assignment[v]) for v in self.variables]
            except KeyError as e:
                raise MarkovError(f"assignment missing variable {e.args[0]!r}") from None
        else:
            values = [int(a) for a in assignment]
        if len(values) != len(self.radix):
            raise MarkovError("assignment length does not match the index")
        for v, r, name in zip(values, self.radix, self.variables):
            if not 0 <= v < r:
                raise MarkovError(f"value {v} out of range for {name}")
        return int(np.ravel_multi_index(values, self.radix)) if self.radix else 0

    def decode(self, i: int) -> Tuple[int, ...]:
        if not 0 <= i < self.size:
            raise MarkovError(f"state {i} out of range")
        return tuple(int(v) for v in np.unravel_index(i, self.radix)) if self.radix else ()

    def states(self) -> List[Tuple[int, ...]]:
        return list(itertools.product(*(range(r) for r in self.radix)))

    def label(self, i: int) -> str:
        return ",".join(f"{n}={v}" for n, v in zip(self.variables, self.decode(i)))

    def labels(self) -> List[str]:
        return [self.label(i) for i in range(self.size)]

    def parse_label(self, text: str) -> int:
        parts = [p.strip() for p in text.split(",") if p.strip()]
        got = {}
        for p in parts:
            name, eq, val = p.partition("=")
            if not eq:
                raise MarkovError(f"bad state label {text!r}")
            got[name.strip()] = int(val)
        if set(got) != set(self.variables):
            raise MarkovError(f"state label {text!r} does not name exactly {list(self.variables)}")
        return self.encode(got)

    def sub(self, keep: Iterable[str]) -> "StateIndex":
        """Index over the kept variables, in this index's order."""
        keep = set(keep)
        unknown = keep - set(self.variables)
        if unknown:
            raise MarkovError(f"unknown variables {sorted(unknown)}")
        vs = [(v, r) for v, r in zip(self.variables, self.radix) if v in keep]
        return StateIndex(tuple(v for v, _ in vs), tuple(r for _, r in vs))

    def to_json(self) -> dict:
        return {"variables": list(self.variables), "radix": list(self.radix)}


class TransitionMatrix:
    """Row-stochastic matrix, ``entries[i, j] = P(next = j | previous = i)``.

    Rows and columns usually share one index; restricted matrices may have
    different row and column variables.
    """

    def __init__(
        self,
        index: StateIndex,
        entries,
        col_index: Optional[StateIndex] = None,
        *,
        tol: float = ROW_TOL,
        diagnostics: Sequence[str] = (),
    ):
        self.index = index
        self.col_index = col_index if col_index is not None else index
        a = np.array(entries, dtype=float)
        if a.shape != (index.size, self.col_index.size):
            raise MarkovError(f"matrix shape {a.shape} does not match index sizes ({index.size}, {self.col_index.size})")
        if np.any(a < -tol) or np.any(a > 1 + tol):
            raise MarkovError("transition entries must lie in [0, 1]")
        sums = a.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
        if bad.size:
            i = int(bad[0])
            raise MarkovError(f"row {index.label(i)!r} sums to {float(sums[i])!r}, expected 1")
        a.setflags(write=False)
        self.entries = a
        self.diagnostics = tuple(diagnostics)

    @classmethod
    def identity(cls, index: StateIndex) -> "TransitionMatrix":
        return cls(index, np.eye(index.size))

    @property
    def square(self) -> bool:
        return self.index == self.col_index

    def __repr__(self) -> str:
        return f"TransitionMatrix({list(self.index.variables)} -> {list(self.col_index.variables)})"

    def __matmul__(self, other: "TransitionMatrix") -> "TransitionMatrix":
        if self.col_index != other.index:
            raise MarkovError("index mismatch in matrix product")
        return TransitionMatrix(self.index, self.entries @ other.entries, other.col_index)

    def allclose(self, other: "TransitionMatrix", atol: float = 1e-9) -> bool:
        return (
            self.index == other.index
            and self.col_index == other.col_index
            and bool(np.allclose(self.entries, other.entries, rtol=0.0, atol=atol))
        )

    def to_json(self) -> dict:
        doc = {"index": self.index.to_json(), "entries": self.entries.tolist()}
        if not self.square:
            doc["col_index"] = self.col_index.to_json()
        if self.diagnostics:
            doc["diagnostics"] = list(self.diagnostics)
        return doc

    @classmethod
    def from_json(cls, doc: Mapping) -> "TransitionMatrix":
        idx = StateIndex(**doc["index"])
        col = StateIndex(**doc["col_index"]) if "col_index" in doc else None
        return cls(idx, doc["entries"], col)


class StateDistribution:
    def __init__(self, index: StateIndex, probs, *, tol: float = ROW_TOL):
        p = np.array(probs, dtype=float).reshape(-1)
        if p.size != index.size:
            raise MarkovError(f"distribution has {p.size} entries, index has {index.size} states")
        if np.any(p < -tol):
            raise MarkovError("distribution has negative entries")
        if abs(p.sum() - 1.0) > tol:
            raise MarkovError(f"distribution sums to {float(p.sum())!r}, expected 1")
        p.setflags(write=False)
        self.index = index
        self.probs = p

    @classmethod
    def uniform(cls, index: StateIndex) -> "StateDistribution":
        return cls(index, np.full(index.size, 1.0 / index.size))

    @classmethod
    def point(cls, index: StateIndex, state: int) -> "StateDistribution":
        p = np.zeros(index.size)
        p[state] = 1.0
        return cls(index, p)

    def mean(self, var: str) -> float:
        """Expected value of one variable (values read as 0, 1, 2, ...)."""
        m = marginalize(self, [var])
        return float(np.dot(np.arange(m.index.size), m.probs))

    def array(self) -> np.ndarray:
        """Probabilities reshaped to one axis per variable."""
        return self.probs.reshape(self.index.radix) if self.index.radix else self.probs.reshape(())

    def __repr__(self) -> str:
        return f"StateDistribution({list(self.index.variables)}, {np.round(self.probs, 6).tolist()})"

    def to_json(self) -> dict:
        return {"index": self.index.to_json(), "probs": self.probs.tolist()}


# -- operations -----------------------------------------------------------------------


def step(p: StateDistribution, t: TransitionMatrix) -> StateDistribution:
    """Distribution of the next slice: ``out[j] = sum_i p[i] t[i, j]``."""
    if p.index != t.index:
        raise MarkovError("distribution and matrix use different state indices")
    out = p.probs @ t.entries
    return StateDistribution(t.col_index, out / out.sum())


def power(t: TransitionMatrix, k: int) -> TransitionMatrix:
    if k < 0:
        raise MarkovError("matrix power must be non-negative")
    if not t.square:
        raise MarkovError("only square transition matrices have powers")
    return TransitionMatrix(t.index, np.linalg.matrix_power(t.entries, k), tol=ROW_TOL * max(1, k))


def chain(mats: Sequence[TransitionMatrix]) -> TransitionMatrix:
    """Compose transitions in time order: ``chain([a, b])`` applies ``a`` first."""
    if not mats:
        raise MarkovError("chain of zero matrices has no index")
    out = mats[0].entries
    for prev, m in zip(mats, mats[1:]):
        if prev.col_index != m.index:
            raise MarkovError("index mismatch in chain")
        out = out @ m.entries
    return TransitionMatrix(mats[0].index, out, mats[-1].col_index, tol=ROW_TOL * len(mats))


def marginalize(p: StateDistribution, keep: Iterable[str]) -> StateDistribution:
    keep = list(keep)
    sub = p.index.sub(keep)
    drop = tuple(i for i, v in enumerate(p.index.variables) if v not in sub.variables)
    arr = p.array().sum(axis=drop) if drop else p.array()
    return StateDistribution(sub, np.asarray(arr).reshape(-1))


def restrict_matrix(
    t: TransitionMatrix,
    keep_rows: Iterable[str],
    keep_cols: Iterable[str],
    p_context: Optional[StateDistribution] = None,
) -> TransitionMatrix:
    """Collapse a transition onto subsets of the row and column variables.

    Rows sharing the kept row values are averaged with weights from
    ``p_context`` (a distribution over ``t``'s row states); dropped column
    variables are summed out. A kept row value with zero context mass gets
    uniform weights and is listed in ``diagnostics``.
    """
    ri = t.index.sub(keep_rows)
    ci = t.col_index.sub(keep_cols)
    if p_context is None:
        w = np.full(t.index.size, 1.0 / t.index.size)
    else:
        if p_context.index != t.index:
            raise MarkovError("context distribution uses a different state index")
        w = np.asarray(p_context.probs)
    rpos = [t.index.variables.index(v) for v in ri.variables]
    cpos = [t.col_index.variables.index(v) for v in ci.variables]
    rowmap = np.array([ri.encode([t.index.decode(i)[k] for k in rpos]) for i in range(t.index.size)], dtype=int)
    colmap = np.array(
        [ci.encode([t.col_index.decode(j)[k] for k in cpos]) for j in range(t.col_index.size)], dtype=int
    )
    # sum columns into kept column states
    colsum = np.zeros((t.index.size, ci.size))
    np.add.at(colsum.T, colmap, t.entries.T)
    out = np.zeros((ri.size, ci.size))
    mass = np.zeros(ri.size)
    np.add.at(out, rowmap, colsum * w[:, None])
    np.add.at(mass, rowmap, w)
    diags = []
    for r in range(ri.size):
        if mass[r] > 0:
            out[r] /= mass[r]
        else:
            members = rowmap == r
            out[r] = colsum[members].mean(axis=0)
            diags.append(f"row {ri.label(r)!r} has zero context mass; rows averaged uniformly")
    return TransitionMatrix(ri, out, ci, diagnostics=diags)


# -- schedules ------------------------------------------------------------------------


class Schedule:
    """Transition matrices keyed by slice; ``at(t)`` maps slice ``t`` to ``t+1``.

    A slice without its own matrix uses the latest keyed slice at or before
    it, or the earliest one if it precedes every key.
    """

    def __init__(self, mats: Union[TransitionMatrix, Mapping[int, TransitionMatrix]]):
        if isinstance(mats, TransitionMatrix):
            mats = {0: mats}
        if not mats:
            raise MarkovError("schedule needs at least one matrix")
        self.keys = sorted(int(k) for k in mats)
        self.mats = {int(k): v for k, v in mats.items()}
        idx = {m.index for m in self.mats.values()} | {m.col_index for m in self.mats.values()}
        if len(idx) != 1:
            raise MarkovError("schedule matrices use different state indices")
        self.index = next(iter(idx))

    @classmethod
    def constant(cls, t: TransitionMatrix) -> "Schedule":
        return cls(t)

    def at(self, t: int) -> TransitionMatrix:
        i = bisect_right(self.keys, t) - 1
        return self.mats[self.keys[max(i, 0)]]

    def span(self, t_from: int, t_to: int) -> TransitionMatrix:
        """Composite transition from slice ``t_from`` to slice ``t_to``."""
        if t_to < t_from:
            raise MarkovError("span end precedes its start")
        if t_to == t_from:
            return TransitionMatrix.identity(self.index)
        return chain([self.at(t) for t in range(t_from, t_to)])


def rollout(p0: StateDistribution, schedule: Schedule, t0: int, t_end: int) -> List[StateDistribution]:
    """``[P(V_t0), ..., P(V_t_end)]`` under the natural dynamics."""
    out = [p0]
    for t in range(t0, t_end):
        out.append(step(out[-1], schedule.at(t)))
    return out


# -- CSV ------------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def _index_from_labels(labels: Sequence[str], where: str) -> StateIndex:
    """Recover a binary-or-wider index from ``"a=0,b=1"`` labels in enumeration order."""
    rows = []
    for lab in labels:
        parts = [p.strip() for p in lab.split(",") if p.strip()]
        try:
            rows.append([(n.strip(), int(v)) for n, _, v in (p.partition("=") for p in parts)])
        except ValueError:
            raise MarkovError(f"{where}: bad state label {lab!r}") from None
    if not rows:
        raise MarkovError(f"{where}: no states")
    names = tuple(n for n, _ in rows[0])
    radix = tuple(max(r[k][1] for r in rows) + 1 for k in range(len(names)))
    idx = StateIndex(names, radix)
    for i, r in enumerate(rows):
        if tuple(n for n, _ in r) != names or idx.encode([v for _, v in r]) != i:
            raise MarkovError(f"{where}: state label {labels[i]!r} out of enumeration order")
    return idx


def write_matrix_csv(t: TransitionMatrix, fh=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["state"] + t.col_index.labels())
    for i in range(t.index.size):
        w.writerow([t.index.label(i)] + [_fmt(x) for x in t.entries[i]])
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def _read_rows(text: str, where: str) -> List[List[str]]:
    return [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]


def _floats(cells: Sequence[str], where: str, line: int) -> List[float]:
    out = []
    for k, c in enumerate(cells):
        try:
            out.append(float(c))
        except ValueError:
            raise MarkovError(f"{where}: line {line}: column {k + 2}: not a number: {c!r}") from None
    return out


def read_matrix_csv(text: str, where: str = "<matrix>") -> TransitionMatrix:
    rows = _read_rows(text, where)
    if len(rows) < 2:
        raise MarkovError(f"{where}: expected a header and at least one row")
    col = _index_from_labels(rows[0][1:], f"{where}: line 1")
    row = _index_from_labels([r[0] for r in rows[1:]], where)
    entries = [_floats(r[1:], where, i + 2) for i, r in enumerate(rows[1:])]
    try:
        return TransitionMatrix(row, entries, col if col != row else None)
    except MarkovError as e:
        raise MarkovError(f"{where}: {e}") from None


def write_schedule_csv(schedule: Schedule, fh=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["slice", "state"] + schedule.index.labels())
    for k in schedule.keys:
        m = schedule.mats[k]
        for i in range(m.index.size):
            w.writerow([k, m.index.label(i)] + [_fmt(x) for x in m.entries[i]])
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def read_schedule_csv(text: str, where: str = "<schedule>") -> Schedule:
    """Rows ``slice,state,<probabilities>``; a header row names the column states."""
    rows = _read_rows(text, where)
    if len(rows) < 2 or [c.strip() for c in rows[0][:2]] != ["slice", "state"]:
        raise MarkovError(f"{where}: line 1: header must start with 'slice,state'")
    col = _index_from_labels(rows[0][2:], f"{where}: line 1")
    groups: Dict[int, List[Tuple[int, List[str]]]] = {}
    for n, r in enumerate(rows[1:], start=2):
        try:
            k = int(r[0])
        except ValueError:
            raise MarkovError(f"{where}: line {n}: column 1: slice must be an integer, got {r[0]!r}") from None
        groups.setdefault(k, []).append((n, r))
    mats = {}
    for k, items in groups.items():
        labels = [r[1] for _, r in items]
        row = _index_from_labels(labels, f"{where}: slice {k}")
        entries = [_floats(r[2:], where, n) for n, r in items]
        try:
            mats[k] = TransitionMatrix(row, entries, col if col != row else None)
        except MarkovError as e:
            raise MarkovError(f"{where}: slice {k}: {e}") from None
    return Schedule(mats)


def write_distribution_csv(p: StateDistribution, fh=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["state", "prob"])
    for i in range(p.index.size):
        w.writerow([p.index.label(i), _fmt(p.probs[i])])
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def read_distribution_csv(text: str, where: str = "<distribution>") -> StateDistribution:
    rows = _read_rows(text, where)
    if not rows or [c.strip() for c in rows[0]] != ["state", "prob"]:
        raise MarkovError(f"{where}: line 1: header must be 'state,prob'")
    idx = _index_from_labels([r[0] for r in rows[1:]], where)
    probs = []
    for n, r in enumerate(rows[1:], start=2):
        if len(r) != 2:
            raise MarkovError(f"{where}: line {n}: expected 2 columns, got {len(r)}")
        probs.extend(_floats(r[1:], where, n))
    try:
        return StateDistribution(idx, probs)
    except MarkovError as e:
        raise MarkovError(f"{where}: {e}") from None
