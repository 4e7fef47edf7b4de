"""Effects of a one-slice intervention on a dynamic causal network.

The common shape of every pipeline here:

1. roll the natural chain forward to the slice before the intervention;
2. identify a two-step interventional transition ``A`` on a small window of
   slices around ``t_x`` and evaluate it into a matrix;
3. keep propagating, with the natural transitions when confounders are static
   or with per-slice identified matrices ``M_t`` when they span slices;
4. marginalize onto the outcome variables.

The ``cdcn_*`` variants restrict every step to ancestors of the outcome, which
succeeds on strictly more queries.

Static pipelines build the window's observational joint from the transition
schedule alone. Pipelines for confounders that span slices need the real
window joints, supplied by an ``observations(t_from, t_to)`` callable.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .expr import Evaluator, Experiments, JointTable, ProbExpr, free_variables, render, to_json
from .graph import Admg, NodeId, ancestors
from .identification import (
    SelectionDiagram,
    Unidentifiable,
    identify,
    identify_conditional,
    transport_conditional,
)
from .markov import (
    MarkovError,
    Schedule,
    StateDistribution,
    StateIndex,
    TransitionMatrix,
    marginalize,
    restrict_matrix,
    rollout,
    step,
)
from .model import DcnSpec, SpecError, classify, dynamic_time_span, slice_nodes, unroll, window_graph

__all__ = [
    "PipelineError",
    "WindowError",
    "DcnQuery",
    "PipelineResult",
    "Observations",
    "as_schedule",
    "synthetic_window",
    "build_a_matrix",
    "dcn_id_static",
    "dcn_id_dynamic",
    "cdcn_id_static",
    "cdcn_id_dynamic",
    "dcn_sid",
    "trajectory",
    "full_graph_effect",
    "source_kernel",
    "source_experiments_to_json",
    "source_experiments_from_json",
]

Observations = Callable[[int, int], JointTable]


class PipelineError(ValueError):
    pass


class WindowError(PipelineError):
    """The intervention is too close to the first slice for the window."""


@dataclass(frozen=True)
class DcnQuery:
    """``P(y@t_y | do(x@t_x = value))`` for metavariable sets ``x`` and ``y``."""

    y: Tuple[str, ...]
    t_y: int
    x: Tuple[str, ...]
    t_x: int
    intervention_value: Optional[Tuple[Tuple[str, int], ...]] = None

    def __post_init__(self):
        y = tuple(sorted({str(v) for v in ([self.y] if isinstance(self.y, str) else self.y)}))
        x = tuple(sorted({str(v) for v in ([self.x] if isinstance(self.x, str) else self.x)}))
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        if not y or not x:
            raise PipelineError("query needs nonempty x and y")
        iv = self.intervention_value
        if iv is not None:
            iv = dict(iv) if not isinstance(iv, Mapping) else iv
            if set(iv) != set(x):
                raise PipelineError(f"intervention value must assign exactly {list(x)}")
            object.__setattr__(self, "intervention_value", tuple(sorted((str(k), int(v)) for k, v in iv.items())))

    def x_nodes(self) -> List[NodeId]:
        return [NodeId(v, self.t_x) for v in self.x]

    def with_value(self, value: Mapping[str, int]) -> "DcnQuery":
        return DcnQuery(self.y, self.t_y, self.x, self.t_x, tuple(sorted(value.items())))

    def to_json(self) -> dict:
        return {
            "y": list(self.y),
            "t_y": self.t_y,
            "x": list(self.x),
            "t_x": self.t_x,
            "intervention_value": dict(self.intervention_value) if self.intervention_value else None,
        }


@dataclass
class PipelineResult:
    query: DcnQuery
    symbolic: Optional[ProbExpr]
    a_matrix: Optional[TransitionMatrix]
    m_matrices: List[TransitionMatrix]
    distribution: StateDistribution
    trajectory: Optional[List[Optional[StateDistribution]]] = None
    t0: int = 0
    method: str = ""
    diagnostics: List[str] = field(default_factory=list)

    @property
    def x_value(self) -> Dict[str, int]:
        return dict(self.query.intervention_value or ())

    def to_json(self) -> dict:
        doc = {
            "method": self.method,
            "query": self.query.to_json(),
            "t0": self.t0,
            "expression": render(self.symbolic) if self.symbolic is not None else None,
            "expression_tree": to_json(self.symbolic) if self.symbolic is not None else None,
            "a_matrix": self.a_matrix.to_json() if self.a_matrix is not None else None,
            "m_matrices": [m.to_json() for m in self.m_matrices],
            "distribution": self.distribution.to_json(),
            "diagnostics": list(self.diagnostics),
        }
        if self.trajectory is not None:
            doc["trajectory"] = [p.to_json() if p is not None else None for p in self.trajectory]
        return doc


# -- helpers ----------------------------------------------------------------------------


def as_schedule(t_series) -> Schedule:
    if isinstance(t_series, Schedule):
        return t_series
    if isinstance(t_series, TransitionMatrix):
        return Schedule(t_series)
    return Schedule(dict(t_series))


def _index(spec: DcnSpec, names: Optional[Sequence[str]] = None) -> StateIndex:
    full = StateIndex(spec.names, tuple(c for _, c in spec.metavars))
    return full if names is None else full.sub(names)


def _check(spec: DcnSpec, query: DcnQuery, sched: Schedule, p0: StateDistribution, t0: int) -> None:
    for v in query.x + query.y:
        if v not in spec.card:
            raise PipelineError(f"unknown metavariable {v!r}")
    idx = _index(spec)
    if sched.index != idx:
        raise PipelineError(
            f"schedule state index {list(sched.index.variables)} does not match the spec's {list(idx.variables)}"
        )
    if p0.index != idx:
        raise PipelineError("initial distribution uses a different state index than the spec")
    if query.t_x == query.t_y:
        raise PipelineError("t_y must differ from t_x")
    if query.t_x < t0 + 2 and query.t_y > query.t_x:
        raise WindowError(
            f"intervention at t_x={query.t_x} needs slices from t_x-2 but the first slice is t0={t0}; "
            f"step the initial distribution forward or move t0 back by {t0 + 2 - query.t_x}"
        )


def synthetic_window(spec: DcnSpec, sched: Schedule, t_from: int, t_to: int) -> JointTable:
    """Window joint consistent with the schedule and uniform over its first two slices.

    Under static confounders the identified window quantities condition on
    the second slice, so any positive context gives the same answer; uniform
    keeps every row defined.
    """
    if t_to < t_from + 1:
        raise PipelineError("synthetic window needs at least two slices")
    idx = _index(spec)
    n = idx.size
    arr = np.full((n, n), 1.0 / (n * n))
    for t in range(t_from + 1, t_to):
        arr = arr[..., :, None] * sched.at(t).entries.reshape((1,) * (arr.ndim - 1) + (n, n))
    nodes = [v for t in range(t_from, t_to + 1) for v in slice_nodes(spec, t)]
    return JointTable(nodes, arr.reshape(-1), list(idx.radix) * (t_to - t_from + 1))


def _resolve_rows(
    sub: np.ndarray, weights: np.ndarray, tol: float, where: str, diagnostics: Optional[List[str]]
) -> np.ndarray:
    """Collapse trailing axes of ``sub`` (rows, cols, extra) onto one stochastic row each.

    The extra axes are variables that ID moved into the intervention set
    because they cannot affect the outcome; the true value is the same for
    all of them, but zero-probability regions can leave some undefined. Valid
    candidates (rows summing to one) are averaged by observational weight.
    """
    r, c, e = sub.shape
    out = np.zeros((r, c))
    spread = 0.0
    for i in range(r):
        cand = sub[i].T
        ok = np.abs(cand.sum(axis=1) - 1.0) <= tol
        ok &= np.all(cand >= -tol, axis=1)
        if not ok.any():
            raise PipelineError(f"{where}: row {i} is undefined for every value of the dropped intervention variables")
        w = weights[i] * ok
        w = w / w.sum() if w.sum() > 0 else ok / ok.sum()
        out[i] = w @ cand
        spread = max(spread, float(np.abs(cand[ok] - out[i]).max()))
    if diagnostics is not None and spread > 1e-9:
        diagnostics.append(f"{where}: entries vary by {spread:.3g} across dropped intervention variables")
    return out


def build_a_matrix(
    expr: ProbExpr,
    window_joint: JointTable,
    row_slice: Sequence[NodeId],
    col_slice: Sequence[NodeId],
    value: Optional[Mapping[NodeId, int]] = None,
    *,
    x_nodes: Optional[Sequence[NodeId]] = None,
    experiments: Optional[Mapping[str, Experiments]] = None,
    diagnostics: Optional[List[str]] = None,
    tol: float = 1e-9,
) -> Union[TransitionMatrix, Dict[Tuple[int, ...], TransitionMatrix]]:
    """Evaluate a window expression into a transition matrix.

    ``entry[i, j]`` is ``expr`` at row-slice state ``i`` and column-slice
    state ``j``. With ``value`` the intervened variables are fixed to it;
    without, one matrix per joint value of ``x_nodes`` is returned, keyed by
    the value tuple. Any other free variable must be one that identification
    added to the intervention set; see :func:`_resolve_rows`.
    """
    row_slice, col_slice = list(row_slice), list(col_slice)
    if set(row_slice) & set(col_slice):
        raise PipelineError("row and column slices overlap")
    if x_nodes is None:
        x_nodes = sorted(free_variables(expr) - set(row_slice) - set(col_slice))
        if value is not None:
            x_nodes = sorted(set(x_nodes) | {NodeId.parse(str(k)) if not isinstance(k, NodeId) else k for k in value})
    x_nodes = list(x_nodes)
    ev = Evaluator(window_joint, experiments)
    f = ev.factor(expr)
    card = dict(ev.card)
    extra = sorted(v for v in f.vars if v not in set(row_slice) | set(col_slice) | set(x_nodes))
    order = row_slice + col_slice + x_nodes + extra
    for v in order:
        if v not in card:
            raise PipelineError(f"variable {v} missing from the window joint")
    grid = np.broadcast_to(f.expand(order, card), [card[v] for v in order])
    rows = StateIndex(tuple(v.name for v in row_slice), tuple(card[v] for v in row_slice))
    cols = StateIndex(tuple(v.name for v in col_slice), tuple(card[v] for v in col_slice))
    n_extra = int(np.prod([card[v] for v in extra])) if extra else 1
    if extra:
        known = set(window_joint.variables)
        if set(extra) <= known:
            wts = window_joint.marginal(row_slice + extra).expand(row_slice + extra, card)
            wts = np.asarray(wts).reshape(rows.size, n_extra)
        else:
            wts = np.ones((rows.size, n_extra))
    if diagnostics is not None and ev.zero_divisions:
        diagnostics.append(f"{ev.zero_divisions} zero-over-zero entries evaluated as 0")

    def matrix(vals: Tuple[int, ...]) -> TransitionMatrix:
        where = "A matrix for do(" + ",".join(f"{v}={x}" for v, x in zip(x_nodes, vals)) + ")"
        sub = grid[(slice(None),) * (len(row_slice) + len(col_slice)) + tuple(vals)]
        sub = np.asarray(sub).reshape(rows.size, cols.size, n_extra)
        entries = _resolve_rows(sub, wts, 1e-6, where, diagnostics) if extra else sub[:, :, 0]
        try:
            return TransitionMatrix(rows, entries, cols if cols != rows else None, tol=max(tol, 1e-6))
        except MarkovError as e:
            raise PipelineError(f"{where} is not stochastic: {e}") from None

    if value is not None:
        val = {(k if isinstance(k, NodeId) else NodeId.parse(str(k))): int(v) for k, v in value.items()}
        return matrix(tuple(val[v] for v in x_nodes))
    return {vals: matrix(vals) for vals in itertools.product(*(range(card[v]) for v in x_nodes))}


_ID_CACHE: Dict[tuple, ProbExpr] = {}


def _identify_window(g: Admg, y, z, x, stage: str) -> ProbExpr:
    """Memoized :func:`identify_conditional`; failures are tagged with ``stage``."""
    key = (json.dumps(g.to_json(), sort_keys=True), tuple(sorted(y)), tuple(sorted(z)), tuple(sorted(x)))
    hit = _ID_CACHE.get(key)
    if hit is not None:
        return hit
    try:
        out = identify_conditional(g, y, z, x)
    except Unidentifiable as e:
        e.stage = stage
        raise
    if len(_ID_CACHE) > 512:
        _ID_CACHE.clear()
    _ID_CACHE[key] = out
    return out


def _x_values(spec: DcnSpec, query: DcnQuery) -> List[Dict[str, int]]:
    if query.intervention_value is not None:
        return [dict(query.intervention_value)]
    ranges = [range(spec.card[v]) for v in query.x]
    return [dict(zip(query.x, vals)) for vals in itertools.product(*ranges)]


def _nodes_value(query: DcnQuery, value: Mapping[str, int]) -> Dict[NodeId, int]:
    return {NodeId(k, query.t_x): int(v) for k, v in value.items()}


def _finish(results: List[PipelineResult], query: DcnQuery):
    return results[0] if query.intervention_value is not None else results


def _natural_at(spec, sched, p0, t0, t: int, observations: Optional[Observations]) -> StateDistribution:
    """``P(V_t)`` without intervention.

    Spanning confounders make the observed process non-Markov, so a rollout
    of the transition schedule is wrong there; the observations are used
    instead whenever they are given.
    """
    if observations is None:
        return rollout(p0, sched, t0, t)[-1]
    j = observations(t, t)
    f = j.marginal(slice_nodes(spec, t)).transpose(slice_nodes(spec, t))
    return StateDistribution(_index(spec), f.values.reshape(-1))


def _outcome_before_action(spec, query, sched, p0, t0, method, observations=None) -> List[PipelineResult]:
    """Outcome before the intervention: the natural marginal."""
    nat = _natural_at(spec, sched, p0, t0, query.t_y, observations)
    out = []
    for value in _x_values(spec, query):
        out.append(
            PipelineResult(
                query.with_value(value), None, None, [], marginalize(nat, query.y), t0=t0, method=method,
                diagnostics=["outcome precedes the intervention; natural marginal returned"],
            )
        )
    return out


# -- DCN-ID ---------------------------------------------------------------------------------


def _dcn_id(spec, query, t_series, p0, t0, observations, dynamic: bool, method: str):
    sched = as_schedule(t_series)
    _check(spec, query, sched, p0, t0)
    if query.t_y < query.t_x:
        return _finish(_outcome_before_action(spec, query, sched, p0, t0, method, observations if dynamic else None), query)
    tx, ty = query.t_x, query.t_y
    history = observations is not None
    g = window_graph(spec, tx - 2, tx + 1, history=history)
    rows, cols = slice_nodes(spec, tx - 1), slice_nodes(spec, tx + 1)
    expr = _identify_window(g, cols, rows, query.x_nodes(), "window")
    joint = observations(tx - 2, tx + 1) if history else synthetic_window(spec, sched, tx - 2, tx + 1)
    pre = _natural_at(spec, sched, p0, t0, tx - 1, observations if dynamic else None)

    m_exprs = {}
    if dynamic:
        for t in range(tx + 2, ty + 1):
            gg = window_graph(spec, tx - 1, t, history=True)
            m_exprs[t] = _identify_window(
                gg, slice_nodes(spec, t), slice_nodes(spec, t - 1), query.x_nodes(), f"M_{t}"
            )

    out = []
    for value in _x_values(spec, query):
        diags: List[str] = []
        nv = _nodes_value(query, value)
        a = build_a_matrix(expr, joint, rows, cols, nv, x_nodes=query.x_nodes(), diagnostics=diags)
        p = step(pre, a)
        ms = []
        for t in range(tx + 2, ty + 1):
            if dynamic:
                m = build_a_matrix(
                    m_exprs[t], observations(tx - 1, t), slice_nodes(spec, t - 1), slice_nodes(spec, t), nv,
                    x_nodes=query.x_nodes(), diagnostics=diags,
                )
                ms.append(m)
            else:
                m = sched.at(t - 1)
            p = step(p, m)
        out.append(
            PipelineResult(query.with_value(value), expr, a, ms, marginalize(p, query.y), t0=t0, method=method,
                           diagnostics=diags)
        )
    return _finish(out, query)


def dcn_id_static(
    spec: DcnSpec,
    query: DcnQuery,
    t_series,
    p0: StateDistribution,
    *,
    t0: int = 0,
    observations: Optional[Observations] = None,
):
    """Effect of ``do(x@t_x)`` on ``y@t_y`` under static confounders.

    Identifies ``P(V_{t_x+1} | V_{t_x-1}, do(x))`` on slices ``t_x-2..t_x+1``,
    evaluates it into ``A`` and returns
    ``marginal_y(p0 T_{t0} ... T_{t_x-2} A T_{t_x+1} ... T_{t_y-1})``.

    Returns a single :class:`PipelineResult` when ``query.intervention_value``
    is set, otherwise a list with one result per value of ``x``.

    Raises
    ------
    Unidentifiable
        When the window query has a hedge (``stage`` names the window).
    WindowError
        When ``t_x < t0 + 2``.
    """
    if not classify(spec).is_static:
        raise SpecError("dcn_id_static needs a spec with static confounders only")
    return _dcn_id(spec, query, t_series, p0, t0, observations, False, "dcn_id_static")


def dcn_id_dynamic(
    spec: DcnSpec,
    query: DcnQuery,
    t_series,
    p0: StateDistribution,
    *,
    observations: Observations,
    t0: int = 0,
):
    """Effect of ``do(x@t_x)`` when confounders span consecutive slices.

    ``A`` comes from the four-slice window as in the static case; every later
    step uses ``M_t = P(V_t | V_{t-1}, do(x))`` identified on slices
    ``t_x-1..t``. Window graphs include the projection of the unobserved
    past, and ``observations(t_from, t_to)`` supplies their joints.
    """
    if observations is None:
        raise PipelineError("dcn_id_dynamic needs an observations(t_from, t_to) source")
    return _dcn_id(spec, query, t_series, p0, t0, observations, True, "dcn_id_dynamic")


# -- cDCN-ID -------------------------------------------------------------------------------


def _ancestor_slices(spec: DcnSpec, query: DcnQuery, t_from: int) -> Dict[int, List[str]]:
    g = unroll(spec, t_from, query.t_y)
    an = ancestors(g, [NodeId(v, query.t_y) for v in query.y])
    out: Dict[int, List[str]] = {}
    for t in range(t_from, query.t_y + 1):
        out[t] = [m for m in spec.names if NodeId(m, t) in an]
    return out


def _cdcn(spec, query, t_series, p0, t0, observations, dynamic: bool, method: str):
    sched = as_schedule(t_series)
    _check(spec, query, sched, p0, t0)
    if query.t_y < query.t_x:
        return _finish(_outcome_before_action(spec, query, sched, p0, t0, method, observations if dynamic else None), query)
    tx, ty = query.t_x, query.t_y
    tdx = dynamic_time_span(spec, query.x, tx) if dynamic else 0
    if dynamic and tx + tdx >= ty:
        raise PipelineError(
            f"t_y={ty} lies inside the dynamic time span of x (t_x + t_dx = {tx + tdx}); "
            "this pipeline needs t_x + t_dx < t_y"
        )
    t_a = tx + tdx + 1
    an = _ancestor_slices(spec, query, tx - 2)
    if dynamic:
        nat_at = lambda t: _natural_at(spec, sched, p0, t0, t, observations)  # noqa: E731
    else:
        nat = rollout(p0, sched, t0, ty)
        nat_at = lambda t: nat[t - t0]  # noqa: E731
    if not an[t_a]:
        # x cannot reach y: the natural marginal
        out = []
        for value in _x_values(spec, query):
            out.append(PipelineResult(query.with_value(value), None, None, [], marginalize(nat_at(ty), query.y),
                                      t0=t0, method=method, diagnostics=["x is not an ancestor of y"]))
        return _finish(out, query)
    history = observations is not None
    g = window_graph(spec, tx - 2, t_a, history=history)
    rows = slice_nodes(spec, tx - 1)
    cols = [NodeId(m, t_a) for m in an[t_a]]
    expr = _identify_window(g, cols, rows, query.x_nodes(), "window")
    joint = observations(tx - 2, t_a) if history else synthetic_window(spec, sched, tx - 2, t_a)
    pre = nat_at(tx - 1)

    m_exprs = {}
    if dynamic:
        for t in range(t_a + 1, ty + 1):
            gg = window_graph(spec, tx - 1, t, history=True)
            m_exprs[t] = _identify_window(
                gg, [NodeId(m, t) for m in an[t]], [NodeId(m, t - 1) for m in an[t - 1]], query.x_nodes(), f"M_{t}"
            )

    out = []
    for value in _x_values(spec, query):
        diags: List[str] = []
        nv = _nodes_value(query, value)
        a = build_a_matrix(expr, joint, rows, cols, nv, x_nodes=query.x_nodes(), diagnostics=diags)
        p = step(pre, a)
        ms = []
        for t in range(t_a + 1, ty + 1):
            if dynamic:
                m = build_a_matrix(
                    m_exprs[t], observations(tx - 1, t), [NodeId(v, t - 1) for v in an[t - 1]],
                    [NodeId(v, t) for v in an[t]], nv, x_nodes=query.x_nodes(), diagnostics=diags,
                )
            else:
                m = restrict_matrix(sched.at(t - 1), an[t - 1], an[t], nat_at(t - 1))
                diags.extend(m.diagnostics)
            ms.append(m)
            p = step(p, m)
        out.append(PipelineResult(query.with_value(value), expr, a, ms, marginalize(p, query.y), t0=t0,
                                  method=method, diagnostics=diags))
    return _finish(out, query)


def cdcn_id_static(
    spec: DcnSpec,
    query: DcnQuery,
    t_series,
    p0: StateDistribution,
    *,
    t0: int = 0,
    observations: Optional[Observations] = None,
):
    """Static-confounder pipeline restricted to ancestors of ``y``.

    The window query becomes ``P(V_{t_x+1} ∩ An(y) | V_{t_x-1}, do(x))`` and
    later steps use the natural transitions collapsed onto the ancestor
    variables of each slice. Succeeds whenever the effect is identifiable.
    """
    if not classify(spec).is_static:
        raise SpecError("cdcn_id_static needs a spec with static confounders only")
    return _cdcn(spec, query, t_series, p0, t0, observations, False, "cdcn_id_static")


def cdcn_id_dynamic(
    spec: DcnSpec,
    query: DcnQuery,
    t_series,
    p0: StateDistribution,
    *,
    observations: Observations,
    t0: int = 0,
):
    """Ancestor-restricted pipeline for confounders spanning slices.

    ``A`` spans slices ``t_x-1 -> t_x+t_dx+1`` where ``t_dx`` is the dynamic
    time span of ``x``; later ``M_t = P(V_t ∩ An(y) | V_{t-1} ∩ An(y), do(x))``
    are identified on slices ``t_x-1..t``.
    """
    if observations is None:
        raise PipelineError("cdcn_id_dynamic needs an observations(t_from, t_to) source")
    return _cdcn(spec, query, t_series, p0, t0, observations, True, "cdcn_id_dynamic")


# -- transport --------------------------------------------------------------------------------


def source_kernel(model, query: DcnQuery, value: Mapping[str, int]) -> np.ndarray:
    """``P_source(V_{t_x}, V_{t_x+1} | V_{t_x-1}, do(x = value))`` from an oracle model.

    Shape ``(n, n, n)`` over slice states. Previous states with zero mass use
    the model forced to that state.
    """
    tx = query.t_x
    nv = _nodes_value(query, value)
    spec = model.spec
    n = _index(spec).size
    j = model.window_joint(tx - 1, tx + 1, nv).array.reshape(n, n, n)
    out = np.zeros((n, n, n))
    idx = _index(spec)
    for i in range(n):
        m = j[i].sum()
        if m > 1e-14:
            out[i] = j[i] / m
        else:
            forced = dict(nv)
            forced.update({v: s for v, s in zip(slice_nodes(spec, tx - 1), idx.decode(i)) if v not in nv})
            jj = model.window_joint(tx - 1, tx + 1, forced).array.reshape(n, n, n)
            out[i] = jj[i] / jj[i].sum()
    return out


def source_experiments_to_json(spec: DcnSpec, query: DcnQuery, kernels: Mapping[Tuple[int, ...], np.ndarray]) -> dict:
    """File form of :func:`dcn_sid`'s ``source_experiments``.

    ``kernels[i][j][k] = P(V_{t_x} = j, V_{t_x+1} = k | V_{t_x-1} = i, do(x))``
    with states in the spec's index order.
    """
    return {
        "states": _index(spec).labels(),
        "do": list(query.x),
        "experiments": [
            {"value": list(map(int, k)), "kernel": np.asarray(v, dtype=float).tolist()} for k, v in sorted(kernels.items())
        ],
    }


def source_experiments_from_json(spec: DcnSpec, doc: Mapping, where: str = "<experiments>") -> Dict[Tuple[int, ...], np.ndarray]:
    idx = _index(spec)
    if doc.get("states") != idx.labels():
        raise PipelineError(f"{where}: field 'states' must list {idx.labels()}")
    out = {}
    for i, e in enumerate(doc.get("experiments", [])):
        try:
            k = np.asarray(e["kernel"], dtype=float)
            value = tuple(int(v) for v in e["value"])
        except (KeyError, TypeError, ValueError) as err:
            raise PipelineError(f"{where}: experiments[{i}]: {err}") from None
        n = idx.size
        if k.shape != (n, n, n):
            raise PipelineError(f"{where}: experiments[{i}].kernel has shape {k.shape}, expected {(n, n, n)}")
        if np.any(k < -1e-9) or not np.allclose(k.sum(axis=(1, 2)), 1.0, atol=1e-9):
            raise PipelineError(f"{where}: experiments[{i}].kernel rows must be distributions")
        out[value] = k
    return out


def _kernel_window(spec: DcnSpec, query: DcnQuery, kernel: np.ndarray) -> JointTable:
    idx = _index(spec)
    n = idx.size
    arr = np.full((n, n), 1.0 / (n * n))[..., None, None] * kernel[None, :, :, :]
    nodes = [v for t in range(query.t_x - 2, query.t_x + 2) for v in slice_nodes(spec, t)]
    return JointTable(nodes, arr.reshape(-1), list(idx.radix) * 4)


def dcn_sid(
    spec: DcnSpec,
    query: DcnQuery,
    t_series_target,
    p0_target: StateDistribution,
    source_experiments: Mapping[Tuple[int, ...], np.ndarray],
    selection: Sequence[str] = (),
    *,
    t0: int = 0,
    source: str = "source",
):
    """Target-domain effect from source experiments on ``x`` and target observations.

    ``source_experiments[vals]`` is the source-domain kernel
    ``P(V_{t_x}, V_{t_x+1} | V_{t_x-1}, do(x = vals))`` with ``vals`` in
    ``query.x`` order (see :func:`source_kernel`). Selection nodes mark the
    ``selection`` metavariables at slices ``t_x`` and ``t_x+1``; both domains
    share the synthetic context over the first two window slices, so earlier
    mechanisms need no marks. Final propagation uses the target schedule.
    """
    if not classify(spec).is_static:
        raise SpecError("dcn_sid supports static confounders only")
    sched = as_schedule(t_series_target)
    _check(spec, query, sched, p0_target, t0)
    for m in selection:
        if m not in spec.card:
            raise PipelineError(f"unknown selection metavariable {m!r}")
    if not selection:
        out = _dcn_id(spec, query, sched, p0_target, t0, None, False, "dcn_id_static")
        return out
    if query.t_y < query.t_x:
        return _finish(_outcome_before_action(spec, query, sched, p0_target, t0, "dcn_sid"), query)
    tx, ty = query.t_x, query.t_y
    g = unroll(spec, tx - 2, tx + 1)
    marked = [NodeId(m, t) for t in (tx, tx + 1) for m in sorted(set(selection))]
    d = SelectionDiagram.on(g, marked, source=source)
    rows, cols = slice_nodes(spec, tx - 1), slice_nodes(spec, tx + 1)
    expr = transport_conditional(d, cols, rows, query.x_nodes())
    joint = synthetic_window(spec, sched, tx - 2, tx + 1)
    tables = {}
    for vals in itertools.product(*(range(spec.card[v]) for v in query.x)):
        if vals not in source_experiments:
            raise PipelineError(f"missing source experiment for do({dict(zip(query.x, vals))})")
        tables[vals] = _kernel_window(spec, query, np.asarray(source_experiments[vals], dtype=float))
    exps = {source: Experiments(query.x_nodes(), tables)}
    pre = rollout(p0_target, sched, t0, tx - 1)[-1]
    out = []
    for value in _x_values(spec, query):
        diags: List[str] = []
        nv = _nodes_value(query, value)
        a = build_a_matrix(expr, joint, rows, cols, nv, x_nodes=query.x_nodes(), experiments=exps, diagnostics=diags)
        p = step(pre, a)
        for t in range(tx + 2, ty + 1):
            p = step(p, sched.at(t - 1))
        out.append(PipelineResult(query.with_value(value), expr, a, [], marginalize(p, query.y), t0=t0,
                                  method="dcn_sid", diagnostics=diags))
    return _finish(out, query)


# -- trajectories ------------------------------------------------------------------------------


def trajectory(
    spec: DcnSpec,
    query: Optional[DcnQuery],
    t_series,
    p0: StateDistribution,
    horizon: int,
    *,
    t0: int = 0,
    observations: Optional[Observations] = None,
) -> List[Optional[StateDistribution]]:
    """Per-slice distributions ``P(V_t | do(x))`` for ``t = t0..horizon``.

    Slices before ``t_x`` follow the natural chain; slice ``t_x`` comes from
    identifying ``P(V_{t_x} | V_{t_x-1}, do(x))`` on the window (``None`` if
    that is not identifiable); slice ``t_x+1`` from ``A``; later slices from
    the natural transitions (static) or identified ``M_t`` (spanning
    confounders, which need ``observations``). ``query.intervention_value``
    must be set; ``None`` as query gives the natural rollout.
    """
    sched = as_schedule(t_series)
    if query is None:
        return list(rollout(p0, sched, t0, horizon))
    if query.intervention_value is None:
        raise PipelineError("trajectory needs a query with an intervention value")
    static = classify(spec).is_static
    if not static and observations is None:
        raise PipelineError("trajectories under spanning confounders need observations")

    def natural(t_end: int) -> List[StateDistribution]:
        if static:
            return list(rollout(p0, sched, t0, t_end))
        return [_natural_at(spec, sched, p0, t0, t, observations) for t in range(t0, t_end + 1)]

    if horizon < query.t_x:
        return natural(horizon)
    full = DcnQuery(spec.names, max(horizon, query.t_x + 1), query.x, query.t_x, query.intervention_value)
    _check(spec, full, sched, p0, t0)
    tx = query.t_x
    nat = natural(tx - 1)
    out: List[Optional[StateDistribution]] = list(nat)
    history = observations is not None
    nv = _nodes_value(query, dict(query.intervention_value))
    rows = slice_nodes(spec, tx - 1)
    # slice t_x: the intervened variables are fixed, the rest identified
    g3 = window_graph(spec, tx - 2, tx, history=history)
    rest = [v for v in slice_nodes(spec, tx) if v not in nv]
    try:
        idx = _index(spec)
        if rest:
            e_x = _identify_window(g3, rest, rows, query.x_nodes(), "slice t_x")
            j3 = observations(tx - 2, tx) if history else synthetic_window(spec, sched, tx - 2, tx)
            b = build_a_matrix(e_x, j3, rows, rest, nv, x_nodes=query.x_nodes())
            q_rest = step(nat[-1], b)
        else:
            q_rest = StateDistribution(StateIndex((), ()), [1.0])
        probs = np.zeros(idx.size)
        for i, state in enumerate(idx.states()):
            a = dict(zip(idx.variables, state))
            if all(a[v.name] == x for v, x in nv.items()):
                probs[i] = q_rest.probs[q_rest.index.encode([a[v.name] for v in rest])]
        out.append(StateDistribution(idx, probs))
    except Unidentifiable:
        out.append(None)
    if horizon == tx:
        return out
    res = _dcn_id(spec, full, sched, p0, t0, observations, not static, "")
    p = step(nat[-1], res.a_matrix)
    out.append(p)
    for k, t in enumerate(range(tx + 2, horizon + 1)):
        m = res.m_matrices[k] if res.m_matrices else sched.at(t - 1)
        p = step(p, m)
        out.append(p)
    return out


# -- baseline ------------------------------------------------------------------------------------


def full_graph_effect(spec: DcnSpec, query: DcnQuery, t0: int = 0) -> ProbExpr:
    """Identify ``P(y@t_y | do(x@t_x))`` on the whole graph unrolled from ``t0``.

    The brute-force alternative to the windowed pipelines.
    """
    g = unroll(spec, t0, query.t_y)
    return identify(g, [NodeId(v, query.t_y) for v in query.y], query.x_nodes())
