"""The two-road traffic network used throughout the demos and tests.

Each slice has delay ``d`` and traffic on two roads ``tr1``, ``tr2``, all
binary. Road traffic drives the delay; yesterday's delay changes today's
road choice; a shared unobserved cause links both roads on the same day.
States are indexed with ``d`` as the most significant bit.
"""

from __future__ import annotations

from typing import Dict, List

import numpy as np

from .expr import ObsFactor, ProbExpr, Product, Quotient, SumOver
from .graph import NodeId
from .markov import Schedule, StateIndex, TransitionMatrix
from .model import DcnSpec, slice_nodes
from .oracle import DcnScm, dcn_parent_keys

__all__ = [
    "traffic_spec",
    "traffic_index",
    "T_WEEKDAY",
    "T_WEEKEND",
    "T_STEADY",
    "weekday_schedule",
    "traffic_scm",
    "window_names",
    "alpha_reference",
]


def traffic_spec() -> DcnSpec:
    return DcnSpec(
        (("d", 2), ("tr1", 2), ("tr2", 2)),
        intra_edges=(("tr1", "d"), ("tr2", "d")),
        cross_edges=(("d", "tr1"), ("d", "tr2"), ("d", "d")),
        intra_conf=(("tr1", "tr2"),),
    )


def traffic_index() -> StateIndex:
    return StateIndex.binary(("d", "tr1", "tr2"))


def _rows(low, high) -> np.ndarray:
    return np.array([low] * 4 + [high] * 4, dtype=float)


# rows depend only on the previous delay
_WEEKDAY = _rows([0.0, 0.4, 0.0, 0.3, 0.0, 0.2, 0.0, 0.1], [0.2, 0.0, 0.0, 0.1, 0.4, 0.0, 0.0, 0.3])
_WEEKEND = _rows([0.1, 0.0, 0.3, 0.1, 0.2, 0.2, 0.0, 0.1], [0.0, 0.2, 0.1, 0.0, 0.1, 0.3, 0.3, 0.0])
_STEADY = _rows(
    [0.02, 0.0, 0.03, 0.0, 0.26, 0.13, 0.34, 0.22], [0.34, 0.1, 0.24, 0.21, 0.0, 0.02, 0.09, 0.0]
)

T_WEEKDAY = TransitionMatrix(traffic_index(), _WEEKDAY)
T_WEEKEND = TransitionMatrix(traffic_index(), _WEEKEND)
T_STEADY = TransitionMatrix(traffic_index(), _STEADY)


def weekday_schedule(days: int = 14, t0: int = 0) -> Schedule:
    """Slice ``t0`` is a Monday; ``at(t)`` is the weekday matrix when day
    ``t+1`` falls on Monday to Friday and the weekend matrix otherwise."""
    mats: Dict[int, TransitionMatrix] = {}
    for t in range(t0, t0 + days + 1):
        mats[t] = T_WEEKDAY if (t + 1 - t0) % 7 < 5 else T_WEEKEND
    return Schedule(mats)


def traffic_scm(t0: int = 0) -> DcnScm:
    """A slice-stationary model whose transition is exactly ``T_WEEKDAY``.

    The shared road cause ``w`` is Bernoulli(0.4). After a day without delay
    road 2 is always busy and road 1 busy with probability 0.4 regardless of
    ``w``; after a delayed day both roads copy ``w``.
    """
    spec = traffic_spec()
    keys = dcn_parent_keys(spec)
    assert keys["tr1"] == (("cross", "d"), ("u", 0)) and keys["tr2"] == (("cross", "d"), ("u", 0))
    assert keys["d"] == (("intra", "tr1"), ("intra", "tr2"), ("cross", "d"))
    tr1 = np.zeros((2, 2, 2))
    tr2 = np.zeros((2, 2, 2))
    for w in range(2):
        tr1[0, w] = [0.6, 0.4]
        tr2[0, w] = [0.0, 1.0]
        tr1[1, w, w] = 1.0
        tr2[1, w, w] = 1.0
    d = np.full((2, 2, 2, 2), 0.5)
    for (a, b, prev), p0 in {
        (0, 1, 0): 2 / 3,
        (1, 1, 0): 3 / 4,
        (0, 0, 1): 1 / 3,
        (1, 1, 1): 1 / 4,
    }.items():
        d[a, b, prev] = [p0, 1 - p0]
    return DcnScm(spec, keys, {"d": d, "tr1": tr1, "tr2": tr2}, (np.array([0.6, 0.4]),), (), t0, None)


def window_names(t_x: int) -> Dict[str, NodeId]:
    """``v1..v12`` for the four slices ``t_x-2..t_x+1`` in slice-major order."""
    spec = traffic_spec()
    nodes: List[NodeId] = [v for t in range(t_x - 2, t_x + 2) for v in slice_nodes(spec, t)]
    return {f"v{i + 1}": v for i, v in enumerate(nodes)}


def alpha_reference(t_x: int) -> ProbExpr:
    """Hand transcription of the published window expression for
    ``P(v10, v11, v12 | v4, v5, v6, do(v7))``."""
    v = window_names(t_x)
    s = lambda *ks: frozenset(v[k] for k in ks)  # noqa: E731
    joint = ObsFactor(s(*[f"v{i}" for i in range(1, 13)]))
    inner = ObsFactor(s("v7", "v8", "v9"), s("v4", "v5", "v6"))
    num = Product((joint, SumOver(s("v7", "v9"), inner)))
    den = Product((ObsFactor(s("v4", "v5", "v6")), SumOver(s("v9"), inner)))
    return SumOver(s("v1", "v2", "v3", "v8", "v9"), Quotient(num, den))
