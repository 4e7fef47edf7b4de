"""Causal effect identification and trajectory prediction in dynamic causal networks."""

from .expr import (
    EvaluationError,
    Experiments,
    InterventionalAtom,
    JointTable,
    ObsFactor,
    Product,
    Quotient,
    SumOver,
    evaluate,
    evaluate_factor,
    free_variables,
    parse,
    render,
)
from .graph import Admg, CycleError, GraphError, Hedge, NodeId, find_hedge
from .identification import (
    IdentificationError,
    SelectionDiagram,
    Unidentifiable,
    UnsupportedTransport,
    identify,
    identify_conditional,
    transport,
    transport_conditional,
)

__all__ = [
    "Admg",
    "CycleError",
    "EvaluationError",
    "Experiments",
    "GraphError",
    "Hedge",
    "IdentificationError",
    "InterventionalAtom",
    "JointTable",
    "NodeId",
    "ObsFactor",
    "Product",
    "Quotient",
    "SelectionDiagram",
    "SumOver",
    "Unidentifiable",
    "UnsupportedTransport",
    "evaluate",
    "evaluate_factor",
    "find_hedge",
    "free_variables",
    "identify",
    "identify_conditional",
    "parse",
    "render",
    "transport",
    "transport_conditional",
]

__version__ = "0.1.0"
