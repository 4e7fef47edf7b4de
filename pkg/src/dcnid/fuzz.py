"""Random graphs, specs and queries, and the soundness/completeness checks run on them."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .expr import evaluate_factor
from .graph import Admg, NodeId, find_hedge_exhaustive, is_hedge
from .identification import Unidentifiable, identify
from .model import DcnSpec, SpecError, dynamic_time_span
from .oracle import make_rng, random_scm

__all__ = ["random_admg", "random_query", "random_dcn_spec", "FuzzReport", "fuzz_identify"]


def random_admg(rng: np.random.Generator, n: int, p_dir: Optional[float] = None, p_bi: Optional[float] = None) -> Admg:
    """Binary ADMG on ``v0..v{n-1}``; directed edges follow index order."""
    p_dir = rng.uniform(0.0, 0.7) if p_dir is None else p_dir
    p_bi = rng.uniform(0.0, 0.5) if p_bi is None else p_bi
    names = [f"v{i}" for i in range(n)]
    pairs = list(itertools.combinations(range(n), 2))
    d = [(names[i], names[j]) for i, j in pairs if rng.random() < p_dir]
    b = [(names[i], names[j]) for i, j in pairs if rng.random() < p_bi]
    return Admg(names, d, b)


def random_query(rng: np.random.Generator, g: Admg, max_x: int = 2, max_y: int = 2) -> Tuple[List[NodeId], List[NodeId]]:
    nodes = sorted(g.nodes)
    k = int(rng.integers(1, min(max_x, len(nodes) - 1) + 1))
    pick = rng.permutation(len(nodes))
    x = [nodes[i] for i in pick[:k]]
    rest = [nodes[i] for i in pick[k:]]
    m = int(rng.integers(1, min(max_y, len(rest)) + 1))
    return x, rest[:m]


def random_dcn_spec(
    rng: np.random.Generator,
    n_meta: int = 2,
    *,
    static: Optional[bool] = True,
    p_intra: float = 0.5,
    p_cross: float = 0.5,
    p_conf: float = 0.4,
) -> DcnSpec:
    """Random binary spec. ``static=False`` forces at least one cross-slice
    confounder and keeps the dynamic time span finite; ``None`` allows either."""
    names = [chr(ord("a") + i) for i in range(n_meta)]
    pairs = list(itertools.combinations(names, 2))
    intra = [p for p in pairs if rng.random() < p_intra]
    cross = [(a, b) for a in names for b in names if rng.random() < p_cross]
    iconf = [p for p in pairs if rng.random() < p_conf]
    cconf: List[Tuple[str, str]] = []
    if static is not True:
        cand = [(a, b) for a in names for b in names if a != b]
        cconf = [p for p in cand if rng.random() < p_conf / 2]
        if static is False and not cconf:
            cconf = [cand[int(rng.integers(len(cand)))]] if cand else []
        # drop confounders until every span is finite
        while cconf:
            spec = DcnSpec(tuple((n, 2) for n in names), tuple(intra), tuple(cross), tuple(iconf), tuple(cconf))
            try:
                dynamic_time_span(spec, names)
                break
            except SpecError:
                # a lone cross-slice confounder is only unbounded through intra ones
                victim = iconf if (static is False and len(cconf) == 1) else cconf
                victim.pop(int(rng.integers(len(victim))))
    spec = DcnSpec(tuple((n, 2) for n in names), tuple(intra), tuple(cross), tuple(iconf), tuple(cconf))
    if static is False and not spec.cross_conf:
        raise ValueError("need at least two metavariables for a cross-slice confounder")
    return spec


@dataclass
class FuzzReport:
    seed: int
    graphs: int = 0
    identified: int = 0
    failed: int = 0
    soundness_violations: List[dict] = field(default_factory=list)
    completeness_mismatches: List[dict] = field(default_factory=list)
    invalid_witnesses: List[dict] = field(default_factory=list)
    max_error: float = 0.0

    @property
    def ok(self) -> bool:
        return not (self.soundness_violations or self.completeness_mismatches or self.invalid_witnesses)

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "graphs": self.graphs,
            "identified": self.identified,
            "failed": self.failed,
            "max_error": self.max_error,
            "soundness_violations": self.soundness_violations,
            "completeness_mismatches": self.completeness_mismatches,
            "invalid_witnesses": self.invalid_witnesses,
            "ok": self.ok,
        }


def fuzz_identify(
    seed: int,
    graphs: int = 500,
    *,
    max_nodes: int = 6,
    params: int = 5,
    tol: float = 1e-9,
    completeness: bool = True,
) -> FuzzReport:
    """Identify random queries on random graphs and check every answer.

    Successful identifications are evaluated on ``params`` random models and
    compared with truncated factorization; failures must come with a valid
    hedge, and blind hedge enumeration must agree on which queries fail.
    """
    rng = make_rng(seed)
    rep = FuzzReport(seed)
    for i in range(graphs):
        n = int(rng.integers(2, max_nodes + 1))
        g = random_admg(rng, n)
        x, y = random_query(rng, g)
        rep.graphs += 1
        case = {"index": i, "graph": g.to_json(), "x": [v.label for v in x], "y": [v.label for v in y]}
        try:
            e = identify(g, y, x)
        except Unidentifiable as err:
            rep.failed += 1
            if not is_hedge(g, err.hedge, x, y):
                rep.invalid_witnesses.append(case)
            if completeness and find_hedge_exhaustive(g, x, y) is None:
                rep.completeness_mismatches.append(dict(case, id="fail", enumeration="none"))
            continue
        rep.identified += 1
        if completeness and find_hedge_exhaustive(g, x, y) is not None:
            rep.completeness_mismatches.append(dict(case, id="ok", enumeration="hedge"))
        ys = sorted(y)
        for k in range(params):
            scm = random_scm(g, int(rng.integers(2**31)))
            got = evaluate_factor(e, scm.joint())
            err = _max_error(got, scm, x, ys)
            rep.max_error = max(rep.max_error, err)
            if err > tol:
                rep.soundness_violations.append(dict(case, param=k, error=err))
                break
    return rep


def _max_error(got, scm, x: List[NodeId], ys: List[NodeId]) -> float:
    """Largest gap between an identified factor and the truth over every value
    of ``x`` and of any variable identification added to the intervention set."""
    extra = sorted(v for v in got.vars if v not in set(x) | set(ys))
    card = {v: scm.card[v] for v in list(x) + ys + extra}
    worst = 0.0
    for xv in itertools.product(*(range(card[v]) for v in x)):
        truth = scm.interventional(dict(zip(x, xv))).marginal(ys).transpose(ys).values
        est = got.reduce(dict(zip(x, xv)))
        for wv in itertools.product(*(range(card[v]) for v in extra)):
            f = est.reduce(dict(zip(extra, wv)))
            arr = np.broadcast_to(f.expand(ys, card), truth.shape)
            worst = max(worst, float(np.max(np.abs(arr - truth))))
    return worst
