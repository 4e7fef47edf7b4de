"""Brute-force ground truth: parameterized structural causal models.

:class:`Scm` holds conditional probability tables over observed and latent
nodes and computes observational and interventional joints exactly by
variable elimination. :class:`DcnScm` does the same for a slice-stationary
dynamic model by forward message passing, so long horizons stay cheap.

Random parameters come from ``numpy.random.Philox`` (a counter-based 64-bit
generator) seeded explicitly; every report carries its seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .expr import JointTable
from .factor import Factor
from .graph import Admg, NodeId, node, topo_order
from .markov import StateDistribution, StateIndex, TransitionMatrix
from .model import DcnSpec, slice_nodes

__all__ = [
    "OracleError",
    "Scm",
    "random_scm",
    "DcnScm",
    "random_dcn_scm",
    "OracleReport",
    "dcn_oracle",
    "domain_pair",
    "make_rng",
    "PRNG_NAME",
    "DEFAULT_CAP",
]

PRNG_NAME = "numpy.random.Philox"
DEFAULT_CAP = 1 << 20


class OracleError(ValueError):
    pass


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def _dirichlet_rows(rng: np.random.Generator, shape: Sequence[int], k: int) -> np.ndarray:
    rows = rng.dirichlet(np.ones(k), size=int(np.prod(shape, dtype=np.int64)) if shape else 1)
    return rows.reshape(tuple(shape) + (k,))


def _eliminate(factors: List[Factor], drop: Iterable, cap: int) -> Factor:
    """Multiply ``factors`` and sum out ``drop``, greedily by smallest product."""
    factors = list(factors)
    drop = set(drop)
    while drop:
        best = None
        for v in drop:
            involved = [f for f in factors if v in f.vars]
            scope = {}
            for f in involved:
                scope.update(f.card)
            size = int(np.prod(list(scope.values()), dtype=np.int64)) if scope else 1
            if best is None or size < best[0] or (size == best[0] and str(v) < str(best[1])):
                best = (size, v, involved)
        size, v, involved = best
        if size > cap:
            raise OracleError(f"intermediate table of {size} states exceeds the cap of {cap}")
        prod = Factor.scalar(1.0)
        for f in involved:
            prod = prod * f
        factors = [f for f in factors if v not in f.vars] + [prod.sum_out([v])]
        drop.discard(v)
    out = Factor.scalar(1.0)
    for f in factors:
        out = out * f
        if out.values.size > cap:
            raise OracleError(f"joint table of {out.values.size} states exceeds the cap of {cap}")
    return out


@dataclass
class Scm:
    """Discrete causal model with explicit latent nodes.

    ``cpts[v]`` has one axis per parent in ``parents[v]`` order followed by
    one axis for ``v``; each slice along the last axis sums to one.
    """

    observed: Tuple[NodeId, ...]
    latents: Tuple[NodeId, ...]
    parents: Dict[NodeId, Tuple[NodeId, ...]]
    cpts: Dict[NodeId, np.ndarray]
    card: Dict[NodeId, int]
    seed: Optional[int] = None

    def __post_init__(self):
        self.observed = tuple(sorted(node(v) for v in self.observed))
        self.latents = tuple(sorted(node(v) for v in self.latents))
        every = set(self.observed) | set(self.latents)
        for v in every:
            pa = self.parents.get(v, ())
            t = np.asarray(self.cpts[v], dtype=float)
            want = tuple(self.card[p] for p in pa) + (self.card[v],)
            if t.shape != want:
                raise OracleError(f"CPT of {v} has shape {t.shape}, expected {want}")
            if not np.allclose(t.sum(axis=-1), 1.0, atol=1e-12, rtol=0):
                raise OracleError(f"CPT rows of {v} do not sum to 1")
            self.cpts[v] = t
            self.parents[v] = tuple(pa)
        Admg(sorted(every), [(p, v) for v in every for p in self.parents[v]])

    def factors(self, iv: Optional[Mapping] = None) -> List[Factor]:
        iv = {node(k): int(v) for k, v in (iv or {}).items()}
        for v in iv:
            if v in self.latents:
                raise OracleError(f"cannot intervene on latent node {v}")
            if v not in self.card:
                raise OracleError(f"unknown node {v}")
        out = []
        for v in self.observed + self.latents:
            if v in iv:
                onehot = np.zeros(self.card[v])
                onehot[iv[v]] = 1.0
                out.append(Factor((v,), onehot))
            else:
                out.append(Factor(self.parents[v] + (v,), self.cpts[v]))
        return out

    def joint(self, cap: int = DEFAULT_CAP) -> JointTable:
        return self.interventional({}, cap=cap)

    def interventional(self, iv: Mapping, cap: int = DEFAULT_CAP) -> JointTable:
        """Exact post-intervention joint over the observed nodes."""
        f = _eliminate(self.factors(iv), self.latents, cap)
        f = f.transpose(self.observed)
        return JointTable(self.observed, f.values, [self.card[v] for v in self.observed], atol=1e-9)

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "prng": PRNG_NAME,
            "observed": [v.label for v in self.observed],
            "latents": [v.label for v in self.latents],
            "card": {v.label: c for v, c in sorted(self.card.items())},
            "parents": {v.label: [p.label for p in pa] for v, pa in sorted(self.parents.items())},
            "cpts": {v.label: t.tolist() for v, t in sorted(self.cpts.items())},
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "Scm":
        return cls(
            tuple(node(v) for v in doc["observed"]),
            tuple(node(v) for v in doc["latents"]),
            {node(v): tuple(node(p) for p in pa) for v, pa in doc["parents"].items()},
            {node(v): np.asarray(t, dtype=float) for v, t in doc["cpts"].items()},
            {node(v): int(c) for v, c in doc["card"].items()},
            doc.get("seed"),
        )


def latent_name(a: NodeId, b: NodeId) -> NodeId:
    return NodeId(f"U[{a.label}|{b.label}]", 0)


def random_scm(g: Admg, seed: int, latent_card: int = 2) -> Scm:
    """Random parameters for ``g``, one fresh latent per bidirected edge.

    CPT rows are drawn from a symmetric Dirichlet with concentration 1.
    """
    rng = make_rng(seed)
    card = dict(g.card)
    parents: Dict[NodeId, Tuple[NodeId, ...]] = {}
    latents = []
    extra: Dict[NodeId, List[NodeId]] = {v: [] for v in g.nodes}
    for a, b in sorted(g.bidirected):
        u = latent_name(a, b)
        latents.append(u)
        card[u] = latent_card
        parents[u] = ()
        extra[a].append(u)
        extra[b].append(u)
    cpts = {}
    for u in latents:
        cpts[u] = rng.dirichlet(np.ones(latent_card))
    for v in topo_order(g):
        pa = tuple(sorted(g.parents(v))) + tuple(extra[v])
        parents[v] = pa
        cpts[v] = _dirichlet_rows(rng, [card[p] for p in pa], card[v])
    return Scm(tuple(g.nodes), tuple(latents), parents, cpts, card, seed)


# -- dynamic models ---------------------------------------------------------------------


def _intra_latent(k: int, t: int) -> NodeId:
    return NodeId(f"_U{k}", t)


def _cross_latent(k: int, t: int) -> NodeId:
    return NodeId(f"_C{k}", t)


@dataclass
class DcnScm:
    """Slice-stationary causal model for a :class:`~dcnid.model.DcnSpec`.

    Every metavariable ``m`` has one CPT reused in every slice, with parent
    axes in the order ``parent_keys[m]`` then ``m`` itself. Parent keys are
    ``("intra", name)``, ``("cross", name)`` for ``name@t-1``,
    ``("u", k)`` for the ``k``-th intra-slice confounder and ``("c_in", k)``
    / ``("c_out", k)`` for the ``k``-th cross-slice confounder shared with
    the previous / next slice.

    In the first slice ``t0`` every cross-slice parent and incoming
    cross-slice confounder is held at value 0, so the model over slices
    ``t0..t`` has exactly the graph ``unroll(spec, t0, t)``.
    """

    spec: DcnSpec
    parent_keys: Dict[str, Tuple[Tuple[str, object], ...]]
    cpts: Dict[str, np.ndarray]
    intra_priors: Tuple[np.ndarray, ...]
    cross_priors: Tuple[np.ndarray, ...]
    t0: int = 0
    seed: Optional[int] = None

    @property
    def index(self) -> StateIndex:
        return StateIndex(self.spec.names, tuple(c for _, c in self.spec.metavars))

    # factors of slice t
    def _parent_node(self, key, t: int) -> NodeId:
        kind, ref = key
        if kind == "intra":
            return NodeId(ref, t)
        if kind == "cross":
            return NodeId(ref, t - 1)
        if kind == "u":
            return _intra_latent(ref, t)
        if kind == "c_in":
            return _cross_latent(ref, t - 1)
        return _cross_latent(ref, t)

    def _card(self, key) -> int:
        kind, ref = key
        if kind in ("intra", "cross"):
            return self.spec.card[ref]
        if kind == "u":
            return len(self.intra_priors[ref])
        return len(self.cross_priors[ref])

    def slice_factors(self, t: int, iv: Mapping[NodeId, int]) -> List[Factor]:
        out = []
        for k, prior in enumerate(self.intra_priors):
            out.append(Factor((_intra_latent(k, t),), prior))
        for k, prior in enumerate(self.cross_priors):
            out.append(Factor((_cross_latent(k, t),), prior))
        for m in self.spec.names:
            v = NodeId(m, t)
            if v in iv:
                onehot = np.zeros(self.spec.card[m])
                onehot[iv[v]] = 1.0
                out.append(Factor((v,), onehot))
                continue
            keys = self.parent_keys[m]
            f = Factor(tuple(self._parent_node(key, t) for key in keys) + (v,), self.cpts[m])
            if t == self.t0:
                fixed = {self._parent_node(key, t): 0 for key in keys if key[0] in ("cross", "c_in")}
                f = f.reduce(fixed)
            out.append(f)
        return out

    def _check_iv(self, iv) -> Dict[NodeId, int]:
        iv = {node(k): int(v) for k, v in (iv or {}).items()}
        for v, val in iv.items():
            if v.name not in self.spec.card or v.time < self.t0:
                raise OracleError(f"cannot intervene on {v}")
            if not 0 <= val < self.spec.card[v.name]:
                raise OracleError(f"intervention value {val} out of range for {v}")
        return iv

    def _latents(self, t: int) -> List[NodeId]:
        return [_intra_latent(k, t) for k in range(len(self.intra_priors))]

    def _carry(self, t: int) -> List[NodeId]:
        return [_cross_latent(k, t) for k in range(len(self.cross_priors))]

    def messages(self, t_end: int, iv: Optional[Mapping] = None, cap: int = DEFAULT_CAP) -> List[Factor]:
        """Forward messages ``P(V_t, C_t)`` for ``t = t0..t_end``; ``C_t`` are
        cross-slice confounders born at ``t``."""
        iv = self._check_iv(iv)
        if t_end < self.t0:
            raise OracleError("horizon precedes the first slice")
        msg = _eliminate(self.slice_factors(self.t0, iv), self._latents(self.t0), cap)
        out = [msg]
        for t in range(self.t0 + 1, t_end + 1):
            drop = slice_nodes(self.spec, t - 1) + self._carry(t - 1) + self._latents(t)
            msg = _eliminate([msg] + self.slice_factors(t, iv), drop, cap)
            out.append(msg)
        return out

    def marginals(self, t_end: int, iv: Optional[Mapping] = None, cap: int = DEFAULT_CAP) -> List[StateDistribution]:
        """``P(V_t)`` (under ``iv`` if given) for ``t = t0..t_end``."""
        out = []
        for t, msg in enumerate(self.messages(t_end, iv, cap), start=self.t0):
            f = msg.sum_out(self._carry(t)).transpose(slice_nodes(self.spec, t))
            out.append(StateDistribution(self.index, f.values.reshape(-1)))
        return out

    def window_joint(self, t_from: int, t_to: int, iv: Optional[Mapping] = None, cap: int = DEFAULT_CAP) -> JointTable:
        """Exact joint over slices ``t_from..t_to``, variables slice-major in declared order."""
        if t_from < self.t0 or t_to < t_from:
            raise OracleError(f"bad window [{t_from}, {t_to}] for a model starting at {self.t0}")
        iv = self._check_iv(iv)
        msg = self.messages(t_from, iv, cap)[-1]
        factors = [msg]
        drop = list(self._carry(t_from))
        for t in range(t_from + 1, t_to + 1):
            factors += self.slice_factors(t, iv)
            drop += self._latents(t) + self._carry(t)
        # carried latents born at the last slice are still summed out
        f = _eliminate(factors, drop, cap)
        order = [v for t in range(t_from, t_to + 1) for v in slice_nodes(self.spec, t)]
        f = f.transpose(order)
        return JointTable(order, f.values, f.values.shape, atol=1e-9)

    def transition(self, t: int, iv: Optional[Mapping] = None, cap: int = DEFAULT_CAP) -> TransitionMatrix:
        """``P(V_{t+1} | V_t)`` from the exact two-slice joint.

        Rows of previous states with zero probability use the transition under
        ``do(V_t = state)`` instead, which is what the model would do there.
        """
        iv = self._check_iv(iv)
        j = self.window_joint(t, t + 1, iv, cap).array
        n = self.index.size
        j = j.reshape(n, n)
        mass = j.sum(axis=1)
        rows = np.zeros((n, n))
        for i in range(n):
            if mass[i] > 1e-14:
                rows[i] = j[i] / mass[i]
            else:
                forced = dict(iv)
                forced.update({v: s for v, s in zip(slice_nodes(self.spec, t), self.index.decode(i))})
                jj = self.window_joint(t, t + 1, forced, cap).array.reshape(n, n)
                rows[i] = jj[i] / jj[i].sum()
        return TransitionMatrix(self.index, rows)

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "prng": PRNG_NAME,
            "t0": self.t0,
            "spec": self.spec.to_json(),
            "parent_keys": {m: [list(k) for k in ks] for m, ks in self.parent_keys.items()},
            "cpts": {m: t.tolist() for m, t in self.cpts.items()},
            "intra_priors": [p.tolist() for p in self.intra_priors],
            "cross_priors": [p.tolist() for p in self.cross_priors],
        }


def dcn_parent_keys(spec: DcnSpec) -> Dict[str, Tuple[Tuple[str, object], ...]]:
    keys: Dict[str, List[Tuple[str, object]]] = {m: [] for m in spec.names}
    for a, b in spec.intra_edges:
        keys[b].append(("intra", a))
    for a, b in spec.cross_edges:
        keys[b].append(("cross", a))
    for k, (a, b) in enumerate(spec.intra_conf):
        keys[a].append(("u", k))
        keys[b].append(("u", k))
    for k, (a, b) in enumerate(spec.cross_conf):
        keys[a].append(("c_out", k))
        keys[b].append(("c_in", k))
    return {m: tuple(v) for m, v in keys.items()}


def random_dcn_scm(spec: DcnSpec, seed: int, latent_card: int = 2, t0: int = 0) -> DcnScm:
    """Random slice-stationary parameters; Dirichlet(1) rows, one latent per confounder."""
    rng = make_rng(seed)
    keys = dcn_parent_keys(spec)
    intra = tuple(rng.dirichlet(np.ones(latent_card)) for _ in spec.intra_conf)
    cross = tuple(rng.dirichlet(np.ones(latent_card)) for _ in spec.cross_conf)
    probe = DcnScm(spec, keys, {}, intra, cross, t0, seed)
    cpts = {}
    for m in spec.names:
        shape = [probe._card(k) for k in keys[m]]
        cpts[m] = _dirichlet_rows(rng, shape, spec.card[m])
    return DcnScm(spec, keys, cpts, intra, cross, t0, seed)


@dataclass
class OracleReport:
    seed: Optional[int]
    t0: int
    horizon: int
    intervention: Dict[NodeId, int]
    natural: List[StateDistribution]
    intervened: List[StateDistribution]
    natural_transitions: List[TransitionMatrix]
    intervened_transitions: List[TransitionMatrix]
    prng: str = PRNG_NAME

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "prng": self.prng,
            "t0": self.t0,
            "horizon": self.horizon,
            "intervention": {v.label: x for v, x in sorted(self.intervention.items())},
            "natural": [p.probs.tolist() for p in self.natural],
            "intervened": [p.probs.tolist() for p in self.intervened],
            "natural_transitions": [m.entries.tolist() for m in self.natural_transitions],
            "intervened_transitions": [m.entries.tolist() for m in self.intervened_transitions],
        }


def dcn_oracle(
    spec: DcnSpec,
    seed: int,
    horizon: int,
    iv: Optional[Mapping] = None,
    *,
    t0: int = 0,
    latent_card: int = 2,
    model: Optional[DcnScm] = None,
) -> OracleReport:
    """Exact rollout of a random (or given) model with and without ``iv``.

    Transitions are listed for ``t = t0..horizon-1`` and map slice ``t`` to
    ``t+1``.
    """
    m = model if model is not None else random_dcn_scm(spec, seed, latent_card, t0)
    iv = m._check_iv(iv)
    nat = m.marginals(horizon)
    itv = m.marginals(horizon, iv)
    nat_t = [m.transition(t) for t in range(m.t0, horizon)]
    itv_t = [m.transition(t, iv) for t in range(m.t0, horizon)]
    return OracleReport(m.seed, m.t0, horizon, iv, nat, itv, nat_t, itv_t)


def domain_pair(spec: DcnSpec, selection: Iterable[str], source_seed: int, target_seed: int, latent_card: int = 2, t0: int = 0):
    """Source and target models sharing every mechanism except those of ``selection``."""
    src = random_dcn_scm(spec, source_seed, latent_card, t0)
    other = random_dcn_scm(spec, target_seed, latent_card, t0)
    cpts = dict(src.cpts)
    for m in selection:
        if m not in spec.card:
            raise OracleError(f"unknown selection metavariable {m!r}")
        cpts[m] = other.cpts[m]
    tgt = DcnScm(spec, src.parent_keys, cpts, src.intra_priors, src.cross_priors, t0, target_seed)
    return src, tgt
