"""Command-line interface.

Every command prints one JSON document (or CSV with ``--format csv`` where
supported) to stdout. Exit status: 0 on success, 2 when the answer is "not
identifiable" (the hedge witness is printed), 1 on usage or data errors.

Data for a spec comes either from files (``--schedule``, ``--p0``) or from a
random oracle model (``--oracle-seed``); specs with confounders spanning
slices need the oracle, since their windows need real joint tables.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from typing import Dict, List, Optional, Sequence

import numpy as np

from .expr import render, to_json
from .fuzz import fuzz_identify
from .graph import Admg, GraphError, NodeId, node
from .identification import IdentificationError, Unidentifiable, UnsupportedTransport, identify
from .markov import (
    MarkovError,
    Schedule,
    StateDistribution,
    TransitionMatrix,
    marginalize,
    read_distribution_csv,
    read_schedule_csv,
)
from .model import DcnSpec, SpecError, classify
from .oracle import OracleError, dcn_oracle, domain_pair, random_dcn_scm
from .pipeline import (
    DcnQuery,
    PipelineError,
    cdcn_id_dynamic,
    cdcn_id_static,
    dcn_id_dynamic,
    dcn_id_static,
    dcn_sid,
    source_experiments_from_json,
    source_kernel,
    trajectory,
)

TOLERANCE_ENV = "DCNID_TOLERANCE"
EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


class UsageError(ValueError):
    pass


def default_tolerance() -> float:
    raw = os.environ.get(TOLERANCE_ENV)
    if raw is None:
        return 1e-9
    try:
        tol = float(raw)
    except ValueError:
        raise UsageError(f"{TOLERANCE_ENV}={raw!r} is not a number") from None
    if not tol > 0:
        raise UsageError(f"{TOLERANCE_ENV} must be > 0")
    return tol


# -- argument parsing -----------------------------------------------------------------


def _names(text: str) -> List[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _assignment(text: Optional[str]) -> Optional[Dict[str, int]]:
    if text is None:
        return None
    out = {}
    for part in _names(text):
        k, sep, v = part.partition("=")
        if not sep:
            raise UsageError(f"--value expects name=int pairs, got {part!r}")
        try:
            out[k.strip()] = int(v)
        except ValueError:
            raise UsageError(f"--value: {part!r} is not an integer assignment") from None
    return out


def _add_query(p: argparse.ArgumentParser, value_required: bool = False) -> None:
    p.add_argument("--spec", required=True, help="DCN spec JSON")
    p.add_argument("--x", required=True, help="intervened metavariables, comma separated")
    p.add_argument("--tx", type=int, required=True, help="intervention slice")
    p.add_argument("--y", required=True, help="outcome metavariables, comma separated")
    p.add_argument("--ty", type=int, required=True, help="outcome slice")
    p.add_argument("--value", required=value_required, help="intervention value, e.g. tr1=1")
    p.add_argument("--t0", type=int, default=0, help="first slice of the data")


def _add_data(p: argparse.ArgumentParser) -> None:
    p.add_argument("--schedule", help="transition schedule CSV")
    p.add_argument("--p0", help="initial distribution CSV")
    p.add_argument("--oracle-seed", type=int, help="use a random oracle model with this seed as the data source")
    p.add_argument("--latent-card", type=int, default=2)
    p.add_argument("--pad-history", action="store_true", help="allow t_x < t0 + 2 by padding earlier slices")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dcnid", description="Causal effect identification in dynamic causal networks")
    ap.add_argument("--tolerance", type=float, help=f"numeric tolerance (default ${TOLERANCE_ENV} or 1e-9)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("identify", help="identify and evaluate P(y@ty | do(x@tx))")
    _add_query(p)
    _add_data(p)
    p.add_argument("--method", choices=["auto", "dcn", "cdcn"], default="auto")
    p.add_argument("--format", choices=["json", "csv"], default="json")

    p = sub.add_parser("trajectory", help="per-slice distributions under an intervention")
    _add_query(p, value_required=True)
    _add_data(p)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--format", choices=["json", "csv"], default="json")

    p = sub.add_parser("transport", help="target-domain effect from source experiments")
    _add_query(p)
    _add_data(p)
    p.add_argument("--selection", default="", help="metavariables whose mechanism differs between domains")
    p.add_argument("--source-experiments", help="source experiment kernels JSON")
    p.add_argument("--source-seed", type=int, help="oracle seed for the source domain (with --oracle-seed for the target)")
    p.add_argument("--format", choices=["json"], default="json")

    p = sub.add_parser("hedge", help="identify P(y | do(x)) on a graph or report its hedge")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--graph", help="ADMG JSON")
    src.add_argument("--spec", help="DCN spec JSON (unrolled over --window)")
    p.add_argument("--window", help="t_from,t_to for --spec")
    p.add_argument("--x", required=True, help="nodes, e.g. x or x@3, comma separated")
    p.add_argument("--y", required=True)
    p.add_argument("--format", choices=["json"], default="json")

    p = sub.add_parser("fuzz", help="soundness and completeness fuzzing of ID")
    p.add_argument("--graphs", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-nodes", type=int, default=6)
    p.add_argument("--params", type=int, default=5)
    p.add_argument("--no-completeness", action="store_true")
    p.add_argument("--format", choices=["json"], default="json")

    p = sub.add_parser("oracle-check", help="compare a pipeline against a random oracle model")
    p.add_argument("--spec", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--x")
    p.add_argument("--tx", type=int)
    p.add_argument("--y")
    p.add_argument("--value")
    p.add_argument("--latent-card", type=int, default=2)
    p.add_argument("--format", choices=["json"], default="json")
    return ap


# -- data loading -------------------------------------------------------------------------


def _read(path: str) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as e:
        raise UsageError(f"{path}: {e.strerror}") from None


def _load_json(path: str):
    try:
        return json.loads(_read(path))
    except json.JSONDecodeError as e:
        raise UsageError(f"{path}: line {e.lineno}: column {e.colno}: {e.msg}") from None


def _query(args, spec: DcnSpec) -> DcnQuery:
    value = _assignment(args.value)
    q = DcnQuery(tuple(_names(args.y)), args.ty, tuple(_names(args.x)), args.tx, value)
    for v in q.x + q.y:
        if v not in spec.card:
            raise UsageError(f"{args.spec}: no metavariable named {v!r}")
    return q


class _Data:
    def __init__(self, schedule: Schedule, p0: StateDistribution, t0: int, observations=None, model=None):
        self.schedule = schedule
        self.p0 = p0
        self.t0 = t0
        self.observations = observations
        self.model = model


def _data(args, spec: DcnSpec, query: DcnQuery) -> _Data:
    static = classify(spec).is_static
    if args.oracle_seed is not None:
        if args.schedule or args.p0:
            raise UsageError("--oracle-seed replaces --schedule and --p0; give one or the other")
        m = random_dcn_scm(spec, args.oracle_seed, args.latent_card, args.t0)
        horizon = max(query.t_y, query.t_x + 1)
        sched = Schedule({t: m.transition(t) for t in range(args.t0, horizon + 1)})
        obs = None if static else (lambda a, b: m.window_joint(a, b))
        return _Data(sched, m.marginals(args.t0)[0], args.t0, obs, m)
    if not static:
        raise UsageError("specs with confounders spanning slices need --oracle-seed as their data source")
    if not args.schedule or not args.p0:
        raise UsageError("give --schedule and --p0, or --oracle-seed")
    sched = read_schedule_csv(_read(args.schedule), args.schedule)
    p0 = read_distribution_csv(_read(args.p0), args.p0)
    return _Data(sched, p0, args.t0)


def _pad(args, data: _Data, query: DcnQuery) -> _Data:
    """Move the first slice back to ``t_x - 2`` with identity transitions.

    The prepended slices repeat the initial distribution; static windows only
    read ``P(V_{t_x-1})`` from the data, which this fixes to ``p0``.
    """
    need = query.t_x - 2
    if not args.pad_history or need >= data.t0:
        return data
    if data.observations is not None:
        raise UsageError("--pad-history is only available for static specs")
    eye = TransitionMatrix.identity(data.schedule.index)
    mats = dict(data.schedule.mats)
    mats.setdefault(data.t0, data.schedule.at(data.t0))
    for t in range(need, data.t0):
        mats[t] = eye
    return _Data(Schedule(mats), data.p0, need, None, data.model)


# -- commands ------------------------------------------------------------------------------


def _emit(doc) -> str:
    return json.dumps(doc, sort_keys=False, allow_nan=False) + "\n"


def _results_json(res) -> List[dict]:
    return [r.to_json() for r in (res if isinstance(res, list) else [res])]


def _results_csv(res) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    rows = res if isinstance(res, list) else [res]
    labels = rows[0].distribution.index.labels()
    w.writerow(["x_value"] + labels)
    for r in rows:
        xv = ",".join(f"{k}={v}" for k, v in sorted(r.x_value.items()))
        w.writerow([xv] + [repr(float(p)) for p in r.distribution.probs])
    return buf.getvalue()


def cmd_identify(args) -> str:
    spec = DcnSpec.load(args.spec)
    query = _query(args, spec)
    data = _pad(args, _data(args, spec, query), query)
    static = classify(spec).is_static
    method = args.method
    if method == "auto":
        method = "cdcn"
    if static:
        fn = cdcn_id_static if method == "cdcn" else dcn_id_static
        res = fn(spec, query, data.schedule, data.p0, t0=data.t0)
    else:
        fn = cdcn_id_dynamic if method == "cdcn" else dcn_id_dynamic
        res = fn(spec, query, data.schedule, data.p0, observations=data.observations, t0=data.t0)
    if args.format == "csv":
        return _results_csv(res)
    doc = {"status": "identified", "command": "identify", "results": _results_json(res)}
    if args.oracle_seed is not None:
        doc["oracle_seed"] = args.oracle_seed
    return _emit(doc)


def trajectory_csv(spec: DcnSpec, traj: Sequence[Optional[StateDistribution]], t0: int) -> str:
    """One row per slice: slice, state probabilities, then the mean of each metavariable."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    labels = next(p for p in traj if p is not None).index.labels()
    w.writerow(["slice"] + labels + [f"mean_{m}" for m in spec.names])
    for k, p in enumerate(traj):
        if p is None:
            w.writerow([t0 + k] + [""] * (len(labels) + len(spec.names)))
            continue
        w.writerow([t0 + k] + [repr(float(v)) for v in p.probs] + [repr(p.mean(m)) for m in spec.names])
    return buf.getvalue()


def cmd_trajectory(args) -> str:
    spec = DcnSpec.load(args.spec)
    query = _query(args, spec)
    if args.horizon < query.t_y:
        raise UsageError(f"--horizon {args.horizon} must be >= --ty {query.t_y}")
    data = _pad(args, _data(args, spec, query), query)
    traj = trajectory(spec, query, data.schedule, data.p0, args.horizon, t0=data.t0, observations=data.observations)
    if args.format == "csv":
        return trajectory_csv(spec, traj, data.t0)
    doc = {
        "status": "identified",
        "command": "trajectory",
        "query": query.to_json(),
        "t0": data.t0,
        "trajectory": [p.to_json() if p is not None else None for p in traj],
        "means": {m: [p.mean(m) if p is not None else None for p in traj] for m in spec.names},
    }
    return _emit(doc)


def cmd_transport(args) -> str:
    spec = DcnSpec.load(args.spec)
    query = _query(args, spec)
    selection = _names(args.selection)
    truth = None
    if args.source_seed is not None:
        if args.oracle_seed is None or args.source_experiments:
            raise UsageError("--source-seed needs --oracle-seed for the target and no --source-experiments")
        src, tgt = domain_pair(spec, selection, args.source_seed, args.oracle_seed, args.latent_card, args.t0)
        shape = [spec.card[v] for v in query.x]
        kernels = {vals: source_kernel(src, query, dict(zip(query.x, vals))) for vals in np.ndindex(*shape)}
        horizon = max(query.t_y, query.t_x + 1)
        sched = Schedule({t: tgt.transition(t) for t in range(args.t0, horizon + 1)})
        p0 = tgt.marginals(args.t0)[0]
        truth = tgt
    else:
        if not args.source_experiments:
            raise UsageError("give --source-experiments, or --source-seed with --oracle-seed")
        data = _data(args, spec, query)
        sched, p0 = data.schedule, data.p0
        kernels = source_experiments_from_json(spec, _load_json(args.source_experiments), args.source_experiments)
    res = dcn_sid(spec, query, sched, p0, kernels, selection, t0=args.t0)
    results = _results_json(res)
    if truth is not None:
        for r, doc in zip(res if isinstance(res, list) else [res], results):
            iv = {NodeId(k, query.t_x): v for k, v in r.x_value.items()}
            want = marginalize(truth.marginals(query.t_y, iv)[-1], query.y)
            doc["target_truth"] = want.probs.tolist()
            doc["max_error"] = float(np.max(np.abs(want.probs - r.distribution.probs)))
    doc = {"status": "identified", "command": "transport", "selection": selection, "results": results}
    return _emit(doc)


def _nodes(text: str) -> List[NodeId]:
    return [node(t) for t in _names(text)]


def cmd_hedge(args) -> str:
    if args.graph:
        try:
            g = Admg.from_json(_load_json(args.graph))
        except GraphError as e:
            raise UsageError(f"{args.graph}: {e}") from None
    else:
        from .model import unroll

        if not args.window:
            raise UsageError("--spec needs --window t_from,t_to")
        try:
            a, b = (int(v) for v in args.window.split(","))
        except ValueError:
            raise UsageError(f"--window expects t_from,t_to, got {args.window!r}") from None
        g = unroll(DcnSpec.load(args.spec), a, b)
    x, y = _nodes(args.x), _nodes(args.y)
    e = identify(g, y, x)
    return _emit({"status": "identified", "command": "hedge", "expression": render(e), "expression_tree": to_json(e)})


def cmd_fuzz(args, tol: float):
    if args.graphs < 1 or args.max_nodes < 2 or args.params < 1:
        raise UsageError("--graphs and --params must be >= 1 and --max-nodes >= 2")
    rep = fuzz_identify(
        args.seed, args.graphs, max_nodes=args.max_nodes, params=args.params, tol=tol,
        completeness=not args.no_completeness,
    )
    doc = dict(rep.to_json(), command="fuzz", tolerance=tol)
    return _emit(doc), rep.ok


def cmd_oracle_check(args, tol: float):
    spec = DcnSpec.load(args.spec)
    value = _assignment(args.value)
    iv = None
    if args.x is not None:
        if args.tx is None or value is None:
            raise UsageError("--x needs --tx and --value")
        iv = {NodeId(k, args.tx): v for k, v in value.items()}
    rep = dcn_oracle(spec, args.seed, args.horizon, iv, latent_card=args.latent_card)
    doc = dict(rep.to_json(), command="oracle-check", classification=classify(spec).overall)
    ok = True
    if iv is not None and args.y:
        query = DcnQuery(tuple(_names(args.y)), args.horizon, tuple(_names(args.x)), args.tx, value)
        m = random_dcn_scm(spec, args.seed, args.latent_card)
        sched = Schedule({t: m.transition(t) for t in range(0, args.horizon + 1)})
        if classify(spec).is_static:
            res = cdcn_id_static(spec, query, sched, rep.natural[0])
        else:
            res = cdcn_id_dynamic(spec, query, sched, rep.natural[0], observations=lambda a, b: m.window_joint(a, b))
        want = marginalize(rep.intervened[-1], query.y)
        err = float(np.max(np.abs(want.probs - res.distribution.probs)))
        ok = err <= tol
        doc["pipeline"] = {"distribution": res.distribution.probs.tolist(), "max_error": err, "ok": ok}
    return _emit(doc), ok


def run(argv: Optional[Sequence[str]] = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_ERROR if e.code else EXIT_OK
    try:
        tol = args.tolerance if args.tolerance is not None else default_tolerance()
        if not tol > 0:
            raise UsageError("--tolerance must be > 0")
        ok = True
        if args.command == "identify":
            out = cmd_identify(args)
        elif args.command == "trajectory":
            out = cmd_trajectory(args)
        elif args.command == "transport":
            out = cmd_transport(args)
        elif args.command == "hedge":
            out = cmd_hedge(args)
        elif args.command == "fuzz":
            out, ok = cmd_fuzz(args, tol)
        else:
            out, ok = cmd_oracle_check(args, tol)
    except Unidentifiable as e:
        stdout.write(_emit(dict(e.to_json(), command=args.command)))
        return EXIT_FAIL
    except UnsupportedTransport as e:
        stdout.write(_emit(dict(e.to_json(), command=args.command)))
        return EXIT_FAIL
    except (UsageError, SpecError, GraphError, MarkovError, PipelineError, IdentificationError, OracleError, OSError) as e:
        stderr.write(f"dcnid {args.command}: error: {e}\n")
        return EXIT_ERROR
    stdout.write(out)
    return EXIT_OK if ok else EXIT_ERROR


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
