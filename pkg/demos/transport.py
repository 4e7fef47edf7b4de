"""Carrying an experiment from one city to another.

Both cities share the traffic network, but the road-choice mechanisms (tr1,
tr2) differ. Experiments forcing road 1 were run in the source city; only
observations exist in the target. The selection diagram marks the roads,
and the transport formula combines the two.

Run: python3 demos/transport.py
"""

import numpy as np

from dcnid.expr import InterventionalAtom, atoms, render
from dcnid.graph import NodeId
from dcnid.markov import Schedule, marginalize
from dcnid.oracle import domain_pair
from dcnid.pipeline import DcnQuery, dcn_id_static, dcn_sid, source_kernel
from dcnid.traffic import traffic_spec

spec = traffic_spec()
source, target = domain_pair(spec, ["tr1", "tr2"], source_seed=11, target_seed=12)
q = DcnQuery("d", 7, "tr1", 3)
kernels = {(v,): source_kernel(source, q, {"tr1": v}) for v in (0, 1)}
sched, p0 = Schedule(target.transition(2)), target.marginals(0)[0]

res = dcn_sid(spec, q, sched, p0, kernels, ["tr1", "tr2"])
print("transport formula:", render(res[0].symbolic))
print("source-experiment terms:", sum(isinstance(a, InterventionalAtom) for a in atoms(res[0].symbolic)))
naive = dcn_id_static(spec, q, Schedule(source.transition(2)), source.marginals(0)[0])
for r, s in zip(res, naive):
    iv = {NodeId("tr1", 3): r.x_value["tr1"]}
    truth = marginalize(target.marginals(7, iv)[-1], ["d"]).probs
    print(f"do(tr1={r.x_value['tr1']}): transported P(d=1) {r.distribution.probs[1]:.4f}, "
          f"target truth {truth[1]:.4f}, source effect {s.distribution.probs[1]:.4f}")
