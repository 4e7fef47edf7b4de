import json

from hypothesis import given, settings, strategies as st

from dcnid.fuzz import fuzz_identify, random_admg, random_dcn_spec, random_query
from dcnid.model import classify, dynamic_time_span
from dcnid.oracle import make_rng


def test_report_is_reproducible():
    a = fuzz_identify(3, 40)
    b = fuzz_identify(3, 40)
    assert a.to_json() == b.to_json() and a.ok and a.graphs == 40
    assert json.loads(json.dumps(a.to_json()))["identified"] + a.failed == 40


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 7))
def test_random_queries_are_disjoint(seed, n):
    rng = make_rng(seed)
    g = random_admg(rng, n)
    x, y = random_query(rng, g)
    assert x and y and not set(x) & set(y) and set(x) | set(y) <= set(g.nodes)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 4))
def test_dynamic_specs_have_finite_spans(seed, n):
    spec = random_dcn_spec(make_rng(seed), n, static=False)
    assert spec.cross_conf and not classify(spec).is_static
    for m in spec.names:
        assert dynamic_time_span(spec, [m]) >= 0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_static_specs_are_static(seed):
    assert classify(random_dcn_spec(make_rng(seed), 3, static=True)).is_static
