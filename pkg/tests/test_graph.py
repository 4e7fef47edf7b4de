import pytest
from hypothesis import given, settings, strategies as st

from dcnid.graph import (
    Admg,
    CycleError,
    GraphError,
    Hedge,
    NodeId,
    ancestors,
    c_components,
    cut_incoming,
    cut_outgoing,
    d_separated,
    descendants,
    find_hedge,
    find_hedge_exhaustive,
    is_c_forest,
    is_hedge,
    latent_project,
    node,
    topo_order,
)
from dcnid.model import unroll
from dcnid.traffic import traffic_spec, window_names


def ns(*names):
    return frozenset(node(n) for n in names)


def chain():
    return Admg(["a", "b", "c"], [("a", "b"), ("b", "c")])


# -- nodes and construction


def test_node_labels_round_trip():
    n = NodeId("tr1", 7)
    assert n.label == "tr1@7"
    assert str(n) == "tr1@7"
    assert NodeId.parse("tr1@7") == n
    assert str(NodeId("x")) == "x"
    assert node("x") == NodeId("x", 0)
    with pytest.raises(GraphError):
        NodeId.parse("x@later")


def test_node_order_is_name_then_time():
    assert sorted([NodeId("b", 0), NodeId("a", 5), NodeId("a", 1)]) == [NodeId("a", 1), NodeId("a", 5), NodeId("b", 0)]


def test_cycle_rejected():
    with pytest.raises(CycleError):
        Admg(["a", "b"], [("a", "b"), ("b", "a")])


def test_self_loops_and_unknown_endpoints_rejected():
    with pytest.raises(GraphError):
        Admg(["a"], [("a", "a")])
    with pytest.raises(GraphError):
        Admg(["a"], [], [("a", "a")])
    with pytest.raises(GraphError):
        Admg(["a"], [("a", "b")])


def test_json_round_trip(bow):
    g = Admg(["a", "b"], [("a", "b")], [("a", "b")], {node("a"): 3})
    assert Admg.from_json(g.to_json()) == g
    assert g.card[node("a")] == 3 and g.card[node("b")] == 2


# -- reachability


def test_ancestors_chain():
    g = chain()
    assert ancestors(g, ["c"]) == ns("a", "b", "c")
    assert ancestors(g, ["a"]) == ns("a")
    assert descendants(g, ["b"]) == ns("b", "c")


def test_ancestors_of_last_window_slice_are_everything():
    g = unroll(traffic_spec(), 1, 4)
    v = window_names(3)
    assert ancestors(g, [v["v10"], v["v11"], v["v12"]]) == frozenset(v.values())


def test_cut_incoming_examples():
    g = Admg(["a", "b"], [("a", "b")])
    h = cut_incoming(g, ["b"])
    assert not h.directed and not h.bidirected
    h = cut_incoming(Admg(["a", "b"], [], [("a", "b")]), ["b"])
    assert not h.bidirected
    h = cut_incoming(chain(), ["b"])
    assert h.directed == frozenset({(node("b"), node("c"))})


def test_cut_outgoing_examples():
    assert not cut_outgoing(Admg(["a", "b"], [("a", "b")]), ["a"]).directed
    g = Admg(["a", "b", "c"], [("a", "c")], [("a", "b")])
    h = cut_outgoing(g, ["a"])
    assert not h.directed and h.bidirected == g.bidirected
    assert cut_outgoing(g, []) == g


def test_d_separation_examples():
    g = Admg(["x", "m", "y"], [("x", "m"), ("m", "y")])
    assert d_separated(g, ["x"], ["y"], ["m"])
    assert not d_separated(g, ["x"], ["y"])
    c = Admg(["x", "c", "y"], [("x", "c"), ("y", "c")])
    assert d_separated(c, ["x"], ["y"])
    assert not d_separated(c, ["x"], ["y"], ["c"])
    assert not d_separated(Admg(["x", "y"], [], [("x", "y")]), ["x"], ["y"])


def test_d_separation_descendant_of_collider_opens():
    g = Admg(["x", "c", "y", "d"], [("x", "c"), ("y", "c"), ("c", "d")])
    assert not d_separated(g, ["x"], ["y"], ["d"])


def test_c_components():
    g = Admg(["a", "b", "c"], [("a", "c")], [("a", "b"), ("b", "c")])
    assert c_components(g) == [ns("a", "b", "c")]
    assert c_components(chain()) == [ns("a"), ns("b"), ns("c")]
    slice_ = unroll(traffic_spec(), 0, 0)
    assert sorted(c_components(slice_), key=len) == [ns("d"), ns("tr1", "tr2")]


def test_topological_order_tie_breaks_by_name():
    assert topo_order(Admg(["a", "b"], [("a", "b")])) == [node("a"), node("b")]
    assert topo_order(Admg(["b", "a"])) == [node("a"), node("b")]
    g = Admg(["a", "b", "c", "d"], [("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")])
    assert topo_order(g) == [node(v) for v in "abcd"]


# -- C-forests and hedges


def test_c_forest_examples(bow):
    assert is_c_forest(bow, ns("x", "y"), ns("y"))
    assert is_c_forest(bow, ns("y"), ns("y"))
    assert not is_c_forest(bow, ns("x", "y"), ns("x"))


def test_two_children_inside_the_set():
    # a has two children in the set: a forest only as an edge subset
    g = Admg(["a", "b", "c"], [("a", "b"), ("a", "c"), ("b", "c")], [("a", "b"), ("b", "c")])
    assert not is_c_forest(g, ns("a", "b", "c"), ns("c"), induced=True)
    assert is_c_forest(g, ns("a", "b", "c"), ns("c"))


def test_c_forest_needs_bidirected_connection():
    g = Admg(["a", "b"], [("a", "b")])
    assert not is_c_forest(g, ns("a", "b"), ns("b"))


def test_bow_hedge(bow):
    h = find_hedge(bow, ["x"], ["y"])
    assert h == Hedge(ns("x", "y"), ns("y"), ns("y"))
    assert is_hedge(bow, h, ["x"], ["y"])
    assert find_hedge_exhaustive(bow, ["x"], ["y"]) == h


def test_no_hedge_in_backdoor_graph(backdoor):
    assert find_hedge(backdoor, ["x"], ["y"]) is None
    assert find_hedge_exhaustive(backdoor, ["x"], ["y"]) is None


def test_no_hedge_without_intervention(bow):
    assert find_hedge_exhaustive(bow, [], ["y"]) is None


def test_hedge_json(bow):
    assert find_hedge(bow, ["x"], ["y"]).to_json() == {"F": ["x@0", "y@0"], "F_prime": ["y@0"], "R": ["y@0"]}


# -- latent projection


def test_latent_common_cause_becomes_bidirected():
    g = latent_project(["w", "tr1", "tr2"], [("w", "tr1"), ("w", "tr2")], ["w"])
    assert g.bidirected == frozenset({(node("tr1"), node("tr2"))})
    assert not g.directed


def test_latent_with_one_child_adds_nothing():
    g = latent_project(["u", "a", "b"], [("u", "a")], ["u"])
    assert not g.directed and not g.bidirected


def test_latent_on_directed_path_is_shortcut():
    g = latent_project(["a", "u", "b"], [("a", "u"), ("u", "b")], ["u"])
    assert g.directed == frozenset({(node("a"), node("b"))})


# -- properties


@st.composite
def graphs(draw, max_nodes=6):
    n = draw(st.integers(2, max_nodes))
    names = [f"v{i}" for i in range(n)]
    pairs = [(names[i], names[j]) for i in range(n) for j in range(i + 1, n)]
    d = [p for p in pairs if draw(st.booleans())]
    b = [p for p in pairs if draw(st.integers(0, 3)) == 0]
    return Admg(names, d, b)


@settings(max_examples=150, deadline=None)
@given(graphs(), st.data())
def test_d_separation_is_symmetric(g, data):
    nodes = list(g.nodes)
    a = data.draw(st.sampled_from(nodes))
    b = data.draw(st.sampled_from([n for n in nodes if n != a]))
    rest = [n for n in nodes if n not in (a, b)]
    w = data.draw(st.sets(st.sampled_from(rest))) if rest else set()
    assert d_separated(g, [a], [b], w) == d_separated(g, [b], [a], w)


@settings(max_examples=150, deadline=None)
@given(graphs())
def test_c_components_partition_nodes(g):
    comps = c_components(g)
    assert sorted(n for c in comps for n in c) == sorted(g.nodes)
    for a, b in g.bidirected:
        assert any(a in c and b in c for c in comps)


@settings(max_examples=150, deadline=None)
@given(graphs())
def test_topological_order_respects_edges(g):
    pos = {n: i for i, n in enumerate(topo_order(g))}
    assert all(pos[a] < pos[b] for a, b in g.directed)


@settings(max_examples=100, deadline=None)
@given(graphs())
def test_ancestors_are_closed_under_parents(g):
    s = [g.nodes[-1]]
    an = ancestors(g, s)
    assert all(g.parents(n) <= an for n in an)
