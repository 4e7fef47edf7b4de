import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dcnid.markov import (
    MarkovError,
    Schedule,
    StateDistribution,
    StateIndex,
    TransitionMatrix,
    chain,
    marginalize,
    power,
    read_distribution_csv,
    read_matrix_csv,
    read_schedule_csv,
    restrict_matrix,
    rollout,
    step,
    write_distribution_csv,
    write_matrix_csv,
    write_schedule_csv,
)
from dcnid.traffic import T_STEADY, T_WEEKDAY, T_WEEKEND, traffic_index, weekday_schedule

IDX = traffic_index()


def test_state_index_order():
    assert IDX.label(0) == "d=0,tr1=0,tr2=0"
    assert IDX.label(4) == "d=1,tr1=0,tr2=0"
    assert IDX.encode({"d": 0, "tr1": 1, "tr2": 1}) == 3
    assert IDX.parse_label("d=1,tr1=1,tr2=0") == 6
    assert IDX.decode(5) == (1, 0, 1)
    mixed = StateIndex(("a", "b"), (3, 2))
    assert [mixed.decode(i) for i in range(mixed.size)] == [(a, b) for a in range(3) for b in range(2)]


def test_step_from_uniform(uniform8):
    assert np.allclose(step(uniform8, T_WEEKDAY).probs, [0.1, 0.2, 0, 0.2, 0.2, 0.1, 0, 0.2], atol=1e-12)


def test_step_from_point_mass():
    p = step(StateDistribution.point(IDX, 0), T_WEEKDAY)
    assert np.allclose(p.probs, [0, 0.4, 0, 0.3, 0, 0.2, 0, 0.1], atol=1e-12)


def test_identity_step(uniform8):
    assert np.allclose(step(uniform8, TransitionMatrix.identity(IDX)).probs, uniform8.probs)


def test_power_edges():
    assert power(T_STEADY, 0).allclose(TransitionMatrix.identity(IDX))
    assert power(T_STEADY, 1).allclose(T_STEADY)
    with pytest.raises(MarkovError):
        power(T_STEADY, -1)


def stationary_by_iteration(t, tol=1e-15, limit=100000):
    p = np.full(t.index.size, 1.0 / t.index.size)
    for _ in range(limit):
        q = p @ t.entries
        if np.max(np.abs(q - p)) < tol:
            return q
        p = q
    raise AssertionError("no fixed point")


def row_spread(m):
    return float(np.max(np.ptp(m.entries, axis=0)))


def test_steady_matrix_converges_geometrically():
    # second eigenvalue is -0.84, so the row spread shrinks by 0.84 per step
    pi = stationary_by_iteration(T_STEADY)
    spreads = [row_spread(power(T_STEADY, k)) for k in (20, 40, 60, 80, 100)]
    assert all(b < a for a, b in zip(spreads, spreads[1:]))
    assert spreads[1] == pytest.approx(3.5648571756818903e-04, rel=1e-6)
    assert spreads[3] < 1e-6
    assert np.allclose(power(T_STEADY, 200).entries, pi[None, :], atol=1e-12)
    ratio = (spreads[4] / spreads[3]) ** (1 / 20)
    assert ratio == pytest.approx(0.84, abs=1e-3)


def test_chain_matches_weekly_products():
    week = [T_WEEKDAY] * 5 + [T_WEEKEND] * 2
    want = np.linalg.matrix_power(T_WEEKDAY.entries, 5) @ np.linalg.matrix_power(T_WEEKEND.entries, 2)
    assert np.allclose(chain(week).entries, want, atol=1e-12)
    assert chain([T_WEEKDAY]).allclose(T_WEEKDAY)
    assert chain([TransitionMatrix.identity(IDX)] * 3).allclose(TransitionMatrix.identity(IDX))
    with pytest.raises(MarkovError):
        chain([])


def test_weekday_schedule_calendar():
    s = weekday_schedule()
    assert [s.at(t) is T_WEEKDAY for t in range(7)] == [True, True, True, True, False, False, True]
    assert s.span(0, 7).allclose(chain([s.at(t) for t in range(7)]))
    assert s.span(3, 3).allclose(TransitionMatrix.identity(IDX))


def test_schedule_uses_latest_key():
    s = Schedule({0: T_WEEKDAY, 5: T_WEEKEND})
    assert s.at(4) is T_WEEKDAY and s.at(5) is T_WEEKEND and s.at(50) is T_WEEKEND and s.at(-3) is T_WEEKDAY


def test_rollout_length(uniform8):
    r = rollout(uniform8, Schedule(T_WEEKDAY), 2, 6)
    assert len(r) == 5 and r[0] is uniform8


def test_marginalize(uniform8):
    assert np.allclose(marginalize(uniform8, ["d"]).probs, [0.5, 0.5])
    assert np.allclose(marginalize(uniform8, IDX.variables).probs, uniform8.probs)
    assert np.allclose(marginalize(uniform8, []).probs, [1.0])
    with pytest.raises(Exception):
        marginalize(uniform8, ["nope"])


def test_restrict_matrix():
    assert restrict_matrix(T_WEEKDAY, IDX.variables, IDX.variables).allclose(T_WEEKDAY)
    r = restrict_matrix(T_WEEKDAY, IDX.variables, ["d"])
    assert np.allclose(r.entries[:, 1], [0.3] * 4 + [0.7] * 4)
    # rows only depend on d, so dropping tr1, tr2 from the rows is exact for any context
    p = StateDistribution(IDX, np.arange(1, 9) / 36)
    r = restrict_matrix(T_WEEKDAY, ["d"], IDX.variables, p)
    assert np.allclose(r.entries, T_WEEKDAY.entries[[0, 4]])


def test_restrict_matrix_zero_context():
    p = StateDistribution(IDX, [0.25] * 4 + [0] * 4)
    r = restrict_matrix(T_STEADY, ["d"], ["d"], p)
    assert len(r.diagnostics) == 1 and "d=1" in r.diagnostics[0]


def test_matrix_validation():
    with pytest.raises(MarkovError, match="sums to"):
        TransitionMatrix(StateIndex.binary(["a"]), [[0.5, 0.4], [0.5, 0.5]])
    with pytest.raises(MarkovError):
        TransitionMatrix(StateIndex.binary(["a"]), [[1.2, -0.2], [0.5, 0.5]])
    with pytest.raises(MarkovError):
        step(StateDistribution.uniform(StateIndex.binary(["a"])), T_WEEKDAY)


def test_csv_roundtrips(uniform8):
    assert read_matrix_csv(write_matrix_csv(T_STEADY)).allclose(T_STEADY, atol=0)
    s = read_schedule_csv(write_schedule_csv(weekday_schedule(7)))
    assert all(s.at(t).allclose(weekday_schedule(7).at(t), atol=0) for t in range(8))
    assert np.array_equal(read_distribution_csv(write_distribution_csv(uniform8)).probs, uniform8.probs)


def test_csv_errors_name_position():
    text = write_matrix_csv(T_WEEKDAY).splitlines()
    text[3] = text[3].replace("0.0", "zero", 1)
    with pytest.raises(MarkovError, match=r"m.csv: line 4: column \d+"):
        read_matrix_csv("\n".join(text), "m.csv")
    with pytest.raises(MarkovError, match="header"):
        read_distribution_csv("a,b\n1,2\n", "p.csv")


def test_json_roundtrip():
    assert TransitionMatrix.from_json(T_WEEKEND.to_json()).allclose(T_WEEKEND, atol=0)


stochastic = arrays(np.float64, (4, 4), elements=st.floats(0.01, 1.0)).map(lambda a: a / a.sum(axis=1, keepdims=True))
simplex = arrays(np.float64, (4,), elements=st.floats(0.0, 1.0)).filter(lambda a: a.sum() > 0.1).map(lambda a: a / a.sum())
I2 = StateIndex.binary(["a", "b"])


@settings(max_examples=100, deadline=None)
@given(simplex, stochastic)
def test_step_stays_on_simplex(p, t):
    q = step(StateDistribution(I2, p), TransitionMatrix(I2, t)).probs
    assert np.all(q >= 0) and abs(q.sum() - 1) < 1e-9


@settings(max_examples=100, deadline=None)
@given(stochastic, stochastic, stochastic, st.integers(0, 6))
def test_chain_and_power_algebra(a, b, c, k):
    A, B, C = (TransitionMatrix(I2, m) for m in (a, b, c))
    assert chain([chain([A, B]), C]).allclose(chain([A, chain([B, C])]), atol=1e-12)
    assert power(A, k + 1).allclose(chain([power(A, k), A]), atol=1e-12 * 4)


@settings(max_examples=50, deadline=None)
@given(stochastic, st.integers(1, 30))
def test_stationary_points_stay_put(t, n):
    T = TransitionMatrix(I2, t)
    pi = stationary_by_iteration(T, tol=1e-14)
    p = StateDistribution(I2, pi / pi.sum())
    for _ in range(n):
        p = step(p, T)
    assert np.max(np.abs(p.probs - pi)) <= n * 1e-9
