import numpy as np
import pytest
from hypothesis import given, strategies as st

from passmec import queueing as qu
from oracles import resimulate_queues

P = qu.ComputeProfile()


def _state(q_local, q_bs=0.0):
    return qu.QueueState(np.asarray(q_local, dtype=float), float(q_bs))


def test_profile_service_rates():
    assert P.local_service_bits == 2e7
    assert P.bs_service_bits == 4e7
    with pytest.raises(ValueError):
        qu.ComputeProfile(rho=0)


def test_local_queue_examples():
    np.testing.assert_array_equal(qu.step_local_queue(None, [1e7, 3e7], P), [0.0, 0.0])
    np.testing.assert_array_equal(qu.step_local_queue(_state([0.0]), [1e7], P), [0.0])
    slow = qu.ComputeProfile(rho=500)
    np.testing.assert_allclose(qu.step_local_queue(_state([0.0]), [1e7], slow), [6e6])


def test_bs_queue_examples():
    assert qu.step_bs_queue(None, 9e9, P) == 0.0
    assert qu.step_bs_queue(_state([0.0], 0.0), 5e7, P) == pytest.approx(1e7)
    s = _state([0.0], 0.0)
    for _ in range(50):
        s = qu.step_queues(s, [2e7], [0.0], P)
        assert s.q_bs == 0.0


def test_local_latency_examples():
    _, tc = qu.local_latency(0.0, 2e7, 1.0, P)
    assert tc == 0.0
    _, tc = qu.local_latency(0.0, 2e7, 0.5, P)
    assert tc == pytest.approx(1.0)
    tq, _ = qu.local_latency(2e6, 2e7, 0.0, P)
    assert tq == pytest.approx(0.2)


def test_offload_latency_examples():
    tx, tq, tc = qu.offload_latency(0.0, [2e7], [0.0], [1e6], 0.0, P)
    assert (tx[0], tq[0], tc[0]) == (0.0, 0.0, 0.0)
    tx, _, tc = qu.offload_latency(0.0, [2e7], [0.5], [2e7], 0.0, P)
    assert tx[0] == pytest.approx(0.5)
    assert tc[0] == pytest.approx(0.5)
    tx, tq, _ = qu.offload_latency(4e7, [2e7], [0.5], [2e7], 0.3, P)
    assert tx[0] == pytest.approx(0.8)
    assert tq[0] == pytest.approx(2.0)


def test_zero_rate_offload_is_sentinel():
    tx, _, _ = qu.offload_latency(0.0, [2e7, 2e7], [0.5, 0.0], [0.0, 0.0], 0.0, P)
    assert tx[0] == qu.INFINITE_LATENCY
    assert tx[1] == 0.0


def test_movement_delay_examples():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert qu.movement_delay(x, x, 0.1) == 0.0
    y = x.copy()
    y[0, 0] += 2.0
    assert qu.movement_delay(x, y, 0.1) == pytest.approx(0.2)
    y = x.copy()
    y[0, 1] -= 1.0
    y[1, 0] += 3.0
    assert qu.movement_delay(x, y, 0.1) == pytest.approx(0.3)


def _breakdown(local, off):
    z = np.zeros(1)
    return qu.LatencyBreakdown(z, np.array([local]), np.array([off]), z, z, z, z)


def test_total_latency_examples():
    assert qu.total_latency(_breakdown(1.0, 0.4))[0] == 1.0
    assert qu.total_latency(_breakdown(0.7, 0.7))[0] == 0.7
    b = qu.latency_breakdown(qu.QueueState.empty(2), [2e7, 2e7], [0.0, 0.0], [1e6, 1e6], 0.0, P)
    np.testing.assert_array_equal(b.t_total, b.t_local_compute)


def test_breakdown_rows_serialise():
    b = qu.latency_breakdown(qu.QueueState.empty(2), [2e7, 2e7], [0.2, 0.7], [1e7, 2e7], 0.1, P)
    rows = b.rows()
    assert [r["ue"] for r in rows] == [0, 1]
    assert rows[1]["t_total"] == b.t_total[1]


queues = st.floats(0, 1e9)
bits = st.floats(0, 1e8)
betas = st.floats(0, 1)
rates = st.floats(1e3, 1e9)


@given(queues, queues, bits, betas, rates, st.floats(0, 2))
def test_components_nonnegative_and_max(q, qb, L, beta, r, move):
    b = qu.latency_breakdown(_state([q], qb), [L], [beta], [r], move, P)
    for name in ("t_local_queue", "t_local_compute", "t_off_tx", "t_off_queue", "t_off_compute", "t_move"):
        assert getattr(b, name)[0] >= 0
    local = b.t_local_queue + b.t_local_compute
    off = b.t_off_tx + b.t_off_queue + b.t_off_compute
    assert b.t_total[0] == max(local[0], off[0])


@given(queues, queues, bits, betas, rates, st.floats(0, 1e9), st.floats(1.0, 10.0))
def test_latency_monotone(q, qb, L, beta, r, dq, factor):
    base = qu.latency_breakdown(_state([q], qb), [L], [beta], [r], 0.0, P).t_total[0]
    assert qu.latency_breakdown(_state([q + dq], qb), [L], [beta], [r], 0.0, P).t_total[0] >= base
    assert qu.latency_breakdown(_state([q], qb + dq), [L], [beta], [r], 0.0, P).t_total[0] >= base
    assert qu.latency_breakdown(_state([q], qb), [L * factor], [beta], [r], 0.0, P).t_total[0] >= base
    assert qu.latency_breakdown(_state([q], qb), [L], [beta], [r * factor], 0.0, P).t_total[0] <= base


@given(queues, bits)
def test_beta_extremes(q, L):
    b0 = qu.latency_breakdown(_state([q], q), [L], [0.0], [1e6], 0.5, P)
    assert b0.t_off_tx[0] == 0.0 and b0.t_off_compute[0] == 0.0
    b1 = qu.latency_breakdown(_state([q], q), [L], [1.0], [1e6], 0.5, P)
    assert b1.t_local_compute[0] == 0.0


@given(st.lists(st.tuples(bits, bits), min_size=1, max_size=5), queues)
def test_queue_conservation(lams, q0):
    lam = np.array([a for a, _ in lams])
    prev = _state(np.full(len(lam), q0))
    new = qu.step_local_queue(prev, lam, P)
    assert np.all(new >= 0)
    assert np.all(new - prev.q_local <= lam + 1e-6)
    assert np.all(new >= prev.q_local + lam - P.local_service_bits - 1e-6)


def test_trajectory_matches_resimulation():
    rng = np.random.default_rng(0)
    for _ in range(100):
        K = int(rng.integers(1, 6))
        L = rng.uniform(0, 5e7, (30, K))
        beta = rng.uniform(0, 1, (30, K))
        s = qu.QueueState.empty(K)
        got = []
        for t in range(30):
            got.append((s.q_local.tolist(), s.q_bs))
            s = qu.step_queues(s, L[t], beta[t], P)
        ref = resimulate_queues(((1 - beta) * L).tolist(), (beta * L).sum(axis=1).tolist(),
                                P.local_service_bits, P.bs_service_bits)
        assert got == ref
