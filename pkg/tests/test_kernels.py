import numpy as np
from hypothesis import given, settings, strategies as st

from gossipnet import kernels
from gossipnet._accel import python_impl
from gossipnet.analysis import activation_stats
from gossipnet.graph import build_topology


def window_flags_oracle(seq, top, T, stride, gap_limit, count_limit):
    """Direct recomputation of the three window conditions, one window at a time."""
    m = top.num_edges
    out = []
    for s0 in range(0, len(seq) - T + 1, stride):
        win = list(seq[s0:s0 + T])
        bits = 0
        for e in range(m):
            pos = [-1] + [k for k, x in enumerate(win) if x == e] + [T]
            if len(pos) == 2:
                bits |= 1
            for a, b in zip(pos[:-1], pos[1:]):
                if b - a - 1 > gap_limit[e]:
                    bits |= 2
                for p, f in enumerate(top.adjacent_edges[e]):
                    if win[a + 1:b].count(f) > count_limit[e, p]:
                        bits |= 4
        out.append(bits)
    return np.array(out, dtype=np.int64)


def _csr(top):
    ptr = np.zeros(top.num_edges + 1, dtype=np.int64)
    for e, adj in enumerate(top.adjacent_edges):
        ptr[e + 1] = ptr[e] + len(adj)
    idx = np.concatenate([np.asarray(a, dtype=np.int64) for a in top.adjacent_edges])
    return ptr, idx


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 12), st.integers(1, 4), st.integers(1, 6), st.integers(0, 4))
def test_window_violations_matches_oracle(seed, T, stride, gap, cnt):
    top = build_topology("cycle", 5)
    rng = np.random.default_rng(seed)
    seq = rng.integers(0, top.num_edges, size=40).astype(np.int64)
    gap_limit = np.full(top.num_edges, float(gap))
    dmax = max(len(a) for a in top.adjacent_edges)
    count_limit = np.full((top.num_edges, dmax), float(cnt))
    ptr, idx = _csr(top)
    expect = window_flags_oracle(seq, top, T, stride, gap_limit, count_limit)
    for fn in (kernels.window_violations, python_impl(kernels.window_violations)):
        got = fn(seq, top.num_edges, T, stride, gap_limit, ptr, idx, count_limit)
        np.testing.assert_array_equal(got, expect)


def test_activation_stats_matches_oracle_on_path():
    top = build_topology("path", 4)
    seq = np.array([0, 1, 1, 2, 0, 2, 2, 2, 1, 0, 1, 2], dtype=np.int64)
    rep = activation_stats(seq, top, np.ones(3), 5, a=2.0, b=1.0)
    limit = np.ones((3, 3))
    expect = window_flags_oracle(seq, top, 5, 1, np.full(3, 2.0), limit)
    np.testing.assert_array_equal(rep.flags, expect)


def test_rlnm_filter_compiled_equals_python():
    top = build_topology("cycle", 6)
    rng = np.random.default_rng(0)
    times = np.cumsum(rng.exponential(0.3, 2000))
    edges = rng.integers(0, top.num_edges, 2000).astype(np.int64)
    flips = rng.random(2000)
    tau = rng.uniform(0.5, 2.0, top.num_edges)
    res = []
    for fn in (kernels.rlnm_filter, python_impl(kernels.rlnm_filter)):
        busy = np.full(top.n, -np.inf)
        status = np.empty(2000, dtype=np.int8)
        init = np.empty(2000, dtype=np.int64)
        fn(times, edges, flips, top.edge_u, top.edge_v, tau, 0.1, busy, status, init)
        res.append((status.copy(), init.copy(), busy.copy()))
    for a, b in zip(*res):
        np.testing.assert_array_equal(a, b)
    status = res[0][0]
    assert {0, 1, 2} <= set(status.tolist())
