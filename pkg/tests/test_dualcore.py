import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gossipnet.dualcore import (
    CacdmState,
    CdmState,
    build_edge_dual,
    cacdm_contract,
    cacdm_params,
    cacdm_read,
    cacdm_step,
    cacdm_synced,
    cdm_step,
    edge_dual_cacdm_step,
    edge_dual_cdm_step,
    edge_dual_contract,
    edge_partial,
    gossip_matrix,
    lyapunov_cacdm,
    lyapunov_coefficient,
    lyapunov_from_nodes,
    lyapunov_rlnm,
    mixing_fraction,
    sync_step,
)
from gossipnet.errors import ClockRegression, InvalidParameter, InvalidState, NumericFailure
from gossipnet.graph import build_topology, laplacian, spectral_gap, topology_from_edges
from gossipnet.objective import (
    CustomSmoothLocal,
    ProblemInstance,
    QuadraticLocal,
    averaging_instance,
    dual_gap,
    dual_value,
    optimum,
    primal_point,
    quadratic_instance,
)
from oracles import expected_quadratic, second_moment_operator, slowest_second_moment_rate


def hetero_instance(n, d=1, seed=0):
    rng = np.random.default_rng(seed)
    return quadratic_instance(rng.uniform(0.5, 3.0, n), rng.normal(size=(n, d)))


# ---------------------------------------------------------------------- CDM


def test_cdm_step_two_nodes():
    top = build_topology("path", 2)
    inst = quadratic_instance(1.0, [[1.0], [0.0]])
    s = cdm_step(CdmState.zeros(inst), inst, top, (0, 1))
    np.testing.assert_array_equal(s.v, [[-0.5], [0.5]])
    np.testing.assert_array_equal(primal_point(inst, s.v), [[0.5], [0.5]])


def test_cdm_step_noop_at_equal_gradients():
    top = build_topology("cycle", 4)
    inst = quadratic_instance([1.0, 2.0, 1.0, 1.0], np.zeros((4, 1)))
    s = CdmState.zeros(inst)
    cdm_step(s, inst, top, 0)
    assert np.all(s.v == 0)


def test_cdm_unit_quadratic_is_pairwise_averaging():
    rng = np.random.default_rng(4)
    top = build_topology("cycle", 6)
    inst = quadratic_instance(1.0, rng.normal(size=(6, 3)))
    s = CdmState.zeros(inst)
    for _ in range(40):
        k = int(rng.integers(top.num_edges))
        i, j = top.edges[k]
        x = primal_point(inst, s.v)
        cdm_step(s, inst, top, k)
        y = primal_point(inst, s.v)
        np.testing.assert_allclose(y[i], (x[i] + x[j]) / 2, atol=1e-14)
        np.testing.assert_allclose(y[j], (x[i] + x[j]) / 2, atol=1e-14)
        others = [m for m in range(6) if m not in (i, j)]
        np.testing.assert_array_equal(y[others], x[others])


def test_cdm_rejects_non_edges():
    top = build_topology("path", 3)
    inst = averaging_instance(3)
    with pytest.raises(InvalidParameter):
        cdm_step(CdmState.zeros(inst), inst, top, (0, 2))
    with pytest.raises(InvalidParameter):
        cdm_step(CdmState.zeros(inst), inst, top, 5)


def test_cdm_leaves_state_on_oracle_failure():
    bad = CustomSmoothLocal(lambda x: 0.0, lambda x: np.array([x[0] ** 3 + x[0]]), 1.0, 30.0, max_iter=1, tol=1e-300)
    inst = ProblemInstance((QuadraticLocal(1.0, [0.0]), bad))
    s = CdmState(np.array([[1e6], [-1e6]]))
    before = s.v.copy()
    with pytest.raises(NumericFailure):
        cdm_step(s, inst, build_topology("path", 2), 0)
    np.testing.assert_array_equal(s.v, before)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_cdm_monotone_decrease_with_local_smoothness_bound(seed):
    rng = np.random.default_rng(seed)
    top = build_topology("grid2d", 2, 3)
    inst = hetero_instance(top.n, 2, seed)
    rates = rng.uniform(0.2, 2.0, top.num_edges)
    tr = build_edge_dual(top, inst, "cdm", rates)
    tr.lam = rng.normal(size=tr.lam.shape)
    for _ in range(30):
        k = int(rng.integers(top.num_edges))
        i, j = top.edges[k]
        grad = edge_partial(tr, inst, k)
        before = tr.value(inst)
        edge_dual_cdm_step(tr, inst, k)
        drop = before - tr.value(inst)
        s = 1 / inst.sigmas[i] + 1 / inst.sigmas[j]
        assert drop >= np.sum(grad**2) / (2 * tr.mu[k] ** 2 * s) - 1e-9


def test_cdm_preserves_zero_sum():
    rng = np.random.default_rng(5)
    top = build_topology("grid2d", 4, 4)
    inst = hetero_instance(top.n, 3, 5)
    s = CdmState.zeros(inst)
    for _ in range(2000):
        cdm_step(s, inst, top, int(rng.integers(top.num_edges)))
    assert np.max(np.abs(s.v.sum(axis=0))) <= 1e-9


def test_node_and_edge_dual_cdm_agree():
    rng = np.random.default_rng(6)
    top = topology_from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 2)])
    inst = hetero_instance(4, 2, 6)
    tr = build_edge_dual(top, inst, "unit")
    s = CdmState.zeros(inst)
    for _ in range(50):
        k = int(rng.integers(top.num_edges))
        cdm_step(s, inst, top, k)
        edge_dual_cdm_step(tr, inst, k)
        assert np.max(np.abs(tr.node_field() - s.v)) <= 1e-10


# -------------------------------------------------------------- parameters


def test_cacdm_params_path2_nominal_and_default():
    top = build_topology("path", 2)
    inst = averaging_instance(2)
    nominal = cacdm_params(top, [1.0], inst, s2_margin=1.0, rate_normalized_coupling=False)
    assert (nominal.intensity, nominal.gap, nominal.s_squared) == pytest.approx((1.0, 2.0, 1.0))
    assert nominal.theta == pytest.approx(math.sqrt(2.0), rel=1e-15)
    assert nominal.coupling == pytest.approx(math.sqrt(2.0) / 2, rel=1e-15)
    default = cacdm_params(top, [1.0], inst)
    assert default.s_squared == pytest.approx(2.0) and default.theta == pytest.approx(1.0)


def test_cacdm_params_uniform_rates_bound():
    top = build_topology("cycle", 12)
    m = top.num_edges
    inst = averaging_instance(12, curvature=2.0)
    p = cacdm_params(top, np.full(m, 1.0 / m), inst, s2_margin=1.0)
    assert p.s_squared == pytest.approx(m / inst.sigma_min, rel=1e-14)


def test_cacdm_params_rate_scaling():
    top = build_topology("cycle", 7)
    inst = hetero_instance(7)
    rates = np.linspace(0.5, 1.5, 7)
    a = cacdm_params(top, rates, inst)
    b = cacdm_params(top, 2 * rates, inst)
    assert b.theta == pytest.approx(a.theta, rel=1e-12)
    assert b.rate == pytest.approx(2 * a.rate, rel=1e-12)


def test_cacdm_params_validation():
    top = build_topology("path", 3)
    inst = averaging_instance(3)
    for rates in ([1.0, 0.0], [1.0], [1.0, -1.0]):
        with pytest.raises(InvalidParameter):
            cacdm_params(top, rates, inst)
    with pytest.raises(InvalidParameter):
        cacdm_params(top, [1.0, 1.0], inst, s2_margin=0.5)


# --------------------------------------------------------------- contraction


def zero_params(rate=1.0):
    top = build_topology("path", 2)
    return cacdm_params(top, [rate], averaging_instance(2))


def test_contraction_examples():
    prm = zero_params()
    s = CacdmState(np.array([[1.0], [2.0]]), np.array([[3.0], [2.0]]), np.zeros(2), prm)
    cacdm_contract(s, 0, 0.0)
    np.testing.assert_array_equal(s.u, [[1.0], [2.0]])
    cacdm_contract(s, 0, 1e4)
    np.testing.assert_allclose(s.u[0], [2.0], atol=1e-15)
    np.testing.assert_allclose(s.v[0], [2.0], atol=1e-15)
    cacdm_contract(s, 1, 3.0)
    np.testing.assert_array_equal(s.u[1], [2.0])
    with pytest.raises(ClockRegression):
        cacdm_contract(s, 1, 2.0)


def test_contraction_matches_closed_form_matrix():
    prm = zero_params()
    u, v, dt = 0.7, -1.3, 0.37
    s = CacdmState(np.array([[u], [0.0]]), np.array([[v], [0.0]]), np.zeros(2), prm)
    cacdm_contract(s, 0, dt)
    rho = math.exp(-2 * prm.rate * dt)
    assert s.u[0, 0] == pytest.approx((1 + rho) / 2 * u + (1 - rho) / 2 * v, abs=1e-15)
    assert s.v[0, 0] == pytest.approx((1 - rho) / 2 * u + (1 + rho) / 2 * v, abs=1e-15)
    assert mixing_fraction(prm.rate, dt) == pytest.approx((1 - rho) / 2, rel=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 5), st.floats(0, 5), st.floats(-10, 10), st.floats(-10, 10))
def test_contraction_semigroup(t1, t2, u, v):
    prm = zero_params()
    a = CacdmState(np.array([[u], [0.0]]), np.array([[v], [0.0]]), np.zeros(2), prm)
    b = a.copy()
    cacdm_contract(a, 0, t1)
    cacdm_contract(a, 0, t1 + t2)
    cacdm_contract(b, 0, t1 + t2)
    np.testing.assert_allclose(a.u, b.u, atol=1e-12)
    np.testing.assert_allclose(a.v, b.v, atol=1e-12)
    assert a.u[0, 0] + a.v[0, 0] == pytest.approx(u + v, abs=1e-12)


# ---------------------------------------------------------- accelerated step


def test_cacdm_step_path2_from_zero():
    top = build_topology("path", 2)
    inst = quadratic_instance(1.0, [[1.0], [0.0]])
    prm = cacdm_params(top, [1.0], inst)
    s = cacdm_step(CacdmState.zeros(inst, prm), inst, top, 0, 0.0)
    np.testing.assert_allclose(s.u, [[-0.5], [0.5]], atol=1e-15)
    np.testing.assert_allclose(s.v, [[-prm.coupling], [prm.coupling]], atol=1e-15)


def test_cacdm_step_zero_gradient_only_contracts():
    top = build_topology("path", 2)
    inst = quadratic_instance(1.0, np.zeros((2, 1)))
    prm = cacdm_params(top, [1.0], inst)
    s = CacdmState(np.array([[1.0], [1.0]]), np.array([[-1.0], [-1.0]]), np.zeros(2), prm)
    expect = cacdm_synced(s, 0.5)
    cacdm_step(s, inst, top, 0, 0.5)
    np.testing.assert_allclose(s.u, expect.u, atol=1e-15)
    np.testing.assert_allclose(s.v, expect.v, atol=1e-15)


def test_cacdm_unit_quadratic_primal_updates():
    rng = np.random.default_rng(8)
    top = build_topology("cycle", 5)
    inst = quadratic_instance(1.0, rng.normal(size=(5, 1)))
    prm = cacdm_params(top, np.ones(5), inst)
    s = CacdmState.zeros(inst, prm)
    t = 0.0
    for _ in range(20):
        t += rng.exponential()
        k = int(rng.integers(5))
        i, j = top.edges[k]
        pre = cacdm_synced(s, t)
        x = primal_point(inst, pre.u)
        g = x[i] - x[j]
        cacdm_step(s, inst, top, k, t)
        y = primal_point(inst, s.u)
        np.testing.assert_allclose(y[[i, j]], np.tile((x[i] + x[j]) / 2, (2, 1)), atol=1e-13)
        np.testing.assert_allclose(s.v[i], pre.v[i] - prm.coupling * g, atol=1e-13)


def test_cacdm_zero_sum_after_common_contraction():
    rng = np.random.default_rng(9)
    top = build_topology("grid2d", 3, 3)
    inst = hetero_instance(9, 2, 9)
    prm = cacdm_params(top, rng.uniform(0.5, 1.5, top.num_edges), inst)
    s = CacdmState.zeros(inst, prm)
    t = 0.0
    for _ in range(300):
        t += rng.exponential(0.1)
        cacdm_step(s, inst, top, int(rng.integers(top.num_edges)), t)
    synced = cacdm_synced(s, t + 1.0)
    assert np.max(np.abs(synced.u.sum(axis=0))) <= 1e-9
    assert np.max(np.abs(synced.v.sum(axis=0))) <= 1e-9


def test_cacdm_step_rejects_clock_regression():
    top = build_topology("path", 2)
    inst = averaging_instance(2)
    s = CacdmState.zeros(inst, cacdm_params(top, [1.0], inst), t0=1.0)
    with pytest.raises(ClockRegression):
        cacdm_step(s, inst, top, 0, 0.5)


def test_cacdm_read_is_pure_and_consistent():
    top = build_topology("cycle", 4)
    inst = averaging_instance(4)
    prm = cacdm_params(top, np.ones(4), inst)
    s = CacdmState.zeros(inst, prm)
    np.testing.assert_array_equal(cacdm_read(s, inst, 0.0), [[1.0], [0.0], [0.0], [0.0]])
    cacdm_step(s, inst, top, 0, 0.3)
    cacdm_step(s, inst, top, 2, 0.8)
    snap = (s.u.copy(), s.v.copy(), s.last_sync.copy())
    a = cacdm_read(s, inst, 1.5)
    b = cacdm_read(s, inst, 1.5)
    np.testing.assert_array_equal(a, b)
    for before, after in zip(snap, (s.u, s.v, s.last_sync)):
        np.testing.assert_array_equal(before, after)
    mid = cacdm_synced(s, 1.0)
    np.testing.assert_allclose(cacdm_read(mid, inst, 2.0), cacdm_read(s, inst, 2.0), atol=1e-14)


# ------------------------------------------------------------- sync gossip


def test_gossip_matrix_examples():
    np.testing.assert_array_equal(gossip_matrix(build_topology("path", 2)), [[0.5, 0.5], [0.5, 0.5]])
    W = gossip_matrix(build_topology("cycle", 6))
    assert np.allclose(np.diag(W), 1 / 3) and np.allclose(W[0, [1, 5]], 1 / 3)


@pytest.mark.parametrize("top", [build_topology("grid2d", 4, 5), build_topology("complete", 5),
                                 topology_from_edges(5, [(0, 1), (0, 2), (0, 3), (3, 4)])])
def test_gossip_matrix_invariants(top):
    W = gossip_matrix(top)
    assert np.array_equal(W, W.T)
    assert np.all(W >= 0)
    assert np.all(np.abs(W.sum(axis=1) - 1.0) <= 1e-15)
    support = (W > 0) & ~np.eye(top.n, dtype=bool)
    assert support.sum() == 2 * top.num_edges
    for i in range(top.n):
        for j in range(top.n):
            if i != j and W[i, j] > 0:
                assert (min(i, j), max(i, j)) in top.edge_index


def test_sync_step_examples():
    top = build_topology("path", 2)
    W = gossip_matrix(top)
    np.testing.assert_array_equal(sync_step(np.array([[1.0], [0.0]]), W), [[0.5], [0.5]])
    ones = np.ones((5, 2))
    np.testing.assert_allclose(sync_step(ones, gossip_matrix(build_topology("cycle", 5))), ones, atol=1e-15)
    with pytest.raises(InvalidParameter):
        sync_step(np.ones((3, 1)), W)


def test_sync_step_contracts_error():
    rng = np.random.default_rng(10)
    top = build_topology("grid2d", 3, 4)
    W = gossip_matrix(top)
    lam = np.sort(np.abs(np.linalg.eigvalsh(W)))[::-1][1]
    for _ in range(50):
        x = rng.normal(size=(top.n, 2))
        y = sync_step(x, W)
        assert np.allclose(y.mean(axis=0), x.mean(axis=0), atol=1e-13)
        assert np.linalg.norm(y - y.mean(axis=0)) <= lam * np.linalg.norm(x - x.mean(axis=0)) + 1e-12


# ---------------------------------------------------------------- edge dual


@pytest.mark.parametrize("choice", ["unit", "ppp", "cdm"])
def test_aat_is_weighted_laplacian(choice):
    top = build_topology("grid2d", 3, 3)
    inst = hetero_instance(9)
    rates = np.linspace(0.1, 2.0, top.num_edges)
    tr = build_edge_dual(top, inst, choice, rates)
    assert np.max(np.abs(tr.A @ tr.A.T - laplacian(top, tr.mu**2))) <= 1e-12
    assert np.max(np.abs(tr.A.sum(axis=0))) <= 1e-15


def test_edge_dual_examples():
    tr = build_edge_dual(build_topology("path", 2), averaging_instance(2))
    np.testing.assert_array_equal(tr.A, [[1.0], [-1.0]])
    np.testing.assert_array_equal(tr.A @ tr.A.T, [[1, -1], [-1, 1]])
    flipped = -tr.A
    np.testing.assert_array_equal(flipped @ flipped.T, tr.A @ tr.A.T)
    with pytest.raises(InvalidParameter):
        build_edge_dual(build_topology("path", 2), averaging_instance(2), "ppp")
    with pytest.raises(InvalidParameter):
        build_edge_dual(build_topology("path", 2), averaging_instance(2), "weird")


def test_edge_dual_zero_gradient_noop():
    top = build_topology("cycle", 3)
    inst = quadratic_instance(1.0, np.zeros((3, 1)))
    tr = build_edge_dual(top, inst)
    edge_dual_cdm_step(tr, inst, 1)
    assert np.all(tr.lam == 0)


def test_edge_dual_csv(tmp_path):
    tr = build_edge_dual(build_topology("cycle", 4), averaging_instance(4))
    tr.to_csv(tmp_path / "A.csv")
    np.testing.assert_array_equal(np.loadtxt(tmp_path / "A.csv", delimiter=","), tr.A)


def _strong_convexity_quotients(tr, inst, rng, count=100):
    out = []
    for _ in range(count):
        lam = rng.normal(size=tr.lam.shape)
        h = tr.project(rng.normal(size=tr.lam.shape))
        lin = float(np.sum(tr.gradient(inst, lam) * h))
        out.append((tr.value(inst, lam + h) - tr.value(inst, lam) - lin) / (0.5 * np.sum(h**2)))
    return np.array(out)


def test_sigma_a_bound_consistency():
    rng = np.random.default_rng(11)
    top = build_topology("grid2d", 3, 3)
    inst = hetero_instance(9, 2, 11)
    tr = build_edge_dual(top, inst, "ppp", rng.uniform(0.2, 2.0, top.num_edges))
    ev = np.linalg.eigvalsh(tr.A @ tr.A.T)
    bound = ev[ev > 1e-10].min() / inst.L_max
    assert np.all(_strong_convexity_quotients(tr, inst, rng) >= bound - 1e-9)


def test_cross_edge_gradient_lipschitz():
    rng = np.random.default_rng(12)
    top = build_topology("grid2d", 3, 4)
    inst = hetero_instance(top.n, 2, 12)
    tr = build_edge_dual(top, inst, "ppp", rng.uniform(0.2, 2.0, top.num_edges))
    deg = top.degrees
    for _ in range(200):
        x, y = rng.normal(size=tr.lam.shape), rng.normal(size=tr.lam.shape)
        for k, (i, j) in enumerate(top.edges):
            lhs = np.sum((edge_partial(tr, inst, k, x) - edge_partial(tr, inst, k, y)) ** 2)
            adj = [m for m, (a, b) in enumerate(top.edges) if {a, b} & {i, j}]
            s = 1 / inst.sigmas[i] + 1 / inst.sigmas[j]
            rhs = 2 * s**2 * max(deg[i], deg[j]) * tr.mu[k] ** 2 * sum(
                tr.mu[m] ** 2 * np.sum((x[m] - y[m]) ** 2) for m in adj)
            assert lhs <= rhs * (1 + 1e-12)


def test_gradient_domination():
    rng = np.random.default_rng(13)
    top = build_topology("cycle", 6)
    inst = hetero_instance(6, 1, 13)
    tr = build_edge_dual(top, inst, "ppp", rng.uniform(0.3, 1.5, 6))
    opt = optimum(inst)
    lam_star = tr.set_reference(opt.v)
    a = inst.sigmas
    hess = tr.A.T @ np.diag(1 / a) @ tr.A
    ev = np.linalg.eigvalsh(hess)
    sigma_a = ev[ev > 1e-10].min()
    fstar = tr.value(inst, lam_star)
    for _ in range(200):
        lam = rng.normal(scale=3.0, size=tr.lam.shape)
        g = tr.gradient(inst, lam)
        assert tr.value(inst, lam) - fstar <= np.sum(g**2) / (2 * sigma_a) * (1 + 1e-10) + 1e-12


# ----------------------------------------------------------------- Lyapunov


def lyap_setup(top, rates, inst):
    prm = cacdm_params(top, rates, inst)
    tr = build_edge_dual(top, inst, "ppp", rates)
    opt = optimum(inst)
    tr.set_reference(opt.v)
    return prm, tr, opt


def test_lyapunov_examples():
    top = build_topology("cycle", 5)
    inst = hetero_instance(5)
    rates = np.linspace(0.5, 1.0, 5)
    prm, tr, opt = lyap_setup(top, rates, inst)
    assert lyapunov_cacdm(tr, inst, prm, tr.lam_star, tr.lam_star) == pytest.approx(0.0, abs=1e-14)
    l0 = lyapunov_cacdm(tr, inst, prm)
    expect = np.sum(tr.project(tr.lam_star) ** 2) + 2 * prm.intensity * prm.theta**2 * prm.s_squared \
        / prm.sigma_a**2 * (tr.value(inst, np.zeros_like(tr.lam)) - tr.value(inst, tr.lam_star))
    assert l0 == pytest.approx(expect, rel=1e-12)
    assert lyapunov_coefficient(prm) == pytest.approx(2 * inst.L_max / prm.gap, rel=1e-12)
    fresh = build_edge_dual(top, inst, "ppp", rates)
    with pytest.raises(InvalidState):
        lyapunov_cacdm(fresh, inst, prm)


def test_edge_dual_cacdm_tracks_node_run():
    rng = np.random.default_rng(14)
    top = topology_from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)])
    inst = hetero_instance(5, 2, 14)
    rates = rng.uniform(0.3, 1.5, top.num_edges)
    prm, tr, opt = lyap_setup(top, rates, inst)
    s = CacdmState.zeros(inst, prm)
    t = 0.0
    for _ in range(60):
        dt = rng.exponential(0.5)
        t += dt
        k = int(rng.integers(top.num_edges))
        cacdm_step(s, inst, top, k, t)
        edge_dual_contract(tr, prm, dt)
        edge_dual_cacdm_step(tr, inst, prm, rates, k)
        synced = cacdm_synced(s, t)
        assert np.max(np.abs(tr.A @ tr.lam - synced.u)) <= 1e-8
        assert np.max(np.abs(tr.A @ tr.omega - synced.v)) <= 1e-8
        lyap = lyapunov_cacdm(tr, inst, prm)
        assert lyap >= 0
        assert lyap == pytest.approx(lyapunov_from_nodes(tr.pinv, inst, prm, synced.u, synced.v, opt.v), rel=1e-8)


def test_edge_dual_cacdm_needs_ppp_normalisation():
    top = build_topology("path", 2)
    inst = averaging_instance(2)
    tr = build_edge_dual(top, inst, "unit")
    with pytest.raises(InvalidState):
        edge_dual_cacdm_step(tr, inst, cacdm_params(top, [1.0], inst), [1.0], 0)
    with pytest.raises(ClockRegression):
        edge_dual_contract(tr, cacdm_params(top, [1.0], inst), -1.0)


def test_lyapunov_rlnm_examples():
    assert lyapunov_rlnm([2.0] * 6, 1, 4) == 2.0
    assert lyapunov_rlnm([4.0, 2.0, 0.0, 0.0], 2, 1) == 0.0
    assert lyapunov_rlnm([4.0, 2.0, 0.0, 0.0], 0, 2) == 3.0
    with pytest.raises(IndexError):
        lyapunov_rlnm([1.0, 2.0], 1, 2)


# ------------------------------------------- exact expected-potential oracle


CASES = [
    ("path", (2,), 1.0),
    ("cycle", (6,), 1.0),
    ("cycle", (10,), 1.0),
    ("cycle", (10,), 0.1),
]


def _operator(top, rate, inst, **kw):
    rates = np.full(top.num_edges, rate)
    prm = cacdm_params(top, rates, inst, **kw)
    a = inst.sigmas
    K, P = second_moment_operator(top.n, top.edges, rates, a, prm.theta, prm.coupling, prm.intensity)
    return prm, rates, K, P


@pytest.mark.parametrize("kind,sizes,rate", CASES)
def test_default_constants_meet_claimed_rate_exactly(kind, sizes, rate):
    top = build_topology(kind, *sizes)
    inst = averaging_instance(top.n)
    prm, _, K, _ = _operator(top, rate, inst)
    assert slowest_second_moment_rate(K) >= prm.rate * (1 - 1e-9)


@pytest.mark.parametrize("kind,sizes,rate", CASES)
def test_nominal_constants_fall_short_of_claimed_rate(kind, sizes, rate):
    top = build_topology(kind, *sizes)
    inst = averaging_instance(top.n)
    prm, _, K, _ = _operator(top, rate, inst, s2_margin=1.0, rate_normalized_coupling=False)
    assert slowest_second_moment_rate(K) < 0.95 * prm.rate


@pytest.mark.parametrize("kind,sizes", [("path", (2,)), ("cycle", (6,))])
def test_expected_potential_envelope_exact(kind, sizes):
    top = build_topology(kind, *sizes)
    inst = hetero_instance(top.n, 1, 21) if top.n > 2 else averaging_instance(2)
    rng = np.random.default_rng(21)
    rates = rng.uniform(0.5, 1.5, top.num_edges)
    prm = cacdm_params(top, rates, inst)
    K, P = second_moment_operator(top.n, top.edges, rates, inst.sigmas, prm.theta, prm.coupling, prm.intensity)
    tr = build_edge_dual(top, inst, "ppp", rates)
    opt = optimum(inst)
    n = top.n
    Q = np.zeros((2 * n, 2 * n))
    Q[:n, :n] = lyapunov_coefficient(prm) * np.diag(1 / (2 * inst.sigmas))
    Q[n:, n:] = tr.pinv.T @ tr.pinv
    e0 = np.concatenate([-opt.v[:, 0], -opt.v[:, 0]])
    times = np.linspace(0.0, 6.0 / prm.rate, 13)
    expected = expected_quadratic(K, P, e0, Q, times)
    l0 = lyapunov_from_nodes(tr.pinv, inst, prm, inst.zeros(), inst.zeros(), opt.v)
    assert expected[0] == pytest.approx(l0, rel=1e-12)
    assert np.all(expected <= l0 * np.exp(-prm.rate * times) * (1 + 1e-8))
