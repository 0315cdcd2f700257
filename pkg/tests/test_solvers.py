import numpy as np
import pytest
from scipy.optimize import linprog

from invopt.core import (EXACT, BinaryLpOracle, Budget, Response,
                         binary_signal, distance, identity_features,
                         linear_mi_oracle, mixed_signal, MixedDistance)
from invopt.errors import BudgetError
from invopt.solvers import (LinearProgramSpec, QpSpec, argmax_finite,
                            argmax_mixed_integer, solve_lp, solve_qp)


def test_lp_simple_min():
    # min x1 s.t. x1 >= 3  (as -x1 <= -3)
    spec = LinearProgramSpec(np.array([1.0]), ineq_matrix=np.array([[-1.0]]),
                             ineq_rhs=np.array([-3.0]))
    res = solve_lp(spec)
    assert res.status == "optimal"
    assert res.x[0] == pytest.approx(3.0, abs=1e-9)
    assert res.objective == pytest.approx(3.0, abs=1e-9)


def test_lp_infeasible_pair():
    spec = LinearProgramSpec(np.array([0.0]),
                             ineq_matrix=np.array([[1.0], [-1.0]]),
                             ineq_rhs=np.array([0.0, -1.0]))
    assert solve_lp(spec).status == "infeasible"


def test_lp_unbounded():
    spec = LinearProgramSpec(np.array([-1.0]),
                             ineq_matrix=np.array([[-1.0]]),
                             ineq_rhs=np.array([0.0]))
    assert solve_lp(spec).status == "unbounded"


def _random_lp(rng, n=12, mi=20):
    G = rng.normal(size=(mi, n))
    x0 = rng.uniform(-1, 1, size=n)
    h = G @ x0 + rng.uniform(0.1, 1.0, size=mi)  # feasible by construction
    c = rng.normal(size=n)
    lo = np.full(n, -5.0)
    up = np.full(n, 5.0)
    return LinearProgramSpec(c, ineq_matrix=G, ineq_rhs=h, lower=lo, upper=up)


def test_lp_random_matches_external_solver():
    rng = np.random.default_rng(11)
    for _ in range(20):
        spec = _random_lp(rng)
        res = solve_lp(spec)
        ref = linprog(spec.objective, A_ub=spec.ineq_matrix,
                      b_ub=spec.ineq_rhs,
                      bounds=list(zip(spec.lower, spec.upper)),
                      method="highs")
        assert res.status == "optimal" and ref.status == 0
        assert res.objective == pytest.approx(ref.fun, abs=1e-7)


def test_lp_with_equalities_and_free_vars():
    rng = np.random.default_rng(5)
    for _ in range(10):
        n = 6
        E = rng.normal(size=(2, n))
        x0 = rng.normal(size=n)
        f = E @ x0
        G = rng.normal(size=(8, n))
        h = G @ x0 + rng.uniform(0.1, 1, size=8)
        c = rng.normal(size=n)
        # box some variables, leave others free
        lo = np.array([-3.0, -np.inf, 0.0, -np.inf, -4.0, -np.inf])
        up = np.array([3.0, 2.0, np.inf, np.inf, 4.0, np.inf])
        lo = np.maximum(lo, np.minimum(x0 - 1, lo))  # keep x0 feasible-ish
        spec = LinearProgramSpec(c, G, h, E, f, lo, up)
        res = solve_lp(spec)
        ref = linprog(c, A_ub=G, b_ub=h, A_eq=E, b_eq=f,
                      bounds=list(zip(lo, up)), method="highs")
        if ref.status == 0:
            assert res.status == "optimal"
            assert res.objective == pytest.approx(ref.fun, abs=1e-7)
        else:
            assert res.status in ("infeasible", "unbounded")


def test_lp_weak_duality_and_kkt():
    rng = np.random.default_rng(23)
    for _ in range(10):
        spec = _random_lp(rng, n=8, mi=14)
        res = solve_lp(spec)
        assert res.status == "optimal"
        # verified residuals are attached
        assert max(res.residuals.values()) <= 1e-8
        # dual objective <= primal objective (weak duality)
        lam = res.duals.ineq
        dual_obj = (-spec.ineq_rhs @ lam
                    + spec.lower @ res.duals.lower
                    - spec.upper @ res.duals.upper)
        assert dual_obj <= res.objective + 1e-8
        assert dual_obj == pytest.approx(res.objective, abs=1e-7)


def test_qp_projection_example():
    # min 1/2 ||x||^2 s.t. x1 <= -1
    n = 3
    spec = QpSpec(np.eye(n), np.zeros(n),
                  ineq_matrix=np.array([[1.0, 0, 0]]),
                  ineq_rhs=np.array([-1.0]))
    res = solve_qp(spec)
    assert res.status == "optimal"
    assert np.allclose(res.x, [-1, 0, 0], atol=1e-7)


def test_qp_2d_margin_example():
    # min 1/2||th||^2 s.t. <th,(-1,0)> + 1 <= 0, <th,(0,-1)> + 1 <= 0
    spec = QpSpec(np.eye(2), np.zeros(2),
                  ineq_matrix=np.array([[-1.0, 0.0], [0.0, -1.0]]),
                  ineq_rhs=np.array([-1.0, -1.0]))
    res = solve_qp(spec)
    assert np.allclose(res.x, [1.0, 1.0], atol=1e-7)
    assert res.kkt_residual <= 1e-7


def test_qp_random_kkt_and_sampling():
    rng = np.random.default_rng(2)
    for trial in range(5):
        n = 6
        M = rng.normal(size=(n, n))
        P = M @ M.T + 0.5 * np.eye(n)
        q = rng.normal(size=n)
        G = rng.normal(size=(30, n))
        x0 = rng.normal(size=n) * 0.2
        h = G @ x0 + rng.uniform(0.1, 1.0, size=30)
        spec = QpSpec(P, q, ineq_matrix=G, ineq_rhs=h)
        res = solve_qp(spec)
        assert res.status == "optimal"
        assert res.kkt_residual <= 1e-7
        # rejection-sampled feasible points can't beat the reported optimum
        pts = np.vstack([rng.normal(size=(20000, n)) * s + x0
                         for s in (0.02, 0.1, 0.5)])
        feas = pts[(pts @ G.T <= h[None, :]).all(axis=1)]
        assert feas.shape[0] > 0
        vals = 0.5 * np.einsum("ij,jk,ik->i", feas, P, feas) + feas @ q
        assert res.objective <= vals.min() + 1e-6


def test_qp_matches_cvxopt():
    cvxopt = pytest.importorskip("cvxopt")
    from cvxopt import matrix, solvers as cvx_solvers
    cvx_solvers.options["show_progress"] = False
    rng = np.random.default_rng(9)
    for _ in range(5):
        n = 5
        M = rng.normal(size=(n, n))
        P = M @ M.T + 0.2 * np.eye(n)
        q = rng.normal(size=n)
        G = rng.normal(size=(12, n))
        h = G @ (rng.normal(size=n) * 0.1) + rng.uniform(0.2, 1, 12)
        res = solve_qp(QpSpec(P, q, ineq_matrix=G, ineq_rhs=h))
        sol = cvx_solvers.qp(matrix(P), matrix(q), matrix(G), matrix(h))
        x_ref = np.array(sol["x"]).ravel()
        obj_ref = 0.5 * x_ref @ P @ x_ref + q @ x_ref
        assert res.objective == pytest.approx(obj_ref, abs=1e-6)


def test_qp_zero_quadratic_delegates_to_lp():
    spec = QpSpec(np.zeros((2, 2)), np.array([1.0, 0.0]),
                  ineq_matrix=np.array([[-1.0, 0.0]]),
                  ineq_rhs=np.array([-3.0]),
                  lower=np.array([-10.0, -10.0]),
                  upper=np.array([10.0, 10.0]))
    res = solve_qp(spec)
    assert res.delegated
    assert res.x[0] == pytest.approx(3.0, abs=1e-8)


def test_qp_infeasible_detection():
    spec = QpSpec(np.eye(1), np.zeros(1),
                  ineq_matrix=np.array([[1.0], [-1.0]]),
                  ineq_rhs=np.array([0.0, -1.0]))
    res = solve_qp(spec, check_feasibility=True)
    assert res.status == "infeasible"


# ---------------------------------------------------------------------------
# argmax oracles


def _toy_instance():
    sig = binary_signal(-np.eye(2), np.zeros(2))  # all of {0,1}^2
    oracle = BinaryLpOracle()
    return sig, oracle


def test_argmax_finite_singleton():
    sig = binary_signal(np.array([[1.0, 1.0]]), np.array([0.0]))  # only (0,0)
    oracle = BinaryLpOracle()
    xhat = Response.discrete(np.zeros(2, dtype=np.int64))
    x, val, eps = argmax_finite(oracle, sig, xhat, np.array([1.0, 2.0]),
                                identity_features(2), distance("l1"), EXACT)
    assert x == xhat and val == 0.0 and eps == 0.0


def test_argmax_finite_matches_spec_example():
    sig, oracle = _toy_instance()
    xhat = Response.discrete(np.zeros(2, dtype=np.int64))
    x, val, eps = argmax_finite(oracle, sig, xhat, np.array([1.0, 0.0]),
                                identity_features(2), distance("l1"), EXACT)
    assert val == pytest.approx(1.0)
    assert np.array_equal(x.z, [0, 1])  # first maximizer in lex order
    assert eps == 0.0


def test_argmax_finite_budgeted_sound():
    sig, oracle = _toy_instance()
    xhat = Response.discrete(np.zeros(2, dtype=np.int64))
    theta = np.array([1.0, 0.0])
    phi = identity_features(2)
    _, exact_val, _ = argmax_finite(oracle, sig, xhat, theta, phi,
                                    distance("l1"), EXACT)
    _, inc_val, eps = argmax_finite(
        oracle, sig, xhat, theta, phi, distance("l1"),
        Budget(max_nodes=2, exact=False))
    assert inc_val <= exact_val + 1e-12
    assert eps >= exact_val - inc_val - 1e-12


def test_argmax_finite_budget_monotone():
    rng = np.random.default_rng(4)
    sig = binary_signal(rng.uniform(-1, 0, (3, 5)), rng.uniform(-0.5, 0, 3))
    oracle = BinaryLpOracle()
    X = oracle.response_matrix(sig)
    xhat = oracle.response_from_row(X[0])
    theta = rng.normal(size=5)
    phi = identity_features(5)
    prev = -np.inf
    for cap in range(1, X.shape[0] + 1):
        _, val, _ = argmax_finite(oracle, sig, xhat, theta, phi,
                                  distance("euclidean"),
                                  Budget(max_nodes=cap, exact=False))
        assert val >= prev - 1e-12
        prev = val


def test_argmax_finite_custom_distance_needs_bound():
    sig, oracle = _toy_instance()
    xhat = Response.discrete(np.zeros(2, dtype=np.int64))
    d = distance("custom")
    d._fn = lambda a, b: float(np.sum((a - b) ** 4))
    with pytest.raises(BudgetError):
        argmax_finite(oracle, sig, xhat, np.array([1.0, 0.0]),
                      identity_features(2), d, Budget(max_nodes=1,
                                                      exact=False))


def _mi_instance(rng, u=2, v=2, t=2):
    A = rng.uniform(-1, 0, (t, u))
    B = rng.uniform(-1, 0, (t, v))
    c = rng.uniform(-2, 0, t)
    # guarantee feasibility of (1,...,1)
    rows = A.sum(axis=1) + B.sum(axis=1)
    c = np.maximum(c, rows + 0.05)
    A_aug = np.vstack([A, np.eye(u), -np.eye(u)])
    B_aug = np.vstack([B, np.zeros((u, v)), np.zeros((u, v))])
    c_aug = np.concatenate([c, np.ones(u), np.zeros(u)])
    sig = mixed_signal(A_aug, B_aug, c_aug)
    oracle = linear_mi_oracle(u=u, v=v)
    return sig, oracle


def test_argmax_mi_pure_continuous_single_z():
    rng = np.random.default_rng(1)
    sig, oracle = _mi_instance(rng, u=2, v=0, t=2)
    theta = np.array([0.3, 0.8])  # q_y only (v=0)
    xhat = Response(np.array([0.5, 0.5]), np.zeros(0, dtype=np.int64))
    d = MixedDistance(z_kind="zero", include_y=False)
    x, val, eps = argmax_mixed_integer(oracle, sig, xhat, theta, d, EXACT)
    assert eps == 0.0
    # value equals <theta, yhat> - min_y <theta, y> over the polytope
    from invopt.solvers import LinearProgramSpec as LPS
    lp = solve_lp(LPS(theta, ineq_matrix=sig["A"], ineq_rhs=sig["c"]))
    assert val == pytest.approx(theta @ xhat.y - lp.objective, abs=1e-8)


def test_argmax_mi_discrete_only_matches_finite():
    rng = np.random.default_rng(8)
    t, v = 2, 3
    B = rng.uniform(-1, 0, (t, v))
    c = rng.uniform(-1, 0, t)
    c = np.maximum(c, B.sum(axis=1) + 0.05)
    sig_mi = mixed_signal(np.zeros((t, 0)), B, c)
    oracle_mi = linear_mi_oracle(u=0, v=v)
    sig_bin = binary_signal(B, c)
    oracle_bin = BinaryLpOracle()
    theta = rng.normal(size=v)
    Xf = oracle_bin.response_matrix(sig_bin)
    xhat = Response(np.zeros(0), Xf[0].astype(np.int64))
    d = MixedDistance(z_kind="euclidean")
    x_mi, val_mi, _ = argmax_mixed_integer(oracle_mi, sig_mi, xhat, theta, d,
                                           EXACT)
    x_f, val_f, _ = argmax_finite(oracle_bin, sig_bin,
                                  Response.discrete(xhat.z), theta,
                                  identity_features(v),
                                  distance("euclidean"), EXACT)
    assert val_mi == pytest.approx(val_f, abs=1e-9)
    assert np.array_equal(x_mi.z, x_f.z)


def test_argmax_mi_matches_grid():
    rng = np.random.default_rng(17)
    sig, oracle = _mi_instance(rng, u=2, v=2, t=2)
    theta = rng.uniform(0, 1, size=oracle.p)
    xhat = oracle.forward_min(sig, theta)
    d = MixedDistance(z_kind="euclidean", include_y=True)
    x, val, eps = argmax_mixed_integer(oracle, sig, xhat, theta, d, EXACT)
    assert eps == 0.0
    # brute force: fine y grid * all z
    Q, qv = oracle.split_theta(theta)
    grid = np.linspace(0, 1, 1001)
    Y = np.stack(np.meshgrid(grid, grid), axis=-1).reshape(-1, 2)
    best = -np.inf
    base = float(theta @ oracle.feature_map.eval(sig, xhat))
    for z in oracle.z_list(sig):
        rhs = sig["c"] - sig["B"] @ z
        feas = (Y @ sig["A"].T <= rhs[None, :] + 1e-12).all(axis=1)
        if not feas.any():
            continue
        Yf = Y[feas]
        p1 = oracle.phi1(None, z)
        p2 = oracle.phi2(None, z)
        vals = (base - Yf @ (Q @ p1) - float(qv @ p2)
                + np.abs(xhat.y[None, :] - Yf).max(axis=1)
                + np.linalg.norm(xhat.z - z))
        best = max(best, vals.max())
    assert val == pytest.approx(best, abs=2e-3)


def test_argmax_mi_budget_prefix_sound():
    rng = np.random.default_rng(21)
    sig, oracle = _mi_instance(rng, u=2, v=2, t=2)
    theta = rng.uniform(0, 1, size=oracle.p)
    xhat = oracle.forward_min(sig, theta)
    d = MixedDistance(z_kind="euclidean")
    _, val_exact, _ = argmax_mixed_integer(oracle, sig, xhat, theta, d, EXACT)
    _, val_cap, eps = argmax_mixed_integer(oracle, sig, xhat, theta, d,
                                           Budget(max_nodes=2, exact=False))
    assert val_cap <= val_exact + 1e-9
    assert val_cap + eps >= val_exact - 1e-9
