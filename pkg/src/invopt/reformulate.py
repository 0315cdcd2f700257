"""Finite convex programs that train a cost vector in one shot.

Three trainers plus one evaluation helper:

* :func:`train_asl_enumerated` - epigraph form of the regularized mean
  augmented-suboptimality minimization for finite-enumerable sets: one
  slack beta_i per instance, one row per (instance, feasible response).
* :func:`train_asl_mixed_integer_lp` - for mixed-integer sets with a
  linear hypothesis, the continuous block is dualized per discrete
  completion, giving a finite LP (or QP under a quadratic regularizer)
  with multipliers lambda_{ijk}.
* :func:`train_suboptimality_facets` - the zero-distance loss needs a
  norm constraint to avoid the trivial zero vector; this solves 2p LPs,
  one per sign-fixed facet of the unit box, and keeps the best.
* :func:`tu_inner_rewrite` - over binary responses the l1 distance is
  affine, so the augmented inner problem collapses to a linear objective;
  with a totally unimodular constraint matrix its LP relaxation is exact.

Constraint blocks are assembled in a canonical order (instance-major,
then enumeration order, then tilt index) so regression tests are
bit-stable.
"""

from dataclasses import dataclass, field

import numpy as np

from .core import MixedDistance, check_cost_vector
from .errors import (ConfigError, DimensionMismatchError,
                     InconsistentDataError, OracleKindError, SolverError,
                     UnboundedProblemError)
from .losses import regularizer_value
from .solvers import LinearProgramSpec, QpSpec, solve_lp, solve_qp

_MAX_ROWS = 50_000


@dataclass(frozen=True)
class MixedIntegerInstance:
    """Constraint data of one mixed-integer instance, with the finite
    discrete completion list."""

    A: np.ndarray
    B: np.ndarray
    c: np.ndarray
    w: object
    Z_enum: tuple

    @staticmethod
    def from_instance(inst):
        oracle = inst.oracle
        if oracle.kind != "mixed-integer":
            raise OracleKindError("instance is not mixed-integer")
        A, B, c = oracle.constraint_blocks(inst.signal)
        return MixedIntegerInstance(A, B, c, inst.signal["w"],
                                    tuple(oracle.z_list(inst.signal)))


@dataclass
class TrainerSolution:
    theta: np.ndarray
    objective: float
    slacks_beta: np.ndarray
    duals: dict = field(default_factory=dict)
    status: str = "optimal"


def _reduce_rows_nonneg(rows, offsets):
    """Indices of rows not implied by another row when theta >= 0.

    Row (a, d) is implied by (a', d') when a <= a' and d <= d'
    componentwise.  Keeps the first of exact duplicates.
    """
    K = rows.shape[0]
    keep = np.ones(K, dtype=bool)
    order = np.argsort(-(rows.sum(axis=1) + offsets), kind="stable")
    kept_rows = []
    kept_off = []
    kept_idx = []
    for j in order:
        a, d = rows[j], offsets[j]
        dominated = False
        for a2, d2 in zip(kept_rows, kept_off):
            if d <= d2 + 1e-15 and np.all(a <= a2 + 1e-15):
                dominated = True
                break
        if dominated:
            keep[j] = False
        else:
            kept_rows.append(a)
            kept_off.append(d)
            kept_idx.append(j)
    return np.sort(np.array(kept_idx, dtype=int)) if kept_idx \
        else np.empty(0, dtype=int)


def assemble_enumerated_rows(ds, phi, d):
    """Canonical constraint rows of the epigraph trainer.

    Returns (blocks, p) where blocks[i] = (A_i, d_i): row a needs
    <theta, a> + d <= beta_i.  Rows follow the oracle enumeration order.
    """
    p = phi.dimension
    blocks = []
    for inst in ds:
        oracle = inst.oracle
        if oracle.kind != "finite-enumerable":
            raise OracleKindError(
                "epigraph trainer needs finite-enumerable oracles")
        phihat = phi.eval(inst.signal, inst.response)
        X = oracle.response_matrix(inst.signal)
        Phi = phi.batch_rows(inst.signal, X, oracle.response_from_row)
        rows = phihat[None, :] - Phi
        dist = d.batch(inst.response.as_vector(), X)
        blocks.append((rows, dist))
    return blocks, p


def train_asl_enumerated(ds, phi, d, kappa=0.001, regularizer="half_sq_l2",
                         theta_set="all", hinge=False):
    """Train by the epigraph program over all enumerated responses.

    min  kappa R(theta) + (1/N) sum beta_i
    s.t. <theta, phi(s_i,xhat_i) - phi(s_i,x)> + d(xhat_i,x) <= beta_i
         for every feasible x, every i;  beta >= 0 when hinge;
         theta in the requested set.

    Returns a TrainerSolution whose objective equals the regularized
    empirical loss at the returned theta (slacks bind at the per-instance
    losses).
    """
    if kappa < 0:
        raise ConfigError("kappa must be nonnegative")
    blocks, p = assemble_enumerated_rows(ds, phi, d)
    N = len(blocks)
    nonneg = theta_set == "nonneg_orthant"
    if theta_set not in ("all", "nonneg_orthant"):
        raise ConfigError(f"unknown theta_set {theta_set!r}")

    G_rows = []
    rhs = []
    for i, (rows, dist) in enumerate(blocks):
        if nonneg and rows.shape[0] > 1:
            keep = _reduce_rows_nonneg(rows, dist)
            rows, dist = rows[keep], dist[keep]
        blk = np.zeros((rows.shape[0], p + N))
        blk[:, :p] = rows
        blk[:, p + i] = -1.0
        G_rows.append(blk)
        rhs.append(-dist)
    G = np.vstack(G_rows)
    h = np.concatenate(rhs)
    if G.shape[0] > _MAX_ROWS:
        raise ConfigError(f"{G.shape[0]} constraint rows exceed the cap "
                          f"{_MAX_ROWS}")

    lower = np.full(p + N, -np.inf)
    upper = np.full(p + N, np.inf)
    if nonneg:
        lower[:p] = 0.0
    if hinge:
        lower[p:] = 0.0

    if regularizer == "half_sq_l2" and kappa > 0:
        Pdiag = np.concatenate([np.full(p, kappa), np.zeros(N)])
        q = np.concatenate([np.zeros(p), np.full(N, 1.0 / N)])
        res = solve_qp(QpSpec(np.diag(Pdiag), q, ineq_matrix=G, ineq_rhs=h,
                              lower=lower, upper=upper))
        if res.status != "optimal" or res.kkt_residual > 1e-7:
            raise SolverError(
                f"trainer QP not certified (status={res.status}, "
                f"kkt={res.kkt_residual:.2e})")
        x = res.x
    else:
        if regularizer == "l1" and kappa > 0 and not nonneg:
            # split theta into nonnegative parts for the l1 objective
            G2 = np.hstack([G[:, :p], -G[:, :p], G[:, p:]])
            c = np.concatenate([np.full(2 * p, kappa), np.full(N, 1.0 / N)])
            lo2 = np.concatenate([np.zeros(2 * p), lower[p:]])
            res = solve_lp(LinearProgramSpec(c, ineq_matrix=G2, ineq_rhs=h,
                                             lower=lo2))
            _check_lp_status(res)
            x = np.concatenate([res.x[:p] - res.x[p:2 * p], res.x[2 * p:]])
        else:
            c = np.concatenate([np.zeros(p), np.full(N, 1.0 / N)])
            if kappa > 0 and regularizer == "l1":
                c[:p] = kappa  # theta >= 0 here
            elif kappa > 0 and regularizer not in ("none", "l1"):
                raise ConfigError(
                    f"unsupported regularizer {regularizer!r} for LP path")
            res = solve_lp(LinearProgramSpec(c, ineq_matrix=G, ineq_rhs=h,
                                             lower=lower, upper=upper))
            _check_lp_status(res)
            x = res.x
    theta = check_cost_vector(x[:p])
    beta = x[p:]
    obj = kappa * regularizer_value(theta, regularizer) \
        + float(np.mean(beta))
    return TrainerSolution(theta, obj, beta)


def _check_lp_status(res):
    if res.status == "unbounded":
        raise UnboundedProblemError(
            "trainer objective is unbounded below; add a regularizer, the "
            "hinge, or a norm constraint")
    if res.status != "optimal":
        raise InconsistentDataError("trainer LP infeasible")


def train_suboptimality_facets(ds, phi, theta_set="all"):
    """Zero-distance loss trainer over the 2p facets theta_k = +/-1.

    Solves one LP per facet of the unit sup-norm box and returns the
    best-objective solution (slacks are clipped at zero, matching the
    nonnegativity of the loss on feasible data).
    """
    blocks, p = assemble_enumerated_rows(
        ds, phi, _ZeroBatch())
    N = len(blocks)
    G_rows = []
    rhs = []
    for i, (rows, dist) in enumerate(blocks):
        blk = np.zeros((rows.shape[0], p + N))
        blk[:, :p] = rows
        blk[:, p + i] = -1.0
        G_rows.append(blk)
        rhs.append(-dist)
    G = np.vstack(G_rows)
    h = np.concatenate(rhs)
    c = np.concatenate([np.zeros(p), np.full(N, 1.0 / N)])
    best = None
    for k in range(p):
        for s in (1.0, -1.0):
            lower = np.concatenate([np.full(p, -1.0), np.zeros(N)])
            upper = np.concatenate([np.full(p, 1.0), np.full(N, np.inf)])
            if theta_set == "nonneg_orthant":
                lower[:p] = 0.0
                if s < 0:
                    continue
            lower[k] = upper[k] = s
            res = solve_lp(LinearProgramSpec(c, ineq_matrix=G, ineq_rhs=h,
                                             lower=lower, upper=upper))
            if res.status != "optimal":
                continue
            if best is None or res.objective < best[0] - 1e-12:
                best = (res.objective, res.x)
    if best is None:
        raise InconsistentDataError("every facet subproblem is infeasible")
    obj, x = best
    return TrainerSolution(check_cost_vector(x[:p]), float(obj), x[p:])


class _ZeroBatch:
    """Zero distance with the batch interface used during assembly."""

    kind = "zero"
    kind_code = 0

    def batch(self, xhat_vec, X):
        return np.zeros(X.shape[0])


# ---------------------------------------------------------------------------
# mixed-integer LP reformulation


def _tilt_vectors(u, penalize_y):
    if not penalize_y or u == 0:
        return [np.zeros(u)]
    out = []
    for k in range(u):
        e = np.zeros(u)
        e[k] = 1.0
        out.append(e)
    for k in range(u):
        e = np.zeros(u)
        e[k] = -1.0
        out.append(e)
    return out


def train_asl_mixed_integer_lp(ds, d_z="euclidean", kappa=0.0,
                               regularizer="none",
                               theta_set="nonneg_orthant", penalize_y=False,
                               norm_one=False, tighten_duals=True,
                               max_rows=_MAX_ROWS):
    """Train on mixed-integer instances by dualizing the continuous block.

    The hypothesis is the oracle's linear form <y, Q phi1(w,z)> +
    <q, phi2(w,z)>.  For every (instance i, discrete completion j, tilt
    k) the inner continuous maximization is replaced by its LP dual with
    multiplier lambda_{ijk} >= 0, linked by the equality rows
    Q phi1 + h_k + A' lambda = 0.  ``penalize_y`` adds the sup-norm
    distance on the continuous block (tilts over 2u signed units);
    otherwise a single zero tilt is used.

    ``norm_one`` adds sum(theta) = 1 (requires the nonnegative orthant),
    the standard guard against the trivial zero vector when both kappa
    and the distance are zero.

    Duals are re-tightened per block by solving the small per-block dual
    LP so that strong-duality spot checks hold at the returned theta.
    """
    if kappa < 0:
        raise ConfigError("kappa must be nonnegative")
    insts = [MixedIntegerInstance.from_instance(inst) for inst in ds]
    oracle = ds[0].oracle
    u, m, r = oracle.u, oracle.m, oracle.r
    p = u * m + r
    N = len(insts)
    dist = MixedDistance(z_kind=d_z) if isinstance(d_z, str) else d_z
    tilts = _tilt_vectors(u, penalize_y)
    nonneg = theta_set == "nonneg_orthant"
    if norm_one and not nonneg:
        raise ConfigError("norm_one needs the nonnegative orthant")

    blocks = []
    total_rows = 0
    for i, (inst, mi) in enumerate(zip(ds, insts)):
        total_rows += len(mi.Z_enum) * len(tilts) * (1 + u)
        if total_rows > max_rows:
            raise ConfigError(
                f"reformulation would exceed {max_rows} rows "
                "(N x M x tilts x (1+u)); shrink the instance or use the "
                "iterative trainer")

    # variable layout: [vec(Q) (u*m) | q (r) | beta (N) | lambda blocks]
    t_rows = insts[0].A.shape[0]
    lam_index = {}
    nlam = 0
    for i, mi in enumerate(insts):
        if mi.A.shape != (t_rows, u):
            raise DimensionMismatchError("instances disagree on block shapes")
        for j in range(len(mi.Z_enum)):
            for k in range(len(tilts)):
                lam_index[(i, j, k)] = p + N + nlam * t_rows
                nlam += 1
    nvar = p + N + nlam * t_rows

    G_list = []
    h_list = []
    E_list = []
    f_list = []
    for i, (inst, mi) in enumerate(zip(ds, insts)):
        yhat, zhat = inst.response.y, inst.response.z
        phihat = oracle.feature_map.eval(inst.signal, inst.response)
        for j, z in enumerate(mi.Z_enum):
            p1 = np.asarray(oracle.phi1(mi.w, z), dtype=np.float64)
            p2 = np.asarray(oracle.phi2(mi.w, z), dtype=np.float64)
            dz = dist.z_distance(zhat, z)
            cBz = mi.c - mi.B @ z
            for k, hk in enumerate(tilts):
                col = lam_index[(i, j, k)]
                row = np.zeros(nvar)
                row[:p] = phihat          # <theta, phi(s_i, xhat_i)>
                row[u * m:p] -= p2        # -<q, phi2(w, z_j)>
                row[p + i] = -1.0         # -beta_i
                row[col:col + t_rows] = cBz
                G_list.append(row)
                h_list.append(-float(hk @ yhat) - dz)
                for a in range(u):
                    erow = np.zeros(nvar)
                    # (Q phi1)_a: Q[a, b] has column index a + b*u (vec
                    # stacks columns)
                    for b in range(m):
                        erow[a + b * u] = p1[b]
                    erow[col:col + t_rows] = mi.A[:, a]
                    E_list.append(erow)
                    f_list.append(-hk[a])
    if norm_one:
        row = np.zeros(nvar)
        row[:p] = 1.0
        E_list.append(row)
        f_list.append(1.0)

    G = np.array(G_list)
    h = np.array(h_list)
    E = np.array(E_list) if E_list else None
    f = np.array(f_list) if f_list else None
    lower = np.full(nvar, -np.inf)
    lower[p + N:] = 0.0  # lambda >= 0
    if nonneg:
        lower[:p] = 0.0

    if regularizer == "half_sq_l2" and kappa > 0:
        Pd = np.zeros(nvar)
        Pd[:p] = kappa
        q_lin = np.zeros(nvar)
        q_lin[p:p + N] = 1.0 / N
        res = solve_qp(QpSpec(np.diag(Pd), q_lin, ineq_matrix=G, ineq_rhs=h,
                              eq_matrix=E, eq_rhs=f, lower=lower))
        if res.status != "optimal" or res.kkt_residual > 1e-7:
            raise SolverError("mixed-integer trainer QP not certified")
        x = res.x
        status = res.status
    else:
        c = np.zeros(nvar)
        c[p:p + N] = 1.0 / N
        if kappa > 0:
            if regularizer == "l1" and nonneg:
                c[:p] = kappa
            elif regularizer != "none":
                raise ConfigError(
                    f"regularizer {regularizer!r} unsupported on this path")
        res = solve_lp(LinearProgramSpec(c, ineq_matrix=G, ineq_rhs=h,
                                         eq_matrix=E, eq_rhs=f, lower=lower))
        _check_lp_status(res)
        x = res.x
        status = res.status

    theta = check_cost_vector(x[:p])
    beta = x[p:p + N]
    lam = {}
    for (i, j, k), col in lam_index.items():
        lam[(i, j, k)] = x[col:col + t_rows].copy()
    if tighten_duals and u > 0:
        Q, _ = oracle.split_theta(theta)
        for (i, j, k) in lam:
            mi = insts[i]
            z = mi.Z_enum[j]
            p1 = np.asarray(oracle.phi1(mi.w, z), dtype=np.float64)
            target = -(Q @ p1 + tilts[k])
            dual = solve_lp(LinearProgramSpec(
                mi.c - mi.B @ z, eq_matrix=mi.A.T, eq_rhs=target,
                lower=np.zeros(t_rows)))
            if dual.status == "optimal":
                lam[(i, j, k)] = dual.x
    obj = kappa * regularizer_value(theta, regularizer) \
        + float(np.mean(beta))
    return TrainerSolution(theta, obj, beta, duals=lam, status=status)


def inner_primal_value(ds, i, j, theta, k=0, d_z="euclidean",
                       penalize_y=False):
    """Exact inner value for block (i, j, k): the continuous maximization
    solved primally with the embedded LP (for strong-duality checks)."""
    inst = ds[i]
    oracle = inst.oracle
    mi = MixedIntegerInstance.from_instance(inst)
    dist = MixedDistance(z_kind=d_z) if isinstance(d_z, str) else d_z
    tilts = _tilt_vectors(oracle.u, penalize_y)
    hk = tilts[k]
    z = mi.Z_enum[j]
    Q, qv = oracle.split_theta(theta)
    p1 = np.asarray(oracle.phi1(mi.w, z), dtype=np.float64)
    p2 = np.asarray(oracle.phi2(mi.w, z), dtype=np.float64)
    phihat = oracle.feature_map.eval(inst.signal, inst.response)
    const = float(theta @ phihat) - float(qv @ p2) \
        + float(hk @ inst.response.y) + dist.z_distance(inst.response.z, z)
    lp = solve_lp(LinearProgramSpec(Q @ p1 + hk, ineq_matrix=mi.A,
                                    ineq_rhs=mi.c - mi.B @ z))
    if lp.status != "optimal":
        return -np.inf
    return const - lp.objective


def inner_dual_value(ds, i, j, theta, sol, k=0, d_z="euclidean",
                     penalize_y=False):
    """Dual value implied by the stored lambda_{ijk} at the solution."""
    inst = ds[i]
    oracle = inst.oracle
    mi = MixedIntegerInstance.from_instance(inst)
    dist = MixedDistance(z_kind=d_z) if isinstance(d_z, str) else d_z
    tilts = _tilt_vectors(oracle.u, penalize_y)
    hk = tilts[k]
    z = mi.Z_enum[j]
    _, qv = oracle.split_theta(theta)
    p2 = np.asarray(oracle.phi2(mi.w, z), dtype=np.float64)
    phihat = oracle.feature_map.eval(inst.signal, inst.response)
    lam = sol.duals[(i, j, k)]
    return float(theta @ phihat) + float(lam @ (mi.c - mi.B @ z)) \
        - float(qv @ p2) + float(hk @ inst.response.y) \
        + dist.z_distance(inst.response.z, z)


# ---------------------------------------------------------------------------
# totally unimodular rewrite


def tu_inner_rewrite(xhat, theta):
    """Affine form of  <theta, xhat - x> + ||xhat - x||_1  over binary x.

    Returns (c_lin, c_const) with the objective equal to
    <c_lin, x> + c_const for every binary x.
    """
    xhat = np.asarray(xhat, dtype=np.float64)
    if np.any((xhat != 0) & (xhat != 1)):
        raise DimensionMismatchError("rewrite needs a binary vector")
    theta = check_cost_vector(theta, xhat.size)
    c_lin = 1.0 - 2.0 * xhat - theta
    c_const = float(theta @ xhat) + float(xhat.sum())
    return c_lin, c_const


def asl_tu_binary(theta, inst):
    """Augmented loss with l1 distance via the affine rewrite plus one LP.

    Exact when the instance's constraint matrix is totally unimodular with
    integer right-hand side (the LP relaxation then has binary vertices).
    """
    xhat = inst.response.as_vector()
    c_lin, c_const = tu_inner_rewrite(xhat, theta)
    A, b = inst.signal["A"], inst.signal["b"]
    n = xhat.size
    lp = solve_lp(LinearProgramSpec(-c_lin, ineq_matrix=A, ineq_rhs=b,
                                    lower=np.zeros(n), upper=np.ones(n)))
    if lp.status != "optimal":
        raise InconsistentDataError("inner LP failed")
    return -lp.objective + c_const
