"""Geometry of the set of data-consistent cost vectors.

The consistent set is a polyhedral cone through the origin: one halfspace
``<theta, a> <= 0`` per (instance, feasible response) pair, with
``a = phi(s, xhat) - phi(s, x)``.  This module builds that cone, finds a
point in it (feasibility), finds the deepest unit vector in it (the
max-margin center, via a convex program), and computes a small-dimension
baseline for the axis of the smallest enclosing revolution cone.

Feasibility and the max-margin program use lazy row generation: the
active subproblem stays small while violation checks run vectorized over
all rows, which keeps large enumerated cones tractable.
"""

import csv
import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .core import check_cost_vector
from .errors import (DimensionMismatchError, InconsistentDataError,
                     IntractableDimensionError, NoExtremeRaysError,
                     NoInteriorError, OracleKindError, SolverError)
from .solvers import LinearProgramSpec, QpSpec, solve_lp, solve_qp

_RANK_TOL = 1e-9
_MERGE_ANGLE = 1e-7


@dataclass(frozen=True)
class ConeDescription:
    """Halfspace rows of the consistent cone with their provenance."""

    rows: np.ndarray                 # (K, p), each row a with <theta,a> <= 0
    provenance: tuple                # (instance_index, response) per row
    normalize: bool = False

    @property
    def p(self):
        return self.rows.shape[1]

    def __len__(self):
        return self.rows.shape[0]


@dataclass(frozen=True)
class IncenterResult:
    theta: np.ndarray        # unit euclidean norm
    margin_r: float
    raw_theta: np.ndarray
    kkt_residual: float = 0.0


def build_cone(ds, phi, normalize=False):
    """One cone row per (instance, feasible response); zero rows dropped.

    Rows appear instance-major, then in the oracle's enumeration order,
    which makes the construction deterministic across runs.
    """
    rows = []
    prov = []
    for i, inst in enumerate(ds):
        oracle = inst.oracle
        if oracle.kind != "finite-enumerable":
            raise OracleKindError(
                "cone construction needs finite-enumerable oracles")
        phihat = phi.eval(inst.signal, inst.response)
        X = oracle.response_matrix(inst.signal)
        Phi = phi.batch_rows(inst.signal, X, oracle.response_from_row)
        diff = phihat[None, :] - Phi
        norms = np.linalg.norm(diff, axis=1)
        for k in range(diff.shape[0]):
            if norms[k] <= 1e-12:
                continue
            a = diff[k] / norms[k] if normalize else diff[k]
            rows.append(a)
            prov.append((i, oracle.response_from_row(X[k])))
    p = phi.dimension
    mat = np.array(rows) if rows else np.empty((0, p))
    return ConeDescription(mat, tuple(prov), normalize)


def export_cone_csv(cone, path):
    """Debug dump: provenance columns then the row coefficients."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance_index", "response"]
                        + [f"a{j}" for j in range(cone.p)])
        for (idx, resp), row in zip(cone.provenance, cone.rows):
            ser = ";".join(map(str, resp.as_vector().tolist()))
            writer.writerow([idx, ser] + [repr(v) for v in row])


def _generate_rows(solve_subproblem, rows, offsets, tol=1e-9, block=64):
    """Lazy row generation: solve on a growing subset until no violation.

    ``solve_subproblem(idx)`` solves with the row subset ``idx`` and
    returns theta (or raises).  Returns (theta, active_idx).
    """
    K = rows.shape[0]
    if K == 0:
        return solve_subproblem(np.empty(0, dtype=int)), np.empty(0, int)
    # seed with the rows of largest offset-adjusted norm for stability
    idx = np.unique(np.argsort(-offsets)[:block])
    while True:
        theta = solve_subproblem(idx)
        viol = rows @ theta + offsets
        have = set(idx.tolist())
        worst = np.argsort(-viol)
        new = [int(j) for j in worst[:block]
               if viol[j] > tol and int(j) not in have]
        if not new:
            return theta, idx
        idx = np.concatenate([idx, np.array(new, dtype=int)])


def feasibility_program(cone, theta_set="nonneg_orthant"):
    """A nonzero consistent cost vector, or a typed error if none exists.

    For the nonnegative orthant the normalization is the linear constraint
    sum(theta) = 1 (the l1 norm on the orthant).  For the unrestricted set
    the search runs over the 2p sign-fixed coordinate facets (theta_k =
    +/-1 with a unit box), returning the first feasible one.
    """
    rows = cone.rows
    p = cone.p
    if theta_set == "nonneg_orthant":
        def sub(idx):
            spec = LinearProgramSpec(
                np.zeros(p),
                ineq_matrix=rows[idx] if idx.size else None,
                ineq_rhs=np.zeros(idx.size) if idx.size else None,
                eq_matrix=np.ones((1, p)), eq_rhs=np.array([1.0]),
                lower=np.zeros(p))
            res = solve_lp(spec)
            if res.status != "optimal":
                raise InconsistentDataError("inconsistent data")
            return res.x
        theta, _ = _generate_rows(sub, rows, np.zeros(len(cone)))
        return check_cost_vector(theta, p)
    if theta_set != "all":
        raise ValueError(f"unknown theta_set {theta_set!r}")
    for k in range(p):
        for s in (1.0, -1.0):
            lo = -np.ones(p)
            up = np.ones(p)
            lo[k] = up[k] = s

            def sub(idx, lo=lo, up=up):
                spec = LinearProgramSpec(
                    np.zeros(p),
                    ineq_matrix=rows[idx] if idx.size else None,
                    ineq_rhs=np.zeros(idx.size) if idx.size else None,
                    lower=lo, upper=up)
                res = solve_lp(spec)
                if res.status != "optimal":
                    raise InconsistentDataError("facet infeasible")
                return res.x
            try:
                theta, _ = _generate_rows(sub, rows, np.zeros(len(cone)))
                return check_cost_vector(theta, p)
            except InconsistentDataError:
                continue
    raise InconsistentDataError("inconsistent data")


def incenter(cone, theta_set="all", regularizer="half_sq_l2", d_row=None):
    """Deepest-point convex program of the cone.

    Solves  min R(theta)  s.t.  <theta, a_k> + d_k <= 0 (theta in the
    requested set).  With R = 1/2||.||_2^2 and d_k = ||a_k||_2 the
    normalized solution maximizes the minimum angle to the cone boundary,
    and margin_r = 1/||raw||_2 is that margin's sine.

    Raises
    ------
    NoInteriorError
        If the shifted constraints are infeasible (no strict interior).
    """
    rows = cone.rows
    p = cone.p
    if len(cone) == 0:
        raise NoInteriorError(
            "cone has no constraining rows; every direction is consistent "
            "and the deepest point is undefined")
    if d_row is None:
        d_row = np.linalg.norm(rows, axis=1)
    d_row = np.asarray(d_row, dtype=np.float64)
    if d_row.shape != (len(cone),):
        raise DimensionMismatchError("one offset per cone row required")
    lower = np.zeros(p) if theta_set == "nonneg_orthant" else None

    if regularizer == "half_sq_l2":
        def sub(idx):
            spec = QpSpec(np.eye(p), np.zeros(p),
                          ineq_matrix=rows[idx], ineq_rhs=-d_row[idx],
                          lower=lower)
            res = solve_qp(spec, check_feasibility=True)
            if res.status == "infeasible":
                raise NoInteriorError("no strict interior")
            if res.status != "optimal" or res.kkt_residual > 1e-6:
                raise SolverError(
                    f"max-margin program not certified "
                    f"(status={res.status}, kkt={res.kkt_residual:.2e})")
            return res.x
    elif regularizer == "l1":
        def sub(idx):
            # min ||theta||_1; split variables unless the orthant makes
            # them redundant
            if lower is not None:
                spec = LinearProgramSpec(
                    np.ones(p), ineq_matrix=rows[idx], ineq_rhs=-d_row[idx],
                    lower=np.zeros(p))
            else:
                spec = LinearProgramSpec(
                    np.ones(2 * p),
                    ineq_matrix=np.hstack([rows[idx], -rows[idx]]),
                    ineq_rhs=-d_row[idx], lower=np.zeros(2 * p))
            res = solve_lp(spec)
            if res.status == "infeasible":
                raise NoInteriorError("no strict interior")
            if res.status != "optimal":
                raise SolverError("l1 max-margin program failed")
            return res.x if lower is not None else res.x[:p] - res.x[p:]
    else:
        raise ValueError("regularizer must be half_sq_l2 or l1 here")

    raw, _ = _generate_rows(sub, rows, d_row)
    nrm = float(np.linalg.norm(raw))
    if nrm <= 1e-12:
        raise NoInteriorError("no strict interior")
    return IncenterResult(raw / nrm, 1.0 / nrm, raw)


def extreme_rays(cone, max_dim=8, subset_budget=2_000_000):
    """Extreme rays of the cone by scanning (p-1)-subsets of its rows.

    Rows are deduplicated by direction first; duplicate rays closer than
    the merge angle are dropped.
    """
    p = cone.p
    if p > max_dim:
        raise IntractableDimensionError(
            f"extreme-ray scan limited to dimension {max_dim}; the general "
            "problem grows combinatorially and is intractable")
    rows = cone.rows
    norms = np.linalg.norm(rows, axis=1)
    keep = norms > 1e-12
    dirs = rows[keep] / norms[keep][:, None]
    dirs = np.unique(np.round(dirs, 12), axis=0)
    R = dirs.shape[0]
    if R < p - 1:
        raise NoExtremeRaysError("too few independent rows for rays")
    if math.comb(R, p - 1) > subset_budget:
        raise IntractableDimensionError(
            f"{math.comb(R, p - 1)} subsets exceed the scan budget; reduce "
            "the cone first")
    rays = []
    for sub in combinations(range(R), p - 1):
        M = dirs[list(sub)]
        u_, s, vt = np.linalg.svd(M)
        if (s > _RANK_TOL).sum() != p - 1:
            continue
        v = vt[-1]
        for cand in (v, -v):
            if np.all(dirs @ cand <= _RANK_TOL):
                if not any(_angle_unit(cand, r) < _MERGE_ANGLE
                           for r in rays):
                    rays.append(cand.copy())
    if not rays:
        raise NoExtremeRaysError("no extreme rays found")
    return np.array(rays)


def _angle_unit(u, v):
    return math.acos(min(1.0, max(-1.0, float(u @ v))))


def circumcenter_desk(cone, max_dim=8):
    """Axis of the smallest enclosing revolution cone, at small dimension.

    Enumerates the extreme rays E, then maximizes the minimum inner
    product with E over the unit ball.  By minimax duality that maximum
    equals the distance from the origin to conv(E), so the axis is the
    normalized minimum-norm point of conv(E), computed with the embedded
    QP solver.
    """
    rays = extreme_rays(cone, max_dim=max_dim)
    K = rays.shape[0]
    P = rays @ rays.T
    spec = QpSpec(P + 1e-12 * np.eye(K), np.zeros(K),
                  eq_matrix=np.ones((1, K)), eq_rhs=np.array([1.0]),
                  lower=np.zeros(K))
    res = solve_qp(spec)
    if res.status != "optimal":
        raise SolverError("minimum-norm point program failed")
    point = rays.T @ res.x
    nrm = float(np.linalg.norm(point))
    if nrm <= 1e-9:
        raise NoExtremeRaysError(
            "enclosing-cone aperture is at least a right angle; the axis "
            "is not determined at this scale")
    return point / nrm


def angle(u, v):
    """Euclidean angle between two nonzero vectors, in [0, pi]."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu <= 0.0 or nv <= 0.0:
        raise DimensionMismatchError("angle of a zero vector is undefined")
    c = float(u @ v) / (nu * nv)
    return math.acos(min(1.0, max(-1.0, c)))
