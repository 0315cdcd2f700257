"""Embedded numerical workhorses.

* :func:`solve_lp` - dense two-phase simplex with Bland's rule, returning
  primal solution, duals and a status tag.  The final answer is re-solved
  from the optimal basis with a fresh factorization, so residuals do not
  inherit tableau drift.
* :func:`solve_qp` - operator-splitting (ADMM) solver for convex QPs with a
  direct KKT polish step for high-accuracy duals.
* :func:`argmax_finite` / :func:`argmax_mixed_integer` - budgeted oracles
  for the distance-augmented inner maximization over finite and
  mixed-integer feasible sets.

All solvers are deterministic given their inputs and keep no global state.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import (BudgetError, InfeasibleProblemError, SolverError,
                     UnboundedProblemError)

_PIVOT_TOL = 1e-9
_FEAS_TOL = 1e-8


# ---------------------------------------------------------------------------
# problem specifications


@dataclass(frozen=True)
class LinearProgramSpec:
    """Dense LP: min c'x  s.t.  G x <= h,  E x = f,  lower <= x <= upper."""

    objective: np.ndarray
    ineq_matrix: np.ndarray | None = None
    ineq_rhs: np.ndarray | None = None
    eq_matrix: np.ndarray | None = None
    eq_rhs: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=np.float64)
        if c.ndim != 1 or not np.all(np.isfinite(c)):
            raise ValueError("objective must be a finite 1D vector")
        object.__setattr__(self, "objective", c)
        n = c.size
        for mat, rhs, name in ((self.ineq_matrix, self.ineq_rhs, "ineq"),
                               (self.eq_matrix, self.eq_rhs, "eq")):
            if (mat is None) != (rhs is None):
                raise ValueError(f"{name}_matrix and {name}_rhs must be "
                                 "given together")
            if mat is not None:
                m = np.asarray(mat, dtype=np.float64)
                r = np.asarray(rhs, dtype=np.float64)
                if m.ndim != 2 or m.shape[1] != n or r.shape != (m.shape[0],):
                    raise ValueError(f"inconsistent {name} block dimensions")
                object.__setattr__(self, f"{name}_matrix", m)
                object.__setattr__(self, f"{name}_rhs", r)
        lo = (np.full(n, -np.inf) if self.lower is None
              else np.asarray(self.lower, dtype=np.float64).copy())
        up = (np.full(n, np.inf) if self.upper is None
              else np.asarray(self.upper, dtype=np.float64).copy())
        if lo.shape != (n,) or up.shape != (n,) or np.any(lo > up):
            raise ValueError("invalid variable bounds")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @property
    def n(self):
        return self.objective.size


@dataclass(frozen=True)
class QpSpec:
    """Dense convex QP: min 1/2 x'Px + q'x over the same constraint blocks."""

    quadratic: np.ndarray
    linear: np.ndarray
    ineq_matrix: np.ndarray | None = None
    ineq_rhs: np.ndarray | None = None
    eq_matrix: np.ndarray | None = None
    eq_rhs: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        q = np.asarray(self.linear, dtype=np.float64)
        n = q.size
        P = np.asarray(self.quadratic, dtype=np.float64)
        if P.ndim == 1:
            P = np.diag(P)
        if P.shape != (n, n):
            raise ValueError("quadratic term has wrong shape")
        if not np.allclose(P, P.T, atol=1e-10):
            raise ValueError("quadratic term must be symmetric")
        _check_psd(P)
        object.__setattr__(self, "quadratic", P)
        object.__setattr__(self, "linear", q)
        lp = LinearProgramSpec(q, self.ineq_matrix, self.ineq_rhs,
                               self.eq_matrix, self.eq_rhs,
                               self.lower, self.upper)
        for name in ("ineq_matrix", "ineq_rhs", "eq_matrix", "eq_rhs",
                     "lower", "upper"):
            object.__setattr__(self, name, getattr(lp, name))

    @property
    def n(self):
        return self.linear.size

    def as_lp(self):
        return LinearProgramSpec(self.linear, self.ineq_matrix, self.ineq_rhs,
                                 self.eq_matrix, self.eq_rhs,
                                 self.lower, self.upper)


def _check_psd(P):
    scale = 1.0 + float(np.trace(np.abs(P)))
    try:
        np.linalg.cholesky(P + 1e-12 * scale * np.eye(P.shape[0]))
        return
    except np.linalg.LinAlgError:
        pass
    w = np.linalg.eigvalsh(0.5 * (P + P.T))
    if w.min() < -1e-8 * scale:
        raise ValueError("quadratic term is not positive semidefinite")


@dataclass
class Duals:
    ineq: np.ndarray
    eq: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


@dataclass
class LpResult:
    x: np.ndarray | None
    objective: float
    duals: Duals | None
    status: str  # optimal | infeasible | unbounded
    iterations: int = 0
    residuals: dict = field(default_factory=dict)


@dataclass
class QpResult:
    x: np.ndarray | None
    objective: float
    duals: Duals | None
    status: str  # optimal | infeasible | iteration_limit
    iterations: int = 0
    kkt_residual: float = np.inf
    delegated: bool = False


# ---------------------------------------------------------------------------
# two-phase simplex


class _Standardizer:
    """Rewrites an LP with bounds into equality standard form min c'y, y>=0."""

    def __init__(self, spec):
        self.spec = spec
        n = spec.n
        cols = []           # per structural col: (orig var j, coeff +1/-1)
        offsets = np.zeros(n)
        self.var_cols = []  # per original var: ("shift"|{"mirror"}|..., cols)
        ub_rows = []        # (col index, value)
        for j in range(n):
            lo, up = spec.lower[j], spec.upper[j]
            if np.isfinite(lo):
                cols.append((j, 1.0))
                offsets[j] = lo
                self.var_cols.append(("shift", [len(cols) - 1]))
                if np.isfinite(up):
                    ub_rows.append((len(cols) - 1, up - lo))
            elif np.isfinite(up):
                cols.append((j, -1.0))
                offsets[j] = up
                self.var_cols.append(("mirror", [len(cols) - 1]))
            else:
                cols.append((j, 1.0))
                cols.append((j, -1.0))
                self.var_cols.append(("split", [len(cols) - 2, len(cols) - 1]))
        self.offsets = offsets
        ns = len(cols)
        S = np.zeros((n, ns))
        for a, (j, coef) in enumerate(cols):
            S[j, a] = coef
        self.S = S

        G = spec.ineq_matrix if spec.ineq_matrix is not None \
            else np.zeros((0, n))
        h = spec.ineq_rhs if spec.ineq_rhs is not None else np.zeros(0)
        E = spec.eq_matrix if spec.eq_matrix is not None else np.zeros((0, n))
        f = spec.eq_rhs if spec.eq_rhs is not None else np.zeros(0)
        self.mi, self.me, self.mu = G.shape[0], E.shape[0], len(ub_rows)
        m = self.mi + self.me + self.mu

        rows = np.zeros((m, ns))
        rhs = np.zeros(m)
        rows[:self.mi] = G @ S
        rhs[:self.mi] = h - G @ offsets
        rows[self.mi:self.mi + self.me] = E @ S
        rhs[self.mi:self.mi + self.me] = f - E @ offsets
        for k, (a, val) in enumerate(ub_rows):
            rows[self.mi + self.me + k, a] = 1.0
            rhs[self.mi + self.me + k] = val
        self.ub_cols = np.array([a for a, _ in ub_rows], dtype=int)

        # slack columns for ineq and ub rows
        nslack = self.mi + self.mu
        slack = np.zeros((m, nslack))
        for i in range(self.mi):
            slack[i, i] = 1.0
        for k in range(self.mu):
            slack[self.mi + self.me + k, self.mi + k] = 1.0
        A = np.hstack([rows, slack])
        c = np.concatenate([self.S.T @ spec.objective, np.zeros(nslack)])

        # flip rows to make rhs nonneg; remember signs for dual recovery
        self.sign = np.where(rhs < 0, -1.0, 1.0)
        A *= self.sign[:, None]
        rhs = rhs * self.sign
        self.A, self.b, self.c = A, rhs, c
        self.ns, self.nslack, self.m = ns, nslack, m
        self.obj_offset = float(spec.objective @ offsets)

    def recover(self, y, pi, reduced):
        """Map a standard-form solution back to the original space."""
        spec = self.spec
        x = self.S @ y[:self.ns] + self.offsets
        lam = np.maximum(-(self.sign[:self.mi] * pi[:self.mi]), 0.0)
        mu = -(self.sign[self.mi:self.mi + self.me]
               * pi[self.mi:self.mi + self.me])
        pi_ub = pi[self.mi + self.me:]
        nu_lo = np.zeros(spec.n)
        nu_up = np.zeros(spec.n)
        ub_lookup = {a: k for k, a in enumerate(self.ub_cols)}
        for j, (kind, cidx) in enumerate(self.var_cols):
            if kind == "shift":
                nu_lo[j] = max(reduced[cidx[0]], 0.0)
                if cidx[0] in ub_lookup:
                    nu_up[j] = max(-pi_ub[ub_lookup[cidx[0]]], 0.0)
            elif kind == "mirror":
                nu_up[j] = max(reduced[cidx[0]], 0.0)
        return x, Duals(lam, mu, nu_lo, nu_up)


def _set_cost_row(T, basis, cost):
    m = T.shape[0] - 1
    cb = cost[basis]
    T[-1, :-1] = cost - cb @ T[:m, :-1]
    T[-1, -1] = -float(cb @ T[:m, -1])


def _refresh_tableau(T, basis, cost, Aext, b):
    """Rebuild the tableau from the basis to shed accumulated drift."""
    m = T.shape[0] - 1
    B = Aext[:, basis]
    try:
        T[:m, :-1] = np.linalg.solve(B, Aext)
        T[:m, -1] = np.linalg.solve(B, b)
    except np.linalg.LinAlgError:
        T[:m, :-1] = np.linalg.lstsq(B, Aext, rcond=None)[0]
        T[:m, -1] = np.linalg.lstsq(B, b, rcond=None)[0]
    _set_cost_row(T, basis, cost)


def _simplex_loop(T, basis, allowed, cost, Aext, b, tol, max_iter,
                  pivot_log, refresh_every=1000):
    """Primal simplex on tableau T in place.

    Entering column by Dantzig's rule; after a long run of degenerate
    pivots the rule switches to Bland's (smallest index) until progress
    resumes, which prevents cycling.  The tableau is refactorized from
    the basis periodically and before any unbounded verdict, so drift
    cannot fabricate termination states.
    """
    m = T.shape[0] - 1
    it = 0
    degen_run = 0
    since_refresh = 0
    while it < max_iter:
        d = T[-1, :-1]
        cand = np.nonzero((d < -tol) & allowed)[0]
        if cand.size == 0:
            if since_refresh:
                _refresh_tableau(T, basis, cost, Aext, b)
                since_refresh = 0
                d = T[-1, :-1]
                cand = np.nonzero((d < -tol) & allowed)[0]
            if cand.size == 0:
                return "optimal", it
        if degen_run > 2 * m:
            j = int(cand[0])  # Bland
        else:
            j = int(cand[np.argmin(d[cand])])  # Dantzig
        col = T[:m, j]
        pos = col > tol
        if not pos.any():
            if since_refresh:
                _refresh_tableau(T, basis, cost, Aext, b)
                since_refresh = 0
                continue  # re-evaluate candidates on clean numbers
            return "unbounded", it
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / col[pos]
        best = ratios.min()
        ties = np.nonzero(ratios <= best + 1e-12)[0]
        if degen_run > 2 * m:
            # Bland's anti-cycling leave rule: smallest basis index
            r = int(ties[np.argmin(np.asarray(basis)[ties])])
        else:
            # stability: among ties take the largest pivot element
            r = int(ties[np.argmax(np.abs(col[ties]))])
        piv = T[r, j]
        if abs(piv) < tol:
            raise SolverError("pivot breakdown (element below tolerance)",
                              pivot_log[-50:])
        pivot_log.append((int(basis[r]), j, float(piv)))
        T[r, :] /= piv
        factor = T[:, j].copy()
        factor[r] = 0.0
        T -= np.outer(factor, T[r, :])
        basis[r] = j
        degen_run = degen_run + 1 if best <= 1e-12 else 0
        it += 1
        since_refresh += 1
        if since_refresh >= refresh_every:
            _refresh_tableau(T, basis, cost, Aext, b)
            since_refresh = 0
    raise SolverError(f"simplex iteration limit ({max_iter}) exceeded",
                      pivot_log[-50:])


def _complete_basis(Aext, basis, xb, unit_col_for_row):
    """Repair a (near-)singular basis by greedy rank-revealing selection.

    Keeps current basis columns in decreasing activity order while they
    stay numerically independent, then completes with per-row unit
    columns (slack or artificial), which always span.
    """
    m = Aext.shape[0]
    order = list(np.asarray(basis)[np.argsort(-np.abs(xb))])
    candidates = order + [unit_col_for_row[i] for i in range(m)]
    Q = np.zeros((m, m))
    chosen = []
    k = 0
    seen = set()
    for j in candidates:
        j = int(j)
        if j in seen:
            continue
        seen.add(j)
        col = Aext[:, j]
        resid = col - Q[:, :k] @ (Q[:, :k].T @ col)
        nrm = np.linalg.norm(resid)
        if nrm > 1e-8 * max(1.0, np.linalg.norm(col)):
            Q[:, k] = resid / nrm
            chosen.append(j)
            k += 1
            if k == m:
                break
    if k < m:
        raise SolverError("basis repair failed to reach full rank")
    return np.array(chosen, dtype=int)


def solve_lp(spec, tol=_PIVOT_TOL, max_iter=None, debug_dump=None):
    """Solve a dense LP by two-phase simplex with Bland's rule.

    Parameters
    ----------
    spec : LinearProgramSpec
        Problem data (min c'x, G x <= h, E x = f, bounds).
    tol : float, optional
        Pivot/optimality tolerance.
    max_iter : int, optional
        Pivot cap; defaults to a size-dependent value.
    debug_dump : {str, None}, optional
        If given, write the final tableau to this path on failure paths.

    Returns
    -------
    LpResult
        Status is one of ``optimal``, ``infeasible``, ``unbounded``.  When
        optimal, primal/dual feasibility and complementary slackness
        residuals are at most 1e-8 (verified; a violation raises
        :class:`SolverError`).
    """
    std = _Standardizer(spec)
    A, b, c = std.A, std.b, std.c
    m, ncols = A.shape
    if max_iter is None:
        max_iter = max(5000, 60 * (m + ncols))
    pivot_log = []

    # phase 1: artificials only where the slack cannot serve as basis
    need_art = np.ones(m, dtype=bool)
    basis = np.full(m, -1, dtype=int)
    for i in range(std.mi):
        if std.sign[i] > 0:
            basis[i] = std.ns + i
            need_art[i] = False
    for k in range(std.mu):
        i = std.mi + std.me + k
        if std.sign[i] > 0:
            basis[i] = std.ns + std.mi + k
            need_art[i] = False
    art_rows = np.nonzero(need_art)[0]
    nart = art_rows.size
    Aext = np.hstack([A, np.zeros((m, nart))])
    for k, i in enumerate(art_rows):
        Aext[i, ncols + k] = 1.0
        basis[i] = ncols + k
    total = ncols + nart

    T = np.zeros((m + 1, total + 1))
    T[:m, :total] = Aext
    T[:m, -1] = b
    cost1 = np.zeros(total)
    cost1[ncols:] = 1.0
    _set_cost_row(T, basis, cost1)
    allowed = np.ones(total, dtype=bool)
    status, it1 = _simplex_loop(T, basis, allowed, cost1, Aext, b, tol,
                                max_iter, pivot_log)
    if status != "optimal" or -T[-1, -1] > 1e-7 * (1.0 + abs(b).max(initial=0.0)):
        if debug_dump:
            _dump_tableau(debug_dump, T, basis)
        return LpResult(None, np.inf, None, "infeasible", it1)

    # pivot artificials out of the basis where possible
    for i in range(m):
        if basis[i] >= ncols and abs(T[i, -1]) <= 1e-9:
            row = T[i, :ncols]
            js = np.nonzero(np.abs(row) > tol)[0]
            if js.size:
                j = int(js[0])
                piv = T[i, j]
                T[i, :] /= piv
                factor = T[:, j].copy()
                factor[i] = 0.0
                T -= np.outer(factor, T[i, :])
                basis[i] = j

    # phase 2
    allowed[ncols:] = False
    cost2 = np.concatenate([c, np.zeros(nart)])
    _set_cost_row(T, basis, cost2)
    status, it2 = _simplex_loop(T, basis, allowed, cost2, Aext, b, tol,
                                max_iter, pivot_log)
    iterations = it1 + it2
    if status == "unbounded":
        return LpResult(None, -np.inf, None, "unbounded", iterations)

    # re-solve from the final basis for clean numbers
    for _ in range(3):
        B = Aext[:, basis]
        try:
            xb = np.linalg.solve(B, b)
            pi = np.linalg.solve(B.T, cost2[basis])
        except np.linalg.LinAlgError:
            xb = np.linalg.lstsq(B, b, rcond=None)[0]
            pi = np.linalg.lstsq(B.T, cost2[basis], rcond=None)[0]
        reduced = cost2 - Aext.T @ pi
        viol = (reduced < -1e-9) & allowed
        viol[basis] = False
        if not viol.any() and xb.min(initial=0.0) >= -1e-9:
            break
        # drift or a near-singular basis: rebuild and continue pivoting
        _refresh_tableau(T, basis, cost2, Aext, b)
        status, extra = _simplex_loop(T, basis, allowed, cost2, Aext, b,
                                      tol, max_iter, pivot_log)
        iterations += extra
        if status == "unbounded":
            return LpResult(None, -np.inf, None, "unbounded", iterations)
    y = np.zeros(total)
    y[basis] = xb
    x, duals = std.recover(y, pi, reduced)
    obj = float(cost2[basis] @ xb) + std.obj_offset
    res = _lp_kkt_residuals(spec, x, duals)
    worst = max(res.values())
    if worst > _FEAS_TOL:
        if debug_dump:
            _dump_tableau(debug_dump, T, basis)
        raise SolverError(
            f"LP residual check failed ({worst:.2e} > {_FEAS_TOL:.0e})",
            pivot_log[-50:])
    return LpResult(x, obj, duals, "optimal", iterations, res)


def _lp_kkt_residuals(spec, x, duals):
    n = spec.n
    grad = spec.objective.copy()
    r_prim = 0.0
    comp = 0.0
    if spec.ineq_matrix is not None:
        slack = spec.ineq_rhs - spec.ineq_matrix @ x
        r_prim = max(r_prim, float(np.maximum(-slack, 0.0).max(initial=0.0)))
        comp = max(comp, float(np.abs(duals.ineq * slack).max(initial=0.0)))
        grad += spec.ineq_matrix.T @ duals.ineq
    if spec.eq_matrix is not None:
        r_prim = max(r_prim, float(
            np.abs(spec.eq_matrix @ x - spec.eq_rhs).max(initial=0.0)))
        grad += spec.eq_matrix.T @ duals.eq
    lo, up = spec.lower, spec.upper
    r_prim = max(r_prim,
                 float(np.maximum(lo - x, 0.0)[np.isfinite(lo)].max(initial=0.0)),
                 float(np.maximum(x - up, 0.0)[np.isfinite(up)].max(initial=0.0)))
    grad -= duals.lower
    grad += duals.upper
    flo = np.isfinite(lo)
    fup = np.isfinite(up)
    if flo.any():
        comp = max(comp, float(
            np.abs(duals.lower[flo] * (x - lo)[flo]).max(initial=0.0)))
    if fup.any():
        comp = max(comp, float(
            np.abs(duals.upper[fup] * (up - x)[fup]).max(initial=0.0)))
    scale = 1.0 + float(np.abs(spec.objective).max(initial=0.0))
    return {"primal": r_prim, "stationarity": float(np.abs(grad).max()) / scale,
            "complementarity": comp / scale}


def _dump_tableau(path, T, basis):
    with open(path, "w") as fh:
        fh.write(f"basis: {list(map(int, basis))}\n")
        for row in T:
            fh.write(" ".join(f"{v: .6e}" for v in row) + "\n")


# ---------------------------------------------------------------------------
# QP via ADMM with KKT polish


def solve_qp(spec, tol=1e-9, max_iter=200_000, rho=0.1, sigma=1e-6,
             check_feasibility=False):
    """Solve a convex QP by operator splitting plus a direct polish step.

    The zero-quadratic path is disabled: an all-zero quadratic term makes
    the problem an LP and the call is delegated to :func:`solve_lp` (the
    result is flagged with ``delegated=True``).

    Parameters
    ----------
    spec : QpSpec
    tol : float, optional
        Target KKT residual (post-polish; pre-polish splitting iterations
        stop at a coarser threshold).
    max_iter : int, optional
        Splitting iteration cap; hitting it returns
        ``status='iteration_limit'`` with the best iterate found.
    check_feasibility : bool, optional
        When True, certify feasibility first with a phase-1 simplex run and
        return ``status='infeasible'`` if the constraints are inconsistent.
    """
    P, q = spec.quadratic, spec.linear
    if not P.any():
        lp = solve_lp(spec.as_lp())
        return QpResult(lp.x, lp.objective, lp.duals, lp.status,
                        lp.iterations, max(lp.residuals.values(), default=np.inf),
                        delegated=True)
    if check_feasibility:
        probe = LinearProgramSpec(np.zeros(spec.n), spec.ineq_matrix,
                                  spec.ineq_rhs, spec.eq_matrix, spec.eq_rhs,
                                  spec.lower, spec.upper)
        if solve_lp(probe).status == "infeasible":
            return QpResult(None, np.inf, None, "infeasible")

    n = spec.n
    blocks = []
    lo_list = []
    up_list = []
    mi = me = 0
    if spec.ineq_matrix is not None:
        mi = spec.ineq_matrix.shape[0]
        blocks.append(spec.ineq_matrix)
        lo_list.append(np.full(mi, -np.inf))
        up_list.append(spec.ineq_rhs)
    if spec.eq_matrix is not None:
        me = spec.eq_matrix.shape[0]
        blocks.append(spec.eq_matrix)
        lo_list.append(spec.eq_rhs)
        up_list.append(spec.eq_rhs)
    bounded = np.nonzero(np.isfinite(spec.lower) | np.isfinite(spec.upper))[0]
    if bounded.size:
        Ib = np.zeros((bounded.size, n))
        Ib[np.arange(bounded.size), bounded] = 1.0
        blocks.append(Ib)
        lo_list.append(spec.lower[bounded])
        up_list.append(spec.upper[bounded])
    if not blocks:
        blocks.append(np.zeros((0, n)))
        lo_list.append(np.zeros(0))
        up_list.append(np.zeros(0))
    A = np.vstack(blocks)
    lo = np.concatenate(lo_list)
    up = np.concatenate(up_list)
    m = A.shape[0]

    # row equilibration
    norms = np.linalg.norm(A, axis=1)
    norms[norms < 1e-12] = 1.0
    D = 1.0 / norms
    As = A * D[:, None]
    los = lo * D
    ups = up * D

    eq_mask = np.zeros(m, dtype=bool)
    eq_mask[mi:mi + me] = True
    rho_vec = np.full(m, rho)
    rho_vec[eq_mask] *= 1e3

    x = np.zeros(n)
    z = np.clip(np.zeros(m), los, ups)
    yv = np.zeros(m)
    it = 0
    refactor = True
    chol = None
    best_x, best_y, best_res = x.copy(), yv * D, np.inf
    targets = iter((1e-6, 1e-8, 1e-10, 0.0))
    target = next(targets)
    r_p = r_d = np.inf
    while it < max_iter:
        if refactor:
            K = P + sigma * np.eye(n) + As.T @ (rho_vec[:, None] * As)
            chol = np.linalg.cholesky(K)
            refactor = False
        for _ in range(50):
            rhs = sigma * x - q + As.T @ (rho_vec * z - yv)
            x = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
            Ax = As @ x
            z = np.clip(Ax + yv / rho_vec, los, ups)
            yv = yv + rho_vec * (Ax - z)
            it += 1
        r_p = float(np.abs(Ax - z).max(initial=0.0))
        r_d = float(np.abs(P @ x + q + As.T @ yv).max(initial=0.0))
        if max(r_p, r_d) < best_res:
            best_x, best_y, best_res = x.copy(), yv * D, max(r_p, r_d)
        if max(r_p, r_d) <= target:
            # try to finish with a direct active-set solve
            x_pol, y_pol, kkt = _qp_polish(P, q, A, lo, up, x, yv * D,
                                           eq_mask)
            if kkt is not None and kkt < best_res:
                best_x, best_y, best_res = x_pol, y_pol, kkt
            if best_res <= tol * 10:
                return QpResult(best_x, _qp_objective(spec, best_x),
                                _qp_split_duals(best_y, mi, me, bounded, n),
                                "optimal", it, best_res)
            target = next(targets, 0.0)
            if target == 0.0:
                break
        if it % 5000 == 0 and r_p > 1e-12 and r_d > 1e-12:
            ratio = np.sqrt(r_p / r_d)
            if ratio > 5 or ratio < 0.2:
                rho_vec = np.clip(rho_vec * ratio, 1e-6, 1e6)
                refactor = True
    status = "optimal" if best_res < 1e-6 else "iteration_limit"
    return QpResult(best_x, _qp_objective(spec, best_x),
                    _qp_split_duals(best_y, mi, me, bounded, n),
                    status, it, best_res)


def _qp_objective(spec, x):
    return float(0.5 * x @ spec.quadratic @ x + spec.linear @ x)


def _qp_split_duals(y, mi, me, bounded, n):
    lam = np.maximum(y[:mi], 0.0)
    mu = y[mi:mi + me]
    nu_lo = np.zeros(n)
    nu_up = np.zeros(n)
    yb = y[mi + me:]
    nu_up[bounded] = np.maximum(yb, 0.0)
    nu_lo[bounded] = np.maximum(-yb, 0.0)
    return Duals(lam, mu, nu_lo, nu_up)


def _qp_polish(P, q, A, lo, up, x, y, eq_mask, act_tol=1e-7):
    """Solve the equality-constrained KKT system on the guessed active set."""
    Ax = A @ x
    low_act = (~eq_mask) & ((y < -act_tol) | (Ax - lo < act_tol)) \
        & np.isfinite(lo)
    up_act = (~eq_mask) & ((y > act_tol) | (up - Ax < act_tol)) \
        & np.isfinite(up)
    act = eq_mask | low_act | up_act
    rows = np.nonzero(act)[0]
    b_act = np.where(up_act[rows], up[rows], lo[rows])
    k = rows.size
    n = P.shape[0]
    KKT = np.zeros((n + k, n + k))
    reg = 1e-11
    KKT[:n, :n] = P + reg * np.eye(n)
    KKT[:n, n:] = A[rows].T
    KKT[n:, :n] = A[rows]
    KKT[n:, n:] = -reg * np.eye(k)
    rhs = np.concatenate([-q, b_act])
    try:
        sol = np.linalg.solve(KKT, rhs)
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(KKT, rhs, rcond=None)
    x_new = sol[:n]
    y_new = np.zeros(A.shape[0])
    y_new[rows] = sol[n:]
    # sign-correct inactive multipliers and verify
    y_new[~act] = 0.0
    bad = (~eq_mask) & ((y_new > 0) & ~np.isfinite(up)
                        | (y_new < 0) & ~np.isfinite(lo))
    y_new[bad] = 0.0
    Axn = A @ x_new
    r_p = float(np.max(np.concatenate([
        np.maximum(lo - Axn, 0.0)[np.isfinite(lo)],
        np.maximum(Axn - up, 0.0)[np.isfinite(up)], [0.0]])))
    r_d = float(np.abs(P @ x_new + q + A.T @ y_new).max(initial=0.0))
    # wrong multiplier signs invalidate the active-set guess
    sign_ok = np.all(y_new[(~eq_mask) & up_act] >= -1e-9) and \
        np.all(y_new[(~eq_mask) & low_act] <= 1e-9)
    if not sign_ok:
        return x, y, None
    return x_new, y_new, max(r_p, r_d)


# ---------------------------------------------------------------------------
# budgeted argmax oracles


def _check_budget(budget):
    if budget.exact and (budget.max_nodes is not None
                         or budget.suboptimality_eps is not None):
        raise BudgetError("exact budget must not carry caps")
    if budget.suboptimality_eps is not None and budget.suboptimality_eps < 0:
        raise BudgetError("suboptimality_eps must be nonnegative")


def argmax_finite(oracle, signal, xhat, theta, phi, dist, budget):
    """Distance-augmented argmax over a finite enumerated response set.

    Maximizes  <theta, phi(s, xhat) - phi(s, x)> + d(xhat, x)  over the
    oracle's enumerated responses in lexicographic order.  Exact budgets
    scan everything and report eps 0; capped budgets scan a prefix and
    report an upper bound on the optimality gap derived from interval
    arithmetic on <theta, phi> plus a distance bound.
    """
    _check_budget(budget)
    X = oracle.response_matrix(signal)
    if X.shape[0] == 0:
        raise BudgetError("empty feasible set; nothing to scan")
    xhat_vec = xhat.as_vector()
    capped = not budget.exact and (budget.max_nodes is not None
                                   or budget.suboptimality_eps is not None)
    upper = np.inf
    stop_gap = -1.0
    if capped:
        upper = _finite_upper_bound(oracle, signal, xhat, theta, phi, dist)
        if budget.suboptimality_eps is not None:
            stop_gap = float(budget.suboptimality_eps)
    cap = 0 if budget.max_nodes is None else int(budget.max_nodes)

    if phi.is_identity and dist.kind_code is not None:
        idx, val, scanned = _kernels.scan_best_response(
            X, np.asarray(theta, dtype=np.float64), xhat_vec,
            dist.kind_code, cap, upper, stop_gap)
    else:
        limit = X.shape[0] if cap <= 0 else min(cap, X.shape[0])
        Phi = phi.batch_rows(signal, X[:limit], oracle.response_from_row)
        phihat = phi.eval(signal, xhat)
        scores = (phihat[None, :] - Phi) @ theta \
            + dist.batch(xhat_vec, X[:limit])
        if stop_gap >= 0.0:
            run = np.maximum.accumulate(scores)
            hit = np.nonzero(upper - run <= stop_gap)[0]
            if hit.size:
                limit = int(hit[0]) + 1
                scores = scores[:limit]
        idx = int(np.argmax(scores))
        val, scanned = float(scores[idx]), limit
    eps = 0.0
    if scanned < X.shape[0]:
        eps = max(0.0, upper - val)
    return oracle.response_from_row(X[idx]), float(val), float(eps)


def _finite_upper_bound(oracle, signal, xhat, theta, phi, dist):
    box = phi.coord_bounds(signal)
    if box is None:
        raise BudgetError(
            "capped budgets need feature coordinate bounds to report an "
            "honest gap; supply coord_bounds on the feature map or use an "
            "exact budget")
    lo, hi = box
    phihat = phi.eval(signal, xhat)
    base = float(theta @ phihat)
    # max over the box of -<theta, phi>
    neg_max = float(np.sum(np.maximum(-theta * lo, -theta * hi)))
    rlo, rhi = oracle.response_box(signal)
    dmax = dist.upper_bound(xhat.as_vector(), rlo, rhi)
    if dmax is None:
        raise BudgetError("capped budgets need a distance upper bound")
    return base + neg_max + float(dmax)


def argmax_mixed_integer(oracle, signal, xhat, theta, dist, budget):
    """Distance-augmented argmax over a mixed-integer feasible set.

    For each discrete completion z in the oracle's enumerated list (prefix
    under a capped budget), the continuous part is optimized exactly with
    the embedded LP solver; the infinity-norm distance on the continuous
    block is handled by one LP per signed unit objective tilt.
    """
    _check_budget(budget)
    Q, qv = oracle.split_theta(theta)
    Z = oracle.z_list(signal)
    M = len(Z)
    cap = M if budget.exact or budget.max_nodes is None \
        else min(int(budget.max_nodes), M)
    u = oracle.u
    tilts = [np.zeros(u)]
    if dist.include_y and u > 0:
        tilts = [e * s for e in np.eye(u) for s in (1.0, -1.0)]
    A, B, c = oracle.constraint_blocks(signal)
    yhat, zhat = xhat.y, xhat.z
    base = float(theta @ oracle.feature_map.eval(signal, xhat))
    best_val = -np.inf
    best = None
    stop_gap = (float(budget.suboptimality_eps)
                if budget.suboptimality_eps is not None else -1.0)
    bound_all = oracle.value_upper_bound(signal, xhat, theta, dist) \
        if (cap < M or stop_gap >= 0) else np.inf
    scanned = 0
    for j in range(cap):
        z = Z[j]
        dz = dist.z_distance(zhat, z)
        rhs = c - B @ z
        phi1 = np.asarray(oracle.phi1(signal["w"], z), dtype=np.float64)
        phi2 = np.asarray(oracle.phi2(signal["w"], z), dtype=np.float64)
        const = base - float(qv @ phi2) + dz
        for h in tilts:
            if u == 0:
                feas = np.all(rhs >= -1e-9)
                if not feas:
                    continue
                val = const
                y_opt = np.zeros(0)
            else:
                lp = solve_lp(LinearProgramSpec(
                    Q @ phi1 + h, ineq_matrix=A, ineq_rhs=rhs))
                if lp.status == "infeasible":
                    continue
                if lp.status == "unbounded":
                    raise UnboundedProblemError(
                        "inner continuous maximization is unbounded; the "
                        "feasible set must bound the continuous block")
                val = const - lp.objective + float(h @ yhat)
                y_opt = lp.x
            if val > best_val:
                best_val = val
                best = (y_opt, z)
        scanned = j + 1
        if stop_gap >= 0 and bound_all - best_val <= stop_gap:
            break
    if best is None:
        raise InfeasibleProblemError("no feasible completion found")
    eps = 0.0
    if scanned < M:
        eps = max(0.0, float(bound_all) - best_val)
    y_opt, z_opt = best
    return oracle.make_response(y_opt, z_opt), float(best_val), float(eps)
