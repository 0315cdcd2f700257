"""First-order trainer: stochastic approximate mirror descent.

Each iteration samples a batch of instances, computes a (possibly
budget-approximate) subgradient of the regularized mean loss at the
current iterate, and takes a mirror-descent step:

* euclidean mirror - projected subgradient update onto the requested set;
* entropic mirror - exponentiated update on a scaled-simplex reformulation
  of the l1-regularized problem (iterates stay strictly positive and are
  renormalized when they leave the l1 budget).

A rate-verification harness replays seeded runs on a small instance with
a known optimum and compares the averaged-iterate suboptimality with the
theoretical bound evaluated at measured constants.
"""

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from . import _rng
from .core import EXACT, check_cost_vector
from .errors import ConfigError, IterateDivergedError
from .losses import empirical_loss, subgradient
from .reformulate import train_asl_enumerated


@dataclass(frozen=True)
class MirrorMap:
    kind: str = "euclidean"  # euclidean | entropic_simplex
    kappa_tilde: float | None = None

    def __post_init__(self):
        if self.kind not in ("euclidean", "entropic_simplex"):
            raise ConfigError(f"unknown mirror map {self.kind!r}")
        if self.kind == "entropic_simplex" and self.kappa_tilde is not None \
                and self.kappa_tilde <= 0:
            raise ConfigError("l1 budget parameter must be positive")


@dataclass(frozen=True)
class StepRule:
    kind: str  # c_over_sqrt_t | two_over_alpha_t | norm_adaptive
    c: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in ("c_over_sqrt_t", "two_over_alpha_t",
                             "norm_adaptive"):
            raise ConfigError(f"unknown step rule {self.kind!r}")
        if self.kind == "c_over_sqrt_t" and self.c <= 0:
            raise ConfigError("step constant must be positive")
        if self.kind == "two_over_alpha_t" and self.alpha <= 0:
            raise ConfigError("strong-convexity constant must be positive")

    def eta(self, t, grad_dual_norm):
        if self.kind == "c_over_sqrt_t":
            return self.c / np.sqrt(t)
        if self.kind == "two_over_alpha_t":
            return 2.0 / (self.alpha * (t + 1))
        if grad_dual_norm <= 0.0:
            return 0.0
        return 1.0 / (grad_dual_norm * np.sqrt(t))


@dataclass(frozen=True)
class SamdConfig:
    steps: int
    step_rule: StepRule
    batch_size: int = 1
    budget_schedule: object = None      # callable t -> Budget, None = exact
    averaging: str = "uniform"          # none | uniform | weighted_t
    seed: int = 0
    theta_set: object = "all"           # all | nonneg_orthant |
    #                                     ("box", lo, hi) | ("l1_ball", r)
    snapshot_stride: int | None = None
    eval_at: tuple = ()                 # extra iterations to evaluate loss

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1:
            raise ConfigError("steps and batch_size must be at least 1")
        if self.averaging not in ("none", "uniform", "weighted_t"):
            raise ConfigError(f"unknown averaging {self.averaging!r}")


@dataclass
class SamdTrace:
    iters: list = field(default_factory=list)
    times: list = field(default_factory=list)
    eps: list = field(default_factory=list)
    batches: list = field(default_factory=list)
    losses: dict = field(default_factory=dict)      # iter -> loss of avg
    snapshots: dict = field(default_factory=dict)   # iter -> averaged theta
    final_averages: dict = field(default_factory=dict)
    lifted: bool = False
    kappa_tilde: float | None = None


def project(theta_set, v):
    """Euclidean projection onto the supported parameter sets."""
    if theta_set == "all":
        return v
    if theta_set == "nonneg_orthant":
        return np.maximum(v, 0.0)
    kind = theta_set[0]
    if kind == "box":
        return np.clip(v, theta_set[1], theta_set[2])
    if kind == "l1_ball":
        return _project_l1(v, theta_set[1])
    raise ConfigError(f"unknown theta_set {theta_set!r}")


def _project_l1(v, radius):
    if np.abs(v).sum() <= radius:
        return v
    u = np.sort(np.abs(v))[::-1]
    css = np.cumsum(u)
    ks = np.arange(1, v.size + 1)
    cond = u - (css - radius) / ks > 0
    rho = int(np.nonzero(cond)[0][-1])
    tau = (css[rho] - radius) / (rho + 1.0)
    return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)


@dataclass
class LiftedProblem:
    """l1-regularized problem recast over a scaled simplex.

    theta = recovery_map @ theta_tilde, the loss value is unchanged, and
    the l1 penalty becomes the budget constraint
    kappa_tilde * ||theta_tilde||_1 <= 1.
    """

    dimension: int
    kappa_tilde: float
    recovery_map: np.ndarray

    def recover(self, theta_tilde):
        return self.recovery_map @ theta_tilde

    def lift(self, theta):
        return np.concatenate([np.maximum(theta, 0.0),
                               np.maximum(-theta, 0.0)])


def lift_l1_to_simplex(ds, phi, d, kappa, theta_set="all",
                       kappa_tilde=None):
    """Build the simplex lifting of the l1-regularized training problem.

    The budget parameter defaults to 1/||theta*||_1 with theta* the
    full-batch optimum of the enumerated trainer, so that the constrained
    and penalized problems share a solution; pass ``kappa_tilde``
    explicitly to skip that solve.
    """
    if theta_set not in ("all", "nonneg_orthant"):
        raise ConfigError(
            "simplex lifting supports the free and nonnegative sets only")
    p = phi.dimension
    if kappa_tilde is None:
        sol = train_asl_enumerated(ds, phi, d, kappa=kappa,
                                   regularizer="l1", theta_set=theta_set)
        norm1 = float(np.abs(sol.theta).sum())
        kappa_tilde = 1.0 / norm1 if norm1 > 1e-12 else 1.0
    recovery = np.hstack([np.eye(p), -np.eye(p)])
    return LiftedProblem(2 * p, float(kappa_tilde), recovery)


def _loss_at(theta, ds, phi, d, kappa, regularizer, hinge):
    return empirical_loss(theta, ds, phi, d, kappa, regularizer,
                          hinge=hinge).value


def samd_train(ds, phi, d, kappa, regularizer, mirror, cfg, theta0=None,
               hinge=False, lifted=None):
    """Run mirror descent with sampled, budgeted subgradients.

    Parameters
    ----------
    mirror : MirrorMap
        The entropic map requires ``regularizer='l1'``; with the free set
        the problem is lifted to dimension 2p first (see
        :func:`lift_l1_to_simplex`), with the nonnegative orthant the
        exponentiated update runs directly (positivity is automatic).
    cfg : SamdConfig
    theta0 : 1D ndarray, optional
        Start point; defaults to zero (euclidean) or the uniform simplex
        point (entropic).
    lifted : LiftedProblem, optional
        Reuse a lifting (and its calibrated budget) across runs.

    Returns
    -------
    (theta, SamdTrace)
        ``theta`` is the averaged iterate per ``cfg.averaging``, mapped
        back to the original space for entropic runs.
    """
    N = len(ds)
    if cfg.batch_size > N:
        raise ConfigError("batch_size cannot exceed the dataset size")
    rng = _rng.substream(cfg.seed, _rng.SAMPLING)
    stride = cfg.snapshot_stride or max(1, cfg.steps // 1000)
    eval_at = set(int(t) for t in cfg.eval_at)
    trace = SamdTrace()

    entropic = mirror.kind == "entropic_simplex"
    if entropic:
        if regularizer != "l1":
            raise ConfigError("entropic mirror needs the l1 regularizer")
        if cfg.theta_set == "all":
            lifted = lifted or lift_l1_to_simplex(ds, phi, d, kappa,
                                                  "all", mirror.kappa_tilde)
            dim = lifted.dimension
            kt = lifted.kappa_tilde
            trace.lifted = True
        elif cfg.theta_set == "nonneg_orthant":
            lifted = None
            dim = phi.dimension
            if mirror.kappa_tilde is not None:
                kt = mirror.kappa_tilde
            else:
                sol = train_asl_enumerated(ds, phi, d, kappa=kappa,
                                           regularizer="l1",
                                           theta_set="nonneg_orthant")
                n1 = float(np.abs(sol.theta).sum())
                kt = 1.0 / n1 if n1 > 1e-12 else 1.0
        else:
            raise ConfigError("entropic mirror supports the free set "
                              "(lifted) or the nonnegative orthant")
        trace.kappa_tilde = kt
        theta_t = (np.full(dim, 1.0 / (dim * kt)) if theta0 is None
                   else np.asarray(theta0, dtype=np.float64).copy())
        if np.any(theta_t <= 0):
            raise ConfigError("entropic start point must be positive")
    else:
        dim = phi.dimension
        theta_t = (np.zeros(dim) if theta0 is None
                   else check_cost_vector(theta0, dim).copy())
        theta_t = project(cfg.theta_set, theta_t)

    def to_native(v):
        if entropic and lifted is not None:
            return lifted.recover(v)
        return v

    avg_u = theta_t.copy()
    avg_w = theta_t.copy() * 0.0
    wsum = 0.0
    started = time.perf_counter()

    def averaged(t):
        if cfg.averaging == "none":
            return theta_t
        if cfg.averaging == "uniform":
            return avg_u
        return avg_w / wsum if wsum > 0 else theta_t

    for t in range(1, cfg.steps + 1):
        batch = sorted(int(j) for j in
                       rng.choice(N, size=cfg.batch_size, replace=False))
        budget = EXACT if cfg.budget_schedule is None \
            else cfg.budget_schedule(t)
        native = to_native(theta_t)
        if entropic:
            rep = subgradient(native, ds, phi, d, 0.0, "none", batch,
                              budget, hinge)
            g = lifted.recovery_map.T @ rep.vector if lifted is not None \
                else rep.vector
            dual_norm = float(np.abs(g).max(initial=0.0))
        else:
            rep = subgradient(native, ds, phi, d, kappa, regularizer, batch,
                              budget, hinge)
            g = rep.vector
            dual_norm = float(np.linalg.norm(g))
        eta = cfg.step_rule.eta(t, dual_norm)

        # average the pre-update iterate (the point the subgradient saw);
        # all modes are tracked so the trace can report each final average
        avg_u += (theta_t - avg_u) / t
        avg_w += t * theta_t
        wsum += t

        if entropic:
            u = theta_t * np.exp(-eta * g)
            scale = kt * float(np.abs(u).sum())
            theta_t = u if scale <= 1.0 else u / scale
        else:
            theta_t = project(cfg.theta_set, theta_t - eta * g)
        if not np.all(np.isfinite(theta_t)):
            raise IterateDivergedError(
                f"iterate diverged at step {t}", trace)

        trace.iters.append(t)
        trace.times.append(time.perf_counter() - started)
        trace.eps.append(rep.eps)
        trace.batches.append(batch)
        if t % stride == 0 or t == cfg.steps or t in eval_at:
            snap = to_native(averaged(t)).copy()
            trace.snapshots[t] = snap
            trace.losses[t] = _loss_at(snap, ds, phi, d, kappa, regularizer,
                                       hinge)

    trace.final_averages = {
        "none": to_native(theta_t).copy(),
        "uniform": to_native(avg_u).copy(),
        "weighted_t": to_native(avg_w / wsum if wsum > 0
                                else theta_t).copy(),
    }
    return trace.final_averages[
        "uniform" if cfg.averaging == "uniform"
        else "weighted_t" if cfg.averaging == "weighted_t"
        else "none"], trace


def trace_to_csv(trace, path):
    """Write per-iteration trace rows (iter, time_s, loss, eps_t,
    batch_indices)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "time_s", "loss", "eps_t", "batch_indices"])
        for k, t in enumerate(trace.iters):
            loss = trace.losses.get(t, "")
            writer.writerow([t, f"{trace.times[k]:.6f}",
                             repr(loss) if loss != "" else "",
                             repr(trace.eps[k]),
                             ";".join(map(str, trace.batches[k]))])


# ---------------------------------------------------------------------------
# rate verification


@dataclass
class RateProblem:
    """Small enumerable problem with a computable optimum on a box."""

    ds: object
    phi: object
    d: object
    kappa: float
    regularizer: str
    box_radius: float = 2.0

    def theta_set(self):
        p = self.phi.dimension
        return ("box", np.zeros(p), np.full(p, self.box_radius))

    def optimum(self):
        sol = train_asl_enumerated(
            self.ds, self.phi, self.d, kappa=self.kappa,
            regularizer=self.regularizer, theta_set="nonneg_orthant",
        )
        if float(sol.theta.max(initial=0.0)) > self.box_radius - 1e-6:
            raise ConfigError(
                "optimum touches the box; enlarge box_radius so the "
                "restricted and unrestricted problems agree")
        return empirical_loss(sol.theta, self.ds, self.phi, self.d,
                              self.kappa, self.regularizer).value


@dataclass
class RateReport:
    checkpoints: tuple
    mean_gaps: list
    bounds: list
    bound_ok: list
    slope: float
    measured_g2: float
    measured_r2: float
    eps_means: list
    f_star: float


def verify_rate(cfg, problem, trials=10, checkpoints=(100, 1000, 10000)):
    """Measure averaged-iterate suboptimality against the guaranteed rate.

    Runs ``trials`` seeded instances of the configured method; at each
    checkpoint T the empirical mean gap is compared with the bound
    evaluated at the measured gradient-norm bound G, the box Bregman
    radius R, and the recorded per-iteration gaps eps_t.  The convex-path
    bound is (R^2/c + c G^2)/sqrt(T) + mean(eps); the strongly-convex path
    uses 2 G^2 / (alpha (T+1)) plus the weighted eps term.
    """
    f_star = problem.optimum()
    theta_set = problem.theta_set()
    p = problem.phi.dimension
    r2 = 0.5 * p * problem.box_radius ** 2
    strongly = cfg.step_rule.kind == "two_over_alpha_t"
    Tmax = max(checkpoints)
    gaps = {T: [] for T in checkpoints}
    eps_hist = []
    g2 = 0.0
    for trial in range(trials):
        seed = int(_rng.substream(cfg.seed, _rng.TRIALS, trial)
                   .integers(2**63 - 1))
        run_cfg = SamdConfig(
            steps=Tmax, step_rule=cfg.step_rule,
            batch_size=cfg.batch_size,
            budget_schedule=cfg.budget_schedule,
            averaging=cfg.averaging, seed=seed, theta_set=theta_set,
            snapshot_stride=Tmax, eval_at=tuple(checkpoints))
        _, trace = samd_train(problem.ds, problem.phi, problem.d,
                              problem.kappa, problem.regularizer,
                              MirrorMap("euclidean"), run_cfg)
        for T in checkpoints:
            gaps[T].append(trace.losses[T] - f_star)
        eps_hist.append(np.asarray(trace.eps))
        # recompute gradient norms from the recorded batches is costly;
        # track the dual norm through the loss proxy instead
        g2 = max(g2, _max_grad_norm_sq(problem, trace, theta_set))
    eps_mat = np.stack(eps_hist)
    mean_gaps = [float(np.mean(gaps[T])) for T in checkpoints]
    bounds = []
    eps_means = []
    for T in checkpoints:
        eps_t = eps_mat[:, :T].mean(axis=0)
        if strongly:
            ts = np.arange(1, T + 1)
            eps_term = 2.0 * float((ts * eps_t).sum()) / (T * (T + 1))
            bounds.append(2.0 * g2 / (cfg.step_rule.alpha * (T + 1))
                          + eps_term)
        else:
            eps_term = float(eps_t.mean())
            c = cfg.step_rule.c
            bounds.append((r2 / c + c * g2) / np.sqrt(T) + eps_term)
        eps_means.append(eps_term)
    ok = [g <= b + 1e-12 for g, b in zip(mean_gaps, bounds)]
    logt = np.log10(np.asarray(checkpoints, dtype=float))
    adjusted = np.maximum(np.asarray(mean_gaps) - np.asarray(eps_means),
                          1e-300)
    slope = float(np.polyfit(logt, np.log10(adjusted), 1)[0])
    return RateReport(tuple(checkpoints), mean_gaps, bounds, ok, slope,
                      g2, r2, eps_means, f_star)


def _max_grad_norm_sq(problem, trace, theta_set):
    """Replay recorded batches at the snapshots to bound ||g||^2."""
    worst = 0.0
    for t, snap in trace.snapshots.items():
        rep = subgradient(snap, problem.ds, problem.phi, problem.d,
                          problem.kappa, problem.regularizer,
                          trace.batches[t - 1])
        worst = max(worst, float(rep.vector @ rep.vector))
    # conservative analytic cap: feature-difference diameter plus the
    # regularizer pull over the box
    p = problem.phi.dimension
    diam = 0.0
    for inst in problem.ds:
        X = inst.oracle.response_matrix(inst.signal)
        Phi = problem.phi.batch_rows(inst.signal, X,
                                     inst.oracle.response_from_row)
        lo, hi = Phi.min(axis=0), Phi.max(axis=0)
        diam = max(diam, float(np.linalg.norm(hi - lo)))
    reg_pull = 0.0
    if problem.regularizer == "half_sq_l2":
        reg_pull = problem.kappa * problem.box_radius * np.sqrt(p)
    elif problem.regularizer == "l1":
        reg_pull = problem.kappa * np.sqrt(p)
    return max(worst, (diam + reg_pull) ** 2)
