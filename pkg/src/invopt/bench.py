"""Seeded experiment generators, metric computation and the CLI backend.

Four experiment families:

* ``consistent``     - binary-LP experts with noiseless responses
* ``inconsistent``   - binary-LP experts whose training responses follow a
  noise-perturbed cost (test responses stay noiseless)
* ``mixed_integer``  - box-continuous plus binary decisions
* ``samd_bench``     - first-order trainer comparison on binary-LP data

Every random draw comes from a purpose-keyed counter-based substream (see
:mod:`invopt._rng`), so identical configs and seeds reproduce datasets
byte-for-byte and adding a method never perturbs generation.  Metric rows
are written to ``metrics.csv`` with deterministic columns; wall times go
to a separate ``timings.csv`` because they can never be bitwise
reproducible.
"""

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from time import perf_counter

import numpy as np

from . import _rng
from .core import (BinaryLpOracle, IODataset, IOInstance, MixedDistance,
                   binary_signal, distance, identity_features,
                   linear_mi_oracle, mixed_signal)
from .errors import ConfigError
from .geometry import build_cone, circumcenter_desk, feasibility_program, \
    incenter
from .losses import empirical_loss
from .reformulate import (train_asl_enumerated, train_asl_mixed_integer_lp,
                          train_suboptimality_facets)
from .samd import MirrorMap, SamdConfig, StepRule, samd_train

_BINARY_METHODS = ("feasibility", "incenter", "circumcenter_desk",
                   "asl_enumerated", "sl_facets")
_MI_METHODS = ("asl_mi_lp_z", "asl_mi_lp_yz")
_SAMD_METHODS = ("samd_entropic", "samd_euclidean", "subgradient_method")


@dataclass(frozen=True)
class ExperimentConfig:
    """Experiment layout; defaults follow the reference setups."""

    experiment: str
    N: int = 100
    n: int = 6
    t: int = 4
    u: int = 6
    v: int = 6
    noise_std: float = 0.05
    seeds: tuple = tuple(range(10))
    train_sizes: tuple = (10, 50, 100)
    methods: tuple = ("feasibility", "incenter")
    out: str | None = None
    kappa: float = 0.001
    samd_steps: int = 2000
    samd_batch: int = 1
    samd_budget_nodes: int | None = None
    sm_steps: int = 300

    def __post_init__(self):
        if self.experiment not in ("consistent", "inconsistent",
                                   "mixed_integer", "samd_bench"):
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.N < 1 or not self.seeds:
            raise ConfigError("sizes must be positive and seeds non-empty")
        if any(k < 1 or k > self.N for k in self.train_sizes):
            raise ConfigError("train sizes must lie in [1, N]")


@dataclass
class MetricsRow:
    method: str
    seed: int
    train_size: int
    theta_error: float
    response_error: float
    cost_gap: float
    wall_time_s: float


def _normalized(v):
    nrm = np.linalg.norm(v)
    return v / nrm if nrm > 0 else v


# ---------------------------------------------------------------------------
# data generation


def _draw_binary_signals(cfg, seed, count, a_low, a_high, b_low, b_high,
                         require_ones_feasible, oracle):
    gen_a = _rng.substream(seed, _rng.MATRIX_A)
    gen_b = _rng.substream(seed, _rng.RHS)
    signals = []
    while len(signals) < count:
        A = gen_a.uniform(a_low, a_high, size=(cfg.t, cfg.n))
        b = gen_b.uniform(b_low, b_high, size=cfg.t)
        if require_ones_feasible:
            if np.any(A.sum(axis=1) > b):
                continue
        sig = binary_signal(A, b)
        if not require_ones_feasible \
                and oracle.response_matrix(sig).shape[0] == 0:
            continue
        signals.append(sig)
    return signals


def gen_consistent(cfg, seed):
    """Nonnegative expert costs, noiseless optimal responses.

    Constraint data is resampled until the all-ones response is feasible,
    so every instance admits at least one decision.
    """
    oracle = BinaryLpOracle()
    theta_true = _rng.substream(seed, _rng.THETA_TRUE).uniform(
        0.0, 1.0, cfg.n)
    signals = _draw_binary_signals(cfg, seed, 2 * cfg.N, -1.0, 0.0, -1.0,
                                   0.0, True, oracle)
    instances = [IOInstance.create(s, oracle.forward_min(s, theta_true),
                                   oracle) for s in signals]
    train = IODataset(tuple(instances[:cfg.N]), seed=seed)
    test = IODataset(tuple(instances[cfg.N:]), seed=seed)
    return train, test, theta_true


def gen_inconsistent(cfg, seed):
    """Signed expert costs; training responses follow a noisy cost."""
    oracle = BinaryLpOracle()
    theta_true = _rng.substream(seed, _rng.THETA_TRUE).uniform(
        -1.0, 1.0, cfg.n)
    noise = _rng.substream(seed, _rng.NOISE)
    signals = _draw_binary_signals(cfg, seed, 2 * cfg.N, -1.0, 1.0, -1.0,
                                   0.0, False, oracle)
    train_inst = []
    for s in signals[:cfg.N]:
        w = noise.normal(0.0, cfg.noise_std, cfg.n)
        train_inst.append(IOInstance.create(
            s, oracle.forward_min(s, theta_true + w), oracle))
    test_inst = [IOInstance.create(s, oracle.forward_min(s, theta_true),
                                   oracle) for s in signals[cfg.N:]]
    return (IODataset(tuple(train_inst), seed=seed),
            IODataset(tuple(test_inst), seed=seed), theta_true)


def gen_mixed_integer(cfg, seed):
    """Box-continuous plus binary decisions; exact expert responses."""
    oracle = linear_mi_oracle(u=cfg.u, v=cfg.v)
    theta_true = _rng.substream(seed, _rng.THETA_TRUE).uniform(
        0.0, 1.0, cfg.u + cfg.v)
    gen_a = _rng.substream(seed, _rng.MATRIX_A)
    gen_bm = _rng.substream(seed, _rng.MATRIX_B)
    gen_c = _rng.substream(seed, _rng.RHS)
    instances = []
    while len(instances) < 2 * cfg.N:
        A = gen_a.uniform(-1.0, 0.0, size=(cfg.t, cfg.u))
        B = gen_bm.uniform(-1.0, 0.0, size=(cfg.t, cfg.v))
        c = gen_c.uniform(-2.0, 0.0, size=cfg.t)
        if np.any(A.sum(axis=1) + B.sum(axis=1) > c):
            continue
        A_aug = np.vstack([A, np.eye(cfg.u), -np.eye(cfg.u)])
        B_aug = np.vstack([B, np.zeros((2 * cfg.u, cfg.v))])
        c_aug = np.concatenate([c, np.ones(cfg.u), np.zeros(cfg.u)])
        sig = mixed_signal(A_aug, B_aug, c_aug)
        instances.append(IOInstance.create(
            sig, oracle.forward_min(sig, theta_true), oracle))
    return (IODataset(tuple(instances[:cfg.N]), seed=seed),
            IODataset(tuple(instances[cfg.N:]), seed=seed), theta_true)


def gen_samd_bench(cfg, seed):
    """Binary-LP data with wider right-hand sides for the trainer race."""
    oracle = BinaryLpOracle()
    theta_true = _rng.substream(seed, _rng.THETA_TRUE).uniform(
        0.0, 1.0, cfg.n)
    signals = _draw_binary_signals(cfg, seed, 2 * cfg.N, -1.0, 0.0,
                                   -cfg.n / 3.0, 0.0, True, oracle)
    instances = [IOInstance.create(s, oracle.forward_min(s, theta_true),
                                   oracle) for s in signals]
    return (IODataset(tuple(instances[:cfg.N]), seed=seed),
            IODataset(tuple(instances[cfg.N:]), seed=seed), theta_true)


_GENERATORS = {
    "consistent": gen_consistent,
    "inconsistent": gen_inconsistent,
    "mixed_integer": gen_mixed_integer,
    "samd_bench": gen_samd_bench,
}


def generate(cfg, seed):
    return _GENERATORS[cfg.experiment](cfg, seed)


# ---------------------------------------------------------------------------
# training methods


def _binary_phi(ds):
    return identity_features(ds[0].signal["A"].shape[1])


def _train_feasibility(train, cfg):
    cone = build_cone(train, _binary_phi(train))
    return feasibility_program(cone, "nonneg_orthant")


def _train_incenter(train, cfg):
    phi = _binary_phi(train)
    d = distance("euclidean")
    cone = build_cone(train, phi)
    offsets = np.array([d.eval(train[i].response, resp)
                        for i, resp in cone.provenance])
    return incenter(cone, theta_set="nonneg_orthant", d_row=offsets).theta


def _train_circumcenter(train, cfg):
    cone = build_cone(train, _binary_phi(train))
    return circumcenter_desk(cone, max_dim=8)


def _train_asl_enumerated(train, cfg):
    phi = _binary_phi(train)
    return train_asl_enumerated(train, phi, distance("euclidean"),
                                kappa=cfg.kappa,
                                regularizer="half_sq_l2").theta


def _train_sl_facets(train, cfg):
    return train_suboptimality_facets(train, _binary_phi(train)).theta


def _train_mi(train, cfg, penalize_y):
    return train_asl_mixed_integer_lp(
        train, d_z="euclidean", kappa=0.0, regularizer="none",
        theta_set="nonneg_orthant", penalize_y=penalize_y).theta


_SAMD_SHARED = dict(kappa=0.01, regularizer="l1", d_kind="l1")


def _samd_run(train, cfg, seed, entropic, stochastic, budgeted,
              steps=None):
    phi = _binary_phi(train)
    d = distance(_SAMD_SHARED["d_kind"])
    kappa = _SAMD_SHARED["kappa"]
    schedule = None
    if budgeted and cfg.samd_budget_nodes:
        from .core import Budget
        cap = int(cfg.samd_budget_nodes)
        schedule = (lambda t: Budget(max_nodes=cap, exact=False))
    run_cfg = SamdConfig(
        steps=steps or cfg.samd_steps,
        step_rule=StepRule("norm_adaptive"),
        batch_size=(cfg.samd_batch if stochastic else len(train)),
        budget_schedule=schedule,
        averaging="uniform", seed=seed, theta_set="nonneg_orthant",
        snapshot_stride=max(1, (steps or cfg.samd_steps) // 50))
    mirror = MirrorMap("entropic_simplex" if entropic else "euclidean")
    theta, trace = samd_train(train, phi, d, kappa,
                              _SAMD_SHARED["regularizer"], mirror, run_cfg)
    return theta, trace


def _train_samd_entropic(train, cfg, seed):
    return _samd_run(train, cfg, seed, True, True, True)[0]


def _train_samd_euclidean(train, cfg, seed):
    return _samd_run(train, cfg, seed, False, True, True)[0]


def _train_subgradient(train, cfg, seed):
    return _samd_run(train, cfg, seed, False, False, False,
                     steps=cfg.sm_steps)[0]


def train_method(method, train, cfg, seed=0):
    if method == "feasibility":
        return _train_feasibility(train, cfg)
    if method == "incenter":
        return _train_incenter(train, cfg)
    if method == "circumcenter_desk":
        return _train_circumcenter(train, cfg)
    if method == "asl_enumerated":
        return _train_asl_enumerated(train, cfg)
    if method == "sl_facets":
        return _train_sl_facets(train, cfg)
    if method == "asl_mi_lp_z":
        return _train_mi(train, cfg, penalize_y=False)
    if method == "asl_mi_lp_yz":
        return _train_mi(train, cfg, penalize_y=True)
    if method == "samd_entropic":
        return _train_samd_entropic(train, cfg, seed)
    if method == "samd_euclidean":
        return _train_samd_euclidean(train, cfg, seed)
    if method == "subgradient_method":
        return _train_subgradient(train, cfg, seed)
    raise ConfigError(f"unknown method {method!r}")


def _check_methods(cfg):
    ok = {
        "consistent": _BINARY_METHODS,
        "inconsistent": _BINARY_METHODS,
        "samd_bench": _BINARY_METHODS + _SAMD_METHODS,
        "mixed_integer": _MI_METHODS,
    }[cfg.experiment]
    for m in cfg.methods:
        if m not in ok:
            raise ConfigError(
                f"method {m!r} does not apply to {cfg.experiment!r} "
                f"(allowed: {', '.join(ok)})")


# ---------------------------------------------------------------------------
# metrics


def response_metrics(theta, test, theta_true):
    """(response_error, cost_gap) of theta on a noiseless test set."""
    first = test[0]
    oracle = first.oracle
    if oracle.kind == "mixed-integer":
        fm = oracle.feature_map
        dist_eval = MixedDistance(z_kind="euclidean")
        dist_fn = (lambda a, b: dist_eval.eval(a, b)
                   + float(np.linalg.norm(a.y - b.y)))
    else:
        fm = identity_features(first.signal["A"].shape[1])
        d2 = distance("euclidean")
        dist_fn = d2.eval
    err = 0.0
    cost_io = 0.0
    cost_true = 0.0
    for inst in test:
        x_io = inst.oracle.forward_min(inst.signal, theta)
        err += dist_fn(x_io, inst.response)
        cost_io += float(theta_true @ fm.eval(inst.signal, x_io))
        cost_true += float(theta_true @ fm.eval(inst.signal, inst.response))
    gap = (cost_io - cost_true) / max(abs(cost_true), 1e-12)
    return err / len(test), gap


def _run_cell(cfg, seed, train, test, theta_true, method, size):
    t0 = perf_counter()
    theta = train_method(method, train.subset(size), cfg, seed=seed)
    wall = perf_counter() - t0
    th_err = float(np.linalg.norm(_normalized(theta_true)
                                  - _normalized(theta)))
    resp_err, gap = response_metrics(theta, test, theta_true)
    return MetricsRow(method, seed, size, th_err, resp_err, gap, wall)


def run_experiment(cfg):
    """All (seed x train_size x method) metric rows, plus aggregates.

    Cells fan out over a thread pool capped by ``INVOPT_THREADS``; the
    reduction order is fixed, so the emitted ``metrics.csv`` is identical
    across runs with the same config and seeds.
    """
    _check_methods(cfg)
    cells = []
    for seed in cfg.seeds:
        train, test, theta_true = generate(cfg, seed)
        for size in cfg.train_sizes:
            for method in cfg.methods:
                cells.append((seed, train, test, theta_true, method, size))
    workers = int(os.environ.get("INVOPT_THREADS", "0")) or \
        min(4, os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(
            lambda c: _run_cell(cfg, c[0], c[1], c[2], c[3], c[4], c[5]),
            cells))
    if cfg.out:
        write_metrics(rows, cfg.out)
    return rows


def aggregate(rows):
    """(method, train_size) -> mean / 5th / 95th percentile of each metric."""
    table = {}
    for row in rows:
        table.setdefault((row.method, row.train_size), []).append(row)
    out = []
    for (method, size), group in sorted(table.items()):
        rec = {"method": method, "train_size": size}
        for metric in ("theta_error", "response_error", "cost_gap"):
            vals = np.array([getattr(g, metric) for g in group])
            rec[f"{metric}_mean"] = float(vals.mean())
            rec[f"{metric}_p5"] = float(np.percentile(vals, 5))
            rec[f"{metric}_p95"] = float(np.percentile(vals, 95))
        out.append(rec)
    return out


def write_metrics(rows, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "seed", "train_size", "theta_error",
                         "response_error", "cost_gap"])
        for r in rows:
            writer.writerow([r.method, r.seed, r.train_size,
                             repr(r.theta_error), repr(r.response_error),
                             repr(r.cost_gap)])
    with open(out / "timings.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "seed", "train_size", "wall_time_s"])
        for r in rows:
            writer.writerow([r.method, r.seed, r.train_size,
                             f"{r.wall_time_s:.6f}"])
    with open(out / "aggregates.csv", "w", newline="") as fh:
        aggs = aggregate(rows)
        if aggs:
            writer = csv.DictWriter(fh, fieldnames=list(aggs[0]))
            writer.writeheader()
            writer.writerows(aggs)
    return out / "metrics.csv"


# ---------------------------------------------------------------------------
# first-order trainer race


@dataclass
class TrajectoryPoint:
    seed: int
    method: str
    iteration: int
    time_s: float
    loss_gap: float


def samd_race(cfg, seed):
    """Loss-gap trajectories of the stochastic-approximate entropic
    trainer versus the plain full-batch subgradient method."""
    train, _, _ = generate(cfg, seed)
    phi = _binary_phi(train)
    d = distance(_SAMD_SHARED["d_kind"])
    kappa = _SAMD_SHARED["kappa"]
    fstar_sol = train_asl_enumerated(train, phi, d, kappa=kappa,
                                     regularizer="l1",
                                     theta_set="nonneg_orthant")
    f_star = empirical_loss(fstar_sol.theta, train, phi, d, kappa,
                            "l1").value
    points = []
    for method, entropic, stochastic, budgeted, steps in (
            ("subgradient_method", False, False, False, cfg.sm_steps),
            ("samd_entropic", True, True, True, cfg.samd_steps)):
        _, trace = _samd_run(train, cfg, seed, entropic, stochastic,
                             budgeted, steps=steps)
        for t in sorted(trace.losses):
            points.append(TrajectoryPoint(
                seed, method, t, trace.times[t - 1],
                trace.losses[t] - f_star))
    return points


def write_trajectories(points, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "trajectories.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "method", "iteration", "time_s",
                         "loss_gap"])
        for p in points:
            writer.writerow([p.seed, p.method, p.iteration,
                             f"{p.time_s:.6f}", repr(p.loss_gap)])
    return out / "trajectories.csv"


def time_to_gap(points, method, target):
    """Earliest recorded wall time at which a method's gap <= target."""
    best = None
    for p in points:
        if p.method == method and p.loss_gap <= target:
            if best is None or p.time_s < best:
                best = p.time_s
    return best
