"""Margin-augmented training losses and their subgradients.

The central quantity is the distance-augmented suboptimality of a cost
vector on one (signal, response) pair:

    max over feasible x of  <theta, phi(s, xhat) - phi(s, x)> + d(xhat, x)

With d = 0 this is the plain suboptimality loss; the hinge variant clips
negative values (which only arise for infeasible tagged responses).  All
evaluations run through the instance's oracle, so budgeted (approximate)
evaluation and its certified gap flow into the reports.
"""

from dataclasses import dataclass

import numpy as np

from .core import EXACT, MixedDistance, check_cost_vector, distance
from .errors import OracleKindError


@dataclass
class LossReport:
    """Loss value with the witnessing response and a certified gap."""

    value: float
    argmax_response: object
    eps_bound: float
    per_instance: list | None = None


@dataclass
class SubgradientReport:
    vector: np.ndarray
    eps: float
    sampled_indices: list


def _resolve_phi(inst, phi):
    if phi is not None:
        return phi
    fm = getattr(inst.oracle, "feature_map", None)
    if fm is None:
        raise OracleKindError("feature map required for this oracle kind")
    return fm


def _zero_distance(inst):
    if inst.oracle.kind == "mixed-integer":
        return MixedDistance(z_kind="zero", include_y=False)
    return distance("zero")


def _inner_max(theta, inst, phi, d, budget):
    oracle = inst.oracle
    if oracle.kind == "finite-enumerable":
        return oracle.inner_max(inst.signal, inst.response, theta, phi, d,
                                budget)
    if oracle.kind == "mixed-integer":
        return oracle.inner_max(inst.signal, inst.response, theta, d, budget)
    raise OracleKindError(f"unsupported oracle kind {oracle.kind!r}")


def asl(theta, inst, phi, d, budget=EXACT):
    """Augmented suboptimality of ``theta`` on one instance.

    Parameters
    ----------
    theta : 1D ndarray
        Cost vector.
    inst : IOInstance
    phi : FeatureMap or None
        None uses the oracle's own feature map (mixed-integer family).
    d : DistanceFn or MixedDistance
    budget : Budget, optional
        Non-exact budgets return an upper bound on the optimality gap in
        ``eps_bound``; exact budgets report 0.

    Returns
    -------
    LossReport
    """
    theta = check_cost_vector(theta)
    phi = _resolve_phi(inst, phi)
    x, val, eps = _inner_max(theta, inst, phi, d, budget)
    return LossReport(float(val), x, float(eps))


def suboptimality(theta, inst, phi, budget=EXACT):
    """Plain suboptimality loss: the augmented loss with d = 0."""
    return asl(theta, inst, phi, _zero_distance(inst), budget)


def asl_hinge(theta, inst, phi, d, budget=EXACT):
    """max(0, augmented suboptimality); clips infeasible-data negatives."""
    rep = asl(theta, inst, phi, d, budget)
    if rep.value < 0.0:
        return LossReport(0.0, rep.argmax_response, rep.eps_bound)
    return rep


def gpl(theta, inst, phi, d, argmin_tol=1e-9):
    """Distance from the response to the nearest theta-optimal response.

    Computed by exact enumeration; the argmin set uses an absolute value
    tolerance ``argmin_tol``.  Only defined for finite-enumerable oracles.
    """
    oracle = inst.oracle
    if oracle.kind != "finite-enumerable":
        raise OracleKindError(
            "predictability loss needs a finite-enumerable oracle")
    theta = check_cost_vector(theta)
    phi = _resolve_phi(inst, phi)
    X = oracle.response_matrix(inst.signal)
    Phi = phi.batch_rows(inst.signal, X, oracle.response_from_row)
    vals = Phi @ theta
    vmin = vals.min()
    best = np.inf
    xv = inst.response.as_vector()
    for k in np.nonzero(vals <= vmin + argmin_tol)[0]:
        best = min(best, d.eval(xv, X[k]))
    return float(best)


_REGULARIZERS = ("none", "half_sq_l2", "l1")


def regularizer_value(theta, tag):
    if tag == "none":
        return 0.0
    if tag == "half_sq_l2":
        return 0.5 * float(theta @ theta)
    if tag == "l1":
        return float(np.abs(theta).sum())
    raise ValueError(f"unknown regularizer {tag!r}")


def regularizer_grad(theta, tag):
    if tag == "none":
        return np.zeros_like(theta)
    if tag == "half_sq_l2":
        return theta.copy()
    if tag == "l1":
        # 0 at kinks: the zero element of the subdifferential
        return np.sign(theta)
    raise ValueError(f"unknown regularizer {tag!r}")


def empirical_loss(theta, ds, phi, d, kappa=0.0, regularizer="none",
                   budget=EXACT, hinge=False):
    """Regularized mean loss  kappa*R(theta) + (1/N) sum_i loss_i.

    ``hinge=True`` clips every per-instance loss at zero (the infeasible
    data path).  ``per_instance`` holds the unregularized per-instance
    values in dataset order; ``eps_bound`` is their mean certified gap.
    """
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    theta = check_cost_vector(theta)
    per = []
    epss = []
    for inst in ds:
        rep = asl(theta, inst, phi, d, budget)
        v = max(0.0, rep.value) if hinge else rep.value
        per.append(v)
        epss.append(rep.eps_bound)
    value = kappa * regularizer_value(theta, regularizer) \
        + float(np.mean(per))
    return LossReport(value, None, float(np.mean(epss)), per)


def subgradient(theta, ds, phi, d, kappa=0.0, regularizer="none",
                batch=None, budget=EXACT, hinge=False):
    """(Stochastic, approximate) subgradient of the regularized mean loss.

    Parameters
    ----------
    batch : list of dataset indices or None
        None means the full dataset.  A uniformly sampled batch gives an
        unbiased estimator of the full subgradient.

    Returns
    -------
    SubgradientReport
        ``vector`` is kappa * grad R + the batch mean of
        phi(s, xhat) - phi(s, x*); ``eps`` is the mean certified gap of
        the inner maximizations, which makes the vector an eps-subgradient.
    """
    theta = check_cost_vector(theta)
    indices = list(range(len(ds))) if batch is None else list(batch)
    if not indices:
        raise ValueError("batch must be non-empty")
    acc = np.zeros_like(theta)
    epss = []
    for j in indices:
        inst = ds[j]
        fm = _resolve_phi(inst, phi)
        rep = asl(theta, inst, phi, d, budget)
        if hinge and rep.value <= 0.0:
            epss.append(rep.eps_bound)
            continue
        phihat = fm.eval(inst.signal, inst.response)
        phistar = fm.eval(inst.signal, rep.argmax_response)
        acc += phihat - phistar
        epss.append(rep.eps_bound)
    vec = kappa * regularizer_grad(theta, regularizer) + acc / len(indices)
    return SubgradientReport(vec, float(np.mean(epss)), indices)
