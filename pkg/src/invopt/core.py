"""Domain types shared by every module.

Signals, responses, datasets, feature maps, distance functions and the
forward-problem oracles.  Two feasible-set families are built in:

* ``binary_lp``       - x in {0,1}^n with A x <= b (finite, enumerable)
* ``mixed_integer``   - (y, z) with A y + B z <= c, y continuous in a box,
  z from a finite enumerated set

All types are immutable after construction and safe to share across
workers; oracles cache enumerations internally but are otherwise
stateless.  Tie-breaking everywhere is "first optimum in lexicographic
enumeration order".
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, solvers
from .errors import (DimensionMismatchError, EnumerationCapError,
                     OracleKindError)

DEFAULT_ENUM_CAP_BITS = 24
_TOL = 1e-9


def check_cost_vector(theta, p=None):
    """Validate a cost vector: 1D, finite, optionally of length p."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 1:
        raise DimensionMismatchError("cost vector must be 1D")
    if not np.all(np.isfinite(theta)):
        raise DimensionMismatchError("cost vector has non-finite entries")
    if p is not None and theta.size != p:
        raise DimensionMismatchError(
            f"cost vector has length {theta.size}, expected {p}")
    return theta


@dataclass(frozen=True)
class Response:
    """Expert decision with a continuous block y and a discrete block z."""

    y: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        z = np.asarray(self.z, dtype=np.int64).reshape(-1)
        if y.size == 0 and z.size == 0:
            raise DimensionMismatchError(
                "response needs a continuous or a discrete part")
        y.setflags(write=False)
        z.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)

    @staticmethod
    def discrete(z):
        return Response(np.empty(0), z)

    def as_vector(self):
        if self.y.size == 0:
            return self.z.astype(np.float64)
        if self.z.size == 0:
            return self.y.copy()
        return np.concatenate([self.y, self.z.astype(np.float64)])

    def __eq__(self, other):
        return (isinstance(other, Response)
                and np.array_equal(self.y, other.y)
                and np.array_equal(self.z, other.z))

    def __hash__(self):
        return hash((self.y.tobytes(), self.z.tobytes()))


@dataclass(frozen=True)
class Signal:
    """Opaque record interpreted by the feasible-set family."""

    payload: dict

    def __getitem__(self, key):
        return self.payload[key]


def binary_signal(A, b):
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if A.ndim != 2 or b.shape != (A.shape[0],):
        raise DimensionMismatchError("binary signal needs A (t,n) and b (t,)")
    A.setflags(write=False)
    b.setflags(write=False)
    return Signal({"A": A, "b": b})


def mixed_signal(A, B, c, w=None):
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    t = A.shape[0]
    if B.shape[0] != t or c.shape != (t,):
        raise DimensionMismatchError("mixed signal blocks disagree on rows")
    for arr in (A, B, c):
        arr.setflags(write=False)
    return Signal({"A": A, "B": B, "c": c, "w": w})


@dataclass(frozen=True)
class Budget:
    """Work allowance for inner maximizations.

    ``exact=True`` forbids caps; a node cap limits the number of scanned
    responses (or discrete completions); a suboptimality target stops the
    scan once the certified gap falls below it.
    """

    max_nodes: int | None = None
    suboptimality_eps: float | None = None
    exact: bool = True

    def __post_init__(self):
        if self.exact and (self.max_nodes is not None
                           or self.suboptimality_eps is not None):
            raise ValueError("exact budget must not carry caps")
        if not self.exact and self.max_nodes is None \
                and self.suboptimality_eps is None:
            raise ValueError("non-exact budget needs at least one cap")


EXACT = Budget()


# ---------------------------------------------------------------------------
# feature maps


class FeatureMap:
    """Maps (signal, response) to a feature vector of fixed length."""

    def __init__(self, dimension, fn, coord_bounds=None, is_identity=False):
        self.dimension = int(dimension)
        self._fn = fn
        self._coord_bounds = coord_bounds
        self.is_identity = bool(is_identity)

    def eval(self, signal, response):
        out = np.asarray(self._fn(signal, response), dtype=np.float64)
        if out.shape != (self.dimension,):
            raise DimensionMismatchError(
                f"feature map returned length {out.shape}, "
                f"declared {self.dimension}")
        return out

    def batch_rows(self, signal, X, row_to_response):
        """Feature matrix for rows of X (response vectors)."""
        if self.is_identity:
            return X
        return np.stack([self.eval(signal, row_to_response(row))
                         for row in X])

    def coord_bounds(self, signal):
        """Per-coordinate (lo, hi) bounds of the feature vector, if known."""
        if self._coord_bounds is None:
            return None
        return self._coord_bounds(signal)


def identity_features(dimension):
    """phi(s, x) = x for responses living in [0,1]^dimension."""
    return FeatureMap(
        dimension,
        lambda s, x: x.as_vector(),
        coord_bounds=lambda s: (np.zeros(dimension), np.ones(dimension)),
        is_identity=True)


# ---------------------------------------------------------------------------
# distance functions

_KIND_CODE = {"zero": 0, "euclidean": 1, "l1": 2, "hamming": 3}


class DistanceFn:
    """Nonnegative distance between responses, d(x, x) = 0."""

    def __init__(self, kind, fn=None, upper=None):
        if kind not in ("zero", "euclidean", "l1", "hamming", "custom"):
            raise ValueError(f"unknown distance kind {kind!r}")
        self.kind = kind
        self.kind_code = _KIND_CODE.get(kind)
        self._fn = fn
        self._upper = upper

    def __call__(self, x1, x2):
        return self.eval(x1, x2)

    def eval(self, x1, x2):
        v1 = x1.as_vector() if isinstance(x1, Response) else np.asarray(x1)
        v2 = x2.as_vector() if isinstance(x2, Response) else np.asarray(x2)
        if self.kind == "custom":
            return float(self._fn(v1, v2))
        d = v1 - v2
        if self.kind == "zero":
            return 0.0
        if self.kind == "euclidean":
            return float(np.linalg.norm(d))
        if self.kind == "l1":
            return float(np.abs(d).sum())
        return float(np.any(d != 0))

    def batch(self, xhat_vec, X):
        if self.kind == "custom":
            return np.array([self._fn(xhat_vec, row) for row in X])
        return _kernels._np_distances(X, xhat_vec, self.kind_code)

    def upper_bound(self, xhat_vec, lo, hi):
        """Upper bound of d(xhat, x) over x in the box [lo, hi]."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "hamming":
            return 1.0
        reach = np.maximum(np.abs(xhat_vec - lo), np.abs(xhat_vec - hi))
        if self.kind == "euclidean":
            return float(np.linalg.norm(reach))
        if self.kind == "l1":
            return float(reach.sum())
        if self._upper is not None:
            return float(self._upper(xhat_vec, lo, hi))
        return None


def distance(kind):
    """Built-in distance by tag: zero | euclidean | l1 | hamming."""
    return DistanceFn(kind)


class MixedDistance:
    """Distance for mixed responses: optional linf on y plus d_z on z."""

    def __init__(self, z_kind="euclidean", include_y=False):
        self._z = DistanceFn(z_kind)
        self.include_y = bool(include_y)
        self.z_kind = z_kind

    def z_distance(self, z1, z2):
        return self._z.eval(np.asarray(z1, dtype=np.float64),
                            np.asarray(z2, dtype=np.float64))

    def eval(self, x1, x2):
        d = self.z_distance(x1.z, x2.z)
        if self.include_y:
            d += float(np.abs(x1.y - x2.y).max(initial=0.0))
        return d

    def __call__(self, x1, x2):
        return self.eval(x1, x2)


# ---------------------------------------------------------------------------
# oracles


class BinaryLpOracle:
    """Finite-enumerable oracle for x in {0,1}^n with A x <= b."""

    kind = "finite-enumerable"

    def __init__(self, cap_bits=DEFAULT_ENUM_CAP_BITS):
        self.cap_bits = int(cap_bits)
        self._cache = {}

    def _key(self, signal):
        return (signal["A"].tobytes(), signal["b"].tobytes(),
                signal["A"].shape)

    def response_matrix(self, signal):
        key = self._key(signal)
        X = self._cache.get(key)
        if X is None:
            A, b = signal["A"], signal["b"]
            n = A.shape[1]
            if n > self.cap_bits:
                raise EnumerationCapError(
                    f"binary enumeration over 2^{n} responses exceeds the "
                    f"cap 2^{self.cap_bits}; use the mixed-integer oracle "
                    "with a branched discrete block instead")
            X = _kernels.enumerate_binary_feasible(A, b, _TOL)
            X.setflags(write=False)
            self._cache[key] = X
        return X

    def enumerate(self, signal):
        return [Response.discrete(row.astype(np.int64))
                for row in self.response_matrix(signal)]

    def response_from_row(self, row):
        return Response.discrete(np.asarray(row).astype(np.int64))

    def response_box(self, signal):
        n = signal["A"].shape[1]
        return np.zeros(n), np.ones(n)

    def is_member(self, signal, response):
        if response.y.size != 0:
            return False
        z = response.z
        if z.shape != (signal["A"].shape[1],):
            return False
        if np.any((z != 0) & (z != 1)):
            return False
        return bool(np.all(signal["A"] @ z <= signal["b"] + _TOL))

    def forward_min(self, signal, theta):
        X = self.response_matrix(signal)
        idx = _kernels.scan_forward_min(X, np.asarray(theta, np.float64))
        return self.response_from_row(X[idx])

    def inner_max(self, signal, xhat, theta, phi, dist, budget):
        return solvers.argmax_finite(self, signal, xhat, theta, phi, dist,
                                     budget)


class MixedIntegerOracle:
    """Oracle for (y, z) with A y + B z <= c, z from a finite list.

    The hypothesis is linear:  <theta, phi(s,(y,z))> =
    <y, Q phi1(w,z)> + <q, phi2(w,z)>  with theta = (vec(Q), q) where
    vec stacks the columns of Q.  The constraint rows of A must bound y
    (the built-in family includes the box 0 <= y <= 1 as rows).
    """

    kind = "mixed-integer"

    def __init__(self, u, v, phi1, phi2, m, r, z_list=None,
                 y_box=(0.0, 1.0)):
        self.u, self.v = int(u), int(v)
        self.phi1, self.phi2 = phi1, phi2
        self.m, self.r = int(m), int(r)
        self.p = self.u * self.m + self.r
        if z_list is None:
            if self.v > 20:
                raise EnumerationCapError(
                    "default discrete block 2^v too large; pass z_list")
            z_list = [np.array([(i >> (self.v - 1 - j)) & 1
                                for j in range(self.v)], dtype=np.int64)
                      for i in range(1 << self.v)]
        self._z_list = [np.asarray(z, dtype=np.int64) for z in z_list]
        self.y_box = (float(y_box[0]), float(y_box[1]))
        self.feature_map = self._build_feature_map()

    def _build_feature_map(self):
        u, m, r = self.u, self.m, self.r

        def fn(signal, response):
            w = signal["w"]
            p1 = np.asarray(self.phi1(w, response.z), dtype=np.float64)
            p2 = np.asarray(self.phi2(w, response.z), dtype=np.float64)
            outer = np.outer(response.y, p1)
            return np.concatenate([outer.flatten(order="F"), p2])

        return FeatureMap(u * m + r, fn)

    def z_list(self, signal):
        return self._z_list

    def split_theta(self, theta):
        theta = check_cost_vector(theta, self.p)
        Q = theta[:self.u * self.m].reshape((self.u, self.m), order="F")
        q = theta[self.u * self.m:]
        return Q, q

    def constraint_blocks(self, signal):
        return signal["A"], signal["B"], signal["c"]

    def make_response(self, y, z):
        return Response(y, z)

    def is_member(self, signal, response):
        A, B, c = self.constraint_blocks(signal)
        y, z = response.y, response.z
        if y.shape != (self.u,) or z.shape != (self.v,):
            return False
        if not any(np.array_equal(z, zj) for zj in self._z_list):
            return False
        return bool(np.all(A @ y + B @ z <= c + _TOL))

    def value_upper_bound(self, signal, xhat, theta, dist):
        """Box bound on the augmented inner objective over all completions."""
        Q, q = self.split_theta(theta)
        w = signal["w"]
        phihat = self.feature_map.eval(signal, xhat)
        base = float(theta @ phihat)
        ylo, yhi = self.y_box
        best = -np.inf
        for z in self._z_list:
            p1 = np.asarray(self.phi1(w, z), dtype=np.float64)
            p2 = np.asarray(self.phi2(w, z), dtype=np.float64)
            coef = Q @ p1  # objective on y is -coef'y (+ tilt)
            rel = float(np.maximum(-coef * ylo, -coef * yhi).sum())
            dz = dist.z_distance(xhat.z, z)
            dy = 0.0
            if dist.include_y and self.u > 0:
                dy = float(np.maximum(np.abs(xhat.y - ylo),
                                      np.abs(xhat.y - yhi)).max())
            best = max(best, rel - float(q @ p2) + dz + dy)
        return base + best

    def forward_min(self, signal, theta):
        Q, q = self.split_theta(theta)
        A, B, c = self.constraint_blocks(signal)
        w = signal["w"]
        best_val = np.inf
        best = None
        for z in self._z_list:
            p1 = np.asarray(self.phi1(w, z), dtype=np.float64)
            p2 = np.asarray(self.phi2(w, z), dtype=np.float64)
            rhs = c - B @ z
            if self.u == 0:
                if np.all(rhs >= -_TOL):
                    val, y = float(q @ p2), np.empty(0)
                else:
                    continue
            else:
                lp = solvers.solve_lp(solvers.LinearProgramSpec(
                    Q @ p1, ineq_matrix=A, ineq_rhs=rhs))
                if lp.status != "optimal":
                    continue
                val, y = lp.objective + float(q @ p2), lp.x
            if val < best_val - 1e-12:
                best_val = val
                best = Response(y, z)
        if best is None:
            raise OracleKindError("signal has an empty feasible set")
        return best

    def inner_max(self, signal, xhat, theta, dist, budget):
        return solvers.argmax_mixed_integer(self, signal, xhat, theta, dist,
                                            budget)


# ---------------------------------------------------------------------------
# instances and datasets


@dataclass(frozen=True)
class IOInstance:
    """One (signal, expert response) pair with its feasible-set oracle.

    Responses outside the feasible set are tagged, not rejected; the
    hinge loss path consumes the tag.
    """

    signal: Signal
    response: Response
    oracle: object
    infeasible: bool = field(default=False)

    @staticmethod
    def create(signal, response, oracle):
        tag = not oracle.is_member(signal, response)
        return IOInstance(signal, response, oracle, tag)


@dataclass(frozen=True)
class IODataset:
    instances: tuple
    seed: int = 0

    def __post_init__(self):
        inst = tuple(self.instances)
        if not inst:
            raise DimensionMismatchError("dataset must be non-empty")
        kinds = {i.oracle.kind for i in inst}
        if len(kinds) > 1:
            raise DimensionMismatchError("mixed oracle kinds in one dataset")
        object.__setattr__(self, "instances", inst)

    def __len__(self):
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    def __getitem__(self, i):
        return self.instances[i]

    def subset(self, k):
        """First k instances (keeps the seed)."""
        return IODataset(self.instances[:k], self.seed)


def check_feasible(inst):
    """True iff the instance's response lies in its feasible set."""
    return inst.oracle.is_member(inst.signal, inst.response)


def evaluate_hypothesis(theta, phi, signal, response):
    """Value <theta, phi(signal, response)> of the linear hypothesis."""
    vec = phi.eval(signal, response)
    theta = check_cost_vector(theta, phi.dimension)
    return float(theta @ vec)


def enumerate_binary_lp(signal, cap_bits=DEFAULT_ENUM_CAP_BITS):
    """All feasible binary responses of a binary-LP signal, in
    lexicographic order."""
    return BinaryLpOracle(cap_bits=cap_bits).enumerate(signal)


# ---------------------------------------------------------------------------
# JSON Lines dataset interchange


def save_dataset(ds, path):
    """Write a dataset as JSON Lines, one instance per line."""
    with open(path, "w") as fh:
        for inst in ds:
            sig = inst.signal.payload
            if "b" in sig:
                rec = {"signal": {"A": sig["A"].tolist(),
                                  "b": sig["b"].tolist()},
                       "response": {"y": [], "z": inst.response.z.tolist()},
                       "family": "binary_lp"}
            else:
                rec = {"signal": {"A": sig["A"].tolist(),
                                  "B": sig["B"].tolist(),
                                  "c": sig["c"].tolist(),
                                  "w": sig["w"]},
                       "response": {"y": inst.response.y.tolist(),
                                    "z": inst.response.z.tolist()},
                       "family": "mixed_integer"}
            fh.write(json.dumps(rec) + "\n")


def load_dataset(path, seed=0, cap_bits=DEFAULT_ENUM_CAP_BITS):
    """Read a JSON Lines dataset written by :func:`save_dataset`.

    Binary-LP lines share one enumeration-caching oracle; mixed-integer
    lines get the built-in linear-hypothesis family (phi1 = [1],
    phi2 = z).
    """
    instances = []
    bin_oracle = BinaryLpOracle(cap_bits=cap_bits)
    mi_oracle = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            fam = rec.get("family")
            if fam == "binary_lp":
                sig = binary_signal(rec["signal"]["A"], rec["signal"]["b"])
                resp = Response.discrete(np.asarray(rec["response"]["z"]))
                instances.append(IOInstance.create(sig, resp, bin_oracle))
            elif fam == "mixed_integer":
                sig = mixed_signal(rec["signal"]["A"], rec["signal"]["B"],
                                   rec["signal"]["c"], rec["signal"].get("w"))
                y = np.asarray(rec["response"]["y"], dtype=np.float64)
                z = np.asarray(rec["response"]["z"], dtype=np.int64)
                if mi_oracle is None:
                    mi_oracle = linear_mi_oracle(u=y.size, v=z.size)
                instances.append(IOInstance.create(
                    sig, Response(y, z), mi_oracle))
            else:
                raise DimensionMismatchError(f"unknown family {fam!r}")
    return IODataset(tuple(instances), seed=seed)


def linear_mi_oracle(u, v, z_list=None):
    """Built-in mixed-integer family with cost <q_y, y> + <q_z, z>."""
    return MixedIntegerOracle(
        u=u, v=v,
        phi1=lambda w, z: np.ones(1),
        phi2=lambda w, z: np.asarray(z, dtype=np.float64),
        m=1, r=v, z_list=z_list)
