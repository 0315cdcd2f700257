"""Hot numeric kernels: binary enumeration and response scans.

Two interchangeable backends are provided.  The default is a set of
``numba.njit``-compiled loops; a pure-numpy vectorized path exists as a
fallback and for benchmarking.  Selection happens once at import time via
the environment variable ``INVOPT_BACKEND``:

* ``auto`` (default) - numba if importable, else numpy
* ``numba``          - force the compiled kernels
* ``numpy``          - force the vectorized fallback

Both backends implement identical tie-breaking (first optimum in scan
order), so results agree up to floating-point summation order.

Distance kind codes shared with :mod:`invopt.core`:
0 = zero, 1 = euclidean, 2 = l1, 3 = hamming (0-1).
"""

import os

import numpy as np

_CHUNK = 1 << 14


# ---------------------------------------------------------------------------
# numpy backend


def _np_enumerate_binary_feasible(A, b, tol=1e-9):
    t, n = A.shape
    total = 1 << n
    shifts = np.arange(n - 1, -1, -1, dtype=np.uint64)
    out = []
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total), dtype=np.uint64)
        X = ((idx[:, None] >> shifts) & 1).astype(np.float64)
        mask = (X @ A.T <= b + tol).all(axis=1)
        if mask.any():
            out.append(X[mask])
    if not out:
        return np.empty((0, n), dtype=np.float64)
    return np.concatenate(out, axis=0)


def _np_distances(X, xhat, dist_kind):
    diff = xhat[None, :] - X
    if dist_kind == 0:
        return np.zeros(X.shape[0])
    if dist_kind == 1:
        return np.sqrt(np.sum(diff * diff, axis=1))
    if dist_kind == 2:
        return np.sum(np.abs(diff), axis=1)
    if dist_kind == 3:
        return (np.abs(diff) > 0.0).any(axis=1).astype(np.float64)
    raise ValueError(f"unknown distance kind {dist_kind}")


def _np_scan_best_response(X, theta, xhat, dist_kind, node_cap,
                           upper_bound, stop_gap):
    K = X.shape[0]
    limit = K if node_cap <= 0 else min(node_cap, K)
    Xp = X[:limit]
    scores = (xhat[None, :] - Xp) @ theta + _np_distances(Xp, xhat, dist_kind)
    if stop_gap >= 0.0:
        run = np.maximum.accumulate(scores)
        hit = np.nonzero(upper_bound - run <= stop_gap)[0]
        if hit.size:
            limit = int(hit[0]) + 1
            scores = scores[:limit]
    best = int(np.argmax(scores))
    return best, float(scores[best]), limit


def _np_scan_forward_min(X, theta):
    return int(np.argmin(X @ theta))


# ---------------------------------------------------------------------------
# numba backend

def _build_numba():
    from numba import njit

    @njit(cache=True)
    def nb_enumerate(A, b, tol):
        t, n = A.shape
        total = 1 << n
        count = 0
        x = np.empty(n, dtype=np.float64)
        for i in range(total):
            for j in range(n):
                x[j] = (i >> (n - 1 - j)) & 1
            ok = True
            for r in range(t):
                acc = 0.0
                for j in range(n):
                    acc += A[r, j] * x[j]
                if acc > b[r] + tol:
                    ok = False
                    break
            if ok:
                count += 1
        out = np.empty((count, n), dtype=np.float64)
        k = 0
        for i in range(total):
            for j in range(n):
                x[j] = (i >> (n - 1 - j)) & 1
            ok = True
            for r in range(t):
                acc = 0.0
                for j in range(n):
                    acc += A[r, j] * x[j]
                if acc > b[r] + tol:
                    ok = False
                    break
            if ok:
                for j in range(n):
                    out[k, j] = x[j]
                k += 1
        return out

    @njit(cache=True)
    def nb_scan_best(X, theta, xhat, dist_kind, node_cap, upper_bound,
                     stop_gap):
        K, n = X.shape
        limit = K if node_cap <= 0 else min(node_cap, K)
        best_idx = 0
        best_val = -np.inf
        scanned = 0
        for k in range(limit):
            acc = 0.0
            for j in range(n):
                acc += theta[j] * (xhat[j] - X[k, j])
            if dist_kind == 1:
                d = 0.0
                for j in range(n):
                    e = xhat[j] - X[k, j]
                    d += e * e
                acc += np.sqrt(d)
            elif dist_kind == 2:
                d = 0.0
                for j in range(n):
                    d += abs(xhat[j] - X[k, j])
                acc += d
            elif dist_kind == 3:
                for j in range(n):
                    if xhat[j] != X[k, j]:
                        acc += 1.0
                        break
            if acc > best_val:
                best_val = acc
                best_idx = k
            scanned = k + 1
            if stop_gap >= 0.0 and upper_bound - best_val <= stop_gap:
                break
        return best_idx, best_val, scanned

    @njit(cache=True)
    def nb_forward_min(X, theta):
        K, n = X.shape
        best_idx = 0
        best_val = np.inf
        for k in range(K):
            acc = 0.0
            for j in range(n):
                acc += theta[j] * X[k, j]
            if acc < best_val:
                best_val = acc
                best_idx = k
        return best_idx

    def enumerate_binary_feasible(A, b, tol=1e-9):
        return nb_enumerate(np.ascontiguousarray(A, dtype=np.float64),
                            np.ascontiguousarray(b, dtype=np.float64),
                            float(tol))

    def scan_best_response(X, theta, xhat, dist_kind, node_cap, upper_bound,
                           stop_gap):
        idx, val, scanned = nb_scan_best(
            np.ascontiguousarray(X), np.ascontiguousarray(theta),
            np.ascontiguousarray(xhat), int(dist_kind), int(node_cap),
            float(upper_bound), float(stop_gap))
        return int(idx), float(val), int(scanned)

    def scan_forward_min(X, theta):
        return int(nb_forward_min(np.ascontiguousarray(X),
                                  np.ascontiguousarray(theta)))

    return enumerate_binary_feasible, scan_best_response, scan_forward_min


def _resolve_backend():
    choice = os.environ.get("INVOPT_BACKEND", "auto").strip().lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(
            f"INVOPT_BACKEND must be auto|numba|numpy, got {choice!r}")
    if choice == "numpy":
        return "numpy", None
    try:
        fns = _build_numba()
        return "numba", fns
    except ImportError:
        if choice == "numba":
            raise
        return "numpy", None


BACKEND, _nb_fns = _resolve_backend()

if BACKEND == "numba":
    enumerate_binary_feasible, scan_best_response, scan_forward_min = _nb_fns
else:
    enumerate_binary_feasible = _np_enumerate_binary_feasible
    scan_best_response = _np_scan_best_response
    scan_forward_min = _np_scan_forward_min


def backend():
    """Name of the active kernel backend ('numba' or 'numpy')."""
    return BACKEND
