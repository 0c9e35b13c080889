"""Hot numeric kernels with a numba and a pure-numpy implementation.

The backend is picked once at import time.  Set ``CSL_REPAIR_BACKEND=numpy``
to force the fallback path (numba is also skipped automatically when it
cannot be imported).  Both implementations are always importable through
:func:`get_backend` so they can be benchmarked and cross-checked side by side.

Sparse matrices are passed around as raw CSR triples ``(indptr, indices,
data)`` so that the numba kernels never touch Python objects.
"""

import os
from types import SimpleNamespace

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAS_NUMBA = False

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_TWO53_INV = 1.0 / 9007199254740992.0

# status codes used by the path simulator
RUNNING = 0
SUCCESS = 1
FAILURE = 2


# --------------------------------------------------------------------------
# pure numpy implementations
# --------------------------------------------------------------------------

def _mix64_np(z):
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


def path_keys_np(seed, n_paths):
    """Per-path stream keys derived from ``(seed, path_index)`` only."""
    idx = np.arange(n_paths, dtype=np.uint64) + _ONE
    return _mix64_np(np.uint64(seed) ^ _mix64_np(idx))


def uniforms_np(keys, counter):
    """One uniform in [0, 1) per key for draw number ``counter``."""
    step = np.uint64(((counter + 1) * int(_GOLDEN)) & 0xFFFFFFFFFFFFFFFF)
    z = _mix64_np(keys + step)
    return (z >> _S11).astype(np.float64) * _TWO53_INV


def csr_matvec_np(indptr, indices, data, x):
    n = indptr.shape[0] - 1
    rows = np.repeat(np.arange(n), np.diff(indptr))
    return np.bincount(rows, weights=data * x[indices], minlength=n)


def poisson_sum_np(indptr, indices, data, x0, weights, left):
    """Return ``sum_k weights[k - left] * P^k x0`` for the retained range."""
    n = indptr.shape[0] - 1
    rows = np.repeat(np.arange(n), np.diff(indptr))
    v = x0.astype(np.float64).copy()
    acc = np.zeros(n)
    right = left + weights.shape[0] - 1
    for k in range(right + 1):
        if k > 0:
            v = np.bincount(rows, weights=data * v[indices], minlength=n)
        if k >= left:
            acc += weights[k - left] * v
    return acc


def gauss_seidel_np(indptr, indices, data, b, x, tol, max_iter):
    """Solve ``x = A x + b`` in place; returns (x, residual, sweeps)."""
    n = b.shape[0]
    res = np.inf
    it = 0
    while it < max_iter:
        it += 1
        for s in range(n):
            lo, hi = indptr[s], indptr[s + 1]
            x[s] = b[s] + np.dot(data[lo:hi], x[indices[lo:hi]])
        res = np.max(np.abs(csr_matvec_np(indptr, indices, data, x) + b - x)) if n else 0.0
        if res <= tol:
            break
    return x, res, it


def simulate_paths_np(indptr, indices, cum_end, row_base, exit_rates, status,
                      start, t_max, n_paths, seed, max_jumps):
    """Vectorised lock-step simulation of ``n_paths`` independent paths.

    Returns ``(n_success, n_capped)``.
    """
    keys = path_keys_np(seed, n_paths)
    state = np.full(n_paths, start, dtype=np.int64)
    clock = np.zeros(n_paths)
    active = np.ones(n_paths, dtype=bool)
    n_success = 0
    jump = 0
    while True:
        idx = np.flatnonzero(active)
        if idx.size == 0:
            return n_success, 0
        st = status[state[idx]]
        n_success += int(np.count_nonzero(st == SUCCESS))
        active[idx[st != RUNNING]] = False
        idx = idx[st == RUNNING]
        if idx.size == 0:
            return n_success, 0
        if jump >= max_jumps:
            return n_success, int(idx.size)
        s = state[idx]
        e = exit_rates[s]
        u1 = uniforms_np(keys[idx], 2 * jump)
        clock[idx] += -np.log1p(-u1) / e
        late = clock[idx] > t_max
        active[idx[late]] = False
        idx = idx[~late]
        s = s[~late]
        u2 = uniforms_np(keys[idx], 2 * jump + 1)
        target = row_base[s] + u2 * (cum_end[indptr[s + 1] - 1] - row_base[s])
        pos = np.searchsorted(cum_end, target, side="right")
        pos = np.minimum(np.maximum(pos, indptr[s]), indptr[s + 1] - 1)
        state[idx] = indices[pos]
        jump += 1


# --------------------------------------------------------------------------
# numba implementations
# --------------------------------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True)
    def _mix64_nb(z):
        z = (z ^ (z >> _S30)) * _MIX1
        z = (z ^ (z >> _S27)) * _MIX2
        return z ^ (z >> _S31)

    @njit(cache=True)
    def _uniform_nb(key, counter):
        z = _mix64_nb(key + np.uint64(counter + 1) * _GOLDEN)
        return np.float64(z >> _S11) * _TWO53_INV

    @njit(cache=True)
    def csr_matvec_nb(indptr, indices, data, x):
        n = indptr.shape[0] - 1
        out = np.zeros(n)
        for s in range(n):
            acc = 0.0
            for p in range(indptr[s], indptr[s + 1]):
                acc += data[p] * x[indices[p]]
            out[s] = acc
        return out

    @njit(cache=True)
    def poisson_sum_nb(indptr, indices, data, x0, weights, left):
        n = indptr.shape[0] - 1
        v = x0.astype(np.float64).copy()
        w = np.empty(n)
        acc = np.zeros(n)
        right = left + weights.shape[0] - 1
        for k in range(right + 1):
            if k > 0:
                for s in range(n):
                    a = 0.0
                    for p in range(indptr[s], indptr[s + 1]):
                        a += data[p] * v[indices[p]]
                    w[s] = a
                v, w = w, v
            if k >= left:
                c = weights[k - left]
                for s in range(n):
                    acc[s] += c * v[s]
        return acc

    @njit(cache=True)
    def gauss_seidel_nb(indptr, indices, data, b, x, tol, max_iter):
        n = b.shape[0]
        res = np.inf
        it = 0
        while it < max_iter:
            it += 1
            for s in range(n):
                a = b[s]
                for p in range(indptr[s], indptr[s + 1]):
                    a += data[p] * x[indices[p]]
                x[s] = a
            res = 0.0
            for s in range(n):
                a = b[s] - x[s]
                for p in range(indptr[s], indptr[s + 1]):
                    a += data[p] * x[indices[p]]
                if abs(a) > res:
                    res = abs(a)
            if res <= tol:
                break
        return x, res, it

    @njit(cache=True)
    def simulate_paths_nb(indptr, indices, cum_end, row_base, exit_rates, status,
                          start, t_max, n_paths, seed, max_jumps):
        n_success = 0
        n_capped = 0
        seed64 = np.uint64(seed)
        for path in range(n_paths):
            key = _mix64_nb(seed64 ^ _mix64_nb(np.uint64(path) + _ONE))
            s = start
            clock = 0.0
            jump = 0
            while True:
                st = status[s]
                if st == SUCCESS:
                    n_success += 1
                    break
                if st == FAILURE:
                    break
                if jump >= max_jumps:
                    n_capped += 1
                    break
                u1 = _uniform_nb(key, 2 * jump)
                clock += -np.log1p(-u1) / exit_rates[s]
                if clock > t_max:
                    break
                u2 = _uniform_nb(key, 2 * jump + 1)
                lo = indptr[s]
                hi = indptr[s + 1] - 1
                target = row_base[s] + u2 * (cum_end[hi] - row_base[s])
                pos = np.searchsorted(cum_end, target, side="right")
                if pos < lo:
                    pos = lo
                if pos > hi:
                    pos = hi
                s = indices[pos]
                jump += 1
        return n_success, n_capped


def _numpy_backend():
    return SimpleNamespace(
        name="numpy",
        csr_matvec=csr_matvec_np,
        poisson_sum=poisson_sum_np,
        gauss_seidel=gauss_seidel_np,
        simulate_paths=simulate_paths_np,
    )


def _numba_backend():
    return SimpleNamespace(
        name="numba",
        csr_matvec=csr_matvec_nb,
        poisson_sum=poisson_sum_nb,
        gauss_seidel=gauss_seidel_nb,
        simulate_paths=simulate_paths_nb,
    )


def available_backends():
    return ("numba", "numpy") if HAS_NUMBA else ("numpy",)


def get_backend(name=None):
    """Return the kernel namespace for ``name`` (default: the active one)."""
    if name is None:
        return ACTIVE
    if name == "numba":
        if not HAS_NUMBA:
            raise RuntimeError("numba backend requested but numba is not importable")
        return _numba_backend()
    if name == "numpy":
        return _numpy_backend()
    raise ValueError(f"unknown backend {name!r}")


def _select():
    wanted = os.environ.get("CSL_REPAIR_BACKEND", "").strip().lower()
    if wanted == "numpy" or not HAS_NUMBA:
        return _numpy_backend()
    if wanted not in ("", "numba"):
        raise ValueError(f"CSL_REPAIR_BACKEND must be 'numba' or 'numpy', got {wanted!r}")
    return _numba_backend()


ACTIVE = _select()
