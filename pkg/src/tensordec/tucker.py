"""Tucker decomposition by higher-order orthogonal iteration (HOOI)."""

from __future__ import annotations

import logging
import time

import numpy as np

from .models import FitTrace, TuckerModel
from .tensor import as_tensor, check_finite, frobenius_norm, mode_product, unfold

log = logging.getLogger(__name__)


def _check_ranks(ranks, dims) -> tuple:
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != 3:
        raise ValueError(f"need three Tucker ranks, got {ranks}")
    for n, (r, d) in enumerate(zip(ranks, dims)):
        if r < 1 or r > d:
            raise ValueError(f"rank {r} for mode {n + 1} must lie in [1, {d}]")
    return ranks


def _fix_signs(u: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of every column made nonnegative
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs


def leading_left_singular_vectors(m: np.ndarray, r: int) -> np.ndarray:
    # a full basis is needed when the unfolding has fewer columns than r
    u, _, _ = np.linalg.svd(m, full_matrices=m.shape[1] < r)
    return _fix_signs(u[:, :r])


def hosvd_init(t, ranks) -> list:
    """Leading left singular vectors of each unfolding."""
    t = as_tensor(t)
    ranks = _check_ranks(ranks, t.shape)
    return [leading_left_singular_vectors(unfold(t, n + 1), ranks[n]) for n in range(3)]


def random_orthonormal_init(dims, ranks, seed=None) -> list:
    rng = np.random.default_rng(seed)
    out = []
    for d, r in zip(dims, ranks):
        q, _ = np.linalg.qr(rng.standard_normal((d, r)))
        out.append(q)
    return out


def project(t: np.ndarray, factors, skip: int | None = None) -> np.ndarray:
    """Multiply ``t`` by the transposed factors on every mode except ``skip``."""
    w = t
    for n, u in enumerate(factors):
        if n != skip:
            w = mode_product(w, u.T, n + 1)
    return w


def tucker_reconstruct(model: TuckerModel) -> np.ndarray:
    out = model.core
    for n, u in enumerate(model.factors):
        out = mode_product(out, u, n + 1)
    return out


def hooi(t, ranks, max_iters: int = 200, tol: float = 1e-8, init: str = "hosvd",
         seed=None, callback=None):
    """Tucker-(R1, R2, R3) approximation by higher-order orthogonal iteration.

    Each iteration updates the three factors in turn from the SVD of the
    tensor projected onto the other two factors, which monotonically
    increases the core norm.  Iteration stops when the change of the core
    norm, relative to ``||t||_F``, falls below ``tol``.

    ``callback(iteration, factors, core_norm)`` is invoked after every
    iteration if given.
    """
    t = as_tensor(t)
    check_finite(t)
    ranks = _check_ranks(ranks, t.shape)
    if init == "hosvd":
        factors = hosvd_init(t, ranks)
    elif init == "random":
        factors = random_orthonormal_init(t.shape, ranks, seed)
    else:
        raise ValueError(f"init must be 'hosvd' or 'random', got {init!r}")

    tnorm = frobenius_norm(t)
    trace = FitTrace()
    prev = None
    for it in range(max_iters):
        tic = time.perf_counter()
        for n in range(3):
            w = project(t, factors, skip=n)
            factors[n] = leading_left_singular_vectors(unfold(w, n + 1), ranks[n])
        core = mode_product(w, factors[2].T, 3)
        gnorm = frobenius_norm(core)
        recon = tucker_reconstruct(TuckerModel(core, tuple(factors)))
        err = frobenius_norm(t - recon) / tnorm if tnorm > 0 else 0.0
        trace.record(err, time.perf_counter() - tic, objective=gnorm)
        if callback is not None:
            callback(it, [f.copy() for f in factors], gnorm)
        if prev is not None and abs(gnorm - prev) <= tol * max(tnorm, np.finfo(float).tiny):
            trace.converged = True
            break
        prev = gnorm
    core = project(t, factors)
    log.info("hooi ranks=%s iters=%d rel_err=%.3e", ranks, trace.iterations, trace.relative_errors[-1])
    return TuckerModel(core, tuple(factors)), trace
