"""CP decomposition by alternating least squares."""

from __future__ import annotations

import logging
import time

import numpy as np

from .models import CPModel, FitTrace
from .tensor import (
    ShapeError,
    as_tensor,
    check_finite,
    check_rank,
    fold,
    frobenius_norm,
    khatri_rao,
    lstsq_gram,
    unfold,
)

log = logging.getLogger(__name__)


def cp_reconstruct(model: CPModel, dims=None) -> np.ndarray:
    """Full tensor of a CP model, ``fold(A diag(w) (C kr B)^T, 1)``."""
    A, B, C = model.factors
    if dims is not None and tuple(dims) != model.dims:
        raise ShapeError(f"model dims {model.dims} do not match target {tuple(dims)}")
    x1 = (A * model.weights) @ khatri_rao(C, B).T
    return fold(x1, 1, model.dims)


def relative_error(t: np.ndarray, model: CPModel) -> float:
    """``||t - model||_F / ||t||_F`` with 0/0 taken as 0."""
    t = as_tensor(t)
    if model.dims != t.shape:
        raise ShapeError(f"model dims {model.dims} do not match tensor {t.shape}")
    diff = frobenius_norm(t - cp_reconstruct(model))
    norm = frobenius_norm(t)
    if norm == 0.0:
        return 0.0 if diff == 0.0 else float("inf")
    return diff / norm


def unfolded_error(x1: np.ndarray, model: CPModel, tnorm: float) -> float:
    """Relative error from a C-contiguous mode-1 unfolding; avoids refolding."""
    A, B, C = model.factors
    r = (A * model.weights) @ khatri_rao(C, B).T
    r -= x1
    diff = float(np.sqrt(np.vdot(r, r)))
    if tnorm == 0.0:
        return 0.0 if diff == 0.0 else float("inf")
    return diff / tnorm


def unfoldings(t: np.ndarray) -> tuple:
    return tuple(np.ascontiguousarray(unfold(t, m)) for m in (1, 2, 3))


def random_init(dims, rank: int, seed=None) -> CPModel:
    """Factors drawn i.i.d. uniform(0, 1), unit weights."""
    rng = np.random.default_rng(seed)
    factors = tuple(rng.uniform(0.0, 1.0, size=(d, rank)) for d in dims)
    return CPModel(np.ones(rank), factors)


def _normalize_columns(f: np.ndarray):
    norms = np.linalg.norm(f, axis=0)
    nz = norms > 0
    f = f.copy()
    f[:, nz] /= norms[nz]
    return f, np.where(nz, norms, 0.0)


def als_sweep(unfoldings, model: CPModel) -> CPModel:
    """One sweep updating A, B, C in turn, normalizing each into the weights."""
    x1, x2, x3 = unfoldings
    A, B, C = model.factors
    lam = model.weights

    AtA, BtB, CtC = A.T @ A, B.T @ B, C.T @ C
    A = lstsq_gram(x1, khatri_rao(C, B), CtC * BtB)
    A, lam = _normalize_columns(A)
    AtA = A.T @ A

    B = lstsq_gram(x2, khatri_rao(C, A), CtC * AtA)
    B, lam = _normalize_columns(B)
    BtB = B.T @ B

    C = lstsq_gram(x3, khatri_rao(B, A), BtB * AtA)
    C, lam = _normalize_columns(C)
    return CPModel(lam, (A, B, C))


def cp_als(
    t,
    rank: int,
    max_iters: int = 500,
    tol: float = 1e-8,
    seed=None,
    init: CPModel | None = None,
):
    """Fit a rank-``rank`` CP model by alternating least squares.

    Parameters
    ----------
    t : array_like, shape (I, J, K)
        Data tensor.
    rank : int
        Number of components, at most ``min{IJ, JK, IK}``.
    max_iters : int
        Maximum number of sweeps.
    tol : float
        Stop once the relative error changes by less than ``tol`` between
        consecutive sweeps.
    seed : int, optional
        Seed for the uniform(0, 1) initial factors.
    init : CPModel, optional
        Explicit starting model; overrides ``seed``.

    Returns
    -------
    model : CPModel
    trace : FitTrace
    """
    t = as_tensor(t)
    check_finite(t)
    rank = check_rank(rank, t.shape)
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    if tol <= 0:
        raise ValueError("tol must be positive")

    model = init.copy() if init is not None else random_init(t.shape, rank, seed)
    if model.dims != t.shape or model.rank != rank:
        raise ShapeError("initial model does not match tensor dims and rank")

    xs = unfoldings(t)
    tnorm = frobenius_norm(t)
    trace = FitTrace()
    prev = unfolded_error(xs[0], model, tnorm)
    for it in range(max_iters):
        tic = time.perf_counter()
        model = als_sweep(xs, model)
        err = unfolded_error(xs[0], model, tnorm)
        trace.record(err, time.perf_counter() - tic)
        if abs(prev - err) < tol:
            trace.converged = True
            break
        prev = err
    log.info("cp_als rank=%d sweeps=%d rel_err=%.3e converged=%s",
             rank, trace.iterations, trace.relative_errors[-1], trace.converged)
    return model, trace
