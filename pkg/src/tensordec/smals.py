"""Sampled alternating least squares (SMALS).

Each iteration updates only the columns of A, B and C listed in a sample set
S of size s, solving the s x s normal equations of the sampled block while
the complement columns stay fixed.  After the three block updates the
sampled index whose update produced the smallest objective decrease is
swapped out for the complement index that has waited longest.

The model weights are absorbed into whichever factor is being updated, so
the objective for block A is ``f = 1/2 ||X_(1) - Ahat (C kr B)^T||_F^2`` with
``Ahat = A diag(w)``.  With ``s == R`` every update coincides with the plain
ALS update of :func:`tensordec.cp.als_sweep`.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .cp import cp_reconstruct, random_init, unfolded_error, unfoldings
from .models import CPModel, FitTrace
from .tensor import (
    ShapeError,
    as_tensor,
    check_finite,
    check_rank,
    damped_solve,
    frobenius_norm,
    khatri_rao,
)

log = logging.getLogger(__name__)

BLOCKS = {"A": 0, "B": 1, "C": 2}


@dataclass
class SampleState:
    """Sampled column indices plus the bookkeeping for the swap rule.

    Indices are 0-based and kept sorted.  ``last_sampled[r]`` is the last
    iteration in which column ``r`` was sampled (-1 if never).
    """

    rank: int
    indices: np.ndarray
    last_decrease: np.ndarray = None
    last_sampled: np.ndarray = None

    def __post_init__(self):
        idx = np.unique(np.asarray(self.indices, dtype=np.intp))
        if idx.size != np.asarray(self.indices).size:
            raise ValueError("sample indices must be distinct")
        if idx.size == 0 or idx[0] < 0 or idx[-1] >= self.rank:
            raise ValueError(f"sample indices must lie in [0, {self.rank})")
        self.indices = idx
        if self.last_decrease is None:
            self.last_decrease = np.zeros(self.rank)
        if self.last_sampled is None:
            self.last_sampled = np.full(self.rank, -1, dtype=np.intp)

    @classmethod
    def initial(cls, rank: int, size: int) -> "SampleState":
        if not 1 <= size <= rank:
            raise ValueError(f"sample size must lie in [1, {rank}], got {size}")
        return cls(rank, np.arange(size))

    @property
    def size(self) -> int:
        return self.indices.size

    @property
    def complement(self) -> np.ndarray:
        mask = np.ones(self.rank, dtype=bool)
        mask[self.indices] = False
        return np.flatnonzero(mask)

    def swap(self, iteration: int) -> tuple | None:
        """Evict the least productive sampled index, admit the longest-waiting one.

        Returns ``(evicted, admitted)`` or ``None`` when nothing is left to swap.
        """
        self.last_sampled[self.indices] = iteration
        comp = self.complement
        if comp.size == 0:
            return None
        # argmin returns the first occurrence, so ties go to the lowest index
        evict = self.indices[np.argmin(self.last_decrease[self.indices])]
        admit = comp[np.argmin(self.last_sampled[comp])]
        self.indices = np.sort(np.append(self.indices[self.indices != evict], admit))
        return int(evict), int(admit)


def _block_parts(unfoldings, model: CPModel, block):
    """Unfolding, factor, and the two other factors in Khatri-Rao order."""
    n = BLOCKS.get(block, -1) if isinstance(block, str) else int(block)
    A, B, C = model.factors
    if n == 0:
        return n, unfoldings[0], C, B
    if n == 1:
        return n, unfoldings[1], C, A
    if n == 2:
        return n, unfoldings[2], B, A
    raise ValueError(f"block must be one of A, B, C, got {block!r}")


def block_gradient(t, model: CPModel, state: SampleState, block) -> np.ndarray:
    """Gradient of ``f`` with respect to the sampled columns of one block.

    For block A this is ``-X_(1)(C_S kr B_S) + Ahat (C kr B)^T (C_S kr B_S)``
    where ``Ahat = A diag(w)``; B and C are analogous.  Shape is
    ``(dim, |S|)``.
    """
    t = as_tensor(t)
    if model.dims != t.shape:
        raise ShapeError(f"model dims {model.dims} do not match tensor {t.shape}")
    n, xn, P, Q = _block_parts(unfoldings(t), model, block)
    S = state.indices
    F = model.factors[n] * model.weights
    cross = (P.T @ P[:, S]) * (Q.T @ Q[:, S])
    return -xn @ khatri_rao(P[:, S], Q[:, S]) + F @ cross


def _sampled_update(xn, model: CPModel, n: int, S: np.ndarray, P, Q, Sc=None):
    F = model.factors[n] * model.weights
    gram = (P.T @ P) * (Q.T @ Q)
    if Sc is None:
        Sc = np.setdiff1d(np.arange(model.rank), S, assume_unique=True)
    rhs = xn @ khatri_rao(P[:, S], Q[:, S])
    gram_s = gram[:, S]
    if Sc.size:
        rhs -= F[:, Sc] @ gram_s[Sc]
    g_ss = gram_s[S]
    new = damped_solve(rhs, g_ss)
    delta = new - F[:, S]
    # exact block minimizer: f_old - f_new = 1/2 tr(delta G_SS delta^T), split per column
    decrease = 0.5 * np.sum(delta * (delta @ g_ss), axis=0)

    norms = np.linalg.norm(new, axis=0)
    nz = norms > 0
    new[:, nz] /= norms[nz]
    factors = list(model.factors)
    f = factors[n].copy()
    f[:, S] = new
    factors[n] = f
    weights = model.weights.copy()
    weights[S] = np.where(nz, norms, 0.0)
    return CPModel(weights, tuple(factors)), decrease


def sampled_block_solve(t, model: CPModel, state: SampleState, block):
    """Solve the sampled normal equations for one block.

    ``A_S G[S, S] = X_(1)(C_S kr B_S) - A_{S^c} G[S^c, S]`` with
    ``G = C^T C * B^T B``; only the columns in S change.  The new columns are
    normalized into the weights.

    Returns the updated model and the objective decrease attributed to each
    sampled column (summing to the total decrease of the update).
    """
    t = as_tensor(t)
    if model.dims != t.shape:
        raise ShapeError(f"model dims {model.dims} do not match tensor {t.shape}")
    n, xn, P, Q = _block_parts(unfoldings(t), model, block)
    return _sampled_update(xn, model, n, state.indices, P, Q)


def smals(
    t,
    rank: int,
    sample_size: int,
    max_iters: int = 500,
    tol: float = 1e-8,
    seed=None,
    init: CPModel | None = None,
    state: SampleState | None = None,
):
    """CP fit by sampled ALS.

    Initialization and the stopping rule (change in relative error below
    ``tol``) match :func:`tensordec.cp.cp_als`, except that random initial
    weights are rescaled by the least-squares factor ``<t, L> / ||L||^2``.
    Columns outside the sample keep their weights until they are swapped
    in, so a badly scaled start would otherwise linger; a full ALS update
    ignores the previous weights, so with ``s == R`` the iterates still
    coincide with ALS.  The initial sample is the first ``sample_size``
    columns.

    Returns
    -------
    model : CPModel
    trace : FitTrace
    """
    t = as_tensor(t)
    check_finite(t)
    rank = check_rank(rank, t.shape)
    if not isinstance(sample_size, (int, np.integer)) or not 1 <= sample_size <= rank:
        raise ValueError(f"sample size must lie in [1, {rank}], got {sample_size!r}")
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    if tol <= 0:
        raise ValueError("tol must be positive")

    if init is not None:
        model = init.copy()
        if model.dims != t.shape or model.rank != rank:
            raise ShapeError("initial model does not match tensor dims and rank")
    else:
        model = random_init(t.shape, rank, seed)
        recon = cp_reconstruct(model)
        rr = float(np.vdot(recon, recon))
        if rr > 0:
            model = CPModel(model.weights * (float(np.vdot(t, recon)) / rr), model.factors)
    state = state if state is not None else SampleState.initial(rank, sample_size)

    x1, x2, x3 = unfoldings(t)
    tnorm = frobenius_norm(t)
    trace = FitTrace()
    prev = unfolded_error(x1, model, tnorm)
    for it in range(max_iters):
        tic = time.perf_counter()
        S, Sc = state.indices, state.complement
        A, B, C = model.factors
        model, dA = _sampled_update(x1, model, 0, S, C, B, Sc)
        A = model.factors[0]
        model, dB = _sampled_update(x2, model, 1, S, C, A, Sc)
        B = model.factors[1]
        model, dC = _sampled_update(x3, model, 2, S, B, A, Sc)
        state.last_decrease[S] = dA + dB + dC
        state.swap(it)
        err = unfolded_error(x1, model, tnorm)
        trace.record(err, time.perf_counter() - tic)
        if abs(prev - err) < tol:
            trace.converged = True
            break
        prev = err
    log.info("smals rank=%d s=%d iters=%d rel_err=%.3e", rank, sample_size,
             trace.iterations, trace.relative_errors[-1])
    return model, trace
