"""Sparse-weight CP approximation and tensor completion (LRAT).

Solves

    min  1/2 ||W * (C - L)||_F^2 + lam * ||sigma||_1,
    L = sum_r sigma_r a_r o b_r o c_r,   ||a_r|| = ||b_r|| = ||c_r|| = 1

by block proximal gradient steps: each factor takes a gradient step scaled
by ``1 / (t * d)`` and is renormalized column-wise, then the weight vector
takes a gradient step followed by soft thresholding.  ``W`` is the
observation mask (all ones for plain fitting).  The number of nonzero
weights at the end is the estimated rank.  Iteration stops once the
objective changes by at most ``tol`` times its previous value.

Step denominators are ``d = max(||U U^T||_F, 1)`` with
``U = diag(sigma) (P kr Q)^T`` for a factor block and
``eta = max(||Q^T Q||_F, 1)`` for the weight block, both upper bounds on
the Lipschitz constants of the respective block gradients.  A step that
would raise the objective is halved until it does not (at most
``MAX_HALVINGS`` times, after which the block is left unchanged).

The l1 penalty cannot tell one term from several parallel copies of it, so
the iteration tends to settle on duplicated terms.  Once it has converged,
terms that agree up to sign within ``merge_tol`` are folded into one, the
reduced model is polished by further iterations, and the merge is kept only
if the polished objective is no larger than before.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from .cp import cp_reconstruct
from .models import CPModel, FitTrace
from .tensor import ShapeError, as_tensor, check_finite, khatri_rao, unfold

log = logging.getLogger(__name__)

MAX_HALVINGS = 40
DIVERGENCE_FACTOR = 1e6


class LratDivergence(RuntimeError):
    """Raised when the fit error grows beyond ``DIVERGENCE_FACTOR`` times its start."""


@dataclass
class LratConfig:
    max_rank: int
    lam: float = 0.0
    t_scale: float = 1.0
    max_iters: int = 2000
    tol: float = 1e-8
    merge_tol: float = 1e-2

    def __post_init__(self):
        if int(self.max_rank) != self.max_rank or self.max_rank < 1:
            raise ValueError(f"max_rank must be a positive integer, got {self.max_rank!r}")
        self.max_rank = int(self.max_rank)
        if not self.lam >= 0:
            raise ValueError(f"lam must be nonnegative, got {self.lam!r}")
        if not self.t_scale > 0:
            raise ValueError(f"t_scale must be positive, got {self.t_scale!r}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not self.merge_tol >= 0:
            raise ValueError("merge_tol must be nonnegative")


@dataclass
class ObservationMask:
    """Boolean tensor marking observed entries."""

    observed: np.ndarray

    def __post_init__(self):
        obs = np.asarray(self.observed)
        if obs.ndim != 3:
            raise ShapeError(f"mask must have order 3, got shape {obs.shape}")
        self.observed = obs.astype(bool)

    @property
    def dims(self) -> tuple:
        return self.observed.shape

    @property
    def count(self) -> int:
        return int(self.observed.sum())

    @property
    def all_observed(self) -> bool:
        return bool(self.observed.all())

    @classmethod
    def full(cls, dims) -> "ObservationMask":
        return cls(np.ones(tuple(dims), dtype=bool))

    @classmethod
    def hiding(cls, dims, entries) -> "ObservationMask":
        """Mask with every entry observed except the ``(i, j, k)`` in ``entries``."""
        obs = np.ones(tuple(dims), dtype=bool)
        for i, j, k in entries:
            obs[i, j, k] = False
        return cls(obs)


def soft_threshold(x, kappa: float) -> np.ndarray:
    """Componentwise ``sign(x) * max(|x| - kappa, 0)``."""
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.maximum(np.abs(x) - kappa, 0.0)


def estimated_rank(model: CPModel) -> int:
    return int(np.count_nonzero(model.weights))


def objective(c: np.ndarray, model: CPModel, lam: float, mask=None) -> float:
    r = c - cp_reconstruct(model)
    if mask is not None:
        r = r * mask
    return 0.5 * float(np.vdot(r, r)) + lam * float(np.abs(model.weights).sum())


class _Problem:
    """Masked data plus cached helpers for one LRAT run."""

    def __init__(self, c, mask, lam):
        self.c = c
        self.mask = mask
        self.lam = lam
        cm = c if mask is None else c * mask
        self.scale = 0.5 * float(np.vdot(cm, cm))

    def residual(self, model):
        r = self.c - cp_reconstruct(model)
        return r if self.mask is None else r * self.mask

    def value(self, model, resid=None):
        r = self.residual(model) if resid is None else resid
        return 0.5 * float(np.vdot(r, r)) + self.lam * float(np.abs(model.weights).sum())


_OTHERS = {0: (2, 1), 1: (2, 0), 2: (1, 0)}


def _factor_step(prob, model, n, t_scale, f_now):
    sigma = model.weights
    p, q = (model.factors[i] for i in _OTHERS[n])
    kr = khatri_rao(p, q)
    resid = prob.residual(model)
    grad = -(unfold(resid, n + 1) @ kr) * sigma
    uut = np.outer(sigma, sigma) * (p.T @ p) * (q.T @ q)
    d = max(np.linalg.norm(uut), 1.0)
    F = model.factors[n]
    step = 1.0 / (t_scale * d)
    for _ in range(MAX_HALVINGS):
        D = F - step * grad
        norms = np.linalg.norm(D, axis=0)
        nz = norms > 0
        D[:, nz] /= norms[nz]
        factors = list(model.factors)
        factors[n] = D
        trial = CPModel(sigma, tuple(factors))
        f_trial = prob.value(trial)
        if f_trial <= f_now:
            return trial, f_trial
        step *= 0.5
    return model, f_now


def _weight_step(prob, model, t_scale, f_now):
    A, B, C = model.factors
    resid = prob.residual(model)
    # <resid, a_r o b_r o c_r> for every r
    inner = np.sum(A * (unfold(resid, 1) @ khatri_rao(C, B)), axis=0)
    grad = -inner
    qtq = (A.T @ A) * (B.T @ B) * (C.T @ C)
    eta = max(np.linalg.norm(qtq), 1.0)
    step = 1.0 / (t_scale * eta)
    for _ in range(MAX_HALVINGS):
        beta = model.weights - step * grad
        trial = CPModel(soft_threshold(beta, prob.lam * step), model.factors)
        f_trial = prob.value(trial)
        if f_trial <= f_now:
            return trial, f_trial
        step *= 0.5
    return model, f_now


def initial_model(dims, max_rank: int, seed=None) -> CPModel:
    """Uniform(0, 1) factors normalized to unit columns, all-ones weights."""
    rng = np.random.default_rng(seed)
    factors = []
    for d in dims:
        f = rng.uniform(0.0, 1.0, size=(d, max_rank))
        factors.append(f / np.linalg.norm(f, axis=0))
    return CPModel(np.ones(max_rank), tuple(factors))


def merge_parallel_terms(model: CPModel, merge_tol: float):
    """Fold rank-one terms that coincide up to sign into a single term.

    Two terms count as parallel when ``1 - |<t_p, t_q>| < merge_tol`` for
    the unit-norm outer products ``t_p, t_q``.  Each group keeps its member
    of largest ``|weight|`` and the signed sum of the group's weights; the
    other members get weight zero.  Returns the new model and the indices
    that were zeroed.
    """
    w = model.weights.copy()
    cos = np.ones((model.rank, model.rank))
    for f in model.factors:
        cos *= f.T @ f
    active = np.flatnonzero(w)
    order = active[np.argsort(-np.abs(w[active]), kind="stable")]
    absorbed = []
    taken = set()
    for p in order:
        if p in taken:
            continue
        for q in order:
            if q == p or q in taken:
                continue
            if 1.0 - abs(cos[p, q]) < merge_tol:
                w[p] += np.sign(cos[p, q]) * w[q]
                w[q] = 0.0
                taken.add(q)
                absorbed.append(int(q))
        taken.add(p)
    return CPModel(w, model.factors), sorted(absorbed)


def _iterate(prob, model, cfg, trace, start_err, rel_err):
    f_now = prob.value(model)
    converged = False
    for it in range(cfg.max_iters):
        tic = time.perf_counter()
        f_prev = f_now
        for n in range(3):
            model, f_now = _factor_step(prob, model, n, cfg.t_scale, f_now)
        model, f_now = _weight_step(prob, model, cfg.t_scale, f_now)
        err = rel_err(model)
        trace.record(err, time.perf_counter() - tic, objective=f_now)
        if not np.isfinite(err) or err > DIVERGENCE_FACTOR * start_err:
            raise LratDivergence(
                f"LRAT diverged at iteration {trace.iterations}: relative error "
                f"{err:.3e} vs initial {start_err:.3e}"
            )
        if abs(f_prev - f_now) <= cfg.tol * f_prev:
            converged = True
            break
    return model, f_now, converged


def _subset(model, cols):
    return CPModel(model.weights[cols], tuple(f[:, cols] for f in model.factors))


def lrat_iterate(c, mask, cfg: LratConfig, seed=None, init: CPModel | None = None):
    """Run the LRAT iteration; ``mask`` is a boolean array or ``None``.

    Returns the final model and a trace whose ``relative_errors`` are
    ``||W(C - L)||_F / ||W C||_F`` and whose ``objective`` is the penalized
    loss after every iteration.  When a merge is accepted the polishing
    iterations are appended and ``trace.phase_starts`` marks where they begin.
    """
    c = as_tensor(c)
    check_finite(c)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != c.shape:
            raise ShapeError(f"mask dims {mask.shape} do not match tensor {c.shape}")
        if not mask.any():
            raise ValueError("observation mask is empty")
        if mask.all():
            mask = None
    model = init.copy() if init is not None else initial_model(c.shape, cfg.max_rank, seed)
    if model.dims != c.shape:
        raise ShapeError("initial model does not match tensor dims")

    prob = _Problem(c, mask, cfg.lam)
    cnorm = np.sqrt(2.0 * prob.scale)

    def rel_err(m):
        e = float(np.linalg.norm(prob.residual(m)))
        return e / cnorm if cnorm > 0 else e

    start_err = max(rel_err(model), np.finfo(float).tiny)
    trace = FitTrace()
    trace.phase_starts = [0]
    model, f_now, trace.converged = _iterate(prob, model, cfg, trace, start_err, rel_err)

    if cfg.merge_tol > 0 and cfg.lam > 0:
        merged, absorbed = merge_parallel_terms(model, cfg.merge_tol)
        if absorbed:
            keep = np.setdiff1d(np.arange(model.rank), absorbed)
            polish_trace = FitTrace()
            reduced, f_polished, conv = _iterate(
                prob, _subset(merged, keep), cfg, polish_trace, start_err, rel_err
            )
            if f_polished <= f_now * (1.0 + cfg.tol):
                w = np.zeros(model.rank)
                w[keep] = reduced.weights
                factors = []
                for f_old, f_new in zip(merged.factors, reduced.factors):
                    f = f_old.copy()
                    f[:, keep] = f_new
                    factors.append(f)
                model = CPModel(w, tuple(factors))
                trace.phase_starts.append(trace.iterations)
                for e, s, o in zip(polish_trace.relative_errors, polish_trace.wall_times,
                                   polish_trace.objective):
                    trace.record(e, s, o)
                trace.converged = conv
                log.debug("merged %d parallel terms", len(absorbed))
    log.info("lrat max_rank=%d lam=%.3g iters=%d rel_err=%.3e rank=%d",
             cfg.max_rank, cfg.lam, trace.iterations, trace.relative_errors[-1],
             estimated_rank(model))
    return model, trace


def lrat_fit(c, cfg: LratConfig, seed=None):
    """Fit a sparse-weight CP model to a fully observed tensor.

    Returns ``(model, estimated_rank, trace)``.
    """
    model, trace = lrat_iterate(c, None, cfg, seed)
    return model, estimated_rank(model), trace


def impose_observed(c: np.ndarray, completed: np.ndarray, mask: np.ndarray) -> np.ndarray:
    out = np.array(completed, dtype=np.float64, copy=True)
    out[mask] = c[mask]
    return out


def lrat_complete(c, omega: ObservationMask, cfg: LratConfig, seed=None):
    """Complete the unobserved entries of ``c``.

    Only observed entries enter the residual.  The returned tensor equals
    ``c`` on the observed set and the model reconstruction elsewhere.

    Returns ``(completed, model, estimated_rank)``.
    """
    c = as_tensor(c)
    if not isinstance(omega, ObservationMask):
        omega = ObservationMask(omega)
    if omega.dims != c.shape:
        raise ShapeError(f"mask dims {omega.dims} do not match tensor {c.shape}")
    if omega.count == 0:
        raise ValueError("observation mask is empty")
    model, _ = lrat_iterate(c, omega.observed, cfg, seed)
    completed = impose_observed(c, cp_reconstruct(model), omega.observed)
    return completed, model, estimated_rank(model)


def _heuristic_lambda(c, omega, cfg=None) -> float:
    obs = c[omega.observed]
    if obs.size == 0:
        return 0.0
    return 0.1 * float(np.linalg.norm(obs)) / np.sqrt(obs.size)


LAMBDA_STRATEGIES = {"heuristic": _heuristic_lambda}


def register_lambda_strategy(name: str, fn) -> None:
    """Register ``fn(c, omega, cfg) -> float`` as a regularization-weight rule.

    This is the hook for data-driven estimators such as a flexible
    Golub-Kahan hybrid method; none is bundled.
    """
    LAMBDA_STRATEGIES[name] = fn


def estimate_lambda(c, omega: ObservationMask | None = None, cfg=None, strategy: str = "heuristic") -> float:
    """Regularization weight; the default is ``0.1 * ||c(omega)||_F / sqrt(|omega|)``."""
    c = as_tensor(c)
    if omega is None:
        omega = ObservationMask.full(c.shape)
    try:
        fn = LAMBDA_STRATEGIES[strategy]
    except KeyError:
        raise ValueError(f"unknown lambda strategy {strategy!r}; known: {sorted(LAMBDA_STRATEGIES)}") from None
    return float(fn(c, omega, cfg))
