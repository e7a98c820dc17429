"""Dense third-order tensor kernels.

Tensors are plain ``numpy`` arrays of shape ``(I, J, K)`` holding float64
values.  The linear layout used for storage and serialization is mode-1
column-major: entry ``(i, j, k)`` lives at flat position ``(k*J + j)*I + i``,
which is numpy's Fortran order.  With this layout the mode-1 unfolding is a
plain reshape.

Unfoldings follow the usual fiber ordering: the mode-``m`` unfolding puts
index ``i_m`` on the rows and enumerates the remaining two indices on the
columns with the lower mode varying fastest.  Consequently

    X_(1) = A diag(w) (C kr B)^T,  X_(2) = B diag(w) (C kr A)^T,
    X_(3) = C diag(w) (B kr A)^T

where ``kr`` is :func:`khatri_rao`.
"""

from __future__ import annotations

import logging

import numpy as np

log = logging.getLogger(__name__)

LAYOUT = "mode1-colmajor"


class ShapeError(ValueError):
    """Raised when array shapes do not fit together."""


def as_tensor(t, name: str = "tensor") -> np.ndarray:
    """Validate and return ``t`` as a float64 array of order three."""
    arr = np.asarray(t, dtype=np.float64)
    if arr.ndim != 3:
        raise ShapeError(f"{name} must have order 3, got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ShapeError(f"{name} dimensions must be positive, got {arr.shape}")
    return arr


def check_finite(t: np.ndarray, name: str = "tensor") -> None:
    if not np.all(np.isfinite(t)):
        raise ValueError(f"{name} contains non-finite entries")


def _check_mode(mode: int) -> int:
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode!r}")
    return mode


def flat_index(i: int, j: int, k: int, dims) -> int:
    """Linear position of ``(i, j, k)`` in the mode-1 column-major layout."""
    I, J, _ = dims
    return (k * J + j) * I + i


def to_flat(t: np.ndarray) -> np.ndarray:
    return np.asarray(t).ravel(order="F")


def from_flat(data, dims) -> np.ndarray:
    data = np.asarray(data, dtype=np.float64)
    dims = tuple(int(d) for d in dims)
    if data.size != int(np.prod(dims)):
        raise ShapeError(f"data length {data.size} does not match dims {dims}")
    return data.reshape(dims, order="F")


def vectorize(t: np.ndarray) -> np.ndarray:
    """Row-vector view with ``k`` varying fastest, then ``j``, then ``i``.

    This is the alternative ordering sometimes used in the literature; it is
    not the storage order.
    """
    return np.asarray(t).ravel(order="C")


def unfold(t: np.ndarray, mode: int) -> np.ndarray:
    """Mode-``mode`` matricization (modes are 1-based)."""
    _check_mode(mode)
    t = as_tensor(t)
    ax = mode - 1
    return np.reshape(np.moveaxis(t, ax, 0), (t.shape[ax], -1), order="F")


def fold(m: np.ndarray, mode: int, dims) -> np.ndarray:
    """Inverse of :func:`unfold`."""
    _check_mode(mode)
    m = np.asarray(m, dtype=np.float64)
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3:
        raise ShapeError(f"dims must have three entries, got {dims}")
    ax = mode - 1
    rest = [d for n, d in enumerate(dims) if n != ax]
    expected = (dims[ax], rest[0] * rest[1])
    if m.shape != expected:
        raise ShapeError(f"mode-{mode} unfolding of {dims} must be {expected}, got {m.shape}")
    full = np.reshape(m, (dims[ax], *rest), order="F")
    return np.moveaxis(full, 0, ax)


def khatri_rao(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product; column ``r`` is ``kron(a[:, r], b[:, r])``."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"khatri_rao needs equal column counts, got {a.shape[1]} and {b.shape[1]}")
    return (a[:, None, :] * b[None, :, :]).reshape(a.shape[0] * b.shape[0], a.shape[1])


def kronecker(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.kron(np.atleast_2d(a), np.atleast_2d(b))


def mode_product(t: np.ndarray, u: np.ndarray, mode: int) -> np.ndarray:
    """Tucker contracted product ``t x_mode u``."""
    _check_mode(mode)
    t = as_tensor(t)
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    if u.shape[1] != t.shape[mode - 1]:
        raise ShapeError(
            f"mode-{mode} product needs {t.shape[mode - 1]} matrix columns, got {u.shape[1]}"
        )
    dims = list(t.shape)
    dims[mode - 1] = u.shape[0]
    return fold(u @ unfold(t, mode), mode, dims)


def frobenius_norm(t) -> float:
    return float(np.linalg.norm(np.asarray(t, dtype=np.float64).ravel()))


def rank_bound(dims) -> int:
    """Generic upper bound ``min{IJ, JK, IK}`` on the rank of an I x J x K tensor."""
    I, J, K = dims
    return min(I * J, J * K, I * K)


def check_rank(rank: int, dims) -> int:
    bound = rank_bound(dims)
    if not isinstance(rank, (int, np.integer)) or rank < 1 or rank > bound:
        raise ValueError(f"rank must be an integer in [1, {bound}] for dims {tuple(dims)}, got {rank!r}")
    return int(rank)


def damped_solve(rhs: np.ndarray, gram: np.ndarray) -> np.ndarray:
    """Return ``rhs @ pinv(gram)`` for a small symmetric PSD ``gram``.

    Solves with ``gram + eps*I`` where ``eps = 1e-12 * trace(gram) / R`` and
    falls back to an SVD pseudo-inverse if the damped solve is singular or
    its relative residual exceeds 1e-8.
    """
    gram = np.asarray(gram, dtype=np.float64)
    R = gram.shape[0]
    eps = 1e-12 * np.trace(gram) / R
    damped = gram + eps * np.eye(R)
    rhs_t = np.asarray(rhs, dtype=np.float64).T
    try:
        sol = np.linalg.solve(damped, rhs_t)
        scale = np.linalg.norm(rhs_t)
        resid = np.linalg.norm(damped @ sol - rhs_t)
        if np.all(np.isfinite(sol)) and resid <= 1e-8 * max(scale, np.finfo(float).tiny):
            return sol.T
    except np.linalg.LinAlgError:
        pass
    log.debug("damped solve rejected, using SVD pseudo-inverse (R=%d)", R)
    return rhs_t.T @ np.linalg.pinv(gram, hermitian=True)


def lstsq_gram(x_unf: np.ndarray, kr: np.ndarray, gram: np.ndarray) -> np.ndarray:
    """ALS factor update ``x_unf @ kr @ pinv(gram)``."""
    if x_unf.shape[1] != kr.shape[0]:
        raise ShapeError(f"unfolding has {x_unf.shape[1]} columns but Khatri-Rao has {kr.shape[0]} rows")
    return damped_solve(x_unf @ kr, gram)
