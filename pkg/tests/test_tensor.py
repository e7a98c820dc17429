import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tensordec.cp import cp_reconstruct
from tensordec.models import CPModel
from tensordec.tensor import (
    ShapeError,
    check_rank,
    damped_solve,
    flat_index,
    fold,
    from_flat,
    frobenius_norm,
    khatri_rao,
    kronecker,
    lstsq_gram,
    mode_product,
    rank_bound,
    to_flat,
    unfold,
    vectorize,
)


# --- brute-force oracles -------------------------------------------------------

def unfold_oracle(t, mode):
    """Element-by-element index map: index i_mode on rows, the other two
    indices on columns with the lower mode varying fastest."""
    I, J, K = t.shape
    dims = (I, J, K)
    ax = mode - 1
    others = [n for n in range(3) if n != ax]
    out = np.zeros((dims[ax], dims[others[0]] * dims[others[1]]))
    for idx in itertools.product(range(I), range(J), range(K)):
        col = idx[others[0]] + dims[others[0]] * idx[others[1]]
        out[idx[ax], col] = t[idx]
    return out


def khatri_rao_oracle(a, b):
    return np.column_stack([np.kron(a[:, r], b[:, r]) for r in range(a.shape[1])])


def reconstruct_oracle(w, A, B, C):
    I, J, K = A.shape[0], B.shape[0], C.shape[0]
    out = np.zeros((I, J, K))
    for i in range(I):
        for j in range(J):
            for k in range(K):
                out[i, j, k] = sum(w[r] * A[i, r] * B[j, r] * C[k, r] for r in range(len(w)))
    return out


dims_st = st.tuples(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5))


# --- layout --------------------------------------------------------------------

def test_flat_layout_is_mode1_column_major():
    rng = np.random.default_rng(0)
    t = rng.standard_normal((3, 4, 5))
    flat = to_flat(t)
    for i, j, k in itertools.product(range(3), range(4), range(5)):
        assert flat[flat_index(i, j, k, t.shape)] == t[i, j, k]
    assert np.array_equal(from_flat(flat, t.shape), t)


def test_from_flat_length_mismatch():
    with pytest.raises(ShapeError):
        from_flat(np.zeros(7), (2, 2, 2))


def test_vectorize_is_last_index_fastest():
    t = np.arange(24.0).reshape(2, 3, 4)
    v = vectorize(t)
    assert v[1] == t[0, 0, 1] and v[4] == t[0, 1, 0]


# --- unfold / fold -------------------------------------------------------------

def test_unfold_example_matches_hand_oracle():
    t = np.zeros((2, 2, 2))
    for i, j, k in itertools.product(range(2), repeat=3):
        t[i, j, k] = 4 * i + 2 * j + k
    expected = np.array([[0, 2, 1, 3], [4, 6, 5, 7]], dtype=float)
    assert np.array_equal(unfold(t, 1), expected)
    assert np.array_equal(unfold_oracle(t, 1), expected)
    assert np.array_equal(fold(expected, 1, (2, 2, 2)), t)


@pytest.mark.parametrize("mode", [1, 2, 3])
def test_unfold_matches_index_map_oracle(mode):
    t = np.random.default_rng(mode).standard_normal((3, 4, 5))
    assert np.array_equal(unfold(t, mode), unfold_oracle(t, mode))


def test_unfold_shapes():
    t = np.zeros((2, 3, 4))
    assert unfold(t, 1).shape == (2, 12)
    assert unfold(t, 2).shape == (3, 8)
    assert unfold(t, 3).shape == (4, 6)


@pytest.mark.parametrize("mode", [0, 4, -1])
def test_unfold_rejects_bad_mode(mode):
    with pytest.raises(ValueError, match="mode"):
        unfold(np.zeros((2, 2, 2)), mode)


def test_unfold_of_rank_one_is_rank_one():
    rng = np.random.default_rng(1)
    a, b, c = rng.standard_normal(3), rng.standard_normal(4), rng.standard_normal(5)
    t = np.einsum("i,j,k->ijk", a, b, c)
    m = unfold(t, 1)
    assert np.allclose(m, np.outer(a, np.kron(c, b)))
    assert np.linalg.matrix_rank(m) == 1


@settings(max_examples=40, deadline=None)
@given(dims=dims_st, mode=st.integers(1, 3), seed=st.integers(0, 2**31))
def test_fold_unfold_round_trip_bitwise(dims, mode, seed):
    t = np.random.default_rng(seed).standard_normal(dims)
    assert np.array_equal(fold(unfold(t, mode), mode, dims), t)
    m = unfold(t, mode)
    assert np.array_equal(unfold(fold(m, mode, dims), mode), m)


def test_fold_zero_matrix_gives_zero_tensor():
    assert not fold(np.zeros((3, 20)), 1, (3, 4, 5)).any()


def test_fold_rejects_shape_mismatch():
    with pytest.raises(ShapeError):
        fold(np.zeros((3, 19)), 1, (3, 4, 5))


# --- products ------------------------------------------------------------------

def test_khatri_rao_example():
    A = np.array([[1.0, 2.0], [3.0, 4.0]])
    B = np.array([[0.0, 1.0], [1.0, 0.0]])
    expected = np.array([[0, 2], [1, 0], [0, 4], [3, 0]], dtype=float)
    assert np.array_equal(khatri_rao(A, B), expected)
    assert np.array_equal(khatri_rao_oracle(A, B), expected)


def test_khatri_rao_single_column_is_kronecker():
    a, b = np.array([[1.0], [2.0]]), np.array([[3.0], [4.0], [5.0]])
    assert np.array_equal(khatri_rao(a, b), np.kron(a, b))


def test_khatri_rao_identity_columns():
    e = np.eye(2)
    kr = khatri_rao(e, e)
    assert np.array_equal(kr[:, 0], np.kron(e[:, 0], e[:, 0]))
    assert np.array_equal(kr[:, 1], np.kron(e[:, 1], e[:, 1]))


def test_khatri_rao_matches_per_column_oracle_on_50_inputs():
    rng = np.random.default_rng(2)
    for _ in range(50):
        R = int(rng.integers(1, 5))
        a = rng.standard_normal((int(rng.integers(1, 6)), R))
        b = rng.standard_normal((int(rng.integers(1, 6)), R))
        assert np.array_equal(khatri_rao(a, b), khatri_rao_oracle(a, b))


def test_khatri_rao_rejects_column_mismatch():
    with pytest.raises(ShapeError):
        khatri_rao(np.zeros((2, 2)), np.zeros((2, 3)))


def test_kronecker_examples():
    B = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(kronecker(np.eye(1), B), B)
    assert np.array_equal(kronecker(np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]])),
                          np.array([[3.0, 6.0], [4.0, 8.0]]))
    a, b = np.array([1.0, 2.0, 3.0]), np.array([5.0, 7.0])
    k = kronecker(a[:, None], b[:, None]).ravel()
    for i in range(3):
        for j in range(2):
            assert k[i * 2 + j] == a[i] * b[j]


def test_mode_product_identity_and_sum():
    t = np.random.default_rng(3).standard_normal((3, 4, 5))
    for m, d in zip((1, 2, 3), t.shape):
        assert np.allclose(mode_product(t, np.eye(d), m), t)
    s = mode_product(t, np.ones((1, 3)), 1)
    oracle = np.zeros((1, 4, 5))
    for i in range(3):
        oracle[0] += t[i]
    assert np.allclose(s, oracle)


def test_mode_product_distinct_modes_commute():
    rng = np.random.default_rng(4)
    t = rng.standard_normal((3, 3, 3))
    U, V = rng.standard_normal((2, 3)), rng.standard_normal((4, 3))
    lhs = mode_product(mode_product(t, U, 1), V, 2)
    rhs = mode_product(mode_product(t, V, 2), U, 1)
    assert np.allclose(lhs, rhs, atol=1e-13)


def test_mode_product_rejects_inner_mismatch():
    with pytest.raises(ShapeError):
        mode_product(np.zeros((3, 4, 5)), np.zeros((2, 5)), 1)


# --- norms, reconstruction -----------------------------------------------------

def test_frobenius_norm():
    assert frobenius_norm(np.zeros((2, 3, 4))) == 0
    t = np.zeros((1, 1, 1))
    t[0, 0, 0] = -3
    assert frobenius_norm(t) == 3
    t = np.random.default_rng(5).standard_normal((3, 4, 5))
    total = 0.0
    for v in t.flat:
        total += v * v
    assert frobenius_norm(t) ** 2 == pytest.approx(total, rel=1e-13)


def test_cp_reconstruct_unit_case():
    e = np.array([[1.0], [0.0]])
    t = cp_reconstruct(CPModel([1.0], (e, e, e)))
    assert t[0, 0, 0] == 1 and t.sum() == 1


def test_cp_reconstruct_matches_triple_loop_oracle():
    rng = np.random.default_rng(6)
    w = rng.standard_normal(3)
    A, B, C = rng.standard_normal((4, 3)), rng.standard_normal((5, 3)), rng.standard_normal((6, 3))
    model = CPModel(w, (A, B, C))
    oracle = reconstruct_oracle(w, A, B, C)
    t = cp_reconstruct(model)
    assert np.allclose(t, oracle, rtol=1e-12, atol=1e-13)
    assert np.allclose(t, fold(A @ np.diag(w) @ khatri_rao(C, B).T, 1, (4, 5, 6)))
    assert frobenius_norm(t) == pytest.approx(frobenius_norm(oracle), rel=1e-12)
    doubled = cp_reconstruct(CPModel(2 * w, (A, B, C)))
    assert np.allclose(doubled, 2 * t)


def test_cp_reconstruct_rejects_dim_mismatch():
    m = CPModel(np.ones(2), (np.ones((2, 2)), np.ones((3, 2)), np.ones((4, 2))))
    with pytest.raises(ShapeError):
        cp_reconstruct(m, dims=(2, 3, 5))


# --- solves ----------------------------------------------------------------------

def test_lstsq_gram_identity():
    rng = np.random.default_rng(7)
    x, kr = rng.standard_normal((4, 6)), rng.standard_normal((6, 3))
    assert np.allclose(lstsq_gram(x, kr, np.eye(3)), x @ kr, rtol=1e-10)


def test_lstsq_gram_recovers_known_factor():
    rng = np.random.default_rng(8)
    A, B, C = rng.standard_normal((5, 3)), rng.standard_normal((6, 3)), rng.standard_normal((7, 3))
    t = cp_reconstruct(CPModel(np.ones(3), (A, B, C)))
    gram = (C.T @ C) * (B.T @ B)
    A_hat = lstsq_gram(unfold(t, 1), khatri_rao(C, B), gram)
    assert np.allclose(A_hat, A, rtol=1e-8, atol=1e-10)


def test_lstsq_gram_rank_deficient_is_finite():
    rng = np.random.default_rng(9)
    B = rng.standard_normal((6, 1)) @ np.ones((1, 3))  # identical columns
    C = rng.standard_normal((7, 1)) @ np.ones((1, 3))
    gram = (C.T @ C) * (B.T @ B)
    out = lstsq_gram(rng.standard_normal((5, 42)), khatri_rao(C, B), gram)
    assert np.all(np.isfinite(out))


def test_damped_solve_singular_falls_back_to_pinv():
    gram = np.zeros((2, 2))
    out = damped_solve(np.ones((3, 2)), gram)
    assert np.array_equal(out, np.zeros((3, 2)))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), R=st.integers(1, 6))
def test_damped_solve_matches_solve_on_well_conditioned(seed, R):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((R, R))
    gram = M @ M.T + R * np.eye(R)
    rhs = rng.standard_normal((4, R))
    assert np.allclose(damped_solve(rhs, gram), np.linalg.solve(gram, rhs.T).T, rtol=1e-9, atol=1e-12)


# --- rank bound ------------------------------------------------------------------

def test_rank_bound():
    assert rank_bound((2, 3, 4)) == 6
    assert check_rank(6, (2, 3, 4)) == 6
    for bad in (0, 7, 2.5):
        with pytest.raises(ValueError):
            check_rank(bad, (2, 3, 4))
