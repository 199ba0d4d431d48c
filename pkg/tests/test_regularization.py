import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from emiinv import ArgumentError, NumericalRankError, SingularComponentError
from emiinv.regularization import (gsvd, mgs_functional, mgs_weights, reg_matrix, tgsvd_path,
                                   tgsvd_solve)
from emiinv.inversion import effective_reg_matrix


def reconstruction_errors(F):
    n, p = F.n, F.p
    A_rec = F.U @ np.diag(F.c) @ F.Zinv
    L_rec = F.V @ np.hstack([np.diag(F.xi), np.zeros((p, n - p))]) @ F.Zinv
    scale = max(np.linalg.norm(F.A), np.linalg.norm(F.L))
    return np.linalg.norm(A_rec - F.A) / scale, np.linalg.norm(L_rec - F.L) / scale


instances = st.tuples(
    st.integers(0, 2**32 - 1),
    st.sampled_from(["i", "d1", "d2"]),
    st.integers(3, 14),
    st.sampled_from([0.5, 1.0, 2.0]),
)


def random_pair(seed, kind, n, rows_per_col):
    rng = np.random.default_rng(seed)
    M = max(1, int(round(rows_per_col * n)))
    return rng.standard_normal((M, n)), reg_matrix(kind, n)


# -- regularization matrices ------------------------------------------------------

def test_d1_annihilates_constants():
    np.testing.assert_array_equal(reg_matrix("d1", 9) @ np.full(9, 3.7), 0.0)


def test_d2_annihilates_affine_vectors():
    k = np.arange(11.0)
    assert np.max(np.abs(reg_matrix("d2", 11) @ (1.5 - 0.25 * k))) < 1e-14


def test_identity():
    np.testing.assert_array_equal(reg_matrix("i", 60), np.eye(60))


def test_reg_matrix_shapes_and_errors():
    assert reg_matrix("d1", 5).shape == (4, 5)
    assert reg_matrix("d2", 5).shape == (3, 5)
    with pytest.raises(ArgumentError):
        reg_matrix("d3", 5)
    with pytest.raises(ArgumentError):
        reg_matrix("d2", 2)


# -- GSVD ----------------------------------------------------------------------

def test_gsvd_random_12x8_with_d1(rng):
    A = rng.standard_normal((12, 8))
    F = gsvd(A, reg_matrix("d1", 8))
    ea, el = reconstruction_errors(F)
    assert ea < 1e-10 and el < 1e-10
    np.testing.assert_allclose(F.gamma**2 + F.xi**2, 1.0, atol=1e-12)
    assert np.all(np.diff(F.gamma) >= 0)


@given(instances)
def test_gsvd_properties(inst):
    A, L = random_pair(*inst)
    F = gsvd(A, L)
    ea, el = reconstruction_errors(F)
    assert ea < 1e-10 and el < 1e-10
    assert np.all(np.abs(F.gamma**2 + F.xi**2 - 1.0) <= 1e-12)
    assert np.all(np.diff(F.gamma) >= 0)
    assert np.all((F.gamma >= 0) & (F.gamma <= 1))


def test_gsvd_underdetermined_has_zero_gammas(rng):
    # fewer data rows than unknowns, as for 12 readings and 60 layers
    A = rng.standard_normal((12, 60))
    F = gsvd(A, reg_matrix("d1", 60))
    # the n - p = 1 null-space direction of D1 uses up one data dimension
    assert F.ell_max == 12 - 1
    assert np.count_nonzero(F.gamma) == F.ell_max
    ea, el = reconstruction_errors(F)
    assert ea < 1e-10 and el < 1e-10


def test_gsvd_identity_data_matrix_matches_normal_equations():
    A = np.eye(4)
    L = reg_matrix("d1", 4)
    F = gsvd(A, L)
    b = np.array([1.0, -2.0, 0.5, 3.0])
    lam = 0.7
    # Tikhonov solution written with the GSVD filter factors
    f = F.gamma**2 / (F.gamma**2 + lam**2 * F.xi**2)
    coef = F.U.T @ b
    x = F.Z[:, :F.p] @ (f * coef[:F.p] / F.gamma) + F.Z[:, F.p:] @ coef[F.p:]
    ref = np.linalg.solve(A.T @ A + lam**2 * L.T @ L, A.T @ b)
    np.testing.assert_allclose(x, ref, rtol=1e-12, atol=1e-12)


def test_gsvd_common_null_space_is_rejected():
    A = np.zeros((3, 4))
    A[:, :2] = 1.0
    with pytest.raises(NumericalRankError):
        gsvd(A, reg_matrix("d1", 4)[:1])


def test_gsvd_dimension_errors(rng):
    with pytest.raises(ArgumentError):
        gsvd(rng.standard_normal((5, 4)), np.eye(5))
    with pytest.raises(ArgumentError):
        gsvd(rng.standard_normal((5, 4)), np.eye(3, 5))


# -- TGSVD ----------------------------------------------------------------------

def test_tgsvd_ell_zero_is_null_space_component(rng):
    A = rng.standard_normal((10, 6))
    L = reg_matrix("d1", 6)
    F = gsvd(A, L)
    b = rng.standard_normal(10)
    q0 = tgsvd_solve(F, b, 0)
    np.testing.assert_allclose(L @ q0, 0.0, atol=1e-12)
    # best constant fit
    ones = np.ones(6)
    c = (A @ ones) @ b / np.sum((A @ ones) ** 2)
    np.testing.assert_allclose(q0, c * ones, rtol=1e-10)


def test_tgsvd_full_rank_matches_least_squares(rng):
    A = rng.standard_normal((8, 8)) + 4 * np.eye(8)
    F = gsvd(A, np.eye(8))
    b = rng.standard_normal(8)
    ref = np.linalg.lstsq(A, b, rcond=None)[0]
    q = tgsvd_solve(F, b, F.p)
    assert np.linalg.norm(q - ref) <= 1e-10 * np.linalg.norm(ref)


@given(instances)
def test_tgsvd_residual_non_increasing(inst):
    A, L = random_pair(*inst)
    b = np.random.default_rng(inst[0] + 1).standard_normal(A.shape[0])
    F = gsvd(A, L)
    res = [np.linalg.norm(A @ tgsvd_solve(F, b, ell) - b) for ell in range(F.ell_max + 1)]
    assert np.all(np.diff(res) <= 1e-10 * max(res[0], 1.0))


def test_tgsvd_path_matches_single_solves(rng):
    A = rng.standard_normal((12, 20))
    F = gsvd(A, reg_matrix("d2", 20))
    b = rng.standard_normal(12)
    path = tgsvd_path(F, b)
    assert path.shape == (F.ell_max + 1, 20)
    for ell in range(F.ell_max + 1):
        np.testing.assert_allclose(path[ell], tgsvd_solve(F, b, ell), rtol=1e-10, atol=1e-12)


def test_tgsvd_ell_range(rng):
    A = rng.standard_normal((4, 10))
    F = gsvd(A, reg_matrix("d1", 10))
    with pytest.raises(ArgumentError):
        tgsvd_solve(F, np.ones(4), F.p + 1)
    with pytest.raises(SingularComponentError):
        tgsvd_solve(F, np.ones(4), F.ell_max + 1)


# -- minimum gradient support -------------------------------------------------------

def test_mgs_constant_vector_has_zero_support():
    assert mgs_functional(np.full(7, 0.4), reg_matrix("d1", 7), 1e-2) == 0.0


@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3), st.sampled_from([-1.0, 1.0]))
def test_mgs_scale_invariance(seed, c, sign):
    q = np.random.default_rng(seed).uniform(0.1, 2.0, 12)
    L = reg_matrix("d1", 12)
    assert mgs_functional(sign * c * q, L, 0.1) == pytest.approx(mgs_functional(q, L, 0.1),
                                                                  rel=1e-12)


def test_mgs_counts_gradients_as_tau_vanishes():
    q = np.array([1.0, 1.0, 1.5, 1.5, 1.5, 0.8, 0.8, 2.0, 2.0, 2.0])
    L = reg_matrix("d1", q.size)
    k = np.count_nonzero(L @ q)
    assert abs(mgs_functional(q, L, 1e-8) - k) < 1e-3


@given(st.integers(0, 2**32 - 1), st.floats(1e-4, 10.0))
def test_mgs_weights_reproduce_functional(seed, tau):
    rng = np.random.default_rng(seed)
    q = rng.standard_normal(15)
    L = reg_matrix("d1", 15)
    D = mgs_weights(q, L, tau)
    assert np.linalg.norm(D @ L @ q) ** 2 == pytest.approx(mgs_functional(q, L, tau), rel=1e-12)


def test_mgs_weight_floor_keeps_weights_finite():
    q = np.array([1.0, 0.0, 1e-30, 2.0])
    D = mgs_weights(q, reg_matrix("d1", 4), 1e-2)
    assert np.all(np.isfinite(D)) and np.all(np.diag(D) > 0)


def test_mgs_rejects_bad_tau():
    with pytest.raises(ArgumentError):
        mgs_functional(np.ones(3), reg_matrix("d1", 3), 0.0)


def test_mgs_approaches_smooth_solution_for_large_tau(rng):
    # large tau: D ~ diag(1/(tau |q|)), a smooth D1 problem with column scaling
    n = 12
    A = rng.standard_normal((8, n))
    b = rng.standard_normal(8)
    q_prev = rng.uniform(0.5, 1.5, n)
    D1 = reg_matrix("d1", n)
    smooth = tgsvd_solve(gsvd(A, D1), b, 4)
    diffs = []
    for tau in (1e-2, 1e0, 1e2, 1e4):
        q = tgsvd_solve(gsvd(A, effective_reg_matrix("mgs", n, tau, q_prev)), b, 4)
        scaled = tgsvd_solve(gsvd(A, np.diag(1.0 / q_prev[:-1]) @ D1), b, 4)
        diffs.append(np.linalg.norm(q - scaled))
    assert diffs[-1] < 1e-6 * np.linalg.norm(smooth)
    assert all(a >= b - 1e-12 for a, b in zip(diffs, diffs[1:]))


def test_mgs_first_iteration_uses_plain_d1():
    np.testing.assert_array_equal(effective_reg_matrix("mgs", 6), reg_matrix("d1", 6))
