import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ctrl_dos import numerics
from ctrl_dos.errors import InvalidInput, NumericalFailure, RankDeficiency

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def square(n_min=1, n_max=6):
    return st.integers(n_min, n_max).flatmap(lambda n: arrays(float, (n, n), elements=finite))


def power_iteration_norm(M, iters=2000):
    rng = np.random.default_rng(0)
    v = rng.standard_normal(M.shape[1])
    G = M.T @ M
    for _ in range(iters):
        w = G @ v
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
    return math.sqrt(v @ G @ v)


# --- symmetric eigenvalues -------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(square())
def test_jacobi_matches_lapack(M):
    S = M + M.T
    w, Q = numerics.jacobi_eigh(S)
    np.testing.assert_allclose(w, np.linalg.eigvalsh(S), atol=1e-10 * max(1.0, np.abs(S).max()))
    np.testing.assert_allclose(Q.T @ Q, np.eye(S.shape[0]), atol=1e-10)
    np.testing.assert_allclose(Q @ np.diag(w) @ Q.T, S, atol=1e-9 * max(1.0, np.abs(S).max()))


def test_jacobi_keeps_tiny_eigenvalue_accurate():
    # graded diagonal-dominant matrix; the small eigenvalue is determined to full relative accuracy
    S = np.array([[1e20, 1e9], [1e9, 1.0]])
    w = numerics.jacobi_eigh(S)[0]
    exact = mpmath.mpf(1) - mpmath.mpf(10) ** 18 / mpmath.mpf(10) ** 20
    assert abs(w[0] - float(exact)) <= 1e-14 * float(exact)


def test_sym_eigvals_rejects_asymmetric():
    with pytest.raises(InvalidInput):
        numerics.sym_eigvals(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_sym_eigvals_two_by_two_example():
    np.testing.assert_allclose(numerics.sym_eigvals([[2.0, 1.0], [1.0, 2.0]]), [1.0, 3.0], atol=1e-14)


# --- spectral norm ---------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(square())
def test_spectral_norm_matches_svd(M):
    expected = np.linalg.svd(M, compute_uv=False)[0] if M.any() else 0.0
    assert numerics.spectral_norm(M) == pytest.approx(expected, rel=1e-10, abs=1e-12)


def test_spectral_norm_power_iteration_oracle():
    M = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [-1e6, -3e4, -300.0]])
    assert numerics.spectral_norm(M) == pytest.approx(power_iteration_norm(M), rel=1e-10)


def test_spectral_norm_of_shift_is_one():
    for n in range(2, 7):
        assert numerics.spectral_norm(np.eye(n, k=1)) == pytest.approx(1.0, abs=1e-15)


# --- matrix exponential ----------------------------------------------------

def test_expm_against_mpmath():
    rng = np.random.default_rng(3)
    M = rng.standard_normal((4, 4))
    ref = mpmath.expm(mpmath.matrix(M.tolist()))
    ref = np.array(ref.tolist(), dtype=float)
    np.testing.assert_allclose(numerics.expm(M), ref, rtol=1e-12, atol=1e-13)


def test_expm_nilpotent_is_finite_series():
    N = np.eye(3, k=1)
    np.testing.assert_allclose(numerics.expm(N), np.eye(3) + N + N @ N / 2, atol=1e-15)


def test_expm_overflow_raises():
    with pytest.raises(NumericalFailure):
        numerics.expm(np.array([[1000.0]]))


# --- solves ----------------------------------------------------------------

def test_solve_graded_system():
    lam = 1000.0
    M = np.array([[1.0, 2 / lam, 3 / lam**2], [-lam, -1.0, -1 / lam], [lam**2, 0.0, 0.0]])
    x = np.array([1.0, -2.0, 3.0])
    np.testing.assert_allclose(numerics.solve(M, M @ x), x, rtol=1e-10)


def test_solve_singular_raises():
    with pytest.raises(RankDeficiency):
        numerics.solve(np.array([[1.0, 2.0], [2.0, 4.0]]), [1.0, 0.0])


def test_least_squares_particular_pins_coordinate():
    M = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 1.0]])
    v = numerics.least_squares_particular(M, [2.0, 3.0], pinned=2)
    assert v[2] == 0.0
    np.testing.assert_allclose(M @ v, [2.0, 3.0], atol=1e-14)


def test_least_squares_particular_inconsistent_raises():
    M = np.array([[1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(RankDeficiency):
        numerics.least_squares_particular(M, [1.0, 2.0], pinned=1)


def test_inv_roundtrip():
    rng = np.random.default_rng(5)
    M = rng.standard_normal((5, 5)) + 5 * np.eye(5)
    np.testing.assert_allclose(numerics.inv(M) @ M, np.eye(5), atol=1e-12)


# --- characteristic polynomial --------------------------------------------

def test_charpoly_companion_exact():
    a = [6, -4, 3, -10, 7]
    C = np.eye(5, k=1)
    C[-1] = -np.array(a[::-1], dtype=float)
    assert [int(c) for c in numerics.charpoly_exact(C)] == [1] + a


@settings(max_examples=40, deadline=None)
@given(arrays(float, (4,), elements=st.floats(-3, 3, allow_nan=False)))
def test_charpoly_roots_oracle(roots):
    # build a matrix with known eigenvalues; charpoly coefficients follow from the roots
    rng = np.random.default_rng(1)
    Q = rng.standard_normal((4, 4)) + 4 * np.eye(4)
    M = Q @ np.diag(roots) @ np.linalg.inv(Q)
    np.testing.assert_allclose(numerics.charpoly(M), np.poly(roots), atol=1e-8 * (1 + np.abs(M).max() ** 4))


# --- RK4 -------------------------------------------------------------------

def test_rk4_fourth_order_richardson():
    f = lambda t, y: -2.0 * y + np.sin(t)
    exact = lambda t: (2 * np.sin(t) - np.cos(t)) / 5 + (1 + 1 / 5) * np.exp(-2 * t)
    errs = [abs(numerics.rk4_integrate(f, [1.0], 0.0, 1.0, h)[0] - exact(1.0)) for h in (0.1, 0.05, 0.025)]
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert all(3.8 < p < 4.2 for p in orders)


def test_rk4_lands_on_endpoint():
    f = lambda t, y: np.ones_like(y)
    assert numerics.rk4_integrate(f, [0.0], 0.0, 0.35, 0.1)[0] == pytest.approx(0.35, abs=1e-15)


def test_rk4_blowup_raises():
    f = lambda t, y: y * y
    with np.errstate(over="ignore", invalid="ignore"), pytest.raises(NumericalFailure):
        numerics.rk4_integrate(f, [1.0], 0.0, 5.0, 0.01)


def test_validation_rejects_nan():
    with pytest.raises(InvalidInput):
        numerics.as_matrix([[np.nan]])
