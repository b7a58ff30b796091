"""Small dense-matrix kernel.

Everything here works on float64 numpy arrays of dimension n <= 8.  The
functions are pure, so they can be called from parallel sweep workers.

Tolerances live in :class:`NumericPolicy`; pass a custom instance to tighten
or relax them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import InvalidInput, NumericalFailure, RankDeficiency


@dataclass(frozen=True)
class NumericPolicy:
    max_dim: int = 8
    sym_rtol: float = 1e-12  # asymmetry allowed in sym_eigvals, relative to ||S||_F
    solve_rtol: float = 1e-9  # residual bound factor for solve / least squares
    rank_rtol: float = 1e-9  # pivot threshold in the controllability rank test
    canonical_rtol: float = 1e-8  # Ac = P^-1 A P check
    reconstruction_rtol: float = 1e-8  # T J T^-1 = A + B K check
    cond_limit: float = 1e30  # hard ceiling on cond(T_lambda)
    tau_max_step: float = 1e-4
    tau_steps_per_estimate: int = 100
    tau_bisect_tol: float = 1e-10
    divergence_norm: float = 1e12
    event_refine_tol: float = 1e-9
    max_trigger_samples: int = 10_000  # runs longer than this are not sampled per trigger
    max_recorded_events: int = 100_000


DEFAULT_POLICY = NumericPolicy()


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    arr = np.array(M, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.size == 0:
        raise InvalidInput(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} has non-finite entries")
    return arr


def as_vector(v, name: str = "vector") -> np.ndarray:
    arr = np.array(v, dtype=float).reshape(-1)
    if arr.size == 0:
        raise InvalidInput(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} has non-finite entries")
    return arr


def _square(M, name):
    arr = as_matrix(M, name)
    if arr.shape[0] != arr.shape[1]:
        raise InvalidInput(f"{name} must be square, got shape {arr.shape}")
    return arr


# ---------------------------------------------------------------------------
# symmetric eigenproblem
# ---------------------------------------------------------------------------

def jacobi_eigh(S, max_sweeps: int = 60):
    """Cyclic Jacobi eigen-decomposition of a symmetric matrix.

    A rotation is skipped when ``|s_pq| <= eps * sqrt(|s_pp s_qq|)``; this
    keeps small eigenvalues of graded matrices accurate to working precision
    instead of to ``eps * max|s|``.

    Returns
    -------
    w : ndarray
        Eigenvalues in ascending order.
    Q : ndarray
        Orthogonal matrix with ``S = Q diag(w) Q^T``.
    """
    A = np.array(S, dtype=float)
    n = A.shape[0]
    V = np.eye(n)
    eps = np.finfo(float).eps
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0 or abs(apq) <= eps * math.sqrt(abs(A[p, p] * A[q, q])):
                    A[p, q] = A[q, p] = 0.0
                    continue
                rotated = True
                diff = float(A[q, q] - A[p, p])
                apq = float(apq)
                if abs(diff) > 1e150 * abs(apq):
                    # tiny rotation angle: t ~ 1 / (2 theta), theta itself would overflow
                    t = apq / diff
                else:
                    theta = diff / (2.0 * apq)
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                cp = A[:, p].copy()
                cq = A[:, q].copy()
                A[:, p] = c * cp - s * cq
                A[:, q] = s * cp + c * cq
                rp = A[p, :].copy()
                rq = A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                A[p, q] = A[q, p] = 0.0
                vp = V[:, p].copy()
                vq = V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
        if not rotated:
            break
    else:
        raise NumericalFailure("Jacobi iteration did not converge")
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def sym_eigvals(S, policy: NumericPolicy = DEFAULT_POLICY) -> np.ndarray:
    """Eigenvalues of a symmetric matrix, ascending."""
    S = _square(S, "S")
    scale = np.linalg.norm(S)
    if np.max(np.abs(S - S.T), initial=0.0) > policy.sym_rtol * scale:
        raise InvalidInput("sym_eigvals requires a symmetric matrix")
    return jacobi_eigh(0.5 * (S + S.T))[0]


def spectral_norm(M) -> float:
    """Largest singular value, from the top eigenvalue of M^T M."""
    M = as_matrix(M, "M")
    scale = float(np.max(np.abs(M)))
    if scale == 0.0:
        return 0.0
    Ms = M / scale
    G = Ms.T @ Ms if Ms.shape[0] >= Ms.shape[1] else Ms @ Ms.T
    top = jacobi_eigh(G)[0][-1]
    return scale * math.sqrt(max(top, 0.0))


# ---------------------------------------------------------------------------
# matrix exponential
# ---------------------------------------------------------------------------

def expm(M) -> np.ndarray:
    """Matrix exponential (scaling and squaring with Pade approximants)."""
    M = _square(M, "M")
    with np.errstate(over="ignore", invalid="ignore"):
        E = scipy.linalg.expm(M)
    if not np.all(np.isfinite(E)):
        raise NumericalFailure("matrix exponential overflowed")
    return E


# ---------------------------------------------------------------------------
# linear solves
# ---------------------------------------------------------------------------

def _pow2(x):
    return np.exp2(np.round(np.log2(x)))


def equilibrate(M, iterations: int = 30):
    """Power-of-two row/column scalings r, c with diag(r) M diag(c) balanced.

    Scaling by powers of two is exact, so graded matrices (entries spanning
    many decades, as T_lambda does) can be solved without losing the small
    entries.
    """
    M = np.abs(np.asarray(M, dtype=float))
    m, n = M.shape
    r = np.ones(m)
    c = np.ones(n)
    for _ in range(iterations):
        S = M * r[:, None] * c[None, :]
        rmax = S.max(axis=1)
        rmax[rmax == 0.0] = 1.0
        r = r / _pow2(np.sqrt(rmax))
        S = M * r[:, None] * c[None, :]
        cmax = S.max(axis=0)
        cmax[cmax == 0.0] = 1.0
        c = c / _pow2(np.sqrt(cmax))
        if np.all(np.abs(np.log2(rmax)) <= 1) and np.all(np.abs(np.log2(cmax)) <= 1):
            break
    return r, c


def _check_residual(M, v, b, policy, what):
    resid = float(np.linalg.norm(M @ v - b))
    bound = policy.solve_rtol * (spectral_norm(M) * np.linalg.norm(v) + np.linalg.norm(b))
    if not np.isfinite(resid) or resid > bound:
        raise RankDeficiency(f"{what}: residual {resid:.3e} exceeds {bound:.3e}", residual=resid)


def solve(M, b, policy: NumericPolicy = DEFAULT_POLICY) -> np.ndarray:
    """Solve M v = b for square nonsingular M."""
    M = _square(M, "M")
    b = as_vector(b, "b")
    if b.size != M.shape[0]:
        raise InvalidInput("dimension mismatch in solve")
    r, c = equilibrate(M)
    try:
        y = np.linalg.solve(M * r[:, None] * c[None, :], b * r)
    except np.linalg.LinAlgError as exc:
        raise RankDeficiency(f"singular matrix: {exc}") from exc
    v = y * c
    _check_residual(M, v, b, policy, "solve")
    return v


def least_squares_particular(M, b, pinned: int, policy: NumericPolicy = DEFAULT_POLICY) -> np.ndarray:
    """Particular solution of M v = b with coordinate ``pinned`` fixed to 0.

    The remaining unknowns are found by least squares on the equilibrated
    system; the result is rejected if it does not actually satisfy M v = b.
    """
    M = as_matrix(M, "M")
    b = as_vector(b, "b")
    m, n = M.shape
    if b.size != m:
        raise InvalidInput("dimension mismatch in least_squares_particular")
    if not 0 <= pinned < n:
        raise InvalidInput(f"pinned index {pinned} out of range for {n} unknowns")
    keep = [j for j in range(n) if j != pinned]
    Mr = M[:, keep]
    r, c = equilibrate(Mr)
    y = np.linalg.lstsq(Mr * r[:, None] * c[None, :], b * r, rcond=None)[0]
    v = np.zeros(n)
    v[keep] = y * c
    _check_residual(M, v, b, policy, "pinned least squares")
    return v


def inv(M) -> np.ndarray:
    """Inverse through power-of-two equilibration (entrywise accurate for graded M)."""
    M = _square(M, "M")
    r, c = equilibrate(M)
    try:
        Si = np.linalg.inv(M * r[:, None] * c[None, :])
    except np.linalg.LinAlgError as exc:
        raise RankDeficiency(f"singular matrix: {exc}") from exc
    Mi = Si * c[:, None] * r[None, :]
    if not np.all(np.isfinite(Mi)):
        raise NumericalFailure("inverse is not finite")
    return Mi


# ---------------------------------------------------------------------------
# characteristic polynomial
# ---------------------------------------------------------------------------

def charpoly_exact(M) -> list[Fraction]:
    """Coefficients [1, c1, ..., cn] of det(sI - M), exact in rationals.

    Faddeev-LeVerrier on the exact binary values of the float entries; at
    n <= 8 the rational growth is harmless.
    """
    M = _square(M, "M")
    n = M.shape[0]
    A = [[Fraction(float(x)) for x in row] for row in M]
    Mk = [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    coeffs = [Fraction(1)]
    for k in range(1, n + 1):
        AM = [[sum(A[i][l] * Mk[l][j] for l in range(n)) for j in range(n)] for i in range(n)]
        ck = -sum(AM[i][i] for i in range(n)) / k
        coeffs.append(ck)
        Mk = [[AM[i][j] + (ck if i == j else 0) for j in range(n)] for i in range(n)]
    return coeffs


def charpoly(M) -> np.ndarray:
    return np.array([float(c) for c in charpoly_exact(M)])


# ---------------------------------------------------------------------------
# fixed-step RK4
# ---------------------------------------------------------------------------

VectorField = Callable[[float, np.ndarray], np.ndarray]


def rk4_step(f: VectorField, t: float, y: np.ndarray, h: float) -> np.ndarray:
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_integrate(f: VectorField, y0, t0: float, t1: float, h: float) -> np.ndarray:
    """Classical RK4 from t0 to t1; the last step is shortened to land on t1."""
    if not h > 0:
        raise InvalidInput("step h must be positive")
    if t1 < t0:
        raise InvalidInput("t1 must not precede t0")
    y = as_vector(y0, "y0")
    nfull = int(math.floor((t1 - t0) / h))
    t = t0
    for i in range(nfull):
        y = rk4_step(f, t, y, h)
        t = t0 + (i + 1) * h
        if not np.all(np.isfinite(y)):
            raise NumericalFailure(f"non-finite state at t={t:g}")
    last = t1 - t
    if last > 1e-15 * max(1.0, abs(t1)):
        y = rk4_step(f, t, y, last)
        if not np.all(np.isfinite(y)):
            raise NumericalFailure(f"non-finite state at t={t1:g}")
    return y
