"""Gain synthesis with every closed-loop pole at -lambda, and its Jordan data."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import InadmissibleLambda, InvalidInput, NumericalFailure
from .numerics import DEFAULT_POLICY, NumericPolicy
from .plant import CanonicalSystem


@dataclass(frozen=True)
class GainLambda:
    """k_i = C(n, i) lambda^i and the applied row u = u_row . x_c."""

    lam: float
    k: np.ndarray
    u_row: np.ndarray

    @property
    def n(self) -> int:
        return self.k.size

    def BK(self, Bc) -> np.ndarray:
        return np.asarray(Bc, dtype=float).reshape(-1, 1) @ self.u_row.reshape(1, -1)


def synthesize_gain(n: int, lam: float, a) -> GainLambda:
    if not (math.isfinite(lam) and lam > 0):
        raise InvalidInput(f"lambda must be positive, got {lam}")
    a = numerics.as_vector(a, "a")
    if a.size != n:
        raise InvalidInput(f"expected {n} characteristic coefficients, got {a.size}")
    k = np.array([math.comb(n, i) * lam**i for i in range(1, n + 1)])
    # [-k_n + a_n, ..., -k_1 + a_1]
    u_row = -k[::-1] + a[::-1]
    return GainLambda(lam=float(lam), k=k, u_row=u_row)


def closed_loop(sys: CanonicalSystem, g: GainLambda) -> np.ndarray:
    if g.n != sys.n:
        raise InvalidInput(f"gain has dimension {g.n}, system has {sys.n}")
    return sys.Ac + g.BK(sys.Bc)


def binomial_charpoly(n: int, lam: float) -> np.ndarray:
    """Coefficients of (s + lambda)^n, leading 1 first."""
    return np.array([math.comb(n, i) * lam**i for i in range(n + 1)])


def shift_matrix(n: int) -> np.ndarray:
    return np.eye(n, k=1)


@dataclass(frozen=True)
class JordanData:
    """A + B K_lambda = T (-lambda I + N) T^-1 with T = [v_1 ... v_n]."""

    T_lambda: np.ndarray
    T_lambda_inv: np.ndarray
    N: np.ndarray
    lam: float

    @property
    def J(self) -> np.ndarray:
        n = self.N.shape[0]
        return -self.lam * np.eye(n) + self.N

    @property
    def norm_N(self) -> float:
        return numerics.spectral_norm(self.N)

    def reconstruct(self) -> np.ndarray:
        return self.T_lambda @ self.J @ self.T_lambda_inv


def jordan_chain(Acl, lam: float, policy: NumericPolicy = DEFAULT_POLICY) -> JordanData:
    """Eigenvector chain of the defective eigenvalue -lambda.

    v_1 spans the null space of Acl + lambda I with first component 1; each
    v_{j+1} solves (Acl + lambda I) v_{j+1} = v_j with its last coordinate
    pinned to 0.  This reproduces the known closed forms for companion
    matrices, e.g. v_1 = (1, -lambda, lambda^2), v_2 = (2/lambda, -1, 0).
    """
    Acl = numerics.as_matrix(Acl, "Acl")
    n = Acl.shape[0]
    M = Acl + lam * np.eye(n)
    try:
        v1 = np.zeros(n)
        v1[0] = 1.0
        if n > 1:
            v1 = v1 + numerics.least_squares_particular(M, -M[:, 0], pinned=0, policy=policy)
        chain = [v1]
        for _ in range(n - 1):
            chain.append(numerics.least_squares_particular(M, chain[-1], pinned=n - 1, policy=policy))
        T = np.column_stack(chain)
        T_inv = numerics.inv(T)
    except NumericalFailure as exc:
        raise NumericalFailure(f"Jordan chain failed at lambda={lam:g}: {exc}") from exc
    jd = JordanData(T_lambda=T, T_lambda_inv=T_inv, N=shift_matrix(n), lam=float(lam))
    cond = numerics.spectral_norm(T) * numerics.spectral_norm(T_inv)
    if not math.isfinite(cond) or cond > policy.cond_limit:
        raise NumericalFailure(f"cond(T_lambda) = {cond:.3e} exceeds {policy.cond_limit:.1e}")
    err = numerics.spectral_norm(jd.reconstruct() - Acl) / numerics.spectral_norm(Acl)
    if err > policy.reconstruction_rtol:
        raise NumericalFailure(f"Jordan reconstruction error {err:.2e} at lambda={lam:g}")
    return jd


@dataclass(frozen=True)
class TriggerThreshold:
    sigma: float
    F: float

    def violated(self, e_lam, x_lam) -> bool:
        return float(e_lam @ e_lam) > self.F**2 * float(x_lam @ x_lam)


def trigger_threshold(jd: JordanData, g: GainLambda, B, sigma: float) -> TriggerThreshold:
    """F(lambda) = sqrt(sigma (2 lambda - 1 - 2||N||)) / ||T^-1 B K T||."""
    if not 0 < sigma < 1:
        raise InvalidInput(f"sigma must lie in (0, 1), got {sigma}")
    margin = 2.0 * g.lam - 1.0 - 2.0 * jd.norm_N
    if margin <= 0:
        raise InadmissibleLambda(
            f"lambda={g.lam:g} must exceed ||N|| + 1/2 = {jd.norm_N + 0.5:g}"
        )
    Bbar = jd.T_lambda_inv @ g.BK(B) @ jd.T_lambda
    return TriggerThreshold(sigma=sigma, F=math.sqrt(sigma * margin) / numerics.spectral_norm(Bbar))


def is_admissible(lam: float, n: int) -> bool:
    norm_N = 1.0 if n >= 2 else 0.0
    return lam > norm_N + 0.5
