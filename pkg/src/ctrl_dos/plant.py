"""Plant model: LTI pair, controllable canonical form, PWM jammer."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import numerics
from .errors import InvalidInput, NotControllable, NumericalFailure
from .numerics import DEFAULT_POLICY, NumericPolicy


def controllability_matrix(A, B) -> np.ndarray:
    n = A.shape[0]
    cols = [B[:, 0]]
    for _ in range(n - 1):
        cols.append(A @ cols[-1])
    return np.column_stack(cols)


def controllability_rank(A, B, policy: NumericPolicy = DEFAULT_POLICY) -> int:
    """Numerical rank of [B, AB, ..., A^{n-1}B] from column-pivoted QR."""
    W = controllability_matrix(A, B)
    # columns A^k B grow like ||A||^k; normalise so the pivots are comparable
    norms = np.linalg.norm(W, axis=0)
    norms[norms == 0.0] = 1.0
    R = scipy.linalg.qr(W / norms, mode="r", pivoting=True)[0]
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        return 0
    return int(np.sum(diag > policy.rank_rtol * diag[0]))


@dataclass(frozen=True)
class LtiSystem:
    """x' = A x + B u with a single input."""

    A: np.ndarray
    B: np.ndarray
    policy: NumericPolicy = field(default=DEFAULT_POLICY, repr=False, compare=False)

    def __post_init__(self):
        A = numerics.as_matrix(self.A, "A")
        B = numerics.as_matrix(self.B, "B")
        n = A.shape[0]
        if A.shape != (n, n):
            raise InvalidInput(f"A must be square, got {A.shape}")
        if B.shape == (1, n) and n > 1:
            B = B.T
        if B.shape != (n, 1):
            raise InvalidInput(f"B must be {n}x1 for a single-input system, got {B.shape}")
        if n > self.policy.max_dim:
            raise InvalidInput(f"dimension {n} exceeds the cap of {self.policy.max_dim}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        rank = controllability_rank(A, B, self.policy)
        if rank < n:
            raise NotControllable(rank, n)

    @property
    def n(self) -> int:
        return self.A.shape[0]


def companion(a) -> np.ndarray:
    """Companion matrix whose last row is (-a_n, ..., -a_1)."""
    a = numerics.as_vector(a, "a")
    n = a.size
    Ac = np.eye(n, k=1)
    Ac[-1, :] = -a[::-1]
    return Ac


@dataclass(frozen=True)
class CanonicalSystem:
    """Controllable canonical form with x = P x_c.

    ``a[i-1]`` is a_i, the coefficient of s^(n-i) in det(sI - A).
    """

    Ac: np.ndarray
    Bc: np.ndarray
    P: np.ndarray
    a: np.ndarray

    @property
    def n(self) -> int:
        return self.Ac.shape[0]

    @property
    def P_inv(self) -> np.ndarray:
        return numerics.inv(self.P)

    def original(self) -> LtiSystem:
        Pi = self.P_inv
        return LtiSystem(self.P @ self.Ac @ Pi, self.P @ self.Bc)


def to_canonical(sys: LtiSystem, policy: NumericPolicy = DEFAULT_POLICY) -> CanonicalSystem:
    """Similarity transform into controllable canonical form.

    Raises NotControllable if the controllability matrix is rank deficient.
    """
    n = sys.n
    rank = controllability_rank(sys.A, sys.B, policy)
    if rank < n:
        raise NotControllable(rank, n)
    a = numerics.charpoly(sys.A)[1:]
    Ac = companion(a)
    Bc = np.zeros((n, 1))
    Bc[-1, 0] = 1.0
    if np.array_equal(sys.A, Ac) and np.array_equal(sys.B, Bc):
        P = np.eye(n)
    else:
        W = controllability_matrix(sys.A, sys.B)
        Wc = controllability_matrix(Ac, Bc)
        # P Wc = W
        P = np.linalg.solve(Wc.T, W.T).T
    canon = CanonicalSystem(Ac=Ac, Bc=Bc, P=P, a=a)
    check = numerics.inv(P) @ sys.A @ P
    scale = max(numerics.spectral_norm(Ac), 1.0)
    if numerics.spectral_norm(check - Ac) > policy.canonical_rtol * scale:
        raise NumericalFailure("canonical transform is inaccurate (ill-conditioned controllability matrix)")
    return canon


# ---------------------------------------------------------------------------
# jammer
# ---------------------------------------------------------------------------

class JammerState(enum.Enum):
    SLEEPING = "sleeping"
    ACTIVE = "active"


@dataclass(frozen=True)
class JammerProfile:
    """Worst-case PWM jammer: sleeps for T_off_cr at the start of every period T."""

    T: float
    T_off_cr: float

    def __post_init__(self):
        if not (math.isfinite(self.T) and self.T > 0):
            raise InvalidInput(f"jammer period must be positive, got {self.T}")
        if not (0 < self.T_off_cr < self.T):
            raise InvalidInput(f"need 0 < T_off_cr < T, got T_off_cr={self.T_off_cr}, T={self.T}")

    @property
    def T_on_cr(self) -> float:
        return self.T - self.T_off_cr

    def phase(self, t: float) -> float:
        return math.fmod(t, self.T)

    def in_sleep_window(self, t: float, tol: float = 0.0) -> bool:
        """Closed-window test [(n-1)T, (n-1)T + T_off_cr], used for trigger validation."""
        ph = self.phase(t)
        return ph <= self.T_off_cr + tol or ph >= self.T - tol


def jammer_state(j: JammerProfile, t: float) -> JammerState:
    """Sleeping iff t mod T lies in [0, T_off_cr); the boundary itself is Active."""
    if t < 0:
        raise InvalidInput("time must be non-negative")
    return JammerState.SLEEPING if j.phase(t) < j.T_off_cr else JammerState.ACTIVE
