"""Per-period decay coefficient C(lambda) and the resilience threshold search."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Sequence

import numpy as np

from . import numerics
from .controller import (GainLambda, JordanData, closed_loop, jordan_chain,
                         synthesize_gain, trigger_threshold)
from .errors import InvalidInput, NumericalFailure
from .numerics import DEFAULT_POLICY, NumericPolicy
from .plant import CanonicalSystem, JammerProfile
from .trigger import TauResult, compute_tau


@dataclass(frozen=True)
class MuValue:
    mu_raw: float
    mu_M: float


def mu(M) -> MuValue:
    """Largest eigenvalue of the symmetric part, and the shifted |mu| + 1.

    ||expm(M)|| <= exp(mu_raw) <= exp(mu_M).
    """
    M = numerics.as_matrix(M, "M")
    raw = float(numerics.sym_eigvals(0.5 * (M + M.T))[-1])
    return MuValue(mu_raw=raw, mu_M=abs(raw) + 1.0)


@dataclass(frozen=True)
class DecayReport:
    lam: float
    tau_lambda: float
    C1: float
    C2: float
    C3: float
    C: float


def lambda_min_gram_inv(jd: JordanData) -> float:
    """lambda_min((T^-1)^T T^-1), evaluated as 1 / lambda_max(T T^T).

    Both are the same number; the second form keeps full relative accuracy
    when T is badly scaled (cond(T) reaches 1e26 for the 5x5 example).
    """
    T = jd.T_lambda
    scale = float(np.max(np.abs(T)))
    G = (T / scale) @ (T / scale).T
    return 1.0 / (scale**2 * float(numerics.sym_eigvals(G)[-1]))


def decay_coefficient(
    sys: CanonicalSystem,
    g: GainLambda,
    jd: JordanData,
    tau: TauResult | float,
    j: JammerProfile,
    sigma: float,
    *,
    c3_half_exponent: bool = False,
) -> DecayReport:
    """C(lambda) = C1 (C2 + C3) for the worst-case jammer (T_off = T_off_cr).

    With r = (1 - sigma)(2 lambda - 1 - 2||N||) and
    kappa = ||T^-1|| / sqrt(lambda_min((T^-1)^T T^-1)):

        C1 = kappa exp(-r T_off_cr / 4)
        C2 = ||B K|| / mu_A (exp(T_on_cr mu_A) - 1)
        C3 = kappa exp(-r tau) exp(T_on_cr mu_A)

    ``c3_half_exponent`` uses exp(-r tau / 2) in C3 instead.
    """
    if not 0 < sigma < 1:
        raise InvalidInput(f"sigma must lie in (0, 1), got {sigma}")
    tau_val = tau.tau_lambda if isinstance(tau, TauResult) else float(tau)
    rate = (1.0 - sigma) * (2.0 * g.lam - 1.0 - 2.0 * jd.norm_N)
    kappa = numerics.spectral_norm(jd.T_lambda_inv) / math.sqrt(lambda_min_gram_inv(jd))
    mu_A = mu(sys.Ac).mu_M
    norm_BK = numerics.spectral_norm(g.BK(sys.Bc))
    c3_rate = rate / 2.0 if c3_half_exponent else rate
    try:
        grow = math.exp(j.T_on_cr * mu_A)
        C1 = kappa * math.exp(-rate * j.T_off_cr / 4.0)
        C2 = norm_BK / mu_A * math.expm1(j.T_on_cr * mu_A)
        C3 = kappa * math.exp(-c3_rate * tau_val) * grow
    except OverflowError as exc:
        raise NumericalFailure(f"C(lambda) overflowed at lambda={g.lam:g}") from exc
    return DecayReport(lam=g.lam, tau_lambda=tau_val, C1=C1, C2=C2, C3=C3, C=C1 * (C2 + C3))


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepResult:
    reports: tuple[DecayReport, ...]
    lambda_bar: float | None

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([r.lam for r in self.reports])

    @property
    def C(self) -> np.ndarray:
        return np.array([r.C for r in self.reports])


def evaluate_lambda(
    lam: float,
    sys: CanonicalSystem,
    j: JammerProfile,
    sigma: float,
    c3_half_exponent: bool = False,
    tau_stop_at_F: bool = False,
    policy: NumericPolicy = DEFAULT_POLICY,
) -> DecayReport:
    """One pass of the loop body: gain, Jordan data, tau_lambda, C(lambda)."""
    g = synthesize_gain(sys.n, lam, sys.a)
    jd = jordan_chain(closed_loop(sys, g), lam, policy)
    level = trigger_threshold(jd, g, sys.Bc, sigma).F if tau_stop_at_F else None
    tau = compute_tau(sys, g, sigma, level=level, horizon=max(10.0, j.T), policy=policy)
    return decay_coefficient(sys, g, jd, tau, j, sigma, c3_half_exponent=c3_half_exponent)


def find_lambda_bar(reports: Sequence[DecayReport]) -> float | None:
    """Smallest grid lambda from which every later grid point has C < 1."""
    bar = None
    for r in reversed(reports):
        if r.C < 1.0:
            bar = r.lam
        else:
            break
    return bar


def sweep(
    sys: CanonicalSystem,
    j: JammerProfile,
    sigma: float,
    grid: Sequence[float],
    *,
    jobs: int = 1,
    c3_half_exponent: bool = False,
    tau_stop_at_F: bool = False,
    policy: NumericPolicy = DEFAULT_POLICY,
) -> SweepResult:
    grid = [float(x) for x in grid]
    if not grid:
        raise InvalidInput("empty lambda grid")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise InvalidInput("lambda grid must be strictly ascending")
    norm_N = 1.0 if sys.n >= 2 else 0.0
    if grid[0] <= norm_N + 0.5:
        raise InvalidInput(f"every lambda must exceed {norm_N + 0.5:g}")
    work = partial(evaluate_lambda, sys=sys, j=j, sigma=sigma, c3_half_exponent=c3_half_exponent,
                   tau_stop_at_F=tau_stop_at_F, policy=policy)
    if jobs > 1 and len(grid) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(work, grid, chunksize=max(1, len(grid) // (4 * jobs))))
    else:
        reports = [work(lam) for lam in grid]
    return SweepResult(reports=tuple(reports), lambda_bar=find_lambda_bar(reports))


def interpolate_lambda_for_C(result: SweepResult, target_C: float) -> float:
    """Invert C(lambda) on the strictly decreasing tail of the sweep.

    Piecewise-linear in (lambda, C); a grid value of C maps back to its grid
    lambda exactly.
    """
    lams = result.lambdas
    Cs = result.C
    start = len(Cs) - 1
    while start > 0 and Cs[start - 1] > Cs[start]:
        start -= 1
    hi_C, lo_C = Cs[start], Cs[-1]
    if not lo_C <= target_C <= hi_C:
        raise InvalidInput(
            f"target C={target_C:g} outside the decreasing tail [{lo_C:g}, {hi_C:g}]"
        )
    for i in range(start, len(Cs)):
        if Cs[i] == target_C:
            return float(lams[i])
        if Cs[i] > target_C > Cs[i + 1]:
            w = (Cs[i] - target_C) / (Cs[i] - Cs[i + 1])
            return float(lams[i] + w * (lams[i + 1] - lams[i]))
    raise AssertionError("unreachable: target inside tail range")


def lambda_grid(start: float, stop: float, step: float) -> list[float]:
    """start, start + step, ..., up to stop inclusive, free of float drift."""
    if not step > 0:
        raise InvalidInput("lambda_step must be positive")
    if stop < start:
        raise InvalidInput("lambda_stop must not be below lambda_start")
    count = int(math.floor((stop - start) / step + 1e-9))
    return [round(start + k * step, 12) for k in range(count + 1)]
