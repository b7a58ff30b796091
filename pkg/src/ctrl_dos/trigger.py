"""Minimal inter-event time tau_lambda and the jammer-aware trigger schedule."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import numerics
from .controller import GainLambda, closed_loop
from .errors import InvalidInput, LambdaTooSmall, NoCrossing
from .numerics import DEFAULT_POLICY, NumericPolicy
from .plant import CanonicalSystem, JammerProfile


@dataclass(frozen=True)
class TauResult:
    tau_lambda: float
    phi_trace: list[tuple[float, float]] | None = None
    step: float = float("nan")


def phi_coefficients(sys: CanonicalSystem, g: GainLambda) -> tuple[float, float]:
    """(||A + B K||, ||B K||), the two norms driving the phi ODE."""
    return numerics.spectral_norm(closed_loop(sys, g)), numerics.spectral_norm(g.BK(sys.Bc))


def phi_rhs(a: float, c: float):
    def f(t, y):
        return a + (a + c) * y + c * y * y
    return f


def _first_crossing(f, level, h, horizon, keep_trace):
    """March RK4 with step h until phi >= level; return (t_k, phi_k, trace)."""
    y = np.zeros(1)
    t = 0.0
    k = 0
    trace = [(0.0, 0.0)] if keep_trace else None
    while True:
        y_next = numerics.rk4_step(f, t, y, h)
        if not np.isfinite(y_next[0]):
            raise NoCrossing(f"phi became non-finite near t={t:g} before reaching {level:g}")
        if y_next[0] >= level:
            return t, y, trace
        k += 1
        t = k * h
        y = y_next
        if trace is not None:
            trace.append((t, float(y[0])))
        if t > horizon:
            raise NoCrossing(f"phi did not reach {level:g} within horizon {horizon:g}")


def compute_tau(
    sys: CanonicalSystem,
    g: GainLambda,
    sigma: float,
    *,
    level: float | None = None,
    horizon: float = 10.0,
    keep_trace: bool = False,
    step: float | None = None,
    policy: NumericPolicy = DEFAULT_POLICY,
) -> TauResult:
    """First time the phi ODE reaches ``level`` (sigma by default).

    phi' = ||A+BK|| + (||A+BK|| + ||BK||) phi + ||BK|| phi^2, phi(0) = 0, is
    marched with fixed-step RK4.  The step is min(tau_max_step, estimate/100)
    where the estimate comes from a coarse pass; the crossing is then located
    by bisection on the length of the final RK4 step.
    """
    if not 0 < sigma < 1:
        raise InvalidInput(f"sigma must lie in (0, 1), got {sigma}")
    level = sigma if level is None else level
    if not level > 0:
        raise InvalidInput("crossing level must be positive")
    a, c = phi_coefficients(sys, g)
    f = phi_rhs(a, c)
    if step is None:
        # phi' >= a, so level / a bounds tau from above
        coarse = (level / a) / 20.0
        t_c, _, _ = _first_crossing(f, level, coarse, horizon, False)
        estimate = t_c + coarse
        step = min(policy.tau_max_step, estimate / policy.tau_steps_per_estimate)
    t_k, y_k, trace = _first_crossing(f, level, step, horizon, keep_trace)

    lo, hi = 0.0, step
    tol = min(policy.tau_bisect_tol, 1e-9 * step)
    for _ in range(200):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if numerics.rk4_step(f, t_k, y_k, mid)[0] >= level:
            hi = mid
        else:
            lo = mid
    tau = t_k + 0.5 * (lo + hi)
    if trace is not None:
        trace.append((tau, level))
    return TauResult(tau_lambda=tau, phi_trace=trace, step=step)


def tau_closed_form(a: float, c: float, level: float) -> float:
    """Exact crossing time of the phi ODE.

    The right-hand side factors as (c phi + a)(phi + 1), which separates.
    """
    d = a - c
    base = level / (c * level + a)
    x = d * base
    if x == 0.0:
        return base
    # log((level+1) a / (c level + a)) / d, rewritten to survive a ~ c
    return base * math.log1p(x) / x


# ---------------------------------------------------------------------------
# schedule
# ---------------------------------------------------------------------------

class EntryKind(enum.Enum):
    MULTIPLE = "multiple"
    PERIOD_END = "period_end"


@dataclass(frozen=True)
class ScheduleEntry:
    time: float
    kind: EntryKind
    index: int  # l for MULTIPLE, n for PERIOD_END


@dataclass(frozen=True)
class PeriodRun:
    """Trigger instants of one jammer period, kept in closed form.

    The multiples are offset + l * tau for l in [l_first, l_last] (empty when
    l_last < l_first), followed by the period end n T.
    """

    n: int
    offset: float
    l_first: int
    l_last: int
    end_time: float

    @property
    def count(self) -> int:
        return max(0, self.l_last - self.l_first + 1)

    def multiple_time(self, l: int, tau: float) -> float:
        return self.offset + l * tau


@dataclass(frozen=True)
class TriggerSchedule:
    tau: float
    T: float
    T_off_cr: float
    resync_multiples: bool
    runs: tuple[PeriodRun, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return sum(r.count + 1 for r in self.runs)

    def entries(self) -> Iterator[ScheduleEntry]:
        for run in self.runs:
            for l in range(run.l_first, run.l_last + 1):
                yield ScheduleEntry(run.multiple_time(l, self.tau), EntryKind.MULTIPLE, l)
            yield ScheduleEntry(run.end_time, EntryKind.PERIOD_END, run.n)

    @property
    def times(self) -> list[float]:
        return [e.time for e in self.entries()]

    def period_entries(self, n: int) -> list[ScheduleEntry]:
        run = self.runs[n - 1]
        out = [ScheduleEntry(run.multiple_time(l, self.tau), EntryKind.MULTIPLE, l)
               for l in range(run.l_first, run.l_last + 1)]
        out.append(ScheduleEntry(run.end_time, EntryKind.PERIOD_END, n))
        return out


def _multiples_in(lo: float, hi: float, tau: float, tol: float, *, open_lo: bool) -> tuple[int, int]:
    """Integer range of l with lo <= l tau <= hi (lo excluded when open_lo)."""
    l_hi = math.floor(hi / tau)
    while (l_hi + 1) * tau <= hi + tol:
        l_hi += 1
    while l_hi * tau > hi + tol:
        l_hi -= 1
    l_lo = math.ceil(lo / tau)
    while l_lo > 0 and (l_lo - 1) * tau >= lo - tol:
        l_lo -= 1
    while l_lo * tau < lo - tol:
        l_lo += 1
    if open_lo:
        while l_lo * tau <= lo + tol:
            l_lo += 1
    return max(l_lo, 1), l_hi


def build_schedule(
    tau: TauResult | float,
    j: JammerProfile,
    n_periods: int,
    *,
    resync_multiples: bool = False,
) -> TriggerSchedule:
    """Trigger instants l tau inside each closed sleep window, plus every n T.

    By default l counts globally from the first period on, so the multiples
    drift relative to the windows when tau and T are incommensurate.  With
    ``resync_multiples`` the count restarts at every period start.  An instant
    that coincides with the previous period end is listed only once.
    """
    tau_val = tau.tau_lambda if isinstance(tau, TauResult) else float(tau)
    if not (math.isfinite(tau_val) and tau_val > 0):
        raise InvalidInput(f"tau must be positive, got {tau_val}")
    if n_periods < 1:
        raise InvalidInput("need at least one period")
    tol = 1e-12 * max(1.0, j.T * n_periods)
    if tau_val > j.T_off_cr + tol:
        raise LambdaTooSmall(
            f"tau_lambda={tau_val:.6g} exceeds T_off_cr={j.T_off_cr:g}; increase lambda"
        )
    runs = []
    for n in range(1, n_periods + 1):
        start = (n - 1) * j.T
        if resync_multiples:
            l_first, l_last = _multiples_in(0.0, j.T_off_cr, tau_val, tol, open_lo=True)
            offset = start
        else:
            l_first, l_last = _multiples_in(start, start + j.T_off_cr, tau_val, tol, open_lo=n > 1)
            offset = 0.0
        runs.append(PeriodRun(n=n, offset=offset, l_first=l_first, l_last=l_last, end_time=n * j.T))
    return TriggerSchedule(tau=tau_val, T=j.T, T_off_cr=j.T_off_cr,
                           resync_multiples=resync_multiples, runs=tuple(runs))
