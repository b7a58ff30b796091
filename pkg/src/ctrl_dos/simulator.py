"""Closed-loop simulation under zero-order hold.

Between two updates the plant sees a constant input, so each segment is
advanced exactly with the exponential of the augmented matrix
[[A, B K], [0, 0]].  In the jammed mode the multiples of tau_lambda inside a
sleep window are equally spaced; such a run is advanced with powers of the
one-step map, which keeps runs of 10^9 updates (lambda ~ 1500) cheap.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import numerics
from .controller import GainLambda, JordanData, TriggerThreshold
from .errors import InvalidInput, MonitorResolution
from .numerics import DEFAULT_POLICY, NumericPolicy
from .plant import CanonicalSystem, JammerProfile, JammerState, jammer_state
from .trigger import TriggerSchedule


class SimMode(enum.Enum):
    JAMMED_SCHEDULE = "jammed"
    EVENT_TRIGGERED = "event"


@dataclass(frozen=True)
class SimConfig:
    x0: np.ndarray
    n_periods: int
    output_dt: float
    mode: SimMode = SimMode.JAMMED_SCHEDULE
    lam: float = 0.0
    sigma: float = 0.1
    horizon: float | None = None  # event mode; defaults to n_periods * T of the schedule unit (1.0)
    max_events: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "x0", numerics.as_vector(self.x0, "x0"))
        if not self.output_dt > 0:
            raise InvalidInput("output_dt must be positive")
        if self.n_periods < 1:
            raise InvalidInput("n_periods must be at least 1")


@dataclass(frozen=True)
class Sample:
    t: float
    x: np.ndarray
    u: float
    jammer: JammerState | None
    triggered: bool


@dataclass
class SimTrace:
    samples: list[Sample] = field(default_factory=list)
    period_norms: list[float] = field(default_factory=list)
    event_times: list[float] = field(default_factory=list)
    n_events: int = 0
    diverged: bool = False
    divergence_time: float | None = None

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    @property
    def states(self) -> np.ndarray:
        return np.array([s.x for s in self.samples])


class Propagator:
    """Exact ZOH flow x(t0 + h) = E11(h) x(t0) + E12(h) x_held."""

    def __init__(self, A, BK):
        self.A = np.asarray(A, dtype=float)
        self.BK = np.asarray(BK, dtype=float)
        self.n = self.A.shape[0]
        self._cache = lru_cache(maxsize=256)(self._blocks)

    def _blocks(self, h: float):
        n = self.n
        M = np.zeros((2 * n, 2 * n))
        M[:n, :n] = self.A
        M[:n, n:] = self.BK
        E = numerics.expm(M * h)
        return E[:n, :n], E[:n, n:]

    def blocks(self, h: float):
        return self._cache(float(h))

    def advance(self, x, x_held, h: float) -> np.ndarray:
        if h == 0.0:
            return x.copy()
        E11, E12 = self.blocks(h)
        return E11 @ x + E12 @ x_held


class UniformRun:
    """Powers of the one-step map Phi = E11(tau) + E12(tau) by binary expansion."""

    def __init__(self, prop: Propagator, tau: float):
        E11, E12 = prop.blocks(tau)
        self.powers = [E11 + E12]

    def apply(self, x, steps: int) -> tuple[np.ndarray, int]:
        """Phi^steps x as (mantissa, exponent), i.e. ldexp(mantissa, exponent).

        The vector is renormalised after every product so that states far
        below the smallest double (|x| ~ 1e-300 after a few periods) survive.
        """
        y, e = _normalize(x)
        bit = 0
        while steps:
            while bit >= len(self.powers):
                self.powers.append(self.powers[-1] @ self.powers[-1])
            if steps & 1:
                y, de = _normalize(self.powers[bit] @ y)
                e += de
            steps >>= 1
            bit += 1
        return y, e


def _norm(v) -> float:
    """Euclidean norm without squaring underflow (states reach 1e-260)."""
    return math.hypot(*(float(c) for c in v))


def _normalize(v) -> tuple[np.ndarray, int]:
    """Split v into a mantissa of unit order and a power-of-two exponent."""
    peak = float(np.max(np.abs(v))) if v.size else 0.0
    if peak == 0.0 or not math.isfinite(peak):
        return v.copy(), 0
    e = math.frexp(peak)[1]
    return np.ldexp(v, -e), e


def _output_grid(t_end: float, dt: float) -> list[float]:
    count = int(math.floor(t_end / dt + 1e-9))
    return [k * dt for k in range(count + 1)]


def _resting_trace(cfg: SimConfig, t_end: float, state_at) -> SimTrace:
    """x0 = 0 is an equilibrium: the input stays zero and no update is ever needed."""
    trace = SimTrace()
    zero = np.zeros_like(cfg.x0)
    for t in _output_grid(t_end, cfg.output_dt):
        trace.samples.append(Sample(t=t, x=zero.copy(), u=0.0, jammer=state_at(t), triggered=False))
    trace.period_norms = [0.0] * (cfg.n_periods + 1)
    return trace


def run_jammed(
    sys: CanonicalSystem,
    g: GainLambda,
    schedule: TriggerSchedule,
    cfg: SimConfig,
    *,
    jammer: JammerProfile | None = None,
    policy: NumericPolicy = DEFAULT_POLICY,
) -> SimTrace:
    """Simulate with control updates only at the schedule instants.

    The input u = K x(0) is applied from t = 0.  States are reported in the
    original coordinates x = P x_c.  A state norm above
    ``policy.divergence_norm`` ends the run with ``trace.diverged`` set.
    """
    n = sys.n
    if cfg.x0.size != n:
        raise InvalidInput(f"x0 has {cfg.x0.size} entries, system has {n}")
    if len(schedule.runs) < cfg.n_periods:
        raise InvalidInput("schedule covers fewer periods than requested")
    j = jammer or JammerProfile(schedule.T, schedule.T_off_cr)
    tol = 1e-9 * max(1.0, schedule.T)
    for run in schedule.runs[: cfg.n_periods]:
        for l in (run.l_first, run.l_last):
            if run.count and not j.in_sleep_window(run.multiple_time(l, schedule.tau), tol):
                raise InvalidInput(f"schedule triggers at l={l} outside the sleep window")

    if not np.any(cfg.x0):
        return _resting_trace(cfg, cfg.n_periods * schedule.T, lambda t: jammer_state(j, t))

    P = sys.P
    Pinv = sys.P_inv
    prop = Propagator(sys.Ac, g.BK(sys.Bc))
    uniform = UniformRun(prop, schedule.tau)
    tau = schedule.tau
    trace = SimTrace()

    # the working state is ldexp(x, scale): x and the held sample share one exponent
    x, scale = _normalize(Pinv @ cfg.x0)
    held = x.copy()
    t_held = 0.0
    t_end = cfg.n_periods * schedule.T
    pending = iter(_output_grid(t_end, cfg.output_dt))
    next_out = next(pending, None)

    def emit(t, xc, xh, triggered, e=None):
        e = scale if e is None else e
        trace.samples.append(Sample(t=t, x=np.ldexp(P @ xc, e), u=math.ldexp(float(g.u_row @ xh), e),
                                    jammer=jammer_state(j, t), triggered=triggered))

    def rescale(v):
        nonlocal scale
        v, de = _normalize(v)
        scale += de
        return v

    def record_event(t):
        trace.n_events += 1
        if len(trace.event_times) < policy.max_recorded_events:
            trace.event_times.append(t)

    def check(t, xc):
        size = float(np.linalg.norm(P @ xc))
        if size > 0 and math.log2(size) + scale > math.log2(policy.divergence_norm):
            trace.diverged = True
            trace.divergence_time = t
            return False
        return True

    def flush_gap(t_to):
        """Emit output samples strictly before t_to inside a held segment."""
        nonlocal next_out
        while next_out is not None and next_out < t_to - 1e-12:
            emit(next_out, prop.advance(x, held, next_out - t_held), held, False)
            next_out = next(pending, None)

    def hit_output(t):
        nonlocal next_out
        if next_out is not None and abs(next_out - t) <= 1e-12:
            next_out = next(pending, None)

    record_event(0.0)
    emit(0.0, x, held, True)
    hit_output(0.0)
    trace.period_norms.append(_norm(cfg.x0))

    for run in schedule.runs[: cfg.n_periods]:
        if run.count:
            t_first = run.multiple_time(run.l_first, tau)
            flush_gap(t_first)
            x = rescale(prop.advance(x, held, t_first - t_held))
            held, t_held = x.copy(), t_first
            if not check(t_first, x):
                return trace
            record_event(t_first)
            emit(t_first, x, held, True)
            hit_output(t_first)

            steps = run.count - 1
            if steps:
                per_trigger = run.count <= policy.max_trigger_samples
                x_start, scale_start = x.copy(), scale
                t_start = t_first
                E_step = uniform.powers[0]
                # output samples falling inside the uniform run
                t_last = run.multiple_time(run.l_last, tau)
                if per_trigger:
                    for s in range(1, steps + 1):
                        t_s = run.multiple_time(run.l_first + s, tau)
                        while next_out is not None and next_out < t_s - 1e-12:
                            emit(next_out, prop.advance(x, held, next_out - t_held), held, False)
                            next_out = next(pending, None)
                        x = rescale(E_step @ x)
                        held, t_held = x.copy(), t_s
                        record_event(t_s)
                        emit(t_s, x, held, True)
                        hit_output(t_s)
                        if not check(t_s, x):
                            return trace
                else:
                    while next_out is not None and next_out < t_last - 1e-12:
                        k = int(math.floor((next_out - t_start) / tau))
                        xk, ek = uniform.apply(x_start, k)
                        t_k = run.multiple_time(run.l_first + k, tau)
                        emit(next_out, prop.advance(xk, xk, next_out - t_k), xk, False, ek + scale_start)
                        next_out = next(pending, None)
                    x, ek = uniform.apply(x_start, steps)
                    scale = scale_start + ek
                    held, t_held = x.copy(), t_last
                    trace.n_events += steps - 1
                    record_event(t_last)
                    emit(t_last, x, held, True)
                    hit_output(t_last)
                    if not check(t_last, x):
                        return trace

        flush_gap(run.end_time)
        x = rescale(prop.advance(x, held, run.end_time - t_held))
        held, t_held = x.copy(), run.end_time
        if not check(run.end_time, x):
            return trace
        record_event(run.end_time)
        emit(run.end_time, x, held, True)
        hit_output(run.end_time)
        trace.period_norms.append(_norm(np.ldexp(P @ x, scale)))
    return trace


def run_event_triggered(
    sys: CanonicalSystem,
    g: GainLambda,
    jd: JordanData,
    thr: TriggerThreshold,
    cfg: SimConfig,
    *,
    period: float = 1.0,
    policy: NumericPolicy = DEFAULT_POLICY,
) -> SimTrace:
    """Jammer-free event-triggered loop.

    An update fires when |e_lambda|^2 > F^2 |x_lambda|^2 with
    e_lambda = T^-1 (x(t_k) - x(t)).  The condition is monitored every
    output_dt / 10 and each crossing is refined by bisection.  The run ends at
    ``cfg.horizon`` (default n_periods * period) or after ``cfg.max_events``.
    """
    n = sys.n
    if cfg.x0.size != n:
        raise InvalidInput(f"x0 has {cfg.x0.size} entries, system has {n}")
    P = sys.P
    Ti = jd.T_lambda_inv
    prop = Propagator(sys.Ac, g.BK(sys.Bc))
    h = cfg.output_dt / 10.0
    E11, E12 = prop.blocks(h)
    horizon = cfg.horizon if cfg.horizon is not None else cfg.n_periods * period
    trace = SimTrace()

    def violated(xc, xh):
        return thr.violated(Ti @ (xh - xc), Ti @ xc)

    def emit(t, xc, xh, triggered):
        trace.samples.append(Sample(t=t, x=P @ xc, u=float(g.u_row @ xh),
                                    jammer=None, triggered=triggered))

    if not np.any(cfg.x0):
        return _resting_trace(cfg, horizon, lambda t: None)

    x = sys.P_inv @ cfg.x0
    held = x.copy()
    t_held = 0.0
    t = 0.0
    trace.n_events = 1
    trace.event_times.append(0.0)
    emit(0.0, x, held, True)
    steps_per_out = 10
    k = 0

    while t < horizon - 1e-15:
        if cfg.max_events is not None and trace.n_events >= cfg.max_events:
            break
        x_next = E11 @ x + E12 @ held
        if violated(x_next, held):
            if t == t_held:
                raise MonitorResolution(
                    f"event within one monitor step ({h:g}) of the update at t={t_held:g}"
                )
            lo, hi = 0.0, h
            while hi - lo > policy.event_refine_tol:
                mid = 0.5 * (lo + hi)
                if violated(prop.advance(x, held, mid), held):
                    hi = mid
                else:
                    lo = mid
            t_ev = t + hi
            x = prop.advance(x, held, hi)
            held, t_held, t = x.copy(), t_ev, t_ev
            trace.n_events += 1
            if len(trace.event_times) < policy.max_recorded_events:
                trace.event_times.append(t_ev)
            emit(t_ev, x, held, True)
            continue
        x = x_next
        t += h
        k += 1
        if k % steps_per_out == 0:
            emit(t, x, held, False)
        if np.linalg.norm(P @ x) > policy.divergence_norm:
            trace.diverged = True
            trace.divergence_time = t
            break
    return trace


@dataclass(frozen=True)
class DecayMetrics:
    period_norms: list[float]
    ratios: list[float]
    contracting: bool


def decay_metrics(trace: SimTrace, T: float) -> DecayMetrics:
    """|x(nT)| at every period boundary found in the trace, and successive ratios."""
    norms = []
    n = 0
    for s in trace.samples:
        if abs(s.t - n * T) <= 1e-9 * max(1.0, n * T):
            norms.append(_norm(s.x))
            n += 1
    if len(norms) < 3:
        raise InvalidInput("decay metrics need a trace spanning at least two periods")
    ratios = [b / a if a > 0 else (0.0 if b == 0 else math.inf) for a, b in zip(norms, norms[1:])]
    return DecayMetrics(period_norms=norms, ratios=ratios, contracting=max(ratios) < 1.0)
