"""Pole-placement control of linear plants under a periodic DoS jammer.

Gains put every closed-loop pole at -lambda; the package computes the
minimal inter-event time, the per-period decay coefficient C(lambda), the
resilience threshold on a lambda grid, and simulates the closed loop.
"""
from .analysis import DecayReport, SweepResult, decay_coefficient, evaluate_lambda, lambda_grid, sweep
from .controller import (GainLambda, JordanData, TriggerThreshold, closed_loop, jordan_chain,
                         synthesize_gain, trigger_threshold)
from .errors import (ConfigError, CtrlDosError, InadmissibleLambda, InvalidInput, LambdaTooSmall,
                     MonitorResolution, NoCrossing, NotControllable, NumericalFailure, RankDeficiency)
from .plant import CanonicalSystem, JammerProfile, JammerState, LtiSystem, jammer_state, to_canonical
from .simulator import SimConfig, SimMode, SimTrace, decay_metrics, run_event_triggered, run_jammed
from .trigger import TauResult, TriggerSchedule, build_schedule, compute_tau

__version__ = "0.1.0"
