"""ctrl-dos command line: canonical | analyze | tau | simulate.

Every command reads one TOML file.  Keys are checked strictly so a typo
fails loudly instead of silently falling back to a default.

Exit codes: 0 ok, 1 bad configuration, 2 (A, B) not controllable,
3 numerical failure, 4 no resilience threshold on the grid.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from .analysis import lambda_grid, sweep
from .controller import (closed_loop, is_admissible, jordan_chain, synthesize_gain,
                         trigger_threshold)
from .errors import ConfigError, CtrlDosError, InvalidInput, NotControllable, NumericalFailure
from .plant import CanonicalSystem, JammerProfile, LtiSystem, to_canonical
from .simulator import SimConfig, SimMode, SimTrace, decay_metrics, run_event_triggered, run_jammed
from .trigger import build_schedule, compute_tau

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NOT_CONTROLLABLE = 2
EXIT_NUMERICAL = 3
EXIT_NO_LAMBDA_BAR = 4


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SystemBlock:
    n: int
    A: np.ndarray
    B: np.ndarray


@dataclass(frozen=True)
class SweepBlock:
    lambda_start: float
    lambda_stop: float
    lambda_step: float

    def grid(self) -> list[float]:
        return lambda_grid(self.lambda_start, self.lambda_stop, self.lambda_step)


@dataclass(frozen=True)
class SimBlock:
    x0: list[float]
    periods: int
    output_dt: float
    lam: float
    mode: SimMode
    horizon: float | None = None
    max_events: int | None = None


@dataclass(frozen=True)
class Flags:
    c3_half_exponent: bool = False
    resync_multiples: bool = False
    tau_stop_at_F: bool = False


@dataclass(frozen=True)
class RunConfig:
    system: SystemBlock | None = None
    jammer: JammerProfile | None = None
    sigma: float | None = None
    sweep: SweepBlock | None = None
    sim: SimBlock | None = None
    flags: Flags = field(default_factory=Flags)

    def need(self, *blocks: str):
        for name in blocks:
            value = self.sigma if name == "trigger" else getattr(self, name)
            if value is None:
                raise ConfigError(f"missing [{name}] block")


_SCHEMA = {
    "system": {"n": True, "A": True, "B": True},
    "jammer": {"T": True, "T_off_cr": True},
    "trigger": {"sigma": True},
    "sweep": {"lambda_start": True, "lambda_stop": True, "lambda_step": True},
    "sim": {"x0": True, "periods": True, "output_dt": True, "lambda": True, "mode": False,
            "horizon": False, "max_events": False},
    "flags": {"c3_half_exponent": False, "resync_multiples": False, "tau_stop_at_F": False},
}


def _number(block, key, value, kind=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"[{block}] {key} must be a number, got {value!r}")
    if kind is int:
        if not float(value).is_integer():
            raise ConfigError(f"[{block}] {key} must be an integer, got {value!r}")
        return int(value)
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(f"[{block}] {key} must be finite")
    return value


def _numbers(block, key, value):
    if not isinstance(value, list):
        raise ConfigError(f"[{block}] {key} must be a list of numbers")
    return [_number(block, key, v) for v in value]


def _check_keys(raw: dict):
    for name, table in raw.items():
        if name not in _SCHEMA:
            raise ConfigError(f"unknown block [{name}]")
        if not isinstance(table, dict):
            raise ConfigError(f"[{name}] must be a table")
        allowed = _SCHEMA[name]
        for key in table:
            if key not in allowed:
                raise ConfigError(f"unknown key {key!r} in [{name}]")
        for key, required in allowed.items():
            if required and key not in table:
                raise ConfigError(f"[{name}] is missing {key!r}")


def parse_config(raw: dict) -> RunConfig:
    """Build a RunConfig from a parsed TOML document (only blocks present are parsed)."""
    _check_keys(raw)
    out = {}
    try:
        if "system" in raw:
            s = raw["system"]
            n = _number("system", "n", s["n"], int)
            if n < 1:
                raise ConfigError("[system] n must be positive")
            A = _numbers("system", "A", s["A"])
            B = _numbers("system", "B", s["B"])
            if len(A) != n * n:
                raise ConfigError(f"[system] A needs n*n = {n * n} entries, got {len(A)}")
            if len(B) != n:
                raise ConfigError(f"[system] B needs n = {n} entries, got {len(B)}")
            out["system"] = SystemBlock(n=n, A=np.array(A).reshape(n, n), B=np.array(B).reshape(n, 1))
        if "jammer" in raw:
            jb = raw["jammer"]
            out["jammer"] = JammerProfile(_number("jammer", "T", jb["T"]),
                                          _number("jammer", "T_off_cr", jb["T_off_cr"]))
        if "trigger" in raw:
            sigma = _number("trigger", "sigma", raw["trigger"]["sigma"])
            if not 0 < sigma < 1:
                raise ConfigError("[trigger] sigma must lie in (0, 1)")
            out["sigma"] = sigma
        if "sweep" in raw:
            sw = raw["sweep"]
            block = SweepBlock(*(_number("sweep", k, sw[k])
                                 for k in ("lambda_start", "lambda_stop", "lambda_step")))
            block.grid()  # validates ordering and step
            out["sweep"] = block
        if "sim" in raw:
            sm = raw["sim"]
            mode = sm.get("mode", "jammed")
            try:
                mode = SimMode(mode)
            except ValueError:
                raise ConfigError(f"[sim] mode must be 'jammed' or 'event', got {mode!r}") from None
            periods = _number("sim", "periods", sm["periods"], int)
            output_dt = _number("sim", "output_dt", sm["output_dt"])
            if periods < 1 or output_dt <= 0:
                raise ConfigError("[sim] needs periods >= 1 and output_dt > 0")
            horizon = _number("sim", "horizon", sm["horizon"]) if "horizon" in sm else None
            max_events = _number("sim", "max_events", sm["max_events"], int) if "max_events" in sm else None
            out["sim"] = SimBlock(x0=_numbers("sim", "x0", sm["x0"]), periods=periods, output_dt=output_dt,
                                  lam=_number("sim", "lambda", sm["lambda"]), mode=mode,
                                  horizon=horizon, max_events=max_events)
        if "flags" in raw:
            fl = raw["flags"]
            for key, value in fl.items():
                if not isinstance(value, bool):
                    raise ConfigError(f"[flags] {key} must be true or false")
            out["flags"] = Flags(**fl)
    except InvalidInput as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(**out)


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return parse_config(raw)


# ---------------------------------------------------------------------------
# formatting
# ---------------------------------------------------------------------------

def fmt(x: float) -> str:
    """Shortest round-trip representation; identical across runs."""
    return repr(float(x))


def _canonical(cfg: RunConfig) -> CanonicalSystem:
    cfg.need("system")
    return to_canonical(LtiSystem(cfg.system.A, cfg.system.B))


def _write(out_dir: Path | None, name: str, text: str):
    if out_dir is None:
        sys.stdout.write(text)
    else:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / name).write_text(text)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_canonical(cfg: RunConfig, args) -> int:
    cs = _canonical(cfg)
    doc = {
        "n": cs.n,
        "a": [float(v) for v in cs.a],
        "Ac": cs.Ac.tolist(),
        "Bc": cs.Bc[:, 0].tolist(),
        "P": cs.P.tolist(),
    }
    _write(args.out, "canonical.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_analyze(cfg: RunConfig, args) -> int:
    cfg.need("system", "jammer", "trigger", "sweep")
    cs = _canonical(cfg)
    result = sweep(cs, cfg.jammer, cfg.sigma, cfg.sweep.grid(), jobs=args.jobs,
                   c3_half_exponent=cfg.flags.c3_half_exponent,
                   tau_stop_at_F=cfg.flags.tau_stop_at_F)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lambda", "tau_lambda", "C1", "C2", "C3", "C"])
    for r in result.reports:
        w.writerow([fmt(r.lam), fmt(r.tau_lambda), fmt(r.C1), fmt(r.C2), fmt(r.C3), fmt(r.C)])
    bar = "none" if result.lambda_bar is None else fmt(result.lambda_bar)
    buf.write(f"# lambda_bar={bar}\n")
    _write(args.out, "analyze.csv", buf.getvalue())
    if result.lambda_bar is None:
        print("no lambda on the grid keeps C(lambda) < 1 up to the grid end", file=sys.stderr)
        return EXIT_NO_LAMBDA_BAR
    return EXIT_OK


def tau_row(lam: float, cs: CanonicalSystem, sigma: float) -> str:
    """tau_lambda for one grid point, or an error marker for inadmissible lambda."""
    if not is_admissible(lam, cs.n):
        return "error:inadmissible_lambda"
    g = synthesize_gain(cs.n, lam, cs.a)
    return fmt(compute_tau(cs, g, sigma).tau_lambda)


def cmd_tau(cfg: RunConfig, args) -> int:
    cfg.need("system", "trigger", "sweep")
    cs = _canonical(cfg)
    grid = cfg.sweep.grid()
    work = partial(tau_row, cs=cs, sigma=cfg.sigma)
    if args.jobs > 1 and len(grid) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            values = list(pool.map(work, grid, chunksize=max(1, len(grid) // (4 * args.jobs))))
    else:
        values = [work(lam) for lam in grid]
    lines = ["lambda,tau_lambda"] + [f"{fmt(lam)},{v}" for lam, v in zip(grid, values)]
    _write(args.out, "tau.csv", "\n".join(lines) + "\n")
    return EXIT_OK


def trace_csv(trace: SimTrace, n: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [f"x{i}" for i in range(1, n + 1)] + ["u", "jammer", "trigger"])
    for s in trace.samples:
        jam = "none" if s.jammer is None else s.jammer.value
        w.writerow([fmt(s.t)] + [fmt(v) for v in s.x] + [fmt(s.u), jam, int(s.triggered)])
    return buf.getvalue()


def metrics_csv(trace: SimTrace, T: float) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "norm_xnT", "ratio"])
    norms = trace.period_norms
    if not norms:
        try:
            norms = decay_metrics(trace, T).period_norms
        except InvalidInput:
            norms = []
    for k, value in enumerate(norms):
        if k == 0:
            ratio = ""
        elif norms[k - 1] > 0:
            ratio = fmt(value / norms[k - 1])
        else:
            ratio = fmt(0.0) if value == 0 else "inf"
        w.writerow([k, fmt(value), ratio])
    buf.write(f"# events={trace.n_events}\n")
    if trace.diverged:
        buf.write(f"# diverged_at={fmt(trace.divergence_time)}\n")
    return buf.getvalue()


def cmd_simulate(cfg: RunConfig, args) -> int:
    cfg.need("system", "trigger", "sim")
    cs = _canonical(cfg)
    sim = cfg.sim
    if len(sim.x0) != cs.n:
        raise ConfigError(f"[sim] x0 needs {cs.n} entries, got {len(sim.x0)}")
    lam = sim.lam
    g = synthesize_gain(cs.n, lam, cs.a)
    scfg = SimConfig(x0=np.array(sim.x0), n_periods=sim.periods, output_dt=sim.output_dt,
                     mode=sim.mode, lam=lam, sigma=cfg.sigma, horizon=sim.horizon,
                     max_events=sim.max_events)
    if sim.mode is SimMode.JAMMED_SCHEDULE:
        cfg.need("jammer")
        tau = compute_tau(cs, g, cfg.sigma)
        schedule = build_schedule(tau, cfg.jammer, sim.periods,
                                  resync_multiples=cfg.flags.resync_multiples)
        trace = run_jammed(cs, g, schedule, scfg, jammer=cfg.jammer)
        period = cfg.jammer.T
    else:
        jd = jordan_chain(closed_loop(cs, g), lam)
        thr = trigger_threshold(jd, g, cs.Bc, cfg.sigma)
        period = cfg.jammer.T if cfg.jammer is not None else 1.0
        trace = run_event_triggered(cs, g, jd, thr, scfg, period=period)
    if args.out is None:
        sys.stdout.write(metrics_csv(trace, period))
    else:
        _write(args.out, "trace.csv", trace_csv(trace, cs.n))
        _write(args.out, "metrics.csv", metrics_csv(trace, period))
    return EXIT_OK


COMMANDS = {
    "canonical": cmd_canonical,
    "analyze": cmd_analyze,
    "tau": cmd_tau,
    "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctrl-dos",
        description="Pole-placement controller design and analysis under a periodic DoS jammer.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "canonical": "print the controllable canonical form as JSON",
        "analyze": "sweep lambda, write C(lambda) and the resilience threshold",
        "tau": "tabulate the minimal inter-event time over a lambda grid",
        "simulate": "simulate the closed loop and report |x(nT)|",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, type=Path, help="TOML configuration file")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps (default 1)")
        p.add_argument("--out", type=Path, default=None,
                       help="output directory (default: write to stdout)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except NotControllable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONTROLLABLE
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, CtrlDosError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
