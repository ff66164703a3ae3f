"""Command-line front end: config ingestion, subcommands, CSV reports.

Configuration is a flat key = value file (a TOML-compatible subset: no
sections, scalar values only) merged with ``--set key=value`` overrides
and the dedicated flags; later sources win.  Every CSV starts with a
comment header recording the artifact version and the fully resolved
configuration, and nothing in the output depends on wall-clock time, so a
fixed seed reproduces files byte for byte.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from dataclasses import dataclass, fields as dataclass_fields

import numpy as np

from ._version import __version__
from .analytics import (
    closed_form,
    liouville_solve,
    trace_distance,
    unconditional_click_statistics,
)
from .errors import CavsimError, ConfigError, RegimeError
from .model import ModelVariant, PhysicalParams
from .protocol import (
    ProtocolKind,
    ProtocolKit,
    _accumulate,
    _empty_sums,
    _stats_from_sums,
    run_ensemble,
    run_unconditional_ensemble,
    sweep_parameter,
)
from .trajectory import IntegratorConfig, trajectory_rngs

__all__ = ["RunConfig", "SweepSpec", "parse_config", "main"]

SWEEP_CSV_HEADER = "sweep_value,p_success,p_success_err,mean_fidelity,fidelity_err,n_success,n_runs"
ORACLE_CSV_HEADER = "time,trace_distance,click_integral"
RUN_CSV_HEADER = (
    "p_success,p_success_err,mean_fidelity,fidelity_err,"
    "mean_fidelity_at_click,fidelity_at_click_err,"
    "n_success,n_via_d1,n_via_d2,n_no_click,n_multi_click,n_runs"
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_REGIME = 3
EXIT_RUNTIME = 4


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    start: float
    stop: float
    steps: int


@dataclass(frozen=True)
class RunConfig:
    params: PhysicalParams
    integrator: IntegratorConfig
    n_runs: int
    master_seed: int
    workers: int
    protocol: ProtocolKind
    variant: ModelVariant
    t_drain: float | None
    include_level_shifts: bool
    sweep: SweepSpec | None

    @property
    def resolved_t_drain(self) -> float:
        if self.t_drain is not None:
            return self.t_drain
        if self.protocol is ProtocolKind.BASELINE_SUDDEN:
            return 0.0
        return 5.0 / self.params.kappa if self.params.kappa > 0 else 0.0


_PARAM_KEYS = tuple(f.name for f in dataclass_fields(PhysicalParams))
_INTEGRATOR_KEYS = ("dt", "jump_time_tol", "renorm_each_step")
_RUN_KEYS = (
    "n_runs",
    "master_seed",
    "workers",
    "protocol",
    "variant",
    "t_drain",
    "include_level_shifts",
)
_SWEEP_KEYS = ("sweep_param", "sweep_start", "sweep_stop", "sweep_steps")
_ALL_KEYS = frozenset(_PARAM_KEYS) | set(_INTEGRATOR_KEYS) | set(_RUN_KEYS) | set(_SWEEP_KEYS)


def _parse_scalar(text: str):
    s = text.strip()
    if not s:
        raise ConfigError("empty value")
    if s[0] in ("'", '"'):
        if len(s) < 2 or s[-1] != s[0]:
            raise ConfigError(f"unterminated string {s!r}")
        return s[1:-1]
    low = s.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        pass
    return s


def _parse_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}")
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            raise ConfigError(f"{path}:{lineno}: sections are not supported (flat key = value only)")
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key.isidentifier():
            raise ConfigError(f"{path}:{lineno}: malformed key {key!r}")
        value = value.strip()
        if value[:1] in ("'", '"'):
            closing = value.find(value[0], 1)
            if closing < 0:
                raise ConfigError(f"{path}:{lineno}: unterminated string")
            rest = value[closing + 1 :].strip()
            if rest and not rest.startswith("#"):
                raise ConfigError(f"{path}:{lineno}: trailing junk after string value")
            value = value[: closing + 1]
        else:
            value = value.split("#", 1)[0].strip()
        if not value:
            raise ConfigError(f"{path}:{lineno}: missing value for {key!r}")
        values[key] = _parse_scalar(value)
    return values


def _as_float(key: str, value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be a number, got {value!r}", key=key)
    return float(value)


def _as_int(key: str, value) -> int:
    if isinstance(value, bool):
        raise ConfigError(f"{key} must be an integer, got {value!r}", key=key)
    if isinstance(value, float):
        if not value.is_integer():
            raise ConfigError(f"{key} must be an integer, got {value!r}", key=key)
        value = int(value)
    if not isinstance(value, int):
        raise ConfigError(f"{key} must be an integer, got {value!r}", key=key)
    return value


def _as_bool(key: str, value) -> bool:
    if isinstance(value, bool):
        return value
    raise ConfigError(f"{key} must be true or false, got {value!r}", key=key)


def _as_enum(key: str, value, enum_cls):
    try:
        return enum_cls(str(value))
    except ValueError:
        allowed = ", ".join(member.value for member in enum_cls)
        raise ConfigError(f"{key} must be one of: {allowed}; got {value!r}", key=key)


def build_run_config(raw: dict) -> RunConfig:
    unknown = sorted(set(raw) - _ALL_KEYS)
    if unknown:
        raise ConfigError(f"unknown config key {unknown[0]!r}", key=unknown[0])

    params_kwargs = {}
    for key in _PARAM_KEYS:
        if key in raw:
            params_kwargs[key] = (
                _as_int(key, raw[key]) if key == "n_max" else _as_float(key, raw[key])
            )
    params = PhysicalParams(**params_kwargs)

    integrator_kwargs = {}
    if "jump_time_tol" in raw:
        integrator_kwargs["jump_time_tol"] = _as_float("jump_time_tol", raw["jump_time_tol"])
    if "renorm_each_step" in raw:
        integrator_kwargs["renorm_each_step"] = _as_bool(
            "renorm_each_step", raw["renorm_each_step"]
        )
    dt = _as_float("dt", raw["dt"]) if "dt" in raw else None
    integrator = IntegratorConfig.for_params(params, dt=dt, **integrator_kwargs)

    n_runs = _as_int("n_runs", raw.get("n_runs", 100_000))
    if n_runs < 1:
        raise ConfigError(f"n_runs must be >= 1, got {n_runs}", key="n_runs")
    master_seed = _as_int("master_seed", raw.get("master_seed", 0))
    if master_seed < 0:
        raise ConfigError(f"master_seed must be >= 0, got {master_seed}", key="master_seed")
    workers = _as_int("workers", raw.get("workers", 1))
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}", key="workers")
    protocol = _as_enum("protocol", raw.get("protocol", "weak_driving"), ProtocolKind)
    variant = _as_enum("variant", raw.get("variant", "two_cavity_full"), ModelVariant)
    t_drain = _as_float("t_drain", raw["t_drain"]) if "t_drain" in raw else None
    if t_drain is not None and t_drain < 0:
        raise ConfigError(f"t_drain must be >= 0, got {t_drain}", key="t_drain")
    shifts = _as_bool("include_level_shifts", raw.get("include_level_shifts", True))

    sweep = None
    if any(key in raw for key in _SWEEP_KEYS):
        parameter = str(raw.get("sweep_param", "eta"))
        if parameter not in _PARAM_KEYS:
            raise ConfigError(f"unknown sweep parameter {parameter!r}", key="sweep_param")
        steps = _as_int("sweep_steps", raw.get("sweep_steps", 5))
        if steps < 2:
            raise ConfigError(f"sweep_steps must be >= 2, got {steps}", key="sweep_steps")
        sweep = SweepSpec(
            parameter=parameter,
            start=_as_float("sweep_start", raw.get("sweep_start", 0.2)),
            stop=_as_float("sweep_stop", raw.get("sweep_stop", 1.0)),
            steps=steps,
        )

    return RunConfig(
        params=params,
        integrator=integrator,
        n_runs=n_runs,
        master_seed=master_seed,
        workers=workers,
        protocol=protocol,
        variant=variant,
        t_drain=t_drain,
        include_level_shifts=shifts,
        sweep=sweep,
    )


def parse_config(path: str | None = None, overrides=()) -> RunConfig:
    """Merge file values and key=value overrides into a run configuration."""
    raw: dict = {}
    if path:
        raw.update(_parse_config_file(path))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        key = key.strip()
        if not key.isidentifier():
            raise ConfigError(f"malformed key {key!r}")
        raw[key] = _parse_scalar(value)
    return build_run_config(raw)


# --- output helpers ---------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return "nan"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def _config_comment_lines(cfg: RunConfig) -> list[str]:
    entries: dict[str, str] = {}
    for key in _PARAM_KEYS:
        entries[key] = _fmt(getattr(cfg.params, key))
    entries["dt"] = _fmt(cfg.integrator.dt)
    entries["jump_time_tol"] = _fmt(cfg.integrator.jump_time_tol)
    entries["renorm_each_step"] = _fmt(cfg.integrator.renorm_each_step)
    entries["n_runs"] = _fmt(cfg.n_runs)
    entries["master_seed"] = _fmt(cfg.master_seed)
    entries["workers"] = _fmt(cfg.workers)
    entries["protocol"] = cfg.protocol.value
    entries["variant"] = cfg.variant.value
    entries["t_drain"] = _fmt(cfg.resolved_t_drain)
    entries["include_level_shifts"] = _fmt(cfg.include_level_shifts)
    if cfg.sweep is not None:
        entries["sweep_param"] = cfg.sweep.parameter
        entries["sweep_start"] = _fmt(cfg.sweep.start)
        entries["sweep_stop"] = _fmt(cfg.sweep.stop)
        entries["sweep_steps"] = _fmt(cfg.sweep.steps)
    lines = [f"# cavsim {__version__}", "# units: rates in g, times in 1/g"]
    lines.extend(f"# {key} = {entries[key]}" for key in sorted(entries))
    return lines


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        print(f"wrote {out}")
    else:
        print(text, end="" if text.endswith("\n") else "\n")


def _stats_row(stats) -> str:
    return ",".join(
        _fmt(value)
        for value in (
            stats.p_success,
            stats.p_success_err,
            stats.mean_fidelity,
            stats.fidelity_err,
            stats.mean_fidelity_at_click,
            stats.fidelity_at_click_err,
            stats.n_success,
            stats.n_via_d1,
            stats.n_via_d2,
            stats.n_no_click,
            stats.n_multi_click,
            stats.n_runs,
        )
    )


def _summary_block(cfg: RunConfig, stats) -> str:
    lines = [
        f"protocol: {cfg.protocol.value} ({cfg.variant.value})",
        f"runs: {stats.n_runs}   master_seed: {cfg.master_seed}   workers: {cfg.workers}",
        "units: rates in g, times in 1/g",
        f"p_success = {_fmt(stats.p_success)} +/- {_fmt(stats.p_success_err)}"
        f"   ({stats.n_success} of {stats.n_runs})",
        f"clicks: d1={stats.n_via_d1} d2={stats.n_via_d2}"
        f" (dark {stats.n_dark_d1}+{stats.n_dark_d2})"
        f"   no_click={stats.n_no_click} multi_click={stats.n_multi_click}",
    ]
    if stats.mean_fidelity is not None:
        lines.append(
            f"mean_fidelity = {_fmt(stats.mean_fidelity)} +/- {_fmt(stats.fidelity_err)}"
        )
    if stats.mean_fidelity_at_click is not None:
        lines.append(
            "mean_fidelity_at_click = "
            f"{_fmt(stats.mean_fidelity_at_click)} +/- {_fmt(stats.fidelity_at_click_err)}"
        )
    return "\n".join(lines)


# --- subcommands ------------------------------------------------------------


def _run_with_event_log(cfg: RunConfig, events_path: str):
    """Inline ensemble that streams per-trajectory event lines to a file."""
    kit = ProtocolKit(
        cfg.params,
        kind=cfg.protocol,
        variant=cfg.variant,
        cfg=cfg.integrator,
        t_drain=cfg.t_drain,
        include_level_shifts=cfg.include_level_shifts,
    )
    sums = _empty_sums()
    with open(events_path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("traj_index,time,channel_label\n")
        for index in range(cfg.n_runs):
            rng, dark_rng = trajectory_rngs(cfg.master_seed, index)
            outcome = kit.run_one(rng, dark_rng, keep_record=True)
            for event in outcome.record.events:
                handle.write(f"{index},{_fmt(event.time)},{event.kind.value}\n")
            _accumulate(sums, outcome)
    return _stats_from_sums(sums)


def cmd_run(cfg: RunConfig, args) -> int:
    if args.events:
        stats = _run_with_event_log(cfg, args.events)
    else:
        stats = run_ensemble(
            cfg.params,
            cfg.integrator,
            cfg.n_runs,
            cfg.master_seed,
            kind=cfg.protocol,
            variant=cfg.variant,
            workers=cfg.workers,
            t_drain=cfg.t_drain,
            include_level_shifts=cfg.include_level_shifts,
        )
    print(_summary_block(cfg, stats))
    csv = "\n".join(_config_comment_lines(cfg) + [RUN_CSV_HEADER, _stats_row(stats)]) + "\n"
    _emit(csv, args.out)
    return EXIT_OK


def cmd_baseline(cfg: RunConfig, args) -> int:
    cfg = dataclasses.replace(cfg, protocol=ProtocolKind.BASELINE_SUDDEN)
    args.events = None
    return cmd_run(cfg, args)


def cmd_sweep(cfg: RunConfig, args) -> int:
    spec = cfg.sweep or SweepSpec("eta", 0.2, 1.0, 5)
    if args.parameter:
        if args.parameter not in _PARAM_KEYS:
            raise ConfigError(f"unknown sweep parameter {args.parameter!r}", key="sweep_param")
        spec = dataclasses.replace(spec, parameter=args.parameter)
    if args.start is not None:
        spec = dataclasses.replace(spec, start=args.start)
    if args.stop is not None:
        spec = dataclasses.replace(spec, stop=args.stop)
    if args.steps is not None:
        if args.steps < 2:
            raise ConfigError(f"sweep_steps must be >= 2, got {args.steps}", key="sweep_steps")
        spec = dataclasses.replace(spec, steps=args.steps)
    cfg = dataclasses.replace(cfg, sweep=spec)
    values = np.linspace(spec.start, spec.stop, spec.steps)
    results = sweep_parameter(
        cfg.params,
        spec.parameter,
        values,
        cfg=cfg.integrator,
        n_runs=cfg.n_runs,
        master_seed=cfg.master_seed,
        kind=cfg.protocol,
        variant=cfg.variant,
        workers=cfg.workers,
        t_drain=cfg.t_drain,
    )
    rows = [
        ",".join(
            _fmt(value)
            for value in (
                point,
                stats.p_success,
                stats.p_success_err,
                stats.mean_fidelity,
                stats.fidelity_err,
                stats.n_success,
                stats.n_runs,
            )
        )
        for point, stats in results
    ]
    csv = "\n".join(_config_comment_lines(cfg) + [SWEEP_CSV_HEADER] + rows) + "\n"
    _emit(csv, args.out)
    return EXIT_OK


def cmd_oracle(cfg: RunConfig, args) -> int:
    window = cfg.params.window
    times = [window * fraction for fraction in (0.1, 0.5, 1.0)]
    ensemble = run_unconditional_ensemble(
        cfg.params,
        cfg.integrator,
        cfg.n_runs,
        cfg.master_seed,
        times=times,
        variant=cfg.variant,
        workers=cfg.workers,
        include_level_shifts=cfg.include_level_shifts,
    )
    oracle = liouville_solve(
        cfg.params,
        cfg.variant,
        t_end=window,
        sample_times=times,
        include_level_shifts=cfg.include_level_shifts,
    )
    curve = unconditional_click_statistics(
        cfg.params,
        cfg.variant,
        t_end=window,
        include_level_shifts=cfg.include_level_shifts,
    )
    rows = [
        ",".join(
            _fmt(value)
            for value in (
                t,
                trace_distance(ensemble.states[i], oracle.states[i]),
                curve.cumulative_at(t),
            )
        )
        for i, t in enumerate(times)
    ]
    csv = "\n".join(_config_comment_lines(cfg) + [ORACLE_CSV_HEADER] + rows) + "\n"
    _emit(csv, args.out)
    return EXIT_OK


def cmd_closedform(cfg: RunConfig, args) -> int:
    report = closed_form(cfg.params)
    pairs = [
        ("photon_amplitude_real", report.photon_amplitude.real),
        ("photon_amplitude_imag", report.photon_amplitude.imag),
        ("click_rate", report.click_rate),
        ("mean_wait_time", report.mean_wait_time),
        ("p_success_ideal", report.p_success_ideal),
        ("p_success_eta", report.p_success_eta),
        ("p_two_photon", report.p_two_photon),
    ]
    lines = _config_comment_lines(cfg) + [f"{key}={_fmt(value)}" for key, value in pairs]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


_COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "oracle": cmd_oracle,
    "baseline": cmd_baseline,
    "closedform": cmd_closedform,
}


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="flat key = value config file")
    common.add_argument("--seed", type=int, metavar="N", help="master seed override")
    common.add_argument("--runs", type=int, metavar="N", help="ensemble size override")
    common.add_argument("--workers", type=int, metavar="N", help="worker process count")
    common.add_argument("--out", metavar="FILE", help="write the CSV/report here instead of stdout")
    common.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override any config key (repeatable)",
    )

    parser = argparse.ArgumentParser(
        prog="cavsim",
        description="Stochastic simulator of a two-cavity entanglement-by-detection protocol.",
    )
    parser.add_argument("--version", action="version", version=f"cavsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", parents=[common], help="one ensemble, summary plus CSV row")
    run_p.add_argument(
        "--events", metavar="FILE", help="also write per-trajectory event lines (forces workers=1)"
    )
    sweep_p = sub.add_parser("sweep", parents=[common], help="ensemble per grid point, CSV table")
    sweep_p.add_argument("parameter", nargs="?", help="parameter to sweep (default eta)")
    sweep_p.add_argument("--start", type=float, help="first grid value")
    sweep_p.add_argument("--stop", type=float, help="last grid value")
    sweep_p.add_argument("--steps", type=int, help="number of grid points (>= 2)")
    sub.add_parser(
        "oracle", parents=[common], help="trajectory ensemble vs master-equation solution"
    )
    sub.add_parser("baseline", parents=[common], help="sudden-excitation baseline ensemble")
    sub.add_parser("closedform", parents=[common], help="weak-driving closed-form report")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(args.config, args.set)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError(f"master_seed must be >= 0, got {args.seed}", key="master_seed")
            cfg = dataclasses.replace(cfg, master_seed=args.seed)
        if args.runs is not None:
            if args.runs < 1:
                raise ConfigError(f"n_runs must be >= 1, got {args.runs}", key="n_runs")
            cfg = dataclasses.replace(cfg, n_runs=args.runs)
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError(f"workers must be >= 1, got {args.workers}", key="workers")
            cfg = dataclasses.replace(cfg, workers=args.workers)
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RegimeError as exc:
        print(f"regime error: {exc}", file=sys.stderr)
        return EXIT_REGIME
    except CavsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
