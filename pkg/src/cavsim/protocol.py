"""Entanglement-generation protocol, sudden-excitation baseline, ensembles.

The main protocol starts both ions in level 2 with empty cavities, drives
weakly, and waits for the first detector click inside the window.  A click
heralds success: the pumps are switched off, the residual cavity field is
allowed to drain, and the reduced two-ion state is scored against the Bell
state associated with the detector that fired.  No click by the window end
is a failure.  Dark-count clicks are indistinguishable from real ones at
the detector, so they classify as successes too (scored against the firing
detector's target, which is what makes them costly).

The baseline variant injects a fixed post-pulse superposition in which
each ion has either emitted its photon or not, turns all coherent
couplings off, and classifies by the total number of clicks while the
photons leak out: exactly one click succeeds, zero or two fail.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields as dataclass_fields
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import ConfigError, RegimeError
from .hilbert import TensorBasis, fidelity, reduce_to_ions
from .model import BuiltModel, ChannelKind, ModelVariant, PhysicalParams, build_model
from .trajectory import (
    IntegratorConfig,
    StepPropagator,
    Termination,
    TrajectoryMode,
    TrajectoryRecord,
    run_trajectory,
    trajectory_rngs,
)

__all__ = [
    "OutcomeKind",
    "ProtocolKind",
    "Outcome",
    "EnsembleStats",
    "UnconditionalEnsemble",
    "ProtocolKit",
    "target_state",
    "baseline_initial_state",
    "run_protocol",
    "run_baseline_sudden",
    "run_ensemble",
    "run_unconditional_ensemble",
    "sweep_parameter",
]

CHUNK_SIZE = 4096  # trajectories per reduction chunk, fixed so results never depend on workers


class OutcomeKind(Enum):
    SUCCESS_D1 = "success_d1"
    SUCCESS_D2 = "success_d2"
    SUCCESS_DARK_D1 = "success_dark_d1"
    SUCCESS_DARK_D2 = "success_dark_d2"
    NO_CLICK = "no_click"
    # baseline two-click classification; never produced by the first-click protocol
    MULTI_CLICK = "multi_click"

    @property
    def is_success(self) -> bool:
        return self in _SUCCESS_KINDS


_SUCCESS_KINDS = frozenset(
    {
        OutcomeKind.SUCCESS_D1,
        OutcomeKind.SUCCESS_D2,
        OutcomeKind.SUCCESS_DARK_D1,
        OutcomeKind.SUCCESS_DARK_D2,
    }
)


class ProtocolKind(Enum):
    WEAK_DRIVING = "weak_driving"
    BASELINE_SUDDEN = "baseline_sudden"


@dataclass(frozen=True)
class Outcome:
    """Classification of one protocol run.

    ``ion_fidelity`` is evaluated after the post-click drain;
    ``fidelity_at_click`` is the same overlap the instant the click fired
    (cavity not yet traced clean), kept because the two conventions differ
    slightly and both are worth reporting.  Fidelities are present exactly
    for success outcomes.
    """

    classification: OutcomeKind
    click_time: float | None
    detector: str | None
    ion_fidelity: float | None
    fidelity_at_click: float | None
    record: TrajectoryRecord | None = None


@dataclass(frozen=True)
class EnsembleStats:
    """Aggregate counts and conditional fidelity over an ensemble."""

    n_runs: int
    n_no_click: int
    n_d1: int
    n_d2: int
    n_dark_d1: int
    n_dark_d2: int
    n_multi_click: int
    mean_fidelity: float | None
    fidelity_err: float | None
    mean_fidelity_at_click: float | None
    fidelity_at_click_err: float | None

    @property
    def n_success(self) -> int:
        return self.n_d1 + self.n_d2 + self.n_dark_d1 + self.n_dark_d2

    @property
    def p_success(self) -> float:
        return self.n_success / self.n_runs

    @property
    def p_success_err(self) -> float:
        p = self.p_success
        return math.sqrt(p * (1.0 - p) / self.n_runs)

    @property
    def n_via_d1(self) -> int:
        return self.n_d1 + self.n_dark_d1

    @property
    def n_via_d2(self) -> int:
        return self.n_d2 + self.n_dark_d2


@dataclass(frozen=True)
class UnconditionalEnsemble:
    """Mean density matrices (full space) at fixed times, full-window mode."""

    times: tuple[float, ...]
    states: tuple[np.ndarray, ...]
    n_runs: int


def target_state(detector, basis: TensorBasis) -> np.ndarray:
    """Bell state over the two-ion space heralded by a detector click.

    The symmetric detector port heralds (|2,1> + |1,2>)/sqrt(2); the
    antisymmetric port heralds (|1,2> - |2,1>)/sqrt(2), matching the sign
    convention of the beam-splitter channels.  Accepts "d1"/"d2" or any
    click-kind channel label (dark kinds map to their detector).
    """
    if isinstance(detector, ChannelKind):
        name = detector.detector
        if name is None:
            raise ConfigError(f"channel kind {detector.value!r} is not a detector")
    else:
        name = str(detector).lower()
    if name not in ("d1", "d2"):
        raise ConfigError(f"unknown detector label {detector!r}")
    vec = np.zeros(basis.ion_dim, dtype=complex)
    amp = 1.0 / math.sqrt(2.0)
    vec[basis.ion_index(1, 2)] = amp
    vec[basis.ion_index(2, 1)] = amp if name == "d1" else -amp
    return vec


def baseline_initial_state(basis: TensorBasis) -> np.ndarray:
    """Post-pulse state for the sudden-excitation baseline.

    Each ion is an equal superposition of "not yet emitted" (level 2,
    empty cavity) and "emitted" (level 1, one photon), with a quarter
    weight on each product branch:
    (|2,2;0,0> - |1,1;1,1> + i|2,1;0,1> + i|1,2;1,0>)/2.
    """
    if basis.n_modes != 2:
        raise ConfigError("the baseline needs two cavity modes")
    psi = np.zeros(basis.dim, dtype=complex)
    psi[basis.index_of(2, 2, 0, 0)] = 0.5
    psi[basis.index_of(1, 1, 1, 1)] = -0.5
    psi[basis.index_of(2, 1, 0, 1)] = 0.5j
    psi[basis.index_of(1, 2, 1, 0)] = 0.5j
    return psi


class ProtocolKit:
    """Prebuilt models and propagators for repeated protocol runs.

    Building the step propagator costs a couple of dozen dense matrix
    products, so ensembles construct one kit and reuse it for every
    trajectory.
    """

    def __init__(
        self,
        params: PhysicalParams,
        *,
        kind: ProtocolKind = ProtocolKind.WEAK_DRIVING,
        variant: ModelVariant = ModelVariant.TWO_CAVITY_FULL,
        cfg: IntegratorConfig | None = None,
        t_drain: float | None = None,
        window: float | None = None,
        include_level_shifts: bool = True,
    ):
        self.params = params
        self.kind = kind
        self.variant = variant
        self.cfg = cfg if cfg is not None else IntegratorConfig.for_params(params)
        self.cfg.validate_for(params.delta)
        self.include_level_shifts = include_level_shifts

        if kind is ProtocolKind.BASELINE_SUDDEN:
            if variant is ModelVariant.SINGLE_CAVITY:
                raise ConfigError("the baseline is defined for the two-cavity setups")
            if params.kappa <= 0:
                raise RegimeError("the baseline needs kappa > 0 for the photons to leak out")
            # couplings off: photons only decay and get detected
            frozen = params.replace(g=0.0, omega=0.0)
            self.window = float(window) if window is not None else 8.0 / params.kappa
            if self.window <= 0:
                raise ConfigError(f"window must be > 0, got {self.window}", key="window")
            self.model = build_model(frozen, variant, include_level_shifts=include_level_shifts)
            self.initial = baseline_initial_state(self.model.basis)
            self.t_drain = 0.0
            self.drain_model = None
            self.drain_prop = None
        else:
            self.window = float(window) if window is not None else params.window
            if self.window <= 0:
                raise ConfigError(f"window must be > 0, got {self.window}", key="window")
            self.model = build_model(params, variant, include_level_shifts=include_level_shifts)
            self.initial = self.model.initial_protocol_state()
            if t_drain is None:
                t_drain = 5.0 / params.kappa if params.kappa > 0 else 0.0
            if t_drain < 0:
                raise ConfigError(f"t_drain must be >= 0, got {t_drain}", key="t_drain")
            self.t_drain = float(t_drain)
            if self.t_drain > 0:
                # pumps off after the herald; cavity coupling stays, field drains
                drained = params.replace(omega=0.0, dark_rate=0.0)
                self.drain_model = build_model(drained, variant, include_level_shifts=include_level_shifts)
                self.drain_prop = StepPropagator(
                    self.drain_model.h_eff,
                    self.cfg.dt,
                    max(1, math.ceil(self.t_drain / self.cfg.dt)),
                )
            else:
                self.drain_model = None
                self.drain_prop = None

        self.basis = self.model.basis
        self.prop = StepPropagator(
            self.model.h_eff, self.cfg.dt, max(1, math.ceil(self.window / self.cfg.dt))
        )
        self.targets = {
            "d1": target_state("d1", self.basis),
            "d2": target_state("d2", self.basis),
        }

    def run_one(self, rng, dark_rng=None, keep_record: bool = False) -> Outcome:
        if self.kind is ProtocolKind.BASELINE_SUDDEN:
            return self._run_baseline(rng, dark_rng, keep_record)
        return self._run_weak_driving(rng, dark_rng, keep_record)

    def _run_weak_driving(self, rng, dark_rng, keep_record: bool) -> Outcome:
        rec = run_trajectory(
            self.model,
            self.cfg,
            rng,
            mode=TrajectoryMode.FIRST_CLICK,
            window=self.window,
            initial_state=self.initial,
            dark_rng=dark_rng,
            propagator=self.prop,
        )
        if rec.termination is Termination.WINDOW_EXPIRED:
            return Outcome(
                OutcomeKind.NO_CLICK, None, None, None, None, rec if keep_record else None
            )
        click = rec.events[-1]
        detector = click.kind.detector
        dark = click.kind in (ChannelKind.DARK_D1, ChannelKind.DARK_D2)
        target = self.targets[detector]
        f_click = fidelity(reduce_to_ions(self.basis, rec.final_state), target)
        if self.t_drain > 0:
            rec = run_trajectory(
                self.drain_model,
                self.cfg,
                rng,
                mode=TrajectoryMode.FULL_WINDOW,
                window=self.t_drain,
                initial_state=rec.final_state,
                propagator=self.drain_prop,
                start_time=rec.end_time,
                events=list(rec.events),
            )
        f = fidelity(reduce_to_ions(self.basis, rec.final_state), target)
        if dark:
            kind = OutcomeKind.SUCCESS_DARK_D1 if detector == "d1" else OutcomeKind.SUCCESS_DARK_D2
        else:
            kind = OutcomeKind.SUCCESS_D1 if detector == "d1" else OutcomeKind.SUCCESS_D2
        return Outcome(
            kind, click.time, detector, f, f_click, rec if keep_record else None
        )

    def _run_baseline(self, rng, dark_rng, keep_record: bool) -> Outcome:
        rec = run_trajectory(
            self.model,
            self.cfg,
            rng,
            mode=TrajectoryMode.FULL_WINDOW,
            window=self.window,
            initial_state=self.initial,
            dark_rng=dark_rng,
            propagator=self.prop,
        )
        clicks = [ev for ev in rec.events if ev.kind.is_click]
        kept = rec if keep_record else None
        if not clicks:
            return Outcome(OutcomeKind.NO_CLICK, None, None, None, None, kept)
        if len(clicks) > 1:
            return Outcome(OutcomeKind.MULTI_CLICK, clicks[0].time, None, None, None, kept)
        click = clicks[0]
        detector = click.kind.detector
        dark = click.kind in (ChannelKind.DARK_D1, ChannelKind.DARK_D2)
        f = fidelity(reduce_to_ions(self.basis, rec.final_state), self.targets[detector])
        if dark:
            kind = OutcomeKind.SUCCESS_DARK_D1 if detector == "d1" else OutcomeKind.SUCCESS_DARK_D2
        else:
            kind = OutcomeKind.SUCCESS_D1 if detector == "d1" else OutcomeKind.SUCCESS_D2
        return Outcome(kind, click.time, detector, f, None, kept)


def run_protocol(
    params: PhysicalParams,
    cfg: IntegratorConfig | None = None,
    seed: int = 0,
    *,
    variant: ModelVariant = ModelVariant.TWO_CAVITY_FULL,
    t_drain: float | None = None,
    include_level_shifts: bool = True,
    keep_record: bool = True,
) -> Outcome:
    """One run of the first-click protocol from a bare seed."""
    kit = ProtocolKit(
        params,
        kind=ProtocolKind.WEAK_DRIVING,
        variant=variant,
        cfg=cfg,
        t_drain=t_drain,
        include_level_shifts=include_level_shifts,
    )
    rng, dark_rng = trajectory_rngs(int(seed), 0)
    return kit.run_one(rng, dark_rng, keep_record=keep_record)


def run_baseline_sudden(
    params: PhysicalParams,
    cfg: IntegratorConfig | None = None,
    seed: int = 0,
    *,
    window: float | None = None,
    keep_record: bool = True,
) -> Outcome:
    """One run of the sudden-excitation baseline from a bare seed."""
    kit = ProtocolKit(
        params, kind=ProtocolKind.BASELINE_SUDDEN, cfg=cfg, window=window
    )
    rng, dark_rng = trajectory_rngs(int(seed), 0)
    return kit.run_one(rng, dark_rng, keep_record=keep_record)


# --- ensemble machinery ----------------------------------------------------

_SUMS_LEN = 13


def _empty_sums() -> list:
    return [0] * 7 + [0.0, 0.0, 0] + [0.0, 0.0, 0]


def _accumulate(sums: list, outcome: Outcome) -> None:
    sums[0] += 1
    c = outcome.classification
    if c is OutcomeKind.NO_CLICK:
        sums[1] += 1
    elif c is OutcomeKind.SUCCESS_D1:
        sums[2] += 1
    elif c is OutcomeKind.SUCCESS_D2:
        sums[3] += 1
    elif c is OutcomeKind.SUCCESS_DARK_D1:
        sums[4] += 1
    elif c is OutcomeKind.SUCCESS_DARK_D2:
        sums[5] += 1
    else:
        sums[6] += 1
    if outcome.ion_fidelity is not None:
        f = outcome.ion_fidelity
        sums[7] += f
        sums[8] += f * f
        sums[9] += 1
    if outcome.fidelity_at_click is not None:
        f = outcome.fidelity_at_click
        sums[10] += f
        sums[11] += f * f
        sums[12] += 1


def _merge(total: list, part: Sequence) -> None:
    for i, value in enumerate(part):
        total[i] += value


def _mean_and_err(total: float, total_sq: float, n: int) -> tuple[float | None, float | None]:
    if n == 0:
        return None, None
    mean = total / n
    if n < 2:
        return mean, 0.0
    var = max(total_sq - n * mean * mean, 0.0) / (n - 1)
    return mean, math.sqrt(var / n)


def _stats_from_sums(sums: Sequence) -> EnsembleStats:
    mean_f, err_f = _mean_and_err(sums[7], sums[8], sums[9])
    mean_fc, err_fc = _mean_and_err(sums[10], sums[11], sums[12])
    return EnsembleStats(
        n_runs=int(sums[0]),
        n_no_click=int(sums[1]),
        n_d1=int(sums[2]),
        n_d2=int(sums[3]),
        n_dark_d1=int(sums[4]),
        n_dark_d2=int(sums[5]),
        n_multi_click=int(sums[6]),
        mean_fidelity=mean_f,
        fidelity_err=err_f,
        mean_fidelity_at_click=mean_fc,
        fidelity_at_click_err=err_fc,
    )


_KIT_CACHE: dict = {}


def _cached_kit(spec: tuple) -> ProtocolKit:
    kit = _KIT_CACHE.get(spec)
    if kit is None:
        params, cfg, kind, variant, t_drain, window, shifts = spec
        kit = ProtocolKit(
            params,
            kind=kind,
            variant=variant,
            cfg=cfg,
            t_drain=t_drain,
            window=window,
            include_level_shifts=shifts,
        )
        _KIT_CACHE.clear()  # keep at most one kit alive per worker
        _KIT_CACHE[spec] = kit
    return kit


def _ensemble_chunk(args) -> list:
    spec, master_seed, start, count = args
    kit = _cached_kit(spec)
    sums = _empty_sums()
    for index in range(start, start + count):
        rng, dark_rng = trajectory_rngs(master_seed, index)
        _accumulate(sums, kit.run_one(rng, dark_rng))
    return sums


def run_ensemble(
    params: PhysicalParams,
    cfg: IntegratorConfig | None = None,
    n_runs: int = 1,
    master_seed: int = 0,
    *,
    kind: ProtocolKind = ProtocolKind.WEAK_DRIVING,
    variant: ModelVariant = ModelVariant.TWO_CAVITY_FULL,
    workers: int = 1,
    t_drain: float | None = None,
    window: float | None = None,
    include_level_shifts: bool = True,
) -> EnsembleStats:
    """Run an ensemble and aggregate outcome statistics.

    Per-run generators derive from (master_seed, run index), and chunks are
    reduced in index order, so the result is identical for any ``workers``.
    """
    if n_runs < 1:
        raise ConfigError(f"n_runs must be >= 1, got {n_runs}", key="n_runs")
    if cfg is None:
        cfg = IntegratorConfig.for_params(params)
    spec = (params, cfg, kind, variant, t_drain, window, include_level_shifts)
    chunks = [
        (spec, master_seed, start, min(CHUNK_SIZE, n_runs - start))
        for start in range(0, n_runs, CHUNK_SIZE)
    ]
    total = _empty_sums()
    if workers <= 1 or len(chunks) == 1:
        for chunk in chunks:
            _merge(total, _ensemble_chunk(chunk))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_ensemble_chunk, chunks):
                _merge(total, part)
    return _stats_from_sums(total)


def _unconditional_chunk(args) -> tuple[int, list[np.ndarray]]:
    spec, master_seed, start, count, times, initial = args
    kit = _cached_kit(spec)
    dim = kit.basis.dim
    n_times = len(times)
    sums = [np.zeros((dim, dim), dtype=complex) for _ in range(n_times)]
    buffer_rows = 512
    buffers = [np.empty((buffer_rows, dim), dtype=complex) for _ in range(n_times)]
    filled = 0

    def flush():
        nonlocal filled
        if filled:
            for s in range(n_times):
                block = buffers[s][:filled]
                sums[s] += block.conj().T @ block
            filled = 0

    for index in range(start, start + count):
        rng, dark_rng = trajectory_rngs(master_seed, index)
        rec = run_trajectory(
            kit.model,
            kit.cfg,
            rng,
            mode=TrajectoryMode.FULL_WINDOW,
            window=kit.window,
            initial_state=kit.initial if initial is None else initial,
            dark_rng=dark_rng,
            snapshot_times=times,
            propagator=kit.prop,
        )
        for s in range(n_times):
            buffers[s][filled] = rec.snapshots[s]
        filled += 1
        if filled == buffer_rows:
            flush()
    flush()
    return count, sums


def run_unconditional_ensemble(
    params: PhysicalParams,
    cfg: IntegratorConfig | None = None,
    n_runs: int = 1,
    master_seed: int = 0,
    *,
    times: Sequence[float],
    variant: ModelVariant = ModelVariant.TWO_CAVITY_FULL,
    workers: int = 1,
    window: float | None = None,
    initial_state: np.ndarray | None = None,
    include_level_shifts: bool = True,
) -> UnconditionalEnsemble:
    """Ensemble-averaged density matrices at fixed times (full-window mode).

    Every trajectory runs to the window end regardless of clicks; the mean
    of the normalized snapshot projectors estimates the unconditional
    density matrix, which the master-equation oracle can be checked
    against.
    """
    if n_runs < 1:
        raise ConfigError(f"n_runs must be >= 1, got {n_runs}", key="n_runs")
    if not times:
        raise ConfigError("at least one snapshot time is required", key="times")
    if cfg is None:
        cfg = IntegratorConfig.for_params(params)
    times = tuple(float(t) for t in times)
    spec = (params, cfg, ProtocolKind.WEAK_DRIVING, variant, 0.0, window, include_level_shifts)
    chunks = [
        (spec, master_seed, start, min(CHUNK_SIZE, n_runs - start), times, initial_state)
        for start in range(0, n_runs, CHUNK_SIZE)
    ]
    if workers <= 1 or len(chunks) == 1:
        parts = [_unconditional_chunk(chunk) for chunk in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_unconditional_chunk, chunks))
    total_count = 0
    totals: list[np.ndarray] | None = None
    for count, sums in parts:
        total_count += count
        if totals is None:
            totals = sums
        else:
            for s in range(len(totals)):
                totals[s] += sums[s]
    states = tuple(s / total_count for s in totals)
    return UnconditionalEnsemble(times=times, states=states, n_runs=total_count)


def sweep_parameter(
    params: PhysicalParams,
    name: str,
    values: Sequence[float],
    *,
    cfg: IntegratorConfig | None = None,
    n_runs: int = 1,
    master_seed: int = 0,
    kind: ProtocolKind = ProtocolKind.WEAK_DRIVING,
    variant: ModelVariant = ModelVariant.TWO_CAVITY_FULL,
    workers: int = 1,
    t_drain: float | None = None,
    window: float | None = None,
) -> list[tuple[float, EnsembleStats]]:
    """Run one ensemble per parameter value, same master seed at each point."""
    valid = {f.name for f in dataclass_fields(PhysicalParams)}
    if name not in valid:
        raise ConfigError(f"unknown sweep parameter {name!r}", key=name)
    results = []
    for value in values:
        point = params.replace(**{name: int(value) if name == "n_max" else float(value)})
        stats = run_ensemble(
            point,
            cfg,
            n_runs,
            master_seed,
            kind=kind,
            variant=variant,
            workers=workers,
            t_drain=t_drain,
            window=window,
        )
        results.append((float(value), stats))
    return results
