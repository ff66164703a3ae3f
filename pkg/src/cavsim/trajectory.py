"""Stochastic quantum-jump propagation with norm-threshold waiting times.

Between collapses a trajectory follows the non-Hermitian generator
``h_eff``; its squared norm is the survival probability of the current
no-jump interval.  Each interval draws one uniform threshold ``r`` and the
next jump fires when ``||psi(t)||^2`` decays through ``r``.  The jump
channel is selected with probability proportional to ``||L_k psi||^2``,
the state collapses to the normalized image, and a fresh threshold is
drawn.

Deterministic evolution uses the classical fourth-order one-step method.
Because the generator is time independent, one step of size ``dt`` is a
fixed linear map; stretches of 2^m steps are applied as precomputed
repeated squarings of that map, which is the same polynomial in
``h_eff * dt`` as stepping 2^m times and keeps long no-jump stretches
cheap.  The squared norm is nonincreasing along the flow, so the first
threshold crossing can be located by a dyadic descent over whole steps
followed by a bracketed search inside a single step.

Dark counts are Poisson arrivals per detector, independent of the state;
they are merged into the event record as clicks without collapsing
anything.  They draw from their own generator so that switching them on
or off never shifts the physical randomness of a run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import ConfigError, DimensionError, NormalizationError
from .hilbert import SparseOperator, normalize
from .model import BuiltModel, ChannelKind, JumpChannel, ModelVariant

__all__ = [
    "MAX_DT_TIMES_DELTA",
    "fastest_rate_scale",
    "IntegratorConfig",
    "TrajectoryMode",
    "Termination",
    "TrajectoryEvent",
    "TrajectoryRecord",
    "evolve_no_jump",
    "sample_jump",
    "StepPropagator",
    "run_trajectory",
    "trajectory_rngs",
]

MAX_DT_TIMES_DELTA = 0.05


def fastest_rate_scale(params) -> float:
    """Largest frequency/rate the integrator step must resolve."""
    return max(
        abs(params.delta),
        2.0 * params.kappa,
        params.g,
        params.omega,
        2.0 * (params.gamma31 + params.gamma32),
        1.0,
    )


@dataclass(frozen=True)
class IntegratorConfig:
    """Step size and jump-location policy of the one-step integrator.

    ``dt`` must resolve the fastest frequency in the generator; the bound
    ``dt * |delta| <= 0.05`` is checked both here (via :meth:`for_params`)
    and again when a run starts.  ``jump_time_tol`` bounds the residual
    ``| ||psi(t*)||^2 - r |`` relative to the threshold ``r`` when a jump
    time is located.  ``renorm_each_step`` keeps the working vector at unit
    norm and carries the survival weight separately; results are identical,
    it only guards against underflow in extreme regimes.
    """

    dt: float
    jump_time_tol: float = 1e-6
    renorm_each_step: bool = False

    def __post_init__(self):
        if not (self.dt > 0):
            raise ConfigError(f"dt must be > 0, got {self.dt}", key="dt")
        if not (0 < self.jump_time_tol < 1):
            raise ConfigError(
                f"jump_time_tol must lie in (0, 1), got {self.jump_time_tol}",
                key="jump_time_tol",
            )

    def validate_for(self, delta: float) -> None:
        if self.dt * abs(delta) > MAX_DT_TIMES_DELTA * (1 + 1e-12):
            raise ConfigError(
                f"dt = {self.dt} does not resolve delta = {delta}: "
                f"dt*|delta| must be <= {MAX_DT_TIMES_DELTA}",
                key="dt",
            )

    @classmethod
    def for_params(cls, params, dt: float | None = None, **kwargs) -> "IntegratorConfig":
        """Config with dt defaulting to 0.02 over the fastest rate scale."""
        if dt is None:
            dt = 0.02 / fastest_rate_scale(params)
        cfg = cls(dt=dt, **kwargs)
        cfg.validate_for(params.delta)
        return cfg


class TrajectoryMode(Enum):
    FIRST_CLICK = "first_click"
    FULL_WINDOW = "full_window"


class Termination(Enum):
    FIRST_CLICK = "first_click"
    WINDOW_EXPIRED = "window_expired"


@dataclass(frozen=True)
class TrajectoryEvent:
    time: float
    kind: ChannelKind


@dataclass(frozen=True)
class TrajectoryRecord:
    """Outcome of one stochastic run.

    ``events`` are time ordered; ``final_state`` is normalized; snapshots
    (when requested) hold normalized copies of the state at the requested
    times, in order.
    """

    events: tuple[TrajectoryEvent, ...]
    final_state: np.ndarray
    end_time: float
    termination: Termination
    snapshots: tuple[np.ndarray, ...] = ()


def evolve_no_jump(psi: np.ndarray, h_eff: SparseOperator, dt: float) -> np.ndarray:
    """One classical fourth-order step of d psi / dt = -i * h_eff * psi."""
    if psi.shape != (h_eff.dim,):
        raise DimensionError(f"state shape {psi.shape} incompatible with dimension {h_eff.dim}")
    if not (dt > 0):
        raise ConfigError(f"dt must be > 0, got {dt}", key="dt")
    m = h_eff.csr() * (-1j)
    return _rk4_step(m, psi, dt)


def _rk4_step(m, psi: np.ndarray, h: float) -> np.ndarray:
    k1 = m.dot(psi)
    k2 = m.dot(psi + (0.5 * h) * k1)
    k3 = m.dot(psi + (0.5 * h) * k2)
    k4 = m.dot(psi + h * k3)
    return psi + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)


def sample_jump(
    psi: np.ndarray, channels: Sequence[JumpChannel], u: float
) -> tuple[int, np.ndarray]:
    """Select the collapse channel at a jump and apply it.

    Parameters
    ----------
    psi:
        State at the jump time; need not be normalized (the selection
        weights ``||L_k psi||^2`` are scale free).
    channels:
        Candidate channels, scanned in order.
    u:
        Uniform variate in [0, 1).

    Returns
    -------
    (index, collapsed)
        Index of the selected channel and the normalized post-jump state.
    """
    if not channels:
        raise ConfigError("cannot sample a jump without channels")
    images = [ch.operator.apply(psi) for ch in channels]
    weights = [float(np.vdot(image, image).real) for image in images]
    total = sum(weights)
    if total <= 0.0:
        raise NormalizationError("no jump channel has weight on this state")
    target = u * total
    acc = 0.0
    for k, (image, weight) in enumerate(zip(images, weights)):
        acc += weight
        if target < acc or k == len(channels) - 1:
            return k, normalize(image)
    raise AssertionError("unreachable")


class StepPropagator:
    """Precomputed one-step map of the integrator and its dyadic powers.

    ``powers[m]`` advances a state by 2^m grid steps in a single
    matrix-vector product.  ``partial_step`` performs one fourth-order
    step of size h <= dt for off-grid times (horizons, jump location).
    """

    def __init__(self, h_eff: SparseOperator, dt: float, max_steps: int):
        if max_steps < 1:
            raise ConfigError(f"max_steps must be >= 1, got {max_steps}")
        self.dt = float(dt)
        self.dim = h_eff.dim
        self._m = h_eff.csr() * (-1j)
        a = self._m.toarray() * dt
        step = np.eye(h_eff.dim, dtype=complex)
        # Horner form of I + A + A^2/2 + A^3/6 + A^4/24
        for k in (4, 3, 2, 1):
            step = np.eye(h_eff.dim, dtype=complex) + (a @ step) / k
        levels = max(1, int(max_steps).bit_length())
        self.powers = [step]
        for _ in range(levels - 1):
            self.powers.append(self.powers[-1] @ self.powers[-1])

    def partial_step(self, psi: np.ndarray, h: float) -> np.ndarray:
        if h <= 0:
            return psi
        return _rk4_step(self._m, psi, min(h, self.dt))

    def advance(self, psi: np.ndarray, n_steps: int) -> np.ndarray:
        """Apply n_steps grid steps (no norm monitoring)."""
        if n_steps < 0:
            raise ConfigError(f"n_steps must be >= 0, got {n_steps}")
        top = len(self.powers) - 1
        block = 1 << top
        while n_steps >= block:
            psi = self.powers[top] @ psi
            n_steps -= block
        m = 0
        while n_steps:
            if n_steps & 1:
                psi = self.powers[m] @ psi
            n_steps >>= 1
            m += 1
        return psi

    def walk_to_crossing(
        self, psi: np.ndarray, n_steps: int, threshold: float, renorm: bool
    ):
        """Advance up to ``n_steps``, stopping at the first norm crossing.

        Relies on the squared norm being nonincreasing along the no-jump
        flow.  Returns ``(crossed, steps_done, psi, weight)`` where
        ``weight`` is the product of squared norms divided out when
        ``renorm`` is set (1.0 otherwise).  When ``crossed`` is true the
        crossing lies strictly within the single step following
        ``steps_done``; the caller refines it with :meth:`locate_in_step`.
        """
        done = 0
        weight = 1.0
        powers = self.powers
        top = len(powers) - 1
        remaining = n_steps
        block = 0
        while remaining > 0:
            m = min(remaining.bit_length() - 1, top)
            trial = powers[m].dot(psi)
            n2 = float(np.vdot(trial, trial).real)
            if weight * n2 >= threshold:
                done += 1 << m
                remaining -= 1 << m
                if renorm:
                    scale = math.sqrt(n2)
                    psi = trial / scale
                    weight *= n2
                else:
                    psi = trial
                continue
            if m == 0:
                return True, done, psi, weight
            # crossing somewhere inside this 2^m block: binary refinement
            span = 1 << m
            while span > 1:
                half = span >> 1
                k = half.bit_length() - 1
                trial = powers[k].dot(psi)
                n2 = float(np.vdot(trial, trial).real)
                if weight * n2 >= threshold:
                    done += half
                    if renorm:
                        scale = math.sqrt(n2)
                        psi = trial / scale
                        weight *= n2
                    else:
                        psi = trial
                span = half
            return True, done, psi, weight
        return False, done, psi, weight

    def locate_in_step(
        self, psi_anchor: np.ndarray, h_max: float, threshold: float, rel_tol: float
    ) -> tuple[float, np.ndarray]:
        """Find h in (0, h_max] where the squared norm meets ``threshold``.

        ``psi_anchor`` must satisfy ``||psi_anchor||^2 > threshold`` and a
        full step of ``h_max`` must land at or below it.  Probes are single
        fourth-order steps from the anchor; the bracket is narrowed with a
        log-space interpolant (the decay is locally exponential) clipped
        away from the endpoints, so convergence is guaranteed.
        """
        lo_h, lo_n2 = 0.0, float(np.vdot(psi_anchor, psi_anchor).real)
        psi_hi = self.partial_step(psi_anchor, h_max)
        hi_n2 = float(np.vdot(psi_hi, psi_hi).real)
        hi_h = h_max
        if abs(hi_n2 - threshold) <= rel_tol * threshold:
            return hi_h, psi_hi
        best_h, best_psi = hi_h, psi_hi
        for _ in range(200):
            if hi_n2 <= 0 or lo_n2 <= hi_n2:
                frac = 0.5
            else:
                frac = math.log(lo_n2 / threshold) / math.log(lo_n2 / hi_n2)
            frac = min(max(frac, 0.05), 0.95)
            h = lo_h + frac * (hi_h - lo_h)
            probe = self.partial_step(psi_anchor, h)
            n2 = float(np.vdot(probe, probe).real)
            if abs(n2 - threshold) <= rel_tol * threshold:
                return h, probe
            if n2 > threshold:
                lo_h, lo_n2 = h, n2
            else:
                hi_h, hi_n2 = h, n2
                best_h, best_psi = h, probe
            if hi_h - lo_h <= 1e-16 * self.dt:
                break
        return best_h, best_psi


def trajectory_rngs(master_seed: int, index: int):
    """Physical and dark-count generators for one ensemble member.

    Kept as two independent streams so that enabling dark counts never
    perturbs the physical randomness of a run (paired comparisons stay
    paired).
    """
    physical = np.random.default_rng((master_seed, index, 0))
    dark = np.random.default_rng((master_seed, index, 1))
    return physical, dark


def _draw_dark_arrivals(model: BuiltModel, window: float, dark_rng) -> list[tuple[float, ChannelKind]]:
    rate_per_detector = model.params.dark_rate
    if rate_per_detector <= 0 or dark_rng is None:
        return []
    two_detectors = model.variant is not ModelVariant.SINGLE_CAVITY
    total_rate = rate_per_detector * (2.0 if two_detectors else 1.0)
    arrivals: list[tuple[float, ChannelKind]] = []
    t = 0.0
    while True:
        t += -math.log1p(-dark_rng.random()) / total_rate
        if t >= window:
            return arrivals
        if two_detectors:
            kind = ChannelKind.DARK_D1 if dark_rng.random() < 0.5 else ChannelKind.DARK_D2
        else:
            kind = ChannelKind.DARK_D1
        arrivals.append((t, kind))


_HORIZON_SNAPSHOT = 0
_HORIZON_DARK = 1
_HORIZON_END = 2


def run_trajectory(
    model: BuiltModel,
    cfg: IntegratorConfig,
    rng,
    *,
    mode: TrajectoryMode = TrajectoryMode.FIRST_CLICK,
    window: float | None = None,
    initial_state: np.ndarray | None = None,
    dark_rng=None,
    snapshot_times: Sequence[float] = (),
    propagator: StepPropagator | None = None,
    start_time: float = 0.0,
    events: list[TrajectoryEvent] | None = None,
) -> TrajectoryRecord:
    """Propagate one stochastic trajectory over a detection window.

    Parameters
    ----------
    model:
        Built model providing the generator and collapse channels.
    cfg:
        Integrator configuration; ``cfg.dt`` must resolve the detuning.
    rng:
        ``numpy.random.Generator`` for thresholds and channel selection,
        or an integer seed (two derived streams are then created, the
        second for dark counts).
    mode:
        FIRST_CLICK stops at the first detector or dark-count event;
        FULL_WINDOW records every jump out to the window end.
    window:
        Length of the run; defaults to ``model.params.window``.
    initial_state:
        Normalized start vector; defaults to both ions in level 2 with
        empty cavities.
    dark_rng:
        Generator for the dark-count arrival stream (unused when the dark
        rate is zero).
    snapshot_times:
        Times at which normalized state copies are stored on the record.
    propagator:
        Precomputed :class:`StepPropagator` to reuse across runs.
    start_time, events:
        Continuation support: offsets event times and appends to an
        existing event list (used when a run is extended after a click).
    """
    if isinstance(rng, (int, np.integer)):
        rng, derived_dark = trajectory_rngs(int(rng), 0)
        if dark_rng is None:
            dark_rng = derived_dark
    cfg.validate_for(model.params.delta)
    window = float(model.params.window if window is None else window)
    if window <= 0:
        raise ConfigError(f"window must be > 0, got {window}", key="window")
    psi = model.initial_protocol_state() if initial_state is None else np.array(initial_state, dtype=complex)
    if psi.shape != (model.basis.dim,):
        raise DimensionError(
            f"initial state shape {psi.shape} incompatible with dimension {model.basis.dim}"
        )
    n2 = float(np.vdot(psi, psi).real)
    if abs(n2 - 1.0) > 1e-9:
        raise NormalizationError(f"initial state norm^2 = {n2!r} is not 1 within 1e-9")
    if propagator is None:
        propagator = StepPropagator(model.h_eff, cfg.dt, max(1, math.ceil(window / cfg.dt)))

    horizons: list[tuple[float, int, ChannelKind | None]] = []
    previous = -math.inf
    for t_snap in snapshot_times:
        if not 0.0 <= t_snap <= window:
            raise ConfigError(f"snapshot time {t_snap} outside [0, {window}]", key="snapshot_times")
        if t_snap < previous:
            raise ConfigError("snapshot times must be sorted", key="snapshot_times")
        previous = t_snap
        horizons.append((t_snap, _HORIZON_SNAPSHOT, None))
    for t_dark, kind in _draw_dark_arrivals(model, window, dark_rng):
        horizons.append((t_dark, _HORIZON_DARK, kind))
    horizons.append((window, _HORIZON_END, None))
    horizons.sort(key=lambda item: (item[0], item[1]))

    dt = cfg.dt
    renorm = cfg.renorm_each_step
    tol = cfg.jump_time_tol
    channels = model.channels
    first_click = mode is TrajectoryMode.FIRST_CLICK
    out_events: list[TrajectoryEvent] = events if events is not None else []
    snapshots: list[np.ndarray] = []

    t = 0.0
    weight = 1.0  # squared norm divided out of psi so far

    def draw_threshold() -> float:
        value = 1.0 - rng.random()
        if value < 1e-14:
            raise NormalizationError("norm threshold below the 1e-14 underflow bound")
        return value

    r = draw_threshold()

    def record(termination: Termination, end_time: float, state: np.ndarray) -> TrajectoryRecord:
        return TrajectoryRecord(
            events=tuple(out_events),
            final_state=normalize(state),
            end_time=start_time + end_time,
            termination=termination,
            snapshots=tuple(snapshots),
        )

    for h_time, tag, dark_kind in horizons:
        while True:
            span = h_time - t
            n_full = int(span / dt)
            crossed, done, psi, block_weight = propagator.walk_to_crossing(
                psi, n_full, r / weight, renorm
            )
            weight *= block_weight
            t += done * dt
            h_cap = dt
            if not crossed:
                frac = h_time - t
                if frac > 1e-12 * dt:
                    trial = propagator.partial_step(psi, frac)
                    n2 = float(np.vdot(trial, trial).real)
                    if weight * n2 >= r:
                        psi = trial
                        if renorm:
                            psi = psi / math.sqrt(n2)
                            weight *= n2
                        t = h_time
                        break
                    h_cap = frac  # crossing inside the final fractional step
                else:
                    t = h_time
                    break
            h_star, psi_star = propagator.locate_in_step(psi, h_cap, r / weight, tol)
            t_jump = t + h_star
            if not channels:
                raise NormalizationError("norm crossed threshold but the model has no channels")
            k, collapsed = sample_jump(psi_star, channels, rng.random())
            kind = channels[k].kind
            out_events.append(TrajectoryEvent(start_time + t_jump, kind))
            psi = collapsed
            weight = 1.0
            t = t_jump
            r = draw_threshold()
            if first_click and kind.is_click:
                return record(Termination.FIRST_CLICK, t_jump, psi)
        # horizon reached without (further) jumps
        if tag == _HORIZON_SNAPSHOT:
            snapshots.append(normalize(psi))
        elif tag == _HORIZON_DARK:
            out_events.append(TrajectoryEvent(start_time + h_time, dark_kind))
            if first_click:
                return record(Termination.FIRST_CLICK, h_time, psi)
        else:
            return record(Termination.WINDOW_EXPIRED, window, psi)
    raise AssertionError("unreachable")
