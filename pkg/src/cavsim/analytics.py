"""Closed-form weak-driving predictions and a master-equation oracle.

The closed forms are the leading-order results of adiabatically
eliminating the excited level and treating the cavity drive perturbatively
(valid while the effective pump is slow compared with the cavity decay).
The oracle integrates the full dissipative evolution of the density matrix
and is what the stochastic ensemble is validated against.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DimensionError, NormalizationError, RegimeError, RegimeWarning
from .model import (
    BuiltModel,
    ModelVariant,
    PhysicalParams,
    build_model,
    channel_rate_operator,
)
from .trajectory import MAX_DT_TIMES_DELTA, fastest_rate_scale

__all__ = [
    "ClosedFormReport",
    "closed_form",
    "LiouvilleSolution",
    "ClickCurve",
    "liouville_solve",
    "unconditional_click_statistics",
    "trace_distance",
]

DIMENSION_CAP = 81  # oracle refuses densities larger than this by default


@dataclass(frozen=True)
class ClosedFormReport:
    """Leading-order predictions for the weak-driving protocol.

    ``photon_amplitude`` is the quasi-steady single-photon amplitude each
    cavity settles into under weak driving; ``click_rate`` the total
    detector click rate at unit efficiency; ``mean_wait_time`` its inverse
    (the mean time to the first click); the success probabilities are the
    click rate integrated over the window, ideal and efficiency-scaled;
    ``p_two_photon`` the admixture of a second photon, which bounds the
    infidelity achievable at high detuning.
    """

    photon_amplitude: complex
    click_rate: float
    mean_wait_time: float
    p_success_ideal: float
    p_success_eta: float
    p_two_photon: float


def closed_form(params: PhysicalParams, window: float | None = None) -> ClosedFormReport:
    """Evaluate the weak-driving closed forms at the given parameters.

    Raises a regime error when the formulas stop making sense (vanishing
    detuning or cavity decay, or a predicted probability above 1), and
    warns when the effective pump rate is within a factor of five of the
    cavity decay, where the leading-order expressions start to degrade.
    """
    if params.delta <= 0:
        raise RegimeError("the closed forms need delta > 0")
    if params.kappa <= 0:
        raise RegimeError("the closed forms need kappa > 0")
    t_window = params.window if window is None else float(window)
    if t_window <= 0:
        raise ConfigError(f"window must be > 0, got {t_window}", key="window")
    pump = params.g * params.omega / params.delta  # effective two-photon drive
    ratio = pump / params.kappa
    if ratio > 0.2:
        warnings.warn(
            f"effective pump over cavity decay is {ratio:.3g}; "
            "closed forms assume this is small",
            RegimeWarning,
            stacklevel=2,
        )
    amplitude = -1j * ratio
    click_rate = 4.0 * params.kappa * ratio * ratio
    wait = math.inf if click_rate == 0 else 1.0 / click_rate
    p_ideal = click_rate * t_window
    if p_ideal > 1.0:
        raise RegimeError(
            f"predicted success probability {p_ideal:.3g} exceeds 1; "
            "the linear-in-window formula is outside its regime"
        )
    return ClosedFormReport(
        photon_amplitude=amplitude,
        click_rate=click_rate,
        mean_wait_time=wait,
        p_success_ideal=p_ideal,
        p_success_eta=params.eta * p_ideal,
        p_two_photon=0.5 * ratio * ratio,
    )


@dataclass(frozen=True)
class LiouvilleSolution:
    """Density matrices sampled along the master-equation solution."""

    times: tuple[float, ...]
    states: tuple[np.ndarray, ...]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


@dataclass(frozen=True)
class ClickCurve:
    """Expected cumulative detector-click count against time."""

    times: np.ndarray
    rate: np.ndarray
    cumulative: np.ndarray

    def cumulative_at(self, t: float) -> float:
        return float(np.interp(t, self.times, self.cumulative))

    def mean_slope(self, t_from: float, t_to: float) -> float:
        if not t_from < t_to:
            raise ConfigError("mean_slope needs t_from < t_to")
        return (self.cumulative_at(t_to) - self.cumulative_at(t_from)) / (t_to - t_from)


def _superoperator(model: BuiltModel) -> sp.csr_matrix:
    """Sparse generator of the master equation on row-major vec(rho).

    vec(A rho B) = (A kron B^T) vec(rho) for row-major stacking, so
    d vec/dt = [-i(H_eff kron I) + i(I kron conj(H_eff)) + sum L kron conj(L)] vec.
    """
    dim = model.basis.dim
    eye = sp.identity(dim, dtype=complex, format="csr")
    h = model.h_eff.csr()
    gen = -1j * sp.kron(h, eye, format="csr") + 1j * sp.kron(eye, h.conjugate(), format="csr")
    for channel in model.channels:
        l = channel.operator.csr()
        gen = gen + sp.kron(l, l.conjugate(), format="csr")
    return gen.tocsr()


def _oracle_setup(
    params: PhysicalParams,
    variant: ModelVariant,
    initial,
    dt: float | None,
    dim_cap: int,
    include_level_shifts: bool,
):
    model = build_model(params, variant, include_level_shifts=include_level_shifts)
    dim = model.basis.dim
    if dim > dim_cap:
        raise DimensionError(
            f"oracle dimension {dim} exceeds the cap {dim_cap}; lower n_max or raise dim_cap"
        )
    if initial is None:
        psi = model.initial_protocol_state()
        rho = np.outer(psi, psi.conj())
    else:
        initial = np.asarray(initial, dtype=complex)
        if initial.ndim == 1:
            if initial.shape != (dim,):
                raise DimensionError(f"initial vector shape {initial.shape} != ({dim},)")
            rho = np.outer(initial, initial.conj())
        else:
            if initial.shape != (dim, dim):
                raise DimensionError(f"initial density shape {initial.shape} != ({dim}, {dim})")
            rho = initial.copy()
    if dt is None:
        dt = MAX_DT_TIMES_DELTA / fastest_rate_scale(params)
    if dt <= 0:
        raise ConfigError(f"dt must be > 0, got {dt}", key="dt")
    if dt * abs(params.delta) > MAX_DT_TIMES_DELTA * (1 + 1e-12):
        raise ConfigError(
            f"dt = {dt} does not resolve delta = {params.delta}: "
            f"dt*|delta| must be <= {MAX_DT_TIMES_DELTA}",
            key="dt",
        )
    return model, rho, float(dt)


def liouville_solve(
    params: PhysicalParams,
    variant: ModelVariant = ModelVariant.TWO_CAVITY_FULL,
    initial=None,
    t_end: float = 1.0,
    dt: float | None = None,
    *,
    sample_times: Sequence[float] | None = None,
    dim_cap: int = DIMENSION_CAP,
    include_level_shifts: bool = True,
) -> LiouvilleSolution:
    """Integrate the master equation and sample the density matrix.

    ``initial`` may be a density matrix, a state vector (projector taken),
    or None for the protocol start state.  Sampling defaults to the end
    time only.  The stepper is the same fourth-order scheme the trajectory
    integrator uses, applied to the vectorized density; the segment length
    between samples is subdivided so each step is at most ``dt``.  The
    trace is a linear invariant of the generator, so the scheme preserves
    it to rounding; a drift beyond 1e-8 raises.
    """
    if t_end <= 0:
        raise ConfigError(f"t_end must be > 0, got {t_end}", key="t_end")
    model, rho, dt = _oracle_setup(params, variant, initial, dt, dim_cap, include_level_shifts)
    if sample_times is None:
        sample_times = (t_end,)
    cleaned: list[float] = []
    previous = 0.0
    for t in sample_times:
        t = float(t)
        if t < previous or t > t_end * (1 + 1e-12):
            raise ConfigError(
                f"sample times must be ascending within [0, {t_end}]", key="sample_times"
            )
        previous = t
        cleaned.append(t)
    gen = _superoperator(model)
    dim = model.basis.dim
    y = rho.reshape(-1)
    trace0 = float(np.trace(rho).real)
    states = []
    t_now = 0.0
    for t_target in cleaned:
        span = t_target - t_now
        if span > 0:
            n = max(1, math.ceil(span / dt - 1e-12))
            h = span / n
            for _ in range(n):
                k1 = gen.dot(y)
                k2 = gen.dot(y + (0.5 * h) * k1)
                k3 = gen.dot(y + (0.5 * h) * k2)
                k4 = gen.dot(y + h * k3)
                y = y + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
            t_now = t_target
        state = y.reshape(dim, dim).copy()
        drift = abs(float(np.trace(state).real) - trace0)
        if drift > 1e-8:
            raise NormalizationError(f"oracle trace drifted by {drift:.3g} at t = {t_target}")
        states.append(state)
    return LiouvilleSolution(times=tuple(cleaned), states=tuple(states))


def unconditional_click_statistics(
    params: PhysicalParams,
    variant: ModelVariant = ModelVariant.TWO_CAVITY_FULL,
    t_end: float = 20.0,
    dt: float | None = None,
    *,
    initial=None,
    dim_cap: int = DIMENSION_CAP,
    include_level_shifts: bool = True,
) -> ClickCurve:
    """Expected detector-click accumulation from the master equation.

    Integrates the instantaneous click rate (the detector part of the
    channel rate operator traced against the solution) alongside the
    density matrix with the same fourth-order stages, so the cumulative
    count is as accurate as the solution itself.  Dark counts are not
    included; they would add a state-independent ``dark_rate`` per
    detector.
    """
    if t_end <= 0:
        raise ConfigError(f"t_end must be > 0, got {t_end}", key="t_end")
    model, rho, dt = _oracle_setup(params, variant, initial, dt, dim_cap, include_level_shifts)
    gen = _superoperator(model)
    click_op = channel_rate_operator(model.channels, clicks_only=True)
    # trace(R rho) as a row vector against row-major vec(rho)
    click_row = np.asarray(click_op.to_dense().T.reshape(-1))
    y = rho.reshape(-1)
    n = max(1, math.ceil(t_end / dt - 1e-12))
    h = t_end / n
    times = np.linspace(0.0, t_end, n + 1)
    rate = np.empty(n + 1)
    cumulative = np.empty(n + 1)
    c = 0.0

    def click_rate_of(vec) -> float:
        return float(np.dot(click_row, vec).real)

    rate[0] = click_rate_of(y)
    cumulative[0] = 0.0
    for i in range(n):
        k1 = gen.dot(y)
        y2 = y + (0.5 * h) * k1
        k2 = gen.dot(y2)
        y3 = y + (0.5 * h) * k2
        k3 = gen.dot(y3)
        y4 = y + h * k3
        k4 = gen.dot(y4)
        c += (h / 6.0) * (
            click_rate_of(y) + 2.0 * (click_rate_of(y2) + click_rate_of(y3)) + click_rate_of(y4)
        )
        y = y + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        rate[i + 1] = click_rate_of(y)
        cumulative[i + 1] = c
    return ClickCurve(times=times, rate=rate, cumulative=cumulative)


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Half the sum of absolute eigenvalues of the (Hermitized) difference."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"trace distance needs equal square matrices, got {a.shape} and {b.shape}")
    diff = a - b
    diff = 0.5 * (diff + diff.conj().T)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))
