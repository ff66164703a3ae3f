"""Closed forms, the density-matrix oracle, and click-rate curves."""

import numpy as np
import pytest

from cavsim.analytics import (
    ClickCurve,
    closed_form,
    liouville_solve,
    trace_distance,
    unconditional_click_statistics,
)
from cavsim.errors import ConfigError, DimensionError, RegimeError, RegimeWarning
from cavsim.hilbert import is_density_matrix, number_operator
from cavsim.model import ModelVariant, PhysicalParams, basis_for

FULL = ModelVariant.TWO_CAVITY_FULL
ADIABATIC = ModelVariant.TWO_CAVITY_ADIABATIC

NO_SPONT = PhysicalParams(gamma31=0.0, gamma32=0.0)


# ------------------------------------------------------------- closed forms


def test_closed_form_reference_values():
    report = closed_form(PhysicalParams())
    assert report.photon_amplitude == pytest.approx(-0.005j, abs=1e-15)
    assert report.click_rate == pytest.approx(1e-3, rel=1e-12)
    assert report.mean_wait_time == pytest.approx(1000.0, rel=1e-12)
    assert report.p_success_ideal == pytest.approx(0.1, rel=1e-12)
    assert report.p_success_eta == pytest.approx(0.1, rel=1e-12)
    assert report.p_two_photon == pytest.approx(1.25e-5, rel=1e-12)


def test_closed_form_identities():
    params = PhysicalParams(g=0.8, omega=1.3, delta=25.0, kappa=8.0, eta=0.37)
    report = closed_form(params)
    ratio = params.g * params.omega / (params.delta * params.kappa)
    assert report.photon_amplitude == pytest.approx(-1j * ratio, abs=1e-15)
    assert report.click_rate * report.mean_wait_time == pytest.approx(1.0, rel=1e-12)
    assert report.p_success_ideal == pytest.approx(
        report.click_rate * params.window, rel=1e-12
    )
    assert report.p_success_eta == pytest.approx(0.37 * report.p_success_ideal, rel=1e-12)
    assert report.p_two_photon == pytest.approx(0.5 * ratio**2, rel=1e-12)


def test_closed_form_window_override():
    report = closed_form(PhysicalParams(), window=50.0)
    assert report.p_success_ideal == pytest.approx(0.05, rel=1e-12)


def test_closed_form_regime_errors():
    with pytest.raises(RegimeError):
        closed_form(PhysicalParams(delta=-3.0))
    with pytest.raises(RegimeError):
        closed_form(PhysicalParams(kappa=0.0))
    with pytest.raises(RegimeError):
        closed_form(PhysicalParams(), window=2000.0)  # extrapolated p above 1


def test_closed_form_warns_outside_weak_driving():
    loud = PhysicalParams(g=1.0, omega=30.0, delta=10.0, kappa=1.0)
    with pytest.warns(RegimeWarning):
        closed_form(loud, window=0.02)


# ------------------------------------------------------------------ oracle


def test_liouville_stationary_state():
    p = PhysicalParams(omega=0.0)
    sol = liouville_solve(p, t_end=2.0)
    b = basis_for(FULL, p.n_max)
    psi = b.vector(2, 2)
    expect = np.outer(psi, psi.conj())
    assert trace_distance(sol.final, expect) < 1e-12


def test_liouville_photon_decay_oracle():
    # empty dynamics except cavity decay: <n_a>(t) = e^(-2 kappa t)
    p = PhysicalParams(g=0.0, omega=0.0)
    b = basis_for(FULL, p.n_max)
    t_end = 0.2
    sol = liouville_solve(p, initial=b.vector(2, 2, 1, 0), t_end=t_end)
    n_op = number_operator(b, "a").to_dense()
    got = np.trace(n_op @ sol.final).real
    expect = np.exp(-2.0 * p.kappa * t_end)
    assert abs(got - expect) < 1e-8


def test_liouville_returns_valid_density_matrices():
    sol = liouville_solve(PhysicalParams(), t_end=5.0, sample_times=(1.0, 5.0))
    assert len(sol.states) == 2 and sol.times == (1.0, 5.0)
    for rho in sol.states:
        assert is_density_matrix(rho)
        assert abs(np.trace(rho).real - 1.0) < 1e-8
    assert sol.final is sol.states[-1]


def test_liouville_accepts_density_initial():
    p = PhysicalParams(omega=0.0)
    b = basis_for(FULL, p.n_max)
    psi = (b.vector(2, 2) + b.vector(1, 1)) / np.sqrt(2)
    rho0 = np.outer(psi, psi.conj())
    sol = liouville_solve(p, initial=rho0, t_end=0.5)
    assert is_density_matrix(sol.final)


def test_liouville_validation():
    p = PhysicalParams()
    with pytest.raises(ConfigError):
        liouville_solve(p, t_end=1.0, sample_times=(0.8, 0.2))
    with pytest.raises(ConfigError):
        liouville_solve(p, t_end=1.0, sample_times=(2.0,))
    with pytest.raises(ConfigError) as err:
        liouville_solve(p, t_end=1.0, dt=0.01)
    assert err.value.key == "dt"
    with pytest.raises(DimensionError):
        liouville_solve(p.replace(n_max=3), t_end=0.1)
    with pytest.raises(DimensionError):
        liouville_solve(p, t_end=0.1, dim_cap=36)


# ------------------------------------------------------------- click curves


def test_click_integral_linear_in_eta():
    full = unconditional_click_statistics(NO_SPONT, t_end=10.0)
    half = unconditional_click_statistics(NO_SPONT.replace(eta=0.5), t_end=10.0)
    assert half.cumulative[-1] == pytest.approx(0.5 * full.cumulative[-1], rel=1e-10)


def test_click_curve_ignores_dark_rate():
    quiet = unconditional_click_statistics(NO_SPONT, t_end=5.0)
    noisy = unconditional_click_statistics(NO_SPONT.replace(dark_rate=0.01), t_end=5.0)
    assert np.allclose(quiet.rate, noisy.rate, atol=1e-12)
    assert np.allclose(quiet.cumulative, noisy.cumulative, atol=1e-12)


def test_click_curve_interpolation_and_slope():
    curve = unconditional_click_statistics(NO_SPONT, t_end=4.0)
    assert curve.cumulative_at(0.0) == 0.0
    assert curve.cumulative_at(curve.times[-1]) == pytest.approx(curve.cumulative[-1])
    mid = 0.5 * (curve.times[3] + curve.times[4])
    lo, hi = curve.cumulative[3], curve.cumulative[4]
    assert lo <= curve.cumulative_at(mid) <= hi
    with pytest.raises(ConfigError):
        curve.mean_slope(2.0, 2.0)
    with pytest.raises(ConfigError):
        curve.mean_slope(3.0, 1.0)


def test_click_rate_matches_closed_form():
    # after the switch-on transient the unconditional click rate settles
    # onto the weak-driving closed form
    curve = unconditional_click_statistics(NO_SPONT, t_end=40.0)
    slope = curve.mean_slope(20.0, 40.0)
    expect = closed_form(NO_SPONT).click_rate
    assert abs(slope - expect) / expect < 0.15


def test_adiabatic_click_rate_tracks_full_model():
    full = unconditional_click_statistics(NO_SPONT, t_end=40.0)
    reduced = unconditional_click_statistics(NO_SPONT, variant=ADIABATIC, t_end=40.0)
    s_full = full.mean_slope(20.0, 40.0)
    s_ad = reduced.mean_slope(20.0, 40.0)
    assert abs(s_ad - s_full) / s_full < 0.10


def test_level_shifts_barely_move_the_rate():
    with_shifts = unconditional_click_statistics(NO_SPONT, variant=ADIABATIC, t_end=40.0)
    without = unconditional_click_statistics(
        NO_SPONT, variant=ADIABATIC, t_end=40.0, include_level_shifts=False
    )
    s1 = with_shifts.mean_slope(20.0, 40.0)
    s0 = without.mean_slope(20.0, 40.0)
    assert abs(s0 - s1) / s1 < 0.05

    # the flag itself is live: with unequal couplings the shifted and
    # unshifted generators differ, yet the rate shift stays tiny
    uneven = NO_SPONT.replace(omega=0.5)
    a = unconditional_click_statistics(uneven, variant=ADIABATIC, t_end=20.0)
    b = unconditional_click_statistics(
        uneven, variant=ADIABATIC, t_end=20.0, include_level_shifts=False
    )
    assert not np.array_equal(a.rate, b.rate)
    assert abs(b.mean_slope(10.0, 20.0) - a.mean_slope(10.0, 20.0)) / a.mean_slope(
        10.0, 20.0
    ) < 0.05


# ------------------------------------------------------------ trace distance


def test_trace_distance_basic_cases():
    b = basis_for(FULL, 2)
    psi = b.vector(2, 2)
    phi = b.vector(1, 1)
    rho = np.outer(psi, psi.conj())
    sig = np.outer(phi, phi.conj())
    assert trace_distance(rho, rho) == pytest.approx(0.0, abs=1e-14)
    assert trace_distance(rho, sig) == pytest.approx(1.0, rel=1e-12)
    assert trace_distance(rho, sig) == pytest.approx(trace_distance(sig, rho))
    mixed = 0.5 * rho + 0.5 * sig
    assert trace_distance(rho, mixed) == pytest.approx(0.5, rel=1e-12)
    with pytest.raises(DimensionError):
        trace_distance(rho, np.eye(4) / 4.0)
