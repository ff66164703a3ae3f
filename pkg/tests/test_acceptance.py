"""Acceptance gate: nine end-to-end criteria, one verdict line each.

Every test prints (and registers for the terminal summary) a single
``criterion N: PASS/FAIL`` line with the measured numbers next to the
allowed bands, then asserts.  Seeds are fixed; nothing here depends on
wall-clock time except the criterion-1 runtime measurement itself.

The full file takes roughly a quarter of an hour: criteria 1 and 3-6 run
10^5 trajectories each and criterion 9 runs two paired ensembles of
2 * 10^6 trajectories to resolve a 0.01-sized fidelity shift.
"""

import time

import numpy as np

from cavsim.analytics import (
    closed_form,
    liouville_solve,
    trace_distance,
    unconditional_click_statistics,
)
from cavsim.model import (
    ModelVariant,
    PhysicalParams,
    build_model,
    channel_rate_operator,
)
from cavsim.protocol import ProtocolKind, run_ensemble, run_unconditional_ensemble
from cavsim.trajectory import IntegratorConfig, StepPropagator, run_trajectory

FULL = ModelVariant.TWO_CAVITY_FULL
ADIABATIC = ModelVariant.TWO_CAVITY_ADIABATIC
SINGLE = ModelVariant.SINGLE_CAVITY

HEADLINE = PhysicalParams()  # omega=g, kappa=10g, gamma=0.1g each, delta=20g, T=100/g
N_STANDARD = 100_000


def verdict(ok):
    return "PASS" if ok else "FAIL"


def test_criterion_1_headline_reproduction(acceptance_log):
    started = time.perf_counter()
    stats = run_ensemble(HEADLINE, n_runs=N_STANDARD, master_seed=1)
    elapsed = time.perf_counter() - started
    p = stats.p_success
    f = stats.mean_fidelity
    ok = 0.09 <= p <= 0.11 and 0.97 <= f <= 0.99 and elapsed <= 900.0
    acceptance_log.add(
        f"criterion 1 (headline reproduction): {verdict(ok)} — "
        f"p_success={p:.5f} (band 0.09..0.11), fidelity={f:.5f} (band 0.97..0.99), "
        f"runtime={elapsed:.0f}s (limit 900s), N={stats.n_runs}"
    )
    assert ok, (p, f, elapsed)


def test_criterion_2_closed_forms_exact(acceptance_log):
    report = closed_form(HEADLINE)
    p_err = abs(report.p_success_ideal - 0.1)
    t_err = abs(report.mean_wait_time - 1000.0)
    ok = p_err < 1e-13 and t_err < 1e-9
    acceptance_log.add(
        f"criterion 2 (closed forms): {verdict(ok)} — "
        f"p_success_ideal={report.p_success_ideal!r} (0.1 within {p_err:.1e}), "
        f"mean_wait_time={report.mean_wait_time!r} (1000 within {t_err:.1e})"
    )
    assert ok, report


def test_criterion_3_efficiency_sweep(acceptance_log):
    etas = (0.2, 0.4, 0.6, 0.8, 1.0)
    points = []
    for i, eta in enumerate(etas):
        stats = run_ensemble(
            HEADLINE.replace(eta=eta), n_runs=N_STANDARD, master_seed=31 + i
        )
        points.append((eta, stats))

    worst_rel = 0.0
    for eta, stats in points:
        expect = 0.1 * eta
        worst_rel = max(worst_rel, abs(stats.p_success - expect) / expect)
    linear_ok = worst_rel <= 0.10

    monotone_ok = True
    for (_, lo), (_, hi) in zip(points, points[1:]):
        gain = hi.mean_fidelity - lo.mean_fidelity
        combined = np.hypot(lo.fidelity_err, hi.fidelity_err)
        if gain < -3.0 * combined:
            monotone_ok = False
    ok = linear_ok and monotone_ok
    detail = ", ".join(
        f"eta={eta}: p={stats.p_success:.4f}, 1-F={1 - stats.mean_fidelity:.4f}"
        for eta, stats in points
    )
    acceptance_log.add(
        f"criterion 3 (efficiency sweep): {verdict(ok)} — "
        f"max |p - 0.1 eta| = {100 * worst_rel:.1f}% of target (limit 10%), "
        f"infidelity monotone nonincreasing in eta: {monotone_ok}; {detail}"
    )
    assert ok, detail


def test_criterion_4_oracle_equivalence(acceptance_log):
    times = (10.0, 50.0, 100.0)
    ensemble = run_unconditional_ensemble(
        HEADLINE, n_runs=N_STANDARD, master_seed=8, times=times, window=100.0
    )
    oracle = liouville_solve(HEADLINE, t_end=100.0, sample_times=times)
    distances = [
        trace_distance(ensemble.states[i], oracle.states[i]) for i in range(len(times))
    ]
    ok = all(d <= 0.02 for d in distances)
    pairs = ", ".join(f"t={t:g}: TD={d:.4f}" for t, d in zip(times, distances))
    acceptance_log.add(
        f"criterion 4 (ensemble vs Liouvillian): {verdict(ok)} — {pairs} "
        f"(limit 0.02 each), N={ensemble.n_runs}"
    )
    assert ok, distances


def test_criterion_5_baseline_branches(acceptance_log):
    params = HEADLINE.replace(gamma31=0.0, gamma32=0.0)
    stats = run_ensemble(
        params, n_runs=N_STANDARD, master_seed=99, kind=ProtocolKind.BASELINE_SUDDEN
    )
    p_one = stats.n_success / stats.n_runs
    p_two = stats.n_multi_click / stats.n_runs
    f = stats.mean_fidelity
    ok = abs(p_one - 0.50) <= 0.005 and abs(p_two - 0.25) <= 0.005 and f >= 0.999
    acceptance_log.add(
        f"criterion 5 (sudden baseline): {verdict(ok)} — "
        f"P(one click)={p_one:.4f} (0.50 +/- 0.005), "
        f"P(two clicks)={p_two:.4f} (0.25 +/- 0.005), "
        f"fidelity={f:.6f} (>= 0.999), N={stats.n_runs}"
    )
    assert ok, (p_one, p_two, f)


def test_criterion_6_strong_coupling_fidelity(acceptance_log):
    # p_suc_ideal = 4 kappa (g omega / (delta kappa))^2 * T = 0.1 at T = 2500
    params = PhysicalParams(gamma31=0.0, gamma32=0.0, delta=100.0, window=2500.0)
    assert abs(closed_form(params).p_success_ideal - 0.1) < 1e-12
    stats = run_ensemble(params, n_runs=N_STANDARD, master_seed=21)
    f = stats.mean_fidelity
    ok = f >= 0.999
    acceptance_log.add(
        f"criterion 6 (high-detuning limit): {verdict(ok)} — "
        f"fidelity={f:.6f} (>= 0.999), p_success={stats.p_success:.4f}, "
        f"N={stats.n_runs}"
    )
    assert ok, f


def test_criterion_7_invariant_suite(acceptance_log):
    # channel completeness across 50 random parameter sets
    rng = np.random.default_rng(71)
    variants = (FULL, ADIABATIC, SINGLE)
    worst_complete = 0.0
    for trial in range(50):
        params = PhysicalParams(
            g=rng.uniform(0.0, 2.0),
            omega=rng.uniform(0.0, 2.0),
            delta=rng.uniform(1.0, 50.0),
            kappa=rng.uniform(0.1, 20.0),
            gamma31=rng.uniform(0.0, 1.0),
            gamma32=rng.uniform(0.0, 1.0),
            eta=rng.uniform(0.0, 1.0),
        )
        model = build_model(params, variants[trial % 3])
        dense = model.h_eff.to_dense()
        lhs = 1j * (dense - dense.conj().T)
        rhs = channel_rate_operator(model.channels).to_dense()
        worst_complete = max(worst_complete, float(np.max(np.abs(lhs - rhs))))
    complete_ok = worst_complete <= 1e-12

    # norm bookkeeping: quadratic form of the anti-Hermitian part vs channels
    model = build_model(HEADLINE)
    dense = model.h_eff.to_dense()
    rate_matrix = 1j * (dense - dense.conj().T)
    state_rng = np.random.default_rng(72)
    worst_rel = 0.0
    for _ in range(100):
        psi = state_rng.normal(size=model.basis.dim) + 1j * state_rng.normal(
            size=model.basis.dim
        )
        psi /= np.linalg.norm(psi)
        outflow = float(np.vdot(psi, rate_matrix @ psi).real)
        by_channels = sum(
            float(np.vdot(image := ch.operator.apply(psi), image).real)
            for ch in model.channels
        )
        worst_rel = max(worst_rel, abs(outflow - by_channels) / max(abs(outflow), 1e-30))
    bookkeeping_ok = worst_rel <= 1e-10

    # oracle trace preservation along a multi-sample solve
    sol = liouville_solve(HEADLINE, t_end=5.0, sample_times=(1.0, 2.0, 3.0, 4.0, 5.0))
    trace_drift = max(abs(np.trace(rho).real - 1.0) for rho in sol.states)
    trace_ok = trace_drift <= 1e-8

    # waiting-time law for a bare photon: mean 1/(2 kappa) within 2%
    decay = PhysicalParams(g=0.0, omega=0.0, gamma31=0.0, gamma32=0.0)
    model = build_model(decay)
    cfg = IntegratorConfig.for_params(decay)
    prop = StepPropagator(model.h_eff, cfg.dt, 2048)
    initial = model.basis.vector(1, 1, 1, 0)
    wait_rng = np.random.default_rng(77)
    total = 0.0
    for _ in range(N_STANDARD):
        rec = run_trajectory(
            model, cfg, wait_rng, window=2.0, initial_state=initial, propagator=prop
        )
        total += rec.events[0].time
    mean_wait = total / N_STANDARD
    expect = 1.0 / (2.0 * decay.kappa)
    wait_rel = abs(mean_wait - expect) / expect
    wait_ok = wait_rel <= 0.02

    ok = complete_ok and bookkeeping_ok and trace_ok and wait_ok
    acceptance_log.add(
        f"criterion 7 (invariant suite): {verdict(ok)} — "
        f"completeness max {worst_complete:.1e} (limit 1e-12); "
        f"norm bookkeeping rel {worst_rel:.1e} (limit 1e-10); "
        f"oracle trace drift {trace_drift:.1e} (limit 1e-8); "
        f"waiting-time mean {mean_wait:.5f} vs {expect} ({100 * wait_rel:.2f}%, limit 2%)"
    )
    assert ok, (worst_complete, worst_rel, trace_drift, mean_wait)


def test_criterion_8_adiabatic_click_slope(acceptance_log):
    # compare settled cumulative-click slopes over t in [20, 40]: the first
    # few 1/g after switch-on ring at the detuning frequency in the full
    # model and would bias a shorter window
    params = HEADLINE.replace(gamma31=0.0, gamma32=0.0)
    t_from, t_to = 20.0, 40.0
    full = unconditional_click_statistics(params, t_end=t_to)
    reduced = unconditional_click_statistics(params, variant=ADIABATIC, t_end=t_to)
    bare = unconditional_click_statistics(
        params, variant=ADIABATIC, t_end=t_to, include_level_shifts=False
    )
    s_full = full.mean_slope(t_from, t_to)
    s_ad = reduced.mean_slope(t_from, t_to)
    s_bare = bare.mean_slope(t_from, t_to)
    variant_rel = abs(s_ad - s_full) / s_full
    shift_rel = abs(s_bare - s_ad) / s_ad
    ok = variant_rel < 0.10 and shift_rel < 0.05
    acceptance_log.add(
        f"criterion 8 (adiabatic validity): {verdict(ok)} — "
        f"slope full={s_full:.3e}, adiabatic={s_ad:.3e} "
        f"(diff {100 * variant_rel:.2f}%, limit 10%); "
        f"level shifts removed: {100 * shift_rel:.3f}% change (limit 5%)"
    )
    assert ok, (s_full, s_ad, s_bare)


def test_criterion_9_dark_count_robustness(acceptance_log):
    # mean combined inter-dark interval = 100 * t_av = 10^5/g across two
    # detectors, so 5e-6 per detector; the expected fidelity penalty sits
    # within half a standard error of the 0.01 bound at any feasible N, so
    # this criterion is resolved by measurement, not construction: 2 * 10^6
    # paired runs bring the statistical error down to ~2e-4
    n_runs = 2_000_000
    clean = run_ensemble(HEADLINE, n_runs=n_runs, master_seed=0)
    noisy = run_ensemble(
        HEADLINE.replace(dark_rate=5e-6), n_runs=n_runs, master_seed=0
    )
    drop = clean.mean_fidelity - noisy.mean_fidelity
    err = float(np.hypot(clean.fidelity_err, noisy.fidelity_err))
    dark_heralds = noisy.n_dark_d1 + noisy.n_dark_d2
    ok = drop < 0.01
    acceptance_log.add(
        f"criterion 9 (dark-count robustness): {verdict(ok)} — "
        f"fidelity drop {drop:.5f} (limit 0.01, unpaired stderr bound ~{err:.5f}), "
        f"clean F={clean.mean_fidelity:.5f}, dark F={noisy.mean_fidelity:.5f}, "
        f"dark heralds {dark_heralds} of {noisy.n_success} successes, N={n_runs} per arm"
    )
    assert ok, (drop, clean.mean_fidelity, noisy.mean_fidelity)
