"""Acceptance battery: every criterion at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one PASS/FAIL line
per criterion. Criterion 5 is expected to fail on one sub-case (see the
assertion message): with the regulation-experiment gains the ideal
friction-free position-measurement loop is already outer-loop unstable at
alpha = 3.9, although its inner loop is stable up to exactly alpha = 4.
"""
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from dobkit import (
    DisturbancePulse,
    MeasurementKind,
    OuterGains,
    PlantParams,
    Reference,
    Scenario,
    bisect_threshold,
    bode_integral_continuous,
    bode_integral_discrete,
    classify_poles,
    constraint_check,
    freq_sweep,
    make_continuous_inner,
    make_inner_loop,
    root_locus,
    simulate,
    simulate_linear_oracle,
    position_non_osc_bound,
)

from conftest import make_cfg


@contextmanager
def criterion(number, title):
    status = "FAIL"
    try:
        yield
        status = "PASS"
    finally:
        print(f"[criterion {number}] {title}: {status}")


def test_criterion_1_acceleration_integral_grid():
    with criterion(1, "acceleration-measurement sensitivity integral grid"):
        start = time.perf_counter()
        Ts = 1e-3
        for alpha in (1.0, 1.5, 3.0):
            for g_dob in (100.0, 500.0, 900.0):
                loop = make_inner_loop(make_cfg("acceleration", alpha=alpha,
                                                g_dob=g_dob, Ts=Ts))
                report = bode_integral_discrete(loop)
                expected = -2.0 * math.pi * math.log(1.0 + alpha * g_dob * Ts)
                assert abs(report.numeric_value - expected) < 1e-3, (alpha, g_dob)
        assert time.perf_counter() - start < 5.0


def test_criterion_2_zero_sum_integrals():
    with criterion(2, "velocity/position sensitivity integrals vanish when stable"):
        start = time.perf_counter()
        Ts = 1e-3
        velocity_sets = [(1.0, 100.0), (1.0, 500.0), (1.0, 900.0),
                         (1.5, 100.0), (1.5, 500.0), (3.0, 100.0), (3.0, 300.0)]
        for alpha, g_dob in velocity_sets:
            assert alpha * g_dob * Ts <= 0.9
            report = bode_integral_discrete(
                make_inner_loop(make_cfg("velocity", alpha=alpha, g_dob=g_dob, Ts=Ts)))
            assert abs(report.numeric_value) < 1e-3, (alpha, g_dob)
        g_v = 750.0
        bound = position_non_osc_bound(g_v, Ts)
        for g_dob in (30.0, 60.0, 100.0, 0.95 * bound):
            report = bode_integral_discrete(
                make_inner_loop(make_cfg("position", alpha=1.0, g_dob=g_dob,
                                         Ts=Ts, g_v=g_v)))
            assert abs(report.numeric_value) < 1e-3, g_dob
        assert time.perf_counter() - start < 5.0


def test_criterion_3_continuous_baseline_and_witness():
    with criterion(3, "continuous baseline integral plus falls-short witness"):
        for alpha in (1.0, 2.0):
            loop = make_continuous_inner(PlantParams.from_alpha(alpha), 500.0)
            report = bode_integral_continuous(loop)
            expected = -0.5 * math.pi * alpha * 500.0
            assert report.analytic_value == pytest.approx(expected, rel=1e-12)
            assert abs(report.numeric_value - expected) < 1e-3 * abs(expected)
        # the witness: alpha*g_dob = 3/Ts passes the continuous check while the
        # sampled velocity loop has a pole of magnitude 2
        Ts, alpha = 1e-3, 1.0
        g_dob = 3.0 / Ts
        cont = bode_integral_continuous(
            make_continuous_inner(PlantParams.from_alpha(alpha), g_dob))
        assert abs(cont.numeric_value - cont.analytic_value) < 1e-3 * abs(cont.analytic_value)
        disc = make_inner_loop(make_cfg("velocity", alpha=alpha, g_dob=g_dob, Ts=Ts))
        cls = classify_poles(disc.T)
        assert cls.max_mag > 1.0
        assert cls.max_mag == pytest.approx(2.0, abs=1e-9)


def test_criterion_4_stability_boundaries_by_bisection():
    with criterion(4, "stability and non-oscillation boundaries located by bisection"):
        Ts = 1e-3

        def stable(ag):
            return classify_poles(
                make_inner_loop(make_cfg("velocity", alpha=1.0, g_dob=ag, Ts=Ts)).T
            ).all_in_unit

        def monotone_v(ag):
            return classify_poles(
                make_inner_loop(make_cfg("velocity", alpha=1.0, g_dob=ag, Ts=Ts)).T
            ).all_real_in_0_1

        found = bisect_threshold(stable, 1000.0, 3000.0, rel_tol=1e-7)
        assert abs(found - 2.0 / Ts) / (2.0 / Ts) < 1e-4
        found = bisect_threshold(monotone_v, 500.0, 1500.0, rel_tol=1e-7)
        assert abs(found - 1.0 / Ts) / (1.0 / Ts) < 1e-4

        g_v = 750.0
        expected = position_non_osc_bound(g_v, Ts)
        assert expected == pytest.approx(120.43513867885703, rel=1e-9)

        def monotone_p(ag):
            cfg = make_cfg("position", alpha=1.0, g_dob=ag, Ts=Ts, g_v=g_v)
            return classify_poles(make_inner_loop(cfg).T).all_real_in_0_1

        found = bisect_threshold(monotone_p, 50.0, 500.0, rel_tol=1e-7)
        assert abs(found - expected) / expected < 1e-3


REG_GAINS = OuterGains(K_p=4000.0, K_d=200.0)


def _threshold_scenario(kind, alpha, duration=3.0):
    cfg = make_cfg(kind, alpha=alpha, g_dob=1000.0, Ts=0.5e-3, g_v=2000.0)
    return Scenario(duration=duration, cfg=cfg, gains=REG_GAINS,
                    reference=Reference.step(0.1))


def test_criterion_5_experimental_thresholds():
    with criterion(5, "divergence thresholds of the regulation experiments"):
        assert simulate(_threshold_scenario("velocity", 4.05)).diverged
        assert not simulate(_threshold_scenario("velocity", 3.9)).diverged
        for alpha in (0.5, 1.0, 4.0, 10.0, 50.0):
            assert not simulate(_threshold_scenario("acceleration", alpha)).diverged, alpha
        assert simulate(_threshold_scenario("position", 4.05)).diverged
        # Known model-level failure: the friction-free position loop with these
        # outer gains is unstable beyond alpha ~ 3.05 (largest closed-loop pole
        # 1.075 at alpha = 3.9), so boundedness at 3.9 cannot hold even though
        # the hardware, damped by unmodeled friction, stayed bounded below 4.
        position_39_diverged = simulate(_threshold_scenario("position", 3.9)).diverged
        assert not position_39_diverged, (
            "position-measurement loop at alpha=3.9 diverges in the ideal "
            "linear model (outer-loop instability from alpha~3.05)"
        )


def test_criterion_6_regulation_reproduction():
    with criterion(6, "step-disturbance regulation estimate and position error"):
        for kind in MeasurementKind:
            cfg = make_cfg(kind, alpha=1.0, g_dob=1000.0, Ts=0.5e-3, g_v=2000.0)
            sc = Scenario(duration=10.0, cfg=cfg, gains=REG_GAINS,
                          reference=Reference.step(0.1),
                          disturbances=(DisturbancePulse(4.0, 6.0, 4.0),))
            start = time.perf_counter()
            trace = simulate(sc)
            assert time.perf_counter() - start < 10.0
            ts = cfg.Ts
            k5 = int(round(5.0 / ts))
            k_end_window = int(round(5.99 / ts))
            assert abs(trace.tau_dis_hat[k5] - 4.0) < 0.05 * 4.0, kind
            assert abs(trace.q_ref[k_end_window] - trace.q[k_end_window]) < 1e-6, kind
            assert abs(trace.q_ref[-1] - trace.q[-1]) < 1e-6, kind


def test_criterion_7_waterbed_peaks():
    with criterion(7, "sensitivity peak laws across the bandwidth grid"):
        Ts = 1e-3
        grid = np.linspace(100.0, 1900.0, 20)
        last = 0.0
        for ag in grid:
            sweep = freq_sweep(make_inner_loop(
                make_cfg("velocity", alpha=1.0, g_dob=ag, Ts=Ts)), n_points=128)
            expected = 2.0 / (2.0 - ag * Ts)
            assert abs(sweep.peak_S.value - expected) < 1e-9, ag
            assert sweep.peak_S.value > last
            last = sweep.peak_S.value
        for ag in grid:
            sweep = freq_sweep(make_inner_loop(
                make_cfg("acceleration", alpha=1.0, g_dob=ag, Ts=Ts)), n_points=128)
            expected = 2.0 / (2.0 + ag * Ts)
            assert abs(sweep.peak_S.value - expected) < 1e-9, ag
            assert sweep.peak_S.value <= 1.0


def _random_scenario(rng):
    kind = rng.choice(["acceleration", "velocity", "position"])
    Ts = float(rng.choice([1e-3, 5e-4]))
    alpha = float(rng.uniform(0.5, 2.0))
    g_dob = float(rng.uniform(200.0, 0.8 / (alpha * Ts)))
    g_v = float(rng.uniform(500.0, 2000.0))
    cfg = make_cfg(kind, alpha=alpha, g_dob=g_dob, Ts=Ts, g_v=g_v)
    gains = OuterGains(K_p=float(rng.uniform(800.0, 6000.0)),
                       K_d=float(rng.uniform(10.0, 120.0)))
    duration = float(rng.uniform(0.8, 2.5))
    if rng.random() < 0.5:
        reference = Reference.step(float(rng.uniform(0.02, 0.2)))
    else:
        reference = Reference.sinusoid(float(rng.uniform(0.01, 0.2)),
                                       float(rng.uniform(2.0, 60.0)))
    pulses = []
    t0 = 0.05
    for _ in range(int(rng.integers(0, 3))):
        pulse_start = float(rng.uniform(t0, duration - 0.1))
        pulse_end = float(rng.uniform(pulse_start + 0.02,
                                      min(pulse_start + 0.8, duration)))
        pulses.append(DisturbancePulse(pulse_start, pulse_end,
                                       float(rng.uniform(-8.0, 8.0))))
        t0 = pulse_end
        if t0 >= duration - 0.15:
            break
    return Scenario(duration=duration, cfg=cfg, gains=gains, reference=reference,
                    disturbances=tuple(pulses))


def test_criterion_8_oracle_equivalence():
    with criterion(8, "simulator equals closed-form oracle on 50 random scenarios"):
        rng = np.random.default_rng(808)
        channels = ("q", "qd", "qdd", "I", "I_des", "tau_dis_hat")
        for case in range(50):
            sc = _random_scenario(rng)
            trace = simulate(sc)
            assert not trace.diverged, (case, sc)
            oracle = simulate_linear_oracle(sc)
            for name in channels:
                diff = float(np.max(np.abs(getattr(trace, name) - getattr(oracle, name))))
                assert diff <= 1e-9, (case, name, diff)


def test_criterion_9_root_locus_reproduction():
    with criterion(9, "root-locus exits across measurement kinds"):
        gains = OuterGains(K_p=5000.0, K_d=25.0)
        values = np.geomspace(0.01, 100.0, 41)
        accel = root_locus(make_cfg("acceleration", g_dob=500.0, Ts=1e-3),
                           gains, "alpha", values)
        assert accel.exit_value is None
        for kind in ("velocity", "position"):
            branch = root_locus(make_cfg(kind, g_dob=500.0, Ts=1e-3, g_v=1000.0),
                                gains, "alpha", values)
            assert branch.exit_value is not None, kind
            assert math.isfinite(branch.exit_value), kind
