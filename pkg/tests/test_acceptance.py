"""End-to-end acceptance checks, one test per numbered criterion.

Each test prints a single ``criterion N: PASS|FAIL ...`` line (visible even
when pytest captures output) and then asserts the same condition.
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from helpers import brute_force_duration, monitor_property_failures
from nedsim.cli import main
from nedsim.config import ExperimentSpec, anatomical_leg
from nedsim.experiment import noisy_trials, run_experiment, saw_profile
from nedsim.geometry import capstan_for_torque, capstan_min_turns, sideway_restoring_force
from nedsim.identify import fit_second_order, poles
from nedsim.plant import CableStage, DummyLeg, PlantModel, SensorModel, SpringPair, simulate
from nedsim.safety import CAUSE_PRIORITY, ESTOP, FAULT, RESET, START, Event, interlock_step
from nedsim.trajectory import (DT, DynamicLimits, PerturbationSpec, default_limit_grid, hold,
                               optimize_perturbation, plan_fastest_move, plan_ramp_hold, plan_saw,
                               with_rest)


@pytest.fixture
def verdict(capsys):
    def report(number, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok
    return report


def test_criterion_1_dummy_leg_grid(verdict):
    start = time.perf_counter()
    manifest = run_experiment(ExperimentSpec(kind="leg", trials=20),
                              PlantModel(CableStage(), DummyLeg(), SensorModel()))
    elapsed = time.perf_counter() - start
    rows = manifest.aggregate
    fast = [r for r in rows if r["speed"] >= 40]
    inertia_ok = all(abs(r["I"] / 1.84 - 1) <= 0.10 for r in fast)
    fit_ok = all(r["nrmse"] > 80 for r in fast)
    slow_lower = all(
        next(r for r in rows if r["speed"] == 20 and r["angle"] == a)["nrmse"]
        < next(r for r in rows if r["speed"] == 300 and r["angle"] == a)["nrmse"]
        for a in {r["angle"] for r in rows})
    ok = inertia_ok and fit_ok and slow_lower and elapsed < 120
    detail = (f"I in [{min(r['I'] for r in fast):.3f}, {max(r['I'] for r in fast):.3f}], "
              f"min nrmse {min(r['nrmse'] for r in fast):.1f}%, 20 mm/s lower: {slow_lower}, "
              f"{elapsed:.1f} s")
    assert verdict(1, ok, detail)


def test_criterion_2_noise_free_identifiability(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    profile = with_rest(plan_saw(60.0, 750.0, 2, DynamicLimits(750, 1e4, 1e6)), 100, 200)
    worst = 0.0
    for _ in range(100):
        truth = np.array([rng.uniform(0.1, 5), rng.uniform(1, 200), rng.uniform(100, 5000)])
        plant = PlantModel(CableStage(*truth), None, SensorModel.noiseless())
        est = fit_second_order([simulate(plant, profile)], 0.5, "cable")
        worst = max(worst, float(np.max(np.abs(np.array(est.params) / truth - 1))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-3 and elapsed < 60
    assert verdict(2, ok, f"worst relative error {worst:.2e}, {elapsed:.1f} s")


def test_criterion_3_spring_plateau(verdict):
    manifest = run_experiment(ExperimentSpec(kind="spring", trials=20),
                              PlantModel(CableStage(), SpringPair(1000.0), SensorModel()))
    rows = {(r["amplitude"], r["duration"]): r for r in manifest.aggregate}
    amps, durs = (2.0, 4.0, 8.0), (50.0, 100.0, 150.0)
    accurate = all(abs(rows[(8.0, d)]["K"] / 1000 - 1) <= 0.05 for d in durs)
    spread = [float(np.mean([rows[(a, d)]["K_sd"] for d in durs])) for a in amps]
    decreasing = spread[0] > spread[1] > spread[2]
    ratios = [max(rows[(a, d)]["K_sd"] for d in durs) / min(rows[(a, d)]["K_sd"] for d in durs)
              for a in amps]
    no_duration_effect = max(ratios) < 1.5
    ok = accurate and decreasing and no_duration_effect
    detail = (f"8 mm K {[round(rows[(8.0, d)]['K'], 1) for d in durs]}, "
              f"sd by amplitude {[round(s, 1) for s in spread]}, max duration ratio {max(ratios):.2f}")
    assert verdict(3, ok, detail)


def test_criterion_4_cable_poles(verdict):
    plant = PlantModel(CableStage.characterised(), None, SensorModel())
    logs = [noisy_trials(plant, saw_profile(s), [i])[0]
            for i, s in enumerate((20, 40, 100, 300, 500, 750))]
    est = fit_second_order(logs, 0.5, "cable")
    p1, p2 = poles(est).pole_frequencies
    ok = abs(p1 / 1.6 - 1) <= 0.02 and abs(p2 / 17.2 - 1) <= 0.02 and est.stiffness > 500
    assert verdict(4, ok, f"poles {p1:.3f} Hz and {p2:.2f} Hz, K_x {est.stiffness:.1f} N/m")


def test_criterion_5_sensitivity(verdict, tmp_path, capsys):
    code = main(["--out", str(tmp_path), "analyze", "sensitivity", "--budget", "0.05"])
    values = dict(line.split("=") for line in capsys.readouterr().out.split() if "=" in line)
    side, rot = float(values["max_sideway_cm"]), float(values["max_rotation_cm"])
    force = sideway_restoring_force(0.14, 200.0)
    ok = (code == 0 and abs(side - 14.3) <= 0.5 and abs(rot - 21.0) <= 1.0
          and abs(force / 225 - 1) <= 0.15)
    assert verdict(5, ok, f"side-way {side} cm, rotation {rot} cm, restoring {force:.0f} N")


def test_criterion_6_capstan(verdict):
    wraps = capstan_for_torque(150.0, 0.1).wraps
    rng = np.random.default_rng(6)
    broken = 0
    for _ in range(1000):
        hold_t = rng.uniform(1, 500)
        load = hold_t * rng.uniform(1, 100)
        mu, c = rng.uniform(0.05, 0.5), 10 ** rng.uniform(-3, 3)
        broken += capstan_min_turns(load * c, hold_t * c, mu).wraps != capstan_min_turns(load, hold_t, mu).wraps
    ok = wraps == 4 and broken == 0
    assert verdict(6, ok, f"{wraps} turns, {broken} scaling violations in 1000")


def test_criterion_7_sensor_models(verdict):
    sensors = replace(SensorModel(), drift_rate=0.0, sag_mass=0.0)
    plant = PlantModel(CableStage(), SpringPair(), sensors)
    log = simulate(plant, hold(0.0, 100_000), seed=7)
    truth = simulate(plant.noiseless(), hold(0.0, 2)).F1[0]
    sd = float(np.std(log.F1, ddof=1))
    bound = float(np.max(np.abs(log.F1 - truth)))

    moving = simulate(PlantModel(CableStage(), DummyLeg(), SensorModel()),
                      with_rest(plan_ramp_hold(PerturbationSpec(17.5, 150.0))), seed=1)
    ratio = moving.x_meas / 0.35
    quantised = np.allclose(ratio, np.round(ratio), rtol=0, atol=1e-9)

    quiet = PlantModel(CableStage.characterised(), None, SensorModel.noiseless())
    drifting = replace(quiet, sensors=replace(SensorModel.noiseless(), drift_rate=1 / 33.6))
    prof = plan_saw(60.0, 60.0, 9, DynamicLimits(750, 1e4, 1e6))
    drop = float((simulate(quiet, prof).F1 - simulate(drifting, prof).F1)[-1])
    drift = drop / prof.duration * 33.6

    ok = abs(sd / 0.29 - 1) <= 0.05 and bound <= 1.0 and quantised and abs(drift - 1) <= 0.01
    assert verdict(7, ok, f"sd {sd:.4f} N, max |noise| {bound:.3f} N, quantised {quantised}, "
                          f"drift {drift:.4f} N per 33.6 s")


def test_criterion_8_trajectory_planner(verdict):
    rng = np.random.default_rng(8)
    limit_breaks = oracle_misses = asymmetric = 0
    for _ in range(1000):
        d = rng.uniform(0.01, 300)
        limits = DynamicLimits(rng.uniform(10, 1000), 10 ** rng.uniform(2, np.log10(5e4)),
                               10 ** rng.uniform(4, 7))
        fwd = plan_fastest_move(0.0, d, limits)
        v, a, j = fwd.peak()
        limit_breaks += (v > limits.v_max * (1 + 1e-9) or a > limits.a_max * (1 + 1e-9)
                         or j > limits.j_max * (1 + 1e-6))
        oracle_misses += abs(fwd.duration - brute_force_duration(d, limits)) > DT
        back = plan_fastest_move(0.0, -d, limits)
        asymmetric += not np.array_equal(fwd.positions, -back.positions)
    ok = limit_breaks == oracle_misses == asymmetric == 0
    assert verdict(8, ok, f"limit breaks {limit_breaks}, oracle misses {oracle_misses}, "
                          f"asymmetric {asymmetric} of 1000")


def test_criterion_9_safety_properties(verdict):
    rng = np.random.default_rng(9)
    events = [START, ESTOP] + [Event("violation", c) for c in CAUSE_PRIORITY]
    unlatched = 0
    for _ in range(1000):
        state = FAULT
        for k in rng.integers(len(events), size=int(rng.integers(1, 30))):
            state = interlock_step(state, events[k])
            unlatched += state != FAULT
    unlatched += interlock_step(FAULT, RESET) == FAULT
    monitor_failures = sum(monitor_property_failures(rng) for _ in range(1000))
    ok = unlatched == 0 and monitor_failures == 0
    assert verdict(9, ok, f"latch breaks {unlatched}, monitor property failures {monitor_failures} "
                          f"over 1000 logs")


def test_criterion_10_anatomical_leg_variance(verdict):
    leg = anatomical_leg()
    plant = PlantModel(CableStage(), leg, SensorModel())
    amplitude, plateau = 20.0, 150.0
    limits, _ = optimize_perturbation(plant, amplitude, plateau, default_limit_grid())
    profile = with_rest(plan_ramp_hold(PerturbationSpec(amplitude, plateau, limits=limits)), 100, 500)
    estimates = np.array([fit_second_order([log], leg.I, "joint").params
                          for log in noisy_trials(plant, profile, range(20))])
    cv = np.std(estimates, axis=0, ddof=1) / np.abs(np.mean(estimates, axis=0))
    ok = bool(np.all(cv < 0.20))
    assert verdict(10, ok, "coefficient of variation I/B/K "
                           + "/".join(f"{100 * c:.1f}%" for c in cv))
