import math
from dataclasses import replace

import numpy as np
import pytest

from nedsim.errors import (InsufficientExcitation, InvalidWindow, ResolutionLimited,
                           UndefinedReference)
from nedsim.experiment import noisy_trials, saw_profile
from nedsim.identify import (ImpedanceEstimate, fit_second_order, nrmse, plateau_stiffness,
                             plateau_window, poles)
from nedsim.plant import CableStage, PlantModel, SensorLog, SensorModel, SpringPair, simulate
from nedsim.trajectory import DynamicLimits, PerturbationSpec, hold, plan_ramp_hold, plan_saw, with_rest

QUIET = SensorModel.noiseless()
ROUND_TRIP_PROFILE = with_rest(plan_saw(60.0, 750.0, 2, DynamicLimits(750, 1e4, 1e6)), 100, 200)


def test_nrmse_anchors():
    y = np.array([0.0, 1.0, 2.0, 3.0])
    assert nrmse(y, y) == 100.0
    assert nrmse(y, np.full(4, y.mean())) == pytest.approx(0.0)
    assert nrmse(y, [0, 1, 2, 2]) == pytest.approx(100 * (1 - 1 / math.sqrt(5)))
    with pytest.raises(UndefinedReference):
        nrmse([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])


def test_nrmse_never_exceeds_100():
    rng = np.random.default_rng(0)
    for _ in range(50):
        y = rng.normal(size=20)
        assert nrmse(y, y + rng.normal(size=20)) <= 100


def test_poles_of_characterised_cable():
    ps = poles(ImpedanceEstimate(0.5, 59.04, 543.1, 100.0, "cable"))
    assert ps.pole_frequencies[0] == pytest.approx(1.6, rel=0.01)
    assert ps.pole_frequencies[1] == pytest.approx(17.2, rel=0.01)
    assert ps.damping_classification == "overdamped"


def test_poles_undamped_and_critical():
    ps = poles(ImpedanceEstimate(2.0, 0.0, 800.0, 100.0, "cable"))
    assert ps.damping_classification == "underdamped"
    assert ps.pole_frequencies[0] == ps.pole_frequencies[1] == pytest.approx(20 / (2 * math.pi))
    crit = poles(ImpedanceEstimate(1.0, 2 * math.sqrt(100.0), 100.0, 100.0, "cable"))
    assert crit.damping_classification == "critical"
    assert crit.pole_frequencies[0] == crit.pole_frequencies[1]


def test_estimate_record_round_trip():
    est = ImpedanceEstimate(0.5, 59.0, 543.0, 97.5, "cable", True, 12)
    text = est.to_record()
    assert "inertia=" in text and "pole1_hz=" in text and "pole2_hz=" in text
    back = ImpedanceEstimate.from_record(text)
    assert back.params == pytest.approx(est.params)


def test_noise_free_cable_round_trip():
    plant = PlantModel(CableStage.characterised(), None, QUIET)
    est = fit_second_order([simulate(plant, ROUND_TRIP_PROFILE)], 0.5, "cable")
    assert est.params == pytest.approx((0.5, 59.04, 543.1), rel=1e-4)
    assert est.converged


@pytest.mark.parametrize("seed", range(5))
def test_random_plant_round_trip(seed):
    rng = np.random.default_rng(100 + seed)
    m, b, k = rng.uniform(0.1, 5), rng.uniform(1, 200), rng.uniform(100, 5000)
    plant = PlantModel(CableStage(m, b, k), None, QUIET)
    est = fit_second_order([simulate(plant, ROUND_TRIP_PROFILE)], 0.5, "cable")
    assert est.params == pytest.approx((m, b, k), rel=1e-3)


def test_zero_motion_is_insufficient():
    plant = PlantModel(CableStage.characterised(), None, SensorModel())
    log = simulate(plant, hold(0.0, 500))
    with pytest.raises(InsufficientExcitation):
        fit_second_order([log], 0.5, "cable")


def test_noisy_cable_recovers_poles():
    plant = PlantModel(CableStage.characterised(), None, SensorModel())
    logs = [noisy_trials(plant, saw_profile(s), [i])[0]
            for i, s in enumerate((20, 50, 100, 250, 500, 750))]
    ps = poles(fit_second_order(logs, 0.5, "cable"))
    assert ps.pole_frequencies[0] == pytest.approx(1.6, rel=0.02)
    assert ps.pole_frequencies[1] == pytest.approx(17.2, rel=0.02)


def test_median_error_shrinks_with_more_trials():
    plant = PlantModel(CableStage.characterised(), None, SensorModel())
    prof = saw_profile(100.0, cycles=1)
    truth = np.array([0.5, 59.04, 543.1])
    medians = []
    for n in (1, 5, 20):
        errs = []
        for rep in range(10):
            logs = noisy_trials(plant, prof, range(1000 * rep, 1000 * rep + n))
            est = fit_second_order(logs, 0.5, "cable")
            errs.append(np.max(np.abs(np.array(est.params) / truth - 1)))
        medians.append(np.median(errs))
    assert medians[0] > medians[1] > medians[2]


def spring_log(amplitude, duration, seed, plant=None):
    plant = plant or PlantModel(CableStage(), SpringPair(1000.0), SensorModel())
    prof = with_rest(plan_ramp_hold(PerturbationSpec(amplitude, duration)))
    return simulate(plant, prof, seed)


def test_plateau_stiffness_accuracy():
    ks = [plateau_stiffness(log, plateau_window(log, 20.0))
          for log in (spring_log(8.0, 150.0, s) for s in range(20))]
    assert np.median(ks) == pytest.approx(1000.0, rel=0.05)
    assert all(abs(k / 1000 - 1) < 0.1 for k in ks)


def test_plateau_spread_shrinks_with_amplitude():
    def spread(a):
        return np.std([plateau_stiffness(log, plateau_window(log, 20.0))
                       for log in (spring_log(a, 100.0, s) for s in range(20))])
    assert spread(2.0) > spread(8.0)


def test_plateau_insensitive_to_mass_and_viscosity():
    base = PlantModel(CableStage(M_x=0.5, B_x=60.0), SpringPair(1000.0), QUIET)
    heavy = PlantModel(CableStage(M_x=3.0, B_x=400.0), SpringPair(1000.0), QUIET)
    estimates = []
    for plant in (base, heavy):
        log = spring_log(8.0, 150.0, 0, plant)
        estimates.append(plateau_stiffness(log, plateau_window(log, 60.0)))
    assert estimates[1] == pytest.approx(estimates[0], rel=0.01)


def test_plateau_zero_force_gives_zero():
    prof = with_rest(plan_ramp_hold(PerturbationSpec(8.0, 150.0)))
    n = len(prof)
    log = SensorLog(0.001, prof.positions, prof.positions.copy(), np.full(n, 200.0),
                    np.full(n, 200.0), marks=dict(prof.marks))
    assert plateau_stiffness(log, plateau_window(log)) == 0.0


def test_plateau_window_errors():
    log = spring_log(8.0, 150.0, 0)
    with pytest.raises(InvalidWindow):
        plateau_stiffness(log, (50.0, 200.0))
    with pytest.raises(InvalidWindow):
        plateau_stiffness(log, (0.0, 1e6))
    prof = with_rest(plan_ramp_hold(PerturbationSpec(0.1, 100.0)))
    tiny = simulate(PlantModel(CableStage(), SpringPair(), replace(SensorModel(), random_encoder_phase=False)), prof, 0)
    with pytest.raises(ResolutionLimited):
        plateau_stiffness(tiny, plateau_window(tiny))


def test_per_trial_mode_averages():
    plant = PlantModel(CableStage.characterised(), None, SensorModel())
    logs = noisy_trials(plant, saw_profile(250.0, cycles=2), range(3))
    est = fit_second_order(logs, 0.5, "cable", mode="per_trial")
    assert len(est.trials) == 3
    assert est.inertia_or_mass == pytest.approx(np.mean([t.inertia_or_mass for t in est.trials]))
