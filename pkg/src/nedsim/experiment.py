"""Batch runner: repeated noisy trials, identification and aggregate tables."""

import csv
import json
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from . import __version__
from .errors import NedError
from .identify import fit_second_order, plateau_stiffness, plateau_window, poles
from .plant import DummyLeg, SpringPair, measure, simulate_truth
from .trajectory import DynamicLimits, PerturbationSpec, plan_ramp_hold, plan_saw, with_rest

SPRING_SETTLE_MS = 20.0
SAW_AMPLITUDE = 60.0


class TrialError(NedError):
    """A module error annotated with the trial that raised it."""

    def __init__(self, trial, error):
        super().__init__(f"trial {trial}: {error}")
        self.trial = trial
        self.error = error


@dataclass
class TrialRecord:
    index: int
    condition: dict
    seed: int
    log_path: Optional[str] = None
    estimate: dict = field(default_factory=dict)


@dataclass
class RunManifest:
    spec: dict
    trials: list
    aggregate: list
    statistics: dict
    version: str = __version__

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def leg_profile(leg, speed, perturbation_deg=5.0, plateau_ms=500.0, a_max=1e4, j_max=1e6):
    """Ramp-and-hold of ``perturbation_deg`` at the foot, padded with rest."""
    amplitude = 1000.0 * leg.L * np.radians(perturbation_deg)
    spec = PerturbationSpec(amplitude, plateau_ms, limits=DynamicLimits(speed, a_max, j_max))
    return with_rest(plan_ramp_hold(spec), 100.0, 500.0)


def spring_profile(amplitude, duration_ms, limits=None):
    limits = limits or DynamicLimits(750.0, 1e4, 1e6)
    return with_rest(plan_ramp_hold(PerturbationSpec(amplitude, duration_ms, limits=limits)),
                     100.0, 100.0)


def saw_profile(speed, cycles=None, a_max=1e4, j_max=1e6):
    if cycles is None:
        cycles = 10 if speed >= 100 else 2
    limits = DynamicLimits(max(speed, 750.0), a_max, j_max)
    return with_rest(plan_saw(SAW_AMPLITUDE, speed, cycles, limits), 100.0, 200.0)


def noisy_trials(plant, profile, seeds):
    """One noise-free integration reused for every seed's sensor pass.

    Equivalent to calling ``simulate`` per seed, since the physics does not
    depend on the seed.
    """
    xs, _, front, rear, f_t, slack = simulate_truth(plant, profile)
    return [measure(plant, profile, xs, front, rear, f_t, slack, s) for s in seeds]


def _iqr(values):
    q1, q3 = np.percentile(values, [25, 75])
    return float(q3 - q1)


def _conditions(spec, plant):
    if spec.kind == "leg":
        leg = plant.load if isinstance(plant.load, DummyLeg) else DummyLeg()
        for angle in spec.angles:
            trial_plant = replace(plant, load=replace(leg, base_angle=angle), leg_length_for_lever=None)
            for speed in spec.speeds:
                profile = leg_profile(trial_plant.load, speed, spec.perturbation_deg,
                                      spec.plateau_ms, spec.a_max, spec.j_max)
                yield {"speed": speed, "angle": angle}, trial_plant, profile
    elif spec.kind == "spring":
        spring = plant.load if isinstance(plant.load, SpringPair) else SpringPair()
        trial_plant = replace(plant, load=spring, leg_length_for_lever=1.0)
        for amplitude in spec.amplitudes:
            for duration in spec.durations:
                yield ({"amplitude": amplitude, "duration": duration}, trial_plant,
                       spring_profile(amplitude, duration))
    else:
        trial_plant = replace(plant, load=None, leg_length_for_lever=1.0)
        for speed in spec.speeds:
            yield {"speed": speed}, trial_plant, saw_profile(speed, a_max=spec.a_max, j_max=spec.j_max)


def _estimate_dict(est):
    p = poles(est)
    return {"I": est.inertia_or_mass, "B": est.viscosity, "K": est.stiffness,
            "nrmse": est.nrmse_percent, "pole1_hz": p.pole_frequencies[0],
            "pole2_hz": p.pole_frequencies[1], "converged": est.converged}


def _identify(spec, plant, logs):
    """Per-trial estimate dicts plus the condition's aggregate parameters."""
    if spec.kind == "spring":
        ks = [plateau_stiffness(log, plateau_window(log, SPRING_SETTLE_MS)) for log in logs]
        return [{"K": k} for k in ks], {"K": float(np.median(ks)), "K_iqr": _iqr(ks),
                                        "K_sd": float(np.std(ks, ddof=1)) if len(ks) > 1 else 0.0}
    if spec.kind == "leg":
        domain, mass = "joint", plant.load.I
    else:
        domain, mass = "cable", plant.cable.M_x
    if spec.fit_mode == "joint":
        est = _estimate_dict(fit_second_order(logs, mass, domain))
        return [{} for _ in logs], {k: est[k] for k in ("I", "B", "K", "nrmse")}
    per = [_estimate_dict(fit_second_order([log], mass, domain)) for log in logs]
    agg = {k: float(np.median([e[k] for e in per])) for k in ("I", "B", "K", "nrmse")}
    return per, agg


AGGREGATE_COLUMNS = {
    "leg": ("speed", "angle", "I", "B", "K", "nrmse"),
    "spring": ("amplitude", "duration", "K", "K_iqr", "K_sd"),
    "cable": ("speed", "I", "B", "K", "nrmse"),
}


def run_experiment(spec, plant, out_dir=None):
    """Run every condition of ``spec`` and return the manifest.

    With ``out_dir`` set, trial logs, ``aggregate.csv`` and ``manifest.json``
    are written there.  Rows are ordered by condition, then trial index.
    """
    seeds = [spec.seed + k for k in range(spec.trials)]
    records, rows, stats = [], [], {}
    if out_dir:
        os.makedirs(os.path.join(out_dir, "logs"), exist_ok=True)
    trial = 0
    for condition, trial_plant, profile in _conditions(spec, plant):
        try:
            logs = noisy_trials(trial_plant, profile, seeds)
            per, agg = _identify(spec, trial_plant, logs)
        except NedError as exc:
            raise TrialError(trial, exc) from exc
        label = "_".join(f"{k}{v:g}" for k, v in condition.items())
        values = {k: [e[k] for e in per if k in e] for k in ("I", "B", "K", "nrmse")}
        stats[label] = {k: {"median": float(np.median(v)), "iqr": _iqr(v)}
                        for k, v in values.items() if v}
        for seed, log, est in zip(seeds, logs, per):
            path = None
            if out_dir:
                path = os.path.join("logs", f"{label}_seed{seed}.csv")
                log.to_csv(os.path.join(out_dir, path))
            records.append(TrialRecord(trial, dict(condition), seed, path, est))
            trial += 1
        rows.append({**condition, **agg})
    manifest = RunManifest(asdict(spec), [asdict(r) for r in records], rows, stats)
    if out_dir:
        write_aggregate(os.path.join(out_dir, "aggregate.csv"), rows, AGGREGATE_COLUMNS[spec.kind])
        with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
            fh.write(manifest.to_json())
    return manifest


def write_aggregate(path, rows, columns):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([f"{row[c]:.6g}" for c in columns])

