"""Identify a rigid dummy leg from noisy ramp-and-hold trials.

Plans a 5 degree perturbation at a few speeds, simulates twenty noisy trials
per speed on an 18 kg leg held at 35 degrees, fits inertia, viscosity and
stiffness in the joint domain and prints the medians.

    python3 demos/dummy_leg_identification.py
"""

import numpy as np

from nedsim.experiment import leg_profile, noisy_trials
from nedsim.identify import fit_second_order
from nedsim.plant import CableStage, DummyLeg, PlantModel, SensorModel


def main():
    leg = DummyLeg(base_angle=35.0)
    plant = PlantModel(CableStage(), leg, SensorModel())
    print(f"true inertia {leg.I:.2f} kg m^2, gravity stiffness {leg.gravity_stiffness():.1f} N m/rad")
    print(f"{'speed':>6} {'I':>7} {'B':>7} {'K':>7} {'nrmse':>6}")
    for speed in (20.0, 100.0, 500.0):
        logs = noisy_trials(plant, leg_profile(leg, speed), range(20))
        fits = [fit_second_order([log], leg.I, "joint") for log in logs]
        med = np.median([[f.inertia_or_mass, f.viscosity, f.stiffness, f.nrmse_percent] for f in fits],
                        axis=0)
        print(f"{speed:6.0f} {med[0]:7.3f} {med[1]:7.2f} {med[2]:7.1f} {med[3]:6.1f}")


if __name__ == "__main__":
    main()
