"""Plateau stiffness of a spring pair and the pole check of the bare cable.

The first part shows how the spread of the ramp-and-hold stiffness estimate
shrinks with amplitude because the encoder quantum matters less.  The second
fits the unloaded transmission from saw-pattern trials and reports its poles.

    python3 demos/spring_and_cable.py
"""

import numpy as np

from nedsim.experiment import noisy_trials, saw_profile, spring_profile
from nedsim.identify import fit_second_order, plateau_stiffness, plateau_window, poles
from nedsim.plant import CableStage, PlantModel, SensorModel, SpringPair


def spring_demo():
    plant = PlantModel(CableStage(), SpringPair(1000.0), SensorModel(), leg_length_for_lever=1.0)
    print("spring pair, true K = 1000 N/m")
    for amplitude in (2.0, 4.0, 8.0):
        logs = noisy_trials(plant, spring_profile(amplitude, 100.0), range(20))
        ks = [plateau_stiffness(log, plateau_window(log, 20.0)) for log in logs]
        print(f"  {amplitude:.0f} mm: median {np.median(ks):7.1f}  sd {np.std(ks, ddof=1):5.1f}")


def cable_demo():
    plant = PlantModel(CableStage.characterised(), None, SensorModel())
    logs = [noisy_trials(plant, saw_profile(s), [i])[0]
            for i, s in enumerate((20, 40, 100, 300, 500, 750))]
    est = fit_second_order(logs, 0.5, "cable")
    ps = poles(est)
    print(f"cable: M={est.inertia_or_mass:.3f} kg  B={est.viscosity:.2f} N s/m  K={est.stiffness:.1f} N/m")
    print(f"  poles {ps.pole_frequencies[0]:.2f} Hz and {ps.pole_frequencies[1]:.2f} Hz "
          f"({ps.damping_classification})")


if __name__ == "__main__":
    spring_demo()
    cable_demo()
