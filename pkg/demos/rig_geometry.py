"""Alignment tolerance and capstan sizing for the rig.

Prints how far the leg may drift sideways or rotate the cable plane before
the measured tension is off by five percent, then sizes the capstan.

    python3 demos/rig_geometry.py
"""

from nedsim import geometry


def main():
    side = geometry.max_sideway_displacement(0.05)
    rig = side.worst_case_config
    l1, l2 = rig.cable_lengths
    print(f"side-way tolerance {side.max_displacement:.1f} cm "
          f"(worst rig: leg {rig.leg_length:.2f} m, hip {rig.hip_angle:.0f} deg, "
          f"pulleys {l1:.2f} m and {l2:.2f} m from the foot)")
    force = geometry.sideway_restoring_force(0.14, 200.0)
    print(f"restoring force at 14 cm with 200 N pretension: {force:.0f} N")
    for mu in (0.1, 0.2, 0.3):
        print(f"mu={mu}: {geometry.capstan_for_torque(150.0, mu).wraps} turns for 150 N m")
    print("(the rotation sweep is slower; run `nedsim analyze sensitivity` for it)")


if __name__ == "__main__":
    main()
