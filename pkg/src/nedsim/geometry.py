"""Rig kinematics, cable misalignment sensitivity and capstan sizing.

Coordinates are sagittal-plane metres with the hip joint at the origin, x
pointing forward and y pointing up.  The foot (ankle fixture) of a straight
leg at hip angle ``theta`` sits at ``L * (sin theta, -cos theta)``.  Before each
experiment the pulleys are shifted along their rails until the cable runs
perpendicular to the leg.
"""

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometry, InvalidArgument

RAIL_HALF_WIDTH = 3.0
RAIL_HALF_HEIGHT = 1.5

# Ranges explored when sizing the rig for misalignment.
LEG_RANGE = (0.80, 0.95)
HIP_RANGE = (5.0, 60.0)
FRONT_RANGE = (0.80, 1.65)
REAR_RANGE = (0.45, 1.10)

SPATIAL_STEP = 0.01
ANGULAR_STEP = 1.0
REFINE_STEP = 0.001


@dataclass(frozen=True)
class RigConfig:
    leg_length: float
    hip_angle: float
    front_pulley: tuple
    rear_pulley: tuple
    motor_pulley_radius: float = 0.05

    def __post_init__(self):
        if not 0.5 <= self.leg_length <= 1.2:
            raise InvalidArgument(f"leg length {self.leg_length} m outside [0.5, 1.2]")
        if self.motor_pulley_radius <= 0:
            raise InvalidArgument("motor pulley radius must be positive")
        for name in ("front_pulley", "rear_pulley"):
            x, y = getattr(self, name)
            if abs(x) > RAIL_HALF_WIDTH or abs(y) > RAIL_HALF_HEIGHT:
                raise InvalidArgument(f"{name} ({x}, {y}) lies outside the rail frame")

    @classmethod
    def perpendicular(cls, leg_length, hip_angle, front_distance, rear_distance,
                      motor_pulley_radius=0.05):
        """Place both pulleys on the line through the foot normal to the leg."""
        foot, normal = _foot_and_normal(leg_length, math.radians(hip_angle))
        front = foot + front_distance * normal
        rear = foot - rear_distance * normal
        return cls(float(leg_length), float(hip_angle), tuple(map(float, front)),
                   tuple(map(float, rear)), float(motor_pulley_radius))

    @property
    def foot(self):
        return _foot_and_normal(self.leg_length, math.radians(self.hip_angle))[0]

    @property
    def cable_lengths(self):
        foot = self.foot
        return (float(np.hypot(*(np.asarray(self.front_pulley) - foot))),
                float(np.hypot(*(np.asarray(self.rear_pulley) - foot))))


@dataclass(frozen=True)
class SensitivityResult:
    max_displacement: float
    worst_error: float
    worst_case_config: RigConfig


def _foot_and_normal(L, theta):
    foot = np.array([L * math.sin(theta), -L * math.cos(theta)])
    normal = np.array([math.cos(theta), math.sin(theta)])
    return foot, normal


def _grid(lo, hi, step):
    n = int(round((hi - lo) / step))
    return lo + step * np.arange(n + 1)


def motor_to_joint(dtheta_m, rig):
    """Hip rotation produced by a motor rotation under the straight-leg map."""
    return rig.motor_pulley_radius / rig.leg_length * dtheta_m


def joint_to_motor(dtheta, rig):
    return rig.leg_length / rig.motor_pulley_radius * dtheta


# -- off-plane displacement --------------------------------------------------

def off_plane_error(x_u, L1, L2):
    """Force error when the foot moves ``x_u`` out of the sagittal plane.

    Each load cell sees its cable tilted by ``arctan(x_u / L_i)`` and measures
    only the in-plane projection.  The shorter span tilts most, and that cell
    sets the error of a stiffness estimate that uses its reading.
    """
    if L1 <= 0 or L2 <= 0:
        raise InvalidArgument("pulley distances must be positive")
    x = np.abs(np.asarray(x_u, dtype=float))
    tilt = np.maximum(np.arctan(x / L1), np.arctan(x / L2))
    out = 1.0 - np.cos(tilt)
    return float(out) if out.ndim == 0 else out


def _largest_admissible(error_fn, budget, upper):
    """Largest multiple of REFINE_STEP in [0, upper] keeping error within budget.

    ``error_fn`` maps an array of displacements to an array of errors (one
    entry per configuration) and must be non-decreasing in displacement.
    """
    lo = np.zeros(error_fn(np.zeros(1)).shape, dtype=int)
    hi = np.full_like(lo, int(round(upper / REFINE_STEP)))
    while np.any(hi > lo):
        mid = (lo + hi + 1) // 2
        ok = error_fn(mid * REFINE_STEP) <= budget
        lo = np.where(ok, mid, lo)
        hi = np.where(ok, hi, mid - 1)
    return lo * REFINE_STEP


def max_sideway_displacement(error_budget=0.05, leg_range=LEG_RANGE, hip_range=HIP_RANGE,
                             pulley_ranges=(FRONT_RANGE, REAR_RANGE)):
    """Largest out-of-plane foot motion whose worst-case force error fits the budget."""
    if not 0 < error_budget < 1:
        raise InvalidArgument("error budget must lie in (0, 1)")
    legs = _grid(*leg_range, SPATIAL_STEP)
    hips = _grid(*hip_range, ANGULAR_STEP)
    L1 = _grid(*pulley_ranges[0], SPATIAL_STEP)
    L2 = _grid(*pulley_ranges[1], SPATIAL_STEP)
    if min(legs.size, hips.size, L1.size, L2.size) == 0 or min(L1[0], L2[0]) <= 0:
        raise InvalidArgument("empty or non-positive sensitivity grid")
    A, B = (g.ravel() for g in np.meshgrid(L1, L2, indexing="ij"))

    def errors(x):
        x = np.broadcast_to(x, A.shape)
        return 1.0 - np.cos(np.maximum(np.arctan(x / A), np.arctan(x / B)))

    # Off-plane tilt depends on the spans only; leg length and hip angle
    # enter through the reported worst-case rig.
    reach = _largest_admissible(errors, error_budget, upper=2 * max(A.max(), B.max()))
    worst = int(np.argmin(reach))
    x = float(reach[worst])
    rig = RigConfig.perpendicular(legs[0], hips[0], A[worst], B[worst])
    return SensitivityResult(100.0 * x, off_plane_error(x, A[worst], B[worst]), rig)


# -- in-plane rotation --------------------------------------------------------

def _rotation_cosines(displacement, L, theta0, L1, L2):
    """Cosines between actual and ideal cables after the foot travels along its arc.

    The ideal pulley sits on the new perpendicular through the foot at the
    original span, so each triangle has the actual cable, the ideal cable
    and the pulley offset as its sides.  Arrays broadcast together.  Returns
    (cos_front, cos_rear, valid) where ``valid`` is False for a collapsed
    triangle or a cosine outside [-1, 1].
    """
    theta = theta0 + displacement / L
    fx, fy = L * np.sin(theta), -L * np.cos(theta)
    nx, ny = np.cos(theta), np.sin(theta)
    f0x, f0y = L * np.sin(theta0), -L * np.cos(theta0)
    n0x, n0y = np.cos(theta0), np.sin(theta0)

    cosines, valid = [], True
    with np.errstate(divide="ignore", invalid="ignore"):
        for span, sign in ((L1, 1.0), (L2, -1.0)):
            px, py = f0x + sign * span * n0x, f0y + sign * span * n0y
            ix, iy = fx + sign * span * nx, fy + sign * span * ny
            actual = np.hypot(px - fx, py - fy)
            offset = np.hypot(ix - px, iy - py)
            c = (actual ** 2 + span ** 2 - offset ** 2) / (2 * actual * span)
            valid = valid & np.isfinite(c) & (np.abs(c) <= 1 + 1e-12)
            cosines.append(np.clip(c, -1, 1))
    return cosines[0], cosines[1], valid


def rotation_error(displacement, rig):
    """Force-difference error after the foot moves ``displacement`` metres along its arc.

    The pulleys stay where they were set for the starting posture.  Each
    cable's misalignment follows from the triangle formed by the foot, the
    actual pulley and the ideal (perpendicular) pulley position.  The stiffness estimate uses F1 - F2, so its error is the mean of
    the two cells' projection losses.
    """
    L, theta0 = rig.leg_length, math.radians(rig.hip_angle)
    L1, L2 = rig.cable_lengths
    c1, c2, valid = _rotation_cosines(np.asarray(displacement, float), L, theta0, L1, L2)
    if not np.all(valid):
        raise DegenerateGeometry("law-of-cosines argument outside [-1, 1]")
    out = 1.0 - 0.5 * (c1 + c2)
    return float(out) if np.ndim(out) == 0 else out


def max_rotation_displacement(error_budget=0.05, leg_range=LEG_RANGE, hip_range=HIP_RANGE,
                              pulley_ranges=(FRONT_RANGE, REAR_RANGE), upper=0.6):
    """Largest in-plane foot travel (either direction) within the error budget."""
    if not 0 < error_budget < 1:
        raise InvalidArgument("error budget must lie in (0, 1)")
    legs = _grid(*leg_range, SPATIAL_STEP)
    hips = np.radians(_grid(*hip_range, ANGULAR_STEP))
    L1 = _grid(*pulley_ranges[0], SPATIAL_STEP)
    L2 = _grid(*pulley_ranges[1], SPATIAL_STEP)
    if min(legs.size, hips.size, L1.size, L2.size) == 0:
        raise InvalidArgument("empty sensitivity grid")
    grids = [g.ravel() for g in np.meshgrid(legs, hips, L1, L2, [1.0, -1.0], indexing="ij")]
    L, th0, A, B, sign = grids

    def errors(d):
        c1, c2, valid = _rotation_cosines(sign * d, L, th0, A, B)
        return np.where(valid, 1.0 - 0.5 * (c1 + c2), np.inf)

    reach = _largest_admissible(errors, error_budget, upper)
    worst = int(np.argmin(reach))
    d = float(reach[worst])
    rig = RigConfig.perpendicular(L[worst], math.degrees(th0[worst]), A[worst], B[worst])
    return SensitivityResult(100.0 * d, rotation_error(sign[worst] * d, rig), rig)


def sensitivity_rows(error_budget=0.05, x_max_cm=30, pulley_ranges=(FRONT_RANGE, REAR_RANGE)):
    """Off-plane error curves for the corner span combinations, as CSV rows."""
    rows = []
    for L1 in pulley_ranges[0]:
        for L2 in pulley_ranges[1]:
            label = f"L1={L1:.2f};L2={L2:.2f}"
            for x_cm in range(0, x_max_cm + 1):
                err = off_plane_error(x_cm / 100.0, L1, L2)
                rows.append((label, x_cm, 100.0 * err))
    return rows


def sensitivity_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["param_set", "x_u_cm", "error_pct"])
    for label, x_cm, pct in rows:
        writer.writerow([label, x_cm, f"{pct:.6g}"])
    return buf.getvalue()


# -- capstan and side-way stiffness --------------------------------------------

@dataclass(frozen=True)
class CapstanResult:
    angle: float
    turns: float
    wraps: int

    def report(self):
        return f"min_angle_rad={self.angle:.6g}\nwraps={self.wraps}"


def capstan_min_turns(T_load, T_hold, mu):
    """Minimum wrap angle so a pulley holds ``T_load`` against ``T_hold``."""
    if not T_hold > 0:
        raise InvalidArgument("holding tension must be positive")
    if not mu > 0:
        raise InvalidArgument("friction coefficient must be positive")
    if T_load < T_hold:
        raise InvalidArgument("load tension must not be below holding tension")
    angle = math.log(T_load / T_hold) / mu
    turns = angle / (2 * math.pi)
    # Guard against ratios constructed to land on a whole turn.
    wraps = math.ceil(turns - 1e-12)
    return CapstanResult(angle, turns, max(wraps, 0))


def capstan_for_torque(torque, mu, pretension=200.0, transmission_radius=0.1):
    """Capstan sizing for a peak joint torque carried by the cable loop.

    The loaded side carries the pretension plus ``torque / transmission_radius``
    while the holding side stays at the pretension.
    """
    if transmission_radius <= 0:
        raise InvalidArgument("transmission radius must be positive")
    return capstan_min_turns(pretension + torque / transmission_radius, pretension, mu)


def sideway_restoring_force(x_u, pretension=200.0, cable_stiffness=3.0e4, rig=None,
                            spans=(1.2, 0.8)):
    """Transverse force needed to hold the foot ``x_u`` metres out of plane.

    Both segments belong to one closed loop, so they share a tension equal to
    the pretension plus the loop stiffness times the total elastic stretch.
    """
    if pretension < 0 or cable_stiffness < 0:
        raise InvalidArgument("pretension and stiffness must be non-negative")
    L1, L2 = rig.cable_lengths if rig is not None else spans
    x = abs(float(x_u))
    h1, h2 = math.hypot(L1, x), math.hypot(L2, x)
    tension = pretension + cable_stiffness * ((h1 - L1) + (h2 - L2))
    return tension * (x / h1 + x / h2)


