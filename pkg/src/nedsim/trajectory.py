"""Jerk-limited position commands for the cable rig.

All positions are in mm, time in s, and every profile is sampled at a fixed
1 kHz rate.  The point-to-point planner produces the time-optimal symmetric
seven-segment (constant jerk) profile; ramp-and-hold perturbations and saw
patterns are built by chaining point-to-point moves.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidArgument, NoFeasibleCandidate, NumericInstability

DT = 0.001
FLEXION = "flexion"
EXTENSION = "extension"


@dataclass(frozen=True)
class DynamicLimits:
    v_max: float  # mm/s
    a_max: float  # mm/s^2
    j_max: float  # mm/s^3

    def __post_init__(self):
        for name in ("v_max", "a_max", "j_max"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InvalidArgument(f"{name} must be positive and finite, got {value!r}")


@dataclass(frozen=True, eq=False)
class TrajectoryProfile:
    """Uniformly sampled commanded motion.

    ``marks`` holds named sample indices (motion onset, plateau bounds, ...)
    set by the planners that build composite profiles.
    """

    dt: float
    positions: np.ndarray
    velocities: np.ndarray
    accelerations: np.ndarray
    marks: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.positions)
        if len(self.velocities) != n or len(self.accelerations) != n:
            raise InvalidArgument("positions, velocities and accelerations must have equal lengths")
        if n == 0:
            raise InvalidArgument("a profile holds at least one sample")

    def __len__(self):
        return len(self.positions)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self)) * self.dt

    @property
    def duration(self) -> float:
        return (len(self) - 1) * self.dt

    def jerk(self) -> np.ndarray:
        """Forward-difference jerk of the sampled accelerations."""
        return np.diff(self.accelerations) / self.dt

    def peak(self) -> tuple[float, float, float]:
        """Peak |v|, |a| and finite-difference |jerk|."""
        jerk = self.jerk()
        return (
            float(np.max(np.abs(self.velocities))),
            float(np.max(np.abs(self.accelerations))),
            float(np.max(np.abs(jerk))) if len(jerk) else 0.0,
        )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t_s", "pos_mm", "vel_mm_s", "acc_mm_s2"])
            for t, x, v, a in zip(self.times, self.positions, self.velocities, self.accelerations):
                writer.writerow([f"{t:.9g}", f"{x:.9g}", f"{v:.9g}", f"{a:.9g}"])

    @classmethod
    def from_csv(cls, path) -> "TrajectoryProfile":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        t = data[:, 0]
        dt = float(np.round(t[1] - t[0], 9)) if len(t) > 1 else DT
        return cls(dt, data[:, 1].copy(), data[:, 2].copy(), data[:, 3].copy())


@dataclass(frozen=True)
class PerturbationSpec:
    amplitude: float  # mm
    plateau_duration: float  # ms
    direction: str = FLEXION
    limits: DynamicLimits = DynamicLimits(750.0, 1e4, 1e6)

    def __post_init__(self):
        if not self.amplitude > 0:
            raise InvalidArgument("amplitude must be > 0")
        if not self.plateau_duration >= 0:
            raise InvalidArgument("plateau_duration must be >= 0")
        if self.direction not in (FLEXION, EXTENSION):
            raise InvalidArgument(f"direction must be {FLEXION!r} or {EXTENSION!r}")

    @property
    def sign(self) -> float:
        return 1.0 if self.direction == FLEXION else -1.0


def scurve_segments(distance: float, limits: DynamicLimits) -> tuple[float, float, float]:
    """Segment times ``(t_jerk, t_acc, t_cruise)`` of the fastest rest-to-rest move.

    The profile is the symmetric seven-segment family
    ``+j, 0, -j, 0, -j, 0, +j`` with durations
    ``t_jerk, t_acc, t_jerk, t_cruise, t_jerk, t_acc, t_jerk``.
    """
    d = abs(distance)
    v, a, j = limits.v_max, limits.a_max, limits.j_max
    if d == 0:
        return 0.0, 0.0, 0.0

    # acceleration phase needed to reach v_max
    if v * j >= a * a:
        tj, ta = a / j, v / a - a / j
    else:
        tj, ta = math.sqrt(v / j), 0.0
    t_ramp = 2 * tj + ta
    if d >= v * t_ramp:
        return tj, ta, (d - v * t_ramp) / v

    # v_max is not reached; try a profile that still saturates a_max
    vp = 0.5 * a * (-a / j + math.sqrt((a / j) ** 2 + 4 * d / a))
    if vp >= a * a / j:
        return a / j, vp / a - a / j, 0.0
    return (d / (2 * j)) ** (1 / 3), 0.0, 0.0


def move_duration(distance: float, limits: DynamicLimits) -> float:
    tj, ta, tv = scurve_segments(distance, limits)
    return 4 * tj + 2 * ta + tv


def _check_finite(*values):
    for v in values:
        if not math.isfinite(v):
            raise InvalidArgument(f"non-finite input {v!r}")


def plan_fastest_move(x0: float, x1: float, limits: DynamicLimits, dt: float = DT) -> TrajectoryProfile:
    """Time-optimal jerk-limited move from rest at ``x0`` to rest at ``x1``."""
    _check_finite(x0, x1)
    if not isinstance(limits, DynamicLimits):
        raise InvalidArgument("limits must be DynamicLimits")
    distance = x1 - x0
    if distance == 0:
        zero = np.zeros(1)
        return TrajectoryProfile(dt, np.array([float(x0)]), zero.copy(), zero.copy())

    s = 1.0 if distance > 0 else -1.0
    j = limits.j_max
    tj, ta, tv = scurve_segments(distance, limits)
    durations = np.array([tj, ta, tj, tv, tj, ta, tj])
    jerks = np.array([j, 0.0, -j, 0.0, -j, 0.0, j])
    knots = np.concatenate([[0.0], np.cumsum(durations)])
    total = knots[-1]

    # exact state at each knot
    p0 = np.zeros(8)
    v0 = np.zeros(8)
    a0 = np.zeros(8)
    for k, (T, J) in enumerate(zip(durations, jerks)):
        a0[k + 1] = a0[k] + J * T
        v0[k + 1] = v0[k] + a0[k] * T + J * T * T / 2
        p0[k + 1] = p0[k] + v0[k] * T + a0[k] * T * T / 2 + J * T**3 / 6

    n = int(math.ceil(total / dt - 1e-9))
    t = np.minimum(np.arange(n + 1) * dt, total)
    seg = np.clip(np.searchsorted(knots, t, side="right") - 1, 0, 6)
    tau = t - knots[seg]
    J = jerks[seg]
    acc = a0[seg] + J * tau
    vel = v0[seg] + a0[seg] * tau + J * tau**2 / 2
    pos = p0[seg] + v0[seg] * tau + a0[seg] * tau**2 / 2 + J * tau**3 / 6

    # the closed form already honours the limits; clip only rounding noise
    vel = np.clip(vel, 0.0, limits.v_max)
    acc = np.clip(acc, -limits.a_max, limits.a_max)
    pos[-1], vel[-1], acc[-1] = abs(distance), 0.0, 0.0
    vel[0] = acc[0] = 0.0
    return TrajectoryProfile(dt, x0 + s * pos, s * vel, s * acc)


def concatenate(profiles: Sequence[TrajectoryProfile]) -> TrajectoryProfile:
    """Chain profiles whose joints coincide (end of one == start of next).

    The shared joint sample is kept once.  Marks of later pieces are shifted.
    """
    if not profiles:
        raise InvalidArgument("nothing to concatenate")
    dt = profiles[0].dt
    pos, vel, acc = [profiles[0].positions], [profiles[0].velocities], [profiles[0].accelerations]
    marks = dict(profiles[0].marks)
    offset = len(profiles[0]) - 1
    for p in profiles[1:]:
        if p.dt != dt:
            raise InvalidArgument("profiles must share dt")
        pos.append(p.positions[1:])
        vel.append(p.velocities[1:])
        acc.append(p.accelerations[1:])
        marks.update({k: v + offset for k, v in p.marks.items()})
        offset += len(p) - 1
    return TrajectoryProfile(dt, np.concatenate(pos), np.concatenate(vel), np.concatenate(acc), marks)


def hold(x: float, samples: int, dt: float = DT) -> TrajectoryProfile:
    """At-rest profile of ``samples`` samples at position ``x``."""
    if samples < 1:
        raise InvalidArgument("hold needs at least one sample")
    return TrajectoryProfile(dt, np.full(samples, float(x)), np.zeros(samples), np.zeros(samples))


def with_rest(profile: TrajectoryProfile, before_ms: float = 100.0, after_ms: float = 100.0) -> TrajectoryProfile:
    """Pad a profile with rest periods; adds an ``onset`` mark at the first moving sample."""
    nb = int(round(before_ms * 1e-3 / profile.dt))
    na = int(round(after_ms * 1e-3 / profile.dt))
    pieces = []
    if nb:
        pieces.append(hold(profile.positions[0], nb + 1, profile.dt))
    pieces.append(profile)
    if na:
        pieces.append(hold(profile.positions[-1], na + 1, profile.dt))
    out = concatenate(pieces)
    marks = dict(out.marks)
    marks.setdefault("onset", nb)
    return replace(out, marks=marks)


def plan_ramp_hold(spec: PerturbationSpec, x0: float = 0.0) -> TrajectoryProfile:
    """Fastest move out by ``amplitude``, a constant plateau, fastest move back.

    The plateau holds exactly ``round(plateau_duration)`` samples at the
    target (one apex sample when the duration is zero).  Marks:
    ``plateau_start`` (first plateau sample), ``plateau_end`` (one past the
    last), ``onset`` and ``end``.
    """
    _check_finite(x0)
    target = x0 + spec.sign * spec.amplitude
    out = plan_fastest_move(x0, target, spec.limits)
    back = plan_fastest_move(target, x0, spec.limits)
    n_plateau = int(round(spec.plateau_duration * 1e-3 / out.dt))
    pieces = [out]
    if n_plateau > 1:
        pieces.append(hold(target, n_plateau, out.dt))
    pieces.append(back)
    profile = concatenate(pieces)
    start = len(out) - 1
    marks = {"onset": 0, "plateau_start": start, "plateau_end": start + max(n_plateau, 1),
             "end": len(profile) - 1}
    return replace(profile, marks=marks)


def plan_saw(amplitude: float, speed: float, cycles: int, limits: DynamicLimits) -> TrajectoryProfile:
    """``cycles`` triangular excursions 0 -> +A -> -A -> 0 at commanded ``speed``.

    Corners are blended by the jerk-limited planner (each stroke starts and
    ends at rest) using the acceleration and jerk limits of ``limits``.
    """
    _check_finite(amplitude, speed)
    if speed <= 0 or speed > limits.v_max:
        raise InvalidArgument(f"speed {speed} outside (0, v_max={limits.v_max}]")
    if cycles < 0:
        raise InvalidArgument("cycles must be >= 0")
    if cycles == 0 or amplitude == 0:
        return hold(0.0, 1)
    stroke = DynamicLimits(speed, limits.a_max, limits.j_max)
    a = abs(amplitude)
    up = plan_fastest_move(0.0, a, stroke)
    down = plan_fastest_move(a, -a, stroke)
    rise = plan_fastest_move(-a, 0.0, stroke)
    return concatenate([up, down, rise] + [up, down, rise] * (cycles - 1))


def default_limit_grid() -> list[DynamicLimits]:
    """Fifty speed/acceleration/jerk combinations for perturbation tuning.

    Speeds 100-1000 mm/s (5 levels), accelerations 1e3-3e4 mm/s^2
    (5 log-spaced levels), jerks {1e5, 1e6} mm/s^3.
    """
    grid = []
    for v in np.linspace(100.0, 1000.0, 5):
        for a in np.logspace(3, math.log10(3e4), 5):
            for j in (1e5, 1e6):
                grid.append(DynamicLimits(float(v), float(a), float(j)))
    return grid


def plateau_ripple(log, profile: TrajectoryProfile, settle_ms: float = 20.0) -> float:
    """Peak-to-peak of F1 - F2 over the plateau, skipping ``settle_ms`` of settling."""
    start = profile.marks["plateau_start"] + int(round(settle_ms * 1e-3 / profile.dt))
    stop = profile.marks["plateau_end"]
    diff = np.asarray(log.F1) - np.asarray(log.F2)
    window = diff[start:stop]
    if len(window) == 0:
        window = diff[profile.marks["plateau_start"]:stop]
    return float(np.ptp(window))


def optimize_perturbation(plant, amplitude: float, plateau: float,
                          candidate_limits: Sequence[DynamicLimits],
                          direction: str = FLEXION, settle_ms: float = 20.0):
    """Pick the candidate limits whose ramp-and-hold yields the smallest plateau ripple.

    Each candidate is simulated on ``plant`` with noise-free sensors.  Ties
    go to the shorter motion, then to the earlier candidate.  Returns
    ``(limits, ripple_N)``.
    """
    from .plant import simulate  # plant depends on this module

    if not candidate_limits:
        raise InvalidArgument("candidate list is empty")
    quiet = plant.noiseless()
    scored = []
    for index, limits in enumerate(candidate_limits):
        spec = PerturbationSpec(amplitude, plateau, direction, limits)
        profile = with_rest(plan_ramp_hold(spec), 100.0, 100.0)
        try:
            log = simulate(quiet, profile, seed=0)
        except NumericInstability:
            continue
        ripple = plateau_ripple(log, profile, settle_ms)
        if not math.isfinite(ripple):
            continue
        scored.append((ripple, profile.duration, index))
    if not scored:
        raise NoFeasibleCandidate("simulation failed for every candidate")
    ripple, _, index = min(scored)
    return candidate_limits[index], ripple
