"""Forward simulation of the cable rig with a leg or spring load.

Coordinates: the motor end of the cable follows the commanded profile
exactly.  With a load attached, a pull-only pretensioned transmission
(stiffness ``K_x``, viscosity ``B_x``) couples the motor to a carriage of
mass ``M_x``; the load cells sit between the carriage and the load, so
``F1 - F2`` is the force delivered to the load.  Without a load the cable
stage itself is the plant and the cells report the drive force of the
lumped second-order cable model ``M_x a + B_x v + K_x x``.

Units: mm for logged displacements, m inside the dynamics, N, s.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np
from scipy.optimize import brentq

from .errors import InvalidArgument, NumericInstability
from .trajectory import TrajectoryProfile

G = 9.81
DIVERGENCE = 1e9


@dataclass(frozen=True)
class CableStage:
    M_x: float = 0.5  # kg
    B_x: float = 60.0  # N s/m
    K_x: float = 1e5  # N/m
    pretension: float = 200.0  # N

    def __post_init__(self):
        if not (self.M_x > 0 and self.B_x >= 0 and self.K_x > 0 and self.pretension >= 0):
            raise InvalidArgument(f"invalid cable stage {self}")

    @classmethod
    def characterised(cls) -> "CableStage":
        """Cable second-order model whose poles sit at 1.6 Hz and 17.2 Hz."""
        return cls(M_x=0.5, B_x=59.04, K_x=543.1, pretension=200.0)


@dataclass(frozen=True)
class DummyLeg:
    I: float = 1.84  # kg m^2 about the hip
    B: float = 0.5  # N m s/rad
    K: float = 0.0  # N m/rad
    mass: float = 18.0  # kg
    com_distance: float = 0.3  # m
    L: float = 0.7  # m
    base_angle: float = 35.0  # deg
    gravity_on: bool = True

    def __post_init__(self):
        if not (self.I > 0 and self.L > 0 and 0 <= self.base_angle <= 90):
            raise InvalidArgument(f"invalid dummy leg {self}")
        if self.B < 0 or self.K < 0 or self.mass < 0 or self.com_distance < 0:
            raise InvalidArgument("leg B, K, mass and com_distance must be >= 0")

    def gravity_torque(self, theta: float) -> float:
        """Gravity torque (N m) resisting flexion at absolute hip angle ``theta`` (rad)."""
        if not self.gravity_on:
            return 0.0
        return self.mass * G * self.com_distance * math.sin(theta)

    def gravity_stiffness(self) -> float:
        """Linearised gravity stiffness about the base angle, N m/rad."""
        if not self.gravity_on:
            return 0.0
        return self.mass * G * self.com_distance * math.cos(math.radians(self.base_angle))


@dataclass(frozen=True)
class SpringPair:
    K_s: float = 1000.0  # N/m, both springs together
    rest_position: float = 0.0  # mm

    def __post_init__(self):
        if not self.K_s > 0:
            raise InvalidArgument("K_s must be > 0")


@dataclass(frozen=True)
class SensorModel:
    """Load-cell, encoder, drift and sag imperfections.

    ``sag_spans`` are the cable spans (m) from the load cells to the front
    and rear pulleys; they set the lever of the lumped sag mass.
    ``random_encoder_phase`` places the motion at a random offset within
    one encoder quantum for each seed.
    """

    force_noise_sd: float = 0.29
    force_noise_clip: float = 1.0
    encoder_quantum_deg: float = 0.019
    quantum_cable_mm: float = 0.35
    drift_rate: float = 1 / 33.6  # N/s while moving
    sag_mass: float = 0.5
    sag_spans: tuple = (0.3, 1.2)
    random_encoder_phase: bool = True

    def __post_init__(self):
        if self.force_noise_sd < 0 or self.force_noise_clip < self.force_noise_sd:
            raise InvalidArgument("need force_noise_sd >= 0 and clip >= sd")
        if not self.quantum_cable_mm > 0:
            raise InvalidArgument("quantum_cable_mm must be > 0")
        if self.sag_mass < 0 or self.drift_rate < 0:
            raise InvalidArgument("sag_mass and drift_rate must be >= 0")

    @classmethod
    def noiseless(cls) -> "SensorModel":
        """Ideal sensors: no noise, drift or sag, 1 nm encoder steps at fixed phase."""
        return cls(0.0, 0.0, 0.019, 1e-6, 0.0, 0.0, (0.3, 1.2), False)


Load = Union[DummyLeg, SpringPair, None]


@dataclass(frozen=True)
class PlantModel:
    cable: CableStage = CableStage()
    load: Load = None
    sensors: SensorModel = SensorModel()
    leg_length_for_lever: Optional[float] = None  # m; defaults to the leg length

    def __post_init__(self):
        if self.load is not None and not isinstance(self.load, (DummyLeg, SpringPair)):
            raise InvalidArgument(f"unsupported load {self.load!r}")
        if self.leg_length_for_lever is None:
            lever = self.load.L if isinstance(self.load, DummyLeg) else 1.0
            object.__setattr__(self, "leg_length_for_lever", lever)
        if not self.leg_length_for_lever > 0:
            raise InvalidArgument("leg_length_for_lever must be > 0")

    def noiseless(self) -> "PlantModel":
        return replace(self, sensors=SensorModel.noiseless())

    @property
    def lever(self) -> float:
        return self.leg_length_for_lever


@dataclass(frozen=True, eq=False)
class SensorLog:
    """Measured time series of one trial.

    ``x_load`` (mm) and ``f_transmission`` (N) are ground-truth internals of
    the simulation, kept for verification and not part of the CSV record.
    """

    dt: float
    x_cmd: np.ndarray
    x_meas: np.ndarray
    F1: np.ndarray
    F2: np.ndarray
    ground_truth: Optional[PlantModel] = None
    quantum_mm: float = 0.35
    slack: Optional[np.ndarray] = None
    x_load: Optional[np.ndarray] = None
    f_transmission: Optional[np.ndarray] = None
    marks: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.x_cmd)
        if not (len(self.x_meas) == len(self.F1) == len(self.F2) == n):
            raise InvalidArgument("sensor channels must have equal lengths")

    def __len__(self):
        return len(self.x_cmd)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self)) * self.dt

    @property
    def force_difference(self) -> np.ndarray:
        return self.F1 - self.F2

    def onset(self) -> int:
        """Index of the first sample where the command departs from its start."""
        moving = np.flatnonzero(self.x_cmd != self.x_cmd[0])
        if len(moving) == 0:
            return len(self)
        return max(int(moving[0]) - 1, 0)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t_s", "x_cmd_mm", "x_meas_mm", "f1_n", "f2_n"])
            for row in zip(self.times, self.x_cmd, self.x_meas, self.F1, self.F2):
                writer.writerow([f"{v:.9g}" for v in row])

    @classmethod
    def from_csv(cls, path, ground_truth: Optional[PlantModel] = None) -> "SensorLog":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        dt = float(np.round(data[1, 0] - data[0, 0], 9)) if len(data) > 1 else 0.001
        quantum = ground_truth.sensors.quantum_cable_mm if ground_truth else 0.35
        return cls(dt, data[:, 1].copy(), data[:, 2].copy(), data[:, 3].copy(), data[:, 4].copy(),
                   ground_truth=ground_truth, quantum_mm=quantum)


def sag_tension_error(pretension: float, sag_mass: float, spans=(0.3, 1.2)) -> float:
    """Relative error of the load-cell reading caused by cable sag.

    The sagging mass is lumped at the load cells, between spans ``a`` and
    ``b`` to the pulleys.  Vertical equilibrium gives the deflection and the
    misalignment ``alpha`` of the steeper span; the cell reads the axial
    component plus the transverse component, ``T (cos alpha + sin alpha)``.
    """
    if not pretension > 0:
        raise InvalidArgument("pretension must be > 0")
    return _sag_factor(np.asarray(float(pretension)), sag_mass, spans).item() - 1.0


def _sag_factor(tension: np.ndarray, sag_mass: float, spans) -> np.ndarray:
    a, b = spans
    if sag_mass == 0:
        return np.ones_like(tension, dtype=float)
    lever = max(a, b) / (a + b)
    alpha = np.arctan2(sag_mass * G * lever, tension)
    return np.cos(alpha) + np.sin(alpha)


def apply_drift(log: SensorLog, drift_rate: float) -> SensorLog:
    """Lower both force channels by ``drift_rate * t``."""
    if drift_rate == 0:
        return log
    drop = drift_rate * log.times
    return replace(log, F1=log.F1 - drop, F2=log.F2 - drop)


def _hermite_mid(x0, v0, x1, v1, dt):
    return 0.5 * (x0 + x1) + dt * (v0 - v1) / 8, 1.5 * (x1 - x0) / dt - 0.25 * (v0 + v1)


def _dynamics(plant: PlantModel, xm, vm, dt):
    """Integrate the loaded rig; returns carriage position, velocity, acceleration,
    transmission force, front/rear transmission tensions (all SI)."""
    cable, load = plant.cable, plant.load
    k, b, t0 = cable.K_x, cable.B_x, cable.pretension

    if isinstance(load, DummyLeg):
        mass = cable.M_x + load.I / load.L**2
        theta0 = math.radians(load.base_angle)
        L, Bl, Kl = load.L, load.B, load.K

        def load_force(x, v):
            th = x / L
            return (Bl * v / L + Kl * th + load.gravity_torque(theta0 + th)) / L
    else:
        mass = cable.M_x
        ks, rest = load.K_s, load.rest_position * 1e-3

        def load_force(x, v):
            return ks * (x - rest)

    def tensions(x, v, xmi, vmi):
        pull = k * (xmi - x) + b * (vmi - v)
        front = t0 + 0.5 * pull
        rear = t0 - 0.5 * pull
        return (front if front > 0 else 0.0), (rear if rear > 0 else 0.0)

    def accel(x, v, xmi, vmi):
        front, rear = tensions(x, v, xmi, vmi)
        return (front - rear - load_force(x, v)) / mass

    # static equilibrium at the starting motor position
    x_start = xm[0]

    def residual(x):
        front, rear = tensions(x, 0.0, x_start, 0.0)
        return front - rear - load_force(x, 0.0)

    try:
        x = brentq(residual, x_start - 1.0, x_start + 1.0, xtol=1e-15, rtol=1e-15)
    except ValueError as exc:
        raise NumericInstability("no static equilibrium at the start position", 0) from exc
    v = 0.0

    n = len(xm)
    xs = np.empty(n)
    vs = np.empty(n)
    xs[0], vs[0] = x, v
    h = dt
    for i in range(n - 1):
        x0m, v0m, x1m, v1m = xm[i], vm[i], xm[i + 1], vm[i + 1]
        xhm, vhm = _hermite_mid(x0m, v0m, x1m, v1m, h)
        k1x, k1v = v, accel(x, v, x0m, v0m)
        k2x, k2v = v + 0.5 * h * k1v, accel(x + 0.5 * h * k1x, v + 0.5 * h * k1v, xhm, vhm)
        k3x, k3v = v + 0.5 * h * k2v, accel(x + 0.5 * h * k2x, v + 0.5 * h * k2v, xhm, vhm)
        k4x, k4v = v + h * k3v, accel(x + h * k3x, v + h * k3v, x1m, v1m)
        x = x + h * (k1x + 2 * k2x + 2 * k3x + k4x) / 6
        v = v + h * (k1v + 2 * k2v + 2 * k3v + k4v) / 6
        if not (abs(x) < DIVERGENCE and abs(v) < DIVERGENCE):
            raise NumericInstability(f"simulation diverged at sample {i + 1}", i + 1)
        xs[i + 1], vs[i + 1] = x, v

    pull = k * (xm - xs) + b * (vm - vs)
    front = np.maximum(t0 + 0.5 * pull, 0.0)
    rear = np.maximum(t0 - 0.5 * pull, 0.0)
    f_t = front - rear
    acc = np.array([accel(xs[i], vs[i], xm[i], vm[i]) for i in range(n)])
    return xs, vs, acc, f_t, front, rear, mass


def simulate_truth(plant: PlantModel, profile: TrajectoryProfile):
    """Noise-free physical quantities: (carriage x [m], cell force [N],
    front cell tension [N], rear cell tension [N], transmission force [N], slack flags)."""
    xm = np.asarray(profile.positions, float) * 1e-3
    vm = np.asarray(profile.velocities, float) * 1e-3
    am = np.asarray(profile.accelerations, float) * 1e-3
    t0 = plant.cable.pretension
    if plant.load is None:
        c = plant.cable
        cell = c.M_x * am + c.B_x * vm + c.K_x * xm
        front = np.maximum(t0 + 0.5 * cell, 0.0)
        rear = np.maximum(t0 - 0.5 * cell, 0.0)
        slack = (front == 0) | (rear == 0)
        return xm.copy(), front - rear, front, rear, cell, slack
    xs, vs, acc, f_t, front, rear, _ = _dynamics(plant, xm, vm, profile.dt)
    slack = (front == 0) | (rear == 0)
    # the carriage mass sits on the transmission side of the cells
    inertial = plant.cable.M_x * acc
    cell_front = np.maximum(front - 0.5 * inertial, 0.0)
    cell_rear = np.maximum(rear + 0.5 * inertial, 0.0)
    return xs, cell_front - cell_rear, cell_front, cell_rear, f_t, slack


def simulate(plant: PlantModel, profile: TrajectoryProfile, seed: int = 0) -> SensorLog:
    """Simulate one trial and pass it through the sensor models.

    Deterministic for a fixed ``seed``: the generator draws the encoder
    phase first, then the F1 and F2 noise sequences.
    """
    if not isinstance(profile, TrajectoryProfile):
        raise InvalidArgument("profile must be a TrajectoryProfile")
    xs, _, front, rear, f_t, slack = simulate_truth(plant, profile)
    return measure(plant, profile, xs, front, rear, f_t, slack, seed)


def measure(plant, profile, xs, front, rear, f_t, slack, seed) -> SensorLog:
    """Apply sag, drift, noise and quantisation to simulated cell tensions."""
    sens = plant.sensors
    rng = np.random.default_rng(seed)
    q = sens.quantum_cable_mm
    phase = rng.uniform(0.0, q) if sens.random_encoder_phase else 0.0

    f1 = front * _sag_factor(front, sens.sag_mass, sens.sag_spans)
    f2 = rear * _sag_factor(rear, sens.sag_mass, sens.sag_spans)

    if sens.drift_rate:
        moving = np.concatenate([[False], np.diff(profile.positions) != 0])
        drop = sens.drift_rate * profile.dt * np.cumsum(moving)
        f1 = f1 - drop
        f2 = f2 - drop

    if sens.force_noise_sd:
        clip = sens.force_noise_clip
        f1 = f1 + np.clip(rng.normal(0.0, sens.force_noise_sd, len(f1)), -clip, clip)
        f2 = f2 + np.clip(rng.normal(0.0, sens.force_noise_sd, len(f2)), -clip, clip)
    f1 = np.maximum(f1, 0.0)
    f2 = np.maximum(f2, 0.0)

    x_cmd = np.asarray(profile.positions, float)
    x_meas = q * np.round((x_cmd + phase) / q)
    return SensorLog(profile.dt, x_cmd.copy(), x_meas, f1, f2, ground_truth=plant, quantum_mm=q,
                     slack=slack, x_load=xs * 1e3, f_transmission=f_t, marks=dict(profile.marks))
