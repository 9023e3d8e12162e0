"""Software safety supervisor: limit monitor and latching interlock."""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.ndimage import median_filter

from .errors import InvalidArgument, RejectedReset

ARMED = "armed"
RUNNING = "running"
FAULT = "fault"
STATES = (ARMED, RUNNING, FAULT)

START = "start"
VIOLATION = "violation"
ESTOP = "estop"
RESET = "reset"

# Reported when several limits break on the same sample.
CAUSE_PRIORITY = ("laser", "position", "speed", "acceleration", "torque")
CAUSES = CAUSE_PRIORITY + ("estop",)

MEDIAN_WINDOW = 5
# Central differences span +/- this many samples, so one encoder quantum
# (0.35 mm) produces a speed step of 35 mm/s rather than 175 mm/s.
DIFF_HALF_WIDTH = 5


@dataclass(frozen=True)
class SafetyLimits:
    pos_window: tuple
    v_limit: float
    a_limit: float
    torque_limit: float
    laser_window: tuple

    def __post_init__(self):
        for name in ("pos_window", "laser_window"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise InvalidArgument(f"{name} needs min < max, got ({lo}, {hi})")
        for name in ("v_limit", "a_limit", "torque_limit"):
            if not getattr(self, name) > 0:
                raise InvalidArgument(f"{name} must be positive")

    @classmethod
    def for_leg(cls, leg_length=0.9, range_of_motion_deg=15.0, laser_margin=1.2,
                v_limit=1000.0, a_limit=5.0e4, torque_limit=150.0):
        """Limits seeded from an angular range of motion about the start posture."""
        reach = 1000.0 * leg_length * math.radians(range_of_motion_deg)
        return cls((-reach, reach), v_limit, a_limit, torque_limit,
                   (-laser_margin * reach, laser_margin * reach))

    def widened(self, factor):
        """Every limit relaxed by ``factor`` >= 1 (windows scaled about their centre)."""
        def scale(window):
            mid, half = 0.5 * (window[0] + window[1]), 0.5 * (window[1] - window[0])
            return (mid - factor * half, mid + factor * half)
        return SafetyLimits(scale(self.pos_window), self.v_limit * factor, self.a_limit * factor,
                            self.torque_limit * factor, scale(self.laser_window))


@dataclass(frozen=True)
class FaultReport:
    tripped: bool
    cause: Optional[str] = None
    sample_index: Optional[int] = None
    value: Optional[float] = None
    dt: float = 0.001

    def __post_init__(self):
        if self.tripped and (self.cause is None or self.sample_index is None):
            raise InvalidArgument("a tripped report needs a cause and a sample index")

    def render(self):
        if not self.tripped:
            return "OK"
        t_ms = self.sample_index * self.dt * 1000.0
        return f"FAULT cause={self.cause} t={t_ms:g} value={self.value:.6g}"

    def __str__(self):
        return self.render()


def central_difference(x, dt, half_width=DIFF_HALF_WIDTH):
    """(x[i+h] - x[i-h]) / (2 h dt) with edge samples held constant."""
    padded = np.pad(x, half_width, mode="edge")
    return (padded[2 * half_width:] - padded[:-2 * half_width]) / (2 * half_width * dt)


def derived_signals(log, lever):
    """Per-sample monitored quantities as a dict keyed by cause.

    Speed and acceleration come from the measured displacement after a
    5-sample median filter, which removes single-quantum encoder flicker
    before differentiating.
    """
    x = np.asarray(log.x_meas, dtype=float)
    smooth = median_filter(x, size=MEDIAN_WINDOW, mode="nearest")
    v = central_difference(smooth, log.dt)
    a = central_difference(v, log.dt)
    torque = (np.asarray(log.F1) - np.asarray(log.F2)) * lever
    return {"laser": x, "position": x, "speed": v, "acceleration": a, "torque": torque}


def violations(signals, limits):
    """Boolean mask per cause; at-limit values are safe."""
    def outside(x, window):
        return (x < window[0]) | (x > window[1])
    return {
        "laser": outside(signals["laser"], limits.laser_window),
        "position": outside(signals["position"], limits.pos_window),
        "speed": np.abs(signals["speed"]) > limits.v_limit,
        "acceleration": np.abs(signals["acceleration"]) > limits.a_limit,
        "torque": np.abs(signals["torque"]) > limits.torque_limit,
    }


def monitor(log, limits, lever):
    """Scan the log in time order and report the first limit violation."""
    signals = derived_signals(log, lever)
    masks = violations(signals, limits)
    first = None
    for cause in CAUSE_PRIORITY:
        hits = np.flatnonzero(masks[cause])
        if hits.size and (first is None or hits[0] < first[1]):
            first = (cause, int(hits[0]))
    if first is None:
        return FaultReport(False, dt=log.dt)
    cause, index = first
    return FaultReport(True, cause, index, float(signals[cause][index]), dt=log.dt)


@dataclass(frozen=True)
class Event:
    kind: str
    cause: Optional[str] = None

    def __post_init__(self):
        if self.kind not in (START, VIOLATION, ESTOP, RESET):
            raise InvalidArgument(f"unknown event {self.kind!r}")
        if self.kind == VIOLATION and self.cause not in CAUSE_PRIORITY:
            raise InvalidArgument(f"violation needs a monitored cause, got {self.cause!r}")


def interlock_step(state, event, violation_active=False):
    """Next interlock state.

    A fault latches until a reset, and a reset is refused while the
    offending condition is still present.  A violation while merely armed
    also latches, since the relays should never enable power into an unsafe
    posture.  Every transition not listed keeps the state.
    """
    if state not in STATES:
        raise InvalidArgument(f"unknown state {state!r}")
    if isinstance(event, str):
        event = Event(event)
    if event.kind == ESTOP:
        return FAULT
    if state == FAULT:
        if event.kind == RESET:
            if violation_active:
                raise RejectedReset("reset refused while a limit is still violated")
            return ARMED
        return FAULT
    if event.kind == VIOLATION:
        return FAULT
    if state == ARMED and event.kind == START:
        return RUNNING
    return state


class Interlock:
    """Single-owner interlock that remembers why it latched."""

    def __init__(self):
        self.state = ARMED
        self.cause = None

    def handle(self, event, violation_active=False):
        if isinstance(event, str):
            event = Event(event)
        new = interlock_step(self.state, event, violation_active)
        if new == FAULT and self.state != FAULT:
            self.cause = "estop" if event.kind == ESTOP else event.cause
        elif new == ARMED:
            self.cause = None
        self.state = new
        return new

    def supervise(self, log, limits, lever):
        """Start a session over ``log`` and latch on its first violation."""
        self.handle(START)
        report = monitor(log, limits, lever)
        if report.tripped:
            self.handle(Event(VIOLATION, report.cause))
        return report
