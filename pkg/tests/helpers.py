"""Reference oracles and random generators shared by the test modules."""

import math

import numpy as np

from nedsim.plant import SensorLog
from nedsim.safety import SafetyLimits, derived_signals, monitor, violations


def brute_force_duration(distance, limits, coarse=60, rounds=6):
    """Shortest symmetric seven-segment move found by searching (peak v, peak a).

    A move reaching peak acceleration ``ap`` and peak speed ``vp`` lasts
    ``D/vp + vp/ap + ap/j``.  It is admissible when the acceleration phase
    fits (``vp >= ap^2/j``) and the two ramps do not overshoot the distance.
    The grid is zoomed around the best point a few times.
    """
    D, j = abs(distance), limits.j_max
    v_lo, v_hi = 1e-9, limits.v_max
    a_lo, a_hi = 1e-9, limits.a_max
    best = (math.inf, None, None)
    for _ in range(rounds):
        vp, ap = np.meshgrid(np.linspace(v_lo, v_hi, coarse), np.linspace(a_lo, a_hi, coarse))
        ok = (vp >= ap ** 2 / j * (1 - 1e-12)) & (vp * (vp / ap + ap / j) <= D * (1 + 1e-12))
        T = np.where(ok, D / vp + vp / ap + ap / j, np.inf)
        k = np.unravel_index(np.argmin(T), T.shape)
        if T[k] < best[0]:
            best = (float(T[k]), vp[k], ap[k])
        if best[1] is None:
            return math.inf
        dv, da = (v_hi - v_lo) / coarse * 2, (a_hi - a_lo) / coarse * 2
        v_lo, v_hi = max(1e-9, best[1] - dv), min(limits.v_max, best[1] + dv)
        a_lo, a_hi = max(1e-9, best[2] - da), min(limits.a_max, best[2] + da)
    return best[0]


def make_log(x, f1=None, f2=None):
    x = np.asarray(x, float)
    n = len(x)
    f1 = np.full(n, 200.0) if f1 is None else np.asarray(f1, float)
    f2 = np.full(n, 200.0) if f2 is None else np.asarray(f2, float)
    return SensorLog(0.001, x.copy(), x.copy(), f1, f2)


def random_log(rng, n):
    kind = rng.integers(3)
    steps = rng.normal(0, rng.choice([0.05, 0.5, 2.0]), n)
    x = np.cumsum(steps)
    if kind == 1:
        x[rng.integers(n):] += rng.uniform(-200, 200)
    x = 0.35 * np.round(x / 0.35)
    f1 = 200 + rng.normal(0, rng.choice([1.0, 20.0]), n)
    f2 = 200 + rng.normal(0, 1.0, n)
    return make_log(x, f1, f2)


def random_limits(rng):
    p = rng.uniform(20, 200)
    return SafetyLimits((-p, p), rng.uniform(50, 2000), rng.uniform(1e3, 1e5), rng.uniform(5, 60),
                        (-p * rng.uniform(1, 1.5), p * rng.uniform(1, 1.5)))


def monitor_property_failures(rng, lever=0.9):
    """Check one random log: minimal trip index and widening monotonicity.

    Returns the number of broken properties (0, 1 or 2).
    """
    log, limits = random_log(rng, int(rng.integers(20, 400))), random_limits(rng)
    report = monitor(log, limits, lever)
    masks = violations(derived_signals(log, lever), limits)
    hits = np.flatnonzero(np.any(np.vstack(list(masks.values())), axis=0))
    if report.tripped:
        minimal = (len(hits) > 0 and report.sample_index == hits[0]
                   and bool(masks[report.cause][report.sample_index]))
    else:
        minimal = len(hits) == 0
    wide = monitor(log, limits.widened(rng.uniform(1, 3)), lever)
    monotone = not wide.tripped or (report.tripped and report.sample_index <= wide.sample_index)
    return int(not minimal) + int(not monotone)
