"""Second-order impedance estimation from sensor logs.

Two estimators are provided:

* :func:`fit_second_order` -- output-error fit of ``1 / (M s^2 + B s + K)``
  with the measured force (or torque) as input and the measured
  displacement (or angle) as output, solved with a damped Gauss-Newton
  (Levenberg-Marquardt) iteration on log-parameters.
* :func:`plateau_stiffness` -- stiffness from the mean force and
  displacement change on the constant-position plateau of a
  ramp-and-hold perturbation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import interpolate, signal

from .errors import (InsufficientExcitation, InvalidArgument, InvalidWindow,
                     OptimizerDivergence, ResolutionLimited, UndefinedReference)

JOINT = "joint"
CABLE = "cable"
BASELINE_MS = 100.0


@dataclass(frozen=True)
class ImpedanceEstimate:
    inertia_or_mass: float
    viscosity: float
    stiffness: float
    nrmse_percent: float
    domain: str = CABLE
    converged: bool = True
    iterations: int = 0
    trials: Optional[tuple] = None  # per-trial estimates when fitted trial by trial

    def __post_init__(self):
        if self.nrmse_percent > 100 + 1e-9:
            raise InvalidArgument("nrmse cannot exceed 100 %")

    @property
    def params(self) -> tuple[float, float, float]:
        return self.inertia_or_mass, self.viscosity, self.stiffness

    def to_record(self) -> str:
        ps = poles(self)
        f = list(ps.pole_frequencies) + [float("nan")] * (2 - len(ps.pole_frequencies))
        items = [("inertia", self.inertia_or_mass), ("viscosity", self.viscosity),
                 ("stiffness", self.stiffness), ("nrmse", self.nrmse_percent),
                 ("pole1_hz", f[0]), ("pole2_hz", f[1])]
        lines = [f"{k}={v:.9g}" for k, v in items]
        lines += [f"domain={self.domain}", f"converged={str(self.converged).lower()}"]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_record(cls, text: str) -> "ImpedanceEstimate":
        rec = {}
        for line in text.splitlines():
            if "=" in line:
                key, value = line.split("=", 1)
                rec[key.strip()] = value.strip()
        return cls(float(rec["inertia"]), float(rec["viscosity"]), float(rec["stiffness"]),
                   float(rec["nrmse"]), rec.get("domain", CABLE),
                   rec.get("converged", "true") == "true")


@dataclass(frozen=True)
class PoleSet:
    pole_frequencies: tuple  # Hz, ascending
    damping_classification: str  # overdamped | underdamped | critical
    damping_ratio: float


def nrmse(measured, modeled) -> float:
    """Fit quality in percent: ``100 (1 - |y - yhat| / |y - mean(y)|)``."""
    y = np.asarray(measured, float)
    yhat = np.asarray(modeled, float)
    if y.shape != yhat.shape or y.ndim != 1 or len(y) < 2:
        raise InvalidArgument("nrmse needs two equal-length sequences of at least 2 samples")
    ref = np.linalg.norm(y - y.mean())
    if ref == 0:
        raise UndefinedReference("measured signal is constant")
    return float(100.0 * (1.0 - np.linalg.norm(y - yhat) / ref))


def poles(est: ImpedanceEstimate) -> PoleSet:
    """Roots of ``M s^2 + B s + K`` as frequencies in Hz.

    Real roots give two (possibly equal) corner frequencies; a complex pair
    gives its natural frequency twice.
    """
    m, b, k = est.params
    disc = b * b - 4 * m * k
    zeta = b / (2 * math.sqrt(m * k)) if m * k > 0 else math.inf
    if disc > 0:
        r = math.sqrt(disc)
        # numerically stable quadratic roots
        q = -0.5 * (b + r)
        s1, s2 = q / m, (k / q if q != 0 else 0.0)
        freqs = tuple(sorted(abs(s) / (2 * math.pi) for s in (s1, s2)))
        kind = "overdamped"
    elif disc == 0:
        f = (b / (2 * m)) / (2 * math.pi)
        freqs, kind = (f, f), "critical"
    else:
        f = math.sqrt(k / m) / (2 * math.pi)
        freqs, kind = (f, f), "underdamped"
    return PoleSet(freqs, kind, zeta)


def _baseline_slice(log) -> slice:
    onset = log.onset()
    n = int(round(BASELINE_MS * 1e-3 / log.dt))
    if onset == 0:
        return slice(0, 1)
    return slice(max(onset - n, 0), onset)


def fit_signals(log, domain: str, lever: Optional[float] = None):
    """Baseline-removed ``(input, output)`` pair of a log.

    cable: force difference (N) -> displacement (m);
    joint: torque ``(F1 - F2) L`` (N m) -> hip angle ``x / L`` (rad).
    """
    base = _baseline_slice(log)
    force = log.F1 - log.F2
    dforce = force - force[base].mean()
    dx = (log.x_meas - log.x_meas[base].mean()) * 1e-3
    if domain == CABLE:
        return dforce, dx
    if domain == JOINT:
        L = lever if lever is not None else _lever_of(log)
        return dforce * L, dx / L
    raise InvalidArgument(f"unknown domain {domain!r}")


def _lever_of(log) -> float:
    if log.ground_truth is None:
        raise InvalidArgument("joint-domain fit needs a lever arm")
    return log.ground_truth.lever


SUBSTEPS = 4


def upsample(u, factor=SUBSTEPS) -> np.ndarray:
    """Cubic-spline interpolation of ``u`` onto a grid ``factor`` times finer."""
    if factor == 1 or len(u) < 4:
        return np.asarray(u, float)
    t = np.arange(len(u))
    fine = np.arange((len(u) - 1) * factor + 1) / factor
    return interpolate.make_interp_spline(t, u, k=3)(fine)


def simulate_response(params, u, dt, substeps=SUBSTEPS) -> np.ndarray:
    """Response of ``1 / (M s^2 + B s + K)`` to input ``u`` from rest.

    The input is spline-interpolated onto ``substeps`` points per sample and
    passed through a first-order-hold discretisation.  A plain first-order
    hold biases the mass of fast (tens of Hz) plants by about 0.2%.
    """
    return _filter(params, upsample(u, substeps), dt / substeps)[::substeps]


def _filter(params, u_fine, dt_fine):
    m, b, k = params
    num, den, _ = signal.cont2discrete(([1.0], [m, b, k]), dt_fine, method="foh")
    return signal.lfilter(np.ravel(num), den, u_fine)


class _Problem:
    def __init__(self, pairs, dt):
        self.pairs = pairs
        self.dt = dt
        self.y = np.concatenate([y for _, y in pairs])
        self._fine = [upsample(u) for u, _ in pairs]

    def model(self, params):
        h = self.dt / SUBSTEPS
        return np.concatenate([_filter(params, u, h)[::SUBSTEPS] for u in self._fine])

    def residual(self, logp):
        if not np.all(np.abs(logp) < 60):
            return np.full_like(self.y, np.inf)
        with np.errstate(all="ignore"), warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                return self.model(np.exp(logp)) - self.y
            except (np.linalg.LinAlgError, ValueError):
                return np.full_like(self.y, np.inf)

    def jacobian(self, logp, h=1e-6):
        cols = []
        for i in range(len(logp)):
            step = np.zeros_like(logp)
            step[i] = h
            cols.append((self.residual(logp + step) - self.residual(logp - step)) / (2 * h))
        return np.column_stack(cols)


def _levenberg_marquardt(problem, logp, max_iter=200, tol=1e-9):
    r = problem.residual(logp)
    cost = float(r @ r)
    if not math.isfinite(cost):
        raise OptimizerDivergence("residual is not finite at the initial guess")
    lam = 1e-3
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        J = problem.jacobian(logp)
        if not np.all(np.isfinite(J)):
            break
        g = J.T @ r
        H = J.T @ J
        improved = False
        while lam < 1e12:
            step = np.linalg.solve(H + lam * np.diag(np.diag(H) + 1e-12), -g)
            trial = logp + step
            r_new = problem.residual(trial)
            new_cost = float(r_new @ r_new)
            if math.isfinite(new_cost) and new_cost <= cost:
                improved = True
                break
            lam *= 10
        if not improved:
            converged = True  # no descent direction left: at a minimum
            break
        rel = (cost - new_cost) / max(cost, 1e-300)
        logp, r, cost = trial, r_new, new_cost
        lam = max(lam / 10, 1e-12)
        if rel < tol:
            converged = True
            break
    if not math.isfinite(cost):
        raise OptimizerDivergence("residual became non-finite")
    return logp, cost, converged, it


def _check_logs(logs):
    if not logs:
        raise InvalidArgument("need at least one log")
    dts = {round(log.dt, 12) for log in logs}
    if len(dts) != 1:
        raise InvalidArgument("logs must share dt")
    if all(np.all(log.x_cmd == log.x_cmd[0]) for log in logs):
        raise InsufficientExcitation("commanded displacement is constant in every log")


def _svf_estimate(problem, corner_hz=5.0):
    """Equation-error estimate on state-variable-filtered signals.

    Filtering by ``w^2 / (s + w)^2`` lets the output derivatives be formed
    without differencing the quantised displacement.
    """
    w = 2 * math.pi * corner_hz
    den = [1.0, 2 * w, w * w]
    filters = [([w * w], den), ([w * w, 0.0], den), ([w * w, 0.0, 0.0], den)]
    discrete = [signal.cont2discrete(f, problem.dt, method="foh")[:2] for f in filters]
    rows, rhs = [], []
    for u, y in problem.pairs:
        cols = [signal.lfilter(np.ravel(n), d, y) for n, d in discrete]
        rows.append(np.column_stack(cols[::-1]))
        rhs.append(signal.lfilter(np.ravel(discrete[0][0]), discrete[0][1], u))
    theta, *_ = np.linalg.lstsq(np.vstack(rows), np.concatenate(rhs), rcond=None)
    return theta  # (M, B, K)


def _initial_guess(problem, mass):
    starts = []
    try:
        m, b, k = _svf_estimate(problem)
        if k > 0:
            b = b if b > 0 else 2 * 0.1 * math.sqrt(k * mass)
            starts.append((mass, b, k))
            if m > 0:
                starts.append((m, b, k))
    except (np.linalg.LinAlgError, ValueError):
        pass
    u = np.concatenate([u for u, _ in problem.pairs])
    y = problem.y
    k0 = abs(float(u @ y) / float(y @ y)) or 1.0
    for zeta in (0.02, 0.1, 0.5, 2.0, 8.0):
        for kscale in (0.1, 1.0, 10.0):
            k = k0 * kscale
            starts.append((mass, 2 * zeta * math.sqrt(k * mass), k))
    best = None
    for start in starts:
        p = np.log(start)
        r = problem.residual(p)
        c = float(r @ r)
        if math.isfinite(c) and (best is None or c < best[0]):
            best = (c, p)
    if best is None:
        raise OptimizerDivergence("no finite starting point")
    return best[1]


def fit_second_order(logs: Sequence, initial_mass: float, domain: str = CABLE,
                     lever: Optional[float] = None, mode: str = "joint",
                     max_iter: int = 200, tol: float = 1e-9) -> ImpedanceEstimate:
    """Output-error fit of a second-order admittance to one or more logs.

    ``mode="joint"`` fits one parameter set to all logs at once;
    ``mode="per_trial"`` fits each log separately and reports the mean
    parameters (NRMSE is the mean of the trial values).
    """
    logs = list(logs)
    _check_logs(logs)
    if not initial_mass > 0:
        raise InvalidArgument("initial_mass must be > 0")
    if mode == "per_trial":
        fits = []
        for log in logs:
            if np.all(log.x_cmd == log.x_cmd[0]):
                raise InsufficientExcitation("a trial has no commanded motion")
            fits.append(fit_second_order([log], initial_mass, domain, lever, "joint", max_iter, tol))
        mean = np.mean([f.params for f in fits], axis=0)
        return ImpedanceEstimate(*map(float, mean), float(np.mean([f.nrmse_percent for f in fits])),
                                 domain, all(f.converged for f in fits),
                                 max(f.iterations for f in fits), tuple(fits))
    if mode != "joint":
        raise InvalidArgument(f"unknown mode {mode!r}")

    problem = _Problem([fit_signals(log, domain, lever) for log in logs], logs[0].dt)
    if float(problem.y @ problem.y) == 0:
        raise InsufficientExcitation("measured displacement never changes")
    logp = _initial_guess(problem, initial_mass)
    logp, _, converged, it = _levenberg_marquardt(problem, logp, max_iter, tol)
    params = np.exp(logp)
    fit = nrmse(problem.y, problem.model(params))
    return ImpedanceEstimate(*map(float, params), fit, domain, converged, it)


def plateau_window(log, settle_ms: float = 0.0) -> tuple[float, float]:
    """``(t_start_ms, t_end_ms)`` of the plateau recorded in the log marks."""
    if "plateau_start" not in log.marks:
        raise InvalidWindow("log carries no plateau marks")
    ms = log.dt * 1e3
    return (log.marks["plateau_start"] * ms + settle_ms, log.marks["plateau_end"] * ms)


def plateau_stiffness(log, plateau_window: tuple[float, float], lever: Optional[float] = None) -> float:
    """Stiffness from mean force and displacement change on a plateau.

    With ``lever=None`` the result is ``mean(dF) / mean(dx)`` in N/m;
    otherwise the joint stiffness ``mean(dtau) / mean(dtheta)`` in N m/rad.
    Changes are taken against the mean of the 100 ms before motion onset.
    """
    t0, t1 = plateau_window
    i0 = int(round(t0 * 1e-3 / log.dt))
    i1 = int(round(t1 * 1e-3 / log.dt))
    if not (0 <= i0 < i1 <= len(log)):
        raise InvalidWindow(f"window {plateau_window} ms outside the log")
    cmd = log.x_cmd[i0:i1]
    if np.any(np.abs(cmd - cmd[0]) > 1e-9):
        raise InvalidWindow("window overlaps commanded motion")
    base = _baseline_slice(log)
    if base.stop > i0:
        raise InvalidWindow("window overlaps the pre-onset baseline")
    force = log.F1 - log.F2
    dF = force[i0:i1].mean() - force[base].mean()
    dx_mm = log.x_meas[i0:i1].mean() - log.x_meas[base].mean()
    if abs(dx_mm) < log.quantum_mm:
        raise ResolutionLimited(f"plateau displacement {dx_mm:.3g} mm is below one encoder quantum")
    dx = dx_mm * 1e-3
    if lever is None:
        return float(dF / dx)
    return float(dF * lever / (dx / lever))
