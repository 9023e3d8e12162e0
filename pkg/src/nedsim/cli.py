"""Command-line front end: ``nedsim <plan|simulate|identify|experiment|analyze>``.

Exit codes: 0 on success, 1 for usage or invalid input, 2 for numeric
failures (divergent simulation or optimisation).
"""

import argparse
import os
import sys
from dataclasses import replace

from . import geometry
from .config import load_config
from .errors import (InsufficientExcitation, InvalidArgument, NedError, NumericInstability,
                     OptimizerDivergence)
from .experiment import TrialError, run_experiment
from .identify import ImpedanceEstimate, fit_second_order, plateau_stiffness, poles
from .plant import CableStage, PlantModel, SensorLog, sag_tension_error, simulate
from .safety import monitor
from .trajectory import (DynamicLimits, EXTENSION, FLEXION, PerturbationSpec, TrajectoryProfile,
                         default_limit_grid, optimize_perturbation, plan_fastest_move,
                         plan_ramp_hold, plan_saw, with_rest)

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
NUMERIC_ERRORS = (NumericInstability, OptimizerDivergence)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _pair(text, kind=float):
    parts = text.split(":")
    try:
        return tuple(kind(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected colon-separated numbers, got {text!r}")


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _out_path(args, name):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _limits(args):
    return DynamicLimits(args.vmax, args.amax, args.jmax)


# -- plan ---------------------------------------------------------------------

def cmd_plan(args, config):
    limits = _limits(args)
    if args.optimize:
        if not args.ramp_hold:
            raise UsageError("--optimize needs --ramp-hold")
        amp, plateau = _pair(args.ramp_hold)
        limits, ripple = optimize_perturbation(config.plant, amp, plateau, default_limit_grid(),
                                               args.direction)
        print(f"selected v_max={limits.v_max:g} a_max={limits.a_max:g} j_max={limits.j_max:g} "
              f"ripple={ripple:.4g} N")
    if args.move:
        x0, x1 = _pair(args.move)
        profile = plan_fastest_move(x0, x1, limits)
    elif args.ramp_hold:
        amp, plateau = _pair(args.ramp_hold)
        profile = plan_ramp_hold(PerturbationSpec(amp, plateau, args.direction, limits))
    elif args.saw:
        amp, speed, cycles = _pair(args.saw)
        profile = plan_saw(amp, speed, int(cycles), limits)
    else:
        raise UsageError("choose one of --move, --ramp-hold, --saw")
    path = _out_path(args, args.name)
    profile.to_csv(path)
    v, a, j = profile.peak()
    print(f"wrote {path}")
    print(f"duration={profile.duration:.4f} s samples={len(profile)} "
          f"peak_v={v:.6g} peak_a={a:.6g} peak_jerk={j:.6g}")
    return EXIT_OK


# -- simulate -----------------------------------------------------------------

def cmd_simulate(args, config):
    profile = TrajectoryProfile.from_csv(args.profile)
    if args.rest:
        profile = with_rest(profile, args.rest, args.rest)
    plant = config.plant
    if args.cable_only:
        plant = PlantModel(CableStage.characterised(), None, plant.sensors)
    if args.noiseless:
        plant = plant.noiseless()
    log = simulate(plant, profile, seed=args.seed)
    path = _out_path(args, args.name)
    log.to_csv(path)
    print(f"wrote {path} samples={len(log)}")
    if args.check_safety:
        print(monitor(log, config.safety, plant.lever).render())
    return EXIT_OK


# -- identify -----------------------------------------------------------------

def cmd_identify(args, config):
    logs = [SensorLog.from_csv(p, ground_truth=config.plant) for p in args.logs]
    lever = args.lever if args.lever is not None else config.plant.lever
    if args.plateau is not None:
        for log in logs:
            k = plateau_stiffness(log, args.plateau, lever if args.domain == "joint" else None)
            print(f"stiffness={k:.6g}")
        return EXIT_OK
    est = fit_second_order(logs, args.initial_mass, args.domain, lever, args.mode)
    text = est.to_record()
    print(text)
    if args.out:
        with open(_out_path(args, "estimate.txt"), "w") as fh:
            fh.write(text + "\n")
    return EXIT_OK


# -- experiment ---------------------------------------------------------------

def cmd_experiment(args, config):
    spec = config.experiment
    overrides = {k: getattr(args, k) for k in ("kind", "trials", "speeds", "angles", "amplitudes",
                                               "durations", "fit_mode")
                 if getattr(args, k) is not None}
    overrides["seed"] = args.seed
    spec = replace(spec, **overrides)
    spec.__post_init__()
    plant = config.plant
    if args.noiseless:
        plant = plant.noiseless()
    manifest = run_experiment(spec, plant, args.out)
    print(f"wrote {os.path.join(args.out, 'aggregate.csv')} ({len(manifest.aggregate)} rows, "
          f"{len(manifest.trials)} trials)")
    return EXIT_OK


# -- analyze ------------------------------------------------------------------

def cmd_analyze(args, config):
    kind = args.kind
    if kind == "sensitivity":
        side = geometry.max_sideway_displacement(args.budget)
        rot = geometry.max_rotation_displacement(args.budget)
        path = _out_path(args, "sensitivity.csv")
        with open(path, "w") as fh:
            fh.write(geometry.sensitivity_csv(geometry.sensitivity_rows(args.budget)))
        print(f"max_sideway_cm={side.max_displacement:.1f}")
        print(f"max_rotation_cm={rot.max_displacement:.1f}")
        force = geometry.sideway_restoring_force(0.14, args.pretension)
        print(f"restoring_force_14cm_N={force:.1f}")
    elif kind == "capstan":
        result = geometry.capstan_for_torque(args.torque, args.mu, args.pretension, args.radius)
        print(result.report())
    elif kind == "sag":
        err = sag_tension_error(args.pretension, config.plant.sensors.sag_mass,
                                config.plant.sensors.sag_spans)
        print(f"pretension={args.pretension:g} N sag_error_pct={100 * err:.3f}")
    elif kind == "poles":
        if args.estimate:
            with open(args.estimate) as fh:
                est = ImpedanceEstimate.from_record(fh.read())
        else:
            est = ImpedanceEstimate(args.mass, args.viscosity, args.stiffness, 100.0, "cable")
        ps = poles(est)
        print(f"pole1_hz={ps.pole_frequencies[0]:.6g}")
        print(f"pole2_hz={ps.pole_frequencies[1]:.6g}")
        print(f"damping={ps.damping_classification}")
    else:
        raise UsageError(f"unknown analysis {kind!r}")
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="nedsim", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="plant/experiment config file (INI style)")
    parser.add_argument("--seed", type=int, default=0, help="base random seed")
    parser.add_argument("--out", default="nedsim_out", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def limit_flags(p):
        p.add_argument("--vmax", type=float, default=750.0, help="mm/s")
        p.add_argument("--amax", type=float, default=1e4, help="mm/s^2")
        p.add_argument("--jmax", type=float, default=1e6, help="mm/s^3")

    p = sub.add_parser("plan", help="plan a trajectory and write it as CSV")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--move", metavar="X0:X1", help="point-to-point move in mm")
    group.add_argument("--ramp-hold", metavar="AMP:MS", help="ramp-and-hold amplitude and plateau")
    group.add_argument("--saw", metavar="AMP:SPEED:CYCLES", help="saw pattern")
    p.add_argument("--direction", choices=(FLEXION, EXTENSION), default=FLEXION)
    p.add_argument("--optimize", action="store_true",
                   help="pick ramp-hold limits from the 50-candidate grid")
    p.add_argument("--name", default="profile.csv")
    limit_flags(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="simulate a profile on the configured plant")
    p.add_argument("profile", help="profile CSV written by 'plan'")
    p.add_argument("--rest", type=float, default=100.0, help="rest padding before/after, ms")
    p.add_argument("--noiseless", action="store_true")
    p.add_argument("--cable-only", action="store_true",
                   help="use the characterised cable model without a load")
    p.add_argument("--check-safety", action="store_true")
    p.add_argument("--name", default="log.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("identify", help="fit impedance to sensor logs")
    p.add_argument("logs", nargs="+")
    p.add_argument("--domain", choices=("joint", "cable"), default="cable")
    p.add_argument("--initial-mass", type=float, default=0.5)
    p.add_argument("--lever", type=float)
    p.add_argument("--mode", choices=("joint", "per_trial"), default="joint")
    p.add_argument("--plateau", type=_pair, metavar="START:END",
                   help="plateau stiffness over this window (ms) instead of a dynamic fit")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("experiment", help="run a batch of noisy trials")
    p.add_argument("--kind", choices=("leg", "spring", "cable"))
    p.add_argument("--trials", type=int)
    p.add_argument("--speeds", type=_floats)
    p.add_argument("--angles", type=_floats)
    p.add_argument("--amplitudes", type=_floats)
    p.add_argument("--durations", type=_floats)
    p.add_argument("--fit-mode", choices=("per_trial", "joint"))
    p.add_argument("--noiseless", action="store_true")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("analyze", help="sensitivity, capstan, sag and pole reports")
    p.add_argument("kind", help="sensitivity | capstan | sag | poles")
    p.add_argument("--budget", type=float, default=0.05)
    p.add_argument("--torque", type=float, default=150.0, help="joint torque, N m")
    p.add_argument("--mu", type=float, default=0.1)
    p.add_argument("--radius", type=float, default=0.1,
                   help="transmission radius converting torque to cable force, m")
    p.add_argument("--pretension", type=float, default=200.0)
    p.add_argument("--mass", type=float, default=0.5)
    p.add_argument("--viscosity", type=float, default=59.04)
    p.add_argument("--stiffness", type=float, default=543.1)
    p.add_argument("--estimate", help="estimate record file from 'identify'")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help or a usage error
        return exc.code
    try:
        config = load_config(args.config)
        return args.func(args, config)
    except UsageError as exc:
        print(f"nedsim: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrialError as exc:
        print(f"nedsim: {exc}", file=sys.stderr)
        return EXIT_NUMERIC if isinstance(exc.error, NUMERIC_ERRORS) else EXIT_USAGE
    except NUMERIC_ERRORS as exc:
        print(f"nedsim: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InvalidArgument, InsufficientExcitation, NedError, OSError, ValueError,
            argparse.ArgumentTypeError) as exc:
        print(f"nedsim: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
