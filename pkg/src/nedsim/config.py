"""Plain-text (INI style) configuration for plants, experiments and limits.

Example::

    [plant]
    load = leg            ; leg | spring | none
    lever = 0.7           ; m, optional

    [cable]
    M_x = 0.5
    B_x = 60
    K_x = 1e5
    pretension = 200

    [leg]
    I = 1.84
    base_angle = 35

    [sensors]
    force_noise_sd = 0.29
    sag_spans = 0.3, 1.2

    [experiment]
    kind = leg
    speeds = 20, 40, 100, 300, 500, 750
    angles = 15, 25, 35, 45, 55
    trials = 20

Keys mirror the dataclass fields; anything omitted keeps its default.
"""

import configparser
from dataclasses import dataclass, field, fields

from .errors import InvalidArgument
from .plant import CableStage, DummyLeg, PlantModel, SensorModel, SpringPair
from .safety import SafetyLimits

# Leg segment mass is this fraction of body mass in the anatomical default.
LEG_MASS_FRACTION = 0.098


def anatomical_leg(body_mass=54.0, height=1.72, base_angle=15.0, B=4.0, K=40.0):
    """Straight-leg surrogate built from anthropometric fractions of body size.

    Leg length is 0.53 of body height, the centre of mass sits at 0.447 of
    the leg length and the radius of gyration about the hip is 0.56 of it.
    """
    mass = LEG_MASS_FRACTION * body_mass
    L = 0.53 * height
    return DummyLeg(I=mass * (0.56 * L) ** 2, B=B, K=K, mass=mass, com_distance=0.447 * L,
                    L=L, base_angle=base_angle)


@dataclass
class ExperimentSpec:
    kind: str = "leg"
    speeds: tuple = (20.0, 40.0, 100.0, 300.0, 500.0, 750.0)
    angles: tuple = (15.0, 25.0, 35.0, 45.0, 55.0)
    amplitudes: tuple = (2.0, 4.0, 8.0)
    durations: tuple = (50.0, 100.0, 150.0)
    perturbation_deg: float = 5.0
    plateau_ms: float = 500.0
    a_max: float = 1.0e4
    j_max: float = 1.0e6
    trials: int = 20
    seed: int = 0
    fit_mode: str = "per_trial"

    def __post_init__(self):
        if self.kind not in ("leg", "spring", "cable"):
            raise InvalidArgument(f"unknown experiment kind {self.kind!r}")
        if self.trials < 1:
            raise InvalidArgument("trials must be >= 1")
        if self.fit_mode not in ("per_trial", "joint"):
            raise InvalidArgument(f"unknown fit mode {self.fit_mode!r}")


@dataclass
class Config:
    plant: PlantModel = field(default_factory=lambda: PlantModel(load=DummyLeg()))
    experiment: ExperimentSpec = field(default_factory=ExperimentSpec)
    safety: SafetyLimits = field(default_factory=lambda: SafetyLimits.for_leg(0.7))


def _convert(text, default):
    if isinstance(default, bool):
        low = text.strip().lower()
        if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
            raise InvalidArgument(f"not a boolean: {text!r}")
        return low in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float) or default is None:
        return float(text)
    if isinstance(default, tuple):
        return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())
    return text.strip()


def _build(cls, section, base=None):
    base = base if base is not None else cls()
    kwargs = {}
    lower = {f.name.lower(): f.name for f in fields(cls)}
    for key, text in section.items():
        name = lower.get(key.lower())
        if name is None:
            raise InvalidArgument(f"unknown key {key!r} in [{section.name}]")
        try:
            kwargs[name] = _convert(text, getattr(base, name))
        except ValueError as exc:
            raise InvalidArgument(f"bad value for {key} in [{section.name}]: {text!r}") from exc
    values = {f.name: getattr(base, f.name) for f in fields(cls)}
    values.update(kwargs)
    return cls(**values)


def parse_config(text):
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise InvalidArgument(f"malformed config: {exc}") from exc

    def section(name):
        return parser[name] if parser.has_section(name) else {}

    cable = _build(CableStage, parser["cable"]) if parser.has_section("cable") else CableStage()
    sensors = _build(SensorModel, parser["sensors"]) if parser.has_section("sensors") else SensorModel()
    load_kind = section("plant").get("load", "leg").strip().lower()
    if load_kind == "leg":
        load = _build(DummyLeg, parser["leg"]) if parser.has_section("leg") else DummyLeg()
    elif load_kind == "spring":
        load = _build(SpringPair, parser["spring"]) if parser.has_section("spring") else SpringPair()
    elif load_kind == "none":
        load = None
    else:
        raise InvalidArgument(f"unknown load {load_kind!r}")
    lever = section("plant").get("lever")
    plant = PlantModel(cable, load, sensors, float(lever) if lever else None)

    experiment = ExperimentSpec()
    if parser.has_section("experiment"):
        experiment = _build(ExperimentSpec, parser["experiment"])

    safety = SafetyLimits.for_leg(plant.lever)
    if parser.has_section("safety"):
        safety = _build(SafetyLimits, parser["safety"], safety)
    return Config(plant, experiment, safety)


def load_config(path=None):
    if path is None:
        return Config()
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise InvalidArgument(f"cannot read config {path}: {exc}") from exc
