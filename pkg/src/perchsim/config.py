"""Scenario configuration: one JSON document drives a whole simulation.

See README.md for the documented schema. Unknown keys are rejected so typos
fail loudly before t=0.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .battery import BatteryParams
from .circuit import CircuitParams
from .flight import FlightConfig
from .gripper import GripperGeometry
from .mission import MissionConfig
from .mmc import MmcConfig
from .perception import PerceptionConfig
from .world import CableSpec, CurrentProfile, PowerlineSpec, SimClock, vec3


class ConfigError(ValueError):
    """Scenario validation failure; aborts before the simulation starts."""


@dataclass
class DroneConfig:
    mass: float = 4.3
    initial_position: tuple = (0.0, 50.0, 8.5)
    initial_yaw: float = 0.0
    initial_soc: float = 1.0


@dataclass
class OperatorRule:
    command: str
    when_soc_below: float | None = None
    when_soc_above: float | None = None
    at_t: float | None = None
    after_cycles: int | None = None
    state: str | None = None


@dataclass
class DisturbanceSpec:
    trigger: str = "ascent_start"   # event name, or "time"
    occurrence: int = 1             # 1-based count of the trigger event
    delay_s: float = 0.0
    at_t: float | None = None
    offset: tuple = (0.0, 0.0, 0.0)


@dataclass
class Scenario:
    seed: int = 1
    clock: SimClock = field(default_factory=SimClock)
    powerline: PowerlineSpec = None
    drone: DroneConfig = field(default_factory=DroneConfig)
    battery: BatteryParams = field(default_factory=BatteryParams)
    circuit: CircuitParams = field(default_factory=CircuitParams)
    mmc: MmcConfig = field(default_factory=MmcConfig)
    gripper: GripperGeometry = field(default_factory=GripperGeometry)
    perception: PerceptionConfig = field(default_factory=PerceptionConfig)
    flight: FlightConfig = field(default_factory=FlightConfig)
    mission: MissionConfig = field(default_factory=MissionConfig)
    operator_script: list = field(default_factory=list)
    disturbances: list = field(default_factory=list)
    stream_hz: float = 10.0

    def __post_init__(self):
        if self.powerline is None:
            self.powerline = default_powerline()


def default_powerline(current_rms: float = 288.0, n_cables: int = 3,
                      spacing: float = 1.5, height: float = 10.0,
                      span: float = 100.0) -> PowerlineSpec:
    """Three parallel cables, 10 m up, 1.5 m apart, 100 m span."""
    xs = [spacing * (i - (n_cables - 1) / 2.0) for i in range(n_cables)]
    cables = [
        CableSpec(vec3(x, 0.0, height), vec3(x, span, height), sag=0.0, phase_id=i)
        for i, x in enumerate(xs)
    ]
    return PowerlineSpec(cables=cables, line_frequency=50.0,
                         current=CurrentProfile([(0.0, current_rms)]))


def default_scenario(**overrides) -> Scenario:
    sc = Scenario()
    for key, value in overrides.items():
        if not hasattr(sc, key):
            raise ConfigError(f"unknown scenario field: {key}")
        setattr(sc, key, value)
    return sc


def _build(cls, payload: dict, path: str):
    if not isinstance(payload, dict):
        raise ConfigError(f"{path}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(payload) - names
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    try:
        return cls(**payload)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _build_powerline(payload: dict) -> PowerlineSpec:
    if not isinstance(payload, dict):
        raise ConfigError("powerline: expected an object")
    known = {"cables", "line_frequency", "current_rms"}
    unknown = set(payload) - known
    if unknown:
        raise ConfigError(f"powerline: unknown keys {sorted(unknown)}")
    current = payload.get("current_rms", 288.0)
    if isinstance(current, (int, float)):
        profile = CurrentProfile([(0.0, float(current))])
    else:
        profile = CurrentProfile([(float(t), float(a)) for t, a in current])
    cables = []
    for i, c in enumerate(payload.get("cables", [])):
        names = {"endpoint_a", "endpoint_b", "sag", "phase_id"}
        unknown = set(c) - names
        if unknown:
            raise ConfigError(f"powerline.cables[{i}]: unknown keys {sorted(unknown)}")
        try:
            cables.append(CableSpec(
                endpoint_a=vec3(*c["endpoint_a"]),
                endpoint_b=vec3(*c["endpoint_b"]),
                sag=float(c.get("sag", 0.0)),
                phase_id=int(c.get("phase_id", i)),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"powerline.cables[{i}]: {exc}") from exc
    if not cables:
        cables = default_powerline().cables
    try:
        return PowerlineSpec(cables=cables,
                             line_frequency=float(payload.get("line_frequency", 50.0)),
                             current=profile)
    except ValueError as exc:
        raise ConfigError(f"powerline: {exc}") from exc


def scenario_from_dict(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ConfigError("scenario: expected a JSON object")
    known = {
        "seed", "clock", "powerline", "drone", "battery", "circuit", "mmc",
        "gripper", "perception", "flight", "mission", "operator_script",
        "disturbances", "stream_hz",
    }
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"scenario: unknown keys {sorted(unknown)}")
    sc = Scenario()
    if "seed" in doc:
        sc.seed = int(doc["seed"])
    if "stream_hz" in doc:
        sc.stream_hz = float(doc["stream_hz"])
    if "clock" in doc:
        sc.clock = _build(SimClock, doc["clock"], "clock")
    if "powerline" in doc:
        sc.powerline = _build_powerline(doc["powerline"])
    if "drone" in doc:
        sc.drone = _build(DroneConfig, doc["drone"], "drone")
    if "battery" in doc:
        payload = dict(doc["battery"])
        if "ocv_table" in payload:
            payload["ocv_table"] = tuple(
                (float(s), float(v)) for s, v in payload["ocv_table"])
        sc.battery = _build(BatteryParams, payload, "battery")
    if "circuit" in doc:
        sc.circuit = _build(CircuitParams, doc["circuit"], "circuit")
    if "mmc" in doc:
        sc.mmc = _build(MmcConfig, doc["mmc"], "mmc")
    if "gripper" in doc:
        sc.gripper = _build(GripperGeometry, doc["gripper"], "gripper")
    if "perception" in doc:
        sc.perception = _build(PerceptionConfig, doc["perception"], "perception")
    if "flight" in doc:
        sc.flight = _build(FlightConfig, doc["flight"], "flight")
    if "mission" in doc:
        sc.mission = _build(MissionConfig, doc["mission"], "mission")
    for i, rule in enumerate(doc.get("operator_script", [])):
        sc.operator_script.append(_build(OperatorRule, rule, f"operator_script[{i}]"))
    for i, dist in enumerate(doc.get("disturbances", [])):
        payload = dict(dist)
        if "offset" in payload:
            payload["offset"] = tuple(float(x) for x in payload["offset"])
        sc.disturbances.append(_build(DisturbanceSpec, payload, f"disturbances[{i}]"))
    _validate(sc)
    return sc


def load_scenario(path: str) -> Scenario:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read scenario: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    return scenario_from_dict(doc)


def _validate(sc: Scenario) -> None:
    period = 1.0 / sc.powerline.line_frequency
    n = period / sc.clock.circuit_dt
    if abs(n - round(n)) > 1e-9:
        raise ConfigError("circuit_dt must divide the line period exactly")
    if sc.flight.safety_margin >= sc.gripper.max_misalignment:
        raise ConfigError("safety_margin must stay inside the capture envelope")
    valid_cmds = {"start", "stop", "initiate_charging", "interrupt_charging"}
    for rule in sc.operator_script:
        if rule.command not in valid_cmds:
            raise ConfigError(f"operator_script: unknown command {rule.command!r}")
    for d in sc.disturbances:
        if d.trigger != "time" and d.occurrence < 1:
            raise ConfigError("disturbances: occurrence is 1-based")
