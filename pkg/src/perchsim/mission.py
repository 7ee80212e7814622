"""Top-level mission autonomy: cycle between inspecting and charging, driven
by battery-voltage thresholds and operator commands.

The FSM owns mission state only; maneuvers are executed by the engine, which
feeds their completion/failure events back into ``step``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


class MissionState(Enum):
    IDLE = "idle"
    INSPECTING = "inspecting"
    LANDING_ON_CABLE = "landing_on_cable"
    CHARGING = "charging"
    TAKING_OFF_FROM_CABLE = "taking_off_from_cable"


class OperatorCommand(Enum):
    START_MISSION = "start"
    STOP_MISSION = "stop"
    INITIATE_CHARGING = "initiate_charging"
    INTERRUPT_CHARGING = "interrupt_charging"


@dataclass
class MissionConfig:
    v_low: float = 22.9             # start-charging threshold, volts
    v_high: float = 25.1            # stop-charging threshold, volts
    inspect_hover_offset: float = 1.5
    auto_thresholds: bool = True    # voltage thresholds act without an operator
    cycle_limit: int = 0            # 0 = unbounded

    def __post_init__(self):
        if self.v_low >= self.v_high:
            raise ValueError("v_low must be below v_high")


@dataclass
class FsmInputs:
    battery_voltage: float
    can_lift_off: bool
    gripper_closed: bool
    has_target: bool
    maneuver_done: bool = False
    maneuver_failed: str | None = None
    commands: list = field(default_factory=list)


@dataclass
class FsmOutput:
    state: MissionState
    actions: list = field(default_factory=list)      # ("start_inspect"|"start_landing"|"start_takeoff"|"halt"|"complete", detail)
    events: list = field(default_factory=list)
    rejections: list = field(default_factory=list)   # (command, reason)


class MissionFsm:
    def __init__(self, config: MissionConfig | None = None):
        self.config = config or MissionConfig()
        self.state = MissionState.IDLE
        self.cycle_count = 0
        self.abort_count = 0
        self.stop_requested = False
        self.complete = False

    def _transition(self, out: FsmOutput, new_state: MissionState, action=None):
        out.events.append(f"mission:{self.state.value}->{new_state.value}")
        self.state = new_state
        out.state = new_state
        if action:
            out.actions.append(action)

    def step(self, inp: FsmInputs) -> FsmOutput:
        cfg = self.config
        out = FsmOutput(state=self.state)
        start = stop = initiate = interrupt = False
        for cmd in inp.commands:
            if cmd is OperatorCommand.START_MISSION:
                start = True
            elif cmd is OperatorCommand.STOP_MISSION:
                stop = True
            elif cmd is OperatorCommand.INITIATE_CHARGING:
                initiate = True
            elif cmd is OperatorCommand.INTERRUPT_CHARGING:
                interrupt = True
        if stop:
            self.stop_requested = True
            out.events.append("mission:stop_requested")

        s = self.state
        if s is MissionState.IDLE:
            if start:
                self._transition(out, MissionState.INSPECTING, ("start_inspect", None))
            return out

        if self.complete:
            return out

        if s is MissionState.INSPECTING:
            if self.stop_requested:
                self.complete = True
                out.actions.append(("complete", "stopped while inspecting"))
                return out
            want_charge = initiate or (cfg.auto_thresholds
                                       and inp.battery_voltage <= cfg.v_low)
            if want_charge:
                if inp.has_target:
                    self._transition(out, MissionState.LANDING_ON_CABLE,
                                     ("start_landing", None))
                elif initiate:
                    out.rejections.append((OperatorCommand.INITIATE_CHARGING,
                                           "no confirmed cable track"))
            elif interrupt:
                out.rejections.append((OperatorCommand.INTERRUPT_CHARGING,
                                       "not charging"))
            return out

        if s is MissionState.LANDING_ON_CABLE:
            if inp.maneuver_done:
                self._transition(out, MissionState.CHARGING)
            elif inp.maneuver_failed:
                out.events.append(f"landing_failed:{inp.maneuver_failed}")
                self._transition(out, MissionState.INSPECTING, ("start_inspect", None))
            if initiate:
                out.rejections.append((OperatorCommand.INITIATE_CHARGING,
                                       "landing already in progress"))
            return out

        if s is MissionState.CHARGING:
            if self.stop_requested:
                self.complete = True
                out.actions.append(("complete", "stopped while charging; staying attached"))
                return out
            want_takeoff = interrupt or (cfg.auto_thresholds
                                         and inp.battery_voltage >= cfg.v_high)
            if want_takeoff:
                if not inp.can_lift_off:
                    if interrupt:
                        out.rejections.append((
                            OperatorCommand.INTERRUPT_CHARGING,
                            "battery below the 45% lift-off floor",
                        ))
                else:
                    self._transition(out, MissionState.TAKING_OFF_FROM_CABLE,
                                     ("start_takeoff", None))
            elif initiate:
                out.rejections.append((OperatorCommand.INITIATE_CHARGING,
                                       "already charging"))
            return out

        # taking off
        if inp.maneuver_done:
            self.cycle_count += 1
            out.events.append(f"cycle_complete:{self.cycle_count}")
            if self.stop_requested or (cfg.cycle_limit
                                       and self.cycle_count >= cfg.cycle_limit):
                self.complete = True
                self._transition(out, MissionState.INSPECTING, ("complete", None))
            else:
                self._transition(out, MissionState.INSPECTING, ("start_inspect", None))
        elif inp.maneuver_failed:
            out.events.append(f"takeoff_failed:{inp.maneuver_failed}")
            self._transition(out, MissionState.CHARGING)
        return out
