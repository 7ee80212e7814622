"""Deterministic two-rate simulation engine.

One flight step runs, in order: operator commands, perception, maneuver
control, rigid-body physics plus disturbances, gripper mechanism, circuit
substeps with the MMC, battery bookkeeping, the mission FSM (so completion
events land in the same record), and finally telemetry emission. Time is an
integer step count; a fixed RNG seed reproduces the run bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import battery as bat
from .circuit import CircuitRunner, holding_force
from .config import Scenario
from .flight import (
    FlyToCable,
    Hover,
    LandOnCable,
    ManeuverContext,
    ManeuverStep,
    TakeoffFromCable,
    TrajectorySetpoint,
    TrajectoryTracker,
    cable_yaw,
)
from .gripper import GripperState, attach, detach, update_mechanism
from .mission import FsmInputs, MissionFsm, MissionState, OperatorCommand
from .mmc import GripperStatus, MmcCommand, MmcController, MmcMode
from .perception import (
    CableTracker,
    OdometryDelta,
    estimate_direction,
    plane_basis,
    project_to_plane,
    scan_to_plane,
    synth_scan,
)
from .telemetry import TelemetryRecord
from .world import DroneState, GRAVITY, cable_point, nearest_point_on_cable, step_drone, vec3


class InspectHover:
    """Inspection behavior: hold a hover below the tracked cable."""

    name = "inspect"
    phase = "hover"

    def __init__(self, config, offset_below: float):
        self.config = config
        self.offset = offset_below
        self._fallback = None

    def tick(self, ctx: ManeuverContext) -> ManeuverStep:
        if ctx.target_point is None:
            if self._fallback is None:
                self._fallback = ctx.drone.position.copy()
            return ManeuverStep(setpoint=TrajectorySetpoint(self._fallback))
        self._fallback = None
        target = ctx.target_point - vec3(0, 0, self.offset)
        yaw_ref = cable_yaw(ctx.cable_direction, ctx.drone.yaw) \
            if ctx.cable_direction is not None else None
        return ManeuverStep(setpoint=TrajectorySetpoint(target, yaw=yaw_ref))


@dataclass
class _Disturbance:
    spec: object
    seen: int = 0
    fire_at: float | None = None
    done: bool = False


class Engine:
    def __init__(self, scenario: Scenario, landing_lateral_offset: float = 0.0):
        self.sc = scenario
        self.clock = scenario.clock
        self.rng = np.random.default_rng(scenario.seed)
        self.powerline = scenario.powerline
        self.drone = DroneState(
            position=vec3(*scenario.drone.initial_position),
            yaw=scenario.drone.initial_yaw,
            armed=False,
            mass=scenario.drone.mass,
        )
        self.battery_params = scenario.battery
        self.battery = bat.BatteryState(
            soc=scenario.drone.initial_soc,
            terminal_voltage=scenario.battery.ocv(scenario.drone.initial_soc),
        )
        self.hover_draw = bat.hover_power(scenario.drone.mass)
        self.mmc = MmcController(scenario.circuit, scenario.mmc,
                                 scenario.powerline.line_frequency)
        self.runner = CircuitRunner(scenario.circuit,
                                    scenario.powerline.line_frequency,
                                    scenario.clock.circuit_dt,
                                    on_cycle=self.mmc.on_cycle)
        self.tracker = CableTracker(scenario.perception)
        self.flight_tracker = TrajectoryTracker(scenario.clock.flight_dt,
                                                scenario.flight)
        self.fsm = MissionFsm(scenario.mission)
        self.gripper_state = GripperState.OPEN
        self.engagement = 0.0
        self.maneuver = None
        self.landing_lateral_offset = landing_lateral_offset

        self._grab: tuple[int, float] | None = None   # (cable index, s)
        self._last_scan_pos = self.drone.position.copy()
        self._direction_est = None
        self._target_point = None
        self._target_id = None
        self._pending_commands: list[OperatorCommand] = []
        self._maneuver_events: list[str] = []
        self._maneuver_done = False
        self._maneuver_failed: str | None = None
        self._circuit_active = False
        self._abort_count = 0
        self._halted: str | None = None
        self._disturbances = [_Disturbance(spec=d) for d in scenario.disturbances]
        self._script_fired = [False] * len(scenario.operator_script)
        self.last_record: TelemetryRecord | None = None
        self.on_record = []            # list of callables(record)

    # -- operator interface ---------------------------------------------------

    def command(self, cmd: OperatorCommand | str) -> tuple[bool, str]:
        """Queue an operator command; validated against the latest snapshot."""
        if isinstance(cmd, str):
            try:
                cmd = OperatorCommand(cmd)
            except ValueError:
                return False, f"unknown command {cmd!r}"
        ok, reason = self._precheck(cmd)
        if ok:
            self._pending_commands.append(cmd)
        return ok, reason

    def _precheck(self, cmd: OperatorCommand) -> tuple[bool, str]:
        state = self.fsm.state
        if cmd is OperatorCommand.START_MISSION:
            if state is not MissionState.IDLE:
                return False, "mission already started"
            return True, "mission starting"
        if cmd is OperatorCommand.STOP_MISSION:
            return True, "stop requested"
        if cmd is OperatorCommand.INITIATE_CHARGING:
            if state is not MissionState.INSPECTING:
                return False, f"cannot initiate charging while {state.value}"
            if self.tracker.select_target() is None:
                return False, "no confirmed cable track"
            return True, "landing on cable"
        # interrupt charging
        if state is not MissionState.CHARGING:
            return False, f"not charging (state {state.value})"
        if not bat.can_lift_off(self.battery):
            return False, "battery below the 45% lift-off floor"
        return True, "taking off"

    # -- scripted operator ----------------------------------------------------

    def _run_script(self):
        for i, rule in enumerate(self.sc.operator_script):
            cond = True
            if rule.at_t is not None:
                cond &= self.clock.t >= rule.at_t
            if rule.when_soc_below is not None:
                cond &= self.battery.soc < rule.when_soc_below
            if rule.when_soc_above is not None:
                cond &= self.battery.soc > rule.when_soc_above
            if rule.after_cycles is not None:
                cond &= self.fsm.cycle_count >= rule.after_cycles
            if rule.state is not None:
                cond &= self.fsm.state.value == rule.state
            if cond and not self._script_fired[i]:
                self._script_fired[i] = True
                ok, _ = self.command(OperatorCommand(rule.command))
            elif not cond:
                self._script_fired[i] = False

    # -- perception -----------------------------------------------------------

    def _perceive(self):
        cfg = self.sc.perception
        delta = self.drone.position - self._last_scan_pos
        self._last_scan_pos = self.drone.position.copy()
        truth_dir = self.powerline.cables[0].direction
        est = estimate_direction(truth_dir, self.rng, cfg.direction_kappa)
        self._direction_est = est.direction
        self.tracker.predict(OdometryDelta(translation=delta), est.direction)
        scan = synth_scan(self.powerline.cables, self.drone.position,
                          self.drone.yaw, self.rng, cfg, timestamp=self.clock.t)
        self.tracker.update(scan_to_plane(scan, self.drone.yaw, est.direction))
        target = self.tracker.select_target()
        if target is None:
            self._target_point = None
            self._target_id = None
            return
        self._target_id = target.id
        u, v = plane_basis(est.direction)
        self._target_point = self.drone.position + target.position[0] * u \
            + target.position[1] * v

    # -- mission actions ------------------------------------------------------

    def _apply_actions(self, actions):
        for action, detail in actions:
            if action == "start_inspect":
                self.maneuver = InspectHover(self.sc.flight,
                                             self.sc.mission.inspect_hover_offset)
                if not self.drone.armed and not self.drone.attached:
                    self.drone.armed = True
            elif action == "start_landing":
                self.maneuver = LandOnCable(self.sc.flight,
                                            self.landing_lateral_offset)
            elif action == "start_takeoff":
                self.maneuver = TakeoffFromCable(
                    self.sc.flight, self.sc.mission.inspect_hover_offset)
                # first tick now so arming lands in this record
                self._tick_maneuver()
            elif action == "halt":
                self._halted = detail
            elif action == "complete":
                pass

    # -- per-step helpers -----------------------------------------------------

    def _maneuver_context(self) -> ManeuverContext:
        force = holding_force(self.runner.snapshot(), self.sc.circuit,
                              self.gripper_state is GripperState.CLOSED)
        return ManeuverContext(
            t=self.clock.t,
            dt=self.clock.flight_dt,
            drone=self.drone,
            can_lift_off=bat.can_lift_off(self.battery),
            gripper_state=self.gripper_state,
            holding_force=force,
            mmc_status=self.mmc.telemetry.gripper_status,
            target_point=None if self._target_point is None
            else self._target_point.copy(),
            cable_direction=self._direction_est,
            confirmed_tracks=len(self.tracker.confirmed),
        )

    def _tick_maneuver(self):
        if self.maneuver is None:
            self._setpoint = None
            return
        step = self.maneuver.tick(self._maneuver_context())
        self._setpoint = step.setpoint
        self._maneuver_events.extend(step.events)
        if step.mmc_command is not None:
            self.mmc.command_gripper(step.mmc_command)
        if step.arm is True and not self.drone.armed:
            if bat.can_lift_off(self.battery):
                self.drone.armed = True
                self._maneuver_events.append("armed")
        if step.attach:
            force = holding_force(self.runner.snapshot(), self.sc.circuit, True)
            self.drone = attach(self.drone, force, self.gripper_state)
            if step.arm is False:
                self.drone.armed = False
                self._maneuver_events.append("disarmed_on_cable")
        elif step.arm is False and self.drone.armed:
            self.drone.armed = False
            self._maneuver_events.append("disarmed")
        if step.done:
            self._maneuver_done = True
            self.maneuver = None
        elif step.failed:
            self._maneuver_failed = step.failed
            self.maneuver = None

    def _physics(self):
        if self.drone.attached:
            if self._grab is not None:
                idx, s = self._grab
                anchor = cable_point(self.powerline.cables[idx], s)
                pose = anchor - vec3(0, 0, self.sc.gripper.attach_height)
                self.drone.position = pose
                self.drone.velocity = vec3(0, 0, 0)
            return
        ceiling = bat.thrust_accel_ceiling(self.battery,
                                           self.sc.flight.accel_limit)
        if self._setpoint is not None:
            accel = self.flight_tracker.plan_step(self.drone, self._setpoint)
            yaw_rate = self.flight_tracker.yaw_rate(self.drone,
                                                    self._setpoint.yaw)
        else:
            accel = vec3(0, 0, 0)
            yaw_rate = 0.0
        self.drone = step_drone(self.drone, accel, yaw_rate,
                                self.clock.flight_dt,
                                self.sc.flight.accel_limit, ceiling)
        self._fire_disturbances()

    def _fire_disturbances(self):
        for d in self._disturbances:
            if d.done or d.fire_at is None:
                continue
            if self.clock.t >= d.fire_at:
                self.drone.position = self.drone.position + np.asarray(d.spec.offset)
                d.done = True
                self._maneuver_events.append("disturbance_applied")

    def _watch_disturbance_triggers(self, events):
        for d in self._disturbances:
            if d.done or d.fire_at is not None:
                continue
            if d.spec.trigger == "time":
                d.fire_at = d.spec.at_t or 0.0
                continue
            for ev in events:
                if ev == d.spec.trigger:
                    d.seen += 1
                    if d.seen >= d.spec.occurrence:
                        d.fire_at = self.clock.t + d.spec.delay_s

    def _update_gripper(self):
        if self.drone.attached or self.gripper_state is GripperState.CLOSED:
            return
        # the mechanism works against the physically nearest cable
        best = None
        for idx, cable in enumerate(self.powerline.cables):
            s, point, dist = nearest_point_on_cable(cable, self.drone.position)
            if best is None or dist < best[3]:
                best = (idx, s, point, dist)
        idx, s, point, dist = best
        direction = self.powerline.cables[idx].direction
        u, v = plane_basis(direction)
        rel = point - self.drone.position
        lateral = float(np.dot(rel, u))
        height = float(np.dot(rel, v))
        body_y = vec3(-math.sin(self.drone.yaw), math.cos(self.drone.yaw), 0.0)
        align = abs(float(np.dot(body_y, direction)))
        roll_deg = math.degrees(math.acos(min(max(align, 0.0), 1.0)))
        upd = update_mechanism(self.gripper_state, self.sc.gripper, lateral,
                               height, float(self.drone.velocity[2]), roll_deg)
        if upd.state is not self.gripper_state:
            self._maneuver_events.append(f"gripper:{upd.state.value}")
        self.gripper_state = upd.state
        self.engagement = upd.engagement_progress
        if upd.lateral_pull != 0.0:
            self.drone.position = self.drone.position - upd.lateral_pull * u
        if upd.state is GripperState.CLOSED and self._grab is None:
            s_grab, _, _ = nearest_point_on_cable(
                self.powerline.cables[idx], self.drone.position)
            self._grab = (idx, s_grab)

    def _circuit_step(self) -> tuple[float, float]:
        state = self.fsm.state
        active = (
            self.gripper_state is not GripperState.OPEN
            or self.mmc.command is MmcCommand.CLOSED
            or self.mmc.mode is not MmcMode.IDLE
            or state in (MissionState.LANDING_ON_CABLE, MissionState.CHARGING,
                         MissionState.TAKING_OFF_FROM_CABLE)
        )
        if not active:
            if self._circuit_active:
                self._circuit_active = False
            return 0.0, 0.0
        if not self._circuit_active:
            substeps = self.clock.substeps_per_step
            self.runner.resync(self.clock.t,
                               (self.clock.step_count * substeps)
                               % self.runner.n_per_cycle)
            self._circuit_active = True
        self.mmc.battery_voltage = self.battery.terminal_voltage
        ip_rms = self.powerline.current.rms_at(self.clock.t)
        coupled = self.gripper_state is GripperState.CLOSED
        span = self.runner.advance(self.clock.substeps_per_step, ip_rms, coupled)
        if self.runner.released_at is not None:
            self.runner.released_at = None
            if self.gripper_state is not GripperState.OPEN:
                self.gripper_state = GripperState.OPEN
                self.engagement = 0.0
                self._maneuver_events.append("gripper:open")
            if self.drone.attached:
                self.drone = detach(self.drone, self.gripper_state)
                self._maneuver_events.append("detached")
            self._grab = None
            self.mmc.notify_released()
        return span["harvest_j"], span["drive_j"]

    # -- main loop -------------------------------------------------------------

    def step(self):
        dt = self.clock.flight_dt
        self._setpoint = None
        self._maneuver_events = []
        self._maneuver_done = False
        self._maneuver_failed = None

        self._run_script()
        commands = self._pending_commands
        self._pending_commands = []

        if (not self.drone.attached and self.fsm.state is not MissionState.IDLE):
            self._perceive()

        self._tick_maneuver()
        self._physics()
        self._update_gripper()
        harvest_j, drive_j = self._circuit_step()

        draw = self.hover_draw if self.drone.armed else 0.0
        net_w = harvest_j / dt - drive_j / dt - draw
        self.battery = bat.step_battery(self.battery, self.battery_params,
                                        net_w, dt)

        out = self.fsm.step(FsmInputs(
            battery_voltage=self.battery.terminal_voltage,
            can_lift_off=bat.can_lift_off(self.battery),
            gripper_closed=self.gripper_state is GripperState.CLOSED,
            has_target=self._target_point is not None,
            maneuver_done=self._maneuver_done,
            maneuver_failed=self._maneuver_failed,
            commands=commands,
        ))
        for cmd, reason in out.rejections:
            self._maneuver_events.append(f"rejected:{cmd.value}:{reason}")
        self._apply_actions(out.actions)
        events = self._maneuver_events + out.events
        self._abort_count += sum(1 for ev in events if ev.startswith("landing_abort"))
        self._watch_disturbance_triggers(events)

        self.clock.advance()
        rec = self._make_record(net_w, events)
        self.last_record = rec
        for sink in self.on_record:
            sink(rec)
        return rec

    def _make_record(self, net_w: float, events) -> TelemetryRecord:
        snap = self.runner.snapshot() if self._circuit_active else None
        force = holding_force(snap, self.sc.circuit,
                              self.gripper_state is GripperState.CLOSED) \
            if snap is not None else 0.0
        charging = self.runner.last_cycle.harvested_w if self._circuit_active else 0.0
        return TelemetryRecord(
            step=self.clock.step_count,
            t=round(self.clock.t, 9),
            mission_state=self.fsm.state.value,
            maneuver=self.maneuver.name if self.maneuver else None,
            maneuver_phase=self.maneuver.phase if self.maneuver else None,
            pos=tuple(round(float(x), 9) for x in self.drone.position),
            vel=tuple(round(float(x), 9) for x in self.drone.velocity),
            yaw=round(float(self.drone.yaw), 9),
            altitude=round(float(self.drone.position[2]), 9),
            armed=self.drone.armed,
            attached=self.drone.attached,
            soc=round(self.battery.soc, 12),
            voltage=round(self.battery.terminal_voltage, 9),
            net_power_w=round(net_w, 9),
            charging_power_w=round(charging, 9),
            mmc_mode=self.mmc.mode.value,
            mmc_command=self.mmc.command.value,
            gripper=self.gripper_state.value,
            gripper_sensed=self.mmc.telemetry.gripper_status.value,
            holding_force_n=round(force, 9),
            im_mean_a=round(self.runner.last_cycle.im_mean, 9)
            if self._circuit_active else 0.0,
            ip_rms_a=self.powerline.current.rms_at(self.clock.t)
            if self.gripper_state is GripperState.CLOSED else 0.0,
            target_track=self._target_id,
            confirmed_tracks=len(self.tracker.confirmed),
            abort_count=self._abort_count,
            cycle_count=self.fsm.cycle_count,
            events=list(events),
        )

    def run(self, max_duration_s: float | None = None):
        """Step until the mission completes, halts, or the budget runs out."""
        max_steps = None if max_duration_s is None \
            else int(round(max_duration_s / self.clock.flight_dt))
        while not self.fsm.complete and self._halted is None:
            if max_steps is not None and self.clock.step_count >= max_steps:
                break
            self.step()
        return self._halted
