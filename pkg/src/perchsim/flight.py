"""Cable-aware flight maneuvers driven by receding-horizon quadratic tracking.

The trajectory follower solves a finite-horizon LQ tracking problem per axis
(double integrator, diagonal weights, terminal cost from the stationary
Riccati solution) and applies the first control, clamped to the acceleration
box. Maneuvers are cooperative state machines ticked at the flight rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.linalg import solve_discrete_are

from .gripper import GripperState
from .mmc import GripperStatus, MmcCommand
from .world import DroneState, vec3


@dataclass
class FlightConfig:
    accel_limit: float = 4.0
    horizon: int = 20
    q_pos: float = 20.0
    q_vel: float = 4.0
    r_accel: float = 1.0
    ascent_speed: float = 0.5
    safety_margin: float = 0.15
    staging_offset: float = 1.5
    ascent_budget: float = 2.5
    capture_wait: float = 5.0
    settle_pos_tol: float = 0.07
    settle_vel_tol: float = 0.15
    yaw_gain: float = 2.0
    yaw_rate_limit: float = 1.0
    obstacle_margin: float = 0.3
    max_attempts: int = 0            # 0 = unbounded reattempts


@dataclass
class TrajectorySetpoint:
    position: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    acceleration: np.ndarray = field(default_factory=lambda: np.zeros(3))
    yaw: float | None = None


def lq_gains(dt: float, horizon: int, q_pos: float, q_vel: float,
             r_accel: float) -> tuple[float, float]:
    """First-step feedback gain of the finite-horizon tracker.

    The terminal cost is the stationary Riccati solution, which makes the
    receding-horizon gain identical at every step.
    """
    A = np.array([[1.0, dt], [0.0, 1.0]])
    B = np.array([[0.5 * dt * dt], [dt]])
    Q = np.diag([q_pos, q_vel])
    R = np.array([[r_accel]])
    P = solve_discrete_are(A, B, Q, R)
    K = None
    for _ in range(horizon):
        K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
        P = Q + A.T @ P @ (A - B @ K)
    return float(K[0, 0]), float(K[0, 1])


class TrajectoryTracker:
    """Per-axis LQ tracking with box-clamped acceleration."""

    def __init__(self, dt: float, config: FlightConfig):
        self.config = config
        self.k_pos, self.k_vel = lq_gains(dt, config.horizon, config.q_pos,
                                          config.q_vel, config.r_accel)

    def plan_step(self, drone: DroneState, ref: TrajectorySetpoint) -> np.ndarray:
        a = (ref.acceleration
             + self.k_pos * (ref.position - drone.position)
             + self.k_vel * (ref.velocity - drone.velocity))
        n = float(np.linalg.norm(a))
        if n > self.config.accel_limit:
            a = a * (self.config.accel_limit / n)
        return a

    def yaw_rate(self, drone: DroneState, yaw_ref: float | None) -> float:
        if yaw_ref is None:
            return 0.0
        err = (yaw_ref - drone.yaw + math.pi) % (2.0 * math.pi) - math.pi
        rate = self.config.yaw_gain * err
        return float(np.clip(rate, -self.config.yaw_rate_limit,
                             self.config.yaw_rate_limit))


def cable_yaw(direction: np.ndarray, current_yaw: float) -> float:
    """Yaw putting the body y-axis parallel to the cable, nearest branch."""
    psi = math.atan2(-direction[0], direction[1])
    best = psi
    for cand in (psi, psi + math.pi, psi - math.pi):
        if abs((cand - current_yaw + math.pi) % (2 * math.pi) - math.pi) < \
           abs((best - current_yaw + math.pi) % (2 * math.pi) - math.pi):
            best = cand
    return (best + math.pi) % (2 * math.pi) - math.pi


def goal_is_feasible(goal: np.ndarray, cables, margin: float) -> bool:
    """A hover goal inside the cable keep-out margin is rejected."""
    from .world import nearest_point_on_cable

    for cable in cables:
        if nearest_point_on_cable(cable, goal)[2] < margin:
            return False
    return True


# --------------------------------------------------------------------------
# Maneuvers. The engine builds a ManeuverContext every flight step and
# performs the actions a maneuver requests.


@dataclass
class ManeuverContext:
    t: float
    dt: float
    drone: DroneState
    can_lift_off: bool
    gripper_state: GripperState
    holding_force: float
    mmc_status: GripperStatus
    target_point: np.ndarray | None      # tracked cable point, world frame
    cable_direction: np.ndarray | None
    confirmed_tracks: int
    attach_point: np.ndarray | None = None   # where the drone hangs, if attached


@dataclass
class ManeuverStep:
    setpoint: TrajectorySetpoint | None = None
    mmc_command: MmcCommand | None = None
    arm: bool | None = None
    attach: bool = False
    events: list = field(default_factory=list)
    done: bool = False
    failed: str | None = None


class Maneuver:
    name = "maneuver"
    phase = ""

    def tick(self, ctx: ManeuverContext) -> ManeuverStep:
        raise NotImplementedError


class Hover(Maneuver):
    name = "hover"

    def __init__(self, at: np.ndarray, yaw: float | None = None):
        self.at = np.asarray(at, float)
        self.yaw = yaw
        self.phase = "hold"

    def tick(self, ctx: ManeuverContext) -> ManeuverStep:
        return ManeuverStep(setpoint=TrajectorySetpoint(self.at, yaw=self.yaw))


class FlyToCable(Maneuver):
    """Move to a point offset below the tracked target cable."""

    name = "fly_to_cable"

    def __init__(self, config: FlightConfig, offset_below: float | None = None):
        self.config = config
        self.offset = offset_below if offset_below is not None else config.staging_offset
        self.phase = "transit"

    def tick(self, ctx: ManeuverContext) -> ManeuverStep:
        if ctx.target_point is None:
            return ManeuverStep(failed="target track lost")
        target = ctx.target_point - vec3(0, 0, self.offset)
        yaw_ref = cable_yaw(ctx.cable_direction, ctx.drone.yaw) \
            if ctx.cable_direction is not None else None
        sp = TrajectorySetpoint(target, yaw=yaw_ref)
        err = np.linalg.norm(ctx.drone.position - target)
        speed = np.linalg.norm(ctx.drone.velocity)
        done = err < self.config.settle_pos_tol and speed < self.config.settle_vel_tol
        return ManeuverStep(setpoint=sp, done=done)


class LandOnCable(Maneuver):
    """Stage below the cable, ascend into the guides, close, attach, disarm.

    ``lateral_offset`` shifts the commanded ascent corridor sideways from the
    tracked cable line (used to probe the capture envelope); the safety
    monitor aborts on deviation from the corridor, not from the cable.
    """

    name = "land_on_cable"

    STAGING = "staging"
    ASCENDING = "ascending"
    CAPTURE = "capture"

    def __init__(self, config: FlightConfig, lateral_offset: float = 0.0):
        self.config = config
        self.lateral_offset = lateral_offset
        self.phase = self.STAGING
        self.abort_count = 0
        self.attempts = 1
        self._ascend_z0 = None
        self._z_ref = None
        self._capture_t0 = None

    def _lateral_axis(self, direction: np.ndarray) -> np.ndarray:
        up = vec3(0, 0, 1)
        v = up - np.dot(up, direction) * direction
        v = v / np.linalg.norm(v)
        return np.cross(direction, v)

    def _abort(self, reason: str) -> ManeuverStep:
        self.abort_count += 1
        self.attempts += 1
        self.phase = self.STAGING
        self._ascend_z0 = None
        self._z_ref = None
        step = ManeuverStep(events=[f"landing_abort:{reason}"])
        cap = self.config.max_attempts
        if cap and self.attempts > cap:
            step.failed = f"aborted {self.abort_count} times: {reason}"
        return step

    def tick(self, ctx: ManeuverContext) -> ManeuverStep:
        cfg = self.config
        if ctx.target_point is None or ctx.cable_direction is None:
            return ManeuverStep(failed="target track lost")
        lat = self._lateral_axis(ctx.cable_direction)
        corridor = ctx.target_point + self.lateral_offset * lat
        yaw_ref = cable_yaw(ctx.cable_direction, ctx.drone.yaw)

        if self.phase == self.STAGING:
            target = corridor - vec3(0, 0, cfg.staging_offset)
            err = np.linalg.norm(ctx.drone.position - target)
            speed = np.linalg.norm(ctx.drone.velocity)
            yaw_err = abs((yaw_ref - ctx.drone.yaw + math.pi) % (2 * math.pi) - math.pi)
            if err < cfg.settle_pos_tol and speed < cfg.settle_vel_tol \
                    and yaw_err < math.radians(5.0):
                self.phase = self.ASCENDING
                self._ascend_z0 = float(ctx.drone.position[2])
                return ManeuverStep(
                    setpoint=TrajectorySetpoint(target, yaw=yaw_ref),
                    events=["ascent_start"],
                )
            return ManeuverStep(setpoint=TrajectorySetpoint(target, yaw=yaw_ref))

        if self.phase == self.ASCENDING:
            if self._z_ref is None:
                self._z_ref = float(ctx.drone.position[2])
            if ctx.gripper_state is GripperState.CLOSED:
                self.phase = self.CAPTURE
                self._capture_t0 = ctx.t
                return ManeuverStep(mmc_command=MmcCommand.CLOSED,
                                    events=["mechanical_closure"])
            lateral_err = float(np.dot(ctx.drone.position - corridor, lat))
            if abs(lateral_err) > cfg.safety_margin:
                return self._abort(f"safety margin {lateral_err:+.3f} m")
            climbed = float(ctx.drone.position[2]) - self._ascend_z0
            if climbed > cfg.ascent_budget:
                return self._abort("ascent budget exhausted")
            # the reference climbs at the capture speed along the corridor
            self._z_ref += cfg.ascent_speed * ctx.dt
            ref_pos = corridor.copy()
            ref_pos[2] = self._z_ref
            sp = TrajectorySetpoint(ref_pos,
                                    velocity=vec3(0, 0, cfg.ascent_speed),
                                    yaw=yaw_ref)
            return ManeuverStep(setpoint=sp)

        # capture: hold pose, wait for the sensed closure and holding force
        hold = TrajectorySetpoint(ctx.drone.position.copy(), yaw=yaw_ref)
        if (ctx.mmc_status is GripperStatus.CLOSED
                and ctx.holding_force >= ctx.drone.weight):
            return ManeuverStep(setpoint=hold, attach=True, arm=False,
                                events=["landed_on_cable"], done=True)
        if ctx.t - self._capture_t0 > cfg.capture_wait:
            step = self._abort("charger never confirmed closure")
            step.mmc_command = MmcCommand.OPEN
            return step
        return ManeuverStep(setpoint=hold, mmc_command=MmcCommand.CLOSED)


class TakeoffFromCable(Maneuver):
    """Arm, open the gripper, drop free of the cable, descend to the hover
    offset below the attachment point."""

    name = "takeoff_from_cable"

    ARM = "arm"
    RELEASE = "release"
    DESCEND = "descend"

    def __init__(self, config: FlightConfig, offset_below: float | None = None):
        self.config = config
        self.offset = offset_below if offset_below is not None else config.staging_offset
        self.phase = self.ARM
        self._hang_point = None

    def tick(self, ctx: ManeuverContext) -> ManeuverStep:
        cfg = self.config
        if self.phase == self.ARM:
            if not ctx.can_lift_off:
                return ManeuverStep(failed="below lift-off floor")
            self._hang_point = ctx.drone.position.copy()
            self.phase = self.RELEASE
            return ManeuverStep(arm=True, events=["armed_for_takeoff"])
        if self.phase == self.RELEASE:
            if not ctx.drone.attached and ctx.gripper_state is GripperState.OPEN:
                self.phase = self.DESCEND
                return ManeuverStep(events=["released_from_cable"])
            return ManeuverStep(
                mmc_command=MmcCommand.OPEN,
                setpoint=TrajectorySetpoint(self._hang_point),
            )
        target = self._hang_point - vec3(0, 0, self.offset)
        sp = TrajectorySetpoint(target)
        err = np.linalg.norm(ctx.drone.position - target)
        speed = np.linalg.norm(ctx.drone.velocity)
        done = err < cfg.settle_pos_tol and speed < cfg.settle_vel_tol
        return ManeuverStep(setpoint=sp, done=done,
                            events=["takeoff_complete"] if done else [])
