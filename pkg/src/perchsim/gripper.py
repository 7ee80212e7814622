"""Passive split-core gripper: capture envelope and open/engaged/closed
progression driven purely by drone-cable relative motion.

The mechanism needs no sensor: reaching the closed state is itself the
landing-success signal. The cable guides funnel up to 22.5 cm of lateral
misalignment toward the core as the drone ascends.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

from .world import DroneState


class GripperState(Enum):
    OPEN = "open"
    ENGAGED = "engaged"
    CLOSED = "closed"


@dataclass
class GripperGeometry:
    guide_tip_separation: float = 0.45
    engage_depth: float = 0.20        # ribbon contact, below the guide mouth
    closure_stroke: float = 0.10      # further ascent to fully close
    closure_force_required: float = 2.0   # N; always available from thrust
    max_roll_misalignment_deg: float = 15.0

    def __post_init__(self):
        for name in ("guide_tip_separation", "engage_depth", "closure_stroke"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")

    @property
    def max_misalignment(self) -> float:
        return self.guide_tip_separation / 2.0

    @property
    def attach_height(self) -> float:
        """Cable height above the gripper reference once fully closed."""
        return self.engage_depth - self.closure_stroke


@dataclass
class GripperUpdate:
    state: GripperState
    engagement_progress: float
    lateral_pull: float   # sideways correction the guides impose on the airframe


def update_mechanism(
    state: GripperState,
    geometry: GripperGeometry,
    lateral_error: float,
    cable_height: float,
    vertical_velocity: float,
    roll_misalignment_deg: float = 0.0,
) -> GripperUpdate:
    """Advance the passive mechanism from the drone-cable relative kinematics.

    ``lateral_error`` is measured in the cross-section plane between the
    gripper centerline and the cable; ``cable_height`` is how far the cable
    sits above the gripper reference point.
    """
    g = geometry
    if state is GripperState.CLOSED:
        return GripperUpdate(state, 1.0, 0.0)   # reopening is the circuit's job

    in_guides = (
        abs(lateral_error) <= g.max_misalignment
        and abs(roll_misalignment_deg) <= g.max_roll_misalignment_deg
        and g.attach_height < cable_height <= g.engage_depth
    )
    if state is GripperState.OPEN:
        if in_guides and vertical_velocity > 0.0:
            progress = (g.engage_depth - cable_height) / g.closure_stroke
            return GripperUpdate(GripperState.ENGAGED, max(progress, 0.0), 0.0)
        return GripperUpdate(GripperState.OPEN, 0.0, 0.0)

    # engaged: the ribbon follows the ascent; descending back out reopens
    if cable_height > g.engage_depth:
        return GripperUpdate(GripperState.OPEN, 0.0, 0.0)
    progress = (g.engage_depth - cable_height) / g.closure_stroke
    progress = min(max(progress, 0.0), 1.0)
    if cable_height <= g.attach_height:
        return GripperUpdate(GripperState.CLOSED, 1.0, lateral_error)
    # the guide slope walks the airframe sideways onto the cable line
    allowed = g.max_misalignment * (1.0 - progress)
    pull = 0.0
    if abs(lateral_error) > allowed:
        pull = lateral_error - math.copysign(allowed, lateral_error)
    return GripperUpdate(GripperState.ENGAGED, progress, pull)


def attach(drone: DroneState, holding_force: float, gripper: GripperState) -> DroneState:
    """Hand the drone pose over to the cable attachment."""
    if gripper is not GripperState.CLOSED:
        raise RuntimeError("attach requires a closed gripper")
    if holding_force < drone.weight:
        raise RuntimeError(
            f"holding force {holding_force:.1f} N below weight {drone.weight:.1f} N; "
            "the drone must keep thrusting"
        )
    return replace(drone, attached=True)


def detach(drone: DroneState, gripper: GripperState) -> DroneState:
    """Release the pose back to free flight. Detaching disarmed means free fall."""
    if gripper is not GripperState.OPEN:
        raise RuntimeError("detach requires the gripper to have opened")
    return replace(drone, attached=False)
