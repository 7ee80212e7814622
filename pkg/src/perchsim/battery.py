"""Battery model: state of charge, terminal voltage, hover draw, lift-off gate.

Energy bookkeeping is done over the usable window of the 7 Ah 6S pack
(155.4 Wh); soc=1.0 is a full pack and soc=0.45 is the lift-off floor below
which sagging voltage leaves too little thrust to take off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .world import GRAVITY

# Open-circuit voltage curve, (soc, volts). The knee between 0.55 and 0.75 is
# what makes the flight/charge voltage saw-tooth swing from <23 V under hover
# load up past 25.1 V on the charger.
DEFAULT_OCV_TABLE = (
    (0.00, 21.00),
    (0.20, 22.20),
    (0.45, 23.70),
    (0.55, 23.85),
    (0.75, 25.07),
    (1.00, 25.20),
)

LIFTOFF_SOC_FLOOR = 0.45
REFERENCE_MASS = 4.3  # kg
ENDURANCE_MIN = 7.5   # minutes of hover over the usable 55% window


@dataclass
class BatteryParams:
    capacity_ah: float = 7.0
    cells: int = 6
    nominal_cell_voltage: float = 3.7
    internal_resistance: float = 0.03  # ohm
    ocv_table: tuple = DEFAULT_OCV_TABLE

    def __post_init__(self):
        if self.capacity_ah <= 0:
            raise ValueError("capacity must be > 0")
        socs = [s for s, _ in self.ocv_table]
        volts = [v for _, v in self.ocv_table]
        if any(b <= a for a, b in zip(socs, socs[1:])) or any(
            b <= a for a, b in zip(volts, volts[1:])
        ):
            raise ValueError("ocv_table must be strictly increasing")

    @property
    def usable_energy_wh(self) -> float:
        return self.capacity_ah * self.cells * self.nominal_cell_voltage

    def ocv(self, soc: float) -> float:
        soc = min(max(soc, 0.0), 1.0)
        pts = self.ocv_table
        for (s0, v0), (s1, v1) in zip(pts, pts[1:]):
            if soc <= s1:
                return v0 + (v1 - v0) * (soc - s0) / (s1 - s0)
        return pts[-1][1]


@dataclass
class BatteryState:
    soc: float = 1.0
    terminal_voltage: float = 25.2
    energy_throughput_wh: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.soc <= 1.0:
            raise ValueError("soc must be in [0, 1]")


def hover_power(mass: float) -> float:
    """Constant hover draw in watts, momentum-theory scaled from the 4.3 kg
    reference which empties the usable window in 7.5 minutes."""
    if mass < 0:
        raise ValueError("mass must be >= 0")
    p_ref = (1.0 - LIFTOFF_SOC_FLOOR) * 155.4 / (ENDURANCE_MIN / 60.0)
    return p_ref * (mass / REFERENCE_MASS) ** 1.5


def terminal_voltage(params: BatteryParams, soc: float, net_power: float) -> float:
    """Loaded terminal voltage, solved consistently with I = |P|/V.

    Discharging sags below OCV, charging rides above it; the quadratic is the
    exact fixed point of v = ocv -/+ (P/v) * R.
    """
    ocv = params.ocv(soc)
    r = params.internal_resistance
    p = abs(net_power)
    if p < 1e-12:
        return ocv
    if net_power < 0:  # discharging
        disc = ocv * ocv - 4.0 * p * r
        if disc <= 0:
            return ocv / 2.0  # draw beyond the deliverable maximum; fully sagged
        return (ocv + math.sqrt(disc)) / 2.0
    return (ocv + math.sqrt(ocv * ocv + 4.0 * p * r)) / 2.0


def step_battery(
    state: BatteryState, params: BatteryParams, net_power: float, dt: float
) -> BatteryState:
    """Advance soc by net_power (+charge/-discharge, watts) over dt seconds."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    usable_wh = params.usable_energy_wh
    delta_soc = net_power * dt / 3600.0 / usable_wh
    soc = state.soc + delta_soc
    if soc > 1.0:
        delta_soc = 1.0 - state.soc
        soc = 1.0
    elif soc < 0.0:
        delta_soc = -state.soc
        soc = 0.0
    moved_wh = abs(delta_soc) * usable_wh
    # power actually exchanged after the clamp, for the voltage solve
    effective_power = 0.0 if dt == 0 else delta_soc * usable_wh * 3600.0 / dt
    v = terminal_voltage(params, soc, effective_power)
    return replace(
        state,
        soc=soc,
        terminal_voltage=v,
        energy_throughput_wh=state.energy_throughput_wh + moved_wh,
    )


def can_lift_off(state: BatteryState) -> bool:
    """True iff the pack is above the 45% lift-off floor."""
    return state.soc >= LIFTOFF_SOC_FLOOR


def thrust_accel_ceiling(state: BatteryState, accel_limit: float) -> float:
    """Thrust acceleration ceiling handed to the kinematics.

    Above the lift-off floor the full envelope is available; below it the
    sagged voltage caps thrust under weight, so the drone cannot climb.
    """
    if can_lift_off(state):
        return accel_limit + GRAVITY
    return 0.95 * GRAVITY
