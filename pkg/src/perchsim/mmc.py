"""Magnetic Manipulating Circuit: mode selection, AC-hold switching, transfer
window optimization, quick open, and gripper-status sensing.

The controller runs once per line cycle on the cycle statistics produced by
the circuit runner and returns the switch schedule for the next cycle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

from .circuit import (
    SQRT2,
    CircuitParams,
    CycleStats,
    Schedule,
    SCHED_OPEN_DRIVE,
    SCHED_REGULATE,
    SCHED_SHORT,
    SCHED_WINDOW,
)


class MmcMode(Enum):
    MODE1_DC = "mode1_dc"
    MODE2_CHARGING = "mode2_charging"
    MODE3_AC_HOLD = "mode3_ac_hold"
    OPENING = "opening"
    IDLE = "idle"


class MmcCommand(Enum):
    OPEN = "open"
    CLOSED = "closed"


class GripperStatus(Enum):
    OPEN = "open"
    CLOSED = "closed"


@dataclass
class MmcConfig:
    ip_hold_min: float = 40.0        # A RMS below which the AC field cannot hold
    v_full: float = 25.2             # battery voltage treated as fully charged
    hold_current: float = 0.2        # mode-1 DC setpoint, A
    mode3_hold_current: float = 0.12  # AC-hold target, A
    mode3_gain: float = 0.3          # width-servo gain, rad per A of error
    release_force: float = 0.5       # N; passive core falls open below this
    noise_floor_frac: float = 0.005
    ip_nominal: float = 288.0        # A RMS, sizes the sensing noise floor
    pno_step_deg: float = 1.0
    window_min_width_deg: float = 2.0
    window_max_width_deg: float = 54.0
    open_style: str = "quick"        # "quick" or "naive"


@dataclass
class TransferWindow:
    """SW1-open interval within the positive half of the line cycle, radians."""

    start_phase: float
    width: float
    step_size: float = math.radians(1.0)

    def clipped(self, min_width: float, max_width: float) -> "TransferWindow":
        width = min(max(self.width, min_width), max_width, math.pi)
        start = min(max(self.start_phase, 0.0), math.pi - width)
        return replace(self, start_phase=start, width=width)


def select_mode(cmd: MmcCommand, ip_rms: float, battery_voltage: float,
                config: MmcConfig) -> MmcMode:
    """Operating mode from the latched command, line current and battery."""
    if cmd is MmcCommand.OPEN:
        return MmcMode.OPENING
    if ip_rms < config.ip_hold_min:
        return MmcMode.MODE1_DC
    if battery_voltage < config.v_full:
        return MmcMode.MODE2_CHARGING
    return MmcMode.MODE3_AC_HOLD


def mode3_switch_schedule(window: TransferWindow, t_phase: float,
                          line_frequency: float = 50.0) -> bool:
    """SW1 state at ``t_phase`` seconds into the cycle; True means closed.

    SW1 is open only inside the transfer window, which always lies in the
    positive half-cycle; the entire negative half-cycle is shorted.
    """
    phase = (2.0 * math.pi * line_frequency * t_phase) % (2.0 * math.pi)
    if phase > math.pi:
        return True
    return not (window.start_phase <= phase < window.start_phase + window.width)


@dataclass
class PnoState:
    """Perturb-and-observe bookkeeping: one parameter stepped per cycle."""

    window: TransferWindow
    param_index: int = 0              # parameter perturbed in the last step
    directions: tuple = (1.0, 1.0)    # (start_phase, width)
    last_power: float | None = None


def pno_step(state: PnoState, observed_power_prev: float, observed_power_now: float,
             min_width: float, max_width: float) -> PnoState:
    """One P&O update: keep the direction that raised power, else reverse,
    then perturb the other parameter by its step size."""
    dirs = list(state.directions)
    if observed_power_now < observed_power_prev:
        dirs[state.param_index] = -dirs[state.param_index]
    nxt = (state.param_index + 1) % 2
    w = state.window
    step = w.step_size * dirs[nxt]
    if nxt == 0:
        w = replace(w, start_phase=w.start_phase + step)
    else:
        w = replace(w, width=w.width + step)
    w = w.clipped(min_width, max_width)
    return PnoState(window=w, param_index=nxt, directions=tuple(dirs),
                    last_power=observed_power_now)


def sense_gripper_status(mode: MmcMode, stats: CycleStats, params: CircuitParams,
                         config: MmcConfig) -> GripperStatus:
    """Line-presence sensing per operating mode against the noise floor."""
    expected_branch = (2.0 / math.pi) * SQRT2 * config.ip_nominal / params.turns
    if mode is MmcMode.MODE2_CHARGING:
        signal = stats.harvested_w
        expected = params.output_voltage * SQRT2 * config.ip_nominal / (math.pi * params.turns)
    elif mode is MmcMode.MODE1_DC:
        signal = stats.branch_ac_mean
        expected = expected_branch
    elif mode is MmcMode.MODE3_AC_HOLD:
        signal = stats.closed_branch_abs_mean
        expected = expected_branch
    else:  # idle / opening: whichever branch is live carries the line signature
        signal = max(stats.closed_branch_abs_mean, stats.branch_ac_mean)
        expected = expected_branch
    if signal >= config.noise_floor_frac * expected:
        return GripperStatus.CLOSED
    return GripperStatus.OPEN


@dataclass
class MmcTelemetry:
    battery_voltage: float = 0.0
    charging_power: float = 0.0
    gripper_status: GripperStatus = GripperStatus.OPEN
    mode: MmcMode = MmcMode.IDLE


class MmcController:
    """Per-cycle control of the circuit runner's switch schedule."""

    def __init__(self, params: CircuitParams, config: MmcConfig | None = None,
                 line_frequency: float = 50.0):
        self.params = params
        self.config = config or MmcConfig()
        self.omega = 2.0 * math.pi * line_frequency
        self.command = MmcCommand.OPEN
        self.mode = MmcMode.IDLE
        self.battery_voltage = 0.0
        self.ip_rms_est = 0.0
        self.released = True          # passive core starts open
        self.opening_cycles = 0
        step = math.radians(self.config.pno_step_deg)
        self.pno = PnoState(
            window=TransferWindow(math.radians(30.0), math.radians(20.0), step)
        )
        self.mode3_width = math.radians(10.0)
        self.telemetry = MmcTelemetry()

    # -- commands ------------------------------------------------------------

    def command_gripper(self, cmd: MmcCommand) -> None:
        if cmd is self.command:
            return
        self.command = cmd
        if cmd is MmcCommand.CLOSED:
            self.released = False
        else:
            self.opening_cycles = 0

    def notify_released(self) -> None:
        self.released = True

    # -- per-cycle control ---------------------------------------------------

    def on_cycle(self, stats: CycleStats) -> Schedule:
        cfg = self.config
        self.ip_rms_est = stats.is_abs_mean * math.pi * self.params.turns / (2.0 * SQRT2)
        status = sense_gripper_status(self.mode, stats, self.params, cfg)
        if self.command is MmcCommand.OPEN:
            new_mode = MmcMode.IDLE if self.released else MmcMode.OPENING
        else:
            new_mode = select_mode(self.command, self.ip_rms_est,
                                   self.battery_voltage, cfg)
        if new_mode is not MmcMode.MODE2_CHARGING:
            self.pno = replace(self.pno, last_power=None)
        if new_mode is MmcMode.OPENING:
            if self.mode is MmcMode.OPENING:
                self.opening_cycles += 1
            else:
                self.opening_cycles = 0
        self.mode = new_mode
        self.telemetry = MmcTelemetry(
            battery_voltage=self.battery_voltage,
            charging_power=stats.harvested_w,
            gripper_status=status,
            mode=new_mode,
        )
        return self._schedule_for(new_mode, stats)

    def _schedule_for(self, mode: MmcMode, stats: CycleStats) -> Schedule:
        cfg = self.config
        if mode is MmcMode.IDLE:
            return Schedule(kind=SCHED_SHORT)
        if mode is MmcMode.MODE1_DC:
            return Schedule(kind=SCHED_REGULATE, drive_setpoint=cfg.hold_current)
        if mode is MmcMode.OPENING:
            if cfg.open_style == "naive":
                return Schedule(kind=SCHED_SHORT,
                                release_below_force=cfg.release_force)
            if self.opening_cycles == 0:
                return Schedule(kind=SCHED_OPEN_DRIVE, watch_crossing=True)
            # a full cycle passed without an I_m zero: plain short-circuit
            # decay, still latching at any crossing the ripple produces
            return Schedule(kind=SCHED_SHORT, watch_crossing=True,
                            release_below_force=cfg.release_force)
        if mode is MmcMode.MODE2_CHARGING:
            if self.pno.last_power is not None:
                self.pno = pno_step(
                    self.pno, self.pno.last_power, stats.harvested_w,
                    math.radians(cfg.window_min_width_deg),
                    math.radians(cfg.window_max_width_deg),
                )
            else:
                self.pno = replace(self.pno, last_power=stats.harvested_w)
            w = self.pno.window
            return Schedule(kind=SCHED_WINDOW, t0=w.start_phase / self.omega,
                            t1=(w.start_phase + w.width) / self.omega)
        # mode 3: servo the window width to hold the magnetizing current
        err = cfg.mode3_hold_current - stats.im_mean
        self.mode3_width = min(
            max(self.mode3_width + cfg.mode3_gain * err, 0.0),
            math.radians(cfg.window_max_width_deg),
        )
        return Schedule(kind=SCHED_WINDOW, t0=0.0, t1=self.mode3_width / self.omega)
