"""Telemetry records, JSONL logging, run summaries, and CSV extracts.

The JSONL field order is frozen (schema v1, documented in README.md) so that
identical runs produce byte-identical logs. Summaries are recomputable from
the log alone; ``replay`` regenerates them without re-simulation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

CSV_SCHEMA_VERSION = "v1"

RECORD_FIELDS = (
    "step", "t", "mission_state", "maneuver", "maneuver_phase", "pos", "vel",
    "yaw", "altitude", "armed", "attached", "soc", "voltage", "net_power_w",
    "charging_power_w", "mmc_mode", "mmc_command", "gripper",
    "gripper_sensed", "holding_force_n", "im_mean_a", "ip_rms_a",
    "target_track", "confirmed_tracks", "abort_count", "cycle_count", "events",
)


@dataclass
class TelemetryRecord:
    step: int
    t: float
    mission_state: str
    maneuver: str | None
    maneuver_phase: str | None
    pos: tuple
    vel: tuple
    yaw: float
    altitude: float
    armed: bool
    attached: bool
    soc: float
    voltage: float
    net_power_w: float
    charging_power_w: float
    mmc_mode: str
    mmc_command: str
    gripper: str
    gripper_sensed: str
    holding_force_n: float
    im_mean_a: float
    ip_rms_a: float
    target_track: int | None
    confirmed_tracks: int
    abort_count: int
    cycle_count: int
    events: list

    def to_json(self) -> str:
        doc = {name: getattr(self, name) for name in RECORD_FIELDS}
        return json.dumps(doc, separators=(",", ":"))


def record_from_json(line: str) -> TelemetryRecord:
    doc = json.loads(line)
    doc["pos"] = tuple(doc["pos"])
    doc["vel"] = tuple(doc["vel"])
    return TelemetryRecord(**doc)


def read_jsonl(path: str):
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield record_from_json(line)


@dataclass
class CycleSummary:
    cycle: int
    t_start: float
    t_end: float
    flight_s: float
    charge_s: float
    energy_out_wh: float
    energy_in_wh: float
    v_min: float
    v_max: float
    soc_min: float
    soc_max: float
    aborts: int


@dataclass
class RunSummary:
    duration_s: float = 0.0
    steps: int = 0
    cycles_completed: int = 0
    abort_count: int = 0
    min_soc: float = 1.0
    final_soc: float = 1.0
    min_voltage: float = float("inf")
    max_voltage: float = 0.0
    mean_charging_power_w: float = 0.0
    energy_harvested_wh: float = 0.0
    energy_consumed_wh: float = 0.0
    per_cycle: list = field(default_factory=list)

    def to_dict(self) -> dict:
        doc = {k: getattr(self, k) for k in (
            "duration_s", "steps", "cycles_completed", "abort_count", "min_soc",
            "final_soc", "min_voltage", "max_voltage", "mean_charging_power_w",
            "energy_harvested_wh", "energy_consumed_wh")}
        doc["per_cycle"] = [vars(c) for c in self.per_cycle]
        return doc


class SummaryAccumulator:
    """Streaming reduction of the telemetry into a RunSummary."""

    FLIGHT_STATES = ("inspecting", "landing_on_cable", "taking_off_from_cable")

    def __init__(self, flight_dt: float):
        self.dt = flight_dt
        self.summary = RunSummary()
        self._charge_power_sum = 0.0
        self._charge_steps = 0
        self._cycle = None
        self._abort_total = 0

    def _open_cycle(self, rec: TelemetryRecord):
        self._cycle = CycleSummary(
            cycle=len(self.summary.per_cycle) + 1, t_start=rec.t, t_end=rec.t,
            flight_s=0.0, charge_s=0.0, energy_out_wh=0.0, energy_in_wh=0.0,
            v_min=rec.voltage, v_max=rec.voltage, soc_min=rec.soc,
            soc_max=rec.soc, aborts=0,
        )

    def add(self, rec: TelemetryRecord) -> None:
        s = self.summary
        s.steps += 1
        s.duration_s = rec.t
        s.final_soc = rec.soc
        s.min_soc = min(s.min_soc, rec.soc)
        s.min_voltage = min(s.min_voltage, rec.voltage)
        s.max_voltage = max(s.max_voltage, rec.voltage)
        s.abort_count = rec.abort_count
        s.cycles_completed = rec.cycle_count
        if rec.charging_power_w > 0.0:
            s.energy_harvested_wh += rec.charging_power_w * self.dt / 3600.0
        if rec.net_power_w < 0.0:
            s.energy_consumed_wh += -rec.net_power_w * self.dt / 3600.0
        if rec.mission_state == "charging":
            self._charge_power_sum += rec.charging_power_w
            self._charge_steps += 1
            s.mean_charging_power_w = self._charge_power_sum / self._charge_steps

        if rec.mission_state == "idle":
            return
        if self._cycle is None:
            self._open_cycle(rec)
        c = self._cycle
        c.t_end = rec.t
        c.v_min = min(c.v_min, rec.voltage)
        c.v_max = max(c.v_max, rec.voltage)
        c.soc_min = min(c.soc_min, rec.soc)
        c.soc_max = max(c.soc_max, rec.soc)
        if rec.mission_state in self.FLIGHT_STATES:
            c.flight_s += self.dt
        elif rec.mission_state == "charging":
            c.charge_s += self.dt
            c.energy_in_wh += max(rec.net_power_w, 0.0) * self.dt / 3600.0
        if rec.net_power_w < 0.0:
            c.energy_out_wh += -rec.net_power_w * self.dt / 3600.0
        for ev in rec.events:
            if ev.startswith("landing_abort"):
                c.aborts += 1
        if any(ev.startswith("cycle_complete") for ev in rec.events):
            self.summary.per_cycle.append(c)
            self._cycle = None


def summarize_records(records, flight_dt: float) -> RunSummary:
    acc = SummaryAccumulator(flight_dt)
    for rec in records:
        acc.add(rec)
    return acc.summary


def summarize_jsonl(path: str, flight_dt: float) -> RunSummary:
    return summarize_records(read_jsonl(path), flight_dt)


# --------------------------------------------------------------------------
# CSV extracts (Fig. 11-14 style), versioned header row.


def _write_csv(path: str, name: str, header: list, rows) -> None:
    with open(path, "w") as fh:
        fh.write(f"# perchsim {name} {CSV_SCHEMA_VERSION}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(x) for x in row) + "\n")


def write_altitude_csv(path: str, records, decimate: int = 10) -> None:
    rows = ((r.t, r.altitude, r.mission_state) for i, r in enumerate(records)
            if i % decimate == 0)
    _write_csv(path, "altitude_trace", ["t_s", "altitude_m", "mission_state"], rows)


def write_power_csv(path: str, records, decimate: int = 10) -> None:
    rows = ((r.t, r.voltage, r.soc, r.charging_power_w, r.mmc_mode)
            for i, r in enumerate(records) if i % decimate == 0)
    _write_csv(path, "voltage_power_trace",
               ["t_s", "voltage_v", "soc", "charging_power_w", "mmc_mode"], rows)


def write_trajectory_csv(path: str, records) -> None:
    rows = ((r.t, r.pos[0], r.pos[1], r.pos[2], r.maneuver or "",
             r.maneuver_phase or "", r.abort_count)
            for r in records
            if r.maneuver in ("land_on_cable", "takeoff_from_cable"))
    _write_csv(path, "landing_trajectories",
               ["t_s", "x_m", "y_m", "z_m", "maneuver", "phase", "abort_count"], rows)


def write_cycles_csv(path: str, summary: RunSummary) -> None:
    rows = ((c.cycle, c.t_start, c.t_end, c.flight_s, c.charge_s,
             c.energy_out_wh, c.energy_in_wh, c.v_min, c.v_max, c.soc_min,
             c.soc_max, c.aborts) for c in summary.per_cycle)
    _write_csv(path, "cycle_summaries",
               ["cycle", "t_start_s", "t_end_s", "flight_s", "charge_s",
                "energy_out_wh", "energy_in_wh", "v_min", "v_max", "soc_min",
                "soc_max", "aborts"], rows)
