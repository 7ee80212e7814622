"""Split-core current-transformer equivalent circuit.

The transformer is reduced to an ideal reflected current source
``i_s = I_p / N`` in parallel with the magnetizing inductance ``L_m``,
switched between three branches:

* SW1 closed: the winding is shorted through ``R_w``; the short branch
  carries ``i_s - I_m`` and ``L_m dI_m/dt = R_w (i_s - I_m)``.
* SW1 open: a bridge clamps the winding at the regulated bus voltage; the
  load branch carries ``i_load = i_s - I_m`` (either polarity feeds the bus)
  and ``I_m`` slews at ``v_bus / L_m`` toward ``i_s``.
* SW2 closed (DC drive): an ideal battery-fed regulator servos ``I_m`` to a
  setpoint, dissipating ``I_m^2 R_w`` from the pack.

The magnetic holding force is the quadratic proxy
``k_f * (cycle-averaged |I_m|)^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

SQRT2 = math.sqrt(2.0)


def line_current(t: float, rms: float, f: float) -> float:
    """Instantaneous primary line current for an RMS level at 50/60 Hz."""
    if rms < 0:
        raise ValueError("rms must be >= 0")
    return SQRT2 * rms * math.sin(2.0 * math.pi * f * t)


@dataclass
class CircuitParams:
    turns: float = 33.0                 # calibrated against the 15 W / 181 W anchors
    magnetizing_inductance: float = 2.0  # H
    winding_resistance: float = 5.0      # ohm
    force_constant: float = 3500.0       # N/A^2
    output_voltage: float = 25.2         # regulated bus, V

    def __post_init__(self):
        for name in ("turns", "magnetizing_inductance", "winding_resistance",
                     "force_constant", "output_voltage"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")

    @property
    def slew(self) -> float:
        """Bridge-clamped dI_m/dt magnitude, A/s."""
        return self.output_voltage / self.magnetizing_inductance

    @property
    def tau(self) -> float:
        """Shorted-winding decay time constant L_m / R_w, seconds."""
        return self.magnetizing_inductance / self.winding_resistance


@dataclass
class CircuitState:
    """Instantaneous transformer quantities plus the last cycle averages."""

    ip_inst: float = 0.0
    im: float = 0.0
    i_load: float = 0.0
    sw1: bool = True
    sw2: bool = False
    harvested_power: float = 0.0   # last cycle average, W
    im_abs_cycle: float = 0.0      # last cycle average of |I_m|, A
    t_phase: float = 0.0           # seconds within the current line cycle


def step_circuit(
    state: CircuitState,
    params: CircuitParams,
    sw1_cmd: bool,
    sw2_cmd: bool,
    dt: float,
    i_s: float = 0.0,
    drive_setpoint: float = 0.0,
    drive_tau: float = 0.005,
) -> CircuitState:
    """Advance the circuit one explicit-Euler substep of at most 1e-4 s.

    ``i_s`` is the reflected source current for this substep. Returns the new
    state; ``i_load`` is the load-branch current over the step (zero whenever
    SW1 is closed).
    """
    if dt <= 0 or dt > 1e-4 + 1e-12:
        raise ValueError("dt must be in (0, 1e-4] for stable explicit integration")
    L = params.magnetizing_inductance
    R = params.winding_resistance
    im = state.im
    if sw2_cmd:
        # battery-fed regulator servos I_m; the charger path is inactive
        im_new = im + (drive_setpoint - im) * (dt / drive_tau)
        i_load = 0.0
    elif sw1_cmd:
        im_new = im + (R / L) * (i_s - im) * dt
        i_load = 0.0
    else:
        i_load = i_s - im
        step = params.slew * dt
        if abs(i_load) <= step:
            im_new = i_s  # slid onto the source; bridge current vanishes
        else:
            im_new = im + math.copysign(step, i_load)
    return replace(
        state,
        ip_inst=i_s * params.turns,
        im=im_new,
        i_load=i_load if not sw1_cmd and not sw2_cmd else 0.0,
        sw1=sw1_cmd,
        sw2=sw2_cmd,
        t_phase=state.t_phase + dt,
    )


def holding_force(state: CircuitState, params: CircuitParams, gripper_closed: bool) -> float:
    """Magnetic holding force from the cycle-averaged magnetizing current."""
    if not gripper_closed:
        return 0.0
    return params.force_constant * state.im_abs_cycle ** 2


def cycle_average_power(i_load_samples, params: CircuitParams) -> float:
    """Mean harvested power of a full cycle of load-branch current samples."""
    arr = np.asarray(i_load_samples, dtype=float)
    if arr.size == 0:
        raise ValueError("need a full cycle of samples")
    return params.output_voltage * float(np.mean(np.abs(arr)))


# --------------------------------------------------------------------------
# Switch schedules handed to the runner, one line cycle at a time.

SCHED_SHORT = "short"          # SW1 closed all cycle
SCHED_WINDOW = "window"        # SW1 open inside [t0, t1), closed otherwise
SCHED_OPEN_DRIVE = "open"      # SW1 open all cycle (bridge drives I_m toward i_s)
SCHED_REGULATE = "regulate"    # SW2 battery drive to a DC setpoint


@dataclass
class Schedule:
    kind: str = SCHED_SHORT
    t0: float = 0.0
    t1: float = 0.0
    drive_setpoint: float = 0.0
    watch_crossing: bool = False      # latch SW1 + release at the next I_m zero
    release_below_force: float = 0.0  # N; passive release once flux has decayed


@dataclass
class CycleStats:
    """Time-weighted averages over one completed line cycle."""

    t_end: float = 0.0
    im_mean: float = 0.0
    im_abs_mean: float = 0.0
    is_abs_mean: float = 0.0
    branch_ac_mean: float = 0.0        # mean |branch - previous cycle DC|
    closed_branch_abs_mean: float = 0.0
    harvested_w: float = 0.0
    drive_w: float = 0.0
    crossed_zero: bool = False


class CircuitRunner:
    """Substep integrator with a vectorized fast path for shorted spans.

    The runner owns the circuit state between flight steps. ``on_cycle`` is
    called at every line-cycle boundary with the finished ``CycleStats`` and
    must return the ``Schedule`` for the next cycle.
    """

    def __init__(self, params: CircuitParams, line_frequency: float = 50.0,
                 dt: float = 1e-4, on_cycle=None):
        period = 1.0 / line_frequency
        n = period / dt
        if abs(n - round(n)) > 1e-9:
            raise ValueError("circuit_dt must divide the line period exactly")
        self.params = params
        self.f = line_frequency
        self.dt = dt
        self.period = period
        self.n_per_cycle = int(round(n))
        self.omega = 2.0 * math.pi * line_frequency
        self.sin_table = np.sin(self.omega * dt * np.arange(self.n_per_cycle))
        # powers of the shorted-decay factor for the vectorized unroll
        a = 1.0 - (params.winding_resistance / params.magnetizing_inductance) * dt
        self._a = a
        self._a_pow = a ** np.arange(1, self.n_per_cycle + 1)
        self.on_cycle = on_cycle
        self.schedule = Schedule()
        self.im = 0.0
        self.k = 0                    # substep index within the cycle
        self.t = 0.0                  # absolute time, advanced by dt per substep
        self.released_at: float | None = None
        self.last_cycle = CycleStats()
        self._branch_dc_prev = 0.0
        self._reset_accum()

    # -- accumulator plumbing ------------------------------------------------

    def _reset_accum(self):
        self._acc_t = 0.0
        self._acc_im = 0.0
        self._acc_abs_im = 0.0
        self._acc_abs_is = 0.0
        self._acc_branch = 0.0
        self._acc_branch_dev = 0.0
        self._acc_closed_abs_branch = 0.0
        self._acc_harvest = 0.0       # joules
        self._acc_drive = 0.0         # joules
        self._crossed = False

    def _account_array(self, im_starts: np.ndarray, i_s: np.ndarray, h: float,
                       closed: bool):
        branch = i_s - im_starts
        self._acc_t += im_starts.size * h
        self._acc_im += float(np.sum(im_starts)) * h
        self._acc_abs_im += float(np.sum(np.abs(im_starts))) * h
        self._acc_abs_is += float(np.sum(np.abs(i_s))) * h
        self._acc_branch += float(np.sum(branch)) * h
        self._acc_branch_dev += float(np.sum(np.abs(branch - self._branch_dc_prev))) * h
        if closed:
            self._acc_closed_abs_branch += float(np.sum(np.abs(branch))) * h

    def _account_scalar(self, im: float, i_s: float, h: float, closed: bool):
        branch = i_s - im
        self._acc_t += h
        self._acc_im += im * h
        self._acc_abs_im += abs(im) * h
        self._acc_abs_is += abs(i_s) * h
        self._acc_branch += branch * h
        self._acc_branch_dev += abs(branch - self._branch_dc_prev) * h
        if closed:
            self._acc_closed_abs_branch += abs(branch) * h

    def _finish_cycle(self):
        T = self.period
        branch_dc = self._acc_branch / T
        stats = CycleStats(
            t_end=self.t,
            im_mean=self._acc_im / T,
            im_abs_mean=self._acc_abs_im / T,
            is_abs_mean=self._acc_abs_is / T,
            branch_ac_mean=self._acc_branch_dev / T,
            closed_branch_abs_mean=self._acc_closed_abs_branch / T,
            harvested_w=self._acc_harvest / T,
            drive_w=self._acc_drive / T,
            crossed_zero=self._crossed,
        )
        self._branch_dc_prev = branch_dc
        self.last_cycle = stats
        self._reset_accum()
        threshold = self.schedule.release_below_force
        if (threshold > 0.0 and self.released_at is None
                and self.params.force_constant * self.im * self.im < threshold):
            self._release(self.t)
            self.im = 0.0  # core halves separate; the magnetizing path is gone
        if self.on_cycle is not None:
            new_sched = self.on_cycle(stats)
            if new_sched is not None:
                self.schedule = new_sched

    # -- integration primitives ----------------------------------------------

    def _closed_span(self, i_s_arr: np.ndarray):
        """Vectorized shorted-winding run over whole substeps."""
        n = i_s_arr.size
        if n == 0:
            return
        a = self._a
        powers = self._a_pow[:n]
        b = (1.0 - a) * i_s_arr
        c = np.cumsum(b / powers)
        traj = powers * (self.im + c)
        starts = np.empty(n)
        starts[0] = self.im
        starts[1:] = traj[:-1]
        self._account_array(starts, i_s_arr, self.dt, closed=True)
        if self.schedule.watch_crossing and self.released_at is None:
            signs = np.sign(np.concatenate(([self.im], traj)))
            flips = np.nonzero(np.diff(signs) != 0)[0]
            if flips.size:
                self._crossed = True
                self._release(self.t + (int(flips[0]) + 1) * self.dt)
                # the latch lands exactly on the zero; the core pops open there
                # and the source is cut, so the flux stays collapsed
                traj[int(flips[0]):] = 0.0
        self.im = float(traj[-1])

    def _closed_piece(self, i_s0: float, h: float):
        im = self.im
        self._account_scalar(im, i_s0, h, closed=True)
        self.im = im + (1.0 - self._a) * (i_s0 - im) * (h / self.dt)

    def _open_piece(self, i_s0: float, h: float, t_start: float):
        """Bridge-clamped piece: harvest |i_s - I_m| and slew I_m toward i_s."""
        im = self.im
        i_load = i_s0 - im
        self._account_scalar(im, i_s0, h, closed=False)
        self._acc_harvest += self.params.output_voltage * abs(i_load) * h
        step = self.params.slew * h
        if abs(i_load) <= step:
            im_new = i_s0
        else:
            im_new = im + math.copysign(step, i_load)
        if (self.schedule.watch_crossing and self.released_at is None and im != 0.0
                and (im * im_new < 0.0 or im_new == 0.0)):
            self._crossed = True
            self._release(t_start + h * abs(im) / max(abs(im - im_new), 1e-30))
            im_new = 0.0
        self.im = im_new

    def _regulate_span(self, i_s_arr: np.ndarray, setpoint: float, tau: float):
        n = i_s_arr.size
        if n == 0:
            return
        decay = np.exp(-self.dt * np.arange(1, n + 1) / tau)
        traj = setpoint + (self.im - setpoint) * decay
        starts = np.empty(n)
        starts[0] = self.im
        starts[1:] = traj[:-1]
        self._account_array(starts, i_s_arr, self.dt, closed=False)
        self._acc_drive += float(np.sum(starts ** 2)) * self.params.winding_resistance * self.dt
        self.im = float(traj[-1])

    def _release(self, t_abs: float):
        self.released_at = t_abs

    def resync(self, t: float, k: int) -> None:
        """Jump the dormant circuit onto the global clock before re-engaging."""
        self.t = t
        self.k = int(k) % self.n_per_cycle
        self.released_at = None
        self._reset_accum()

    def snapshot(self, ip_rms: float = 0.0, coupled: bool = False) -> CircuitState:
        sched = self.schedule
        ip_pk = SQRT2 * ip_rms if coupled else 0.0
        return CircuitState(
            ip_inst=ip_pk * math.sin(self.omega * self.k * self.dt),
            im=self.im,
            i_load=0.0,
            sw1=sched.kind in (SCHED_SHORT, SCHED_REGULATE),
            sw2=sched.kind == SCHED_REGULATE,
            harvested_power=self.last_cycle.harvested_w,
            im_abs_cycle=self.last_cycle.im_abs_mean,
            t_phase=self.k * self.dt,
        )

    # -- public stepping -----------------------------------------------------

    def advance(self, n_substeps: int, ip_rms: float, coupled: bool) -> dict:
        """Run ``n_substeps`` substeps; returns span totals for the battery.

        ``coupled`` gates the reflected source: an open core sees no line
        current regardless of the configured RMS level.
        """
        harvest_j = 0.0
        drive_j = 0.0
        remaining = n_substeps
        while remaining > 0:
            chunk = min(remaining, self.n_per_cycle - self.k)
            h0, d0 = self._acc_harvest, self._acc_drive
            self._run_chunk(chunk, ip_rms, coupled)
            harvest_j += self._acc_harvest - h0
            drive_j += self._acc_drive - d0
            remaining -= chunk
            if self.k >= self.n_per_cycle:
                self.k = 0
                self._finish_cycle()
        return {"harvest_j": harvest_j, "drive_j": drive_j}

    def _run_chunk(self, n: int, ip_rms: float, coupled: bool):
        """Advance n whole substeps inside the current cycle."""
        k0, k1 = self.k, self.k + n
        ip_pk = SQRT2 * ip_rms / self.params.turns if coupled else 0.0
        if self.released_at is not None:
            ip_pk = 0.0
        i_s_arr = ip_pk * self.sin_table[k0:k1]
        sched = self.schedule
        if sched.kind == SCHED_REGULATE:
            self._regulate_span(i_s_arr, sched.drive_setpoint, 0.005)
        elif sched.kind == SCHED_OPEN_DRIVE:
            for j in range(n):
                if self.released_at is not None:
                    self._closed_piece(0.0, self.dt)
                else:
                    self._open_piece(float(i_s_arr[j]), self.dt, self.t + j * self.dt)
        elif sched.kind == SCHED_WINDOW and ip_pk != 0.0 and self.released_at is None:
            self._window_chunk(k0, k1, ip_pk, i_s_arr, sched)
        else:
            self._closed_span(i_s_arr)
        self.k = k1
        self.t += n * self.dt

    def _window_chunk(self, k0: int, k1: int, ip_pk: float, i_s_arr: np.ndarray,
                      sched: Schedule):
        """Mixed shorted/open chunk, split exactly at the window edges.

        Whole substeps strictly outside the window run on the vectorized
        shorted path; the window interior runs as an inlined piece loop split
        at substep boundaries. Window schedules never watch zero crossings.
        """
        dt = self.dt
        t0 = min(max(sched.t0, k0 * dt), k1 * dt)
        t1 = min(max(sched.t1, t0), k1 * dt)
        ka = int(math.floor(t0 / dt + 1e-9))          # substep containing the left edge
        kb = int(math.ceil(t1 / dt - 1e-9))           # first whole substep after the window
        self._closed_span(i_s_arr[: ka - k0])
        if t0 - ka * dt > 1e-15:
            self._closed_piece(ip_pk * math.sin(self.omega * ka * dt), t0 - ka * dt)
        # open interior, inlined for speed
        im = self.im
        slew = self.params.slew
        dc = self._branch_dc_prev
        sin = math.sin
        om = self.omega
        acc_t = acc_im = acc_abs_im = acc_abs_is = acc_branch = acc_dev = 0.0
        harvest = 0.0
        pos = t0
        while pos < t1 - 1e-15:
            k_here = int(pos / dt + 1e-9)
            nxt = (k_here + 1) * dt
            if nxt > t1:
                nxt = t1
            h = nxt - pos
            i_s0 = ip_pk * sin(om * pos)
            i_load = i_s0 - im
            acc_t += h
            acc_im += im * h
            acc_abs_im += (im if im >= 0 else -im) * h
            acc_abs_is += (i_s0 if i_s0 >= 0 else -i_s0) * h
            acc_branch += i_load * h
            d = i_load - dc
            acc_dev += (d if d >= 0 else -d) * h
            harvest += (i_load if i_load >= 0 else -i_load) * h
            step = slew * h
            if -step <= i_load <= step:
                im = i_s0
            else:
                im = im + (step if i_load > 0 else -step)
            pos = nxt
        self.im = im
        self._acc_t += acc_t
        self._acc_im += acc_im
        self._acc_abs_im += acc_abs_im
        self._acc_abs_is += acc_abs_is
        self._acc_branch += acc_branch
        self._acc_branch_dev += acc_dev
        self._acc_harvest += self.params.output_voltage * harvest
        # tail fraction of the substep containing the right edge
        if kb * dt - t1 > 1e-15:
            self._closed_piece(ip_pk * math.sin(self.omega * t1), kb * dt - t1)
        self._closed_span(i_s_arr[kb - k0:])
