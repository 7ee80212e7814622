"""World model: powerline geometry, drone rigid-body kinematics, simulation clock.

All positions are in an East-North-Up world frame, meters. The drone is a
yaw-augmented double integrator; cables are parabolic-sag segments between
two endpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

GRAVITY = 9.81  # m/s^2


def vec3(x: float, y: float, z: float) -> np.ndarray:
    return np.array([x, y, z], dtype=float)


def _as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(3)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite vector: {v}")
    return a


@dataclass
class CableSpec:
    """One sagged cable span. ``sag`` is the vertical midpoint drop (parabolic)."""

    endpoint_a: np.ndarray
    endpoint_b: np.ndarray
    sag: float = 0.0
    phase_id: int = 0

    def __post_init__(self):
        self.endpoint_a = _as_vec3(self.endpoint_a)
        self.endpoint_b = _as_vec3(self.endpoint_b)
        if self.sag < 0:
            raise ValueError("sag must be >= 0")
        span = np.linalg.norm((self.endpoint_b - self.endpoint_a)[:2])
        if span <= 0:
            raise ValueError("cable endpoints must have a positive horizontal span")

    @property
    def direction(self) -> np.ndarray:
        """Unit vector along the chord from endpoint_a to endpoint_b."""
        d = self.endpoint_b - self.endpoint_a
        return d / np.linalg.norm(d)


@dataclass
class CurrentProfile:
    """Piecewise-constant RMS line current. ``steps`` is [(t_start, rms), ...]."""

    steps: list = field(default_factory=lambda: [(0.0, 288.0)])

    def __post_init__(self):
        self.steps = sorted((float(t), float(a)) for t, a in self.steps)
        if not self.steps or self.steps[0][0] > 0.0:
            raise ValueError("current profile must start at t=0")
        if any(a < 0 for _, a in self.steps):
            raise ValueError("current_rms must be >= 0")

    def rms_at(self, t: float) -> float:
        rms = self.steps[0][1]
        for t_start, a in self.steps:
            if t >= t_start:
                rms = a
            else:
                break
        return rms


@dataclass
class PowerlineSpec:
    cables: list
    line_frequency: float = 50.0
    current: CurrentProfile = field(default_factory=CurrentProfile)

    def __post_init__(self):
        if not self.cables:
            raise ValueError("at least one cable is required")
        if self.line_frequency <= 0:
            raise ValueError("line_frequency must be > 0")


def cable_point(spec: CableSpec, s: float) -> np.ndarray:
    """Point on the sagged cable at chord fraction ``s`` in [0, 1]."""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"s={s} outside [0, 1]")
    p = spec.endpoint_a + s * (spec.endpoint_b - spec.endpoint_a)
    p = p.copy()
    p[2] -= spec.sag * (1.0 - (2.0 * s - 1.0) ** 2)
    return p


def nearest_point_on_cable(spec: CableSpec, p) -> tuple[float, np.ndarray, float]:
    """Closest point on the cable to ``p``: returns (s, point, distance).

    Coarse scan plus golden-section refinement; accurate to well under 1 mm
    for realistic spans.
    """
    p = _as_vec3(p)
    n_coarse = 129
    ss = np.linspace(0.0, 1.0, n_coarse)
    ab = spec.endpoint_b - spec.endpoint_a
    pts = spec.endpoint_a[None, :] + ss[:, None] * ab[None, :]
    pts[:, 2] -= spec.sag * (1.0 - (2.0 * ss - 1.0) ** 2)
    d2 = np.sum((pts - p[None, :]) ** 2, axis=1)
    k = int(np.argmin(d2))
    lo = ss[max(k - 1, 0)]
    hi = ss[min(k + 1, n_coarse - 1)]

    def f(s):
        q = cable_point(spec, s)
        return float(np.dot(q - p, q - p))

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - (b - a) * invphi
    d = a + (b - a) * invphi
    fc, fd = f(c), f(d)
    while b - a > 1e-10:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - (b - a) * invphi
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + (b - a) * invphi
            fd = f(d)
    s_best = (a + b) / 2.0
    # endpoint clamp: the interior refinement never beats the endpoints when
    # the projection falls outside the span
    candidates = [(f(0.0), 0.0), (f(1.0), 1.0), (f(s_best), s_best)]
    fmin, s_best = min(candidates)
    point = cable_point(spec, s_best)
    return s_best, point, math.sqrt(fmin)


@dataclass
class DroneState:
    position: np.ndarray = field(default_factory=lambda: vec3(0, 0, 0))
    velocity: np.ndarray = field(default_factory=lambda: vec3(0, 0, 0))
    yaw: float = 0.0
    armed: bool = False
    attached: bool = False
    mass: float = 4.3

    def __post_init__(self):
        self.position = _as_vec3(self.position)
        self.velocity = _as_vec3(self.velocity)
        if self.mass <= 0:
            raise ValueError("mass must be > 0")

    @property
    def weight(self) -> float:
        return self.mass * GRAVITY


def step_drone(
    state: DroneState,
    accel_cmd,
    yaw_rate_cmd: float,
    dt: float,
    accel_limit: float,
    thrust_accel_ceiling: float | None = None,
) -> DroneState:
    """Semi-implicit Euler update of the free-flying drone.

    ``accel_cmd`` is the desired net (gravity-compensated) acceleration. The
    commanded thrust vector is ``accel_cmd + g*z`` and is clamped in norm to
    ``accel_limit + g`` and, when the battery cannot sustain full thrust, to
    ``thrust_accel_ceiling``. Gravity wins when the ceiling is below g.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if state.attached:
        raise RuntimeError("cannot step an attached drone; the attachment owns the pose")
    a_cmd = _as_vec3(accel_cmd)
    a_norm = float(np.linalg.norm(a_cmd))
    if a_norm > accel_limit and a_norm > 0:
        a_cmd = a_cmd * (accel_limit / a_norm)
    thrust = a_cmd + vec3(0.0, 0.0, GRAVITY)
    max_thrust = accel_limit + GRAVITY
    if thrust_accel_ceiling is not None:
        max_thrust = min(max_thrust, thrust_accel_ceiling)
    norm = float(np.linalg.norm(thrust))
    if norm > max_thrust and norm > 0:
        thrust = thrust * (max_thrust / norm)
    accel = thrust - vec3(0.0, 0.0, GRAVITY)

    if not state.armed:
        accel = vec3(0.0, 0.0, -GRAVITY)  # free fall; the mission FSM must prevent this

    velocity = state.velocity + accel * dt
    position = state.position + velocity * dt
    # crude ground plane: never integrate below z=0
    if position[2] < 0.0:
        position = position.copy()
        position[2] = 0.0
        velocity = velocity.copy()
        velocity[2] = max(velocity[2], 0.0)
    yaw = state.yaw + yaw_rate_cmd * dt
    yaw = (yaw + math.pi) % (2.0 * math.pi) - math.pi
    return replace(state, position=position, velocity=velocity, yaw=yaw)


@dataclass
class SimClock:
    """Integer-step clock; ``t`` is always step_count * flight_dt exactly."""

    flight_dt: float = 0.01
    circuit_dt: float = 1e-4
    realtime_factor: float = 0.0
    step_count: int = 0

    def __post_init__(self):
        if self.flight_dt <= 0 or self.circuit_dt <= 0:
            raise ValueError("time steps must be > 0")
        ratio = self.flight_dt / self.circuit_dt
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("circuit_dt must divide flight_dt exactly")
        if self.realtime_factor < 0:
            raise ValueError("realtime_factor must be >= 0")

    @property
    def t(self) -> float:
        return self.step_count * self.flight_dt

    @property
    def substeps_per_step(self) -> int:
        return int(round(self.flight_dt / self.circuit_dt))

    def advance(self) -> None:
        self.step_count += 1
