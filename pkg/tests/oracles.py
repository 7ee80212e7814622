"""Independent reference computations used to freeze expected test values."""

import math

import numpy as np

from perchsim.circuit import CircuitParams, CircuitRunner, Schedule, SCHED_WINDOW

OMEGA_50 = 2.0 * math.pi * 50.0


def rl_decay(im0: float, t: float, params: CircuitParams) -> float:
    """Analytic shorted-winding decay with zero source current."""
    tau = params.magnetizing_inductance / params.winding_resistance
    return im0 * math.exp(-t / tau)


def steady_window_power(runner: CircuitRunner, start_deg: float, width_deg: float,
                        ip_rms: float) -> float:
    """Steady-state cycle power for a fixed transfer window.

    Exploits the affine per-cycle map im -> a*im + b: two probe cycles find
    the fixed point, a third measures power there.
    """
    runner.schedule = Schedule(
        kind=SCHED_WINDOW,
        t0=math.radians(start_deg) / OMEGA_50,
        t1=math.radians(start_deg + width_deg) / OMEGA_50,
    )

    def one_cycle(im0: float) -> float:
        runner.im = im0
        runner.k = 0
        runner._reset_accum()
        runner.advance(runner.n_per_cycle, ip_rms, True)
        return runner.im

    b = one_cycle(0.0)
    a = one_cycle(1.0) - b
    i_fix = b / (1.0 - a) if abs(1.0 - a) > 1e-12 else 0.0
    i_end = one_cycle(i_fix)
    if abs(i_end - i_fix) > 1e-5:
        # affine shortcut invalid here (sliding clamp engaged); settle honestly
        for _ in range(400):
            prev = runner.im
            runner.k = 0
            runner._reset_accum()
            runner.advance(runner.n_per_cycle, ip_rms, True)
            if abs(runner.im - prev) < 1e-10:
                break
        runner.k = 0
        runner._reset_accum()
        runner.advance(runner.n_per_cycle, ip_rms, True)
    return runner.last_cycle.harvested_w


def grid_optimal_window(params: CircuitParams, ip_rms: float,
                        max_width_deg: int = 54, step_deg: int = 1):
    """Brute-force 1-degree grid search over (start_phase, width)."""
    runner = CircuitRunner(params)
    best = (-math.inf, 0, 0)
    for w in range(2, max_width_deg + 1, step_deg):
        for s in range(0, 181 - w, step_deg):
            p = steady_window_power(runner, s, w, ip_rms)
            if p > best[0]:
                best = (p, s, w)
    return best  # (power, start_deg, width_deg)


def kf_update_1d(prior_mean: float, prior_var: float, z: float, r: float):
    """Closed-form scalar Kalman update."""
    k = prior_var / (prior_var + r)
    return prior_mean + k * (z - prior_mean), (1.0 - k) * prior_var


def lqr_double_integrator_gain(dt: float, qp: float, qv: float, ra: float):
    """Infinite-horizon discrete LQR gain for the sampled double integrator."""
    from scipy.linalg import solve_discrete_are

    A = np.array([[1.0, dt], [0.0, 1.0]])
    B = np.array([[0.5 * dt * dt], [dt]])
    Q = np.diag([qp, qv])
    R = np.array([[ra]])
    P = solve_discrete_are(A, B, Q, R)
    K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    return K.ravel()
