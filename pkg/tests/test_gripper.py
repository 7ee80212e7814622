import numpy as np
import pytest

from perchsim.gripper import (
    GripperGeometry,
    GripperState,
    attach,
    detach,
    update_mechanism,
)
from perchsim.world import DroneState, vec3

GEO = GripperGeometry()


def simulate_ascent(lateral, v_up=0.5, start_height=1.0, duration=4.0, dt=0.01,
                    roll_deg=0.0):
    """Drone rises under the cable at constant speed with fixed lateral error.

    Returns (final state, time at closure or None). The guide funnel feeds
    back into the lateral error exactly as the engine applies it.
    """
    state = GripperState.OPEN
    h = start_height
    lat = lateral
    t = 0.0
    closed_at = None
    for _ in range(int(duration / dt)):
        upd = update_mechanism(state, GEO, lat, h, v_up, roll_deg)
        state = upd.state
        lat -= upd.lateral_pull
        if state is GripperState.CLOSED and closed_at is None:
            closed_at = t
            break
        h -= v_up * dt
        t += dt
    return state, closed_at


class TestCaptureEnvelope:
    def test_inside_envelope_closes(self):
        state, closed_at = simulate_ascent(0.20)
        assert state is GripperState.CLOSED

    def test_outside_envelope_stays_open(self):
        state, closed_at = simulate_ascent(0.30)
        assert state is GripperState.OPEN
        assert closed_at is None

    def test_monotone_envelope(self):
        outcomes = []
        for lat in (0.0, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.40):
            state, _ = simulate_ascent(lat)
            outcomes.append(state is GripperState.CLOSED)
        # once a landing fails at some offset, every larger offset fails too
        first_fail = outcomes.index(False) if False in outcomes else len(outcomes)
        assert all(outcomes[:first_fail])
        assert not any(outcomes[first_fail:])

    def test_closure_takes_stroke_over_ascent_speed(self):
        # centered approach at 1 m/s: the 0.1 m stroke closes in ~0.1 s
        state = GripperState.OPEN
        h = GEO.engage_depth
        t = 0.0
        dt = 0.001
        while state is not GripperState.CLOSED and t < 1.0:
            upd = update_mechanism(state, GEO, 0.0, h, 1.0)
            state = upd.state
            h -= 1.0 * dt
            t += dt
        assert state is GripperState.CLOSED
        assert abs(t - GEO.closure_stroke / 1.0) < 0.02

    def test_descent_from_engaged_reopens(self):
        upd = update_mechanism(GripperState.OPEN, GEO, 0.0, 0.18, 0.5)
        assert upd.state is GripperState.ENGAGED
        upd = update_mechanism(upd.state, GEO, 0.0, 0.25, -0.5)
        assert upd.state is GripperState.OPEN

    def test_no_closure_without_ascent(self):
        state = GripperState.OPEN
        for h in np.linspace(1.0, 0.0, 300):
            upd = update_mechanism(state, GEO, 0.0, float(h), -0.2)
            state = upd.state
            assert state is not GripperState.CLOSED

    def test_roll_misalignment_blocks_engagement(self):
        state, _ = simulate_ascent(0.0, roll_deg=20.0)
        assert state is GripperState.OPEN
        state, _ = simulate_ascent(0.0, roll_deg=10.0)
        assert state is GripperState.CLOSED

    def test_funnel_centers_the_airframe(self):
        state = GripperState.OPEN
        h, lat = 0.20, 0.20
        for _ in range(400):
            upd = update_mechanism(state, GEO, lat, h, 0.5)
            state = upd.state
            lat -= upd.lateral_pull
            if state is GripperState.CLOSED:
                break
            h -= 0.5 * 0.01
        assert state is GripperState.CLOSED
        assert abs(lat) < 0.01


class TestAttachDetach:
    def drone(self):
        return DroneState(position=vec3(0, 0, 9.9), armed=True)

    def test_attach_with_margin_succeeds(self):
        d = attach(self.drone(), holding_force=84.0, gripper=GripperState.CLOSED)
        assert d.attached

    def test_attach_below_weight_refused(self):
        with pytest.raises(RuntimeError):
            attach(self.drone(), holding_force=10.0, gripper=GripperState.CLOSED)

    def test_attach_open_refused(self):
        with pytest.raises(RuntimeError):
            attach(self.drone(), holding_force=100.0, gripper=GripperState.OPEN)

    def test_detach_requires_open(self):
        d = attach(self.drone(), 84.0, GripperState.CLOSED)
        with pytest.raises(RuntimeError):
            detach(d, GripperState.CLOSED)
        d2 = detach(d, GripperState.OPEN)
        assert not d2.attached
