import math

import numpy as np
import pytest

from perchsim.perception import (
    CableTracker,
    OdometryDelta,
    PerceptionConfig,
    RadarScan,
    Track,
    estimate_direction,
    kf_predict,
    kf_update,
    plane_basis,
    project_to_plane,
    scan_to_plane,
    synth_scan,
)
from perchsim.world import CableSpec, vec3

from oracles import kf_update_1d


def three_cable_setup(spacing=1.5, height=10.0):
    return [
        CableSpec(vec3(x, 0, height), vec3(x, 100, height), sag=0.0, phase_id=i)
        for i, x in enumerate((-spacing, 0.0, spacing))
    ]


class TestSynthScan:
    def test_noiseless_points_lie_on_cables(self):
        cables = three_cable_setup()
        cfg = PerceptionConfig(noise_sigma=0.0, clutter_rate=0.0)
        rng = np.random.default_rng(0)
        drone = vec3(0, 50, 8.5)
        scan = synth_scan(cables, drone, 0.0, rng, cfg)
        assert scan.points.shape[0] > 0
        for p_body in scan.points:
            p_world = p_body + drone  # yaw = 0
            dists = []
            for c in cables:
                from perchsim.world import nearest_point_on_cable
                dists.append(nearest_point_on_cable(c, p_world)[2])
            assert min(dists) < 1e-6

    def test_out_of_range_gives_clutter_only(self):
        cables = three_cable_setup(height=100.0)
        cfg = PerceptionConfig(noise_sigma=0.0, clutter_rate=3.0)
        rng = np.random.default_rng(1)
        scan = synth_scan(cables, vec3(0, 50, 0), 0.0, rng, cfg)
        # nothing within the 10 m range; whatever is left is Poisson clutter
        assert scan.points.shape[0] < 20

    def test_cluster_mean_within_clt_bound(self):
        # Monte Carlo: per-cable projected cluster mean lands within
        # 3 sigma / sqrt(n) of the true cable point
        cable = [CableSpec(vec3(0, 0, 10), vec3(0, 100, 10))]
        cfg = PerceptionConfig(noise_sigma=0.05, clutter_rate=0.0)
        rng = np.random.default_rng(42)
        drone = vec3(1.0, 50, 8.5)
        direction = np.array([0.0, 1.0, 0.0])
        truth = project_to_plane(np.array([vec3(0, 50, 10) - drone]), direction)[0]
        bound = 3 * cfg.noise_sigma / math.sqrt(cfg.points_per_cable)
        hits = 0
        trials = 1000
        for _ in range(trials):
            scan = synth_scan(cable, drone, 0.0, rng, cfg)
            pts = scan_to_plane(scan, 0.0, direction)
            err = np.linalg.norm(pts.mean(axis=0) - truth)
            if err <= bound:
                hits += 1
        assert hits / trials > 0.95


class TestProjection:
    def test_axis_aligned_drop(self):
        out = project_to_plane(np.array([[1.0, 5.0, 2.0]]), np.array([0.0, 1.0, 0.0]))
        assert np.allclose(out[0], [1.0, 2.0])

    def test_invariant_along_direction(self):
        d = np.array([0.3, 0.9, 0.1])
        d = d / np.linalg.norm(d)
        p = np.array([1.0, 2.0, 3.0])
        base = project_to_plane(np.array([p]), d)
        for t in (-5.0, 1.3, 40.0):
            out = project_to_plane(np.array([p + t * d]), d)
            assert np.allclose(out, base, atol=1e-9)

    def test_rotated_direction_preserves_spacing(self):
        # explicit rotation-matrix oracle at 30 degrees yaw
        yaw = math.radians(30)
        rot = np.array([
            [math.cos(yaw), -math.sin(yaw), 0.0],
            [math.sin(yaw), math.cos(yaw), 0.0],
            [0.0, 0.0, 1.0],
        ])
        d = rot @ np.array([0.0, 1.0, 0.0])
        p1 = rot @ np.array([-1.5, 10.0, 10.0])
        p2 = rot @ np.array([1.5, -3.0, 10.0])
        out = project_to_plane(np.array([p1, p2]), d)
        spacing = np.linalg.norm(out[1] - out[0])
        assert abs(spacing - 3.0) < 1e-9

    def test_norm_non_increasing_and_idempotent(self):
        rng = np.random.default_rng(9)
        d = rng.normal(size=3)
        d[2] = 0.1
        d /= np.linalg.norm(d)
        pts = rng.normal(scale=5.0, size=(40, 3))
        uv = project_to_plane(pts, d)
        assert np.all(np.linalg.norm(uv, axis=1) <= np.linalg.norm(pts, axis=1) + 1e-12)

    def test_degenerate_direction_rejected(self):
        with pytest.raises(ValueError):
            project_to_plane(np.array([[1.0, 0, 0]]), np.array([0.0, 0.0, 1.0]))

    def test_direction_estimate_unit_norm(self):
        rng = np.random.default_rng(2)
        est = estimate_direction(np.array([0.0, 1.0, 0.0]), rng, kappa=400.0)
        assert abs(np.linalg.norm(est.direction) - 1.0) < 1e-9


class TestKalman:
    def fresh(self, p=1.0):
        return Track(position=np.zeros(2), covariance=p * np.eye(2), id=0)

    def test_matches_1d_closed_form(self):
        t = self.fresh(p=1.0)
        z = np.array([1.0, -0.5])
        t2 = kf_update(t, z, np.eye(2))
        for axis in range(2):
            mean, var = kf_update_1d(0.0, 1.0, z[axis], 1.0)
            assert abs(t2.position[axis] - mean) < 1e-9
            assert abs(t2.covariance[axis, axis] - var) < 1e-9
        # P = R = I: posterior is the midpoint with variance 0.5
        assert np.allclose(t2.position, z / 2.0, atol=1e-12)
        assert np.allclose(np.diag(t2.covariance), 0.5, atol=1e-12)

    def test_huge_r_keeps_prior(self):
        t = self.fresh()
        t2 = kf_update(t, np.array([0.5, 0.5]), 1e9 * np.eye(2))
        assert np.allclose(t2.position, t.position, atol=1e-6)

    def test_diffuse_prior_takes_measurement(self):
        t = self.fresh(p=1e9)
        z = np.array([2.0, -1.0])
        t2 = kf_update(t, z, np.eye(2))
        assert np.allclose(t2.position, z, atol=1e-6)

    def test_gate_rejects_outlier(self):
        t = self.fresh(p=0.01)
        t2 = kf_update(t, np.array([5.0, 5.0]), 0.01 * np.eye(2))
        assert np.allclose(t2.position, t.position)
        assert t2.misses == 1

    def test_covariance_trace_decreases(self):
        t = self.fresh()
        t2 = kf_update(t, np.array([0.1, 0.1]), np.eye(2))
        assert np.trace(t2.covariance) < np.trace(t.covariance)

    def test_predict_applies_ego_motion(self):
        cfg = PerceptionConfig()
        t = self.fresh()
        odom = OdometryDelta(translation=vec3(0.5, 0.0, 0.2))
        t2 = kf_predict(t, odom, np.array([0.0, 1.0, 0.0]), cfg)
        assert np.allclose(t2.position, [-0.5, -0.2])
        assert np.trace(t2.covariance) > np.trace(t.covariance)


class TestTracker:
    def run_tracker(self, seed, scans=100, spacing=1.5):
        cables = three_cable_setup(spacing=spacing)
        cfg = PerceptionConfig()
        rng = np.random.default_rng(seed)
        drone = vec3(0.0, 50.0, 8.5)
        direction = np.array([0.0, 1.0, 0.0])
        tracker = CableTracker(cfg)
        truths = project_to_plane(
            np.array([vec3(x, 50, 10) - drone for x in (-spacing, 0.0, spacing)]),
            direction,
        )
        errs = []
        for _ in range(scans):
            scan = synth_scan(cables, drone, 0.0, rng, cfg)
            tracker.predict(OdometryDelta(translation=np.zeros(3)), direction)
            tracker.update(scan_to_plane(scan, 0.0, direction))
            for t in tracker.confirmed:
                d = min(np.linalg.norm(t.position - tr) for tr in truths)
                errs.append(d)
        return tracker, float(np.sqrt(np.mean(np.square(errs)))) if errs else math.inf

    def test_three_confirmed_tracks_low_rmse_20_seeds(self):
        for seed in range(20):
            tracker, rmse = self.run_tracker(seed)
            assert len(tracker.confirmed) == 3, f"seed {seed}"
            assert rmse <= 0.05, f"seed {seed}: rmse {rmse}"

    def test_covariances_stay_spd(self):
        tracker, _ = self.run_tracker(123)
        for t in tracker.tracks:
            np.linalg.cholesky(t.covariance)  # raises if not SPD

    def test_ego_motion_consistency(self):
        # pure translation with perfect odometry keeps world positions fixed
        cables = three_cable_setup()
        cfg = PerceptionConfig(noise_sigma=0.0, clutter_rate=0.0, process_noise=0.0)
        rng = np.random.default_rng(5)
        direction = np.array([0.0, 1.0, 0.0])
        tracker = CableTracker(cfg)
        pos = vec3(0.0, 50.0, 8.0)
        vel = vec3(0.3, 0.0, 0.1)
        for k in range(50):
            pos = pos + vel * 0.01
            tracker.predict(OdometryDelta(translation=vel * 0.01), direction)
            scan = synth_scan(cables, pos, 0.0, rng, cfg)
            tracker.update(scan_to_plane(scan, 0.0, direction))
        drone_uv = project_to_plane(np.array([pos]), direction)[0]
        worlds = sorted((t.position + drone_uv)[0] for t in tracker.confirmed)
        assert np.allclose(worlds, [-1.5, 0.0, 1.5], atol=1e-6)

    def test_select_target_nearest_deterministic(self):
        tracker, _ = self.run_tracker(7)
        t1 = tracker.select_target("nearest")
        t2 = tracker.select_target("nearest")
        assert t1.id == t2.id
        # nearest means smallest plane distance to the drone
        dists = [float(np.linalg.norm(t.position)) for t in tracker.confirmed]
        assert float(np.linalg.norm(t1.position)) == min(dists)

    def test_no_confirmed_tracks_returns_none(self):
        tracker = CableTracker(PerceptionConfig())
        assert tracker.select_target() is None
