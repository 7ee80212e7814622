"""Synthetic powerline perception: radar-like point clouds, projection onto
the plane perpendicular to the line direction, and per-cable Kalman tracks
fused with odometry.

Each cable collapses to a point in the cross-section plane; tracks live in
drone-relative plane coordinates so ego-motion (from odometry) enters the
predict step and the cables themselves are static.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .world import CableSpec, cable_point, nearest_point_on_cable

CHI2_GATE_99 = 9.21  # chi-square 0.99 quantile, 2 dof


@dataclass
class RadarScan:
    points: np.ndarray        # (n, 3) in drone body frame
    timestamp: float


@dataclass
class LineDirectionEstimate:
    direction: np.ndarray     # unit vector, world frame
    confidence: float = 1.0


@dataclass
class OdometryDelta:
    translation: np.ndarray
    yaw_delta: float = 0.0
    noise_scale: float = 0.0


@dataclass
class Track:
    position: np.ndarray      # (2,) in the cross-section plane, drone-relative
    covariance: np.ndarray    # (2, 2) SPD
    hits: int = 1
    misses: int = 0
    confirmed: bool = False
    id: int = 0


@dataclass
class PerceptionConfig:
    max_range: float = 10.0
    points_per_cable: int = 20
    noise_sigma: float = 0.05
    clutter_rate: float = 2.0
    direction_kappa: float = 400.0   # von Mises concentration of the yaw noise
    process_noise: float = 0.01      # m per step, cable position random walk
    p0: float = 0.5                  # fresh-track position sigma, m
    cluster_radius: float = 0.5      # groups one cable's returns per scan
    merge_radius: float = 0.3        # duplicate-track suppression
    confirm_hits: int = 5
    delete_misses: int = 10
    scan_period: float = 0.01        # s


def yaw_rotation(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def synth_scan(cables: list, drone_position: np.ndarray, drone_yaw: float,
               rng: np.random.Generator, config: PerceptionConfig,
               timestamp: float = 0.0) -> RadarScan:
    """Sample noisy radar returns: points on each visible cable arc within
    range, plus Poisson-distributed uniform clutter."""
    body_from_world = yaw_rotation(-drone_yaw)
    pts = []
    for cable in cables:
        s_near, _, dist = nearest_point_on_cable(cable, drone_position)
        if dist > config.max_range:
            continue
        # uniform arc samples around the closest point, kept within range
        ss = rng.uniform(max(0.0, s_near - 0.05), min(1.0, s_near + 0.05),
                         size=config.points_per_cable)
        for s in ss:
            p = cable_point(cable, float(s))
            if np.linalg.norm(p - drone_position) > config.max_range:
                continue
            noise = rng.normal(0.0, config.noise_sigma, size=3) \
                if config.noise_sigma > 0 else np.zeros(3)
            pts.append(body_from_world @ (p - drone_position) + noise)
    n_clutter = rng.poisson(config.clutter_rate)
    for _ in range(n_clutter):
        pts.append(rng.uniform(-config.max_range, config.max_range, size=3))
    arr = np.array(pts) if pts else np.zeros((0, 3))
    return RadarScan(points=arr, timestamp=timestamp)


def estimate_direction(true_direction: np.ndarray, rng: np.random.Generator,
                       kappa: float) -> LineDirectionEstimate:
    """Truth plus von Mises yaw noise stands in for the image pipeline."""
    d = np.asarray(true_direction, float)
    d = d / np.linalg.norm(d)
    if kappa <= 0:
        return LineDirectionEstimate(direction=d, confidence=0.5)
    dyaw = float(rng.vonmises(0.0, kappa))
    c, s = math.cos(dyaw), math.sin(dyaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return LineDirectionEstimate(direction=rot @ d,
                                 confidence=float(min(1.0, kappa / (kappa + 1.0))))


def plane_basis(direction: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal (u, v) basis of the plane perpendicular to the line,
    with v aligned to the world-up projection."""
    d = np.asarray(direction, float)
    n = np.linalg.norm(d)
    if abs(n - 1.0) > 1e-6:
        raise ValueError("direction must be a unit vector")
    up = np.array([0.0, 0.0, 1.0])
    v = up - np.dot(up, d) * d
    vn = np.linalg.norm(v)
    if vn < 1e-9:
        raise ValueError("line direction parallel to world up; basis degenerate")
    v = v / vn
    u = np.cross(d, v)
    return u, v


def project_to_plane(points: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """Project 3-D points to (u, v) coordinates in the cross-section plane."""
    u, v = plane_basis(direction)
    pts = np.atleast_2d(np.asarray(points, float))
    return np.column_stack([pts @ u, pts @ v])


def scan_to_plane(scan: RadarScan, drone_yaw: float,
                  direction: np.ndarray) -> np.ndarray:
    """Rotate body-frame returns to world orientation and project them onto
    the cross-section plane (drone-relative coordinates)."""
    if scan.points.shape[0] == 0:
        return np.zeros((0, 2))
    world_rel = scan.points @ yaw_rotation(drone_yaw).T
    return project_to_plane(world_rel, direction)


def kf_predict(track: Track, odom: OdometryDelta, direction: np.ndarray,
               config: PerceptionConfig) -> Track:
    """Shift the (static, drone-relative) track by the ego-motion and inflate
    covariance with process plus odometry noise."""
    shift = project_to_plane(odom.translation, direction)[0]
    q = config.process_noise ** 2 + odom.noise_scale ** 2
    return replace(
        track,
        position=track.position - shift,
        covariance=track.covariance + q * np.eye(2),
    )


def kf_update(track: Track, measurement: np.ndarray, r: np.ndarray) -> Track:
    """Standard linear Kalman update with a chi-square 0.99 gate."""
    z = np.asarray(measurement, float)
    innov = z - track.position
    s = track.covariance + r
    s_inv = np.linalg.inv(s)
    maha2 = float(innov @ s_inv @ innov)
    if maha2 > CHI2_GATE_99:
        return replace(track, misses=track.misses + 1)
    k = track.covariance @ s_inv
    pos = track.position + k @ innov
    cov = (np.eye(2) - k) @ track.covariance
    cov = 0.5 * (cov + cov.T)
    return replace(track, position=pos, covariance=cov, hits=track.hits + 1,
                   misses=0)


class CableTracker:
    """Greedy nearest-neighbor multi-target tracker over plane points."""

    def __init__(self, config: PerceptionConfig | None = None):
        self.config = config or PerceptionConfig()
        self.tracks: list[Track] = []
        self._next_id = 0

    def predict(self, odom: OdometryDelta, direction: np.ndarray) -> None:
        self.tracks = [kf_predict(t, odom, direction, self.config)
                       for t in self.tracks]

    def _cluster(self, measurements: np.ndarray) -> list[tuple[np.ndarray, int]]:
        """Greedy radius clustering: each cable's returns form one cluster,
        clutter stays as singletons. Deterministic via lexicographic order."""
        if len(measurements) == 0:
            return []
        pts = np.atleast_2d(np.asarray(measurements, float))
        order = np.lexsort((pts[:, 1], pts[:, 0]))
        pts = pts[order]
        used = np.zeros(len(pts), dtype=bool)
        clusters = []
        r2 = self.config.cluster_radius ** 2
        for i in range(len(pts)):
            if used[i]:
                continue
            members = np.sum((pts - pts[i]) ** 2, axis=1) <= r2
            members &= ~used
            used |= members
            group = pts[members]
            clusters.append((group.mean(axis=0), int(members.sum())))
        return clusters

    def update(self, measurements: np.ndarray) -> None:
        """Cluster returns, associate cluster means to tracks by nearest
        neighbor within the gate, update, spawn tentative tracks, prune."""
        cfg = self.config
        sigma2 = cfg.noise_sigma ** 2 if cfg.noise_sigma > 0 else 1e-6
        clusters = self._cluster(measurements)
        matched: dict[int, tuple[np.ndarray, int]] = {}
        unmatched = []
        for z, n in clusters:
            best, best_d2 = None, math.inf
            for i, t in enumerate(self.tracks):
                if i in matched:
                    continue
                d2 = float(np.sum((z - t.position) ** 2))
                if d2 < best_d2:
                    best, best_d2 = i, d2
            if best is not None:
                s = self.tracks[best].covariance + (sigma2 / n) * np.eye(2)
                gate2 = CHI2_GATE_99 * float(np.max(np.linalg.eigvalsh(s)))
                if best_d2 <= max(gate2, cfg.cluster_radius ** 2):
                    matched[best] = (z, n)
                    continue
            unmatched.append((z, n))
        survivors = []
        for i, t in enumerate(self.tracks):
            if i in matched:
                z, n = matched[i]
                t = kf_update(t, z, (sigma2 / n) * np.eye(2))
            else:
                t = replace(t, misses=t.misses + 1)
            if not t.confirmed and t.hits >= cfg.confirm_hits:
                t = replace(t, confirmed=True)
            if t.misses < cfg.delete_misses:
                survivors.append(t)
        for z, n in unmatched:
            survivors.append(Track(position=np.asarray(z, float),
                                   covariance=cfg.p0 ** 2 * np.eye(2),
                                   id=self._next_id))
            self._next_id += 1
        self.tracks = self._merge_coincident(survivors)

    def _merge_coincident(self, tracks: list[Track]) -> list[Track]:
        """Drop duplicate tracks that settled on the same object; the one
        with the longer history wins."""
        ranked = sorted(tracks, key=lambda t: (not t.confirmed, -t.hits, t.id))
        kept: list[Track] = []
        r2 = self.config.merge_radius ** 2
        for t in ranked:
            if any(float(np.sum((t.position - k.position) ** 2)) <= r2 for k in kept):
                continue
            kept.append(t)
        kept.sort(key=lambda t: t.id)
        return kept

    @property
    def confirmed(self) -> list[Track]:
        return [t for t in self.tracks if t.confirmed]

    def select_target(self, selector="nearest") -> Track | None:
        """Deterministic target choice among confirmed tracks.

        ``nearest`` picks the smallest plane distance to the drone (the
        origin of the relative frame); an integer picks by track id. Ties
        break toward the lowest id.
        """
        candidates = self.confirmed
        if not candidates:
            return None
        if selector == "nearest":
            return min(candidates,
                       key=lambda t: (float(np.linalg.norm(t.position)), t.id))
        wanted = int(selector)
        for t in candidates:
            if t.id == wanted:
                return t
        return None
