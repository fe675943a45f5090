"""Synthetic camera pipeline.

A pinhole camera on the robot head observes the ball and the goal landmark.
Detections carry pixel noise, multiplicative depth noise, random dropout and
a fixed latency, and are lifted back to the robot frame with

    p = R @ inv(K) @ [x*d, y*d, d] + t

where ``d`` is the camera-frame depth (the optical-axis coordinate).

Robot frame: x forward, y left, z up, origin on the ground below the base.
Camera frame: x right, y down, z along the optical axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .world import WorldState, rotate, to_robot_frame

MIN_DEPTH = 1e-6


class CalibrationError(ValueError):
    pass


@dataclass
class CameraCalib:
    K: np.ndarray
    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        self.K = np.asarray(self.K, dtype=float).reshape(3, 3)
        self.R = np.asarray(self.R, dtype=float).reshape(3, 3)
        self.t = np.asarray(self.t, dtype=float).reshape(3)
        K = self.K
        if K[0, 0] <= 0 or K[1, 1] <= 0:
            raise CalibrationError("focal lengths must be positive")
        if K[0, 1] != 0 or np.any(K[2] != [0.0, 0.0, 1.0]) or K[1, 0] != 0:
            raise CalibrationError("K must be upper-triangular with zero skew and last row [0, 0, 1]")
        if np.max(np.abs(self.R.T @ self.R - np.eye(3))) > 1e-10:
            raise CalibrationError("R is not orthonormal")
        if np.linalg.det(self.R) < 0:
            raise CalibrationError("R must be a proper rotation (det = +1)")
        self.K_inv = np.array([
            [1.0 / K[0, 0], 0.0, -K[0, 2] / K[0, 0]],
            [0.0, 1.0 / K[1, 1], -K[1, 2] / K[1, 1]],
            [0.0, 0.0, 1.0],
        ])

    @classmethod
    def from_flat(cls, values) -> CameraCalib:
        """21 numbers: K (9), R (9), t (3), each row-major."""
        values = [float(v) for v in values]
        if len(values) != 21:
            raise CalibrationError(f"expected 21 calibration numbers, got {len(values)}")
        return cls(K=values[:9], R=values[9:18], t=values[18:])

    @classmethod
    def head_camera(cls, fx=500.0, fy=500.0, cx=320.0, cy=240.0,
                    height=1.0, forward=0.05, pitch=np.deg2rad(20.0)) -> CameraCalib:
        """Forward-looking camera pitched down by ``pitch``."""
        c, s = np.cos(pitch), np.sin(pitch)
        R = np.array([[0.0, -s, c], [-1.0, 0.0, 0.0], [0.0, -c, -s]])
        return cls(K=[[fx, 0, cx], [0, fy, cy], [0, 0, 1]], R=R, t=[forward, 0.0, height])


@dataclass
class Detection:
    pixel_x: float
    pixel_y: float
    depth: float
    valid: bool
    timestamp: float


@dataclass
class NoiseModel:
    pixel_noise_std: float = 2.0
    depth_noise_frac: float = 0.02
    dropout_prob: float = 0.1
    detection_latency: int = 1
    rate_hz: float = 10.0

    def __post_init__(self):
        if self.pixel_noise_std < 0 or self.depth_noise_frac < 0:
            raise ValueError("noise magnitudes must be non-negative")
        if not 0 <= self.dropout_prob <= 1:
            raise ValueError("dropout_prob must lie in [0, 1]")
        if self.detection_latency < 0:
            raise ValueError("detection_latency must be >= 0")


def back_project(x, y, d, calib: CameraCalib):
    """Robot-frame 3-D point(s) from pixel coordinates and depth."""
    x, y, d = np.asarray(x, float), np.asarray(y, float), np.asarray(d, float)
    scaled = np.stack([x * d, y * d, d], axis=-1)
    cam = np.einsum("ij,...j->...i", calib.K_inv, scaled)
    return np.einsum("ij,...j->...i", calib.R, cam) + calib.t


def back_project_detection(det: Detection, calib: CameraCalib):
    """None for an invalid detection; the caller keeps its last estimate."""
    if not det.valid or not det.depth > 0:
        return None
    return back_project(det.pixel_x, det.pixel_y, det.depth, calib)


def project(point, calib: CameraCalib):
    """Robot-frame point(s) to (pixel_x, pixel_y, depth)."""
    cam = np.einsum("ji,...j->...i", calib.R, np.asarray(point, float) - calib.t)
    depth = cam[..., 2]
    safe = np.where(np.abs(depth) > MIN_DEPTH, depth, 1.0)
    img = np.einsum("ij,...j->...i", calib.K, cam)
    return img[..., 0] / safe, img[..., 1] / safe, depth


def noisy_detect(points, calib: CameraCalib, noise: NoiseModel, normals, uniforms):
    """Vectorized detector core.

    ``normals`` (..., 3): pixel-x, pixel-y and depth draws; ``uniforms`` (...):
    dropout draws.  Returns (x, y, depth, valid).
    """
    x, y, depth = project(points, calib)
    normals = np.asarray(normals)
    x = x + noise.pixel_noise_std * normals[..., 0]
    y = y + noise.pixel_noise_std * normals[..., 1]
    in_front = depth > MIN_DEPTH
    depth = depth * (1.0 + noise.depth_noise_frac * normals[..., 2])
    valid = in_front & (depth > MIN_DEPTH) & (np.asarray(uniforms) >= noise.dropout_prob)
    return x, y, depth, valid


def ball_point(state: WorldState, ball_radius: float):
    xy = to_robot_frame(state, state.ball_pos)
    return np.concatenate([xy, np.full(xy.shape[:-1] + (1,), ball_radius)], axis=-1)


def landmark_point(state: WorldState, landmark_xy):
    xy = to_robot_frame(state, landmark_xy)
    return np.concatenate([xy, np.zeros(xy.shape[:-1] + (1,))], axis=-1)


def synth_detect(state: WorldState, calib: CameraCalib, noise: NoiseModel,
                 rng: np.random.Generator, ball_radius: float = 0.11) -> Detection:
    """Simulated ball detection for a single world.

    The timestamp is the time the detection becomes available, i.e. capture
    time plus the configured latency.
    """
    point = ball_point(state, ball_radius)
    normals = rng.standard_normal(3)
    u = rng.random()
    x, y, d, valid = noisy_detect(point, calib, noise, normals, u)
    stamp = float(state.sim_time) + noise.detection_latency / noise.rate_hz
    return Detection(float(x), float(y), float(d), bool(valid), stamp)


def ego_compensate(points, body_vel, dt):
    """Re-express robot-frame 2-D points after the robot moved by ``body_vel * dt``."""
    body_vel = np.asarray(body_vel)
    extra = np.ndim(points) - body_vel.ndim
    shift = (body_vel[..., :2] * dt).reshape(body_vel.shape[:-1] + (1,) * extra + (2,))
    turn = (body_vel[..., 2] * dt).reshape(body_vel.shape[:-1] + (1,) * extra)
    return rotate(points - shift, -turn)


class TargetEstimator:
    """Latest robot-frame estimate of one target for a batch of worlds.

    Detections are released ``latency`` frames after capture.  Between
    releases (and on dropout) the held estimate and the queued detections are
    dead-reckoned through the robot's ego-motion.
    """

    def __init__(self, n: int, latency: int):
        self.latency = latency
        self.est = np.zeros((n, 2))
        self.queue = np.zeros((n, latency, 2))
        self.queued = np.zeros((n, latency), dtype=bool)

    def reset(self, idx, truth_xy):
        self.est[idx] = truth_xy
        self.queued[idx] = False
        self.queue[idx] = 0.0

    def ego_motion(self, body_vel, dt, active):
        moved = ego_compensate(self.est, body_vel, dt)
        self.est = np.where(active[:, None], moved, self.est)
        if self.latency:
            q = ego_compensate(self.queue, body_vel, dt)
            self.queue = np.where(active[:, None, None], q, self.queue)

    def push(self, xy, valid, active):
        if self.latency == 0:
            out, out_valid = xy, valid
        else:
            out, out_valid = self.queue[:, 0].copy(), self.queued[:, 0].copy()
            q = np.concatenate([self.queue[:, 1:], xy[:, None]], axis=1)
            qv = np.concatenate([self.queued[:, 1:], valid[:, None]], axis=1)
            self.queue = np.where(active[:, None, None], q, self.queue)
            self.queued = np.where(active[:, None], qv, self.queued)
        self.est = np.where((active & out_valid)[:, None], out, self.est)
