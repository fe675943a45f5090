"""Kinematic stand-in for the pre-trained 50 Hz locomotion policy.

Tracks the coach's velocity command with a first-order lag plus Gaussian
tracking noise, and models falls as a hazard that switches on above a speed
threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .world import DT


@dataclass
class TrackerConfig:
    time_constant: float = 0.2
    tracking_noise_std: tuple[float, float, float] = (0.02, 0.02, 0.02)
    max_feasible: tuple[float, float, float] = (1.2, 0.4, 1.0)
    fall_speed_threshold: float = 1.0
    fall_hazard_rate: float = 0.2

    def __post_init__(self):
        if not self.time_constant > 0:
            raise ValueError("time_constant must be positive")
        if any(v < 0 for v in self.tracking_noise_std):
            raise ValueError("tracking_noise_std must be non-negative")
        if any(not v > 0 for v in self.max_feasible):
            raise ValueError("max_feasible must be positive")
        if not self.fall_speed_threshold > 0 or self.fall_hazard_rate < 0:
            raise ValueError("fall threshold must be positive and hazard non-negative")


def track(current_vel, command, cfg: TrackerConfig, rng: np.random.Generator | None = None,
          dt: float = DT, noise=None):
    """One lag step toward the (feasibility-clamped) command.

    ``noise`` takes standard-normal draws of the same shape as the velocity;
    otherwise they come from ``rng``.  With neither, tracking is noiseless.
    """
    current_vel = np.asarray(current_vel, dtype=float)
    limit = np.asarray(cfg.max_feasible)
    target = np.clip(command, -limit, limit)
    achieved = current_vel + (target - current_vel) * (dt / cfg.time_constant)
    if noise is None and rng is not None:
        noise = rng.standard_normal(np.shape(achieved))
    if noise is not None:
        achieved = achieved + np.asarray(noise) * np.asarray(cfg.tracking_noise_std)
    return np.clip(achieved, -limit, limit)


def fall_check(achieved_vel, cfg: TrackerConfig, rng: np.random.Generator | None = None,
               dt: float = DT, uniform=None):
    """True where the robot falls during this step.

    Falls happen with probability ``fall_hazard_rate * dt`` per step while the
    planar speed exceeds ``fall_speed_threshold``.
    """
    v = np.asarray(achieved_vel, dtype=float)
    speed = np.sqrt(v[..., 0] * v[..., 0] + v[..., 1] * v[..., 1])
    if uniform is None:
        uniform = rng.random(np.shape(speed)) if rng is not None else np.ones(np.shape(speed))
    return (speed > cfg.fall_speed_threshold) & (np.asarray(uniform) < cfg.fall_hazard_rate * dt)
