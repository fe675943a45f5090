"""Multi-stage reward: phase masks, stage rewards, smoothness and survival.

Exactly one stage is active at a time, selected from the robot-ball distance
and the ball-goal distance:

    Approach   d_ball > u1
    Alignment  u2 < d_ball <= u1
    Dribble    0 < d_ball <= u2 and d_goal >= u3
    Shoot      0 < d_ball <= u2 and d_goal <  u3

The total is ``sum(lambda_i * r_i) + survival_bonus * upright``.  Functions
accept scalars or batched arrays.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class Phase(enum.IntEnum):
    APPROACH = 0
    ALIGNMENT = 1
    DRIBBLE = 2
    SHOOT = 3


@dataclass
class PhaseThresholds:
    u1: float = 1.5
    u2: float = 0.5
    u3: float = 2.0

    def __post_init__(self):
        if not 0 < self.u2 < self.u1:
            raise ValueError("thresholds need 0 < u2 < u1")
        if not self.u3 > 0:
            raise ValueError("u3 must be positive")


@dataclass
class RewardWeights:
    lambdas: tuple[float, float, float, float, float] = (1.0, 1.5, 2.0, 3.0, 1.0)
    beta: float = 0.5
    mu: float = 0.5
    v_max: float = 1.5
    alpha: float = 2.0
    eps: float = 1e-6
    zeta1: float = 2.0
    zeta2: float = 0.1
    delta_max: float = 0.25
    delta_min: float = 0.01
    survival_bonus: float = 1.0
    # heading-error gain for the desired alignment turn rate
    k_p: float = 1.0
    # paid by the environment on a scored goal, outside total_reward
    goal_bonus: float = 0.0

    def __post_init__(self):
        lam = self.lambdas
        if len(lam) != 5 or any(v < 0 for v in lam):
            raise ValueError("need five non-negative stage weights")
        if not lam[0] <= lam[1] <= lam[2] <= lam[3]:
            raise ValueError("stage weights must be non-decreasing from approach to shoot")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if not 0 < self.delta_min < self.delta_max:
            raise ValueError("need 0 < delta_min < delta_max")
        if min(self.mu, self.v_max, self.alpha, self.eps, self.zeta1, self.zeta2) <= 0:
            raise ValueError("shoot and smoothness parameters must be positive")


@dataclass
class RewardBreakdown:
    r_approach: np.ndarray
    r_alignment: np.ndarray
    r_dribble: np.ndarray
    r_shoot: np.ndarray
    r_delta: np.ndarray
    r_survival: np.ndarray
    active_phase: np.ndarray
    total: np.ndarray


def phase_masks(d_ball, d_goal, th: PhaseThresholds):
    d_ball, d_goal = np.asarray(d_ball), np.asarray(d_goal)
    close = (d_ball > 0) & (d_ball <= th.u2)
    return (
        d_ball > th.u1,
        (d_ball > th.u2) & (d_ball <= th.u1),
        close & (d_goal >= th.u3),
        close & (d_goal < th.u3),
    )


def active_phase(d_ball, d_goal, th: PhaseThresholds):
    masks = np.stack(phase_masks(d_ball, d_goal, th), axis=-1)
    return np.argmax(masks, axis=-1)


def _dot2(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1]


def r_approach(v_cmd, dir_ball, mask):
    return np.where(mask, _dot2(v_cmd, dir_ball), 0.0)


def desired_turn_rate(bearing, k_p: float, wz_limit: float):
    return np.clip(k_p * np.asarray(bearing), -wz_limit, wz_limit)


def r_alignment(theta_rbg, dw_desired, dw_actual, beta: float, mask):
    value = np.cos(theta_rbg) - beta * np.abs(np.asarray(dw_desired) - np.asarray(dw_actual))
    return np.where(mask, value, 0.0)


def r_dribble(v_cmd, dir_ball_goal, mask):
    return np.where(mask, _dot2(v_cmd, dir_ball_goal), 0.0)


def r_shoot(v_cmd, dir_ball_goal, w: RewardWeights, mask):
    v = np.asarray(v_cmd, float)[..., :2]
    speed = np.sqrt(_dot2(v, v))
    v_hat = v / (speed + w.eps)[..., None]
    value = _dot2(v_hat, dir_ball_goal) + w.mu * np.minimum(w.v_max, speed * w.alpha)
    return np.where(mask, value, 0.0)


def r_delta(inc, w: RewardWeights):
    inc = np.asarray(inc, float)
    size = np.sqrt(np.sum(inc * inc, axis=-1))
    return -w.zeta1 * np.maximum(0.0, size - w.delta_max) - w.zeta2 * (size < w.delta_min)


def total_reward(r_app, r_ali, r_dri, r_sho, r_del, upright, w: RewardWeights,
                 phase=None) -> RewardBreakdown:
    lam = w.lambdas
    survival = w.survival_bonus * np.asarray(upright, dtype=float)
    total = (lam[0] * np.asarray(r_app) + lam[1] * np.asarray(r_ali) + lam[2] * np.asarray(r_dri)
             + lam[3] * np.asarray(r_sho) + lam[4] * np.asarray(r_del) + survival)
    return RewardBreakdown(
        r_approach=np.asarray(r_app), r_alignment=np.asarray(r_ali),
        r_dribble=np.asarray(r_dri), r_shoot=np.asarray(r_sho), r_delta=np.asarray(r_del),
        r_survival=survival, active_phase=phase, total=total,
    )


def unit(vec):
    vec = np.asarray(vec, float)
    n = np.sqrt(_dot2(vec, vec))
    return vec / np.where(n > 0, n, 1.0)[..., None]


def stage_rewards(p_ball, p_goal, v_cmd, inc, upright, th: PhaseThresholds,
                  w: RewardWeights, wz_limit: float) -> RewardBreakdown:
    """Full reward from robot-frame ball and goal positions.

    ``v_cmd`` is the body-frame command issued at this decision and ``inc``
    the change it made to the previous command.
    """
    p_ball, p_goal = np.asarray(p_ball, float), np.asarray(p_goal, float)
    v_cmd = np.asarray(v_cmd, float)
    d_ball = np.sqrt(_dot2(p_ball, p_ball))
    ball_to_goal = p_goal - p_ball
    d_goal = np.sqrt(_dot2(ball_to_goal, ball_to_goal))
    m_app, m_ali, m_dri, m_sho = phase_masks(d_ball, d_goal, th)

    dir_ball = unit(p_ball)
    dir_bg = unit(ball_to_goal)
    theta = np.abs(np.arctan2(p_ball[..., 0] * p_goal[..., 1] - p_ball[..., 1] * p_goal[..., 0],
                              _dot2(p_ball, p_goal)))
    bearing = np.arctan2(p_ball[..., 1], p_ball[..., 0])
    dw_des = desired_turn_rate(bearing, w.k_p, wz_limit)

    phase = np.argmax(np.stack([m_app, m_ali, m_dri, m_sho], axis=-1), axis=-1)
    return total_reward(
        r_approach(v_cmd[..., :2], dir_ball, m_app),
        r_alignment(theta, dw_des, v_cmd[..., 2], w.beta, m_ali),
        r_dribble(v_cmd[..., :2], dir_bg, m_dri),
        r_shoot(v_cmd, dir_bg, w, m_sho),
        r_delta(inc, w),
        upright, w, phase=phase,
    )
