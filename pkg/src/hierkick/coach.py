"""Coach (5 Hz) policy interface.

Builds the high-level observation

    [p_robot_ball (2), p_robot_goal (2), d_ball, d_goal, v_robot (3), c_prev (3)]

integrates bounded velocity increments into the running command, and evaluates
the actor and critic networks.  The ablation variants only change which
values occupy the observation slots; the End-to-End baseline instead reads
the actor output as an absolute command.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .nn import PolicyParams
from .world import WorldState, norm2, rotate, to_robot_frame

OBS_DIM = 12
PRIV_OBS_DIM = 18
ACT_DIM = 3
STD_FLOOR_FRAC = 0.01
LOG_2PI = np.log(2.0 * np.pi)


class Variant(str, enum.Enum):
    HIERKICK = "hierkick"
    NO_DISTANCES = "no_distances"
    REPLACE_CPREV = "replace_cprev"
    END_TO_END = "end_to_end"

    @property
    def head(self) -> str:
        return "absolute" if self is Variant.END_TO_END else "increment"


class ObservationFault(FloatingPointError):
    pass


@dataclass
class CommandLimits:
    increment_bound: tuple[float, float, float] = (0.2, 0.1, 0.1)
    command_low: tuple[float, float, float] = (-0.6, -0.4, -1.0)
    command_high: tuple[float, float, float] = (1.2, 0.4, 1.0)

    def __post_init__(self):
        if any(not b > 0 for b in self.increment_bound):
            raise ValueError("increment bounds must be positive")
        if any(lo >= hi for lo, hi in zip(self.command_low, self.command_high)):
            raise ValueError("command envelope needs low < high")

    @property
    def inc(self) -> np.ndarray:
        return np.asarray(self.increment_bound, float)

    @property
    def low(self) -> np.ndarray:
        return np.asarray(self.command_low, float)

    @property
    def high(self) -> np.ndarray:
        return np.asarray(self.command_high, float)

    def half_width(self, head: str) -> np.ndarray:
        """Half the width of the actor output range for a head."""
        if head == "increment":
            return self.inc
        return (self.high - self.low) / 2

    def squash(self, t, head: str):
        """Map tanh outputs in (-1, 1) onto the head's range, keeping 0 at 0.

        Returns (values, d values / d t).  The absolute head scales the two
        signs separately because the command envelope is not symmetric.
        """
        if head == "increment":
            slope = np.broadcast_to(self.inc, np.shape(t))
        else:
            slope = np.where(t >= 0, self.high, -self.low)
        return t * slope, slope

    def head_bounds(self, head: str) -> tuple[np.ndarray, np.ndarray]:
        if head == "increment":
            return -self.inc, self.inc
        return self.low, self.high


@dataclass
class HighLevelObs:
    p_robot_ball: np.ndarray
    p_robot_goal: np.ndarray
    d_ball: float
    d_goal: float
    v_robot: np.ndarray
    c_prev: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.p_robot_ball, self.p_robot_goal, [self.d_ball, self.d_goal],
                               self.v_robot, self.c_prev])

    @classmethod
    def from_array(cls, arr) -> HighLevelObs:
        arr = np.asarray(arr, float)
        return cls(arr[0:2], arr[2:4], float(arr[4]), float(arr[5]), arr[6:9], arr[9:12])


def obs_array(p_ball, p_goal, v_robot, c_prev, variant: Variant, v_robot_ball=None):
    """Vectorized observation assembly from robot-frame quantities."""
    p_ball, p_goal = np.asarray(p_ball, float)[..., :2], np.asarray(p_goal, float)[..., :2]
    d_ball, d_goal = norm2(p_ball), norm2(p_goal)
    if variant is Variant.NO_DISTANCES:
        d_ball, d_goal = np.zeros_like(d_ball), np.zeros_like(d_goal)
    last = np.asarray(c_prev, float)
    if variant is Variant.REPLACE_CPREV:
        if v_robot_ball is None:
            raise ValueError("REPLACE_CPREV needs the robot-ball relative velocity")
        last = np.asarray(v_robot_ball, float)
        if last.shape[-1] == 2:
            last = np.concatenate([last, np.zeros(last.shape[:-1] + (1,))], axis=-1)
    out = np.concatenate([p_ball, p_goal, d_ball[..., None], d_goal[..., None],
                          np.asarray(v_robot, float), last], axis=-1)
    if not np.all(np.isfinite(out)):
        raise ObservationFault("non-finite observation")
    return out


def build_obs(state: WorldState, ball_est, goal_est, c_prev, variant: Variant = Variant.HIERKICK,
              v_robot_ball=None) -> HighLevelObs:
    """Observation from robot-frame ball/goal estimates (perception or ground truth)."""
    ball_est, goal_est = np.asarray(ball_est, float), np.asarray(goal_est, float)
    if not (np.all(np.isfinite(ball_est)) and np.all(np.isfinite(goal_est))):
        raise ObservationFault("non-finite perception estimate")
    arr = obs_array(ball_est, goal_est, state.robot_vel, c_prev, variant, v_robot_ball)
    return HighLevelObs.from_array(arr)


POSITION_SCALE = 5.0
BALL_SPEED_SCALE = 1.0


def feature_scale(variant: Variant, limits: CommandLimits, v_scale) -> np.ndarray:
    """Fixed divisor per actor slot so every network input is of order one.

    The last slot is scaled by the natural range of whatever occupies it
    for the variant: an increment, a command jump, or a ball velocity.
    """
    variant = Variant(variant)
    if variant is Variant.REPLACE_CPREV:
        last = np.full(3, BALL_SPEED_SCALE)
    elif variant is Variant.END_TO_END:
        last = limits.high - limits.low
    else:
        last = limits.inc
    return np.concatenate([np.full(6, POSITION_SCALE), np.asarray(v_scale, float), last])


def critic_scale(variant: Variant, limits: CommandLimits, v_scale) -> np.ndarray:
    # the critic's c_prev slot always holds the command change, never a ball velocity
    base = feature_scale(Variant.END_TO_END if Variant(variant) is Variant.END_TO_END else Variant.HIERKICK,
                         limits, v_scale)
    return np.concatenate([base, np.full(2, BALL_SPEED_SCALE), limits.high, [POSITION_SCALE]])


def true_targets(state: WorldState, goal_center):
    """Ground-truth robot-frame ball and goal positions."""
    return to_robot_frame(state, state.ball_pos), to_robot_frame(state, np.asarray(goal_center, float))


def privileged_obs(state: WorldState, goal_center, c_prev, command):
    """Critic input: true observation slots plus ball velocity, command and ball-goal distance."""
    p_ball, p_goal = true_targets(state, goal_center)
    base = obs_array(p_ball, p_goal, state.robot_vel, c_prev, Variant.HIERKICK)
    ball_vel = rotate(state.ball_vel, -state.robot_heading)
    d_bg = norm2(np.asarray(goal_center, float) - state.ball_pos)
    return np.concatenate([base, ball_vel, np.asarray(command, float), d_bg[..., None]], axis=-1)


def integrate_command(prev, inc, limits: CommandLimits):
    """Add a clamped increment and clamp the sum to the command envelope."""
    inc = np.clip(np.asarray(inc, float), -limits.inc, limits.inc)
    return np.clip(np.asarray(prev, float) + inc, limits.low, limits.high)


def std_floor(head: str, limits: CommandLimits) -> np.ndarray:
    return np.log(STD_FLOOR_FRAC * limits.half_width(head))


def effective_log_std(params: PolicyParams, limits: CommandLimits) -> np.ndarray:
    return np.maximum(params.log_std, std_floor(params.head, limits))


def actor_forward(obs, params: PolicyParams, limits: CommandLimits, batch_invariant: bool = True):
    """Squashed action mean and effective log-std."""
    if isinstance(obs, HighLevelObs):
        obs = obs.as_array()
    z = params.actor.forward(obs, batch_invariant=batch_invariant)
    return limits.squash(np.tanh(z), params.head)[0], effective_log_std(params, limits)


def end_to_end_forward(obs, params: PolicyParams, limits: CommandLimits):
    """Deterministic absolute command of the flat baseline."""
    if params.head != "absolute":
        raise ValueError("end_to_end_forward needs an absolute-head parameter set")
    mean, _ = actor_forward(obs, params, limits)
    return np.clip(mean, limits.low, limits.high)


def gaussian_log_prob(x, mean, log_std):
    z = (np.asarray(x) - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - 0.5 * LOG_2PI, axis=-1)


def sample_action(mean, log_std, rng: np.random.Generator | None = None, normals=None,
                  low=None, high=None):
    """Gaussian sample around ``mean``.

    Returns (raw sample, clamped action, log-prob of the raw sample).  The
    PPO ratio is computed on the raw sample; the clamped action is what the
    robot executes.
    """
    mean = np.asarray(mean, float)
    if normals is None:
        normals = rng.standard_normal(mean.shape)
    raw = mean + np.exp(log_std) * normals
    logp = gaussian_log_prob(raw, mean, log_std)
    action = raw if low is None else np.clip(raw, low, high)
    return raw, action, logp


def value_forward(priv_obs, params: PolicyParams, batch_invariant: bool = False):
    return params.critic.forward(priv_obs, batch_invariant=batch_invariant)[..., 0]


def init_params(variant: Variant, actor_hidden, critic_hidden, rng, limits: CommandLimits,
                init_std_frac: float = 0.5) -> PolicyParams:
    """Fresh parameters; the initial std is a fraction of the head's half-range."""
    params = PolicyParams.init(OBS_DIM, PRIV_OBS_DIM, actor_hidden, critic_hidden, rng,
                               head=variant.head, act_dim=ACT_DIM)
    params.log_std = np.log(init_std_frac * limits.half_width(variant.head))
    return params
