"""Planar soccer world stepped at the 50 Hz low-level rate.

The robot is a kinematic body driven by a body-frame velocity [vx, vy, wz]
(unicycle with strafe).  The ball is a point mass with constant rolling
deceleration.  Contact between the two is resolved by a single impulse along
the contact normal.

All state arrays may carry a leading batch axis, so the same functions step
one world or many.  Every operation is elementwise per world, which keeps a
world's trajectory bitwise identical whatever batch it is stepped in.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

DT = 1.0 / 50.0


class WorldConfigError(ValueError):
    pass


class NumericFault(FloatingPointError):
    pass


def wrap_angle(a):
    """Wrap to (-pi, pi]; angles already in range pass through untouched."""
    a = np.asarray(a, float)
    inside = (a > -np.pi) & (a <= np.pi)
    return np.where(inside, a, np.pi - np.mod(np.pi - a, 2.0 * np.pi))


def rotate(vec, angle):
    """Rotate 2-vectors (..., 2) by ``angle`` (...)."""
    c, s = np.cos(angle), np.sin(angle)
    x, y = vec[..., 0], vec[..., 1]
    return np.stack([c * x - s * y, s * x + c * y], axis=-1)


def norm2(vec):
    return np.sqrt(vec[..., 0] * vec[..., 0] + vec[..., 1] * vec[..., 1])


@dataclass
class FieldConfig:
    field_length: float = 9.0
    field_width: float = 6.0
    goal_center: tuple[float, float] = (4.5, 0.0)
    goal_width: float = 2.6
    ball_radius: float = 0.11
    robot_contact_radius: float = 0.2
    ball_friction_decel: float = 0.4
    contact_restitution: float = 0.5
    kick_transfer_gain: float = 1.0
    boundary_margin: float = 1.0

    def __post_init__(self):
        lengths = (self.field_length, self.field_width, self.goal_width,
                   self.ball_radius, self.robot_contact_radius, self.boundary_margin)
        if any(not v > 0 for v in lengths):
            raise WorldConfigError("field lengths must be strictly positive")
        e = np.asarray(self.contact_restitution)
        if np.any(e < 0) or np.any(e > 1):
            raise WorldConfigError("contact_restitution must lie in [0, 1]")
        if np.any(np.asarray(self.ball_friction_decel) < 0):
            raise WorldConfigError("ball_friction_decel must be non-negative")
        if self.kick_transfer_gain < 0:
            raise WorldConfigError("kick_transfer_gain must be non-negative")
        self.goal_normal  # validates goal placement

    @property
    def goal_normal(self) -> np.ndarray:
        """Outward unit normal of the boundary line the goal sits on."""
        gx, gy = self.goal_center
        half_l, half_w = self.field_length / 2, self.field_width / 2
        if abs(abs(gx) - half_l) < 1e-9 and abs(gy) <= half_w:
            return np.array([np.sign(gx), 0.0])
        if abs(abs(gy) - half_w) < 1e-9 and abs(gx) <= half_l:
            return np.array([0.0, np.sign(gy)])
        raise WorldConfigError("goal_center must lie on a field boundary line")


@dataclass
class RandomizationSpec:
    """Closed intervals sampled at every reset; angles in radians."""

    ball_friction_decel: tuple[float, float] = (0.3, 0.5)
    contact_restitution: tuple[float, float] = (0.4, 0.6)
    robot_x: tuple[float, float] = (-2.0, 0.0)
    robot_y: tuple[float, float] = (-2.0, 2.0)
    robot_heading: tuple[float, float] = (-np.pi, np.pi)
    ball_x: tuple[float, float] = (0.5, 2.5)
    ball_y: tuple[float, float] = (-1.5, 1.5)
    rng_seed: int = 0

    def __post_init__(self):
        for f in fields(self):
            if f.name == "rng_seed":
                continue
            lo, hi = getattr(self, f.name)
            if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
                raise WorldConfigError(f"invalid range for {f.name}: [{lo}, {hi}]")

    @classmethod
    def point(cls, robot_pos, robot_heading, ball_pos, friction=0.4, restitution=0.5, seed=0):
        """Degenerate randomization that always produces the given layout."""
        return cls(
            ball_friction_decel=(friction, friction),
            contact_restitution=(restitution, restitution),
            robot_x=(robot_pos[0], robot_pos[0]),
            robot_y=(robot_pos[1], robot_pos[1]),
            robot_heading=(robot_heading, robot_heading),
            ball_x=(ball_pos[0], ball_pos[0]),
            ball_y=(ball_pos[1], ball_pos[1]),
            rng_seed=seed,
        )

    def widened(self, scale: float) -> RandomizationSpec:
        """Pose ranges scaled about their centres (optional curriculum)."""
        def grow(rng):
            mid, half = (rng[0] + rng[1]) / 2, (rng[1] - rng[0]) / 2
            return (mid - half * scale, mid + half * scale)
        return replace(self, robot_x=grow(self.robot_x), robot_y=grow(self.robot_y),
                       robot_heading=grow(self.robot_heading), ball_x=grow(self.ball_x),
                       ball_y=grow(self.ball_y))


@dataclass
class WorldState:
    robot_pos: np.ndarray
    robot_heading: np.ndarray
    robot_vel: np.ndarray
    ball_pos: np.ndarray
    ball_vel: np.ndarray
    upright: np.ndarray
    sim_time: np.ndarray

    def copy(self) -> WorldState:
        return WorldState(**{f.name: np.array(getattr(self, f.name), copy=True) for f in fields(self)})

    def index(self, i) -> WorldState:
        return WorldState(**{f.name: np.array(getattr(self, f.name)[i], copy=True) for f in fields(self)})

    @classmethod
    def stack(cls, states) -> WorldState:
        return cls(**{f.name: np.stack([getattr(s, f.name) for s in states]) for f in fields(cls)})

    def equals(self, other: WorldState) -> bool:
        return all(np.array_equal(getattr(self, f.name), getattr(other, f.name)) for f in fields(self))


def make_rng(spec: RandomizationSpec) -> np.random.Generator:
    return np.random.default_rng(spec.rng_seed)


def reset(spec: RandomizationSpec, rng: np.random.Generator | None = None) -> WorldState:
    """Sample a kickoff layout: robot pose, heading and a stationary ball."""
    if rng is None:
        rng = make_rng(spec)
    rx = rng.uniform(*spec.robot_x)
    ry = rng.uniform(*spec.robot_y)
    heading = rng.uniform(*spec.robot_heading)
    bx = rng.uniform(*spec.ball_x)
    by = rng.uniform(*spec.ball_y)
    return WorldState(
        robot_pos=np.array([rx, ry]),
        robot_heading=np.asarray(wrap_angle(heading)),
        robot_vel=np.zeros(3),
        ball_pos=np.array([bx, by]),
        ball_vel=np.zeros(2),
        upright=np.asarray(True),
        sim_time=np.asarray(0.0),
    )


def randomize_physics(spec: RandomizationSpec, rng: np.random.Generator) -> tuple[float, float]:
    """Per-episode ball friction deceleration and restitution."""
    return float(rng.uniform(*spec.ball_friction_decel)), float(rng.uniform(*spec.contact_restitution))


def step_world(state: WorldState, tracked_vel, dt: float, cfg: FieldConfig,
               friction=None, restitution=None) -> WorldState:
    """Advance one explicit-Euler step.

    ``friction`` and ``restitution`` override the config values and may be
    per-world arrays (episode randomization).
    """
    tracked_vel = np.asarray(tracked_vel, dtype=float)
    for arr in (tracked_vel, state.robot_pos, state.ball_pos, state.ball_vel, state.robot_heading):
        if not np.all(np.isfinite(arr)):
            raise NumericFault("non-finite value entering step_world")
    decel = cfg.ball_friction_decel if friction is None else np.asarray(friction)
    e = cfg.contact_restitution if restitution is None else np.asarray(restitution)

    # robot: body-frame velocity rotated into the field frame
    lin_world = rotate(tracked_vel[..., :2], state.robot_heading)
    robot_pos = state.robot_pos + lin_world * dt
    heading = wrap_angle(state.robot_heading + tracked_vel[..., 2] * dt)

    # ball: rolling friction never reverses the velocity
    speed = norm2(state.ball_vel)
    new_speed = np.maximum(speed - decel * dt, 0.0)
    scale = np.where(speed > 0, new_speed / np.where(speed > 0, speed, 1.0), 0.0)
    ball_vel = state.ball_vel * scale[..., None]
    ball_pos = state.ball_pos + ball_vel * dt

    # contact: the striking surface moves at gain * robot velocity
    reach = cfg.ball_radius + cfg.robot_contact_radius
    offset = ball_pos - robot_pos
    dist = norm2(offset)
    touching = dist < reach
    safe = np.where(dist > 0, dist, 1.0)
    facing = np.stack([np.cos(heading), np.sin(heading)], axis=-1)
    normal = np.where((dist > 0)[..., None], offset / safe[..., None], facing)
    surface_vel = cfg.kick_transfer_gain * lin_world
    rel = (ball_vel - surface_vel)
    rel_n = rel[..., 0] * normal[..., 0] + rel[..., 1] * normal[..., 1]
    hit = touching & (rel_n < 0)
    impulse = np.where(hit, -(1.0 + e) * rel_n, 0.0)
    ball_vel = ball_vel + impulse[..., None] * normal
    ball_pos = np.where(touching[..., None], robot_pos + normal * reach, ball_pos)

    return WorldState(
        robot_pos=robot_pos,
        robot_heading=heading,
        robot_vel=np.array(tracked_vel, copy=True),
        ball_pos=ball_pos,
        ball_vel=ball_vel,
        upright=np.array(state.upright, copy=True),
        sim_time=state.sim_time + dt,
    )


def check_goal(state: WorldState, cfg: FieldConfig):
    """Ball centre past the goal line by more than its radius, inside the mouth."""
    n = cfg.goal_normal
    rel = state.ball_pos - np.asarray(cfg.goal_center)
    depth = rel[..., 0] * n[0] + rel[..., 1] * n[1]
    lateral = rel[..., 0] * -n[1] + rel[..., 1] * n[0]
    return (depth > cfg.ball_radius) & (np.abs(lateral) <= cfg.goal_width / 2)


def out_of_bounds(state: WorldState, cfg: FieldConfig):
    """Ball fully over any boundary line, or robot beyond the margin.

    Call after :func:`check_goal`; a scored ball also counts as out here.
    """
    half = np.array([cfg.field_length / 2, cfg.field_width / 2])
    ball_out = np.any(np.abs(state.ball_pos) > half + cfg.ball_radius, axis=-1)
    robot_out = np.any(np.abs(state.robot_pos) > half + cfg.boundary_margin, axis=-1)
    return ball_out | robot_out


def to_robot_frame(state: WorldState, point):
    """Field-frame point(s) expressed in the robot body frame."""
    return rotate(np.asarray(point) - state.robot_pos, -state.robot_heading)
