"""Batched dual-rate soccer environment.

One call to :meth:`SoccerEnv.step` is one coach decision: the new command is
held for ``LOW_STEPS_PER_DECISION`` low-level steps (50 Hz), the tracker
follows it, the world integrates, and the camera fires every
``LOW_STEPS_PER_DETECTION`` steps (10 Hz).  Each world owns two RNG streams
(environment and policy sampling) derived from its own seed, so a world's
trajectory does not depend on which other worlds share the batch.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .coach import Variant, critic_scale, feature_scale, integrate_command, obs_array, privileged_obs, true_targets
from .config import Config
from .perception import TargetEstimator, back_project, ball_point, landmark_point, noisy_detect
from .rewards import stage_rewards
from .tracker import fall_check, track
from .world import DT, WorldState, check_goal, norm2, out_of_bounds, randomize_physics, reset, step_world

LOW_STEPS_PER_DECISION = 10
DECISION_DT = LOW_STEPS_PER_DECISION * DT

NONE, GOAL, FELL, OUT_OF_BOUNDS, TIMEOUT = 0, 1, 2, 3, 4
EVENT_NAMES = {GOAL: "Goal", FELL: "Fell", OUT_OF_BOUNDS: "OutOfBounds", TIMEOUT: "Timeout"}


class WorldFault(RuntimeError):
    """A world raised during stepping; carries the world index and its seed."""

    def __init__(self, index: int, seed, cause: Exception):
        super().__init__(f"world {index} (seed {seed}) failed: {cause}")
        self.index, self.seed, self.cause = index, seed, cause


@dataclass(frozen=True)
class Stream:
    """Seed material for one world: entropy plus a spawn key."""

    entropy: int
    key: tuple[int, ...] = ()

    def rng(self, role: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.entropy, spawn_key=self.key + (role,)))


def training_streams(master_seed: int, n_worlds: int) -> list[Stream]:
    return [Stream(master_seed, (i,)) for i in range(n_worlds)]


def trial_streams(seeds) -> list[Stream]:
    return [Stream(int(s)) for s in seeds]


def _select(mask, new: WorldState, old: WorldState) -> WorldState:
    out = {}
    for f in fields(WorldState):
        a, b = getattr(new, f.name), getattr(old, f.name)
        m = mask.reshape(mask.shape + (1,) * (a.ndim - mask.ndim))
        out[f.name] = np.where(m, a, b)
    return WorldState(**out)


class SoccerEnv:
    def __init__(self, cfg: Config, variant: Variant, streams: list[Stream], auto_reset: bool = True,
                 spec=None):
        self.cfg = cfg
        self.variant = Variant(variant)
        self.streams = list(streams)
        self.n = n = len(self.streams)
        self.auto_reset = auto_reset
        self.spec = spec if spec is not None else cfg.randomization
        self.env_rngs = [s.rng(0) for s in self.streams]
        self.policy_rngs = [s.rng(1) for s in self.streams]
        self.max_decisions = int(round(cfg.ppo.max_episode_seconds / DECISION_DT))
        self.detect_every = max(1, int(round(1.0 / (cfg.noise.rate_hz * DT))))
        self.goal = np.asarray(cfg.field.goal_center, float)
        self.obs_scale = feature_scale(self.variant, cfg.limits, cfg.tracker.max_feasible)
        self.priv_scale = critic_scale(self.variant, cfg.limits, cfg.tracker.max_feasible)

        zeros2, zeros3 = np.zeros((n, 2)), np.zeros((n, 3))
        self.world = WorldState(zeros2.copy(), np.zeros(n), zeros3.copy(), zeros2.copy(), zeros2.copy(),
                                np.ones(n, dtype=bool), np.zeros(n))
        self.friction = np.zeros(n)
        self.restitution = np.zeros(n)
        self.command = zeros3.copy()
        self.c_prev = zeros3.copy()
        self.ball_seen = TargetEstimator(n, cfg.noise.detection_latency)
        self.goal_seen = TargetEstimator(n, cfg.noise.detection_latency)
        self.ball_at_decision = zeros2.copy()
        self.v_robot_ball = zeros2.copy()
        self.decisions = np.zeros(n, dtype=int)
        self.low_steps = np.zeros(n, dtype=int)
        self.episodes = np.zeros(n, dtype=int)
        self.finished = np.zeros(n, dtype=bool)
        self.reset_worlds(np.arange(n))

    # -- episode management -------------------------------------------------

    def reset_worlds(self, idx):
        for i in np.atleast_1d(idx):
            rng = self.env_rngs[i]
            friction, restitution = randomize_physics(self.spec, rng)
            s = reset(self.spec, rng)
            self.world.robot_pos[i] = s.robot_pos
            self.world.robot_heading[i] = s.robot_heading
            self.world.robot_vel[i] = s.robot_vel
            self.world.ball_pos[i] = s.ball_pos
            self.world.ball_vel[i] = s.ball_vel
            self.world.upright[i] = s.upright
            self.world.sim_time[i] = s.sim_time
            self.friction[i], self.restitution[i] = friction, restitution
            p_ball, p_goal = true_targets(s, self.goal)
            self.ball_seen.reset(i, p_ball)
            self.goal_seen.reset(i, p_goal)
            self.ball_at_decision[i] = p_ball
        idx = np.atleast_1d(idx)
        self.command[idx] = 0.0
        self.c_prev[idx] = 0.0
        self.v_robot_ball[idx] = 0.0
        self.decisions[idx] = 0
        self.low_steps[idx] = 0

    def set_states(self, states: list[WorldState], friction=None, restitution=None):
        """Overwrite world layouts (tests and scripted scenarios)."""
        for i, s in enumerate(states):
            for f in fields(WorldState):
                getattr(self.world, f.name)[i] = getattr(s, f.name)
            p_ball, p_goal = true_targets(s, self.goal)
            self.ball_seen.reset(i, p_ball)
            self.goal_seen.reset(i, p_goal)
            self.ball_at_decision[i] = p_ball
        if friction is not None:
            self.friction[:] = friction
        if restitution is not None:
            self.restitution[:] = restitution

    # -- observations -------------------------------------------------------

    def raw_actor_obs(self) -> np.ndarray:
        return obs_array(self.ball_seen.est, self.goal_seen.est, self.world.robot_vel, self.c_prev,
                         self.variant, self.v_robot_ball)

    def actor_obs(self) -> np.ndarray:
        """Network input: the observation divided by fixed per-slot scales."""
        return self.raw_actor_obs() / self.obs_scale

    def critic_obs(self) -> np.ndarray:
        return privileged_obs(self.world, self.goal, self.c_prev, self.command) / self.priv_scale

    def policy_normals(self) -> np.ndarray:
        return np.stack([r.standard_normal(3) for r in self.policy_rngs])

    # -- dynamics -----------------------------------------------------------

    def _draw_noise(self, alive):
        k = LOW_STEPS_PER_DECISION
        n_ticks = k // self.detect_every
        normals = np.zeros((self.n, k * 3 + n_ticks * 6))
        uniforms = np.ones((self.n, k + n_ticks * 2))
        for i in np.flatnonzero(alive):
            normals[i] = self.env_rngs[i].standard_normal(normals.shape[1])
            uniforms[i] = self.env_rngs[i].random(uniforms.shape[1])
        track_z = normals[:, :k * 3].reshape(self.n, k, 3)
        det_z = normals[:, k * 3:].reshape(self.n, n_ticks, 2, 3)
        fall_u = uniforms[:, :k]
        det_u = uniforms[:, k:].reshape(self.n, n_ticks, 2)
        return track_z, det_z, fall_u, det_u

    def _detect(self, tick, det_z, det_u, active):
        cfg = self.cfg
        for j, (estimator, point) in enumerate((
                (self.ball_seen, ball_point(self.world, cfg.field.ball_radius)),
                (self.goal_seen, landmark_point(self.world, self.goal)))):
            x, y, d, valid = noisy_detect(point, cfg.camera, cfg.noise, det_z[:, tick, j], det_u[:, tick, j])
            xyz = back_project(x, y, np.where(valid, d, 1.0), cfg.camera)
            estimator.push(xyz[:, :2], valid, active)

    def step(self, raw_actions):
        """Apply one coach decision per world.

        Returns (rewards, dones, info).  With ``auto_reset`` finished worlds are
        re-seeded from their own stream; otherwise they stay frozen.
        """
        cfg, lim = self.cfg, self.cfg.limits
        raw_actions = np.asarray(raw_actions, float)
        alive = ~self.finished
        if self.variant.head == "increment":
            inc = np.clip(raw_actions, -lim.inc, lim.inc)
            new_cmd = integrate_command(self.command, inc, lim)
        else:
            new_cmd = np.clip(raw_actions, lim.low, lim.high)
            inc = new_cmd - self.command
        p_ball, p_goal = true_targets(self.world, self.goal)
        self.command = np.where(alive[:, None], new_cmd, self.command)
        self.c_prev = np.where(alive[:, None], inc, self.c_prev)

        track_z, det_z, fall_u, det_u = self._draw_noise(alive)
        event = np.zeros(self.n, dtype=int)
        running = alive.copy()
        world = self.world
        for s in range(LOW_STEPS_PER_DECISION):
            vel = track(world.robot_vel, self.command, cfg.tracker, noise=track_z[:, s])
            fell = fall_check(vel, cfg.tracker, uniform=fall_u[:, s]) & running & world.upright
            vel = np.where(fell[:, None], 0.0, vel)
            try:
                new = step_world(world, vel, DT, cfg.field, self.friction, self.restitution)
            except FloatingPointError as exc:
                finite = (np.isfinite(vel).all(axis=1) & np.isfinite(world.ball_pos).all(axis=1)
                          & np.isfinite(world.robot_pos).all(axis=1) & np.isfinite(world.ball_vel).all(axis=1))
                bad = int(np.flatnonzero(~finite)[0]) if not finite.all() else 0
                raise WorldFault(bad, self.streams[bad], exc) from exc
            new.upright = world.upright & ~fell
            scored = check_goal(new, cfg.field) & running & ~fell
            out = out_of_bounds(new, cfg.field) & running & ~scored & ~fell
            self.ball_seen.ego_motion(vel, DT, running)
            self.goal_seen.ego_motion(vel, DT, running)
            world = _select(running, new, world)
            self.world = world
            self.low_steps += running
            event = np.where(fell, FELL, np.where(scored, GOAL, np.where(out, OUT_OF_BOUNDS, event)))
            if (s + 1) % self.detect_every == 0:
                self._detect((s + 1) // self.detect_every - 1, det_z, det_u, running)
            running &= event == NONE

        self.decisions += alive
        timeout = alive & (event == NONE) & (self.decisions >= self.max_decisions)
        event = np.where(timeout, TIMEOUT, event)
        done = alive & (event != NONE)

        br = stage_rewards(p_ball, p_goal, self.command, self.c_prev, self.world.upright,
                           cfg.thresholds, cfg.weights, lim.high[2])
        reward = np.where(alive, br.total + cfg.weights.goal_bonus * (event == GOAL), 0.0)

        ball_now = self.ball_seen.est
        self.v_robot_ball = np.where(alive[:, None], (ball_now - self.ball_at_decision) / DECISION_DT,
                                     self.v_robot_ball)
        self.ball_at_decision = np.where(alive[:, None], ball_now, self.ball_at_decision)

        info = {
            "event": event,
            "success": done & (event == GOAL) & self.world.upright,
            "phase": br.active_phase,
            "breakdown": br,
            "kick_distance": norm2(self.world.ball_pos - self.goal),
            "episode_seconds": self.low_steps * DT,
            "decisions": self.decisions.copy(),
            "terminal_critic_obs": self.critic_obs(),
        }
        if self.auto_reset:
            ended = np.flatnonzero(done)
            if ended.size:
                self.episodes[ended] += 1
                self.reset_worlds(ended)
        else:
            self.finished |= done
        return reward, done, info
