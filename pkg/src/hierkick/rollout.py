"""Batch collection from parallel worlds."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coach import actor_forward, sample_action, value_forward
from .config import Config
from .env import GOAL, TIMEOUT, SoccerEnv
from .nn import PolicyParams
from .ppo import TransitionBatch


@dataclass
class EpisodeLog:
    successes: int = 0
    episodes: int = 0
    lengths: list = field(default_factory=list)
    events: dict = field(default_factory=dict)

    @property
    def success_rate(self) -> float:
        return self.successes / self.episodes if self.episodes else 0.0


def collect_rollouts(env: SoccerEnv, params: PolicyParams, cfg: Config, steps_per_world: int | None = None):
    """Step every world until ``batch_size`` coach transitions are stored.

    Transitions are laid out (time, world), so the batch is assembled by
    world index independently of how the worlds were scheduled.  Episodes cut
    by the time limit are bootstrapped by folding ``gamma * V(s_final)`` into
    their last reward; the done flag then stops the recursion as usual.
    ``batch.rewards`` are multiplied by ``reward_scale``; the unscaled ones
    are kept in ``batch.info["raw_rewards"]``.
    """
    if steps_per_world is None:
        steps_per_world = cfg.ppo.batch_size // env.n
    T, n = steps_per_world, env.n
    obs = np.zeros((T, n, env.actor_obs().shape[1]))
    priv = np.zeros((T, n, env.critic_obs().shape[1]))
    actions = np.zeros((T, n, 3))
    log_probs = np.zeros((T, n))
    rewards = np.zeros((T, n))
    raw_rewards = np.zeros((T, n))
    dones = np.zeros((T, n))
    episode_ids = np.zeros((T, n), dtype=np.int64)
    timeouts = np.zeros((T, n), dtype=bool)
    terminal_priv = np.zeros_like(priv)
    log = EpisodeLog()
    phase_counts = np.zeros(4, dtype=np.int64)

    for t in range(T):
        obs[t] = env.actor_obs()
        priv[t] = env.critic_obs()
        mean, log_std = actor_forward(obs[t], params, cfg.limits, batch_invariant=True)
        raw, _, logp = sample_action(mean, log_std, normals=env.policy_normals())
        episode_ids[t] = env.episodes
        reward, done, info = env.step(raw)
        actions[t], log_probs[t], rewards[t], dones[t] = raw, logp, reward, done
        raw_rewards[t] = reward
        timeouts[t] = info["event"] == TIMEOUT
        terminal_priv[t] = info["terminal_critic_obs"]
        phase_counts += np.bincount(info["phase"], minlength=4)
        for i in np.flatnonzero(done):
            log.episodes += 1
            log.successes += int(info["success"][i])
            log.lengths.append(int(info["decisions"][i]))
            ev = int(info["event"][i])
            log.events[ev] = log.events.get(ev, 0) + 1

    rewards *= cfg.ppo.reward_scale
    flat_priv = priv.reshape(T * n, -1)
    values = value_forward(flat_priv, params).reshape(T, n)
    if timeouts.any():
        rewards[timeouts] += cfg.ppo.gamma * value_forward(terminal_priv[timeouts], params)
    last_values = value_forward(env.critic_obs(), params)
    batch = TransitionBatch(obs=obs, priv_obs=priv, actions=actions, log_probs=log_probs, rewards=rewards,
                            values=values, dones=dones, episode_ids=episode_ids, last_values=last_values,
                            info={"episodes": log, "raw_rewards": raw_rewards, "phase_counts": phase_counts,
                                  "goal_events": log.events.get(GOAL, 0)})
    return batch
