"""PPO with GAE and an asymmetric (privileged-critic) actor-critic.

The loss and its gradients are computed by hand: the clipped surrogate on the
actor's Gaussian log-probabilities, a squared-error value loss on the critic,
and an entropy bonus on the log-std head.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coach import CommandLimits, LOG_2PI, std_floor
from .nn import PolicyParams


@dataclass
class PpoConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    kl_target: float = 0.01
    learning_rate: float = 3e-4
    batch_size: int = 4096
    minibatch_size: int = 1024
    epochs: int = 5
    value_loss_coef: float = 0.5
    entropy_coef: float = 0.01
    max_episode_seconds: float = 20.0
    max_grad_norm: float = 0.0  # 0 disables clipping
    reward_scale: float = 1.0  # learning-side multiplier; logged rewards stay unscaled

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0 <= self.gae_lambda <= 1:
            raise ValueError("gae_lambda must lie in [0, 1]")
        if self.minibatch_size <= 0 or self.batch_size % self.minibatch_size:
            raise ValueError("minibatch_size must divide batch_size")
        if self.epochs < 1 or self.clip_eps <= 0 or self.learning_rate <= 0 or self.reward_scale <= 0:
            raise ValueError("epochs, clip_eps and learning_rate must be positive")


@dataclass
class TransitionBatch:
    """Time-major (T, N) rollout storage; N parallel worlds."""

    obs: np.ndarray
    priv_obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    episode_ids: np.ndarray
    last_values: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        shape = self.rewards.shape
        for name in ("log_probs", "values", "dones", "episode_ids"):
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} shape {getattr(self, name).shape} != rewards {shape}")
        for name in ("obs", "priv_obs", "actions"):
            if getattr(self, name).shape[:2] != shape:
                raise ValueError(f"{name} leading shape mismatch")
        if self.last_values.shape != shape[1:]:
            raise ValueError("need one bootstrap value per world")

    def __len__(self) -> int:
        return self.rewards.size


class GaeShapeError(ValueError):
    pass


def gae(rewards, values, dones, last_values, gamma: float, lam: float):
    """Generalized advantage estimates along axis 0.

    ``last_values`` bootstraps the step after the final one; a done flag
    cuts both the bootstrap and the advantage recursion.  Returns
    (advantages, returns) with returns = advantages + values.
    """
    rewards = np.asarray(rewards, float)
    values = np.asarray(values, float)
    dones = np.asarray(dones, float)
    if rewards.shape != values.shape or rewards.shape != dones.shape:
        raise GaeShapeError("rewards, values and dones must share a shape")
    last_values = np.broadcast_to(np.asarray(last_values, float), rewards.shape[1:])
    adv = np.zeros_like(rewards)
    running = np.zeros(rewards.shape[1:])
    next_value = last_values
    for t in range(rewards.shape[0] - 1, -1, -1):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * live - values[t]
        running = delta + gamma * lam * live * running
        adv[t] = running
        next_value = values[t]
    return adv, adv + values


def compute_gae(batch: TransitionBatch, cfg: PpoConfig):
    return gae(batch.rewards, batch.values, batch.dones, batch.last_values, cfg.gamma, cfg.gae_lambda)


def normalize(adv):
    adv = np.asarray(adv, float)
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def ppo_loss(params: PolicyParams, limits: CommandLimits, mb: dict, cfg: PpoConfig):
    """Total loss, gradients in ``params.tensors()`` order, and diagnostics.

    ``mb`` holds obs, priv_obs, actions (raw samples), log_probs (behaviour
    policy), advantages and returns.
    """
    obs, priv = mb["obs"], mb["priv_obs"]
    act, logp_old = mb["actions"], mb["log_probs"]
    adv, ret = mb["advantages"], mb["returns"]
    n = len(adv)

    z, actor_cache = params.actor.forward(obs, cache=True)
    th = np.tanh(z)
    mean, slope = limits.squash(th, params.head)
    floor = std_floor(params.head, limits)
    log_std = np.maximum(params.log_std, floor)
    inv_std = np.exp(-log_std)
    diff = act - mean
    zz = diff * inv_std
    logp = np.sum(-0.5 * zz * zz - log_std - 0.5 * LOG_2PI, axis=1)
    log_ratio = logp - logp_old
    ratio = np.exp(log_ratio)
    clipped = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps)
    s1, s2 = ratio * adv, clipped * adv
    policy_loss = -np.mean(np.minimum(s1, s2))
    entropy = np.sum(log_std + 0.5 * (LOG_2PI + 1.0))

    values, critic_cache = params.critic.forward(priv, cache=True)
    values = values[:, 0]
    value_loss = np.mean((values - ret) ** 2)
    loss = policy_loss + cfg.value_loss_coef * value_loss - cfg.entropy_coef * entropy

    # policy branch
    d_ratio = np.where(s1 <= s2, -adv / n, 0.0)
    d_logp = d_ratio * ratio
    d_mean = d_logp[:, None] * diff * inv_std * inv_std
    d_log_std = np.sum(d_logp[:, None] * (zz * zz - 1.0), axis=0) - cfg.entropy_coef
    d_log_std = d_log_std * (params.log_std > floor)
    d_z = d_mean * slope * (1.0 - th * th)
    gWa, gba = params.actor.backward(actor_cache, d_z)

    # value branch
    d_values = cfg.value_loss_coef * 2.0 * (values - ret) / n
    gWc, gbc = params.critic.backward(critic_cache, d_values[:, None])

    grads = []
    for W, b in zip(gWa, gba):
        grads += [W, b]
    grads.append(d_log_std)
    for W, b in zip(gWc, gbc):
        grads += [W, b]

    stats = {
        "loss": float(loss),
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(entropy),
        "kl": float(np.mean((ratio - 1.0) - log_ratio)),
        "clip_frac": float(np.mean(np.abs(ratio - 1.0) > cfg.clip_eps)),
    }
    return float(loss), grads, stats


class Adam:
    def __init__(self, shapes, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    @classmethod
    def for_params(cls, params: PolicyParams, lr: float) -> Adam:
        return cls([t.shape for t in params.tensors()], lr)

    def step(self, tensors, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        out = []
        for i, (p, g) in enumerate(zip(tensors, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            out.append(p - self.lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps))
        return out


def flatten_batch(batch: TransitionBatch, advantages, returns) -> dict:
    def flat(a):
        return a.reshape((-1,) + a.shape[2:])
    return {
        "obs": flat(batch.obs),
        "priv_obs": flat(batch.priv_obs),
        "actions": flat(batch.actions),
        "log_probs": flat(batch.log_probs),
        "advantages": flat(advantages),
        "returns": flat(returns),
    }


def ppo_update(data: dict, params: PolicyParams, opt: Adam, cfg: PpoConfig, limits: CommandLimits,
               rng: np.random.Generator):
    """Epochs of minibatch Adam steps on the clipped objective.

    Advantages are normalized over the whole batch first.  The epoch loop
    stops early once the epoch's mean KL estimate exceeds 1.5x the target.
    A non-finite loss aborts the update and returns the original parameters.
    """
    size = len(data["advantages"])
    data = dict(data, advantages=normalize(data["advantages"]))
    start = params
    history = []
    epochs_run = 0
    for _ in range(cfg.epochs):
        perm = rng.permutation(size)
        epoch_kl = []
        for lo in range(0, size, cfg.minibatch_size):
            idx = perm[lo:lo + cfg.minibatch_size]
            mb = {k: v[idx] for k, v in data.items()}
            loss, grads, stats = ppo_loss(params, limits, mb, cfg)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                return start, {"aborted": True, "reason": "non-finite loss", **stats}
            if cfg.max_grad_norm > 0:
                gnorm = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
                if gnorm > cfg.max_grad_norm:
                    grads = [g * (cfg.max_grad_norm / gnorm) for g in grads]
            params = params.with_tensors(opt.step(params.tensors(), grads))
            history.append(stats)
            epoch_kl.append(stats["kl"])
        epochs_run += 1
        if np.mean(epoch_kl) > 1.5 * cfg.kl_target:
            break
    summary = {k: float(np.mean([h[k] for h in history])) for k in history[0]}
    summary["epochs"] = epochs_run
    summary["aborted"] = False
    return params, summary
