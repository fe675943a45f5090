"""Independent reference implementations shared by the unit and acceptance tests."""

import numpy as np

from hierkick.coach import OBS_DIM, PRIV_OBS_DIM, CommandLimits, actor_forward, gaussian_log_prob
from hierkick.nn import PolicyParams
from hierkick.perception import CameraCalib
from hierkick.ppo import PpoConfig, ppo_loss


def gae_bruteforce(rewards, values, dones, last_value, gamma, lam):
    """Single-world advantages as explicit sums of discounted TD errors."""
    T = len(rewards)
    nxt = np.append(values[1:], last_value)
    delta = [rewards[t] + gamma * nxt[t] * (1 - dones[t]) - values[t] for t in range(T)]
    adv = np.zeros(T)
    for t in range(T):
        total, k = 0.0, 0
        while t + k < T:
            total += (gamma * lam) ** k * delta[t + k]
            if dones[t + k]:
                break
            k += 1
        adv[t] = total
    return adv


def random_episode(rng, max_len=32):
    T = int(rng.integers(1, max_len + 1))
    dones = np.zeros(T)
    if rng.random() < 0.5:
        dones[-1] = 1.0
    return rng.normal(size=T), rng.normal(size=T), dones, float(rng.normal())


def random_loss_problem(rng, head, n=8):
    """Tiny networks and a minibatch placed away from the loss's kinks."""
    limits = CommandLimits()
    params = PolicyParams.init(OBS_DIM, PRIV_OBS_DIM, (int(rng.integers(2, 5)),), (int(rng.integers(2, 5)),),
                               rng, init_log_std=float(rng.uniform(-1.0, 0.5)), head=head)
    params = params.with_tensors([t + 0.3 * rng.normal(size=t.shape) for t in params.tensors()])
    cfg = PpoConfig(batch_size=n, minibatch_size=n, entropy_coef=float(rng.uniform(0, 0.05)),
                    value_loss_coef=float(rng.uniform(0.1, 1.0)))
    obs = rng.normal(size=(n, OBS_DIM))
    priv = rng.normal(size=(n, PRIV_OBS_DIM))
    actions = rng.normal(size=(n, 3)) * 0.3
    # behaviour log-probs chosen so ratios sit inside, below and above the clip band but not on its edges
    probe = dict(obs=obs, priv_obs=priv, actions=actions, log_probs=np.zeros(n), advantages=np.ones(n),
                 returns=np.zeros(n))
    logp = _current_log_prob(params, limits, probe, cfg)
    offsets = rng.choice([-0.5, -0.1, 0.0, 0.1, 0.5], size=n) + rng.uniform(-0.05, 0.05, size=n)
    mb = dict(probe, log_probs=logp + offsets, advantages=rng.normal(size=n), returns=rng.normal(size=n))
    return params, limits, mb, cfg


def _current_log_prob(params, limits, mb, cfg):
    mean, log_std = actor_forward(mb["obs"], params, limits)
    return gaussian_log_prob(mb["actions"], mean, log_std)


def finite_difference(params, limits, mb, cfg, h=1e-6):
    flat = params.flat()
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        up, down = flat.copy(), flat.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (ppo_loss(params.from_flat(up), limits, mb, cfg)[0]
                   - ppo_loss(params.from_flat(down), limits, mb, cfg)[0]) / (2 * h)
    return grad


def gradient_relative_error(params, limits, mb, cfg):
    _, grads, _ = ppo_loss(params, limits, mb, cfg)
    analytic = np.concatenate([g.ravel() for g in grads])
    numeric = finite_difference(params, limits, mb, cfg)
    return float(np.max(np.abs(analytic - numeric)) / max(np.max(np.abs(analytic)), np.max(np.abs(numeric))))


def pinhole(point, fx, fy, cx, cy, R, t):
    """Independent forward model written out component by component."""
    px, py, pz = point - t
    # camera coordinates are R^T (p - t)
    xc = R[0, 0] * px + R[1, 0] * py + R[2, 0] * pz
    yc = R[0, 1] * px + R[1, 1] * py + R[2, 1] * pz
    zc = R[0, 2] * px + R[1, 2] * py + R[2, 2] * pz
    return fx * xc / zc + cx, fy * yc / zc + cy, zc


def random_rotation(rng):
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_calib(rng):
    fx, fy = rng.uniform(200, 1200, 2)
    cx, cy = rng.uniform(100, 700, 2)
    K = np.array([[fx, 0, cx], [0, fy, cy], [0, 0, 1.0]])
    return CameraCalib(K, random_rotation(rng), rng.uniform(-2, 2, 3))


def frustum_point(calib, rng):
    z = rng.uniform(0.3, 12.0)
    cam = np.array([rng.uniform(-0.8, 0.8) * z, rng.uniform(-0.6, 0.6) * z, z])
    return calib.R @ cam + calib.t
