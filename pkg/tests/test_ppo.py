import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import gae_bruteforce, gradient_relative_error, random_episode, random_loss_problem
from hierkick.coach import Variant, actor_forward, gaussian_log_prob, init_params
from hierkick.config import load_config
from hierkick.env import SoccerEnv, training_streams
from hierkick.ppo import Adam, GaeShapeError, PpoConfig, flatten_batch, gae, normalize, ppo_loss, ppo_update
from hierkick.rollout import collect_rollouts
from hierkick.train import CHECKPOINT_NAME, decode_checkpoint, encode_checkpoint, train


def test_gae_single_step_example():
    adv, ret = gae([1.0], [0.0], [1.0], 0.0, 0.99, 0.95)
    assert adv[0] == 1.0 and ret[0] == 1.0


def test_gae_lambda_one_telescopes():
    """With lambda = 1 the advantage is the discounted return minus the value."""
    r, v = np.array([1.0, 2.0, -0.5, 0.3]), np.array([0.2, -0.1, 0.4, 0.0])
    g = 0.9
    adv, ret = gae(r, v, np.zeros(4), 1.5, g, 1.0)
    mc = [sum(g ** k * r[t + k] for k in range(4 - t)) + g ** (4 - t) * 1.5 for t in range(4)]
    np.testing.assert_allclose(ret, mc, atol=1e-12)


def test_gae_lambda_zero_is_td():
    r, v = np.array([1.0, 2.0, 3.0]), np.array([0.5, 0.25, 0.125])
    adv, _ = gae(r, v, np.array([0.0, 0.0, 1.0]), 9.0, 0.5, 0.0)
    np.testing.assert_allclose(adv, [1 + 0.5 * 0.25 - 0.5, 2 + 0.5 * 0.125 - 0.25, 3 - 0.125])


def test_gae_matches_bruteforce(rng):
    for _ in range(300):
        r, v, d, last = random_episode(rng)
        g, lam = rng.uniform(0.5, 1.0), rng.uniform(0.0, 1.0)
        adv, _ = gae(r[:, None], v[:, None], d[:, None], [last], g, lam)
        assert np.max(np.abs(adv[:, 0] - gae_bruteforce(r, v, d, last, g, lam))) < 1e-10


def test_gae_done_cuts_across_episodes():
    """Two episodes back to back in one world equal the two computed separately."""
    r, v = np.array([1.0, -1.0, 2.0, 0.5]), np.array([0.1, 0.2, 0.3, 0.4])
    d = np.array([0.0, 1.0, 0.0, 0.0])
    adv, _ = gae(r, v, d, 0.7, 0.99, 0.95)
    a1, _ = gae(r[:2], v[:2], d[:2], 123.0, 0.99, 0.95)
    a2, _ = gae(r[2:], v[2:], d[2:], 0.7, 0.99, 0.95)
    np.testing.assert_allclose(adv, np.concatenate([a1, a2]), atol=1e-14)


def test_gae_shape_error():
    with pytest.raises(GaeShapeError):
        gae(np.zeros(3), np.zeros(4), np.zeros(3), 0.0, 0.99, 0.95)


@pytest.mark.parametrize("head", ["increment", "absolute"])
def test_gradient_check(head):
    rng = np.random.default_rng(7 if head == "increment" else 8)
    errors = [gradient_relative_error(*random_loss_problem(rng, head)) for _ in range(50)]
    assert max(errors) < 1e-5


def test_unit_ratio_policy_loss_is_zero(rng):
    params, limits, mb, cfg = random_loss_problem(rng, "increment")
    mean, log_std = actor_forward(mb["obs"], params, limits)
    mb = dict(mb, log_probs=gaussian_log_prob(mb["actions"], mean, log_std), advantages=normalize(mb["advantages"]))
    _, _, stats = ppo_loss(params, limits, mb, cfg)
    assert abs(stats["policy_loss"] + np.mean(mb["advantages"])) < 1e-12
    assert abs(stats["policy_loss"]) < 1e-12
    assert abs(stats["kl"]) < 1e-15


def test_clip_zeroes_gradient_outside_band(rng):
    """Positive advantage with the ratio above 1 + eps contributes nothing to the actor."""
    params, limits, mb, cfg = random_loss_problem(rng, "increment")
    mean, log_std = actor_forward(mb["obs"], params, limits)
    n = len(mb["actions"])
    mb = dict(mb, log_probs=gaussian_log_prob(mb["actions"], mean, log_std) - 1.0, advantages=np.ones(n))
    cfg = PpoConfig(batch_size=n, minibatch_size=n, entropy_coef=0.0)
    _, grads, stats = ppo_loss(params, limits, mb, cfg)
    n_actor = 2 * len(params.actor.weights)
    assert all(np.all(g == 0) for g in grads[:n_actor + 1])
    assert stats["clip_frac"] == 1.0
    assert abs(stats["policy_loss"] + (1 + cfg.clip_eps)) < 1e-12


@settings(max_examples=30, deadline=None)
@given(scale=st.floats(0.1, 1e3), shift=st.floats(-100, 100))
def test_advantage_normalization_invariance(scale, shift):
    a = np.random.default_rng(0).normal(size=64)
    np.testing.assert_allclose(normalize(a * scale + shift), normalize(a), atol=1e-6)


def _update_inputs(rng, head="increment", n=64):
    params, limits, mb, cfg = random_loss_problem(rng, head, n=n)
    return params, limits, mb


def test_reward_rescaling_leaves_policy_step_unchanged(rng):
    """Scaling advantages by a positive constant does not change the update after normalization."""
    params, limits, mb = _update_inputs(rng)
    cfg = PpoConfig(batch_size=64, minibatch_size=16, epochs=2, value_loss_coef=0.0, kl_target=1e9)
    a, _ = ppo_update(mb, params, Adam.for_params(params, 1e-3), cfg, limits, np.random.default_rng(3))
    b, _ = ppo_update(dict(mb, advantages=mb["advantages"] * 50.0), params, Adam.for_params(params, 1e-3), cfg,
                      limits, np.random.default_rng(3))
    np.testing.assert_allclose(a.flat(), b.flat(), atol=1e-9)


def test_kl_early_stop(rng):
    params, limits, mb = _update_inputs(rng)
    cfg = PpoConfig(batch_size=64, minibatch_size=16, epochs=10, kl_target=1e-12, learning_rate=1e-2)
    _, stats = ppo_update(mb, params, Adam.for_params(params, 1e-2), cfg, limits, np.random.default_rng(0))
    assert stats["epochs"] == 1
    cfg = PpoConfig(batch_size=64, minibatch_size=16, epochs=3, kl_target=1e9)
    _, stats = ppo_update(mb, params, Adam.for_params(params, 3e-4), cfg, limits, np.random.default_rng(0))
    assert stats["epochs"] == 3


def test_non_finite_loss_aborts(rng):
    params, limits, mb = _update_inputs(rng)
    mb = dict(mb, returns=np.full(64, np.inf))
    cfg = PpoConfig(batch_size=64, minibatch_size=16)
    with np.errstate(invalid="ignore", over="ignore"):
        out, stats = ppo_update(mb, params, Adam.for_params(params, 3e-4), cfg, limits, np.random.default_rng(0))
    assert stats["aborted"] and out is params


def test_gradient_clipping_bounds_first_step(rng):
    # Adam's first step hides the gradient scale, so read the clipped gradient back from its first moment
    params, limits, mb = _update_inputs(rng)
    cfg = PpoConfig(batch_size=64, minibatch_size=64)
    _, grads, _ = ppo_loss(params, limits, mb, cfg)
    norm = np.sqrt(sum(np.sum(g * g) for g in grads))
    assert norm > 0
    opt = Adam.for_params(params, 1.0)
    clipped = PpoConfig(batch_size=64, minibatch_size=64, epochs=1, max_grad_norm=norm / 10)
    ppo_update(mb, params, opt, clipped, limits, np.random.default_rng(0))
    m_norm = np.sqrt(sum(np.sum(m * m) for m in opt.m)) / (1 - opt.beta1)
    assert m_norm == pytest.approx(norm / 10, rel=1e-9)


def test_adam_matches_hand_rule():
    opt = Adam([(2,)], lr=0.1)
    p = np.array([1.0, -1.0])
    for g in ([0.5, -2.0], [0.1, 0.3]):
        p = opt.step([p], [np.array(g)])[0]
    m = 0.9 * (0.1 * np.array([0.5, -2.0])) + 0.1 * np.array([0.1, 0.3])
    v = 0.999 * (0.001 * np.array([0.25, 4.0])) + 0.001 * np.array([0.01, 0.09])
    first = np.array([1.0, -1.0]) - 0.1 * np.sign([0.5, -2.0])
    expect = first - 0.1 * (m / (1 - 0.81)) / (np.sqrt(v / (1 - 0.999 ** 2)) + 1e-8)
    np.testing.assert_allclose(p, expect, atol=1e-6)


# -- rollouts and checkpoints ---------------------------------------------


def _rollout(cfg, n, steps, seed=0):
    params = init_params(Variant.HIERKICK, (16,), (16,), np.random.default_rng(seed), cfg.limits)
    env = SoccerEnv(cfg, Variant.HIERKICK, training_streams(seed, n))
    return collect_rollouts(env, params, cfg, steps_per_world=steps)


def test_rollout_deterministic(cfg):
    a, b = _rollout(cfg, 4, 30), _rollout(cfg, 4, 30)
    for name in ("obs", "priv_obs", "actions", "log_probs", "rewards", "values", "dones"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_world_count_does_not_change_trajectories(cfg):
    many, one = _rollout(cfg, 64, 120), _rollout(cfg, 1, 120)
    for name in ("obs", "actions", "log_probs", "rewards", "dones"):
        assert np.array_equal(getattr(many, name)[:, 0], getattr(one, name)[:, 0]), name


def test_episode_length_never_exceeds_limit(cfg):
    batch = _rollout(cfg, 8, 260)
    log = batch.info["episodes"]
    assert log.episodes >= 8
    assert max(log.lengths) <= 100
    ids = batch.episode_ids
    for w in range(8):
        _, counts = np.unique(ids[:, w], return_counts=True)
        assert counts.max() <= 100


def test_timeout_bootstrap_folded_into_reward(cfg):
    batch = _rollout(cfg, 2, 100)
    raw = batch.info["raw_rewards"] * cfg.ppo.reward_scale
    diff = batch.rewards - raw
    assert np.all(diff[batch.dones == 0] == 0)
    assert np.any(diff[batch.dones == 1] != 0)


def test_checkpoint_round_trip_keeps_adam_moments(cfg, tmp_path):
    ck = train(cfg, Variant.END_TO_END, tmp_path, iterations=1)
    back = decode_checkpoint((tmp_path / CHECKPOINT_NAME).read_bytes())
    assert back.params.equals(ck.params) and back.variant is Variant.END_TO_END
    assert back.opt.t == ck.opt.t > 0 and back.iteration == 1
    assert all(np.array_equal(a, b) for a, b in zip(back.opt.m, ck.opt.m))
    assert all(np.array_equal(a, b) for a, b in zip(back.opt.v, ck.opt.v))
    assert encode_checkpoint(back) == encode_checkpoint(ck)


def test_training_is_bitwise_deterministic(cfg, tmp_path):
    train(cfg, Variant.HIERKICK, tmp_path / "a", iterations=2, seed=5)
    train(cfg, Variant.HIERKICK, tmp_path / "b", iterations=2, seed=5)
    assert (tmp_path / "a" / CHECKPOINT_NAME).read_bytes() == (tmp_path / "b" / CHECKPOINT_NAME).read_bytes()
    train(cfg, Variant.HIERKICK, tmp_path / "c", iterations=2, seed=6)
    assert (tmp_path / "a" / CHECKPOINT_NAME).read_bytes() != (tmp_path / "c" / CHECKPOINT_NAME).read_bytes()


def test_flatten_batch_layout(cfg):
    batch = _rollout(cfg, 3, 5)
    flat = flatten_batch(batch, batch.rewards, batch.values)
    assert flat["obs"].shape == (15, 12)
    assert np.array_equal(flat["obs"][4], batch.obs[1, 1])
