import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hierkick.coach import (OBS_DIM, CommandLimits, HighLevelObs, ObservationFault, Variant, actor_forward,
                            build_obs, end_to_end_forward, gaussian_log_prob, init_params, integrate_command,
                            obs_array, sample_action, std_floor, true_targets)
from hierkick.nn import MLP, PolicyParams
from hierkick.world import WorldState, rotate

LIM = CommandLimits()
GOAL = np.array([4.5, 0.0])


def world(robot=(0.0, 0.0), heading=0.0, ball=(2.0, 0.0), vel=(0.0, 0.0, 0.0)):
    return WorldState(np.array(robot, float), np.asarray(float(heading)), np.array(vel, float),
                      np.array(ball, float), np.zeros(2), np.asarray(True), np.asarray(0.0))


def truth_obs(s, variant=Variant.HIERKICK, c_prev=np.zeros(3), v_rb=None):
    p_ball, p_goal = true_targets(s, GOAL)
    return build_obs(s, p_ball, p_goal, c_prev, variant, v_rb)


def zero_params(head="increment", hidden=(4,)):
    rng = np.random.default_rng(0)
    p = PolicyParams.init(OBS_DIM, 18, hidden, hidden, rng, head=head)
    return p.with_tensors([np.zeros_like(t) for t in p.tensors()])


def test_aligned_frames():
    o = truth_obs(world())
    np.testing.assert_allclose(o.p_robot_ball, [2.0, 0.0])
    assert o.d_ball == 2.0


def test_rotation_oracle():
    o = truth_obs(world(heading=np.pi / 2))
    np.testing.assert_allclose(o.p_robot_ball, [0.0, -2.0], atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(rx=st.floats(-4, 4), ry=st.floats(-3, 3), h=st.floats(-np.pi, np.pi), bx=st.floats(-4, 4),
       by=st.floats(-3, 3))
def test_rotation_matches_explicit_matrix(rx, ry, h, bx, by):
    o = truth_obs(world((rx, ry), h, (bx, by)))
    c, s = np.cos(h), np.sin(h)
    d = np.array([bx - rx, by - ry])
    expected = np.array([c * d[0] + s * d[1], -s * d[0] + c * d[1]])
    np.testing.assert_allclose(o.p_robot_ball, expected, atol=1e-9)
    assert abs(o.d_ball - np.hypot(*d)) < 1e-9


@settings(max_examples=100, deadline=None)
@given(rx=st.floats(-4, 4), ry=st.floats(-3, 3), h=st.floats(-np.pi, np.pi), bx=st.floats(-4, 4),
       by=st.floats(-3, 3), spin=st.floats(-np.pi, np.pi), sx=st.floats(-5, 5), sy=st.floats(-5, 5))
def test_frame_covariance(rx, ry, h, bx, by, spin, sx, sy):
    """Moving robot, ball and goal by one rigid motion leaves the observation unchanged."""
    s = world((rx, ry), h, (bx, by))
    a = obs_array(*true_targets(s, GOAL), s.robot_vel, np.zeros(3), Variant.HIERKICK)
    shift = np.array([sx, sy])
    moved = world(rotate(np.array([rx, ry]), spin) + shift, h + spin, rotate(np.array([bx, by]), spin) + shift)
    b = obs_array(*true_targets(moved, rotate(GOAL, spin) + shift), moved.robot_vel, np.zeros(3),
                  Variant.HIERKICK)
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_ablation_purity():
    s = world((0.3, -0.4), 0.7, (1.5, 0.8), vel=(0.2, 0.1, -0.3))
    c_prev, v_rb = np.array([0.1, -0.05, 0.02]), np.array([0.3, -0.2])
    full = truth_obs(s, Variant.HIERKICK, c_prev, v_rb).as_array()
    nod = truth_obs(s, Variant.NO_DISTANCES, c_prev, v_rb).as_array()
    rep = truth_obs(s, Variant.REPLACE_CPREV, c_prev, v_rb).as_array()
    e2e = truth_obs(s, Variant.END_TO_END, c_prev, v_rb).as_array()
    assert np.array_equal(nod[[4, 5]], [0.0, 0.0])
    keep = [i for i in range(12) if i not in (4, 5)]
    assert np.array_equal(nod[keep], full[keep])
    assert np.array_equal(rep[9:], [0.3, -0.2, 0.0])
    assert np.array_equal(rep[:9], full[:9])
    assert np.array_equal(e2e, full)


def test_non_finite_estimate_faults():
    with pytest.raises(ObservationFault):
        build_obs(world(), np.array([np.nan, 0.0]), np.zeros(2), np.zeros(3))


def test_obs_round_trip():
    o = truth_obs(world((0.1, 0.2), 0.3, (1.0, -1.0)))
    assert np.array_equal(HighLevelObs.from_array(o.as_array()).as_array(), o.as_array())


def test_integrate_examples():
    np.testing.assert_array_equal(integrate_command(np.zeros(3), np.array([0.2, 0.0, 0.0]), LIM), [0.2, 0, 0])
    top = np.array([1.2, 0.0, 0.0])
    np.testing.assert_array_equal(integrate_command(top, np.array([0.2, 0.0, 0.0]), LIM), top)


def test_prefix_sum_oracle(rng):
    incs = rng.uniform(-1, 1, (100, 3)) * LIM.inc
    cmd = np.zeros(3)
    ref = [0.0, 0.0, 0.0]
    for inc in incs:
        cmd = integrate_command(cmd, inc, LIM)
        ref = [min(max(r + float(i), lo), hi) for r, i, lo, hi in zip(ref, inc, LIM.command_low, LIM.command_high)]
        np.testing.assert_allclose(cmd, ref, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3))
def test_increment_clamping(out):
    cmd = integrate_command(np.zeros(3), np.array(out), LIM)
    assert np.all(np.abs(cmd) <= LIM.inc + 1e-15)


def test_zero_network_means():
    obs = np.ones(OBS_DIM)
    mean, _ = actor_forward(obs, zero_params(), LIM)
    np.testing.assert_array_equal(mean, np.zeros(3))
    np.testing.assert_array_equal(end_to_end_forward(obs, zero_params("absolute"), LIM), np.zeros(3))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e4, 1e4), min_size=3, max_size=3))
def test_outputs_stay_in_range(bias):
    p = zero_params()
    p.actor.biases[-1] = np.array(bias)
    mean, _ = actor_forward(np.zeros(OBS_DIM), p, LIM)
    assert np.all(np.abs(mean) <= LIM.inc)
    q = zero_params("absolute")
    q.actor.biases[-1] = np.array(bias)
    cmd = end_to_end_forward(np.zeros(OBS_DIM), q, LIM)
    assert np.all(cmd >= LIM.low) and np.all(cmd <= LIM.high)


def test_tiny_network_by_hand():
    w1, b1, w2, b2 = 0.7, -0.2, -1.3, 0.05
    net = MLP([np.array([[w1]]), np.array([[w2]])], [np.array([b1]), np.array([b2])])
    for x in (-2.0, -0.1, 0.0, 0.4, 3.0):
        z = w1 * x + b1
        h = z if z > 0 else np.exp(z) - 1.0
        assert abs(net.forward(np.array([x]))[0] - (w2 * h + b2)) < 1e-15


def test_actor_forward_deterministic(rng):
    p = init_params(Variant.HIERKICK, (16, 16), (16, 16), rng, LIM)
    obs = rng.normal(size=(5, OBS_DIM))
    a, b = actor_forward(obs, p, LIM), actor_forward(obs, p, LIM)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_batch_invariant_forward(rng):
    p = init_params(Variant.HIERKICK, (32, 32), (32, 32), rng, LIM)
    obs = rng.normal(size=(64, OBS_DIM))
    full = actor_forward(obs, p, LIM)[0]
    for i in (0, 17, 63):
        assert np.array_equal(actor_forward(obs[i:i + 1], p, LIM)[0][0], full[i])


def test_std_floor():
    p = zero_params()
    p.log_std = np.full(3, -50.0)
    _, log_std = actor_forward(np.zeros(OBS_DIM), p, LIM)
    np.testing.assert_allclose(np.exp(log_std), 0.01 * LIM.inc)
    assert np.array_equal(log_std, std_floor("increment", LIM))


def test_degenerate_sampler_returns_clamped_mean():
    mean = np.array([0.5, -0.05, 0.02])
    with np.errstate(invalid="ignore"):
        raw, action, _ = sample_action(mean, np.full(3, -np.inf), normals=np.ones(3), low=-LIM.inc, high=LIM.inc)
    np.testing.assert_array_equal(raw, mean)
    np.testing.assert_array_equal(action, np.clip(mean, -LIM.inc, LIM.inc))


def test_sampler_statistics(rng):
    mean, log_std = np.array([0.1, -0.2, 0.3]), np.log(np.array([0.05, 0.2, 1.0]))
    raw, _, _ = sample_action(np.tile(mean, (100_000, 1)), log_std, rng)
    std = np.exp(log_std)
    assert np.all(np.abs(raw.mean(axis=0) - mean) <= 3 * std / np.sqrt(100_000))
    assert np.all(np.abs(raw.std(axis=0) - std) <= 3 * std / np.sqrt(2 * 100_000))


def test_log_prob_density_oracle(rng):
    for _ in range(100):
        mean, std = rng.normal(size=3), rng.uniform(0.01, 2.0, 3)
        raw, _, logp = sample_action(mean, np.log(std), rng)
        density = 1.0
        for x, m, s in zip(raw, mean, std):
            density *= np.exp(-((x - m) ** 2) / (2 * s * s)) / (s * np.sqrt(2 * np.pi))
        assert abs(logp - np.log(density)) < 1e-10
        assert abs(gaussian_log_prob(raw, mean, np.log(std)) - logp) < 1e-12


def test_variant_heads():
    assert Variant.END_TO_END.head == "absolute"
    assert {v.head for v in Variant if v is not Variant.END_TO_END} == {"increment"}
