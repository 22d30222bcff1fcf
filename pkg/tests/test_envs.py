"""Environment dynamics against hand-stepped oracles, context splits,
action clamping, and the two-view augmentation."""

import math

import numpy as np
import pytest

from protocad.envs import (DT, MSD_TEST_VALUES, MSD_TRAIN_VALUES,
                           PENDULUM_TEST_MASS, PENDULUM_TRAIN_MASS,
                           EnvContext, MsdReach, PendulumSwingup,
                           _wrap_angle, assert_disjoint_splits, augment_views,
                           context_grid, make_env, sample_context, task_dims)


def make_pendulum(mass=1.0, action_repeat=1):
    return PendulumSwingup(EnvContext(mass_mult=mass), action_repeat=action_repeat)


# ----------------------------------------------------------------------
# pendulum dynamics


def test_pendulum_hand_step_no_torque():
    env = make_pendulum()
    env._theta, env._theta_dot = math.pi / 2, 0.0
    tr = env.step(np.array([0.0]))
    # accel = 15 sin(pi/2) = 15; velocity updates first, then position
    assert env._theta_dot == pytest.approx(0.75, abs=1e-12)
    assert env._theta == pytest.approx(math.pi / 2 + 0.0375, abs=1e-12)
    assert tr.reward == pytest.approx((math.cos(env._theta) + 1) / 2, abs=1e-12)


def test_pendulum_hand_step_with_torque_and_mass():
    env = make_pendulum(mass=2.0)
    env._theta, env._theta_dot = math.pi / 2, 0.0
    env.step(np.array([0.5]))
    # torque = 2 * 0.5 = 1; accel = 15 + 3 * 1 / 2 = 16.5
    assert env._theta_dot == pytest.approx(DT * 16.5, abs=1e-12)
    assert env._theta == pytest.approx(math.pi / 2 + DT * DT * 16.5, abs=1e-12)


def test_pendulum_upright_zero_torque_reward_near_one():
    env = make_pendulum(action_repeat=2)
    env._theta, env._theta_dot = 0.0, 0.0
    tr = env.step(np.array([0.0]))
    # upright is an unstable equilibrium: exactly balanced, reward stays 1
    assert tr.reward == pytest.approx(1.0, abs=1e-12)


def test_pendulum_speed_limit_and_angle_wrap():
    env = make_pendulum()
    env._theta, env._theta_dot = math.pi / 2, 7.99
    for _ in range(50):
        env.step(np.array([1.0]))
        assert abs(env._theta_dot) <= 8.0
        assert -math.pi < env._theta <= math.pi


def test_pendulum_reset_starts_hanging():
    env = make_pendulum()
    for seed in range(20):
        obs = env.reset(seed)
        theta = math.atan2(obs[1], obs[0])
        assert abs(abs(theta) - math.pi) <= 0.05 + 1e-12
        assert abs(obs[2]) <= 0.05


def test_pendulum_mass_changes_control_authority():
    # same action sequence, lighter pendulum swings further
    light, heavy = make_pendulum(0.5), make_pendulum(1.8)
    light.reset(0), heavy.reset(0)
    light._theta = heavy._theta = math.pi
    light._theta_dot = heavy._theta_dot = 0.0
    for _ in range(10):
        light.step(np.array([1.0]))
        heavy.step(np.array([1.0]))
    assert abs(_wrap_angle(light._theta - math.pi)) > abs(_wrap_angle(heavy._theta - math.pi))


def test_wrap_angle_cases():
    assert _wrap_angle(math.pi) == pytest.approx(math.pi)
    assert _wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert _wrap_angle(0.0) == 0.0
    assert _wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
    assert _wrap_angle(-3 * math.pi / 2) == pytest.approx(math.pi / 2)
    assert _wrap_angle(2 * math.pi + 0.1) == pytest.approx(0.1)


# ----------------------------------------------------------------------
# mass-spring-damper dynamics


def test_msd_hand_step():
    env = MsdReach(EnvContext(mass_mult=2.0, damping_mult=1.5), action_repeat=1)
    env._x, env._x_dot = 0.5, 0.2
    env.step(np.array([1.0]))
    # accel = (1 - 0.5 - 0.75 * 0.2) / 2 = 0.175
    want_v = 0.2 + DT * 0.175
    assert env._x_dot == pytest.approx(want_v, abs=1e-12)
    assert env._x == pytest.approx(0.5 + DT * want_v, abs=1e-12)


def test_msd_equilibrium_reward_is_one():
    env = MsdReach(EnvContext(mass_mult=1.0, damping_mult=1.0), action_repeat=2)
    env._x, env._x_dot = 1.0, 0.0
    tr = env.step(np.array([1.0]))
    # u = 1 exactly cancels the spring at x = 1: full reward
    assert tr.reward == pytest.approx(1.0, abs=1e-12)
    assert env._x == pytest.approx(1.0)


def test_msd_reward_shape():
    env = MsdReach(EnvContext(mass_mult=1.0), action_repeat=1)
    env._x, env._x_dot = 0.0, 0.0
    tr = env.step(np.array([0.0]))
    assert tr.reward == pytest.approx(math.exp(-8.0 * (env._x - 1.0) ** 2), abs=1e-12)


def test_msd_reset():
    env = MsdReach(EnvContext(mass_mult=1.0))
    for seed in range(10):
        obs = env.reset(seed)
        assert abs(obs[0]) <= 0.05
        assert obs[1] == 0.0


# ----------------------------------------------------------------------
# common mechanics


@pytest.mark.parametrize("task", ["pendulum_swingup", "msd_reach"])
def test_episode_termination_and_determinism(task):
    env = make_env(task, EnvContext(mass_mult=1.0), action_repeat=2, episode_length=5)
    env.reset(3)
    rng = np.random.default_rng(0)
    actions = [rng.uniform(-1, 1, 1) for _ in range(5)]
    rewards = []
    for i, a in enumerate(actions):
        tr = env.step(a)
        rewards.append(tr.reward)
        assert tr.done == (i == 4)
    env.reset(3)
    again = [env.step(a).reward for a in actions]
    assert rewards == again


def test_action_clamping_counts_warnings():
    env = make_pendulum()
    env.reset(0)
    tr = env.step(np.array([1.7]))
    assert env.clamp_warnings == 1
    assert tr.action[0] == 1.0
    env.step(np.array([0.5]))
    assert env.clamp_warnings == 1


def test_action_shape_validated():
    env = make_pendulum()
    env.reset(0)
    with pytest.raises(ValueError):
        env.step(np.array([0.1, 0.2]))


def test_task_dims():
    assert task_dims("pendulum_swingup") == (3, 1)
    assert task_dims("msd_reach") == (2, 1)
    with pytest.raises(ValueError):
        task_dims("cartpole")


def test_contexts_validate():
    with pytest.raises(ValueError):
        PendulumSwingup(EnvContext(mass_mult=0.0))
    with pytest.raises(ValueError):
        MsdReach(EnvContext(mass_mult=1.0, damping_mult=-1.0))


# ----------------------------------------------------------------------
# context splits


def test_split_sizes_and_disjointness():
    assert len(PENDULUM_TRAIN_MASS) == 11
    assert len(PENDULUM_TEST_MASS) == 8
    assert len(MSD_TRAIN_VALUES) == 5
    assert len(MSD_TEST_VALUES) == 8
    assert not set(PENDULUM_TRAIN_MASS) & set(PENDULUM_TEST_MASS)
    assert not set(MSD_TRAIN_VALUES) & set(MSD_TEST_VALUES)
    assert_disjoint_splits()


def test_context_grid_sizes():
    assert len(context_grid("pendulum_swingup", "train")) == 11
    assert len(context_grid("pendulum_swingup", "test")) == 8
    assert len(context_grid("msd_reach", "train")) == 25
    assert len(context_grid("msd_reach", "test")) == 64


def test_msd_grid_is_the_full_product():
    grid = context_grid("msd_reach", "train")
    pairs = {(c.mass_mult, c.damping_mult) for c in grid}
    want = {(m, d) for m in MSD_TRAIN_VALUES for d in MSD_TRAIN_VALUES}
    assert pairs == want


def test_sample_context_stays_in_split(rng):
    for _ in range(50):
        c = sample_context("pendulum_swingup", "train", rng)
        assert c.mass_mult in PENDULUM_TRAIN_MASS
        assert c.damping_mult == 1.0
        c = sample_context("msd_reach", "test", rng)
        assert c.mass_mult in MSD_TEST_VALUES
        assert c.damping_mult in MSD_TEST_VALUES


def test_sample_context_rejects_unknown_split(rng):
    with pytest.raises(ValueError):
        sample_context("pendulum_swingup", "validation", rng)


# ----------------------------------------------------------------------
# two-view augmentation


def test_augment_views_scales_whole_sequences(rng):
    obs = rng.standard_normal((4, 6, 3))
    v1, v2 = augment_views(obs, rng)
    for v in (v1, v2):
        assert v.shape == obs.shape
        factors = v / obs
        # one factor per sequence, constant across time and coordinates
        per_seq = factors.reshape(4, -1)
        assert np.allclose(per_seq, per_seq[:, :1])
        assert np.all(per_seq[:, 0] >= 0.8) and np.all(per_seq[:, 0] <= 1.2)
    assert not np.allclose(v1, v2)


def test_augment_views_single_sequence(rng):
    obs = rng.standard_normal((6, 3))
    v1, v2 = augment_views(obs, rng)
    assert v1.shape == obs.shape == v2.shape
    f = v1 / obs
    assert np.allclose(f, f.flat[0])


def test_augment_views_validates_range(rng):
    with pytest.raises(ValueError):
        augment_views(rng.standard_normal((2, 3, 3)), rng, lo=1.5, hi=1.2)


def test_augment_views_deterministic_per_stream():
    obs = np.ones((2, 4, 3))
    a1, a2 = augment_views(obs, np.random.default_rng(7))
    b1, b2 = augment_views(obs, np.random.default_rng(7))
    np.testing.assert_array_equal(a1, b1)
    np.testing.assert_array_equal(a2, b2)
