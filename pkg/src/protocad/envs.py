"""Self-contained control environments with parameterized dynamics.

Two tasks, both low-dimensional and integrable with semi-implicit Euler:

* ``pendulum_swingup`` -- torque-limited pendulum starting near the bottom;
  the physical mass is scaled by the context's ``mass_mult``.
* ``msd_reach`` -- forced mass-spring-damper driven toward x = 1; the context
  scales both the mass and the damping coefficient.

A context is sampled once per episode and never changes within it. Train and
test context values are disjoint lists compiled in below, overridable through
the run config.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DT = 0.05
PENDULUM_SPEED_LIMIT = 8.0
PENDULUM_TORQUE_SCALE = 2.0  # action in [-1,1] maps to torque in [-2,2]

PENDULUM_TRAIN_MASS = [0.75, 0.8, 0.85, 0.9, 0.95, 1.0, 1.05, 1.1, 1.15, 1.2, 1.25]
PENDULUM_TEST_MASS = [0.2, 0.4, 0.5, 0.7, 1.3, 1.5, 1.6, 1.8]
MSD_TRAIN_VALUES = [0.75, 0.85, 1.00, 1.15, 1.25]
MSD_TEST_VALUES = [0.2, 0.3, 0.4, 0.5, 1.5, 1.6, 1.7, 1.8]


@dataclass(frozen=True)
class EnvContext:
    mass_mult: float
    damping_mult: float = 1.0


@dataclass(frozen=True)
class Transition:
    observation: np.ndarray
    action: np.ndarray
    reward: float
    done: bool


@dataclass(frozen=True)
class ContextLists:
    """Per-task context value lists; the defaults reproduce the built-in splits."""

    pendulum_train_mass: tuple = tuple(PENDULUM_TRAIN_MASS)
    pendulum_test_mass: tuple = tuple(PENDULUM_TEST_MASS)
    msd_train_values: tuple = tuple(MSD_TRAIN_VALUES)
    msd_test_values: tuple = tuple(MSD_TEST_VALUES)


def _check_split(split: str) -> None:
    if split not in ("train", "test"):
        raise ValueError(f"unknown split {split!r}")


class PendulumSwingup:
    """Pendulum with angle measured from upright; starts hanging down.

    theta_dd = (3 g / (2 l)) sin(theta) + 3 u / (m l^2), with g=10, l=1 and
    m = mass_mult. Velocity updates before position (semi-implicit Euler).
    Sub-step reward (cos(theta) + 1)/2 is normalized by the action repeat so
    one decision step earns at most 1.
    """

    obs_dim = 3
    act_dim = 1

    def __init__(self, context: EnvContext, action_repeat: int = 2, episode_length: int = 200):
        if context.mass_mult <= 0:
            raise ValueError("mass_mult must be positive")
        self._context = context
        self.action_repeat = action_repeat
        self.episode_length = episode_length
        self.clamp_warnings = 0
        self._theta = math.pi
        self._theta_dot = 0.0
        self._steps = 0

    @property
    def context(self) -> EnvContext:
        return self._context

    def reset(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        self._theta = _wrap_angle(math.pi + rng.uniform(-0.05, 0.05))
        self._theta_dot = rng.uniform(-0.05, 0.05)
        self._steps = 0
        self.clamp_warnings = 0
        return self._observe()

    def _observe(self) -> np.ndarray:
        return np.array([math.cos(self._theta), math.sin(self._theta), self._theta_dot])

    def step(self, action) -> Transition:
        a = _clamp_action(self, action)
        torque = PENDULUM_TORQUE_SCALE * float(a[0])
        m = self._context.mass_mult * 1.0
        reward = 0.0
        for _ in range(self.action_repeat):
            accel = 15.0 * math.sin(self._theta) + 3.0 * torque / m
            self._theta_dot = min(max(self._theta_dot + DT * accel, -PENDULUM_SPEED_LIMIT), PENDULUM_SPEED_LIMIT)
            self._theta = _wrap_angle(self._theta + DT * self._theta_dot)
            reward += (math.cos(self._theta) + 1.0) / 2.0 / self.action_repeat
        self._steps += 1
        return Transition(self._observe(), a, reward, self._steps >= self.episode_length)


class MsdReach:
    """Mass-spring-damper pushed toward the target position x = 1.

    x_dd = (u - k x - d x_dot) / m with k = 1, d = 0.5 * damping_mult and
    m = mass_mult. Holding x = 1 requires u = 1, exactly the force bound.
    """

    obs_dim = 2
    act_dim = 1

    def __init__(self, context: EnvContext, action_repeat: int = 2, episode_length: int = 200):
        if context.mass_mult <= 0 or context.damping_mult <= 0:
            raise ValueError("context multipliers must be positive")
        self._context = context
        self.action_repeat = action_repeat
        self.episode_length = episode_length
        self.clamp_warnings = 0
        self._x = 0.0
        self._x_dot = 0.0
        self._steps = 0

    @property
    def context(self) -> EnvContext:
        return self._context

    def reset(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        self._x = rng.uniform(-0.05, 0.05)
        self._x_dot = 0.0
        self._steps = 0
        self.clamp_warnings = 0
        return self._observe()

    def _observe(self) -> np.ndarray:
        return np.array([self._x, self._x_dot])

    def step(self, action) -> Transition:
        a = _clamp_action(self, action)
        u = float(a[0])
        k = 1.0
        d = 0.5 * self._context.damping_mult
        m = self._context.mass_mult
        reward = 0.0
        for _ in range(self.action_repeat):
            accel = (u - k * self._x - d * self._x_dot) / m
            self._x_dot += DT * accel
            self._x += DT * self._x_dot
            reward += math.exp(-8.0 * (self._x - 1.0) ** 2) / self.action_repeat
        self._steps += 1
        return Transition(self._observe(), a, reward, self._steps >= self.episode_length)


def _wrap_angle(theta: float) -> float:
    """Wrap into (-pi, pi]."""
    return math.pi - (math.pi - theta) % (2.0 * math.pi)


def _clamp_action(env, action) -> np.ndarray:
    a = np.asarray(action, dtype=np.float64).reshape(-1)
    if a.shape != (env.act_dim,):
        raise ValueError(f"action shape {a.shape} != ({env.act_dim},)")
    if np.any(a < -1.0) or np.any(a > 1.0):
        env.clamp_warnings += 1
        a = np.clip(a, -1.0, 1.0)
    return a


TASKS = {
    "pendulum_swingup": PendulumSwingup,
    "msd_reach": MsdReach,
}


def task_dims(task: str) -> tuple[int, int]:
    cls = _task_class(task)
    return cls.obs_dim, cls.act_dim


def _task_class(task: str):
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; known: {sorted(TASKS)}")
    return TASKS[task]


def make_env(task: str, context: EnvContext, action_repeat: int = 2, episode_length: int = 200):
    return _task_class(task)(context, action_repeat=action_repeat, episode_length=episode_length)


def sample_context(task: str, split: str, rng: np.random.Generator,
                   lists: ContextLists | None = None) -> EnvContext:
    """Uniform draw from the split's value lists (independent per parameter)."""
    _task_class(task)
    _check_split(split)
    lists = lists or ContextLists()
    if task == "pendulum_swingup":
        values = lists.pendulum_train_mass if split == "train" else lists.pendulum_test_mass
        return EnvContext(mass_mult=float(rng.choice(np.asarray(values))), damping_mult=1.0)
    values = lists.msd_train_values if split == "train" else lists.msd_test_values
    arr = np.asarray(values)
    return EnvContext(mass_mult=float(rng.choice(arr)), damping_mult=float(rng.choice(arr)))


def context_grid(task: str, split: str, lists: ContextLists | None = None) -> list[EnvContext]:
    """Every context of a split, in a fixed enumeration order."""
    _task_class(task)
    _check_split(split)
    lists = lists or ContextLists()
    if task == "pendulum_swingup":
        values = lists.pendulum_train_mass if split == "train" else lists.pendulum_test_mass
        return [EnvContext(mass_mult=float(v), damping_mult=1.0) for v in values]
    values = lists.msd_train_values if split == "train" else lists.msd_test_values
    return [
        EnvContext(mass_mult=float(mv), damping_mult=float(dv))
        for mv in values
        for dv in values
    ]


def assert_disjoint_splits(lists: ContextLists | None = None) -> None:
    """Train/test context values must never overlap."""
    lists = lists or ContextLists()
    pairs = [
        ("pendulum mass", lists.pendulum_train_mass, lists.pendulum_test_mass),
        ("msd values", lists.msd_train_values, lists.msd_test_values),
    ]
    for name, train, test in pairs:
        overlap = set(train) & set(test)
        if overlap:
            raise ValueError(f"train/test overlap in {name}: {sorted(overlap)}")


def augment_views(obs: np.ndarray, rng: np.random.Generator,
                  lo: float = 0.8, hi: float = 1.2) -> tuple[np.ndarray, np.ndarray]:
    """Two independently amplitude-scaled copies of an observation sequence.

    One scalar factor ~ U(lo, hi) is drawn per view per sequence and applied
    to every time step of that sequence. Accepts [M, obs] or [B, M, obs].
    """
    if not (0.0 < lo <= hi):
        raise ValueError(f"invalid amplitude range ({lo}, {hi})")
    obs = np.asarray(obs)
    if obs.ndim == 2:
        factors_shape = (1, 1)
        n_seq = 1
    elif obs.ndim == 3:
        factors_shape = (obs.shape[0], 1, 1)
        n_seq = obs.shape[0]
    else:
        raise ValueError(f"augment_views expects [M,obs] or [B,M,obs], got {obs.shape}")
    f1 = rng.uniform(lo, hi, size=n_seq).reshape(factors_shape)
    f2 = rng.uniform(lo, hi, size=n_seq).reshape(factors_shape)
    return obs * f1, obs * f2
