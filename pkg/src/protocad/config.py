"""Run configuration: one flat JSON document, strictly validated.

Every tunable in the engine has exactly one key here. Unknown keys are a
hard error (they are always a typo of a real one), and each run writes the
fully resolved document back out as ``resolved-config.json``.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .envs import (MSD_TEST_VALUES, MSD_TRAIN_VALUES, PENDULUM_TEST_MASS,
                   PENDULUM_TRAIN_MASS, ContextLists, TASKS)

ABLATIONS = ("full", "no_projection", "plain_swav")


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    task: str = "pendulum_swingup"
    seed: int = 0
    ablation: str = "full"
    dtype: str = "float32"

    # schedule
    total_env_steps: int = 60_000
    seed_episodes: int = 2
    collect_interval: int = 100       # model/behavior update pairs between episodes
    batch_size: int = 8
    sequence_length: int = 20
    action_repeat: int = 2
    episode_length: int = 200         # decision steps
    eval_every: int = 10_000          # env steps between evaluation rounds
    eval_episodes: int = 5
    checkpoint_every: int = 1         # collection cycles between checkpoint writes

    # world model
    h_dim: int = 64
    z_dim: int = 16
    hidden_dim: int = 64
    beta_kl: float = 1.0
    free_nats: float = 1.0

    # prototypical context
    num_prototypes: int = 32
    proto_dim: int = 32
    temperature: float = 0.1
    sinkhorn_eps: float = 0.05
    sinkhorn_iters: int = 3
    ema_fraction: float = 0.05

    # behavior
    horizon: int = 10
    discount: float = 0.99
    return_lambda: float = 0.95
    expl_noise: float = 0.3

    # optimization
    lr_world: float = 3e-4
    lr_actor: float = 8e-5
    lr_critic: float = 8e-5
    grad_clip: float = 100.0

    # augmentation and decoder wiring
    aug_lo: float = 0.8
    aug_hi: float = 1.2
    detach_context_in_decoder: bool = False

    # context split overrides (null -> built-in lists)
    pendulum_train_mass: list = field(default_factory=lambda: list(PENDULUM_TRAIN_MASS))
    pendulum_test_mass: list = field(default_factory=lambda: list(PENDULUM_TEST_MASS))
    msd_train_values: list = field(default_factory=lambda: list(MSD_TRAIN_VALUES))
    msd_test_values: list = field(default_factory=lambda: list(MSD_TEST_VALUES))

    def context_lists(self) -> ContextLists:
        return ContextLists(
            pendulum_train_mass=tuple(self.pendulum_train_mass),
            pendulum_test_mass=tuple(self.pendulum_test_mass),
            msd_train_values=tuple(self.msd_train_values),
            msd_test_values=tuple(self.msd_test_values),
        )

    def validate(self) -> "RunConfig":
        if self.task not in TASKS:
            raise ConfigError(f"config key 'task': unknown task {self.task!r}")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"config key 'ablation': must be one of {ABLATIONS}, got {self.ablation!r}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"config key 'dtype': must be float32 or float64, got {self.dtype!r}")
        if self.sequence_length % 2 != 0:
            raise ConfigError("config key 'sequence_length': must be even (the consistency loss pairs sequence halves)")
        positive = [
            "total_env_steps", "seed_episodes", "collect_interval", "batch_size",
            "sequence_length", "action_repeat", "episode_length", "eval_every",
            "eval_episodes", "checkpoint_every", "h_dim", "z_dim", "hidden_dim",
            "num_prototypes", "proto_dim", "temperature", "sinkhorn_eps",
            "sinkhorn_iters", "horizon", "lr_world", "lr_actor", "lr_critic",
            "grad_clip",
        ]
        for key in positive:
            if getattr(self, key) <= 0:
                raise ConfigError(f"config key {key!r}: must be positive")
        for key in ("discount", "return_lambda", "ema_fraction"):
            v = getattr(self, key)
            if not (0.0 <= v <= 1.0):
                raise ConfigError(f"config key {key!r}: must lie in [0, 1]")
        if self.expl_noise < 0:
            raise ConfigError("config key 'expl_noise': must be non-negative")
        if not (0.0 < self.aug_lo <= self.aug_hi):
            raise ConfigError("config keys 'aug_lo'/'aug_hi': need 0 < aug_lo <= aug_hi")
        if self.free_nats < 0 or self.beta_kl < 0:
            raise ConfigError("config keys 'free_nats'/'beta_kl': must be non-negative")
        if self.sequence_length > self.episode_length:
            raise ConfigError("config key 'sequence_length': cannot exceed episode_length")
        return self

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)


_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}


def config_from_dict(doc: dict) -> RunConfig:
    unknown = sorted(set(doc) - _FIELDS)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    return RunConfig(**doc).validate()


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return config_from_dict(doc)


def profile(name: str, task: str = "pendulum_swingup") -> RunConfig:
    """Named presets. `desk` fits a laptop-scale run; `reference` uses the
    larger published-scale settings."""
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}")
    if name == "desk":
        return RunConfig(task=task).validate()
    if name == "reference":
        return RunConfig(
            task=task,
            batch_size=16,
            sequence_length=50,
            horizon=15,
            num_prototypes=100,
            proto_dim=32,
        ).validate()
    raise ConfigError(f"unknown profile {name!r} (try 'desk' or 'reference')")
