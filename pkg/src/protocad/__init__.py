"""Desk-scale model-based reinforcement learning with prototypical context
assignments: a latent world model trained jointly with a balanced-assignment
context code, plus an imagination actor-critic, built on a small numpy
autodiff core so every gradient path is checkable end to end."""

from .agent import Agent
from .behavior import (ActorCritic, AgentConfig, ImaginedTrajectory, act,
                       behavior_losses, imagine, lambda_returns)
from .checks import CheckResult, run_checks
from .config import ABLATIONS, ConfigError, RunConfig, config_from_dict, load_config, profile
from .envs import (EnvContext, MsdReach, PendulumSwingup, Transition,
                   assert_disjoint_splits, augment_views, context_grid,
                   make_env, sample_context, task_dims)
from .optim import (CheckpointError, ParamSet, adam_step, ema_update,
                    load_tensors, save_tensors)
from .proto import (ProtoConfig, ProtoContext, aggregate, assign_softmax,
                    plain_swav_loss, sinkhorn_assign, temporal_crossover_loss)
from .replay import (EpisodeError, EpisodeRecord, ReplayBuffer, load_episode,
                     save_episode)
from .tensor import (EPS, DiagGaussian, Tensor, apply_primitive, backward,
                     default_dtype, gaussian_ops, grad_enabled, no_grad,
                     set_default_dtype, stop_gradient)
from .trainer import (Trainer, TrainingDiverged, behavior_update_step,
                      evaluate_grid, evaluate_policy, export_feature_rows,
                      random_baseline_stats, rollout_episode,
                      world_model_update_step)
from .world_model import (RssmState, SequenceRollout, WorldModel,
                          WorldModelConfig, gaussian_recon_loss)

__version__ = "0.1.0"

__all__ = [
    "ABLATIONS", "ActorCritic", "Agent", "AgentConfig", "CheckResult",
    "CheckpointError", "ConfigError", "DiagGaussian", "EPS", "EnvContext",
    "EpisodeError", "EpisodeRecord", "ImaginedTrajectory", "MsdReach",
    "ParamSet", "PendulumSwingup", "ProtoConfig", "ProtoContext",
    "ReplayBuffer", "RssmState", "RunConfig", "SequenceRollout", "Tensor",
    "Trainer", "TrainingDiverged", "Transition", "WorldModel",
    "WorldModelConfig", "act", "adam_step", "aggregate", "apply_primitive",
    "assert_disjoint_splits", "assign_softmax", "augment_views", "backward",
    "behavior_losses", "behavior_update_step", "config_from_dict",
    "context_grid", "default_dtype", "ema_update", "evaluate_grid",
    "evaluate_policy", "export_feature_rows", "gaussian_ops",
    "gaussian_recon_loss", "grad_enabled", "imagine", "lambda_returns",
    "load_config", "load_episode", "load_tensors", "make_env", "no_grad",
    "plain_swav_loss", "profile", "random_baseline_stats", "rollout_episode",
    "run_checks", "sample_context", "save_episode", "save_tensors",
    "set_default_dtype", "sinkhorn_assign", "stop_gradient", "task_dims",
    "temporal_crossover_loss", "world_model_update_step", "__version__",
]
