"""The full agent: world model, context module and actor-critic, bundled with
their parameter sets, plus the one shared feature path and checkpoint IO.

`context_feature` is intentionally the only place a latent feature x is ever
assembled from a state; imagination and environment-time acting both route
through it, so the two can never drift apart.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .behavior import ActorCritic, AgentConfig, act
from .config import RunConfig, config_from_dict
from .envs import task_dims
from .optim import (CheckpointError, ParamSet, load_tensors, paramset_state,
                    restore_paramset, save_tensors)
from .proto import ProtoConfig, ProtoContext
from .tensor import Tensor, default_dtype, no_grad, set_default_dtype
from .world_model import RssmState, WorldModel, WorldModelConfig


class Agent:
    def __init__(self, cfg: RunConfig, init_rng: np.random.Generator | None = None):
        self.cfg = cfg
        set_default_dtype(cfg.dtype)
        obs_dim, act_dim = task_dims(cfg.task)
        self.obs_dim, self.act_dim = obs_dim, act_dim
        self.feature_mode = "no_projection" if cfg.ablation == "no_projection" else "full"

        self.model_params = ParamSet()    # world model + online projector + prototypes
        self.target_params = ParamSet()   # target projector, updated only by EMA
        self.actor_params = ParamSet()
        self.critic_params = ParamSet()

        rng = init_rng if init_rng is not None else np.random.default_rng(
            np.random.SeedSequence([cfg.seed, 0]))
        s_dim = cfg.h_dim + cfg.z_dim
        proto_cfg = ProtoConfig(
            num_prototypes=cfg.num_prototypes, proto_dim=cfg.proto_dim,
            temperature=cfg.temperature, sinkhorn_eps=cfg.sinkhorn_eps,
            sinkhorn_iters=cfg.sinkhorn_iters, ema_fraction=cfg.ema_fraction,
        )
        wm_cfg = WorldModelConfig(
            obs_dim=obs_dim, act_dim=act_dim, h_dim=cfg.h_dim, z_dim=cfg.z_dim,
            hidden_dim=cfg.hidden_dim, beta_kl=cfg.beta_kl, free_nats=cfg.free_nats,
        )
        agent_cfg = AgentConfig(
            horizon=cfg.horizon, discount=cfg.discount, return_lambda=cfg.return_lambda,
            expl_noise=cfg.expl_noise, hidden_dim=cfg.hidden_dim,
        )
        self.proto = ProtoContext(proto_cfg, s_dim, self.model_params, self.target_params, rng)
        self.feature_dim = self.proto.feature_dim(s_dim, self.feature_mode)
        self.world_model = WorldModel(wm_cfg, self.model_params, rng, self.feature_dim)
        self.actor_critic = ActorCritic(agent_cfg, self.feature_dim, act_dim,
                                        self.actor_params, self.critic_params, rng)

    # ------------------------------------------------------------------
    # the single feature path

    def context_parts(self, s: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        """(u, w, e) for a stacked state matrix, online projector."""
        u = self.proto.project(s, "online")
        w = self.proto.assign(u)
        e = self.proto.aggregate(w)
        return u, w, e

    def context_feature(self, s: Tensor) -> Tensor:
        u, _, e = self.context_parts(s)
        return self.proto.build_feature(s, u, e, self.feature_mode)

    # ------------------------------------------------------------------
    # online filtering for environment interaction

    @dataclass
    class Carry:
        state: RssmState
        prev_action: np.ndarray

    def policy_init(self) -> "Agent.Carry":
        return Agent.Carry(self.world_model.initial_state(1),
                           np.zeros(self.act_dim))

    def policy_step(self, carry: "Agent.Carry", obs: np.ndarray, rng: np.random.Generator,
                    mode: str) -> tuple[np.ndarray, "Agent.Carry"]:
        wm = self.world_model
        with no_grad():
            h = wm.recurrent_step(carry.state, Tensor(carry.prev_action[None].astype(default_dtype())))
            post = wm.posterior(h, Tensor(np.asarray(obs, dtype=default_dtype())[None]))
            z = post.sample(rng.standard_normal((1, wm.cfg.z_dim)))
            state = RssmState(h, z)
            x = self.context_feature(state.feature())
            action = act(self.actor_critic, x, mode, rng, self.cfg.expl_noise)
        return action, Agent.Carry(state, action)

    # ------------------------------------------------------------------
    # persistence

    def save(self, path, extra_meta: dict | None = None) -> None:
        arrays: dict[str, np.ndarray] = {}
        steps: dict[str, int] = {}
        for prefix, ps in self._groups():
            a, s = paramset_state(ps, prefix)
            arrays.update(a)
            steps.update(s)
        meta = {
            "config": dataclasses.asdict(self.cfg),
            "adam_steps": steps,
            "proto_reinit": {"seed": self.proto.reinit_seed, "count": self.proto.reinit_count},
        }
        if extra_meta:
            meta.update(extra_meta)
        save_tensors(path, arrays, meta)

    def _groups(self):
        return [
            ("model/", self.model_params),
            ("target/", self.target_params),
            ("actor/", self.actor_params),
            ("critic/", self.critic_params),
        ]

    @classmethod
    def load(cls, path) -> tuple["Agent", dict]:
        arrays, meta = load_tensors(path)
        if "config" not in meta:
            raise CheckpointError(f"{path}: checkpoint carries no config echo")
        try:
            cfg = config_from_dict(meta["config"])
        except Exception as e:
            raise CheckpointError(f"{path}: invalid config echo: {e}") from e
        agent = cls(cfg)
        steps = meta.get("adam_steps", {})
        for prefix, ps in agent._groups():
            restore_paramset(ps, arrays, steps, prefix)
        reinit = meta.get("proto_reinit", {})
        agent.proto.reinit_seed = int(reinit.get("seed", agent.proto.reinit_seed))
        agent.proto.reinit_count = int(reinit.get("count", 0))
        return agent, meta
