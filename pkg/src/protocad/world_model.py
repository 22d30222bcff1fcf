"""Recurrent latent state-space model.

The latent state is the pair s_t = (h_t, z_t): a deterministic GRU path and a
stochastic code. One filtering step runs

    h_t = GRU(h_{t-1}, embed(z_{t-1}, a_{t-1}))
    posterior q(z_t | h_t, o_t)     prior p(z_t | h_t)

The observation decoder reads the full latent feature x_t (which includes the
context blocks built elsewhere); the reward head reads only s_t, so reward
errors can never steer the context representation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nets import GRUCell, Linear, MLP, Trunk
from .optim import ParamSet
from .tensor import (DiagGaussian, Tensor, concat, default_dtype, elu,
                     maximum_const, mean, mul, square, sub, sum_)


@dataclass
class WorldModelConfig:
    obs_dim: int
    act_dim: int
    h_dim: int = 64
    z_dim: int = 16
    hidden_dim: int = 64
    beta_kl: float = 1.0
    free_nats: float = 1.0


@dataclass
class RssmState:
    h: Tensor
    z: Tensor

    def feature(self) -> Tensor:
        return concat([self.h, self.z], axis=1)

    def detached(self) -> "RssmState":
        return RssmState(Tensor(self.h.data.copy()), Tensor(self.z.data.copy()))


@dataclass
class SequenceRollout:
    states: list[RssmState]            # one per time step, posterior samples
    posteriors: list[DiagGaussian]
    priors: list[DiagGaussian]
    final: RssmState


class WorldModel:
    def __init__(self, cfg: WorldModelConfig, params: ParamSet, rng: np.random.Generator,
                 feature_dim: int):
        self.cfg = cfg
        self.feature_dim = feature_dim
        c = cfg
        self.embed = Linear(params, "wm/embed", c.z_dim + c.act_dim, c.hidden_dim, rng)
        self.cell = GRUCell(params, "wm/gru", c.hidden_dim, c.h_dim, rng)
        self.post_trunk = Trunk(params, "wm/post", c.h_dim + c.obs_dim, c.hidden_dim, 2, rng)
        self.post_mean = Linear(params, "wm/post_mean", c.hidden_dim, c.z_dim, rng)
        self.post_std = Linear(params, "wm/post_std", c.hidden_dim, c.z_dim, rng)
        self.prior_trunk = Trunk(params, "wm/prior", c.h_dim, c.hidden_dim, 2, rng)
        self.prior_mean = Linear(params, "wm/prior_mean", c.hidden_dim, c.z_dim, rng)
        self.prior_std = Linear(params, "wm/prior_std", c.hidden_dim, c.z_dim, rng)
        self.decoder = MLP(params, "wm/dec", feature_dim, c.hidden_dim, c.obs_dim, 2, rng)
        self.reward_head = MLP(params, "wm/rew", c.h_dim + c.z_dim, c.hidden_dim, 1, 2, rng)

    def initial_state(self, batch: int, dtype=None) -> RssmState:
        c = self.cfg
        dt = dtype if dtype is not None else default_dtype()
        return RssmState(
            Tensor(np.zeros((batch, c.h_dim), dtype=dt)),
            Tensor(np.zeros((batch, c.z_dim), dtype=dt)),
        )

    def recurrent_step(self, state: RssmState, action: Tensor) -> Tensor:
        x = elu(self.embed(concat([state.z, action], axis=1)))
        return self.cell(state.h, x)

    def posterior(self, h: Tensor, obs: Tensor) -> DiagGaussian:
        trunk = self.post_trunk(concat([h, obs], axis=1))
        return DiagGaussian.from_raw(self.post_mean(trunk), self.post_std(trunk))

    def prior(self, h: Tensor) -> DiagGaussian:
        trunk = self.prior_trunk(h)
        return DiagGaussian.from_raw(self.prior_mean(trunk), self.prior_std(trunk))

    def observe_sequence(self, obs: np.ndarray, act: np.ndarray, noise: np.ndarray,
                         init: RssmState | None = None) -> SequenceRollout:
        """Filter a sequence. obs [B,M,obs], act [B,M,act] (action that PRECEDED
        each observation), noise [B,M,z]. Carrying `final` into another call
        over the remaining steps reproduces the one-pass result exactly.
        """
        obs, act, noise = (np.asarray(a) for a in (obs, act, noise))
        if obs.ndim != 3 or act.ndim != 3 or noise.ndim != 3:
            raise ValueError("observe_sequence expects [B,M,*] arrays")
        if obs.shape[:2] != act.shape[:2] or obs.shape[:2] != noise.shape[:2]:
            raise ValueError(
                f"observe_sequence: length mismatch obs {obs.shape}, act {act.shape}, noise {noise.shape}"
            )
        obs = obs.astype(default_dtype(), copy=False)
        act = act.astype(default_dtype(), copy=False)
        noise = noise.astype(default_dtype(), copy=False)
        batch, steps = obs.shape[0], obs.shape[1]
        state = init if init is not None else self.initial_state(batch)
        states: list[RssmState] = []
        posteriors: list[DiagGaussian] = []
        priors: list[DiagGaussian] = []
        for t in range(steps):
            h = self.recurrent_step(state, Tensor(act[:, t, :]))
            post = self.posterior(h, Tensor(obs[:, t, :]))
            pri = self.prior(h)
            z = post.sample(noise[:, t, :])
            state = RssmState(h, z)
            states.append(state)
            posteriors.append(post)
            priors.append(pri)
        return SequenceRollout(states, posteriors, priors, state)

    def kl_objective(self, posteriors: list[DiagGaussian], priors: list[DiagGaussian]) -> Tensor:
        """beta * mean over samples of max(free_nats, KL(q || p)).

        The floor applies per (batch, step) sample before averaging, so a
        posterior that matches its prior everywhere yields beta * free_nats.
        """
        if len(posteriors) != len(priors) or not posteriors:
            raise ValueError("kl_objective: posterior/prior lists must align and be non-empty")
        kls = [q.kl(p) for q, p in zip(posteriors, priors)]
        stacked = concat(kls, axis=0)
        floored = maximum_const(stacked, self.cfg.free_nats) if self.cfg.free_nats > 0 else stacked
        return mul(mean(floored), self.cfg.beta_kl)

    def decode(self, x: Tensor) -> Tensor:
        return self.decoder(x)

    def reward(self, s: Tensor) -> Tensor:
        if s.shape[1] != self.cfg.h_dim + self.cfg.z_dim:
            raise ValueError(
                f"reward head reads the latent state only; got width {s.shape[1]}, "
                f"expected {self.cfg.h_dim + self.cfg.z_dim}"
            )
        return self.reward_head(s)


def gaussian_recon_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean over samples of 0.5 * ||pred - target||^2 (unit-variance Gaussian NLL
    up to an additive constant). A miss of 1 in one coordinate contributes 0.5."""
    t = Tensor(np.asarray(target, dtype=pred.data.dtype))
    if t.shape != pred.shape:
        raise ValueError(f"recon loss: target shape {t.shape} != pred {pred.shape}")
    per = mul(sum_(square(sub(pred, t)), axis=-1), 0.5)
    return mean(per)
