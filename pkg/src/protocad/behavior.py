"""Imagination-based actor-critic.

The actor is a tanh-squashed diagonal Gaussian over [-1,1]^act_dim and the
critic a scalar head; both read the full latent feature x. Training rolls the
learned prior forward from posterior start states, scores the trajectory with
lambda-returns, and differentiates straight through the dynamics: the actor
maximizes the summed returns (gradients reach psi only; other parameter sets
are simply not stepped), the critic regresses onto stopped targets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nets import Linear, MLP, Trunk
from .optim import ParamSet
from .tensor import (DiagGaussian, Tensor, add, mean, mul, no_grad, square,
                     stop_gradient, sub, tanh)
from .world_model import RssmState


@dataclass
class AgentConfig:
    horizon: int = 15
    discount: float = 0.99
    return_lambda: float = 0.95
    expl_noise: float = 0.3
    hidden_dim: int = 64


class ActorCritic:
    def __init__(self, cfg: AgentConfig, feature_dim: int, act_dim: int,
                 actor_params: ParamSet, critic_params: ParamSet, rng: np.random.Generator):
        self.cfg = cfg
        self.act_dim = act_dim
        self.actor_trunk = Trunk(actor_params, "actor", feature_dim, cfg.hidden_dim, 2, rng)
        self.actor_mean = Linear(actor_params, "actor/mean", cfg.hidden_dim, act_dim, rng)
        self.actor_std = Linear(actor_params, "actor/std", cfg.hidden_dim, act_dim, rng)
        self.critic = MLP(critic_params, "critic", feature_dim, cfg.hidden_dim, 1, 2, rng)

    def actor_dist(self, x: Tensor) -> DiagGaussian:
        """Pre-squash Gaussian; actions are tanh of its draws."""
        t = self.actor_trunk(x)
        return DiagGaussian.from_raw(self.actor_mean(t), self.actor_std(t))

    def sample_action(self, x: Tensor, noise: np.ndarray) -> Tensor:
        return tanh(self.actor_dist(x).sample(noise))

    def mean_action(self, x: Tensor) -> Tensor:
        return tanh(self.actor_dist(x).mode())

    def value(self, x: Tensor) -> Tensor:
        return self.critic(x)  # [N, 1]


@dataclass
class ImaginedTrajectory:
    features: list[Tensor]   # H+1 entries of [N, feature_dim]
    values: list[Tensor]     # H+1 entries of [N, 1]
    rewards: list[Tensor]    # H entries of [N, 1]


def imagine(agent, start: RssmState, horizon: int, rng: np.random.Generator) -> ImaginedTrajectory:
    """Roll the prior forward from (detached) start states under the actor.

    Every step samples z from the prior, never the posterior: imagination has
    no observations. Features reuse the agent's single context-feature path.
    """
    wm = agent.world_model
    ac = agent.actor_critic
    n = start.h.shape[0]
    z_dim = wm.cfg.z_dim
    state = start
    features: list[Tensor] = []
    values: list[Tensor] = []
    rewards: list[Tensor] = []
    for tau in range(horizon + 1):
        s = state.feature()
        x = agent.context_feature(s)
        features.append(x)
        values.append(ac.value(x))
        if tau < horizon:
            rewards.append(wm.reward(s))
            a = ac.sample_action(x, rng.standard_normal((n, ac.act_dim)))
            h = wm.recurrent_step(state, a)
            z = wm.prior(h).sample(rng.standard_normal((n, z_dim)))
            state = RssmState(h, z)
    return ImaginedTrajectory(features, values, rewards)


def lambda_returns(rewards: list, values: list, discount: float, lam: float) -> list:
    """Backward recursion V(t) = r_t + discount*((1-lam)*v_{t+1} + lam*V(t+1)),
    bootstrapped with the final value. len(values) must be len(rewards)+1.

    lam=0 reduces each entry to the one-step target r_t + discount*v_{t+1};
    lam=1 reduces to the discounted sum with a terminal bootstrap.
    """
    if len(values) != len(rewards) + 1:
        raise ValueError(f"need len(values)=len(rewards)+1, got {len(values)} and {len(rewards)}")
    returns = [None] * len(values)
    returns[-1] = values[-1]
    nxt = values[-1]
    for t in reversed(range(len(rewards))):
        mix = add(mul(values[t + 1], 1.0 - lam), mul(nxt, lam))
        nxt = add(rewards[t], mul(mix, discount))
        returns[t] = nxt
    return returns


def behavior_losses(ac: ActorCritic, traj: ImaginedTrajectory, discount: float, lam: float):
    """(actor_loss, critic_loss): negated return sum, and value regression on
    stop-gradient features against stop-gradient targets."""
    returns = lambda_returns(traj.rewards, traj.values, discount, lam)
    total = returns[0]
    for r in returns[1:]:
        total = add(total, r)
    actor_loss = mul(mean(total), -1.0)

    critic_sum = None
    for x, target in zip(traj.features, returns):
        v = ac.value(stop_gradient(x))
        term = mul(square(sub(v, stop_gradient(target))), 0.5)
        critic_sum = term if critic_sum is None else add(critic_sum, term)
    critic_loss = mean(critic_sum)
    return actor_loss, critic_loss


def act(ac: ActorCritic, x: Tensor, mode: str, rng: np.random.Generator,
        expl_noise: float) -> np.ndarray:
    """One environment action from a feature row. `explore` samples the actor
    and adds clamped Gaussian noise; `eval` takes the squashed mean."""
    with no_grad():
        if mode == "explore":
            a = ac.sample_action(x, rng.standard_normal((x.shape[0], ac.act_dim))).data
            a = a + rng.normal(0.0, expl_noise, size=a.shape)
            return np.clip(a, -1.0, 1.0)[0]
        if mode == "eval":
            return ac.mean_action(x).data[0]
    raise ValueError(f"unknown act mode {mode!r}")
