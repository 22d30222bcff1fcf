"""Training loop: alternate update phases with episode collection.

Each cycle runs `collect_interval` paired updates (world model + context,
then behavior on the fresh posterior states), collects one exploration
episode, and periodically evaluates on held-out contexts. All training
randomness flows from one checkpointed PCG64 stream; evaluation episodes use
SeedSequence-derived child seeds so they never perturb that stream.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .agent import Agent
from .behavior import behavior_losses, imagine
from .config import RunConfig
from .envs import augment_views, make_env, sample_context, context_grid
from .optim import adam_step, ema_update
from .proto import plain_swav_loss, temporal_crossover_loss
from .replay import EpisodeRecord, ReplayBuffer
from .tensor import Tensor, backward, concat, no_grad, stop_gradient
from .world_model import RssmState, gaussian_recon_loss

LOSS_KEYS = ("loss_kl", "loss_obs", "loss_rew", "loss_tcswav", "loss_actor", "loss_critic")


class TrainingDiverged(RuntimeError):
    def __init__(self, components: dict):
        super().__init__(f"non-finite training loss; components: {components}")
        self.components = components


def time_major_flat(arr: np.ndarray) -> np.ndarray:
    """[B, M, ...] -> [M*B, ...] with row index t*B + b."""
    arr = np.asarray(arr)
    return np.swapaxes(arr, 0, 1).reshape(arr.shape[0] * arr.shape[1], *arr.shape[2:])


def stack_states_time_major(states: list[RssmState]) -> tuple[Tensor, RssmState]:
    """Stack per-step [B,*] states into [M*B,*]; also return a detached copy."""
    h = concat([st.h for st in states], axis=0)
    z = concat([st.z for st in states], axis=0)
    s = concat([h, z], axis=1)
    return s, RssmState(Tensor(h.data), Tensor(z.data))


def rollout_episode(agent: Agent, task: str, context, env_seed: int,
                    rng: np.random.Generator, mode: str,
                    action_repeat: int, episode_length: int,
                    split: str = "train") -> EpisodeRecord:
    """Run one full episode; `mode` is explore/eval/random."""
    env = make_env(task, context, action_repeat=action_repeat, episode_length=episode_length)
    obs = env.reset(env_seed)
    carry = agent.policy_init()
    obs_list, act_list, rew_list = [obs], [], []
    done = False
    while not done:
        if mode == "random":
            action = rng.uniform(-1.0, 1.0, size=agent.act_dim)
        else:
            action, carry = agent.policy_step(carry, obs, rng, mode)
        tr = env.step(action)
        obs = tr.observation
        obs_list.append(tr.observation)
        act_list.append(tr.action)
        rew_list.append(tr.reward)
        done = tr.done
    return EpisodeRecord(
        task=task, mass_mult=context.mass_mult, damping_mult=context.damping_mult,
        split=split, seed=env_seed,
        obs=np.stack(obs_list), act=np.stack(act_list), rew=np.asarray(rew_list),
    )


def eval_threads() -> int:
    raw = os.environ.get("PROTOCAD_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def world_model_update_step(agent: Agent, batch: dict, cfg: RunConfig,
                            rng: np.random.Generator, trace: list | None = None):
    """One joint step on world model + projector + prototypes.

    Two amplitude-scaled views of the same observation windows are filtered;
    the gradient view feeds the reconstruction, reward and kl terms, while
    the no-gradient view produces the balanced-assignment targets for the
    crossed-halves consistency term. Returns (loss components dict, detached
    posterior start states for the behavior phase).

    `trace`, when given, accumulates one line per wiring decision so variant
    runs can be diffed structurally.
    """
    wm, proto = agent.world_model, agent.proto
    B, M = cfg.batch_size, cfg.sequence_length
    tr = trace.append if trace is not None else (lambda line: None)

    view1, view2 = augment_views(batch["obs"], rng, cfg.aug_lo, cfg.aug_hi)
    tr("views: two independently amplitude-scaled copies of the batch")
    noise1 = rng.standard_normal((B, M, cfg.z_dim))
    noise2 = rng.standard_normal((B, M, cfg.z_dim))

    agent.model_params.zero_grad()
    roll1 = wm.observe_sequence(view1, batch["prev_act"], noise1)
    tr("filter: view-1 rollout (gradients on)")
    with no_grad():
        roll2 = wm.observe_sequence(view2, batch["prev_act"], noise2)
    tr("filter: view-2 rollout (gradients off)")

    s1, starts = stack_states_time_major(roll1.states)
    u, w, e = agent.context_parts(s1)
    tr("context: u = normalize(proj(s1)); w = softmax(u.C/T)")
    with no_grad():
        s2, _ = stack_states_time_major(roll2.states)
        u_bar = proto.project(s2, "target")
    w_bar = proto.targets(u_bar)
    tr("context: targets = stopgrad(sinkhorn(target_proj(s2), C))")

    kl_loss = wm.kl_objective(roll1.posteriors, roll1.priors)
    tr("loss: kl(posterior || prior) with free-nats floor")

    if cfg.detach_context_in_decoder:
        x_dec = proto.build_feature(s1, stop_gradient(u), stop_gradient(e), agent.feature_mode)
    else:
        x_dec = proto.build_feature(s1, u, e, agent.feature_mode)
    tr(f"feature: x = {'concat(s, e)' if agent.feature_mode == 'no_projection' else 'concat(s, u, e)'}")
    obs_loss = gaussian_recon_loss(wm.decode(x_dec), time_major_flat(view1))
    tr("loss: observation reconstruction from x")
    rew_loss = gaussian_recon_loss(wm.reward(s1), time_major_flat(batch["prev_rew"])[:, None])
    tr("loss: reward regression from s")

    if cfg.ablation == "plain_swav":
        tc_loss = plain_swav_loss(w, w_bar)
        tr("loss: consistency pairing = aligned time steps")
    else:
        tc_loss = temporal_crossover_loss(w, w_bar, B, M)
        tr("loss: consistency pairing = crossed sequence halves")

    total = kl_loss + obs_loss + rew_loss + tc_loss
    components = {
        "loss_kl": kl_loss.item(), "loss_obs": obs_loss.item(),
        "loss_rew": rew_loss.item(), "loss_tcswav": tc_loss.item(),
    }
    if not np.isfinite(total.item()):
        raise TrainingDiverged(components)
    backward(total)
    adam_step(agent.model_params, cfg.lr_world, clip_norm=cfg.grad_clip)
    ema_update(agent.target_params, agent.model_params.subset("proj/"), cfg.ema_fraction)
    proto.renormalize()
    tr("optim: adam(world+proj+proto); ema(target proj); renormalize(prototypes)")
    return components, starts


def behavior_update_step(agent: Agent, starts: RssmState, cfg: RunConfig,
                         rng: np.random.Generator) -> dict:
    """Actor then critic step on an imagined rollout from `starts`.

    The critic's gradients are zeroed after the actor step because the actor
    objective also backpropagates through the value heads; each optimizer
    consumes only the gradients of its own loss.
    """
    traj = imagine(agent, starts, cfg.horizon, rng)
    actor_loss, critic_loss = behavior_losses(agent.actor_critic, traj,
                                              cfg.discount, cfg.return_lambda)
    components = {"loss_actor": actor_loss.item(), "loss_critic": critic_loss.item()}
    if not all(np.isfinite(v) for v in components.values()):
        raise TrainingDiverged(components)
    agent.actor_params.zero_grad()
    backward(actor_loss)
    adam_step(agent.actor_params, cfg.lr_actor, clip_norm=cfg.grad_clip)
    agent.critic_params.zero_grad()
    backward(critic_loss)
    adam_step(agent.critic_params, cfg.lr_critic, clip_norm=cfg.grad_clip)
    return components


class Trainer:
    def __init__(self, cfg: RunConfig, out_dir, agent: Agent | None = None):
        cfg.validate()
        self.cfg = cfg
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.agent = agent if agent is not None else Agent(cfg)
        self.buffer = ReplayBuffer(self.out_dir / "episodes")
        self.rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
        self.env_steps = 0
        self.episodes_collected = 0
        self.updates_done = 0
        self.next_eval = cfg.eval_every
        self.last_losses = {k: 0.0 for k in LOSS_KEYS}
        self.metrics_path = self.out_dir / "metrics.jsonl"
        self._lists = cfg.context_lists()

    # ------------------------------------------------------------------
    # update phases

    def world_model_update(self, batch: dict, trace: list | None = None):
        return world_model_update_step(self.agent, batch, self.cfg, self.rng, trace)

    def behavior_update(self, starts: RssmState) -> dict:
        return behavior_update_step(self.agent, starts, self.cfg, self.rng)

    def update_once(self, trace: list | None = None) -> dict:
        batch = self.buffer.sample_batch(self.rng, self.cfg.batch_size, self.cfg.sequence_length)
        losses, starts = self.world_model_update(batch, trace)
        losses.update(self.behavior_update(starts))
        self.updates_done += 1
        self.last_losses = dict(losses)
        return losses

    # ------------------------------------------------------------------
    # interaction

    def collect_episode(self, mode: str = "explore", split: str = "train") -> EpisodeRecord:
        """Collect one episode with the training stream and store it."""
        context = sample_context(self.cfg.task, split, self.rng, self._lists)
        env_seed = int(self.rng.integers(2**31))
        rec = rollout_episode(self.agent, self.cfg.task, context, env_seed, self.rng,
                              mode, self.cfg.action_repeat, self.cfg.episode_length,
                              split=split)
        self.buffer.add(rec)
        self.episodes_collected += 1
        self.env_steps += rec.length * self.cfg.action_repeat
        return rec

    def evaluate(self, split: str, n_episodes: int, env_step: int | None = None) -> dict:
        """Mean/std undiscounted return over fresh episodes of a split."""
        env_step = self.env_steps if env_step is None else env_step
        return evaluate_policy(self.agent, split, n_episodes, self.cfg.seed,
                               env_step, self._lists)

    def random_baseline(self, n_episodes: int = 20) -> dict:
        return random_baseline_stats(self.agent, n_episodes, self.cfg.seed, self._lists)

    # ------------------------------------------------------------------
    # bookkeeping

    def _write_metric(self, phase: str, return_mean: float, return_std: float,
                      losses: dict) -> None:
        rec = {"env_step": int(self.env_steps), "phase": phase,
               "return_mean": float(return_mean), "return_std": float(return_std)}
        for k in LOSS_KEYS:
            rec[k] = float(losses.get(k, 0.0))
        with open(self.metrics_path, "a", encoding="utf-8") as f:
            f.write(json.dumps(rec) + "\n")

    def save_checkpoint(self, path=None) -> Path:
        path = Path(path) if path is not None else self.out_dir / "latest.ckpt"
        self.agent.save(path, extra_meta={"trainer": {
            "env_steps": self.env_steps,
            "episodes_collected": self.episodes_collected,
            "updates_done": self.updates_done,
            "next_eval": self.next_eval,
            "rng_state": self.rng.bit_generator.state,
            "last_losses": self.last_losses,
        }})
        return path

    @classmethod
    def resume(cls, checkpoint_path, out_dir) -> "Trainer":
        agent, meta = Agent.load(checkpoint_path)
        trainer = cls(agent.cfg, out_dir, agent=agent)
        state = meta.get("trainer")
        if state is None:
            raise ValueError(f"{checkpoint_path}: checkpoint has no trainer state")
        trainer.env_steps = int(state["env_steps"])
        trainer.episodes_collected = int(state["episodes_collected"])
        trainer.updates_done = int(state["updates_done"])
        trainer.next_eval = int(state["next_eval"])
        trainer.last_losses = {k: float(v) for k, v in state["last_losses"].items()}
        trainer.rng.bit_generator.state = state["rng_state"]
        return trainer

    # ------------------------------------------------------------------
    # the outer loop

    def train(self, progress: bool = False) -> dict:
        cfg = self.cfg
        (self.out_dir / "resolved-config.json").write_text(cfg.to_json() + "\n", encoding="utf-8")
        baseline = self.random_baseline()
        (self.out_dir / "baseline.json").write_text(json.dumps(baseline, indent=2) + "\n", encoding="utf-8")

        while self.episodes_collected < cfg.seed_episodes:
            rec = self.collect_episode(mode="random")
            self._write_metric("train", rec.return_, 0.0, self.last_losses)

        start_time = time.time()
        cycles = 0
        while self.env_steps < cfg.total_env_steps:
            sums = {k: 0.0 for k in LOSS_KEYS}
            for _ in range(cfg.collect_interval):
                losses = self.update_once()
                for k in LOSS_KEYS:
                    sums[k] += losses[k]
            phase_losses = {k: v / cfg.collect_interval for k, v in sums.items()}
            rec = self.collect_episode(mode="explore")
            self._write_metric("train", rec.return_, 0.0, phase_losses)
            cycles += 1

            while self.env_steps >= self.next_eval:
                for split, phase in (("train", "eval_train"), ("test", "eval_test")):
                    summary = self.evaluate(split, cfg.eval_episodes, env_step=self.next_eval)
                    self._write_metric(phase, summary["return_mean"], summary["return_std"],
                                       self.last_losses)
                self.next_eval += cfg.eval_every

            if cycles % cfg.checkpoint_every == 0:
                self.save_checkpoint()
            if progress:
                r = rec.return_
                print(f"[{self.env_steps:>7d} steps] episode return {r:8.2f} "
                      f"kl {phase_losses['loss_kl']:.3f} obs {phase_losses['loss_obs']:.3f} "
                      f"rew {phase_losses['loss_rew']:.4f} tc {phase_losses['loss_tcswav']:.3f} "
                      f"({time.time() - start_time:.0f}s)", flush=True)

        final = self.out_dir / "final.ckpt"
        self.save_checkpoint(final)
        self.save_checkpoint()
        return {"env_steps": self.env_steps, "episodes": self.episodes_collected,
                "updates": self.updates_done, "baseline": baseline,
                "wall_clock_s": time.time() - start_time}


# ----------------------------------------------------------------------
# evaluation-side reporting helpers


def evaluate_policy(agent: Agent, split: str, n_episodes: int, seed: int,
                    env_step: int = 0, lists=None) -> dict:
    """Mean/std undiscounted return over fresh episodes of a split.

    Episodes are independent with per-episode derived seeds, so the training
    stream is never perturbed; PROTOCAD_THREADS may run them in parallel, and
    aggregation ignores completion order.
    """
    cfg = agent.cfg
    lists = lists if lists is not None else cfg.context_lists()

    def run_one(index: int) -> float:
        ss = np.random.SeedSequence([seed, 2, env_step, 0 if split == "train" else 1, index])
        rng = np.random.default_rng(ss)
        context = sample_context(cfg.task, split, rng, lists)
        rec = rollout_episode(agent, cfg.task, context, int(rng.integers(2**31)),
                              rng, "eval", cfg.action_repeat, cfg.episode_length,
                              split=split)
        return rec.return_

    threads = eval_threads()
    indices = list(range(n_episodes))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rets = list(pool.map(run_one, indices))
    else:
        rets = [run_one(i) for i in indices]
    return {
        "split": split, "episodes": n_episodes,
        "return_mean": float(np.mean(rets)), "return_std": float(np.std(rets)),
    }


def random_baseline_stats(agent: Agent, n_episodes: int, seed: int, lists=None) -> dict:
    """Return statistics of the uniform-random policy on test contexts."""
    cfg = agent.cfg
    lists = lists if lists is not None else cfg.context_lists()
    rets = []
    for i in range(n_episodes):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 3, i]))
        context = sample_context(cfg.task, "test", rng, lists)
        rec = rollout_episode(agent, cfg.task, context, int(rng.integers(2**31)),
                              rng, "random", cfg.action_repeat, cfg.episode_length,
                              split="test")
        rets.append(rec.return_)
    return {
        "split": "test", "episodes": n_episodes, "policy": "random",
        "return_mean": float(np.mean(rets)), "return_std": float(np.std(rets)),
    }


def evaluate_grid(agent: Agent, splits, episodes: int, seed: int,
                  lists=None) -> list[dict]:
    """Per-context return statistics over the full context grid of each split."""
    cfg = agent.cfg
    lists = lists if lists is not None else cfg.context_lists()
    threads = eval_threads()
    jobs = []
    for split in splits:
        for ctx in context_grid(cfg.task, split, lists):
            jobs.append((split, ctx))

    def run(job):
        split, ctx = job
        rets = []
        for i in range(episodes):
            ss = np.random.SeedSequence([seed, 5, 0 if split == "train" else 1,
                                         int(round(ctx.mass_mult * 1000)),
                                         int(round(ctx.damping_mult * 1000)), i])
            rng = np.random.default_rng(ss)
            rec = rollout_episode(agent, cfg.task, ctx, int(rng.integers(2**31)), rng,
                                  "eval", cfg.action_repeat, cfg.episode_length, split=split)
            rets.append(rec.return_)
        return {"mass_mult": ctx.mass_mult, "damping_mult": ctx.damping_mult,
                "split": split, "return_mean": float(np.mean(rets)),
                "return_std": float(np.std(rets)), "episodes": episodes}

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run, jobs))
    else:
        rows = [run(job) for job in jobs]
    return rows


def export_feature_rows(agent: Agent, split: str, episodes: int, seed: int):
    """Yield per-step context diagnostics: (task, context, step, u, e, argmax w, max w)."""
    cfg = agent.cfg
    lists = cfg.context_lists()
    for i in range(episodes):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 4, i]))
        context = sample_context(cfg.task, split, rng, lists)
        env = make_env(cfg.task, context, action_repeat=cfg.action_repeat,
                       episode_length=cfg.episode_length)
        obs = env.reset(int(rng.integers(2**31)))
        carry = agent.policy_init()
        for step in range(cfg.episode_length):
            action, carry = agent.policy_step(carry, obs, rng, "eval")
            with no_grad():
                u, w, e = agent.context_parts(carry.state.feature())
            yield {
                "task": cfg.task, "mass_mult": context.mass_mult,
                "damping_mult": context.damping_mult, "step": step,
                "u": u.data[0], "e": e.data[0],
                "w_argmax": int(np.argmax(w.data[0])), "w_max": float(np.max(w.data[0])),
            }
            tr = env.step(action)
            obs = tr.observation
            if tr.done:
                break
