"""Built-in verification suites behind the ``check`` CLI command.

Each suite exercises one load-bearing property with self-contained inputs:
finite-difference agreement for every gradient path, balanced-assignment
marginals, return-estimate identities, consistency-loss hand values,
gradient isolation between heads, and serialization round-trips. Suites run
in double precision regardless of the configured training dtype.
"""

from __future__ import annotations

import tempfile
import traceback
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .behavior import behavior_losses, imagine, lambda_returns
from .config import RunConfig
from .nets import GRUCell
from .optim import ParamSet
from .proto import (ProtoConfig, ProtoContext, plain_swav_loss,
                    sinkhorn_assign, temporal_crossover_loss)
from .replay import EpisodeRecord, load_episode, save_episode
from .tensor import (DiagGaussian, Tensor, backward, concat, default_dtype,
                     elu, exp, l2_normalize, log, matmul, maximum_const, mean,
                     mul, narrow, no_grad, set_default_dtype, sigmoid,
                     softmax, softplus, square, stop_gradient, sum_, tanh,
                     transpose)
from .world_model import WorldModel, WorldModelConfig, gaussian_recon_loss


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


# ----------------------------------------------------------------------
# finite-difference machinery


def fd_check_tensors(fn, tensors, step: float = 1e-5) -> float:
    """Max relative error between backward gradients and central differences.

    `fn()` must return a scalar Tensor computed from `tensors` (all float64,
    requires_grad). Relative error uses a 1e-3 magnitude floor so exact-zero
    gradients compare against finite-difference noise sensibly.
    """
    for t in tensors:
        t.grad = None
    loss = fn()
    backward(loss)
    worst = 0.0
    for t in tensors:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        aflat = analytic.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            with no_grad():
                flat[i] = orig + step
                fp = fn().item()
                flat[i] = orig - step
                fm = fn().item()
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * step)
            err = abs(aflat[i] - numeric) / max(abs(aflat[i]), abs(numeric), 1e-3)
            worst = max(worst, err)
    return worst


def fd_check(fn, arrays, step: float = 1e-5) -> float:
    xs = [Tensor(np.asarray(a, dtype=np.float64), requires_grad=True) for a in arrays]
    return fd_check_tensors(lambda: fn(*xs), xs, step)


def _proj_const(rng, shape) -> Tensor:
    """Fixed random weights that reduce a tensor to a scalar via sum(w * t)."""
    return Tensor(rng.standard_normal(shape))


def _primitive_cases(rng):
    """Each case: (name, fn, arrays). Inputs avoid non-smooth points."""
    def r(*shape):
        return rng.standard_normal(shape)

    cases = []

    p = _proj_const(rng, (3, 2))
    cases.append(("matmul", lambda a, b: sum_(mul(matmul(a, b), p)),
                  [r(3, 4), r(4, 2)]))
    p_add = _proj_const(rng, (3, 4))
    cases.append(("add_broadcast", lambda a, b: sum_(mul(a + b, p_add)),
                  [r(3, 4), r(4)]))
    cases.append(("sub", lambda a, b: sum_(square(a - b)), [r(5), r(5)]))
    p_mul = _proj_const(rng, (2, 3))
    cases.append(("mul_broadcast", lambda a, b: sum_(mul(mul(a, b), p_mul)),
                  [r(2, 3), r(1, 3)]))
    p_cat = _proj_const(rng, (2, 5))
    cases.append(("concat", lambda a, b: sum_(mul(concat([a, b], axis=1), p_cat)),
                  [r(2, 3), r(2, 2)]))
    p_sl = _proj_const(rng, (2, 2))
    cases.append(("slice", lambda a: sum_(mul(a[1:3, 0:4:2], p_sl)), [r(4, 4)]))
    p_nar = _proj_const(rng, (3, 2))
    cases.append(("narrow", lambda a: sum_(mul(narrow(a, 1, 1, 3), p_nar)), [r(3, 4)]))
    p_tr = _proj_const(rng, (4, 3))
    cases.append(("transpose", lambda a: sum_(mul(transpose(a), p_tr)), [r(3, 4)]))

    for name, op in (("tanh", tanh), ("elu", elu), ("softplus", softplus),
                     ("square", square), ("sigmoid", sigmoid)):
        pw = _proj_const(rng, (3, 4))
        cases.append((name, (lambda op, pw: lambda a: sum_(mul(op(a), pw)))(op, pw),
                      [r(3, 4)]))
    p_exp = _proj_const(rng, (3, 4))
    cases.append(("exp", lambda a: sum_(mul(exp(a), p_exp)), [0.5 * r(3, 4)]))
    p_log = _proj_const(rng, (3, 4))
    cases.append(("log", lambda a: sum_(mul(log(a), p_log)),
                  [0.2 + np.abs(r(3, 4))]))

    p_sum = _proj_const(rng, (4,))
    cases.append(("sum_axis", lambda a: sum_(mul(sum_(a, axis=0), p_sum)), [r(3, 4)]))
    p_mean = _proj_const(rng, (3,))
    cases.append(("mean_axis", lambda a: sum_(mul(mean(a, axis=1), p_mean)), [r(3, 4)]))
    cases.append(("mean_all", lambda a: mean(a), [r(4, 5)]))

    p_l2 = _proj_const(rng, (4, 6))
    l2_in = r(4, 6)
    l2_in *= (1.0 + np.abs(r(4, 1)))  # rows well away from the norm floor
    cases.append(("l2_normalize", lambda a: sum_(mul(l2_normalize(a, axis=-1), p_l2)),
                  [l2_in]))
    p_sm = _proj_const(rng, (4, 5))
    cases.append(("softmax", lambda a: sum_(mul(softmax(a, axis=-1, temperature=0.1), p_sm)),
                  [r(4, 5)]))

    # both branches populated, every input at least 0.1 from the threshold
    mx_in = 0.5 + np.where(r(3, 4) > 0, 0.1 + np.abs(r(3, 4)), -0.1 - np.abs(r(3, 4)))
    p_mx = _proj_const(rng, (3, 4))
    cases.append(("maximum_const", lambda a: sum_(mul(maximum_const(a, 0.5), p_mx)),
                  [mx_in]))

    noise = r(3, 4)
    p_samp = _proj_const(rng, (3, 4))
    cases.append(("gaussian_sample",
                  lambda m, s: sum_(mul(DiagGaussian.from_raw(m, s).sample(noise), p_samp)),
                  [r(3, 4), r(3, 4)]))
    value = r(3, 4)
    cases.append(("gaussian_log_prob",
                  lambda m, s: sum_(DiagGaussian.from_raw(m, s).log_prob(Tensor(value))),
                  [r(3, 4), r(3, 4)]))
    cases.append(("gaussian_kl",
                  lambda m1, s1, m2, s2: sum_(DiagGaussian.from_raw(m1, s1).kl(
                      DiagGaussian.from_raw(m2, s2))),
                  [r(3, 4), r(3, 4), r(3, 4), r(3, 4)]))
    return cases


def _gru_case(rng):
    """FD over every parameter of a recurrent cell plus its inputs."""
    params = ParamSet()
    cell = GRUCell(params, "cell", 3, 2, rng)
    x = params.add("x", Tensor(rng.standard_normal((2, 3)), requires_grad=True))
    h = params.add("h", Tensor(rng.standard_normal((2, 2)), requires_grad=True))
    p = _proj_const(rng, (2, 2))
    tensors = [params[n] for n in params.names()]
    return (lambda: sum_(mul(cell(h, x), p))), tensors


def _kl_floor_case(rng):
    """Floored kl objective with one sample on each side of the threshold."""
    m1 = Tensor(np.array([[0.0, 0.0], [1.5, 0.0]]), requires_grad=True)
    m2 = Tensor(np.zeros((2, 2)), requires_grad=True)
    raw = Tensor(np.zeros((2, 2)), requires_grad=True)  # kl rows land at 0 and ~1.79

    def fn():
        d1 = DiagGaussian.from_raw(m1, raw)
        d2 = DiagGaussian.from_raw(m2, raw)
        return mean(maximum_const(d1.kl(d2), 0.5))

    return fn, [m1, m2, raw]


def _tiny_world_model(rng):
    params = ParamSet()
    target = ParamSet()
    proto = ProtoContext(ProtoConfig(num_prototypes=3, proto_dim=2, temperature=0.1,
                                     sinkhorn_eps=0.05, sinkhorn_iters=3),
                         s_dim=4, params=params, target_params=target, rng=rng)
    feature_dim = proto.feature_dim(4, "full")
    wm = WorldModel(WorldModelConfig(obs_dim=3, act_dim=1, h_dim=2, z_dim=2,
                                     hidden_dim=3, beta_kl=1.0, free_nats=0.0),
                    params, rng, feature_dim)
    return wm, proto, params, target


def _world_loss_case(rng):
    """Joint model loss with frozen assignment targets, FD over every parameter."""
    wm, proto, params, _ = _tiny_world_model(rng)
    B, M = 2, 2
    obs = rng.standard_normal((B, M, 3))
    act = rng.standard_normal((B, M, 1))
    noise = rng.standard_normal((B, M, 2))
    obs_flat = np.swapaxes(obs, 0, 1).reshape(M * B, 3)
    rew_target = rng.standard_normal((M * B, 1))
    w_bar = Tensor(np.full((M * B, 3), 1.0 / 3.0))  # fixed targets for the check

    def fn():
        roll = wm.observe_sequence(obs, act, noise)
        h = concat([st.h for st in roll.states], axis=0)
        z = concat([st.z for st in roll.states], axis=0)
        s = concat([h, z], axis=1)
        u = proto.project(s, "online")
        w = proto.assign(u)
        e = proto.aggregate(w)
        x = proto.build_feature(s, u, e, "full")
        loss = wm.kl_objective(roll.posteriors, roll.priors)
        loss = loss + gaussian_recon_loss(wm.decode(x), obs_flat)
        loss = loss + gaussian_recon_loss(wm.reward(s), rew_target)
        loss = loss + temporal_crossover_loss(w, w_bar, B, M)
        return loss

    tensors = [params[n] for n in params.names()]
    return fn, tensors


def _tiny_agent(ablation: str = "full", seed: int = 7):
    from .agent import Agent
    cfg = RunConfig(task="pendulum_swingup", seed=seed, ablation=ablation,
                    dtype="float64", h_dim=2, z_dim=2, hidden_dim=3,
                    num_prototypes=3, proto_dim=2, horizon=3,
                    batch_size=2, sequence_length=4)
    return Agent(cfg)


def _behavior_cases(rng):
    """Actor/critic losses on an imagined rollout, FD over their parameters."""
    from .world_model import RssmState
    agent = _tiny_agent()
    start = RssmState(Tensor(rng.standard_normal((2, 2))),
                      Tensor(rng.standard_normal((2, 2))))
    cfg = agent.cfg

    def actor_fn():
        traj = imagine(agent, start, cfg.horizon, np.random.default_rng(1234))
        return behavior_losses(agent.actor_critic, traj, cfg.discount,
                               cfg.return_lambda)[0]

    actor_tensors = [agent.actor_params[n] for n in agent.actor_params.names()]
    # dynamics parameters carry actor gradients too; spot-check a couple
    actor_tensors += [agent.model_params["wm/gru/wh"], agent.model_params["proj/w"]]

    traj_fixed = imagine(agent, start, cfg.horizon, np.random.default_rng(1234))

    def critic_fn():
        return behavior_losses(agent.actor_critic, traj_fixed, cfg.discount,
                               cfg.return_lambda)[1]

    critic_tensors = [agent.critic_params[n] for n in agent.critic_params.names()]
    return (actor_fn, actor_tensors), (critic_fn, critic_tensors)


def check_gradients(step: float = 1e-5, tol: float = 1e-4) -> CheckResult:
    """Finite differences against backward() for primitives and full losses."""
    prev = default_dtype()
    set_default_dtype(np.float64)
    try:
        rng = np.random.default_rng(20240901)
        worst_name, worst = "", 0.0
        for name, fn, arrays in _primitive_cases(rng):
            err = fd_check(fn, arrays, step)
            if err > worst:
                worst_name, worst = name, err

        for name, (fn, tensors) in (("gru_cell", _gru_case(rng)),
                                    ("kl_floor", _kl_floor_case(rng)),
                                    ("world_model_losses", _world_loss_case(rng))):
            err = fd_check_tensors(fn, tensors, step)
            if err > worst:
                worst_name, worst = name, err

        (actor_fn, actor_t), (critic_fn, critic_t) = _behavior_cases(rng)
        for name, fn, tensors in (("actor_loss", actor_fn, actor_t),
                                  ("critic_loss", critic_fn, critic_t)):
            err = fd_check_tensors(fn, tensors, step)
            if err > worst:
                worst_name, worst = name, err

        # structural: stop_gradient blocks exactly
        a = Tensor(rng.standard_normal((3, 3)), requires_grad=True)
        b = Tensor(rng.standard_normal((3, 3)), requires_grad=True)
        backward(sum_(mul(stop_gradient(a), b)))
        sg_ok = a.grad is None and np.array_equal(b.grad, a.data)
        if not sg_ok:
            return CheckResult("gradients", False, "stop_gradient leaked a gradient")

        passed = worst <= tol
        return CheckResult("gradients", passed,
                           f"max relative error {worst:.3e} (worst case: {worst_name}, tol {tol:g})")
    finally:
        set_default_dtype(prev)


# ----------------------------------------------------------------------
# remaining suites


def check_sinkhorn() -> CheckResult:
    prev = default_dtype()
    set_default_dtype(np.float64)
    try:
        rng = np.random.default_rng(3)
        n, k, d = 64, 8, 32  # unit-norm inputs, as the projector and bank produce
        ub = rng.standard_normal((n, d))
        u_bar = Tensor(ub / np.linalg.norm(ub, axis=1, keepdims=True))
        pc = rng.standard_normal((k, d))
        protos = Tensor(pc / np.linalg.norm(pc, axis=1, keepdims=True), requires_grad=True)
        w = sinkhorn_assign(u_bar, protos, eps=0.05, iters=50)
        col_err = float(np.max(np.abs(w.data.sum(axis=0) - n / k)))
        row_err = float(np.max(np.abs(w.data.sum(axis=1) - 1.0)))

        w_flat = sinkhorn_assign(Tensor(np.zeros((6, 4))),
                                 Tensor(np.zeros((3, 4))), eps=0.05, iters=3)
        uniform_err = float(np.max(np.abs(w_flat.data - 1.0 / 3.0)))

        # adding the assignment term to a live loss must not move any gradient
        protos.grad = None
        backward(mean(square(protos)))
        ref_grad = protos.grad.copy()
        protos.grad = None
        backward(mean(square(protos)) + sum_(mul(w, 2.0)))
        grad_free = (not w.requires_grad) and np.array_equal(protos.grad, ref_grad)

        passed = col_err <= 1e-4 and row_err <= 1e-6 and uniform_err <= 1e-12 and grad_free
        return CheckResult("sinkhorn", passed,
                           f"column error {col_err:.2e} (tol 1e-4), row error {row_err:.2e} "
                           f"(tol 1e-6), uniform error {uniform_err:.2e}, "
                           f"gradient-free {grad_free}")
    finally:
        set_default_dtype(prev)


def check_lambda_returns() -> CheckResult:
    prev = default_dtype()
    set_default_dtype(np.float64)
    try:
        rng = np.random.default_rng(11)
        H, B = 5, 3
        rewards = [Tensor(rng.standard_normal((B, 1))) for _ in range(H)]
        values = [Tensor(rng.standard_normal((B, 1))) for _ in range(H + 1)]

        # lam = 0 collapses to one-step targets, bitwise
        v0 = lambda_returns(rewards, values, 0.9, 0.0)
        ok0 = all(np.array_equal(v0[t].data, rewards[t].data + 0.9 * values[t + 1].data)
                  for t in range(H))

        # lam = 1 collapses to the discounted sum with a terminal bootstrap
        v1 = lambda_returns(rewards, values, 0.9, 1.0)
        err1 = 0.0
        for t in range(H):
            ref = values[H].data.copy()
            for i in reversed(range(t, H)):
                ref = rewards[i].data + 0.9 * ref
            err1 = max(err1, float(np.max(np.abs(v1[t].data - ref))))

        # hand-worked three-step case
        r = [Tensor(np.array([[1.0]])) for _ in range(3)]
        v = [Tensor(np.array([[0.0]])), Tensor(np.array([[0.0]])),
             Tensor(np.array([[0.0]])), Tensor(np.array([[10.0]]))]
        got = lambda_returns(r, v, 0.9, 0.95)[0].item()
        hand_err = abs(got - 9.16525)

        passed = ok0 and err1 <= 1e-10 and hand_err <= 1e-8
        return CheckResult("lambda_returns", passed,
                           f"lam=0 bitwise {ok0}, lam=1 error {err1:.2e} (tol 1e-10), "
                           f"hand case error {hand_err:.2e}")
    finally:
        set_default_dtype(prev)


def check_crossover() -> CheckResult:
    prev = default_dtype()
    set_default_dtype(np.float64)
    try:
        rng = np.random.default_rng(17)
        B, M, K = 2, 4, 2
        n = B * M
        w_uni = Tensor(np.full((n, K), 0.5))
        onehot = np.zeros((n, K))
        onehot[np.arange(n), np.arange(n) % K] = 1.0
        got = temporal_crossover_loss(w_uni, Tensor(onehot), B, M).item()
        hand_err = abs(got - np.log(2.0))

        # time-constant rows make crossed and aligned pairings identical
        base_w = rng.random((B, K)) + 0.1
        base_w /= base_w.sum(axis=1, keepdims=True)
        base_t = rng.random((B, K)) + 0.1
        base_t /= base_t.sum(axis=1, keepdims=True)
        w_const = Tensor(np.tile(base_w, (M, 1)))
        t_const = Tensor(np.tile(base_t, (M, 1)))
        const_err = abs(temporal_crossover_loss(w_const, t_const, B, M).item()
                        - plain_swav_loss(w_const, t_const).item())

        # random case against an index-level reference
        w = rng.random((n, K)) + 0.05
        w /= w.sum(axis=1, keepdims=True)
        wb = rng.random((n, K)) + 0.05
        wb /= wb.sum(axis=1, keepdims=True)
        half = M // 2
        ref = 0.0
        for b in range(B):
            for t in range(half):
                lo, hi = t * B + b, (t + half) * B + b
                ref += float(wb[lo] @ np.log(w[hi]) + wb[hi] @ np.log(w[lo]))
        ref = -ref / n
        rand_err = abs(temporal_crossover_loss(Tensor(w), Tensor(wb), B, M).item() - ref)

        passed = hand_err <= 1e-12 and const_err <= 1e-12 and rand_err <= 1e-12
        return CheckResult("crossover", passed,
                           f"uniform-vs-onehot error {hand_err:.2e}, time-constant error "
                           f"{const_err:.2e}, random-reference error {rand_err:.2e} (tol 1e-12)")
    finally:
        set_default_dtype(prev)


def check_isolation() -> CheckResult:
    """Reward gradients never reach decoder/projector/prototypes; behavior
    updates never move model weights. Includes a sensitivity control: the
    same zero-gradient predicate must fire on the reconstruction loss, which
    legitimately reaches those parameters."""
    prev = default_dtype()
    set_default_dtype(np.float64)
    try:
        from .trainer import behavior_update_step, stack_states_time_major
        from .world_model import RssmState

        rng = np.random.default_rng(23)
        agent = _tiny_agent()
        wm, proto = agent.world_model, agent.proto
        B, M = 2, 4
        obs = rng.standard_normal((B, M, 3))
        act = rng.standard_normal((B, M, 1))
        noise = rng.standard_normal((B, M, 2))

        def grads_zero(prefixes):
            names = [n for n in agent.model_params.names()
                     if n.startswith(tuple(prefixes))]
            return all(agent.model_params[n].grad is None
                       or not np.any(agent.model_params[n].grad) for n in names)

        agent.model_params.zero_grad()
        roll = wm.observe_sequence(obs, act, noise)
        s, _ = stack_states_time_major(roll.states)
        target = rng.standard_normal((B * M, 1))
        backward(gaussian_recon_loss(wm.reward(s), target))
        isolated = grads_zero(["dec/", "proj/", "proto/"])
        reaches_dynamics = agent.model_params["wm/gru/wh"].grad is not None and \
            bool(np.any(agent.model_params["wm/gru/wh"].grad))

        # control: the reconstruction loss must trip the same predicate
        agent.model_params.zero_grad()
        roll = wm.observe_sequence(obs, act, noise)
        s, _ = stack_states_time_major(roll.states)
        x = agent.context_feature(s)
        backward(gaussian_recon_loss(wm.decode(x), rng.standard_normal((B * M, 3))))
        control_fires = not grads_zero(["proj/", "proto/"])

        # behavior updates leave the model and target sets bitwise unchanged
        before = {n: agent.model_params[n].data.tobytes() for n in agent.model_params.names()}
        before.update({"target/" + n: agent.target_params[n].data.tobytes()
                       for n in agent.target_params.names()})
        start = RssmState(Tensor(rng.standard_normal((B, 2))),
                          Tensor(rng.standard_normal((B, 2))))
        behavior_update_step(agent, start, agent.cfg, rng)
        after = {n: agent.model_params[n].data.tobytes() for n in agent.model_params.names()}
        after.update({"target/" + n: agent.target_params[n].data.tobytes()
                      for n in agent.target_params.names()})
        untouched = before == after

        passed = isolated and reaches_dynamics and control_fires and untouched
        return CheckResult("isolation", passed,
                           f"reward loss isolated {isolated}, reaches dynamics "
                           f"{reaches_dynamics}, control fires {control_fires}, "
                           f"behavior leaves model bitwise {untouched}")
    finally:
        set_default_dtype(prev)


def check_roundtrip() -> CheckResult:
    """Episode files and checkpoints reproduce their arrays bit for bit."""
    prev = default_dtype()
    try:
        rng = np.random.default_rng(41)
        with tempfile.TemporaryDirectory() as tmp:
            tmp = Path(tmp)
            rec = EpisodeRecord(task="pendulum_swingup", mass_mult=1.0,
                                damping_mult=1.0, split="train", seed=9,
                                obs=rng.standard_normal((11, 3)),
                                act=rng.uniform(-1, 1, (10, 1)),
                                rew=rng.random(10))
            p1, p2 = tmp / "a.pcad", tmp / "b.pcad"
            save_episode(p1, rec)
            back = load_episode(p1)
            save_episode(p2, back)
            episode_ok = (p1.read_bytes() == p2.read_bytes()
                          and np.array_equal(rec.obs, back.obs)
                          and np.array_equal(rec.act, back.act)
                          and np.array_equal(rec.rew, back.rew))

            from .agent import Agent
            agent = _tiny_agent()
            ck = tmp / "agent.ckpt"
            agent.save(ck)
            twin, _ = Agent.load(ck)
            groups = (("model", agent.model_params, twin.model_params),
                      ("target", agent.target_params, twin.target_params),
                      ("actor", agent.actor_params, twin.actor_params),
                      ("critic", agent.critic_params, twin.critic_params))
            ckpt_ok = all(a[n].data.tobytes() == b[n].data.tobytes()
                          for _, a, b in groups for n in a.names())

        passed = episode_ok and ckpt_ok
        return CheckResult("roundtrip", passed,
                           f"episode bitwise {episode_ok}, checkpoint bitwise {ckpt_ok}")
    finally:
        set_default_dtype(prev)


def check_feature_dims() -> CheckResult:
    """Feature widths for the default architecture, with and without u."""
    prev = default_dtype()
    try:
        from .agent import Agent
        full = Agent(RunConfig(task="pendulum_swingup", seed=0, ablation="full"))
        nop = Agent(RunConfig(task="pendulum_swingup", seed=0, ablation="no_projection"))
        ok = full.feature_dim == 144 and nop.feature_dim == 112
        return CheckResult("feature_dims", ok,
                           f"full {full.feature_dim} (want 144), "
                           f"no_projection {nop.feature_dim} (want 112)")
    finally:
        set_default_dtype(prev)


SUITES = {
    "gradients": check_gradients,
    "sinkhorn": check_sinkhorn,
    "lambda_returns": check_lambda_returns,
    "crossover": check_crossover,
    "isolation": check_isolation,
    "roundtrip": check_roundtrip,
    "feature_dims": check_feature_dims,
}


def run_checks(names=None) -> list[CheckResult]:
    chosen = list(SUITES) if not names else list(names)
    results = []
    for name in chosen:
        if name not in SUITES:
            results.append(CheckResult(name, False, "unknown suite"))
            continue
        try:
            results.append(SUITES[name]())
        except Exception:
            tail = traceback.format_exc().strip().splitlines()[-1]
            results.append(CheckResult(name, False, f"raised: {tail}"))
    return results
