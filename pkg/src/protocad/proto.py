"""Prototypical context learning on top of the latent state space.

Latent states are projected to unit vectors u, softly assigned to a bank of
unit-norm prototypes, and summarized as the assignment-weighted prototype
mixture e. Training targets for the assignments come from a Sinkhorn-Knopp
balancing of the *target*-projector embeddings, and the consistency loss
pairs each target with the prediction half a sequence away, so only context
information that is stable across time can satisfy it.

Row layout convention: flattened sample matrices are time-major, i.e. row
index = t * B + b. The first half of the rows of a [B*M, K] matrix is then
exactly the first half of every sequence, which is what the crossover loss
slices.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .optim import ParamSet
from .tensor import (Tensor, concat, l2_normalize, log, matmul, mul, narrow,
                     softmax, stop_gradient, sum_, transpose)

logger = logging.getLogger(__name__)


@dataclass
class ProtoConfig:
    num_prototypes: int = 32
    proto_dim: int = 32
    temperature: float = 0.1
    sinkhorn_eps: float = 0.05
    sinkhorn_iters: int = 3
    ema_fraction: float = 0.05


def assign_softmax(u: Tensor, prototypes: Tensor, temperature: float) -> Tensor:
    """Soft assignment W[n,k] = softmax_k(u_n . c_k / T). Differentiable in both."""
    return softmax(matmul(u, transpose(prototypes)), axis=-1, temperature=temperature)


def sinkhorn_assign(u_bar, prototypes, eps: float, iters: int) -> Tensor:
    """Balanced assignment targets via Sinkhorn-Knopp; output carries no gradient.

    Q is initialized as exp(scores/eps) with the per-matrix max score
    subtracted first, then alternately column-normalized so every prototype
    receives N/K total mass and row-normalized so every sample distributes
    mass 1, for `iters` rounds, ending on a row normalization.
    """
    u_arr = np.asarray(getattr(u_bar, "data", u_bar), dtype=np.float64)
    c_arr = np.asarray(getattr(prototypes, "data", prototypes), dtype=np.float64)
    n, k = u_arr.shape[0], c_arr.shape[0]
    scores = (u_arr @ c_arr.T) / eps
    q = np.exp(scores - scores.max())
    for _ in range(iters):
        q *= (n / k) / q.sum(axis=0, keepdims=True)
        q /= q.sum(axis=1, keepdims=True)
    dtype = getattr(u_bar, "data", u_arr).dtype
    return stop_gradient(Tensor(q.astype(dtype)))


def aggregate(w: Tensor, prototypes: Tensor) -> Tensor:
    """Assignment-weighted prototype mixture e = W C."""
    return matmul(w, prototypes)


def temporal_crossover_loss(w: Tensor, w_bar: Tensor, batch: int, seq_len: int) -> Tensor:
    """Cross-entropy between targets and the prediction half a sequence away.

    Rows are time-major [B*M, K] with M even. Targets from the first half of
    a sequence score the predictions of the second half and vice versa; the
    result is averaged over all B*M pairings, so one-hot targets against
    uniform predictions give exactly log K.
    """
    n, _ = w.shape
    if w.shape != w_bar.shape:
        raise ValueError(f"assignment shape mismatch {w.shape} vs {w_bar.shape}")
    if seq_len % 2 != 0 or batch * seq_len != n:
        raise ValueError(f"need even M with B*M rows; got B={batch}, M={seq_len}, rows={n}")
    half = n // 2
    log_w = log(w)
    first, second = narrow(log_w, 0, 0, half), narrow(log_w, 0, half, n)
    tgt_first, tgt_second = narrow(w_bar, 0, 0, half), narrow(w_bar, 0, half, n)
    crossed = sum_(mul(tgt_first, second)) + sum_(mul(tgt_second, first))
    return mul(crossed, -1.0 / n)


def plain_swav_loss(w: Tensor, w_bar: Tensor) -> Tensor:
    """Aligned (non-crossed) variant: every target scores its own time step."""
    if w.shape != w_bar.shape:
        raise ValueError(f"assignment shape mismatch {w.shape} vs {w_bar.shape}")
    n = w.shape[0]
    return mul(sum_(mul(w_bar, log(w))), -1.0 / n)


class ProtoContext:
    """Projector pair + prototype bank; owns every context-side computation.

    The online projector and the prototypes live in the shared model ParamSet
    (they train with the world model); the target projector lives in its own
    gradient-free set and only moves through ema_update.
    """

    def __init__(self, cfg: ProtoConfig, s_dim: int, params: ParamSet,
                 target_params: ParamSet, rng: np.random.Generator):
        self.cfg = cfg
        from .nets import glorot

        w = glorot(rng, (s_dim, cfg.proto_dim))
        self.proj_w = params.add("proj/w", Tensor(w, requires_grad=True))
        self.target_w = target_params.add("proj/w", Tensor(w.copy()))  # starts equal to online
        c = rng.standard_normal((cfg.num_prototypes, cfg.proto_dim))
        c /= np.linalg.norm(c, axis=1, keepdims=True)
        self.prototypes = params.add("proto/c", Tensor(c.astype(w.dtype), requires_grad=True))
        # reinit draws are keyed (seed, count) so resumed runs replay them exactly
        self.reinit_seed = int(rng.integers(2**31))
        self.reinit_count = 0

    def project(self, s: Tensor, which: str = "online") -> Tensor:
        if which == "online":
            return l2_normalize(matmul(s, self.proj_w), axis=-1)
        if which == "target":
            return l2_normalize(matmul(s, self.target_w), axis=-1)
        raise ValueError(f"unknown projector {which!r}")

    def assign(self, u: Tensor) -> Tensor:
        return assign_softmax(u, self.prototypes, self.cfg.temperature)

    def targets(self, u_bar: Tensor) -> Tensor:
        return sinkhorn_assign(u_bar, self.prototypes, self.cfg.sinkhorn_eps, self.cfg.sinkhorn_iters)

    def aggregate(self, w: Tensor) -> Tensor:
        return aggregate(w, self.prototypes)

    def build_feature(self, s: Tensor, u: Tensor, e: Tensor, mode: str = "full") -> Tensor:
        """Latent feature x. `full` -> (s, u, e); `no_projection` -> (s, e)."""
        if mode == "full":
            return concat([s, u, e], axis=1)
        if mode == "no_projection":
            return concat([s, e], axis=1)
        raise ValueError(f"unknown feature mode {mode!r}")

    def feature_dim(self, s_dim: int, mode: str = "full") -> int:
        if mode == "full":
            return s_dim + 2 * self.cfg.proto_dim
        if mode == "no_projection":
            return s_dim + self.cfg.proto_dim
        raise ValueError(f"unknown feature mode {mode!r}")

    def renormalize(self) -> None:
        """Rescale every prototype to unit norm; reinitialize rows that collapsed."""
        c = self.prototypes.data
        norms = np.linalg.norm(c, axis=1)
        dead = norms == 0.0
        if dead.any():
            for idx in np.flatnonzero(dead):
                rng = np.random.default_rng(np.random.SeedSequence([self.reinit_seed, self.reinit_count]))
                self.reinit_count += 1
                row = rng.standard_normal(c.shape[1])
                c[idx] = row / np.linalg.norm(row)
                logger.warning("prototype %d had zero norm; reinitialized", idx)
            norms = np.linalg.norm(c, axis=1)
        c /= norms[:, None]
