"""Small building blocks: dense layers, two-hidden-layer MLPs, a GRU cell.

Weights register into a caller-supplied ParamSet at construction; call sites
stay functional (`layer(x)`), so the same parameters serve many graphs.
"""

from __future__ import annotations

import numpy as np

from .optim import ParamSet
from .tensor import Tensor, add, default_dtype, elu, matmul, mul, narrow, sigmoid, sub, tanh


def glorot(rng: np.random.Generator, shape) -> np.ndarray:
    a = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-a, a, size=shape).astype(default_dtype())


class Linear:
    def __init__(self, params: ParamSet, name: str, in_dim: int, out_dim: int,
                 rng: np.random.Generator, bias: bool = True):
        self.w = params.add(f"{name}/w", Tensor(glorot(rng, (in_dim, out_dim)), requires_grad=True))
        self.b = (params.add(f"{name}/b", Tensor(np.zeros(out_dim, dtype=default_dtype()), requires_grad=True))
                  if bias else None)

    def __call__(self, x: Tensor) -> Tensor:
        out = matmul(x, self.w)
        return add(out, self.b) if self.b is not None else out


class Trunk:
    """Dense stack of `depth` hidden layers with an ELU after each."""

    def __init__(self, params: ParamSet, name: str, in_dim: int, hidden: int,
                 depth: int, rng: np.random.Generator):
        self.layers = []
        d = in_dim
        for i in range(depth):
            self.layers.append(Linear(params, f"{name}/h{i}", d, hidden, rng))
            d = hidden

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = elu(layer(x))
        return x


class MLP:
    """Trunk plus a linear output layer."""

    def __init__(self, params: ParamSet, name: str, in_dim: int, hidden: int,
                 out_dim: int, depth: int, rng: np.random.Generator):
        self.trunk = Trunk(params, name, in_dim, hidden, depth, rng)
        self.out = Linear(params, f"{name}/out", hidden if depth else in_dim, out_dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.out(self.trunk(x))


class GRUCell:
    """Gated recurrent cell with fused gate projections.

    r = sig(x W_xr + h W_hr + b_r)        reset
    u = sig(x W_xu + h W_hu + b_u)        update
    n = tanh(x W_xn + r * (h W_hn) + b_n) candidate
    h' = (1 - u) * n + u * h

    All-zero weights and inputs give h' = 0.
    """

    def __init__(self, params: ParamSet, name: str, in_dim: int, h_dim: int,
                 rng: np.random.Generator):
        self.h_dim = h_dim
        self.wx = params.add(f"{name}/wx", Tensor(glorot(rng, (in_dim, 3 * h_dim)), requires_grad=True))
        self.wh = params.add(f"{name}/wh", Tensor(glorot(rng, (h_dim, 3 * h_dim)), requires_grad=True))
        self.b = params.add(f"{name}/b", Tensor(np.zeros(3 * h_dim, dtype=default_dtype()), requires_grad=True))

    def __call__(self, h: Tensor, x: Tensor) -> Tensor:
        hd = self.h_dim
        gx = add(matmul(x, self.wx), self.b)
        gh = matmul(h, self.wh)
        r = sigmoid(add(narrow(gx, 1, 0, hd), narrow(gh, 1, 0, hd)))
        u = sigmoid(add(narrow(gx, 1, hd, 2 * hd), narrow(gh, 1, hd, 2 * hd)))
        n = tanh(add(narrow(gx, 1, 2 * hd, 3 * hd), mul(r, narrow(gh, 1, 2 * hd, 3 * hd))))
        return add(mul(sub(1.0, u), n), mul(u, h))
