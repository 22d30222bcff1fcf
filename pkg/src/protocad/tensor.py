"""Dense tensors with reverse-mode automatic differentiation on numpy arrays.

Every learnable quantity in this package is a `Tensor`: a numpy array plus an
optional gradient and a record of how it was produced. Each primitive op
stores a closure computing its exact vector-Jacobian product; `backward`
walks the graph once in reverse topological order and accumulates gradients
into every reachable tensor that requires them.

The op set is deliberately small (see `apply_primitive`); everything else in
the package is composed from it. Double precision is the default so that
finite-difference checks are meaningful; training configs may switch the
default to single precision for speed.
"""

from __future__ import annotations

import math
import threading
import numpy as np

EPS = 1e-8  # floor for log arguments and normalization denominators

_DTYPE = [np.float64]
_grad_state = threading.local()


def set_default_dtype(dtype) -> None:
    """Set the dtype used for tensors built from lists/scalars (float32/float64)."""
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported default dtype {dtype!r}")
    _DTYPE[0] = dt.type


def default_dtype():
    return _DTYPE[0]


def grad_enabled() -> bool:
    return getattr(_grad_state, "enabled", True)


class no_grad:
    """Context manager that disables graph recording on the current thread."""

    def __enter__(self):
        self._prev = grad_enabled()
        _grad_state.enabled = False
        return self

    def __exit__(self, *exc):
        _grad_state.enabled = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            raise TypeError("Tensor(data) expects array-like, not Tensor")
        if dtype is not None:
            arr = np.asarray(data, dtype=dtype)
        elif isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
            arr = data
        else:
            arr = np.asarray(data, dtype=default_dtype())
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.item())

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"

    # operator sugar; all routing goes through the module-level primitives
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)

    def sum(self, axis=None):
        return sum_(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype if dtype is not None else default_dtype()))


def _node(data: np.ndarray, parents, vjp) -> Tensor:
    """Wrap an op result; record the graph edge only when gradients are live."""
    out = Tensor(data)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce an upstream gradient back to the shape of a broadcast operand."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# primitives


def add(a, b) -> Tensor:
    a = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = as_tensor(b, like=a)
    data = a.data + b.data

    def vjp(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _node(data, (a, b), vjp)


def sub(a, b) -> Tensor:
    a = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = as_tensor(b, like=a)
    data = a.data - b.data

    def vjp(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(-g, b.data.shape))

    return _node(data, (a, b), vjp)


def mul(a, b) -> Tensor:
    a = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = as_tensor(b, like=a)
    data = a.data * b.data

    def vjp(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(data, (a, b), vjp)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def vjp(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _node(data, (a, b), vjp)


def concat(tensors, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ValueError("concat: empty input list")
    base = list(ts[0].shape)
    for t in ts[1:]:
        other = list(t.shape)
        if len(other) != len(base):
            raise ValueError(f"concat: rank mismatch {ts[0].shape} vs {t.shape}")
        for i, (x, y) in enumerate(zip(base, other)):
            if i != (axis % len(base)) and x != y:
                raise ValueError(f"concat: shape mismatch {ts[0].shape} vs {t.shape} on axis {axis}")
    data = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.data.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                _accumulate(t, g[tuple(idx)])

    return _node(data, ts, vjp)


def take(t, key) -> Tensor:
    """Basic slicing (ints, slices, tuples thereof). The graph name is `slice`."""
    t = as_tensor(t)
    data = t.data[key]

    def vjp(g):
        full = np.zeros_like(t.data)
        full[key] += g
        _accumulate(t, full)

    return _node(data, (t,), vjp)


def narrow(t, axis: int, start: int, stop: int) -> Tensor:
    """Slice one axis of a tensor; convenience form of `take`."""
    t = as_tensor(t)
    idx = [slice(None)] * t.ndim
    idx[axis] = slice(start, stop)
    return take(t, tuple(idx))


def transpose(t) -> Tensor:
    """Transpose a 2-D tensor; the gradient transposes back."""
    t = as_tensor(t)
    if t.ndim != 2:
        raise ValueError(f"transpose expects a 2-D tensor, got shape {t.shape}")
    data = t.data.T

    def vjp(g):
        _accumulate(t, g.T)

    return _node(data, (t,), vjp)


def tanh(t) -> Tensor:
    t = as_tensor(t)
    data = np.tanh(t.data)

    def vjp(g):
        _accumulate(t, g * (1.0 - data * data))

    return _node(data, (t,), vjp)


def elu(t) -> Tensor:
    t = as_tensor(t)
    x = t.data
    neg = np.expm1(np.minimum(x, 0.0))
    data = np.where(x > 0.0, x, neg)

    def vjp(g):
        _accumulate(t, g * np.where(x > 0.0, 1.0, neg + 1.0))

    return _node(data, (t,), vjp)


def softplus(t) -> Tensor:
    t = as_tensor(t)
    x = t.data
    data = np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)

    def vjp(g):
        _accumulate(t, g * _sigmoid_array(x))

    return _node(data, (t,), vjp)


def _sigmoid_array(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def exp(t) -> Tensor:
    t = as_tensor(t)
    data = np.exp(t.data)

    def vjp(g):
        _accumulate(t, g * data)

    return _node(data, (t,), vjp)


def log(t) -> Tensor:
    """Natural log with arguments floored at EPS; the floored region has zero slope."""
    t = as_tensor(t)
    safe = np.maximum(t.data, EPS)
    data = np.log(safe)

    def vjp(g):
        _accumulate(t, g * (t.data >= EPS) / safe)

    return _node(data, (t,), vjp)


def sum_(t, axis=None) -> Tensor:
    t = as_tensor(t)
    data = t.data.sum(axis=axis)

    def vjp(g):
        if axis is None:
            _accumulate(t, np.broadcast_to(g, t.data.shape).copy())
        else:
            _accumulate(t, np.broadcast_to(np.expand_dims(g, axis), t.data.shape).copy())

    return _node(data, (t,), vjp)


def mean(t, axis=None) -> Tensor:
    t = as_tensor(t)
    data = t.data.mean(axis=axis)
    count = t.data.size if axis is None else np.prod([t.data.shape[a] for a in np.atleast_1d(axis)])

    def vjp(g):
        if axis is None:
            _accumulate(t, np.broadcast_to(g / count, t.data.shape).copy())
        else:
            _accumulate(t, np.broadcast_to(np.expand_dims(g, axis) / count, t.data.shape).copy())

    return _node(data, (t,), vjp)


def square(t) -> Tensor:
    t = as_tensor(t)
    data = t.data * t.data

    def vjp(g):
        _accumulate(t, g * 2.0 * t.data)

    return _node(data, (t,), vjp)


def l2_normalize(t, axis: int = -1, eps: float = EPS) -> Tensor:
    """x / max(||x||_2, eps) along `axis`; linear (slope 1/eps) inside the floor."""
    t = as_tensor(t)
    norm = np.sqrt(np.sum(t.data * t.data, axis=axis, keepdims=True))
    safe = np.maximum(norm, eps)
    data = t.data / safe

    def vjp(g):
        inner = np.sum(g * data, axis=axis, keepdims=True)
        _accumulate(t, (g - data * inner * (norm > eps)) / safe)

    return _node(data, (t,), vjp)


def softmax(t, axis: int = -1, temperature: float = 1.0) -> Tensor:
    t = as_tensor(t)
    scaled = t.data / temperature
    shifted = scaled - scaled.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        inner = np.sum(g * data, axis=axis, keepdims=True)
        _accumulate(t, data * (g - inner) / temperature)

    return _node(data, (t,), vjp)


def stop_gradient(t) -> Tensor:
    """Cut the graph: same value, contributes exactly zero to upstream grads."""
    t = as_tensor(t)
    return Tensor(t.data)


def maximum_const(t, floor: float) -> Tensor:
    """Elementwise max(t, floor) against a constant; zero slope in the floored region.

    Composed from recorded primitives via a data-dependent mask, so the
    clamp behaves exactly like the piecewise function under backprop.
    """
    t = as_tensor(t)
    mask = Tensor((t.data > floor).astype(t.data.dtype))
    floored = Tensor(np.where(t.data > floor, 0.0, floor).astype(t.data.dtype))
    return add(mul(t, mask), floored)


def sigmoid(t) -> Tensor:
    """Logistic function, composed as 0.5*tanh(0.5*x) + 0.5 (exact identity)."""
    return add(mul(tanh(mul(t, 0.5)), 0.5), 0.5)


_PRIMITIVES = {
    "matmul": lambda inputs, attrs: matmul(*inputs),
    "add": lambda inputs, attrs: add(*inputs),
    "sub": lambda inputs, attrs: sub(*inputs),
    "mul": lambda inputs, attrs: mul(*inputs),
    "concat": lambda inputs, attrs: concat(inputs, axis=attrs.get("axis", 0)),
    "slice": lambda inputs, attrs: narrow(inputs[0], attrs.get("axis", 0), attrs["start"], attrs["stop"]),
    "tanh": lambda inputs, attrs: tanh(*inputs),
    "elu": lambda inputs, attrs: elu(*inputs),
    "softplus": lambda inputs, attrs: softplus(*inputs),
    "exp": lambda inputs, attrs: exp(*inputs),
    "log": lambda inputs, attrs: log(*inputs),
    "sum": lambda inputs, attrs: sum_(inputs[0], axis=attrs.get("axis")),
    "mean": lambda inputs, attrs: mean(inputs[0], axis=attrs.get("axis")),
    "square": lambda inputs, attrs: square(*inputs),
    "l2_normalize": lambda inputs, attrs: l2_normalize(inputs[0], axis=attrs.get("axis", -1), eps=attrs.get("eps", EPS)),
    "softmax": lambda inputs, attrs: softmax(inputs[0], axis=attrs.get("axis", -1), temperature=attrs.get("temperature", 1.0)),
    "stop_gradient": lambda inputs, attrs: stop_gradient(*inputs),
}


def apply_primitive(op_id: str, inputs, attrs: dict | None = None) -> Tensor:
    """Apply one primitive by name. Unknown names raise ValueError."""
    if op_id not in _PRIMITIVES:
        raise ValueError(f"unknown primitive {op_id!r}; known: {sorted(_PRIMITIVES)}")
    return _PRIMITIVES[op_id](list(inputs), attrs or {})


# ---------------------------------------------------------------------------
# reverse pass


def backward(loss: Tensor) -> None:
    """Accumulate dloss/dt into .grad of every reachable tensor requiring grad.

    Repeated calls without clearing grads accumulate, matching the use of one
    shared graph by several loss terms.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        raise ValueError("backward on a tensor that does not require grad")

    # iterative post-order: parents first, loss last
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    _accumulate(loss, np.ones_like(loss.data))
    for node in reversed(order):
        if node._vjp is not None and node.grad is not None:
            node._vjp(node.grad)


# ---------------------------------------------------------------------------
# diagonal Gaussians

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

STD_FLOOR = 0.1


class DiagGaussian:
    """Diagonal Gaussian over the last axis; std strictly positive by construction."""

    def __init__(self, mean_t: Tensor, std_t: Tensor):
        if mean_t.shape != std_t.shape:
            raise ValueError(f"gaussian: mean/std shape mismatch {mean_t.shape} vs {std_t.shape}")
        self.mean = mean_t
        self.std = std_t

    @classmethod
    def from_raw(cls, mean_t: Tensor, raw_std: Tensor, floor: float = STD_FLOOR) -> "DiagGaussian":
        return cls(mean_t, add(softplus(raw_std), floor))

    def sample(self, noise) -> Tensor:
        """Reparameterized draw mean + std * noise; `noise` is a plain array."""
        n = as_tensor(noise, like=self.mean)
        if n.shape != self.mean.shape:
            raise ValueError(f"gaussian sample: noise shape {n.shape} != {self.mean.shape}")
        return add(self.mean, mul(self.std, n))

    def mode(self) -> Tensor:
        return self.mean

    def log_prob(self, value) -> Tensor:
        v = as_tensor(value, like=self.mean)
        inv_std = exp(mul(log(self.std), -1.0))
        z = mul(sub(v, self.mean), inv_std)
        per = add(add(mul(square(z), 0.5), log(self.std)), _HALF_LOG_2PI)
        return mul(sum_(per, axis=-1), -1.0)

    def kl(self, other: "DiagGaussian") -> Tensor:
        """KL(self || other), summed over the event dimension."""
        log_q, log_p = log(self.std), log(other.std)
        inv_p2 = exp(mul(log_p, -2.0))
        num = add(square(self.std), square(sub(self.mean, other.mean)))
        per = sub(add(sub(log_p, log_q), mul(mul(num, inv_p2), 0.5)), 0.5)
        return sum_(per, axis=-1)


def gaussian_ops(kind: str, *args) -> Tensor:
    """Dispatcher over the Gaussian ops: sample_reparameterized, log_prob, kl."""
    if kind == "sample_reparameterized":
        dist, noise = args
        return dist.sample(noise)
    if kind == "log_prob":
        dist, value = args
        return dist.log_prob(value)
    if kind == "kl":
        q, p = args
        return q.kl(p)
    raise ValueError(f"unknown gaussian op {kind!r}")
