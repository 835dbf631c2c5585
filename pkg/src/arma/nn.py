"""Minimal reverse-mode autodiff on numpy arrays, plus the layers the
training pipeline needs: dense stacks, a 1-D conv stack, a Gaussian action
head, and Adam.

Values are float32 by default; reductions accumulate in float64 before
casting back. Gradient checking clones a network at float64 so the
finite-difference comparison is not drowned by single-precision noise.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteError, ShapeError, WindowTooShortError

_GRAD_ENABLED = True
_RELU_SIGNS: list | None = None  # set by grad_check to detect kink crossings


@contextmanager
def no_grad():
    """Disable tape recording inside the block (rollouts, evaluation)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """Array node in the autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _backward=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data)
        if self.data.dtype not in (np.float32, np.float64):
            self.data = self.data.astype(np.float32)
        if not self.data.flags.c_contiguous:
            self.data = np.ascontiguousarray(self.data)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def item(self) -> float:
        return float(self.data)

    # -- graph plumbing ----------------------------------------------------

    def _accum(self, g):
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self):
        backward(self)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other, self.dtype)
        out = _node(self.data + other.data, (self, other))
        if out._parents:
            def bw(g):
                if self.requires_grad:
                    self._accum(_unbroadcast(g, self.shape))
                if other.requires_grad:
                    other._accum(_unbroadcast(g, other.shape))
            out._backward = bw
        return out

    __radd__ = __add__

    def __neg__(self):
        out = _node(-self.data, (self,))
        if out._parents:
            out._backward = lambda g: self._accum(-g)
        return out

    def __sub__(self, other):
        return self + (-as_tensor(other, self.dtype))

    def __rsub__(self, other):
        return as_tensor(other, self.dtype) + (-self)

    def __mul__(self, other):
        other = as_tensor(other, self.dtype)
        out = _node(self.data * other.data, (self, other))
        if out._parents:
            def bw(g):
                if self.requires_grad:
                    self._accum(_unbroadcast(g * other.data, self.shape))
                if other.requires_grad:
                    other._accum(_unbroadcast(g * self.data, other.shape))
            out._backward = bw
        return out

    __rmul__ = __mul__

    def matmul(self, other: "Tensor") -> "Tensor":
        if self.data.shape[-1] != other.data.shape[0]:
            raise ShapeError(
                f"matmul: inner dims {self.data.shape[-1]} vs {other.data.shape[0]}")
        out = _node(self.data @ other.data, (self, other))
        if out._parents:
            def bw(g):
                if self.requires_grad:
                    self._accum(g @ other.data.T)
                if other.requires_grad:
                    a = self.data
                    if a.ndim == 1:
                        other._accum(np.outer(a, g))
                    else:
                        other._accum(a.T @ g)
            out._backward = bw
        return out

    __matmul__ = matmul

    # -- nonlinearities -----------------------------------------------------

    def tanh(self):
        y = np.tanh(self.data)
        out = _node(y, (self,))
        if out._parents:
            out._backward = lambda g: self._accum(g * (1.0 - y * y))
        return out

    def relu(self):
        if _RELU_SIGNS is not None:
            _RELU_SIGNS.append(self.data > 0)
        y = np.maximum(self.data, 0)
        out = _node(y, (self,))
        if out._parents:
            out._backward = lambda g: self._accum(g * (self.data > 0))
        return out

    def exp(self):
        y = np.exp(self.data)
        out = _node(y, (self,))
        if out._parents:
            out._backward = lambda g: self._accum(g * y)
        return out

    def log(self):
        out = _node(np.log(self.data), (self,))
        if out._parents:
            out._backward = lambda g: self._accum(g / self.data)
        return out

    def square(self):
        out = _node(self.data * self.data, (self,))
        if out._parents:
            out._backward = lambda g: self._accum(g * (2.0 * self.data))
        return out

    def clip(self, lo: float, hi: float):
        y = np.clip(self.data, lo, hi)
        out = _node(y, (self,))
        if out._parents:
            mask = (self.data >= lo) & (self.data <= hi)
            out._backward = lambda g: self._accum(g * mask)
        return out

    # -- reductions / reshapes ----------------------------------------------

    def sum(self, axis=None):
        y = self.data.sum(axis=axis, dtype=np.float64).astype(self.dtype)
        out = _node(y, (self,))
        if out._parents:
            def bw(g):
                if axis is None:
                    self._accum(np.broadcast_to(g, self.shape).astype(self.dtype))
                else:
                    self._accum(np.broadcast_to(
                        np.expand_dims(g, axis), self.shape).astype(self.dtype))
            out._backward = bw
        return out

    def mean(self, axis=None):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis) * (1.0 / n)

    def reshape(self, *shape):
        out = _node(self.data.reshape(*shape), (self,))
        if out._parents:
            out._backward = lambda g: self._accum(g.reshape(self.shape))
        return out


def as_tensor(x, dtype=np.float32) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _node(data, parents) -> Tensor:
    req = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req, _parents=parents if req else ())


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise min; on ties the gradient is routed to `a`."""
    take_a = a.data <= b.data
    out = _node(np.where(take_a, a.data, b.data), (a, b))
    if out._parents:
        def bw(g):
            if a.requires_grad:
                a._accum(_unbroadcast(g * take_a, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(g * (~take_a), b.shape))
        out._backward = bw
    return out


def concat(tensors, axis=-1) -> Tensor:
    data = np.concatenate([t.data for t in tensors], axis=axis)
    out = _node(data, tuple(tensors))
    if out._parents:
        sizes = [t.data.shape[axis] for t in tensors]
        splits = np.cumsum(sizes)[:-1]
        def bw(g):
            for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
                if t.requires_grad:
                    t._accum(piece)
        out._backward = bw
    return out


def backward(loss: Tensor):
    """Reverse pass from a scalar loss; fills .grad on reachable leaves."""
    if loss.data.size != 1:
        raise ShapeError(f"backward expects a scalar loss, got shape {loss.shape}")
    topo, seen, stack = [], set(), [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------

ACTIVATIONS = ("tanh", "relu")


@dataclass
class MlpSpec:
    input_dim: int
    hidden: list
    output_dim: int
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ShapeError(f"unknown activation {self.activation!r}")
        if self.input_dim < 1 or self.output_dim < 1 or any(h < 1 for h in self.hidden):
            raise ShapeError("all layer dims must be >= 1")

    def param_count(self) -> int:
        dims = [self.input_dim] + list(self.hidden) + [self.output_dim]
        return sum(dims[i] * dims[i + 1] + dims[i + 1] for i in range(len(dims) - 1))


@dataclass
class Conv1dSpec:
    in_channels: int
    layers: list  # (kernel, stride, out_channels) triples

    def out_lengths(self, length: int) -> list:
        """Per-layer output lengths for an input of `length` steps."""
        out = []
        for k, s, _ in self.layers:
            length = (length - k) // s + 1
            if length < 1:
                raise WindowTooShortError(
                    f"history window too small: layer (k={k},s={s}) needs more steps")
            out.append(length)
        return out

    def min_length(self) -> int:
        lo, hi = 1, 4096
        while lo < hi:
            mid = (lo + hi) // 2
            try:
                self.out_lengths(mid)
                hi = mid
            except WindowTooShortError:
                lo = mid + 1
        return lo


def orthogonal(rng: np.random.Generator, rows: int, cols: int, gain: float, dtype) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return (gain * q[:rows, :cols]).astype(dtype)


class Mlp:
    """Dense stack with the spec's activation between hidden layers."""

    def __init__(self, spec: MlpSpec, rng: np.random.Generator, name: str,
                 final_gain: float = 1.0, dtype=np.float32):
        self.spec = spec
        self.name = name
        self.params: dict[str, Tensor] = {}
        dims = [spec.input_dim] + list(spec.hidden) + [spec.output_dim]
        gain = math.sqrt(2.0)
        for i in range(len(dims) - 1):
            last = i == len(dims) - 2
            g = final_gain if last else gain
            w = orthogonal(rng, dims[i], dims[i + 1], g, dtype)
            b = np.zeros(dims[i + 1], dtype=dtype)
            self.params[f"{name}.l{i}.w"] = Tensor(w, requires_grad=True, name=f"{name}.l{i}.w")
            self.params[f"{name}.l{i}.b"] = Tensor(b, requires_grad=True, name=f"{name}.l{i}.b")
        self.n_layers = len(dims) - 1

    def forward(self, x) -> Tensor:
        x = as_tensor(x, self.params[f"{self.name}.l0.w"].dtype)
        if x.shape[-1] != self.spec.input_dim:
            raise ShapeError(
                f"{self.name} layer 0 expects input dim {self.spec.input_dim}, got {x.shape[-1]}")
        act = Tensor.tanh if self.spec.activation == "tanh" else Tensor.relu
        for i in range(self.n_layers):
            x = x @ self.params[f"{self.name}.l{i}.w"] + self.params[f"{self.name}.l{i}.b"]
            if i < self.n_layers - 1:
                x = act(x)
        return x

    __call__ = forward


class Conv1dNet:
    """1-D conv stack over (batch, length, channels), relu between layers,
    then flatten -> dense hidden -> linear output."""

    def __init__(self, spec: Conv1dSpec, seq_len: int, dense_hidden: int, out_dim: int,
                 rng: np.random.Generator, name: str, dtype=np.float32):
        self.spec = spec
        self.seq_len = seq_len
        self.name = name
        self.params: dict[str, Tensor] = {}
        c_in = spec.in_channels
        for i, (k, s, c_out) in enumerate(spec.layers):
            w = orthogonal(rng, c_in * k, c_out, math.sqrt(2.0), dtype).reshape(c_in, k, c_out)
            b = np.zeros(c_out, dtype=dtype)
            self.params[f"{name}.c{i}.w"] = Tensor(w, requires_grad=True, name=f"{name}.c{i}.w")
            self.params[f"{name}.c{i}.b"] = Tensor(b, requires_grad=True, name=f"{name}.c{i}.b")
            c_in = c_out
        flat = spec.out_lengths(seq_len)[-1] * c_in
        mlp_rng = rng
        self.head = Mlp(MlpSpec(flat, [dense_hidden], out_dim, "relu"), mlp_rng,
                        f"{name}.head", dtype=dtype)
        self.params.update(self.head.params)

    def forward(self, seq) -> Tensor:
        x = as_tensor(seq, self.params[f"{self.name}.c0.w"].dtype)
        single = x.data.ndim == 2
        if single:
            x = x.reshape(1, *x.shape)
        if x.shape[2] != self.spec.in_channels:
            raise ShapeError(
                f"{self.name} expects {self.spec.in_channels} channels, got {x.shape[2]}")
        self.spec.out_lengths(x.shape[1])  # raises WindowTooShortError if short
        for i, (k, s, _) in enumerate(self.spec.layers):
            x = conv1d(x, self.params[f"{self.name}.c{i}.w"],
                       self.params[f"{self.name}.c{i}.b"], s)
            x = x.relu()
        x = x.reshape(x.shape[0], -1)
        out = self.head(x)
        if single:
            out = out.reshape(out.shape[-1])
        return out

    __call__ = forward


def conv1d(x: Tensor, w: Tensor, b: Tensor, stride: int) -> Tensor:
    """Valid 1-D convolution. x: (B, L, C_in), w: (C_in, k, C_out)."""
    B, L, C_in = x.shape
    _, k, C_out = w.shape
    L_out = (L - k) // stride + 1
    if L_out < 1:
        raise WindowTooShortError(f"history window too small: length {L} < kernel {k}")
    win = np.lib.stride_tricks.sliding_window_view(x.data, k, axis=1)[:, ::stride]
    # win: (B, L_out, C_in, k) -> GEMM against (C_in*k, C_out)
    wmat = w.data.reshape(C_in * k, C_out)
    y = win.transpose(0, 1, 3, 2).reshape(B * L_out, k * C_in) @ \
        w.data.transpose(1, 0, 2).reshape(k * C_in, C_out)
    y = y.reshape(B, L_out, C_out) + b.data
    out = _node(y, (x, w, b))
    if out._parents:
        def bw(g):
            if b.requires_grad:
                b._accum(g.sum(axis=(0, 1)))
            if w.requires_grad:
                gw = win.reshape(B * L_out, C_in * k).T @ g.reshape(B * L_out, C_out)
                w._accum(gw.reshape(C_in, k, C_out))
            if x.requires_grad:
                gx = np.zeros_like(x.data)
                for kk in range(k):
                    # input index t*stride + kk for t in [0, L_out)
                    gx[:, kk:kk + stride * L_out:stride, :] += g @ w.data[:, kk, :].T
                x._accum(gx)
        out._backward = bw
    return out


class GaussianHead:
    """State-independent learned log-std per action dim."""

    def __init__(self, act_dim: int, name: str = "log_std", init: float = -1.0,
                 dtype=np.float32):
        self.log_std = Tensor(np.full(act_dim, init, dtype=dtype),
                              requires_grad=True, name=name)
        self.act_dim = act_dim

    def std(self) -> np.ndarray:
        return np.exp(self.log_std.data)

    def sample(self, mean: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        eps = rng.standard_normal(mean.shape).astype(mean.dtype)
        return mean + self.std().astype(mean.dtype) * eps

    def log_prob(self, mean: Tensor, actions: np.ndarray) -> Tensor:
        """Log density of `actions` (constant) under N(mean, std); differentiable
        in mean and log_std."""
        inv_std = (-self.log_std).exp()
        z = (as_tensor(actions, mean.dtype) - mean) * inv_std
        quad = z.square().sum(axis=-1) * 0.5
        const = 0.5 * self.act_dim * math.log(2.0 * math.pi)
        return -(quad + self.log_std.sum() + const)

    def log_prob_np(self, mean: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """Graph-free log density for rollouts."""
        z = (actions - mean) * np.exp(-self.log_std.data)
        return -(0.5 * (z * z).sum(axis=-1) + self.log_std.data.sum(dtype=np.float64)
                 + 0.5 * self.act_dim * math.log(2.0 * math.pi)).astype(np.float64)

    def entropy(self) -> Tensor:
        const = 0.5 * self.act_dim * (1.0 + math.log(2.0 * math.pi))
        return self.log_std.sum() + const


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)


class Adam:
    def __init__(self, params: list, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.state = AdamState(lr, beta1, beta2, eps)
        for p in self.params:
            self.state.first_moment[p.name] = np.zeros_like(p.data)
            self.state.second_moment[p.name] = np.zeros_like(p.data)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        s = self.state
        s.step_count += 1
        c1 = 1.0 - s.beta1 ** s.step_count
        c2 = 1.0 - s.beta2 ** s.step_count
        for p in self.params:
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise NonFiniteError(f"non-finite gradient for parameter {p.name!r}")
            m = s.first_moment[p.name]
            v = s.second_moment[p.name]
            m += (1.0 - s.beta1) * (g - m)
            v += (1.0 - s.beta2) * (g * g - v)
            p.data -= (s.lr / c1) * m / (np.sqrt(v / c2) + s.eps)

    def state_tensors(self, prefix: str) -> dict:
        out = {}
        for p in self.params:
            out[f"{prefix}.m.{p.name}"] = self.state.first_moment[p.name]
            out[f"{prefix}.v.{p.name}"] = self.state.second_moment[p.name]
        out[f"{prefix}.step"] = np.array([self.state.step_count], dtype=np.float32)
        return out

    def load_state_tensors(self, prefix: str, tensors: dict):
        for p in self.params:
            self.state.first_moment[p.name][:] = tensors[f"{prefix}.m.{p.name}"]
            self.state.second_moment[p.name][:] = tensors[f"{prefix}.v.{p.name}"]
        self.state.step_count = int(tensors[f"{prefix}.step"][0])


def clip_grad_norm(params: list, max_norm: float) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) ** 2))
    norm = math.sqrt(total)
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

def grad_check(net, inputs: np.ndarray, seed: int, samples: int | None = None,
               h: float = 1e-4) -> float:
    """Max relative error between tape gradients and central finite differences.

    The net must be built at float64. When `samples` is None every parameter
    is swept, which is only feasible for nets up to ~1e4 parameters; larger
    nets must pass a sample count.
    """
    params = list(net.params.values())
    total = sum(p.data.size for p in params)
    if samples is None and total > 10_000:
        raise ShapeError(f"exhaustive grad_check infeasible for {total} params; "
                         "pass a sample count")
    rng = np.random.default_rng(seed)
    out = net(inputs)
    proj = rng.standard_normal(out.shape)

    def loss_and_signs() -> tuple:
        global _RELU_SIGNS
        _RELU_SIGNS = []
        try:
            with no_grad():
                value = float((net(inputs).data * proj).sum())
            return value, _RELU_SIGNS
        finally:
            _RELU_SIGNS = None

    loss = (net(inputs) * Tensor(proj)).sum()
    for p in params:
        p.grad = None
    backward(loss)

    worst = 0.0
    for p in params:
        flat = p.data.reshape(-1)
        gflat = (p.grad if p.grad is not None else np.zeros_like(p.data)).reshape(-1)
        if samples is None or samples >= flat.size:
            idx = np.arange(flat.size)
        else:
            idx = rng.choice(flat.size, size=samples, replace=False)
        for i in idx:
            keep = flat[i]
            flat[i] = keep + h
            f_plus, signs_plus = loss_and_signs()
            flat[i] = keep - h
            f_minus, signs_minus = loss_and_signs()
            flat[i] = keep
            # a relu unit flipping inside the stencil makes the difference
            # quotient measure the kink, not the derivative; skip those
            if any(not np.array_equal(a, b) for a, b in zip(signs_plus, signs_minus)):
                continue
            numeric = (f_plus - f_minus) / (2.0 * h)
            analytic = float(gflat[i])
            rel = abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))
            worst = max(worst, rel)
    for p in params:
        p.grad = None
    return worst
