"""Minimal reverse-mode autodiff on numpy arrays.

Supports exactly the layer set the risk models need: dense (matmul+bias),
1-D valid convolution, an LSTM cell composed from primitives, sigmoid/tanh/
relu/softmax, cross-entropy losses, and SGD/Adam updates. Everything runs
in float64; any non-finite intermediate raises immediately instead of
propagating NaNs into a training run.
"""

from __future__ import annotations

import json
import struct
from typing import Callable, Iterable, Optional

import numpy as np


class ShapeMismatch(Exception):
    pass


class NonFiniteError(Exception):
    """An op produced NaN or Inf."""


class NonScalarLoss(Exception):
    pass


# ---------------------------------------------------------------------------
# Seeded initialization
# ---------------------------------------------------------------------------

class SplitMix64:
    """Counter-based 64-bit mixer; cheap, seedable, bit-reproducible."""

    _MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        self._state = seed & self._MASK

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & self._MASK
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & self._MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & self._MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        # 53 random bits -> double in [0, 1)
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform_array(self, shape) -> np.ndarray:
        n = int(np.prod(shape)) if shape else 1
        vals = np.fromiter((self.uniform() for _ in range(n)), dtype=np.float64, count=n)
        return vals.reshape(shape)


def xavier_uniform(shape, fan_in: int, fan_out: int, rng: SplitMix64) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return (rng.uniform_array(shape) * 2.0 - 1.0) * limit


# ---------------------------------------------------------------------------
# Tensor and tape
# ---------------------------------------------------------------------------

def _check_finite(arr: np.ndarray, op: str) -> np.ndarray:
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"non-finite values produced by op '{op}'")
    return arr


class Tensor:
    """A node in the computation tape.

    Leaf tensors are created directly (parameters, inputs); interior nodes
    record their parents and a backward closure. The tape is acyclic by
    construction and parents always precede children.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "name")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: tuple = (),
        backward_fn: Optional[Callable[[np.ndarray], None]] = None,
        name: str = "",
    ):
        self.data = np.asarray(data, dtype=np.float64)
        _check_finite(self.data, name or "tensor")
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward_fn = backward_fn
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, name={self.name!r})"

    # operator sugar used by the model code
    def __add__(self, other):
        return add(self, _lift(other))

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __matmul__(self, other):
        return matmul(self, _lift(other))


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name: str = "") -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient g back down to `shape` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _node(op: str, data: np.ndarray, parents: tuple, backward_fn) -> Tensor:
    out = Tensor(data, parents=parents, backward_fn=backward_fn, name=op)
    return out


# ---------------------------------------------------------------------------
# Primitive ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def bw(g):
        a._accumulate(_unbroadcast(g, a.data.shape))
        b._accumulate(_unbroadcast(g, b.data.shape))

    return _node("add", out_data, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data - b.data

    def bw(g):
        a._accumulate(_unbroadcast(g, a.data.shape))
        b._accumulate(_unbroadcast(-g, b.data.shape))

    return _node("sub", out_data, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data

    def bw(g):
        a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _node("mul", out_data, (a, b), bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[-1] != b.data.shape[0]:
        raise ShapeMismatch(f"matmul {a.data.shape} @ {b.data.shape}")
    out_data = a.data @ b.data

    def bw(g):
        a._accumulate(g @ b.data.T)
        if a.data.ndim == 1:
            b._accumulate(np.outer(a.data, g))
        else:
            b._accumulate(a.data.reshape(-1, a.data.shape[-1]).T @ g.reshape(-1, g.shape[-1]))

    return _node("matmul", out_data, (a, b), bw)


def relu(a: Tensor) -> Tensor:
    out_data = np.maximum(a.data, 0.0)

    def bw(g):
        a._accumulate(g * (a.data > 0.0))

    return _node("relu", out_data, (a,), bw)


def sigmoid(a: Tensor) -> Tensor:
    out_data = _sigmoid_raw(a.data)

    def bw(g):
        a._accumulate(g * out_data * (1.0 - out_data))

    return _node("sigmoid", out_data, (a,), bw)


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def bw(g):
        a._accumulate(g * (1.0 - out_data * out_data))

    return _node("tanh", out_data, (a,), bw)


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis; outputs strictly positive, rows sum to 1."""
    out_data = softmax_raw(a.data)

    def bw(g):
        dot = np.sum(g * out_data, axis=-1, keepdims=True)
        a._accumulate((g - dot) * out_data)

    return _node("softmax", out_data, (a,), bw)


def tsum(a: Tensor) -> Tensor:
    out_data = np.asarray(a.data.sum())

    def bw(g):
        a._accumulate(np.broadcast_to(g, a.data.shape).copy())

    return _node("sum", out_data, (a,), bw)


def tmean(a: Tensor) -> Tensor:
    n = a.data.size
    out_data = np.asarray(a.data.mean())

    def bw(g):
        a._accumulate(np.broadcast_to(g / n, a.data.shape).copy())

    return _node("mean", out_data, (a,), bw)


def conv1d(inp: Tensor, kernels: Tensor, stride: int = 1) -> Tensor:
    """Valid 1-D convolution.

    inp: [T, C_in] or [B, T, C_in]; kernels: [k_w, C_in, C_out].
    output[t, o] = sum_{w,c} inp[t*stride + w, c] * kernels[w, c, o];
    output length = floor((T - k_w) / stride) + 1.
    """
    if stride < 1:
        raise ShapeMismatch("stride must be >= 1")
    x = inp.data
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None, :, :]
    if x.ndim != 3 or kernels.data.ndim != 3:
        raise ShapeMismatch(f"conv1d input {inp.data.shape}, kernels {kernels.data.shape}")
    batch, length, c_in = x.shape
    k_w, kc_in, c_out = kernels.data.shape
    if kc_in != c_in:
        raise ShapeMismatch(f"conv1d channels: input has {c_in}, kernels expect {kc_in}")
    if length < k_w:
        raise ShapeMismatch(f"conv1d input length {length} shorter than kernel {k_w}")
    out_len = (length - k_w) // stride + 1
    idx = np.arange(out_len)[:, None] * stride + np.arange(k_w)[None, :]  # [L, k_w]
    windows = x[:, idx, :]  # [B, L, k_w, C_in]
    flat = windows.reshape(batch, out_len, k_w * c_in)
    kmat = kernels.data.reshape(k_w * c_in, c_out)
    out_data = flat @ kmat

    def bw(g):
        if squeeze:
            g3 = g[None, :, :]
        else:
            g3 = g
        dk = flat.reshape(-1, k_w * c_in).T @ g3.reshape(-1, c_out)
        kernels._accumulate(dk.reshape(k_w, c_in, c_out))
        dwin = (g3 @ kmat.T).reshape(batch, out_len, k_w, c_in)
        dx = np.zeros_like(x)
        offsets = np.arange(out_len) * stride
        for w in range(k_w):
            dx[:, offsets + w, :] += dwin[:, :, w, :]
        inp._accumulate(dx[0] if squeeze else dx)

    out = out_data[0] if squeeze else out_data
    return _node("conv1d", out, (inp, kernels), bw)


def select_time(a: Tensor, t: int) -> Tensor:
    """Pick time step t from a [B, T, C] (or [T, C]) tensor."""
    axis = a.data.ndim - 2
    if axis not in (0, 1):
        raise ShapeMismatch(f"select_time expects 2-D or 3-D input, got {a.data.shape}")
    out_data = a.data[t] if axis == 0 else a.data[:, t, :]

    def bw(g):
        dx = np.zeros_like(a.data)
        if axis == 0:
            dx[t] = g
        else:
            dx[:, t, :] = g
        a._accumulate(dx)

    return _node("select_time", out_data, (a,), bw)


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy over int class labels; gradient is softmax - onehot."""
    labels = np.asarray(labels, dtype=np.int64)
    z = logits.data
    if z.ndim == 1:
        z = z[None, :]
        labels = np.atleast_1d(labels)
    probs = softmax_raw(z)
    n = z.shape[0]
    picked = probs[np.arange(n), labels]
    out_data = np.asarray(-np.mean(np.log(np.maximum(picked, 1e-300))))
    _check_finite(out_data, "softmax_cross_entropy")

    def bw(g):
        d = probs.copy()
        d[np.arange(n), labels] -= 1.0
        d *= g / n
        logits._accumulate(d if logits.data.ndim != 1 else d[0])

    return _node("softmax_cross_entropy", out_data, (logits,), bw)


def sigmoid_binary_cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Numerically stable mean BCE on raw logits; gradient is sigmoid(z) - y."""
    y = np.asarray(targets, dtype=np.float64)
    z = logits.data
    if y.shape != z.shape:
        raise ShapeMismatch(f"targets {y.shape} vs logits {z.shape}")
    # log(1 + exp(-|z|)) + max(z, 0) - z*y
    loss = np.log1p(np.exp(-np.abs(z))) + np.maximum(z, 0.0) - z * y
    out_data = np.asarray(loss.mean())
    _check_finite(out_data, "sigmoid_bce")
    n = z.size

    def bw(g):
        logits._accumulate(g * (_sigmoid_raw(z) - y) / n)

    return _node("sigmoid_bce", out_data, (logits,), bw)


def _sigmoid_raw(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax_raw(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------

def backward(loss: Tensor) -> None:
    """Reverse-topological gradient accumulation from a scalar loss."""
    if loss.data.size != 1:
        raise NonScalarLoss(f"loss has shape {loss.data.shape}")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    loss._accumulate(np.ones_like(loss.data))
    for node in reversed(order):
        if node._backward_fn is not None and node.grad is not None:
            node._backward_fn(node.grad)


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# LSTM cell
# ---------------------------------------------------------------------------

class LstmCellParams:
    """One LSTM cell: gate order i (input), f (forget), g (candidate), o (output)."""

    GATES = ("i", "f", "g", "o")

    def __init__(self, input_size: int, hidden_size: int, rng: SplitMix64, prefix: str = "lstm"):
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.W = {}
        self.U = {}
        self.b = {}
        for gate in self.GATES:
            self.W[gate] = parameter(
                xavier_uniform((input_size, hidden_size), input_size, hidden_size, rng),
                name=f"{prefix}.W_{gate}",
            )
            self.U[gate] = parameter(
                xavier_uniform((hidden_size, hidden_size), hidden_size, hidden_size, rng),
                name=f"{prefix}.U_{gate}",
            )
            self.b[gate] = parameter(np.zeros(hidden_size), name=f"{prefix}.b_{gate}")

    def tensors(self) -> list[Tensor]:
        out = []
        for gate in self.GATES:
            out.extend([self.W[gate], self.U[gate], self.b[gate]])
        return out


def lstm_step(params: LstmCellParams, x: Tensor, h_prev: Tensor, c_prev: Tensor):
    """One LSTM time step; returns (h, c).

    i = sig(x W_i + h U_i + b_i), f and o analogous, g = tanh(...);
    c = f*c_prev + i*g; h = o*tanh(c).
    """
    if x.data.shape[-1] != params.input_size:
        raise ShapeMismatch(f"lstm_step input dim {x.data.shape[-1]} != {params.input_size}")
    gate_i = sigmoid(x @ params.W["i"] + h_prev @ params.U["i"] + params.b["i"])
    gate_f = sigmoid(x @ params.W["f"] + h_prev @ params.U["f"] + params.b["f"])
    gate_g = tanh(x @ params.W["g"] + h_prev @ params.U["g"] + params.b["g"])
    gate_o = sigmoid(x @ params.W["o"] + h_prev @ params.U["o"] + params.b["o"])
    c = gate_f * c_prev + gate_i * gate_g
    h = gate_o * tanh(c)
    return h, c


# ---------------------------------------------------------------------------
# Optimizers
# ---------------------------------------------------------------------------

def sgd_step(params: Iterable[Tensor], lr: float) -> None:
    """p <- p - lr * p.grad, elementwise, in place."""
    if lr <= 0:
        raise ValueError("lr must be > 0")
    for p in params:
        if p.grad is not None:
            p.data -= lr * p.grad


class Adam:
    """Adam with bias correction; state keyed by parameter identity."""

    def __init__(self, params: list[Tensor], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in params]
        self._v = [np.zeros_like(p.data) for p in params]

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self._m[i] = b1 * self._m[i] + (1 - b1) * g
            self._v[i] = b2 * self._v[i] + (1 - b2) * (g * g)
            m_hat = self._m[i] / (1 - b1 ** self.t)
            v_hat = self._v[i] / (1 - b2 ** self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# ---------------------------------------------------------------------------
# Checkpoints: JSON manifest {name -> shape} + little-endian float64 blob,
# layers concatenated in manifest order.
# ---------------------------------------------------------------------------

def save_checkpoint(path_base: str, named_arrays: dict[str, np.ndarray]) -> None:
    manifest = {name: list(arr.shape) for name, arr in named_arrays.items()}
    with open(path_base + ".json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=1)
    with open(path_base + ".bin", "wb") as f:
        for name in manifest:
            arr = np.ascontiguousarray(named_arrays[name], dtype=np.float64)
            f.write(struct.pack(f"<{arr.size}d", *arr.ravel().tolist()))


def load_checkpoint(path_base: str) -> dict[str, np.ndarray]:
    with open(path_base + ".json", "r", encoding="utf-8") as f:
        manifest = json.load(f)
    out: dict[str, np.ndarray] = {}
    with open(path_base + ".bin", "rb") as f:
        for name, shape in manifest.items():
            n = int(np.prod(shape)) if shape else 1
            raw = f.read(8 * n)
            if len(raw) != 8 * n:
                raise ValueError(f"checkpoint truncated at layer {name}")
            vals = struct.unpack(f"<{n}d", raw)
            out[name] = np.asarray(vals, dtype=np.float64).reshape(shape)
    return out
