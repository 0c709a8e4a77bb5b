"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every op accepts an optional leading batch axis. When a :class:`Tape` is
active (``with Tape() as tape:``) each op appends a :class:`Record` holding
what backward needs; outside a tape ops just compute values.

    >>> W = Param("W", np.eye(2)); b = Param("b", np.zeros(2))
    >>> with Tape() as tape:
    ...     loss = mean(affine(W, Tensor([3.0, 4.0]), b))
    >>> backward(tape, loss)
    >>> W.grad
    array([[1.5, 2. ],
           [1.5, 2. ]])
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels

SOFTPLUS_CUTOFF = 30.0
_TINY = np.finfo(np.float64).tiny
ACTIVATIONS = ("relu", "sigmoid", "softplus", "identity")

_ids = itertools.count(1)
_local = threading.local()


class DimensionError(ValueError):
    """Operand shapes do not conform."""


class Tensor:
    """Shape-tagged float64 array.

    ``param`` is set only for leaves that stand in for a :class:`Param` on a tape.
    """

    __slots__ = ("data", "id", "param")

    def __init__(self, data, *, validate: bool = True, param: "Param | None" = None):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if validate and not np.all(np.isfinite(arr)):
            raise ValueError("tensor values must be finite")
        self.data = arr
        self.id = next(_ids)
        self.param = param

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        return cls(arr, validate=False)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.data)))

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single element, shape is {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, id={self.id})"


class Param:
    """A trainable array with its gradient accumulator."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value):
        self.name = name
        self.value = np.array(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def size(self) -> int:
        return self.value.size

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def __repr__(self) -> str:
        return f"Param({self.name!r}, shape={self.shape})"


@dataclass
class Record:
    op: str
    inputs: tuple[int, ...]
    output: int
    saved: dict = field(default_factory=dict)


class Tape:
    """Ordered log of primitive applications.

    Records are appended in execution order, so every record's inputs were
    produced by earlier records or are leaves.
    """

    def __init__(self) -> None:
        self.records: list[Record] = []
        self.leaves: dict[int, Param] = {}
        self.loss: Tensor | None = None
        self._prev: Tape | None = None

    def __enter__(self) -> "Tape":
        self._prev = getattr(_local, "tape", None)
        _local.tape = self
        return self

    def __exit__(self, *exc) -> None:
        _local.tape = self._prev
        self._prev = None

    def __len__(self) -> int:
        return len(self.records)


def active_tape() -> Tape | None:
    return getattr(_local, "tape", None)


@contextmanager
def no_record():
    """Suspend recording onto the active tape."""
    prev = active_tape()
    _local.tape = None
    try:
        yield
    finally:
        _local.tape = prev


def as_tensor(obj) -> Tensor:
    if isinstance(obj, Tensor):
        return obj
    if isinstance(obj, Param):
        t = Tensor(obj.value, validate=False, param=obj)
        tape = active_tape()
        if tape is not None:
            tape.leaves[t.id] = obj
        return t
    return Tensor(obj)


def _emit(op: str, inputs: Sequence[Tensor], out: np.ndarray, **saved) -> Tensor:
    result = Tensor._wrap(out)
    tape = active_tape()
    if tape is not None:
        tape.records.append(Record(op, tuple(t.id for t in inputs), result.id, saved))
    return result


# ------------------------------------------------------------------- ops


def affine(W, x, b) -> Tensor:
    """``out[..., i] = sum_j W[i, j] * x[..., j] + b[i]``."""
    W, x, b = as_tensor(W), as_tensor(x), as_tensor(b)
    if W.data.ndim != 2 or b.data.ndim != 1:
        raise DimensionError(f"affine expects W 2-D and b 1-D, got {W.shape} and {b.shape}")
    m, n = W.shape
    if x.shape[-1:] != (n,) or b.shape != (m,):
        raise DimensionError(f"affine shape mismatch: W {W.shape}, x {x.shape}, b {b.shape}")
    out = x.data @ W.data.T + b.data
    return _emit("affine", (W, x, b), out, W=W.data, x=x.data)


def _sigmoid(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def softplus_array(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    big = v > SOFTPLUS_CUTOFF
    safe = np.where(big, 0.0, v)
    out = np.where(big, v + np.log1p(np.exp(-np.abs(v))), np.log1p(np.exp(safe)))
    # exp underflows below about -745; keep the result strictly positive
    return np.maximum(out, _TINY)


def activation(kind: str, x) -> Tensor:
    x = as_tensor(x)
    v = x.data
    if kind == "relu":
        out = np.maximum(v, 0.0)
    elif kind == "sigmoid":
        out = _sigmoid(v)
    elif kind == "softplus":
        out = softplus_array(v)
    elif kind == "identity":
        out = v.copy()
    else:
        raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")
    return _emit("activation", (x,), out, kind=kind, x=v, y=out)


def relu(x) -> Tensor:
    return activation("relu", x)


def sigmoid(x) -> Tensor:
    return activation("sigmoid", x)


def softplus(x) -> Tensor:
    return activation("softplus", x)


def _as_3d(v: np.ndarray) -> np.ndarray:
    return v[None] if v.ndim == 2 else v


def conv1d_valid(x, kernels, bias) -> Tensor:
    """Valid cross-correlation of ``x`` ([C_in, L] or [B, C_in, L]) with ``kernels`` [C_out, C_in, k]."""
    x, K, bias = as_tensor(x), as_tensor(kernels), as_tensor(bias)
    if x.data.ndim not in (2, 3) or K.data.ndim != 3 or bias.data.ndim != 1:
        raise DimensionError(f"conv1d shapes: x {x.shape}, kernels {K.shape}, bias {bias.shape}")
    co, ci, k = K.shape
    if x.shape[-2] != ci or bias.shape[0] != co:
        raise DimensionError(f"conv1d channel mismatch: x {x.shape}, kernels {K.shape}, bias {bias.shape}")
    if x.shape[-1] < k:
        raise DimensionError(f"conv1d needs length >= kernel size ({x.shape[-1]} < {k})")
    x3 = _as_3d(x.data)
    out = _kernels.active.conv1d_forward(x3, K.data, bias.data)
    if x.data.ndim == 2:
        out = out[0]
    return _emit("conv1d", (x, K, bias), out, x=x3, K=K.data, batched=x.data.ndim == 3)


def avg_pool1d(x, pool: int, stride: int) -> Tensor:
    x = as_tensor(x)
    if pool < 1 or stride < 1:
        raise ValueError("pool and stride must be >= 1")
    if x.data.ndim not in (2, 3):
        raise DimensionError(f"avg_pool1d expects [C, L] or [B, C, L], got {x.shape}")
    length = x.shape[-1]
    if length < pool:
        raise DimensionError(f"avg_pool1d needs length >= pool ({length} < {pool})")
    x3 = _as_3d(x.data)
    out = _kernels.active.avgpool_forward(x3, pool, stride)
    if x.data.ndim == 2:
        out = out[0]
    return _emit("avgpool", (x,), out, length=length, pool=pool, stride=stride, batched=x.data.ndim == 3)


def concat(parts) -> Tensor:
    """Join along the last axis; leading (batch) axes must agree."""
    if not parts:
        raise ValueError("concat needs at least one part")
    ts = [as_tensor(p) for p in parts]
    lead = ts[0].shape[:-1]
    if any(t.data.ndim == 0 or t.shape[:-1] != lead for t in ts):
        raise DimensionError(f"concat parts disagree: {[t.shape for t in ts]}")
    out = np.concatenate([t.data for t in ts], axis=-1)
    sizes = [t.shape[-1] for t in ts]
    return _emit("concat", ts, out, sizes=sizes)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    out = x.data.reshape(shape)
    return _emit("reshape", (x,), out, shape=x.shape)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"add shape mismatch: {a.shape} vs {b.shape}")
    return _emit("add", (a, b), a.data + b.data)


def total(x) -> Tensor:
    """Sum of all elements as a scalar tensor."""
    x = as_tensor(x)
    return _emit("sum", (x,), np.array(x.data.sum()), shape=x.shape)


def mean(x) -> Tensor:
    x = as_tensor(x)
    return _emit("mean", (x,), np.array(x.data.mean()), shape=x.shape)


def gaussian_nll(mu, sigma, y) -> Tensor:
    """Elementwise ``-log N(y; mu, sigma^2)``; gradients flow to ``mu`` and ``sigma``."""
    mu, sigma, y = as_tensor(mu), as_tensor(sigma), as_tensor(y)
    if not (mu.shape == sigma.shape == y.shape):
        raise DimensionError(f"gaussian_nll shapes: {mu.shape}, {sigma.shape}, {y.shape}")
    if np.any(sigma.data <= 0):
        raise ValueError("sigma must be strictly positive")
    r = y.data - mu.data
    s = sigma.data
    out = 0.5 * np.log(2.0 * np.pi) + np.log(s) + r * r / (2.0 * s * s)
    return _emit("gaussian_nll", (mu, sigma, y), out, r=r, s=s)


def mse(pred, target) -> Tensor:
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise DimensionError(f"mse shapes: {pred.shape} vs {target.shape}")
    r = pred.data - target.data
    return _emit("mse", (pred, target), np.array(np.mean(r * r)), r=r)


# --------------------------------------------------------------- backward


def _vjp_affine(rec, g):
    W, x = rec.saved["W"], rec.saved["x"]
    m, n = W.shape
    g2 = g.reshape(-1, m)
    gW = g2.T @ x.reshape(-1, n)
    gb = g2.sum(axis=0)
    gx = g @ W
    return gW, gx, gb


def _vjp_activation(rec, g):
    kind, x, y = rec.saved["kind"], rec.saved["x"], rec.saved["y"]
    if kind == "relu":
        return (g * (x > 0),)
    if kind == "sigmoid":
        return (g * y * (1.0 - y),)
    if kind == "softplus":
        return (g * _sigmoid(x),)
    return (g,)


def _vjp_conv1d(rec, g):
    g3 = g if rec.saved["batched"] else g[None]
    gx, gK, gb = _kernels.active.conv1d_backward(rec.saved["x"], rec.saved["K"], np.ascontiguousarray(g3))
    if not rec.saved["batched"]:
        gx = gx[0]
    return gx, gK, gb


def _vjp_avgpool(rec, g):
    s = rec.saved
    g3 = g if s["batched"] else g[None]
    gx = _kernels.active.avgpool_backward(np.ascontiguousarray(g3), s["length"], s["pool"], s["stride"])
    return (gx if s["batched"] else gx[0],)


def _vjp_concat(rec, g):
    cuts = np.cumsum(rec.saved["sizes"])[:-1]
    return tuple(np.split(g, cuts, axis=-1))


def _vjp_gaussian_nll(rec, g):
    r, s = rec.saved["r"], rec.saved["s"]
    gmu = -g * r / (s * s)
    gsigma = g * (1.0 / s - r * r / (s * s * s))
    return gmu, gsigma, None


def _vjp_mse(rec, g):
    r = rec.saved["r"]
    gp = g * 2.0 * r / r.size
    return gp, -gp


_VJP: dict[str, Callable] = {
    "affine": _vjp_affine,
    "activation": _vjp_activation,
    "conv1d": _vjp_conv1d,
    "avgpool": _vjp_avgpool,
    "concat": _vjp_concat,
    "reshape": lambda rec, g: (g.reshape(rec.saved["shape"]),),
    "add": lambda rec, g: (g, g),
    "sum": lambda rec, g: (np.full(rec.saved["shape"], float(g.reshape(-1)[0])),),
    "mean": lambda rec, g: (np.full(rec.saved["shape"], float(g.reshape(-1)[0]) / max(1, int(np.prod(rec.saved["shape"])))),),
    "gaussian_nll": _vjp_gaussian_nll,
    "mse": _vjp_mse,
}


def backward(tape: Tape, loss: Tensor) -> dict[int, np.ndarray]:
    """Accumulate d(loss)/d(param) into every ``Param.grad`` reached by ``tape``.

    Gradients are added to whatever the accumulators already hold; zero them
    between steps. Returns the adjoint of every tensor id for inspection.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    adj: dict[int, np.ndarray] = {loss.id: np.ones_like(loss.data)}
    for rec in reversed(tape.records):
        g = adj.get(rec.output)
        if g is None:
            continue
        grads = _VJP[rec.op](rec, g)
        for tid, gi in zip(rec.inputs, grads):
            if gi is None:
                continue
            prev = adj.get(tid)
            adj[tid] = gi if prev is None else prev + gi
    for tid, p in tape.leaves.items():
        g = adj.get(tid)
        if g is not None:
            p.grad += g
    return adj


def grad_of(tape: Tape, loss: Tensor, wrt: Tensor) -> np.ndarray:
    """Gradient of ``loss`` with respect to an arbitrary tensor on the tape."""
    adj = backward(tape, loss)
    return adj.get(wrt.id, np.zeros_like(wrt.data))


def finite_diff_grad(f: Callable[[np.ndarray], float], theta, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``theta``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    theta = np.array(theta, dtype=np.float64)
    flat = theta.reshape(-1)
    out = np.empty_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(theta))
        flat[i] = orig - eps
        fm = float(f(theta))
        flat[i] = orig
        out[i] = (fp - fm) / (2.0 * eps)
    return out.reshape(theta.shape)


def zero_grads(params) -> None:
    for p in params:
        p.zero_grad()
