"""Hidden cells, output heads and parameter initialisers."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import (
    DimensionError,
    Param,
    Tensor,
    activation,
    affine,
    avg_pool1d,
    conv1d_valid,
    reshape,
    softplus,
)

HIDDEN = 24
KERNEL = 2
POOL = 2
POOL_STRIDE = 1


def init_params(shape, scheme: str, rng: np.random.Generator, fan_in: int | None = None,
                fan_out: int | None = None) -> np.ndarray:
    """Draw a weight array.

    ``he`` uses std ``sqrt(2/fan_in)``; ``xavier_normal`` uses
    ``sqrt(2/(fan_in+fan_out))``. Fans default to the trailing/leading dims
    of a dense ``(out, in)`` matrix.
    """
    shape = tuple(int(s) for s in shape)
    if fan_in is None:
        fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else shape[0]
    if fan_out is None:
        fan_out = shape[0]
    if fan_in < 1 or fan_out < 1:
        raise ValueError(f"fan_in and fan_out must be >= 1 (got {fan_in}, {fan_out})")
    if scheme == "he":
        std = math.sqrt(2.0 / fan_in)
    elif scheme == "xavier_normal":
        std = math.sqrt(2.0 / (fan_in + fan_out))
    else:
        raise ValueError(f"unknown init scheme {scheme!r}")
    return rng.normal(0.0, std, size=shape)


def zeros_bias(n: int) -> np.ndarray:
    return np.zeros(n)


class DenseCell:
    """Stack of fully connected layers, ``a = act(W_k ... act(W_1 x + b_1) ... + b_k)``."""

    kind = "dense"

    def __init__(self, prefix: str, in_width: int, width: int = HIDDEN, n_layers: int = 2,
                 act: str = "relu", init: str = "he", rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_width = in_width
        self.width = width
        self.act = act
        self.layers: list[tuple[Param, Param]] = []
        fan = in_width
        for j in range(n_layers):
            W = Param(f"{prefix}.dense{j + 1}.W", init_params((width, fan), init, rng))
            b = Param(f"{prefix}.dense{j + 1}.b", zeros_bias(width))
            self.layers.append((W, b))
            fan = width

    @property
    def out_width(self) -> int:
        return self.width

    def params(self) -> list[Param]:
        return [p for layer in self.layers for p in layer]

    def first_weight(self) -> Param:
        return self.layers[0][0]

    def last_weight(self) -> Param:
        return self.layers[-1][0]

    def __call__(self, cell_input) -> Tensor:
        a = cell_input
        if a.shape[-1] != self.in_width:
            raise DimensionError(f"dense cell expects width {self.in_width}, got {a.shape[-1]}")
        for W, b in self.layers:
            a = activation(self.act, affine(W, a, b))
        return a


def conv_stage_lengths(length: int) -> list[int]:
    """Sequence length after each conv/pool stage of the convolutional cell."""
    out = [length]
    for step in ("conv", "pool", "conv", "pool"):
        prev = out[-1]
        out.append(prev - KERNEL + 1 if step == "conv" else (prev - POOL) // POOL_STRIDE + 1)
    return out


MIN_CONV_INPUT = next(n for n in range(1, 100) if conv_stage_lengths(n)[-1] >= 1)


class ConvCell:
    """conv -> ReLU -> avg-pool -> conv -> ReLU -> avg-pool -> flatten -> dense(ReLU).

    The cell input is read as a single-channel sequence.
    """

    kind = "conv"

    def __init__(self, prefix: str, in_width: int, width: int = HIDDEN, act: str = "relu",
                 init: str = "he", rng: np.random.Generator | None = None):
        if in_width < MIN_CONV_INPUT:
            raise DimensionError(f"conv cell needs input length >= {MIN_CONV_INPUT}, got {in_width}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_width = in_width
        self.width = width
        self.act = act
        self.flat_len = conv_stage_lengths(in_width)[-1]
        f = width
        self.conv1 = (Param(f"{prefix}.conv1.K", init_params((f, 1, KERNEL), init, rng, fan_in=KERNEL, fan_out=f * KERNEL)),
                      Param(f"{prefix}.conv1.b", zeros_bias(f)))
        self.conv2 = (Param(f"{prefix}.conv2.K", init_params((f, f, KERNEL), init, rng, fan_in=f * KERNEL, fan_out=f * KERNEL)),
                      Param(f"{prefix}.conv2.b", zeros_bias(f)))
        flat = f * self.flat_len
        self.dense = (Param(f"{prefix}.dense.W", init_params((width, flat), init, rng)),
                      Param(f"{prefix}.dense.b", zeros_bias(width)))

    @property
    def out_width(self) -> int:
        return self.width

    def params(self) -> list[Param]:
        return [*self.conv1, *self.conv2, *self.dense]

    def first_weight(self) -> Param:
        return self.conv1[0]

    def last_weight(self) -> Param:
        return self.dense[0]

    def __call__(self, cell_input) -> Tensor:
        if cell_input.shape[-1] != self.in_width:
            raise DimensionError(f"conv cell expects length {self.in_width}, got {cell_input.shape[-1]}")
        lead = cell_input.shape[:-1]
        h = reshape(cell_input, (*lead, 1, self.in_width))
        h = avg_pool1d(activation(self.act, conv1d_valid(h, *self.conv1)), POOL, POOL_STRIDE)
        h = avg_pool1d(activation(self.act, conv1d_valid(h, *self.conv2)), POOL, POOL_STRIDE)
        h = reshape(h, (*lead, self.width * self.flat_len))
        return activation(self.act, affine(self.dense[0], h, self.dense[1]))


class MixtureHead:
    """Gaussian output: ``mu = W_mu a + b_mu``, ``sigma = softplus(W_sigma a + b_sigma)``."""

    kind = "mixture"

    def __init__(self, prefix: str, in_width: int, init: str = "he", rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_width = in_width
        self.W_mu = Param(f"{prefix}.mu.W", init_params((1, in_width), init, rng))
        self.b_mu = Param(f"{prefix}.mu.b", zeros_bias(1))
        self.W_sigma = Param(f"{prefix}.sigma.W", init_params((1, in_width), init, rng))
        self.b_sigma = Param(f"{prefix}.sigma.b", zeros_bias(1))

    def params(self) -> list[Param]:
        return [self.W_mu, self.b_mu, self.W_sigma, self.b_sigma]

    def __call__(self, a) -> tuple[Tensor, Tensor]:
        if a.shape[-1] != self.in_width:
            raise DimensionError(f"mixture head expects width {self.in_width}, got {a.shape[-1]}")
        mu = affine(self.W_mu, a, self.b_mu)
        sigma = softplus(affine(self.W_sigma, a, self.b_sigma))
        return mu, sigma


class LinearHead:
    """Unbounded scalar output ``y = W a + b``."""

    kind = "linear"

    def __init__(self, prefix: str, in_width: int, init: str = "he", rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_width = in_width
        self.W = Param(f"{prefix}.out.W", init_params((1, in_width), init, rng))
        self.b = Param(f"{prefix}.out.b", zeros_bias(1))

    def params(self) -> list[Param]:
        return [self.W, self.b]

    def __call__(self, a) -> tuple[Tensor, None]:
        if a.shape[-1] != self.in_width:
            raise DimensionError(f"linear head expects width {self.in_width}, got {a.shape[-1]}")
        return affine(self.W, a, self.b), None


def dense_cell_forward(cell: DenseCell, cell_input) -> Tensor:
    return cell(cell_input)


def conv_cell_forward(cell: ConvCell, cell_input) -> Tensor:
    return cell(cell_input)


def mixture_output(head: MixtureHead, a) -> tuple[float, float]:
    """Scalar (mu, sigma) for a single unbatched activation vector."""
    mu, sigma = head(a if isinstance(a, Tensor) else Tensor(a))
    return mu.item(), sigma.item()


def gaussian_nll(mu: float, sigma: float, y: float) -> float:
    """Negative log density of ``y`` under N(mu, sigma^2)."""
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    r = y - mu
    return 0.5 * math.log(2.0 * math.pi) + math.log(sigma) + r * r / (2.0 * sigma * sigma)


def mse(pred, target) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"mse shapes: {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))
