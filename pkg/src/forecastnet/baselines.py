"""Reference predictors built on the same numeric core."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .cells import init_params
from .data import ScaleParams
from .tensor import DimensionError, Param, Tensor, activation, affine, mse, no_record


@dataclass(frozen=True)
class MLPSpec:
    n_inputs: int
    hidden: tuple[int, ...]
    n_outputs: int
    activation: str = "relu"
    init: str = "he"
    seed: int = 0

    @property
    def tau(self) -> int:
        return self.n_outputs

    @property
    def variant(self) -> str:
        return "MLP"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MLPSpec":
        d = dict(d)
        d["hidden"] = tuple(d["hidden"])
        return cls(**d)


class MLP:
    """Fully connected network with every output at the final layer."""

    kind = "mlp"

    def __init__(self, spec: MLPSpec, scaler: ScaleParams | None = None):
        self.spec = spec
        self.scaler = scaler
        rng = np.random.default_rng(spec.seed)
        self.hidden: list[tuple[Param, Param]] = []
        fan = spec.n_inputs
        for j, width in enumerate(spec.hidden):
            W = Param(f"hidden{j + 1}.W", init_params((width, fan), spec.init, rng))
            self.hidden.append((W, Param(f"hidden{j + 1}.b", np.zeros(width))))
            fan = width
        self.out = (Param("out.W", init_params((spec.n_outputs, fan), spec.init, rng)),
                    Param("out.b", np.zeros(spec.n_outputs)))

    @property
    def tau(self) -> int:
        return self.spec.n_outputs

    def params(self) -> list[Param]:
        return [p for layer in (*self.hidden, self.out) for p in layer]

    def tagged_weight(self, tag: str) -> Param:
        if tag == "first":
            return self.hidden[0][0] if self.hidden else self.out[0]
        if tag == "last":
            return self.hidden[-1][0] if self.hidden else self.out[0]
        raise ValueError(f"unknown layer tag {tag!r}")

    def _forward(self, x) -> Tensor:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.spec.n_inputs:
            raise DimensionError(f"expected input width {self.spec.n_inputs}, got shape {x.shape}")
        h = Tensor(x)
        for W, b in self.hidden:
            h = activation(self.spec.activation, affine(W, h, b))
        return affine(self.out[0], h, self.out[1])

    def loss(self, x, y) -> Tensor:
        return mse(self._forward(x), Tensor(y))

    def predict_scaled(self, x, mode: str = "mean", rng=None):
        with no_record():
            return self._forward(x).data, None


def build_mlp(tau: int, seed: int = 0) -> MLP:
    """``2tau -> 4tau (ReLU) -> tau (linear)``."""
    if tau < 1:
        raise ValueError("tau must be >= 1")
    return MLP(MLPSpec(2 * tau, (4 * tau,), tau, "relu", "he", seed))


def build_deep_mlp(n_inputs: int, n_hidden: int, width: int, n_outputs: int, seed: int = 0,
                   act: str = "sigmoid", init: str = "xavier_normal") -> MLP:
    return MLP(MLPSpec(n_inputs, (width,) * n_hidden, n_outputs, act, init, seed))


def seasonal_naive(inputs, tau: int) -> np.ndarray:
    """Repeat the most recent seasonal cycle: the last ``tau`` of ``2tau`` inputs."""
    x = np.asarray(inputs, dtype=np.float64)
    if x.shape[-1] != 2 * tau:
        raise DimensionError(f"seasonal_naive expects {2 * tau} inputs, got {x.shape[-1]}")
    return x[..., tau:].copy()
