"""ForecastNet assembly: interleaved cells and outputs, training/inference passes."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .cells import (
    HIDDEN,
    MIN_CONV_INPUT,
    ConvCell,
    DenseCell,
    LinearHead,
    MixtureHead,
    conv_stage_lengths,
)
from .checkpoint import load_model, save_model  # noqa: F401  (re-exported)
from .data import ScaleParams
from .tensor import (
    DimensionError,
    Param,
    Tape,
    Tensor,
    activation,
    affine,
    backward,
    concat,
    gaussian_nll,
    mean,
    mse,
    no_record,
)

VARIANTS = ("FN", "cFN", "FN2", "cFN2")


class SpecError(ValueError):
    """Model description cannot be realised."""


@dataclass(frozen=True)
class ModelSpec:
    variant: str
    tau: int
    width: int = HIDDEN
    seed: int = 0
    cell_layers: int = 2
    activation: str = "relu"
    init: str = "he"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise SpecError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.tau < 1:
            raise SpecError("tau must be >= 1")
        if self.width < 1 or self.cell_layers < 1:
            raise SpecError("width and cell_layers must be >= 1")

    @property
    def n_inputs(self) -> int:
        return 2 * self.tau

    @property
    def n_outputs(self) -> int:
        return self.tau

    @property
    def conv(self) -> bool:
        return self.variant in ("cFN", "cFN2")

    @property
    def mixture(self) -> bool:
        return self.variant in ("FN", "cFN")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**d)


@dataclass
class ForecastResult:
    point: np.ndarray
    sigma: np.ndarray | None
    mode: str


def cell_input_width(spec: ModelSpec, index: int) -> int:
    """Width of the concatenated input of cell ``index`` (0-based)."""
    return spec.n_inputs if index == 0 else spec.n_inputs + spec.width + 1


class Model:
    """Ordered (cell, head) pairs; no parameter is shared between positions."""

    kind = "forecastnet"

    def __init__(self, spec: ModelSpec, cells: list, heads: list, scaler: ScaleParams | None = None):
        self.spec = spec
        self.cells = cells
        self.heads = heads
        self.scaler = scaler

    @property
    def tau(self) -> int:
        return self.spec.tau

    def params(self) -> list[Param]:
        out: list[Param] = []
        for cell, head in zip(self.cells, self.heads):
            out.extend(cell.params())
            out.extend(head.params())
        return out

    def tagged_weight(self, tag: str) -> Param:
        if tag == "first":
            return self.cells[0].first_weight()
        if tag == "last":
            return self.cells[-1].last_weight()
        raise ValueError(f"unknown layer tag {tag!r}")

    def _check(self, x, y=None):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.spec.n_inputs or x.ndim not in (1, 2):
            raise DimensionError(f"expected input width {self.spec.n_inputs}, got shape {x.shape}")
        if y is not None:
            y = np.asarray(y, dtype=np.float64)
            if y.shape != x.shape[:-1] + (self.spec.n_outputs,):
                raise DimensionError(f"expected target shape {x.shape[:-1] + (self.spec.n_outputs,)}, got {y.shape}")
        return x, y

    def _run(self, x: np.ndarray, feed):
        """Shared forward sweep; ``feed(i, out, sigma)`` returns the value passed to cell i+1."""
        xt = Tensor(x)
        a_prev = y_prev = None
        outs, sigmas = [], []
        for i, (cell, head) in enumerate(zip(self.cells, self.heads)):
            inp = xt if i == 0 else concat([xt, a_prev, y_prev])
            a = cell(inp)
            out, sigma = head(a)
            outs.append(out)
            sigmas.append(sigma)
            y_prev = feed(i, out, sigma)
            a_prev = a
        return outs, sigmas

    def loss(self, x, y) -> Tensor:
        """Teacher-forced loss on scaled data; records onto the active tape."""
        x, y = self._check(x, y)
        cols = [Tensor(y[..., i : i + 1]) for i in range(self.spec.n_outputs)]
        outs, sigmas = self._run(x, lambda i, out, sigma: cols[i])
        pred = concat(outs)
        target = Tensor(y)
        if self.spec.mixture:
            return mean(gaussian_nll(pred, concat(sigmas), target))
        return mse(pred, target)

    def predict_scaled(self, x, mode: str = "mean", rng: np.random.Generator | None = None):
        """Point path and sigma path in scaled units."""
        if mode not in ("mean", "sample"):
            raise ValueError(f"mode must be 'mean' or 'sample', got {mode!r}")
        x, _ = self._check(x)
        if mode == "sample" and self.spec.mixture and rng is None:
            rng = np.random.default_rng(self.spec.seed)
        points: list[np.ndarray] = []

        def feed(i, out, sigma):
            if sigma is not None and mode == "sample":
                val = Tensor(rng.normal(out.data, sigma.data))
            else:
                val = out
            points.append(val.data)
            return val

        with no_record():
            _, sigmas = self._run(x, feed)
        point = np.concatenate(points, axis=-1)
        sigma = np.concatenate([s.data for s in sigmas], axis=-1) if self.spec.mixture else None
        return point, sigma


def build_model(spec: ModelSpec) -> Model:
    rng = np.random.default_rng(spec.seed)
    cells, heads = [], []
    if spec.conv and spec.n_inputs < MIN_CONV_INPUT:
        raise SpecError(
            f"{spec.variant} needs 2*tau >= {MIN_CONV_INPUT} for its conv stages "
            f"(lengths {conv_stage_lengths(spec.n_inputs)}); got tau={spec.tau}"
        )
    for i in range(spec.n_outputs):
        prefix = f"cell{i + 1}"
        width_in = cell_input_width(spec, i)
        if spec.conv:
            cell = ConvCell(prefix, width_in, spec.width, spec.activation, spec.init, rng)
        else:
            cell = DenseCell(prefix, width_in, spec.width, spec.cell_layers, spec.activation, spec.init, rng)
        head_cls = MixtureHead if spec.mixture else LinearHead
        cells.append(cell)
        heads.append(head_cls(prefix, spec.width, spec.init, rng))
    return Model(spec, cells, heads)


def forward_train(m, x, y) -> tuple[float, Tape]:
    """Teacher-forced loss and the tape that produced it."""
    with Tape() as tape:
        loss = m.loss(x, y)
    tape.loss = loss
    return loss.item(), tape


def forward_predict(m, x, mode: str = "mean", rng: np.random.Generator | None = None) -> ForecastResult:
    """Forecast in data units; the model's scaler (if any) is applied and inverted."""
    x = np.asarray(x, dtype=np.float64)
    scaler = getattr(m, "scaler", None)
    xs = scaler.apply(x) if scaler is not None else x
    point, sigma = m.predict_scaled(xs, mode, rng)
    if scaler is not None:
        point = scaler.invert(point)
        if sigma is not None:
            sigma = sigma * scaler.span
    return ForecastResult(point, sigma, mode)


@dataclass
class Census:
    total: int
    per_cell: list[int]
    shared: int


def _span(arr: np.ndarray) -> tuple[int, int]:
    lo, hi = np.lib.array_utils.byte_bounds(arr) if hasattr(np.lib, "array_utils") else np.byte_bounds(arr)
    return lo, hi


def param_census(m) -> Census:
    """Count parameters per position and detect storage or names reused anywhere in the model.

    Two parameters are shared when their byte ranges overlap. Distinct views
    into one buffer (as after an optimizer packs them) are not sharing.
    """
    groups = [cell.params() + head.params() for cell, head in zip(m.cells, m.heads)] if hasattr(m, "cells") \
        else [m.params()]
    flat = [p for g in groups for p in g]
    spans = sorted((*_span(p.value), i) for i, p in enumerate(flat) if p.size)
    dup = set()
    reach, owner = -1, -1
    for lo, hi, i in spans:
        if lo < reach:
            dup.update((i, owner))
        if hi > reach:
            reach, owner = hi, i
    names: set[str] = set()
    for i, p in enumerate(flat):
        if p.name in names:
            dup.add(i)
        names.add(p.name)
    shared = sum(flat[i].size for i in dup)
    per_cell = [sum(p.size for p in g) for g in groups]
    return Census(sum(per_cell), per_cell, shared)


def closed_form_cell_count(spec: ModelSpec, index: int) -> int:
    """Parameter count of position ``index`` (cell plus head) from the layer sizes alone."""
    d, w = cell_input_width(spec, index), spec.width
    if spec.conv:
        k = 2
        flat = conv_stage_lengths(d)[-1]
        cell = (w * 1 * k + w) + (w * w * k + w) + (w * w * flat + w)
    else:
        cell = (w * d + w) + (spec.cell_layers - 1) * (w * w + w)
    head = 2 * (w + 1) if spec.mixture else w + 1
    return cell + head


# ------------------------------------------------------------ interleaved chains


_DERIV = {
    "sigmoid": lambda z, a: a * (1.0 - a),
    "relu": lambda z, a: (z > 0).astype(np.float64),
    "identity": lambda z, a: np.ones_like(z),
}


@dataclass
class InterleavedChain:
    """One hidden neuron and one linear output per cell.

    Cell ``i`` sees external inputs ``ext[i]`` through weights ``u[i]`` and
    the previous hidden activation through scalar ``w[i]`` (``w[0]`` unused).
    Loss is the mean squared error over the per-cell outputs.
    """

    ext: list[np.ndarray]
    u: list[np.ndarray]
    w: np.ndarray
    b: np.ndarray
    v: np.ndarray
    c: np.ndarray
    targets: np.ndarray
    act: str = "sigmoid"

    @property
    def depth(self) -> int:
        return len(self.b)

    def forward(self):
        n = self.depth
        z = np.empty(n)
        a = np.empty(n)
        o = np.empty(n)
        f = {"sigmoid": lambda t: 1.0 / (1.0 + np.exp(-t)), "relu": lambda t: max(t, 0.0), "identity": lambda t: t}[self.act]
        for i in range(n):
            zi = float(self.u[i] @ self.ext[i]) + self.b[i]
            if i > 0:
                zi += self.w[i] * a[i - 1]
            z[i] = zi
            a[i] = f(zi)
            o[i] = self.v[i] * a[i] + self.c[i]
        loss = float(np.mean((o - self.targets) ** 2))
        return z, a, o, loss


def random_chain(depth: int, n_inputs: int = 3, rng: np.random.Generator | None = None,
                 act: str = "sigmoid", scale: float = 1.0) -> InterleavedChain:
    rng = rng if rng is not None else np.random.default_rng(0)
    x = rng.uniform(0, 1, n_inputs)
    return InterleavedChain(
        ext=[x.copy() for _ in range(depth)],
        u=[rng.normal(0, scale, n_inputs) for _ in range(depth)],
        w=rng.normal(0, scale, depth),
        b=rng.normal(0, scale, depth),
        v=rng.normal(0, scale, depth),
        c=rng.normal(0, scale, depth),
        targets=rng.uniform(0, 1, depth),
        act=act,
    )


def analytic_interleaved_grad(chain) -> dict[str, np.ndarray | list[np.ndarray]]:
    """Hidden-layer gradients as an explicit sum over interleaved outputs.

    For hidden layer ``i`` the gradient is
    ``sum_k dL/do_{i+k} * v_{i+k} * psi_k * da_i/dtheta_i`` where ``psi_0 = 1``
    and ``psi_k`` is the product of the ``k`` hidden-to-hidden Jacobians
    ``act'(z_{i+j}) * w_{i+j}`` for ``j = 1..k``. Each term is evaluated
    directly; no backward recursion is shared between layers.
    """
    if not isinstance(chain, InterleavedChain):
        raise ValueError("analytic_interleaved_grad needs a single-neuron interleaved chain")
    n = chain.depth
    z, a, o, _ = chain.forward()
    dact = _DERIV[chain.act](z, a)
    dL_do = 2.0 * (o - chain.targets) / n
    jac = dact * chain.w  # da_i/da_{i-1}, meaningful for i >= 1

    grad_u, grad_w, grad_b = [], np.zeros(n), np.zeros(n)
    for i in range(n):
        dL_da = 0.0
        for k in range(n - i):
            psi = 1.0
            for j in range(1, k + 1):
                psi *= jac[i + j]
            dL_da += dL_do[i + k] * chain.v[i + k] * psi
        dz = dL_da * dact[i]
        grad_u.append(dz * chain.ext[i])
        grad_b[i] = dz
        grad_w[i] = dz * a[i - 1] if i > 0 else 0.0
    return {"u": grad_u, "w": grad_w, "b": grad_b, "v": dL_do * a, "c": dL_do.copy()}


def chain_backward_grads(chain: InterleavedChain) -> dict[str, np.ndarray | list[np.ndarray]]:
    """Same gradients obtained by recording the chain on a tape and running backward()."""
    n = chain.depth
    Ws, bs, Vs, cs = [], [], [], []
    for i in range(n):
        wrow = chain.u[i] if i == 0 else np.concatenate([chain.u[i], [chain.w[i]]])
        Ws.append(Param(f"h{i}.W", wrow[None, :]))
        bs.append(Param(f"h{i}.b", [chain.b[i]]))
        Vs.append(Param(f"o{i}.W", [[chain.v[i]]]))
        cs.append(Param(f"o{i}.b", [chain.c[i]]))
    with Tape() as tape:
        a_prev = None
        outs = []
        for i in range(n):
            inp = Tensor(chain.ext[i]) if i == 0 else concat([Tensor(chain.ext[i]), a_prev])
            a = activation(chain.act, affine(Ws[i], inp, bs[i]))
            outs.append(affine(Vs[i], a, cs[i]))
            a_prev = a
        loss = mse(concat(outs), Tensor(chain.targets))
    backward(tape, loss)
    return {
        "u": [W.grad[0, : len(chain.ext[i])] for i, W in enumerate(Ws)],
        "w": np.array([0.0] + [W.grad[0, -1] for W in Ws[1:]]),
        "b": np.array([b.grad[0] for b in bs]),
        "v": np.array([V.grad[0, 0] for V in Vs]),
        "c": np.array([c.grad[0] for c in cs]),
    }


def chain_from_model(m: Model, x, y) -> InterleavedChain:
    """View a width-1, one-layer, linear-output model at input ``(x, y)`` as a chain."""
    s = m.spec
    if s.mixture or s.conv or s.width != 1 or s.cell_layers != 1:
        raise ValueError("model is not a single-neuron interleaved chain (need FN2, width 1, one layer)")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    ext, u, w, b, v, c = [], [], np.zeros(s.tau), np.zeros(s.tau), np.zeros(s.tau), np.zeros(s.tau)
    n_in = s.n_inputs
    for i, (cell, head) in enumerate(zip(m.cells, m.heads)):
        W, bias = cell.layers[0]
        row = W.value[0]
        if i == 0:
            ext.append(x.copy())
            u.append(row.copy())
        else:
            # cell input order is [x, a_prev, y_prev]
            ext.append(np.concatenate([x, [y[i - 1]]]))
            u.append(np.concatenate([row[:n_in], row[n_in + 1 :]]))
            w[i] = row[n_in]
        b[i] = bias.value[0]
        v[i] = head.W.value[0, 0]
        c[i] = head.b.value[0]
    return InterleavedChain(ext, u, w, b, v, c, y.copy(), act=s.activation)
