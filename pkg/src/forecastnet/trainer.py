"""ADAM training loop with early stopping and learning-rate grid search."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .data import WindowSample, samples_to_arrays
from .tensor import Param, Tape, backward, no_record

log = logging.getLogger(__name__)

LR_GRID = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)


class SearchError(RuntimeError):
    """Every learning rate in the grid diverged."""


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    lr_grid: tuple[float, ...] = LR_GRID
    max_epochs: int = 1000
    batch_size: int = 32
    patience: int = 5
    min_delta: float = 1e-5
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    val_fraction: float = 0.10
    grad_tags: tuple[str, ...] = ("first", "last")

    def __post_init__(self):
        if not self.lr > 0 or any(not v > 0 for v in self.lr_grid):
            raise ValueError("learning rates must be positive")
        if self.patience < 1 or self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("patience and batch_size must be >= 1, max_epochs >= 0")


@dataclass
class AdamState:
    """Moment estimates over one flat buffer shared by all parameters.

    The first step re-points every ``Param.value`` and ``Param.grad`` at views
    of two contiguous arrays so that an update is a handful of vector ops.
    Values and gradients are preserved; only their storage moves.
    """

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    _bound: tuple = ()
    _value: np.ndarray | None = None
    _grad: np.ndarray | None = None

    def bind(self, params: Sequence[Param]) -> None:
        key = tuple(id(p) for p in params)
        if key == self._bound and all(p.value.base is self._value for p in params):
            return
        if self.t:
            raise ValueError("parameter set changed after ADAM steps were taken")
        n = sum(p.size for p in params)
        self._value, self._grad = np.empty(n), np.empty(n)
        off = 0
        for p in params:
            k = p.size
            self._value[off : off + k] = p.value.reshape(-1)
            self._grad[off : off + k] = p.grad.reshape(-1)
            p.value = self._value[off : off + k].reshape(p.shape)
            p.grad = self._grad[off : off + k].reshape(p.shape)
            off += k
        self.m, self.v = np.zeros(n), np.zeros(n)
        self._bound = key


def adam_step(state: AdamState, params: Sequence[Param], lr: float) -> None:
    """One bias-corrected ADAM update from the accumulated gradients, which are then zeroed."""
    if not lr > 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    state.bind(params)
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    g, m, v = state._grad, state.m, state.v
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * (g * g)
    step = np.sqrt(v / (1.0 - b2**state.t))
    step += state.eps
    np.divide(m, step, out=step)
    step *= lr / (1.0 - b1**state.t)
    state._value -= step
    g.fill(0.0)


def grad_log(model, tags: Sequence[str]) -> dict[str, float]:
    """Mean absolute gradient of each tagged layer's weight matrix."""
    return {tag: float(np.mean(np.abs(model.tagged_weight(tag).grad))) for tag in tags}


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    grads: dict[str, list[float]] = field(default_factory=dict)
    seconds: list[float] = field(default_factory=list)
    best_epoch: int = -1
    diverged: bool = False
    lr: float | None = None
    search: dict[float, float] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.train_loss)

    @property
    def best_val(self) -> float:
        return self.val_loss[self.best_epoch] if self.best_epoch >= 0 else math.inf

    def best_so_far(self) -> list[float]:
        return list(np.minimum.accumulate(self.val_loss)) if self.val_loss else []

    def rows(self, tags: Sequence[str] = ("first", "last")):
        for i in range(len(self)):
            yield [i + 1, self.train_loss[i], self.val_loss[i],
                   *(self.grads.get(t, [math.nan] * len(self))[i] for t in tags), self.seconds[i]]

    def write_csv(self, path, tags: Sequence[str] = ("first", "last")) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "val_loss", *(f"grad_{t}" for t in tags), "seconds"])
            for row in self.rows(tags):
                w.writerow([row[0], *(repr(float(v)) for v in row[1:])])


def split_samples(samples, val_fraction: float = 0.10):
    """Chronological split: the last ``val_fraction`` of windows validate."""
    X, Y = samples if isinstance(samples, tuple) else samples_to_arrays(samples)
    n = len(X)
    if n < 2:
        raise ValueError("training needs at least two samples")
    n_val = min(max(1, int(round(n * val_fraction))), n - 1)
    return (X[: n - n_val], Y[: n - n_val]), (X[n - n_val :], Y[n - n_val :])


def evaluate_loss(model, X, Y, batch_size: int = 1024) -> float:
    total = 0.0
    with no_record():
        for s in range(0, len(X), batch_size):
            xb, yb = X[s : s + batch_size], Y[s : s + batch_size]
            total += model.loss(xb, yb).item() * len(xb)
    return total / len(X)


def train(model, samples: list[WindowSample] | tuple, cfg: TrainConfig = TrainConfig(),
          val_samples=None):
    """Fit ``model`` in place and return it with its history.

    Stops when validation loss has not improved by ``min_delta`` for
    ``patience`` epochs; parameters from the lowest-validation epoch are restored.
    """
    if samples is None or len(samples) == 0:
        raise ValueError("cannot train on an empty sample set")
    hist = TrainHistory(grads={t: [] for t in cfg.grad_tags}, lr=cfg.lr)
    if cfg.max_epochs == 0:
        return model, hist
    if val_samples is None:
        (Xt, Yt), (Xv, Yv) = split_samples(samples, cfg.val_fraction)
    else:
        Xt, Yt = samples if isinstance(samples, tuple) else samples_to_arrays(samples)
        Xv, Yv = val_samples if isinstance(val_samples, tuple) else samples_to_arrays(val_samples)
    params = model.params()
    for p in params:
        p.zero_grad()
    state = AdamState(cfg.beta1, cfg.beta2, cfg.eps)
    best = math.inf
    best_values = [p.value.copy() for p in params]
    wait = 0
    n = len(Xt)
    for epoch in range(cfg.max_epochs):
        t0 = time.perf_counter()
        order = np.random.default_rng([cfg.seed, epoch]).permutation(n)
        loss_sum = 0.0
        gsum = {t: 0.0 for t in cfg.grad_tags}
        n_batches = 0
        for s in range(0, n, cfg.batch_size):
            idx = order[s : s + cfg.batch_size]
            with Tape() as tape:
                loss = model.loss(Xt[idx], Yt[idx])
            backward(tape, loss)
            for t, g in grad_log(model, cfg.grad_tags).items():
                gsum[t] += g
            adam_step(state, params, cfg.lr)
            loss_sum += loss.item() * len(idx)
            n_batches += 1
        train_loss = loss_sum / n
        val_loss = evaluate_loss(model, Xv, Yv) if math.isfinite(train_loss) else math.nan
        hist.train_loss.append(train_loss)
        hist.val_loss.append(val_loss)
        for t in cfg.grad_tags:
            hist.grads[t].append(gsum[t] / n_batches)
        hist.seconds.append(max(time.perf_counter() - t0, 1e-12))
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            hist.diverged = True
            log.info("lr=%g diverged at epoch %d", cfg.lr, epoch + 1)
            break
        # restore point tracks the lowest loss seen; patience only resets on a min_delta gain
        if val_loss < hist.best_val:
            hist.best_epoch = epoch
            best_values = [p.value.copy() for p in params]
        if val_loss < best - cfg.min_delta:
            best = val_loss
            wait = 0
        else:
            wait += 1
            if wait >= cfg.patience:
                break
    for p, v in zip(params, best_values):
        p.value[...] = v
    return model, hist


def make_model(spec):
    from .baselines import MLP, MLPSpec
    from .model import build_model

    return MLP(spec) if isinstance(spec, MLPSpec) else build_model(spec)


def lr_search(spec, samples, cfg: TrainConfig = TrainConfig(), build: Callable | None = None):
    """Train one fresh model per grid learning rate; keep the lowest validation loss.

    Ties go to the larger learning rate. Raises :class:`SearchError` if every
    run diverges before producing a finite validation loss.
    """
    if not cfg.lr_grid:
        raise ValueError("empty learning-rate grid")
    build = build or make_model
    data = samples if isinstance(samples, tuple) else samples_to_arrays(samples)
    outcomes: dict[float, float] = {}
    best = None
    for lr in sorted(cfg.lr_grid, reverse=True):
        model, hist = train(build(spec), data, replace(cfg, lr=lr))
        score = hist.best_val
        outcomes[lr] = score
        log.info("lr=%g best validation loss %.6g after %d epochs", lr, score, len(hist))
        if math.isfinite(score) and (best is None or score < best[0]):
            best = (score, lr, model, hist)
    if best is None:
        raise SearchError(f"all learning rates diverged: {outcomes}")
    _, lr, model, hist = best
    hist.search = outcomes
    return lr, model, hist
