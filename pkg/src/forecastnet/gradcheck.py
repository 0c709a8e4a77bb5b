"""Finite-difference and analytic cross-checks of the backward pass."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .model import (
    VARIANTS,
    ModelSpec,
    analytic_interleaved_grad,
    build_model,
    chain_backward_grads,
    random_chain,
)
from .tensor import Param, Tape, backward, finite_diff_grad, no_record

FD_EPS = 1e-6
FD_TOL = 1e-5
CHAIN_TOL = 1e-9


def rel_error(a, b) -> float:
    """``max|a - b| / max|b|`` (absolute when ``b`` is all zero)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = float(np.max(np.abs(b))) if b.size else 0.0
    diff = float(np.max(np.abs(a - b))) if a.size else 0.0
    return diff / scale if scale > 0 else diff


def elementwise_rel_error(a, b) -> float:
    """Largest ``|a_i - b_i| / |b_i|`` over entries where ``b_i != 0``; exact zeros must match."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    nz = b != 0
    if np.any(a[~nz] != 0):
        return float(np.max(np.abs(a[~nz])))
    return float(np.max(np.abs(a[nz] - b[nz]) / np.abs(b[nz]))) if nz.any() else 0.0


def param_grad_error(loss_fn: Callable[[], T.Tensor], params: Sequence[Param], eps: float = FD_EPS) -> float:
    """Worst disagreement between backward() and central differences over ``params``.

    Errors are scaled by the largest numeric gradient entry across the whole
    set: central differences carry an absolute noise floor near
    ``1e-16 * |loss| / eps``, so entry-wise ratios are meaningless for
    parameters whose gradient is itself at that floor.
    """
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = loss_fn()
    backward(tape, loss)
    analytic, numeric = [], []
    for p in params:
        analytic.append(p.grad.reshape(-1).copy())

        def f(theta, p=p):
            saved = p.value.copy()
            p.value[...] = theta
            with no_record():
                val = loss_fn().item()
            p.value[...] = saved
            return val

        numeric.append(finite_diff_grad(f, p.value.copy(), eps).reshape(-1))
        p.zero_grad()
    return rel_error(np.concatenate(analytic), np.concatenate(numeric))


@dataclass
class CheckResult:
    name: str
    trials: int
    max_error: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_error < self.tol

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name:<28} trials={self.trials:<4} max_rel_err={self.max_error:.3e} (tol {self.tol:g})"


def _u(rng, *shape):
    return rng.uniform(-2.0, 2.0, size=shape)


def _primitive_cases(rng):
    """name -> factory returning (loss_fn, params) for one random instance."""

    def affine_case():
        m, n, b = rng.integers(1, 5, size=3)
        W, x, bias = Param("W", _u(rng, m, n)), Param("x", _u(rng, b, n)), Param("b", _u(rng, m))
        tgt = _u(rng, b, m)
        return (lambda: T.mse(T.affine(W, x, bias), tgt)), [W, x, bias]

    def act_case(kind):
        def make():
            x = Param("x", _u(rng, 2, 5))
            # keep relu inputs away from the kink so the difference quotient is smooth
            if kind == "relu":
                x.value[np.abs(x.value) < 1e-3] = 0.5
            tgt = _u(rng, 2, 5)
            return (lambda: T.mse(T.activation(kind, x), tgt)), [x]
        return make

    def conv_case():
        ci, co, k = rng.integers(1, 4), rng.integers(1, 4), rng.integers(1, 4)
        length = int(rng.integers(k, k + 6))
        x, K, bias = Param("x", _u(rng, 2, ci, length)), Param("K", _u(rng, co, ci, k)), Param("b", _u(rng, co))
        tgt = _u(rng, 2, co, length - k + 1)
        return (lambda: T.mse(T.conv1d_valid(x, K, bias), tgt)), [x, K, bias]

    def pool_case():
        pool, stride = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        length = int(rng.integers(pool, pool + 7))
        x = Param("x", _u(rng, 2, 3, length))
        lo = (length - pool) // stride + 1
        tgt = _u(rng, 2, 3, lo)
        return (lambda: T.mse(T.avg_pool1d(x, pool, stride), tgt)), [x]

    def concat_case():
        parts = [Param(f"p{i}", _u(rng, 2, int(rng.integers(1, 4)))) for i in range(int(rng.integers(1, 4)))]
        width = sum(p.shape[-1] for p in parts)
        tgt = _u(rng, 2, width)
        return (lambda: T.mse(T.concat(parts), tgt)), parts

    def nll_case():
        mu, s = Param("mu", _u(rng, 3, 2)), Param("s", rng.uniform(0.3, 2.0, size=(3, 2)))
        y = _u(rng, 3, 2)
        return (lambda: T.mean(T.gaussian_nll(mu, s, y))), [mu, s]

    def mse_case():
        p = Param("p", _u(rng, 4))
        tgt = _u(rng, 4)
        return (lambda: T.mse(p, tgt)), [p]

    def sum_case():
        a, b = Param("a", _u(rng, 3)), Param("b", _u(rng, 3))
        return (lambda: T.total(T.activation("sigmoid", T.add(a, b)))), [a, b]

    return {
        "affine": affine_case,
        "relu": act_case("relu"),
        "sigmoid": act_case("sigmoid"),
        "softplus": act_case("softplus"),
        "conv1d_valid": conv_case,
        "avg_pool1d": pool_case,
        "concat": concat_case,
        "gaussian_nll": nll_case,
        "mse": mse_case,
        "add+sum": sum_case,
    }


def primitive_suite(trials: int = 100, seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []
    for name, make in _primitive_cases(rng).items():
        worst = 0.0
        for _ in range(trials):
            fn, params = make()
            worst = max(worst, param_grad_error(fn, params))
        out.append(CheckResult(f"primitive:{name}", trials, worst, FD_TOL))
    return out


def model_suite(trials: int = 25, seed: int = 0, tau: int = 3, width: int = 4) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []
    for variant in VARIANTS:
        worst = 0.0
        for t in range(trials):
            m = build_model(ModelSpec(variant, tau, width=width, seed=int(rng.integers(1 << 31))))
            # random biases so no unit sits exactly on a ReLU kink
            for p in m.params():
                if p.name.endswith(".b"):
                    p.value[...] = rng.uniform(-0.5, 0.5, size=p.shape)
            x = rng.uniform(0.0, 1.0, size=(2, 2 * tau))
            y = rng.uniform(0.0, 1.0, size=(2, tau))
            worst = max(worst, param_grad_error(lambda: m.loss(x, y), m.params()))
        out.append(CheckResult(f"model:{variant}", trials, worst, FD_TOL))
    return out


def chain_suite(depths: Sequence[int] = range(2, 41), seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for depth in depths:
        chain = random_chain(depth, n_inputs=3, rng=rng)
        a = analytic_interleaved_grad(chain)
        b = chain_backward_grads(chain)
        errs = [elementwise_rel_error(a[k], b[k]) for k in ("w", "b", "v", "c")]
        errs += [elementwise_rel_error(ua, ub) for ua, ub in zip(a["u"], b["u"])]
        worst = max(worst, *errs)
    depths = list(depths)
    return [CheckResult(f"chain:depth{min(depths)}-{max(depths)}", len(depths), worst, CHAIN_TOL)]


def run_all(depth: int | None = None, trials: int = 100, model_trials: int = 25, seed: int = 0) -> list[CheckResult]:
    depths = range(2, 41) if depth is None else [depth]
    return primitive_suite(trials, seed) + model_suite(model_trials, seed) + chain_suite(depths, seed)
