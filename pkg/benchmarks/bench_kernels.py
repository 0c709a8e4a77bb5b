"""Time the numba and numpy kernel paths on convolutional-cell shapes.

    python benchmarks/bench_kernels.py [--repeat N] [--epoch]

``--epoch`` also times one cFN2 training epoch under each path (each in a
fresh interpreter, since the path is fixed at import).
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from forecastnet import _kernels as K

# batch 32, tau 20: cell 1 sees 40 inputs, later cells 40 + 24 + 1
SHAPES = {
    "conv1 L=65": ((32, 1, 65), (24, 1, 2)),
    "conv2 L=63": ((32, 24, 63), (24, 24, 2)),
}
POOL_SHAPE = (32, 24, 64)


def _time(fn, repeat: int) -> float:
    fn()  # warm-up (and JIT compile)
    return min(timeit.repeat(fn, number=20, repeat=repeat)) / 20


def kernel_table(repeat: int) -> list[tuple[str, float, float]]:
    rng = np.random.default_rng(0)
    impls = [K.numpy_impl] + ([K.numba_impl] if K.numba_impl is not None else [])
    rows = []
    for name, (xs, ws) in SHAPES.items():
        x, w, b = rng.normal(size=xs), rng.normal(size=ws), rng.normal(size=ws[0])
        gy = rng.normal(size=(xs[0], ws[0], xs[2] - ws[2] + 1))
        for impl in impls[1:]:
            np.testing.assert_allclose(impl.conv1d_forward(x, w, b), K.numpy_impl.conv1d_forward(x, w, b), rtol=1e-10)
        rows.append((f"{name} fwd", *(_time(lambda i=i: i.conv1d_forward(x, w, b), repeat) for i in impls)))
        rows.append((f"{name} bwd", *(_time(lambda i=i: i.conv1d_backward(x, w, gy), repeat) for i in impls)))
    x = rng.normal(size=POOL_SHAPE)
    gy = rng.normal(size=POOL_SHAPE[:2] + (POOL_SHAPE[2] - 1,))
    rows.append(("pool fwd", *(_time(lambda i=i: i.avgpool_forward(x, 2, 1), repeat) for i in impls)))
    rows.append(("pool bwd", *(_time(lambda i=i: i.avgpool_backward(gy, POOL_SHAPE[2], 2, 1), repeat) for i in impls)))
    return rows


EPOCH_SNIPPET = """
import time
from forecastnet._kernels import active
from forecastnet.experiments import prepare, model_spec
from forecastnet.synth import gen_baseline
from forecastnet.trainer import TrainConfig, make_model, train
p = prepare(gen_baseline(), 20)
m = make_model(model_spec('cfn2', 20))
t = time.perf_counter()
train(m, p.train_xy, TrainConfig(max_epochs=1))
print(active.name, time.perf_counter() - t)
"""


def epoch_times() -> dict[str, float]:
    out = {}
    for disable in ("1", "0"):
        env = dict(os.environ, FORECASTNET_DISABLE_JIT=disable)
        res = subprocess.run([sys.executable, "-c", EPOCH_SNIPPET], env=env, capture_output=True, text=True, check=True)
        name, secs = res.stdout.split()
        out[name] = float(secs)
    return out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--epoch", action="store_true")
    args = ap.parse_args(argv)
    if K.numba_impl is None:
        print("numba not importable; only the numpy path is timed")
    print(f"{'kernel':<18}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for name, *t in kernel_table(args.repeat):
        if len(t) == 2:
            print(f"{name:<18}{t[0] * 1e3:>10.3f}{t[1] * 1e3:>10.3f}{t[0] / t[1]:>8.1f}x")
        else:
            print(f"{name:<18}{t[0] * 1e3:>10.3f}")
    if args.epoch:
        for name, secs in epoch_times().items():
            print(f"cFN2 epoch ({name}): {secs:.2f} s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
