"""Timing comparison of the compiled kernel backend against the NumPy fallback.

Run after an editable install:

    python benchmarks/bench_backends.py [--size 128] [--repeats 5]

Each kernel is timed on both backends (when the compiled one is built) and a
small end-to-end training step is included, since that is the workload the
compiled kernels exist for.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from lfranet.backend import available_backends, numpy_kernels

try:
    from lfranet.backend import _core as cython_kernels
except ImportError:
    cython_kernels = None


def timeit(fn, repeats):
    fn()  # warm up
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(size, repeats):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((4, 16, size, size)).astype(np.float32)
    cols = numpy_kernels.im2col(x, 3, 3, 1, 1, 1, 1, 1, 1)
    wdw = rng.standard_normal((16, 1, 3, 3)).astype(np.float32)
    g = rng.standard_normal(x.shape).astype(np.float32)

    cases = {
        "im2col 3x3": lambda k: k.im2col(x, 3, 3, 1, 1, 1, 1, 1, 1),
        "col2im 3x3": lambda k: k.col2im(cols, size, size, 3, 3, 1, 1, 1, 1, 1, 1),
        "maxpool 2x2": lambda k: k.maxpool_forward(x, 2, 2),
        "avgpool 4x4": lambda k: k.avgpool_forward(x, 4, 4),
        "depthwise 3x3": lambda k: k.dwconv_forward(x, wdw, 1, 1),
        "depthwise grad": lambda k: k.dwconv_backward_x(g, wdw, size, size, 1, 1),
    }
    backends = [("numpy", numpy_kernels)]
    if cython_kernels is not None:
        backends.append(("cython", cython_kernels))

    print(f"kernel timings at input 4x16x{size}x{size} (best of {repeats}):")
    header = f"{'kernel':<16}" + "".join(f"{name:>12}" for name, _ in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for label, call in cases.items():
        times = [timeit(lambda k=k: call(k), repeats) for _, k in backends]
        row = f"{label:<16}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:>9.2f}x"
        print(row)


def bench_train_step(size, repeats):
    # imported lazily so kernel benchmarks run even if the model import fails
    from lfranet.autodiff import Tensor
    from lfranet.model import ModelConfig, build_model
    from lfranet.training import Adam, dice_loss

    rng = np.random.default_rng(0)
    x = Tensor(rng.random((1, 3, size, size)).astype(np.float32))
    y = Tensor((rng.random((1, 1, size, size)) > 0.7).astype(np.float32))
    net = build_model(ModelConfig(seed=0))
    opt = Adam(net.parameters())

    def step():
        loss = dice_loss(net.forward(x, train=True), y)
        net.zero_grad()
        loss.backward()
        opt.step()

    t = timeit(step, repeats)
    print(f"full train step at {size}x{size}: {t * 1e3:.1f} ms (active backend)")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=128)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    print(f"available backends: {', '.join(available_backends())}")
    bench_kernels(args.size, args.repeats)
    bench_train_step(args.size, args.repeats)


if __name__ == "__main__":
    main()
