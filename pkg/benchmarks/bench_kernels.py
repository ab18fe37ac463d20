"""Compiled vs pure-Python kernel timings.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Times the LSTM gate forward/backward kernels and histogram binning on
both backends, then one training epoch end to end with each backend
swapped in.
"""
import argparse
import timeit

import numpy as np

from broomscan import kernels, lstm
from broomscan.balance import SequenceSample


def bench(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def kernel_rows(backend, repeat):
    rng = np.random.default_rng(0)
    B, h = 16, 64
    z = rng.normal(size=(B, 4 * h))
    c = rng.normal(size=(B, h))
    gates, _, tanh_c, _ = backend.lstm_gates_forward(z, c)
    dh, dc = rng.normal(size=(B, h)), rng.normal(size=(B, h))
    px = rng.uniform(0, 1.5, 4000)
    return {
        "gates_forward (16x64)": bench(lambda: backend.lstm_gates_forward(z, c), repeat, 2000),
        "gates_backward (16x64)": bench(lambda: backend.lstm_gates_backward(dh, dc, gates, c, tanh_c), repeat, 2000),
        "histogram (4000 px, 64 bins)": bench(lambda: backend.histogram_counts(px, 0.0, 1.5, 64), repeat, 2000),
    }


def epoch_time(backend, repeat):
    rng = np.random.default_rng(1)
    data = [SequenceSample(f"p{i}", (1, 2, 3, 4, 5), rng.normal(size=(5, 49)), "infected" if i % 2 else "healthy")
            for i in range(326)]
    saved = {n: getattr(kernels, n) for n in ("lstm_gates_forward", "lstm_gates_backward", "sigmoid")}
    try:
        for n in saved:
            setattr(kernels, n, getattr(backend, n))
        return bench(lambda: lstm.train(data, lstm.ModelConfig(), lstm.TrainConfig(epochs=1)), repeat, 1)
    finally:
        for n, f in saved.items():
            setattr(kernels, n, f)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if kernels.compiled_backend is None:
        print("compiled extension not built; only the Python backend is available")
        return
    py = kernel_rows(kernels.python_backend, args.repeat)
    cc = kernel_rows(kernels.compiled_backend, args.repeat)
    py["train epoch (326 x 5 x 49)"] = epoch_time(kernels.python_backend, args.repeat)
    cc["train epoch (326 x 5 x 49)"] = epoch_time(kernels.compiled_backend, args.repeat)
    print(f"{'kernel':32s} {'python':>12s} {'compiled':>12s} {'speedup':>8s}")
    for name in py:
        print(f"{name:32s} {py[name] * 1e6:10.1f}us {cc[name] * 1e6:10.1f}us {py[name] / cc[name]:7.2f}x")


if __name__ == "__main__":
    main()
