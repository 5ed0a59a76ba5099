"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from engcap._backend import compiled_kernels, python_kernels
from engcap.dsp import BandpassSpec, design_butterworth_bandpass


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    sos = design_butterworth_bandpass(BandpassSpec(), 30000.0).sos()
    x = rng.normal(size=(70, 30000))
    yield "sosfilt 70ch x 1s @30kHz", lambda k: k.sosfilt_rows(sos, x.copy())

    xpad = rng.normal(size=(32, 32, 54, 64)).astype(np.float32)
    w = rng.normal(size=(5, 5, 64)).astype(np.float32)
    yield "depthwise fwd 5x5, 32x28x50x64", lambda k: k.depthwise_forward(xpad, w, 28, 50, 1)
    dout = rng.normal(size=(32, 28, 50, 64)).astype(np.float32)
    yield "depthwise bwd 5x5, 32x28x50x64", lambda k: k.depthwise_backward(xpad, w, dout, 1)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    if compiled_kernels is None:
        print("compiled extension not built; only the fallback is timed")
    print(f"{'kernel':36s} {'python s':>10s} {'compiled s':>11s} {'speedup':>8s}")
    for name, fn in cases(rng):
        t_py = best_of(lambda: fn(python_kernels), args.repeat)
        if compiled_kernels is None:
            print(f"{name:36s} {t_py:10.4f} {'-':>11s} {'-':>8s}")
            continue
        t_c = best_of(lambda: fn(compiled_kernels), args.repeat)
        print(f"{name:36s} {t_py:10.4f} {t_c:11.4f} {t_py / t_c:8.1f}x")


if __name__ == "__main__":
    main()
