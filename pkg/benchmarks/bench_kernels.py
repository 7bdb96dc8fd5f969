"""Timing comparison of the compiled and numpy conv kernel backends.

Runs the three conv primitives on training-sized inputs and reports the
median wall time per call for each backend, plus the speedup. Usage:

    python benchmarks/bench_kernels.py [--repeats N]
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from csseg.kernels import native_impl, numpy_impl


CASES = [
    # (label, in_channels, out_channels, height, width, kernel, stride, pad)
    ("first conv 3->8 32x32", 3, 8, 32, 32, 3, 1, 1),
    ("mid conv 8->8 32x32", 8, 8, 32, 32, 3, 1, 1),
    ("strided conv 8->16 32x32", 8, 16, 32, 32, 3, 2, 1),
    ("head conv 16->6 16x16", 16, 6, 16, 16, 1, 1, 0),
]


def time_call(fn, *args, repeats: int) -> float:
    """Median seconds per call over `repeats` timed calls after one warmup."""
    fn(*args)
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def bench_case(impl, cin, cout, h, w, k, stride, pad, repeats):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((cin, h, w))
    weight = rng.standard_normal((cout, cin, k, k))
    bias = rng.standard_normal(cout)
    y = impl.conv2d_forward(x, weight, bias, stride, pad)
    gy = rng.standard_normal(y.shape)
    return {
        "forward": time_call(impl.conv2d_forward, x, weight, bias, stride, pad, repeats=repeats),
        "grad_input": time_call(impl.conv2d_grad_input, weight, gy, x.shape, stride, pad, repeats=repeats),
        "grad_kernel": time_call(impl.conv2d_grad_kernel, x, gy, weight.shape, stride, pad, repeats=repeats),
    }


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=200, help="timed calls per primitive")
    args = parser.parse_args()

    if native_impl is None:
        print("compiled extension unavailable; benchmarking numpy backend only")
        impls = [("numpy", numpy_impl)]
    else:
        impls = [("native", native_impl), ("numpy", numpy_impl)]

    print(f"{'case':<28} {'primitive':<12} " + " ".join(f"{n:>12}" for n, _ in impls) + "   speedup")
    for label, *shape in CASES:
        rows = {name: bench_case(impl, *shape, repeats=args.repeats) for name, impl in impls}
        for prim in ("forward", "grad_input", "grad_kernel"):
            cells = " ".join(f"{rows[name][prim] * 1e6:>10.1f}us" for name, _ in impls)
            if len(impls) == 2:
                ratio = rows["numpy"][prim] / rows["native"][prim]
                cells += f"   {ratio:>6.2f}x"
            print(f"{label:<28} {prim:<12} {cells}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
