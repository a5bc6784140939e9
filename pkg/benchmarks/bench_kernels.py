#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Run after `python3 setup.py build_ext --inplace`:

    python3 benchmarks/bench_kernels.py

Shapes mirror the real workloads: stage-1 convs on 64x64 frames, the
3D U-Net on 15x16x16 volumes, and latent warping.
"""

import time

import numpy as np

from flowdance.core import seeded_rng
from flowdance.nn.backend import compiled_kernels, numpy_kernels


def timeit(fn, *args, repeats=5):
    fn(*args)  # warm up
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench(name, np_fn, c_fn, *args):
    t_np = timeit(np_fn, *args)
    if c_fn is None:
        print(f"{name:34s} numpy {t_np * 1e3:8.2f} ms   compiled: not built")
        return
    t_c = timeit(c_fn, *args)
    print(f"{name:34s} numpy {t_np * 1e3:8.2f} ms   compiled {t_c * 1e3:8.2f} ms"
          f"   speedup x{t_np / t_c:5.2f}")


def main():
    npk = numpy_kernels()
    ck = compiled_kernels()
    rng = seeded_rng(0)

    x2 = rng.normal((16, 32, 66, 66))  # padded 64x64 stage-1 activations
    bench("im2col2d 16x32x66x66 k3 s1",
          lambda a: npk.im2col2d(a, 3, 3, 1, 1),
          (lambda a: ck.im2col2d(a, 3, 3, 1, 1)) if ck else None, x2)

    cols2 = npk.im2col2d(x2, 3, 3, 1, 1)
    bench("col2im2d same shape",
          lambda c: npk.col2im2d(c, 16, 32, 66, 66, 3, 3, 1, 1),
          (lambda c: ck.col2im2d(c, 16, 32, 66, 66, 3, 3, 1, 1)) if ck else None, cols2)

    x3 = rng.normal((8, 24, 15, 18, 18))  # padded N=15 16x16 volumes
    bench("im2col3d 8x24x15x18x18 k3",
          lambda a: npk.im2col3d(a, 3, 3, 3, 1, 1, 1),
          (lambda a: ck.im2col3d(a, 3, 3, 3, 1, 1, 1)) if ck else None, x3)

    cols3 = npk.im2col3d(x3, 3, 3, 3, 1, 1, 1)
    bench("col2im3d same shape",
          lambda c: npk.col2im3d(c, 8, 24, 15, 18, 18, 3, 3, 3, 1, 1, 1),
          (lambda c: ck.col2im3d(c, 8, 24, 15, 18, 18, 3, 3, 3, 1, 1, 1)) if ck else None,
          cols3)

    src = rng.normal((16, 32, 16, 16))
    coords = np.stack([rng.uniform(0, 15, (16, 16, 16), dtype=np.float32),
                       rng.uniform(0, 15, (16, 16, 16), dtype=np.float32)], axis=-1)
    bench("grid_sample fwd 16x32x16x16",
          lambda s, c: npk.grid_sample_forward(s, c),
          (lambda s, c: ck.grid_sample_forward(s, c)) if ck else None, src, coords)

    gout = rng.normal((16, 32, 16, 16))
    bench("grid_sample bwd 16x32x16x16",
          lambda s, c, g: npk.grid_sample_backward(s, c, g),
          (lambda s, c, g: ck.grid_sample_backward(s, c, g)) if ck else None,
          src, coords, gout)


if __name__ == "__main__":
    main()
