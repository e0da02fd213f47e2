"""Time the numba kernels against their pure-numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

The first numba call (compilation, or loading the on-disk cache) is excluded.
"""

import argparse
import timeit

import numpy as np
import torch

from lvcvc import _accel
from lvcvc.lvc import lvc_apply


def _best(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def bench_cmndf(repeat):
    # one second of 16 kHz audio: 63 frames, width 512, lags up to 320
    rng = np.random.default_rng(0)
    frames = rng.standard_normal((63, 512 + 320 + 1))
    _accel.cmndf_numba(frames, 320, 512)
    np.testing.assert_allclose(_accel.cmndf_numba(frames, 320, 512), _accel.cmndf_numpy(frames, 320, 512), atol=1e-9)
    return {
        "numba": _best(lambda: _accel.cmndf_numba(frames, 320, 512), repeat, 5),
        "numpy": _best(lambda: _accel.cmndf_numpy(frames, 320, 512), repeat, 5),
    }


def bench_lvc(repeat):
    # one LVC layer of the first stack for 32 frames: 16 -> 32 channels, 8 samples per frame
    rng = np.random.default_rng(0)
    x = rng.standard_normal((16, 256))
    w = rng.standard_normal((32, 32, 16, 3))
    b = rng.standard_normal((32, 32))
    _accel.lvc_loop_numba(x, w, b, 3)
    xt, wt, bt = (torch.from_numpy(a.astype(np.float32)) for a in (x, w, b))
    return {
        "numba": _best(lambda: _accel.lvc_loop_numba(x, w, b, 3), repeat, 3),
        "numpy": _best(lambda: _accel.lvc_loop_numpy(x, w, b, 3), repeat, 1),
        "torch (vectorized)": _best(lambda: lvc_apply(xt, wt, bt, 3), repeat, 20),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    torch.set_num_threads(1)
    for name, results in (("cmndf, 63 frames", bench_cmndf(args.repeat)), ("lvc loop, 256 samples", bench_lvc(args.repeat))):
        base = results["numpy"]
        print(name)
        for impl, t in results.items():
            print(f"  {impl:<20s} {t * 1e3:9.3f} ms   x{base / t:6.1f} vs numpy")


if __name__ == "__main__":
    main()
