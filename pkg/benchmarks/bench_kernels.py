"""Compare the compiled and NumPy kernel backends.

Run from the repository root after building the extension:

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel and problem size with the best time per call
for each backend and the speedup of the compiled one.
"""
import argparse
import timeit

import numpy as np

from wlra import kernels, swlr
from wlra.closedform import PartitionedMatrix


def cases(rng):
    for m, k in ((20, 3), (4096, 15)):
        e = rng.standard_normal((m, k))
        w2 = rng.uniform(25, 100, (m, k))
        c = rng.standard_normal((k, 2 * k))
        yield f"row_spd_solve {m}x{k}", lambda impl, name, e=e, w2=w2, g=c @ c.T: impl.row_spd_solve(e, w2, g)
    for size in (64, 256):
        img = rng.uniform(0, 255, (size, size))
        yield f"box_mean {size}x{size} win 11", lambda impl, name, img=img: impl.box_mean(img, 11)
    for m, p, k in ((20, 27, 3), (4096, 225, 15)):
        x1 = rng.standard_normal((m, k))
        a2 = rng.standard_normal((m, p))
        yield f"cd_step {m}x{p} k={k}", lambda impl, name, x1=x1, a2=a2: impl.cd_step(x1, a2, 1)

    a = rng.standard_normal((20, 30))
    pm = PartitionedMatrix(a, 3, 5)
    w = swlr.WeightMask.uniform(20, 3, 5, 10, rng)
    cfg = swlr.SwlrConfig(epsilon=1e-30, max_iters=200)
    yield "swlr.solve 20x30, 200 iters", lambda impl, name: swlr.solve(pm, w, cfg, backend=name)


def best_time(fn, repeat):
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat=repeat, number=number)) / number


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    if kernels.BACKEND != "cython":
        raise SystemExit("compiled extension not available; build it with pip install -e .")
    backends = {"python": kernels.get_backend("python"), "cython": kernels.get_backend("cython")}
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':34s} {'python':>12s} {'cython':>12s} {'speedup':>8s}")
    for label, fn in cases(rng):
        t = {name: best_time(lambda: fn(impl, name), args.repeat) for name, impl in backends.items()}
        print(f"{label:34s} {t['python'] * 1e6:10.1f}us {t['cython'] * 1e6:10.1f}us "
              f"{t['python'] / t['cython']:7.2f}x")


if __name__ == "__main__":
    main()
