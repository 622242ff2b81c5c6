"""Time the numba and pure-numpy kernels on the same workloads.

    python benchmarks/bench_kernels.py [--n 200000] [--repeat 5]

Both backends draw identical streams, so the script also checks that they
agree before reporting timings.
"""

import argparse
import time

import numpy as np

from seqrecover import kernels
from seqrecover.models import BernoulliPair, GaussianShift


def _alt_mask(n, s, seed=0):
    mask = np.zeros(n, dtype=bool)
    mask[np.random.default_rng(seed).choice(n, s, replace=False)] = True
    return mask


def _best_of(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _workloads(n):
    alt = _alt_mask(n, max(1, n // 100))
    for model in (GaussianShift(1.0), BernoulliPair(0.3, 0.7)):
        gamma = model.null_quantile(4, 0.5)[0]
        name = type(model).__name__

        def st(impl, model=model, gamma=gamma):
            return kernels.threshold_passes(
                model.kind, model.kernel_params, alt, 7, 10, 4, gamma, impl=impl
            )

        def sprt(impl, model=model):
            return kernels.sprt(model.kind, model.kernel_params, alt, 7, -4.6, 4.6, 500, impl=impl)

        yield f"threshold_passes/{name}", st
        yield f"sprt/{name}", sprt


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=200_000, help="components per call")
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    impls = [name for name in ("numba", "numpy") if name in kernels.IMPLEMENTATIONS]
    print(f"n={args.n} repeat={args.repeat} default backend={kernels.backend()}")
    print(f"{'workload':34s}" + "".join(f"{name:>12s}" for name in impls) + f"{'speedup':>10s}")
    for label, fn in _workloads(args.n):
        if "numba" in impls:
            fn("numba")  # compile outside the timed region
        times, outputs = {}, {}
        for name in impls:
            times[name], outputs[name] = _best_of(lambda: fn(name), args.repeat)
        if len(impls) == 2:
            for a, b in zip(outputs["numba"], outputs["numpy"]):
                np.testing.assert_allclose(a, b, rtol=0, atol=1e-12, equal_nan=True)
            speedup = f"{times['numpy'] / times['numba']:9.1f}x"
        else:
            speedup = f"{'n/a':>10s}"
        row = "".join(f"{times[name] * 1e3:10.1f}ms" for name in impls)
        print(f"{label:34s}{row}{speedup}")


if __name__ == "__main__":
    main()
