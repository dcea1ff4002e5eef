"""Compare the compiled kernels with the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]

Prints per-call times for both kernels at a few sizes, then the wall time of
one SCA fit on a 100 x 100 instance under each backend (run in a subprocess
so that ``EPCA_KERNELS`` takes effect at import).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from epca import kernels

FIT_SNIPPET = """
import time
from epca import kernels
from epca.decomp import FitConfig, sca
from epca.simgen import gen_lowrank
X = gen_lowrank(seed=0).X
t0 = time.perf_counter()
for k in (4, 8, 16):
    sca(X, FitConfig(k=k, gamma=2.5 * k))
print(kernels.BACKEND, time.perf_counter() - t0)
"""


def bench_call(fn, args, repeat):
    n = 20
    best = min(timeit.repeat(lambda: fn(*args), number=n, repeat=repeat))
    return best / n


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    backends = {"python": kernels.python_backend()}
    if kernels.compiled_backend() is not None:
        backends["cython"] = kernels.compiled_backend()
    else:
        print("compiled extension not built; only the fallback is timed")

    rng = np.random.default_rng(0)
    print(f"{'kernel':<22}{'size':>12}" + "".join(f"{b:>14}" for b in backends))
    for p, k in ((100, 4), (1000, 16), (10000, 16)):
        a = np.abs(rng.standard_normal(p * k))
        gamma = 0.3 * a.sum()
        row = [bench_call(m.l1_bisect, (a, gamma, 1e-10, 200), args.repeat) for m in backends.values()]
        print(f"{'l1_bisect':<22}{f'{p}x{k}':>12}" + "".join(f"{t * 1e6:>12.1f}us" for t in row))
        L = rng.standard_normal((p, k))
        row = [bench_call(m.varimax_value_grad, (L,), args.repeat) for m in backends.values()]
        print(f"{'varimax_value_grad':<22}{f'{p}x{k}':>12}" + "".join(f"{t * 1e6:>12.1f}us" for t in row))

    print()
    for name in backends:
        env = dict(os.environ, EPCA_KERNELS=name)
        out = subprocess.run([sys.executable, "-c", FIT_SNIPPET], env=env, capture_output=True,
                             text=True, check=True)
        backend, secs = out.stdout.split()
        print(f"sca fits k=4,8,16 on 100x100 [{backend}]: {float(secs):.3f}s")


if __name__ == "__main__":
    main()
