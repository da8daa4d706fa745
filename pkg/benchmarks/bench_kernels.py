"""Compiled vs pure-Python fast-dynamics kernels.

Times ``relax_inplace`` on random drives for a few channel counts, then an
end-to-end two-moons run with each backend (each in a fresh interpreter so
the backend switch takes effect at import).

    python benchmarks/bench_kernels.py [--repeat 5] [--size 1000]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from mtssl import _pykernels

try:
    from mtssl import _kernels
except ImportError:
    _kernels = None

END_TO_END = """
import time
from mtssl import BACKEND, config, experiments
cfg = config.load("two_moons").with_overrides({{"experiment.repeats": 1, "dataset.size": {size}}})
t0 = time.perf_counter()
experiments.run_online(cfg)
print(BACKEND, time.perf_counter() - t0)
"""


def relax_case(mod, m, seed=0):
    rng = np.random.default_rng(seed)
    c = 0.05 * rng.random(m) - 0.01
    h = np.zeros(m)
    u = np.full(m, 0.1)
    V = np.zeros((m, m))
    return lambda: mod.relax_inplace(c, h.copy(), u.copy(), V.copy(), 10.0, 0.05, 1.0, 2000, 1e-5)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--size", type=int, default=1000, help="stream length for the end-to-end run")
    args = ap.parse_args(argv)

    backends = [("python", _pykernels)] + ([("cython", _kernels)] if _kernels else [])
    if _kernels is None:
        print("compiled kernels not built; timing the fallback only")
    print(f"{'m':>5} " + " ".join(f"{name:>12}" for name, _ in backends) + "   iterations")
    for m in (10, 40, 200):
        times = []
        for _, mod in backends:
            fn = relax_case(mod, m)
            times.append(min(timeit.repeat(fn, number=1, repeat=args.repeat)))
        iters = relax_case(backends[0][1], m)()[0]
        print(f"{m:5d} " + " ".join(f"{t * 1e3:10.2f}ms" for t in times) + f"   {iters}")
        if len(times) == 2:
            print(f"      speedup {times[0] / times[1]:.1f}x")

    print(f"\nend-to-end two moons, {args.size} samples")
    for flag in ("1", ""):
        env = dict(os.environ)
        if flag:
            env["MTSSL_PURE_PYTHON"] = flag
        else:
            env.pop("MTSSL_PURE_PYTHON", None)
        out = subprocess.run([sys.executable, "-c", END_TO_END.format(size=args.size)],
                             env=env, capture_output=True, text=True, check=True)
        backend, secs = out.stdout.split()
        print(f"  {backend:>7}: {float(secs):.2f}s")


if __name__ == "__main__":
    main()
