"""Compare the compiled and numpy chain kernels.

Usage: ``python3 benchmarks/bench_kernels.py [--repeat N]``. Prints the best
microseconds per call for each kernel at several chain lengths.
"""
import argparse
import timeit

import numpy as np

from manipulant import kinematics as kin
from manipulant._kernels import _chain_py

try:
    from manipulant._kernels import _chain_cy
except ImportError:
    _chain_cy = None

KERNELS = ("chain_frames", "chain_jacobian", "chain_jacobian_derivative")


def random_args(n, seed=0):
    rng = np.random.default_rng(seed)
    axes = rng.normal(size=(n, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    origins = np.stack([kin.translation(*rng.uniform(-0.3, 0.3, 3)) for _ in range(n)])
    return origins, axes, np.eye(4), kin.translation(0.0, 0.0, 0.1), rng.uniform(-1, 1, n)


def per_call(fn, args, repeat):
    number = max(1, 2000 // repeat)
    best = min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat))
    return 1e6 * best / number


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    backends = {"python": _chain_py}
    if _chain_cy is not None:
        backends["cython"] = _chain_cy
    else:
        print("compiled backend not built; timing the numpy kernels only")
    print(f"{'kernel':28s} {'n':>3s} " + " ".join(f"{b:>12s}" for b in backends) + "   speedup")
    for name in KERNELS:
        for n in (3, 7, 14):
            a = random_args(n)
            times = [per_call(getattr(mod, name), a, args.repeat) for mod in backends.values()]
            ratio = f"{times[0] / times[1]:8.1f}x" if len(times) == 2 else ""
            print(f"{name:28s} {n:3d} " + " ".join(f"{t:10.1f}us" for t in times) + "  " + ratio)


if __name__ == "__main__":
    main()
