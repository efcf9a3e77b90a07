"""Time the compiled kernels against the numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Both backends are checked for agreement before timing.
"""
import argparse
import timeit

import numpy as np

from gamma_ddpc import kernels
from gamma_ddpc.lti import default_system


def cases(L=10_000, rho=20, T=20, seed=0):
    sys = default_system()
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((L, sys.m))
    e = rng.standard_normal((L, sys.p))
    x0 = np.zeros(sys.n)
    y, _ = kernels.simulate(sys.A, sys.B, sys.C, sys.D, sys.K, u, e, x0)
    w = np.hstack([u, y])
    N = L - rho - T + 1
    return {
        "simulate": lambda mod: kernels.simulate(sys.A, sys.B, sys.C, sys.D, sys.K, u, e, x0, impl=mod),
        "kalman_filter": lambda mod: kernels.kalman_filter(sys.A, sys.B, sys.C, sys.D, sys.K, u, y, x0, impl=mod),
        "hankel": lambda mod: kernels.hankel(w, 0, rho + T - 1, N, impl=mod),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--length", type=int, default=10_000)
    args = ap.parse_args(argv)

    mods = kernels.backends()
    if "cython" not in mods:
        print("compiled extension not built; only the python backend is available")
    print(f"{'kernel':<15}" + "".join(f"{name:>14}" for name in mods) + f"{'speedup':>10}")
    for name, fn in cases(args.length).items():
        outs = {k: fn(m) for k, m in mods.items()}
        ref = outs["python"]
        for k, o in outs.items():
            a, b = (o, ref) if isinstance(o, np.ndarray) else (o[0], ref[0])
            if not np.allclose(a, b, rtol=1e-12, atol=1e-12):
                raise SystemExit(f"{name}: backend {k} disagrees with python")
        t = {k: min(timeit.repeat(lambda m=m: fn(m), number=1, repeat=args.repeat)) for k, m in mods.items()}
        row = f"{name:<15}" + "".join(f"{1e3 * t[k]:>11.3f} ms" for k in mods)
        if "cython" in t:
            row += f"{t['python'] / t['cython']:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
