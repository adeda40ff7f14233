"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--T 100 1000 4000] [--repeat 5]

Also times a full ``general_loss`` call under each path by toggling
``contreg._kernels.USE_NUMBA`` (the same switch ``CONTREG_DISABLE_NUMBA`` sets).
"""
import argparse
import timeit

import numpy as np

from contreg import ProblemParams, _kernels, general_loss


def best_of(fn, repeat):
    fn()  # warm-up (includes JIT compilation for numba)
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--T", type=int, nargs="+", default=[100, 1000, 4000])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _kernels.HAS_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    print(f"{'kernel':<18}{'T':>7}{'numpy [ms]':>13}{'numba [ms]':>13}{'speedup':>9}"
          f"{'rel diff':>11}")
    rng = np.random.default_rng(0)
    for T in args.T:
        W = rng.standard_normal((T, 20))
        G = W @ W.T
        pa = 0.99 ** np.arange(T + 1)
        pb = 0.995 ** np.arange(T + 1)
        cases = [
            ("corr_double_sum", _kernels.corr_double_sum_numpy, _kernels.corr_double_sum_numba,
             (G, pa, pb)),
            ("noreg_pair_sum", _kernels.noreg_pair_sum_numpy, _kernels.noreg_pair_sum_numba,
             (G, pa)),
        ]
        for name, f_np, f_nb, a in cases:
            t_np = best_of(lambda: f_np(*a), args.repeat)
            t_nb = best_of(lambda: f_nb(*a), args.repeat)
            diff = abs(f_np(*a) - f_nb(*a)) / abs(f_np(*a))
            print(f"{name:<18}{T:>7}{1e3 * t_np:>13.3f}{1e3 * t_nb:>13.3f}"
                  f"{t_np / t_nb:>9.1f}{diff:>11.1e}")

        p = ProblemParams(alpha=0.5, v_z=1.0, lam=1.0, T=T)
        times = {}
        for flag in (False, True):
            _kernels.USE_NUMBA = flag
            times[flag] = best_of(lambda: general_loss(p, W), args.repeat)
        _kernels.USE_NUMBA = _kernels.HAS_NUMBA
        print(f"{'general_loss':<18}{T:>7}{1e3 * times[False]:>13.3f}"
              f"{1e3 * times[True]:>13.3f}{times[False] / times[True]:>9.1f}{'':>11}")


if __name__ == "__main__":
    main()
