"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_kernels.py [--grid 4401] [--years 10] [--repeat 5]

Shapes default to one replicate of a decade on a 4401-point grid over a
153-day warm period.  Both backends must give identical arrays.
"""
import argparse
import time

import numpy as np

from extentlab._kernels import _pykernels

try:
    from extentlab._kernels import _ckernels
except ImportError:
    _ckernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", type=int, default=4401)
    ap.add_argument("--years", type=int, default=10)
    ap.add_argument("--days", type=int, default=153)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    S, T, L = args.grid, args.years, args.days
    z = rng.standard_normal((S, T, L))
    rho = rng.uniform(0.8, 0.95, S)
    sd = rng.uniform(1.0, 3.0, S)
    sd0 = sd / np.sqrt(1 - rho ** 2)
    d = rng.normal(0.5, 2.0, (S, T, L))

    cases = {
        "ar1_anomalies": lambda m: m.ar1_anomalies(z, rho, sd, sd0),
        "persist k=1": lambda m: m.persist_indicator(d, 1.0, 0, 0),
        "persist k=3": lambda m: m.persist_indicator(d, 1.0, -1, 1),
    }
    backends = {"python": _pykernels}
    if _ckernels is not None:
        backends["cython"] = _ckernels
    else:
        print("compiled kernels not built; timing the numpy backend only")

    print(f"shape (S, T, L) = ({S}, {T}, {L}), best of {args.repeat}")
    print(f"{'kernel':<16}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for name, fn in cases.items():
        res = {b: best_of(lambda: fn(m), args.repeat) for b, m in backends.items()}
        row = f"{name:<16}" + "".join(f"{res[b][0] * 1e3:>10.1f}ms" for b in backends)
        if len(backends) > 1:
            if not np.array_equal(res["python"][1], res["cython"][1]):
                raise SystemExit(f"{name}: backends disagree")
            row += f"{res['python'][0] / res['cython'][0]:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
