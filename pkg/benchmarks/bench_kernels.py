"""Compare the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel with the best-of-N wall time of each backend and
the speedup.  Both backends are checked to agree before timing.
"""
import argparse
import timeit

import numpy as np

from netsense import _backend, channel, estimation


def marcum_case(kern):
    pts = [(v, a, b) for v in (1, 3, 10) for a in (0.5, 3.0, 12.0) for b in (0.5, 4.0, 15.0)]
    return lambda: [kern.marcum_pair(v, a, b) for v, a, b in pts]


def estep_case(kern, dim=16, n=50, iota=0.5):
    rng = np.random.default_rng(0)
    A = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    R = A @ A.conj().T / dim + np.eye(dim)
    Y = channel.complex_normal(rng, (n, dim)) @ np.linalg.cholesky(R).T
    data = estimation.PartialSnapshots.from_full(Y, estimation.make_pattern(n, dim, iota, rng))
    R = np.ascontiguousarray(R)
    return lambda: kern.estep_phi(R, data.flat_values, data.flat_idx, data.offsets)


CASES = {
    "marcum_pair x27": marcum_case,
    "estep_phi N_R=16 N=50 iota=0.5": estep_case,
    "estep_phi N_R=16 N=50 iota=0.2": lambda k: estep_case(k, iota=0.2),
    "estep_phi N_R=64 N=200 iota=0.5": lambda k: estep_case(k, dim=64, n=200),
}


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()
    names = _backend.available()
    if "compiled" not in names:
        print("compiled kernels are not built; only the fallback is available")
    print(f"{'kernel':34s}" + "".join(f"{n:>14s}" for n in names) + "     speedup")
    for label, make in CASES.items():
        fns = {n: make(_backend.kernels(n)) for n in names}
        ref = np.asarray(fns["python"](), dtype=complex)
        for n in names:
            assert np.allclose(np.asarray(fns[n](), dtype=complex), ref, rtol=1e-10, atol=1e-12)
        times = {}
        for n, fn in fns.items():
            loops, _ = timeit.Timer(fn).autorange()
            times[n] = min(timeit.repeat(fn, number=loops, repeat=args.repeat)) / loops
        row = f"{label:34s}" + "".join(f"{times[n] * 1e3:12.3f}ms" for n in names)
        if "compiled" in times:
            row += f"  {times['python'] / times['compiled']:8.1f}x"
        print(row)


if __name__ == "__main__":
    main()
