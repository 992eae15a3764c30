"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5] [--dims 2 4 8]

Each kernel is called once untimed so numba compilation is excluded, then
timed with ``timeit``. The best of ``--repeat`` runs is reported per call.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from tems._kernels import NUMBA_KERNELS, NUMPY_KERNELS
from tems.operator_core import haar_unitaries, haar_unitary, random_density_matrix, random_hermitian


def workloads(dim: int, rng: np.random.Generator) -> dict:
    """Arguments shaped like the package's own hot calls at dimension ``dim``."""
    n_kraus = 3 * dim
    iso = haar_unitary(dim * n_kraus, rng)[:, :dim]
    kraus = np.ascontiguousarray(iso.reshape(n_kraus, dim, dim))
    offsets = np.linspace(0, n_kraus, dim + 1).astype(np.int64)
    rho = np.ascontiguousarray(random_density_matrix(dim, rng))
    mats = np.ascontiguousarray(np.stack([random_hermitian(dim, rng) for _ in range(dim)]).astype(complex))
    values = np.sort(rng.normal(size=dim * dim * 16))
    probs = rng.random(values.size)
    us = haar_unitaries(2000, dim, rng)
    a = np.ascontiguousarray(random_hermitian(dim, rng).astype(complex))
    b = np.ascontiguousarray(random_hermitian(dim, rng).astype(complex))
    va = np.ascontiguousarray(haar_unitary(dim, rng)[:, 0])
    vb = np.ascontiguousarray(haar_unitary(dim, rng)[:, 0])
    return {
        "apply_kraus": (kraus, rho),
        "apply_outcomes": (kraus, offsets, rho),
        "pair_traces": (mats, mats),
        "merge_sorted_support": (values, probs, 1e-3),
        "conjugated_traces": (a, b, us),
        "lemma4_sides": (rho, rho, va, vb, us),
    }


def best_time(fn, args, repeat: int) -> float:
    fn(*args)  # compile / warm caches
    timer = timeit.Timer(lambda: fn(*args))
    number, _ = timer.autorange()
    return min(timer.repeat(repeat=repeat, number=number)) / number


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--dims", type=int, nargs="+", default=[2, 4, 8])
    args = parser.parse_args()
    if NUMBA_KERNELS is None:
        raise SystemExit("numba is not importable; nothing to compare")

    rng = np.random.default_rng(0)
    print(f"{'kernel':<22}{'D':>3}{'numpy (us)':>14}{'numba (us)':>14}{'speedup':>10}")
    for dim in args.dims:
        for name, kargs in workloads(dim, rng).items():
            t_np = best_time(NUMPY_KERNELS[name], kargs, args.repeat)
            t_nb = best_time(NUMBA_KERNELS[name], kargs, args.repeat)
            ref, got = NUMPY_KERNELS[name](*kargs), NUMBA_KERNELS[name](*kargs)
            ref = ref if isinstance(ref, tuple) else (ref,)
            got = got if isinstance(got, tuple) else (got,)
            assert all(np.allclose(r, g, atol=1e-10) for r, g in zip(ref, got)), name
            print(f"{name:<22}{dim:>3}{t_np * 1e6:>14.2f}{t_nb * 1e6:>14.2f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
