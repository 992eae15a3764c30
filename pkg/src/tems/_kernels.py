"""Hot inner loops, with a numba path and a pure-numpy path.

The numba kernels are explicit loops; the numpy fallbacks are vectorized
(einsum) versions of the same arithmetic. Which one the rest of the package
sees is decided once, at import time:

* ``TEMS_DISABLE_NUMBA=1`` (or ``true``/``yes``) forces the numpy path;
* a failed ``import numba`` silently falls back to numpy as well.

Both implementations stay importable through ``NUMPY_KERNELS`` and
``NUMBA_KERNELS`` so tests and ``benchmarks/bench_kernels.py`` can compare
them side by side regardless of the flag.
"""
from __future__ import annotations

import os

import numpy as np

__all__ = [
    "BACKEND",
    "apply_kraus",
    "apply_outcomes",
    "pair_traces",
    "merge_sorted_support",
    "conjugated_traces",
    "lemma4_sides",
    "NUMPY_KERNELS",
    "NUMBA_KERNELS",
]


def _flag_set(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() in {"1", "true", "yes", "on"}


# ---------------------------------------------------------------------------
# numpy reference path
# ---------------------------------------------------------------------------


def _apply_kraus_np(kraus, rho):
    return np.einsum("lij,jk,lmk->im", kraus, rho, kraus.conj())


def _apply_outcomes_np(kraus, offsets, rho):
    terms = np.einsum("lij,jk,lmk->lim", kraus, rho, kraus.conj())
    n_out = offsets.shape[0] - 1
    out = np.zeros((n_out,) + rho.shape, dtype=np.complex128)
    for n in range(n_out):
        out[n] = terms[offsets[n]:offsets[n + 1]].sum(axis=0)
    return out


def _pair_traces_np(left, right):
    # Tr(L_m R_n) = sum_ij L_m[i, j] R_n[j, i]
    return np.einsum("mij,nji->mn", left, right).real


def _merge_sorted_support_np(values, probs, tol):
    if values.shape[0] == 0:
        return values.copy(), probs.copy()
    breaks = np.flatnonzero(np.diff(values) > tol) + 1
    starts = np.concatenate(([0], breaks))
    counts = np.diff(np.concatenate((starts, [values.shape[0]])))
    merged_p = np.add.reduceat(probs, starts)
    merged_w = np.add.reduceat(values, starts) / counts
    return merged_w, merged_p


def _conjugated_traces_np(a, b, unitaries):
    rotated = np.einsum("sji,jk,skl->sil", unitaries.conj(), a, unitaries)
    return np.einsum("sij,ji->s", rotated, b).real


def _lemma4_sides_np(rho, sigma, a, b, unitaries):
    ua = np.einsum("sij,j->si", unitaries, a)
    left = np.einsum("si,ij,sj->s", ua.conj(), rho, ua).real
    udb = np.einsum("sji,j->si", unitaries.conj(), b)  # U^dagger |b>
    right = np.einsum("si,ij,sj->s", udb.conj(), sigma, udb).real
    return np.stack((left, right), axis=1)


NUMPY_KERNELS = {
    "apply_kraus": _apply_kraus_np,
    "apply_outcomes": _apply_outcomes_np,
    "pair_traces": _pair_traces_np,
    "merge_sorted_support": _merge_sorted_support_np,
    "conjugated_traces": _conjugated_traces_np,
    "lemma4_sides": _lemma4_sides_np,
}


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------


def _build_numba_kernels():
    from numba import njit

    @njit(cache=True)
    def _sandwich_add(k, rho, out):
        # out += k rho k^dagger
        d = rho.shape[0]
        tmp = np.zeros((d, d), dtype=np.complex128)
        for i in range(d):
            for j in range(d):
                kij = k[i, j]
                if kij != 0:
                    for c in range(d):
                        tmp[i, c] += kij * rho[j, c]
        for i in range(d):
            for m in range(d):
                acc = 0j
                for c in range(d):
                    acc += tmp[i, c] * np.conj(k[m, c])
                out[i, m] += acc

    @njit(cache=True)
    def apply_kraus(kraus, rho):
        d = rho.shape[0]
        out = np.zeros((d, d), dtype=np.complex128)
        for l in range(kraus.shape[0]):
            _sandwich_add(kraus[l], rho, out)
        return out

    @njit(cache=True)
    def apply_outcomes(kraus, offsets, rho):
        d = rho.shape[0]
        n_out = offsets.shape[0] - 1
        out = np.zeros((n_out, d, d), dtype=np.complex128)
        for n in range(n_out):
            for l in range(offsets[n], offsets[n + 1]):
                _sandwich_add(kraus[l], rho, out[n])
        return out

    @njit(cache=True)
    def pair_traces(left, right):
        n_left = left.shape[0]
        n_right = right.shape[0]
        d = left.shape[1]
        out = np.zeros((n_left, n_right))
        for m in range(n_left):
            for n in range(n_right):
                acc = 0.0
                for i in range(d):
                    for j in range(d):
                        acc += (left[m, i, j] * right[n, j, i]).real
                out[m, n] = acc
        return out

    @njit(cache=True)
    def merge_sorted_support(values, probs, tol):
        k = values.shape[0]
        out_w = np.empty(k)
        out_p = np.empty(k)
        if k == 0:
            return out_w, out_p
        n = 0
        w_sum = values[0]
        p_sum = probs[0]
        count = 1
        for i in range(1, k):
            if values[i] - values[i - 1] > tol:
                out_w[n] = w_sum / count
                out_p[n] = p_sum
                n += 1
                w_sum = values[i]
                p_sum = probs[i]
                count = 1
            else:
                w_sum += values[i]
                p_sum += probs[i]
                count += 1
        out_w[n] = w_sum / count
        out_p[n] = p_sum
        return out_w[: n + 1].copy(), out_p[: n + 1].copy()

    @njit(cache=True)
    def conjugated_traces(a, b, unitaries):
        s_count = unitaries.shape[0]
        d = a.shape[0]
        out = np.empty(s_count)
        for s in range(s_count):
            u = unitaries[s]
            # a u
            au = np.zeros((d, d), dtype=np.complex128)
            for i in range(d):
                for k in range(d):
                    aik = a[i, k]
                    for l in range(d):
                        au[i, l] += aik * u[k, l]
            # Tr(u^dagger (a u) b) = sum_{i,j,l} conj(u[j,i]) au[j,l] b[l,i]
            acc = 0.0
            for i in range(d):
                for j in range(d):
                    cu = np.conj(u[j, i])
                    for l in range(d):
                        acc += (cu * au[j, l] * b[l, i]).real
            out[s] = acc
        return out

    @njit(cache=True)
    def lemma4_sides(rho, sigma, a, b, unitaries):
        s_count = unitaries.shape[0]
        d = rho.shape[0]
        out = np.empty((s_count, 2))
        ua = np.empty(d, dtype=np.complex128)
        udb = np.empty(d, dtype=np.complex128)
        for s in range(s_count):
            u = unitaries[s]
            for i in range(d):
                acc = 0j
                acc2 = 0j
                for j in range(d):
                    acc += u[i, j] * a[j]
                    acc2 += np.conj(u[j, i]) * b[j]
                ua[i] = acc
                udb[i] = acc2
            left = 0.0
            right = 0.0
            for i in range(d):
                for j in range(d):
                    left += (np.conj(ua[i]) * rho[i, j] * ua[j]).real
                    right += (np.conj(udb[i]) * sigma[i, j] * udb[j]).real
            out[s, 0] = left
            out[s, 1] = right
        return out

    return {
        "apply_kraus": apply_kraus,
        "apply_outcomes": apply_outcomes,
        "pair_traces": pair_traces,
        "merge_sorted_support": merge_sorted_support,
        "conjugated_traces": conjugated_traces,
        "lemma4_sides": lemma4_sides,
    }


try:
    NUMBA_KERNELS = _build_numba_kernels()
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_KERNELS = None

if NUMBA_KERNELS is None or _flag_set("TEMS_DISABLE_NUMBA"):
    BACKEND = "numpy"
    _active = NUMPY_KERNELS
else:
    BACKEND = "numba"
    _active = NUMBA_KERNELS

apply_kraus = _active["apply_kraus"]
apply_outcomes = _active["apply_outcomes"]
pair_traces = _active["pair_traces"]
merge_sorted_support = _active["merge_sorted_support"]
conjugated_traces = _active["conjugated_traces"]
lemma4_sides = _active["lemma4_sides"]
