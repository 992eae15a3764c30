import json
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tems import _kernels
from tems.operator_core import haar_unitaries, haar_unitary, random_density_matrix, random_hermitian

pytestmark = pytest.mark.skipif(_kernels.NUMBA_KERNELS is None, reason="numba unavailable")

NP, NB = _kernels.NUMPY_KERNELS, _kernels.NUMBA_KERNELS


def _kraus(dim, n, rng):
    iso = haar_unitary(dim * n, rng)[:, :dim]
    return np.ascontiguousarray(iso.reshape(n, dim, dim))


@settings(max_examples=25, deadline=None)
@given(dim=st.integers(1, 6), n=st.integers(1, 4), seed=st.integers(0, 10_000))
def test_apply_kraus_and_outcomes_agree(dim, n, seed):
    rng = np.random.default_rng(seed)
    k = _kraus(dim, n, rng)
    rho = np.ascontiguousarray(random_density_matrix(dim, rng))
    assert np.allclose(NP["apply_kraus"](k, rho), NB["apply_kraus"](k, rho), atol=1e-13)
    offsets = np.array([0, *sorted(rng.integers(0, n + 1, size=2)), n], dtype=np.int64)
    assert np.allclose(NP["apply_outcomes"](k, offsets, rho), NB["apply_outcomes"](k, offsets, rho), atol=1e-13)


@settings(max_examples=25, deadline=None)
@given(dim=st.integers(1, 6), seed=st.integers(0, 10_000))
def test_pair_traces_agree(dim, seed):
    rng = np.random.default_rng(seed)
    left = np.ascontiguousarray(np.stack([random_hermitian(dim, rng) for _ in range(3)]).astype(complex))
    right = np.ascontiguousarray(np.stack([random_hermitian(dim, rng) for _ in range(4)]).astype(complex))
    assert np.allclose(NP["pair_traces"](left, right), NB["pair_traces"](left, right), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(values=st.lists(st.floats(-5, 5), min_size=1, max_size=30), tol=st.sampled_from([0.0, 1e-9, 0.3]))
def test_merge_sorted_support_agrees(values, tol):
    w = np.sort(np.array(values))
    p = np.linspace(0.1, 1.0, w.size)
    a_w, a_p = NP["merge_sorted_support"](w, p, tol)
    b_w, b_p = NB["merge_sorted_support"](w, p, tol)
    assert np.allclose(a_w, b_w, atol=1e-14) and np.allclose(a_p, b_p, atol=1e-14)
    assert abs(a_p.sum() - p.sum()) <= 1e-12


@settings(max_examples=25, deadline=None)
@given(dim=st.integers(1, 6), seed=st.integers(0, 10_000))
def test_lemma_kernels_agree(dim, seed):
    rng = np.random.default_rng(seed)
    us = haar_unitaries(20, dim, rng)
    a = np.ascontiguousarray(random_hermitian(dim, rng).astype(complex))
    b = np.ascontiguousarray(random_hermitian(dim, rng).astype(complex))
    assert np.allclose(NP["conjugated_traces"](a, b, us), NB["conjugated_traces"](a, b, us), atol=1e-12)
    rho = np.ascontiguousarray(random_density_matrix(dim, rng))
    sigma = np.ascontiguousarray(random_density_matrix(dim, rng))
    va = np.ascontiguousarray(haar_unitary(dim, rng)[:, 0])
    vb = np.ascontiguousarray(haar_unitary(dim, rng)[:, 0])
    assert np.allclose(NP["lemma4_sides"](rho, sigma, va, vb, us),
                       NB["lemma4_sides"](rho, sigma, va, vb, us), atol=1e-13)


_PIPELINE = """
import json
import numpy as np
from tems import _kernels
from tems.instrument import build_crooks
from tems.lemma_lab import lemma3_trace_scan
from tems.hamiltonian import spectral_from_levels
from tems.operator_core import haar_unitary
from tems.protocol import Protocol
from tems.verifier import Scenario, check_crooks, check_jarzynski
h0 = spectral_from_levels([0.0, 0.7, 1.9])
h1 = spectral_from_levels([0.0, 1.1, 2.6])
s = Scenario(Protocol(h0, h1, haar_unitary(3, 5)), build_crooks(h0, 0.4), build_crooks(h1, 0.4), 0.9)
scan = lemma3_trace_scan(np.diag([1.0, 2.0, 4.0]), np.diag([0.5, -1.0, 0.0]), 20, 20, seed=1)
print(json.dumps({"backend": _kernels.BACKEND, "jarzynski": check_jarzynski(s).actual,
                  "crooks": check_crooks(s).actual, "spread": scan.spread}))
"""


def _run_pipeline(disable: bool) -> dict:
    env = dict(os.environ)
    env.pop("TEMS_DISABLE_NUMBA", None)
    if disable:
        env["TEMS_DISABLE_NUMBA"] = "1"
    proc = subprocess.run([sys.executable, "-c", _PIPELINE], env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout)


def test_env_flag_selects_numpy_backend_with_same_results():
    fast, slow = _run_pipeline(False), _run_pipeline(True)
    assert fast["backend"] == "numba" and slow["backend"] == "numpy"
    for key in ("jarzynski", "crooks", "spread"):
        assert abs(fast[key] - slow[key]) <= 1e-12 * max(1, abs(fast[key]))
