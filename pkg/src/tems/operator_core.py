"""Dense complex-matrix substrate.

Conventions
-----------
* hbar = 1 unless a caller passes ``hbar`` explicitly.
* Haar unitaries come from the QR factorization of a complex Ginibre matrix
  (i.i.d. standard complex Gaussians) with the phases of ``diag(R)`` moved
  into ``Q``. Without the phase fix the distribution is not Haar.
* Choi matrices are ``(op ⊗ id)(|Ω><Ω|)`` with ``|Ω> = Σ_i |ii>/√D``; the
  output space is the *first* tensor factor. In terms of Kraus operators this
  is ``(1/D) Σ_l vec(B_l) vec(B_l)^†`` where ``vec`` stacks the columns of
  ``B_l^T`` (i.e. ``B_l.reshape(-1)`` in numpy's row-major order). With this
  normalization a trace-preserving map has ``Tr J = 1`` and the partial trace
  over the first factor equals ``1/D``.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .errors import DimensionError, NotHermitianError, NotUnitaryError
from .tolerances import DEFAULT

__all__ = [
    "as_matrix",
    "max_abs",
    "check_hermitian",
    "hermitian_eig",
    "is_unitary",
    "haar_unitary",
    "haar_unitaries",
    "evolve_unitary",
    "unitary_log",
    "choi",
    "choi_from_map",
    "kraus_from_choi",
    "partial_trace_first",
    "min_eigenvalue",
    "is_psd",
    "random_hermitian",
    "random_density_matrix",
    "random_pure_state",
    "as_rng",
    "apply_kraus",
]


def as_rng(seed) -> np.random.Generator:
    """Accept an int seed, a SeedSequence or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def as_matrix(m, square: bool = True) -> np.ndarray:
    arr = np.array(m, dtype=np.complex128, copy=True)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-d matrix, got shape {arr.shape}")
    if square and arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix has non-finite entries")
    return arr


def max_abs(m) -> float:
    m = np.asarray(m)
    return float(np.max(np.abs(m))) if m.size else 0.0


def check_hermitian(m, tol: float = DEFAULT.hermitian) -> np.ndarray:
    """Return ``m`` as a complex array, raising if it is not Hermitian.

    The test is ``max|M - M^†| <= tol * max|M|``; the reported asymmetry is
    the absolute one.
    """
    arr = as_matrix(m)
    asym = max_abs(arr - arr.conj().T)
    scale = max_abs(arr)
    if asym > tol * max(scale, np.finfo(float).tiny):
        raise NotHermitianError(
            f"matrix is not Hermitian: max|M - M^dagger| = {asym:.3e} "
            f"(scale {scale:.3e}, tol {tol:g})"
        )
    return arr


def hermitian_eig(m, tol: float = DEFAULT.hermitian) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and unitary eigenvector matrix of a Hermitian M."""
    arr = check_hermitian(m, tol)
    arr = 0.5 * (arr + arr.conj().T)
    evals, evecs = np.linalg.eigh(arr)
    return evals, evecs


def is_unitary(u, tol: float = DEFAULT.unitary) -> bool:
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return False
    return max_abs(u.conj().T @ u - np.eye(u.shape[0])) <= tol


def haar_unitary(dim: int, seed=None) -> np.ndarray:
    if int(dim) != dim or dim < 1:
        raise DimensionError(f"dimension must be a positive integer, got {dim!r}")
    dim = int(dim)
    rng = as_rng(seed)
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r)
    phases = diag / np.abs(diag)
    return q * phases[np.newaxis, :]


def haar_unitaries(count: int, dim: int, seed=None) -> np.ndarray:
    """Stack of ``count`` independent Haar unitaries, shape (count, dim, dim)."""
    if int(dim) != dim or dim < 1:
        raise DimensionError(f"dimension must be a positive integer, got {dim!r}")
    rng = as_rng(seed)
    shape = (int(count), int(dim), int(dim))
    z = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r, axis1=1, axis2=2)
    return np.ascontiguousarray(q * (diag / np.abs(diag))[:, np.newaxis, :])


def evolve_unitary(h, t: float, hbar: float = 1.0) -> np.ndarray:
    """``exp(-i H t / hbar)`` through the eigendecomposition of H."""
    evals, evecs = hermitian_eig(h)
    phases = np.exp(-1j * evals * (t / hbar))
    return (evecs * phases[np.newaxis, :]) @ evecs.conj().T


def unitary_log(u, tol: float = DEFAULT.unitary) -> np.ndarray:
    """Hermitian ``H`` with ``exp(-i H) = U`` (principal branch, phases in (-π, π]).

    A unitary is normal, so a Schur decomposition gives an orthonormal
    eigenbasis even when eigenvalues are (nearly) repeated; ``np.linalg.eig``
    would not.
    """
    from scipy.linalg import schur

    u = as_matrix(u)
    if not is_unitary(u, tol):
        raise NotUnitaryError("unitary_log needs a unitary argument")
    t, z = schur(u, output="complex")
    phases = np.angle(np.diagonal(t))
    h = (z * (-phases)[np.newaxis, :]) @ z.conj().T
    return 0.5 * (h + h.conj().T)


def _kraus_stack(op) -> np.ndarray:
    kraus = getattr(op, "kraus", op)
    if isinstance(kraus, np.ndarray) and kraus.ndim == 2:
        kraus = kraus[np.newaxis]
    mats = [np.asarray(k, dtype=np.complex128) for k in kraus]
    if not mats:
        raise DimensionError("empty Kraus list")
    shape = mats[0].shape
    for i, k in enumerate(mats):
        if k.ndim != 2 or k.shape[0] != k.shape[1]:
            raise DimensionError(f"Kraus operator {i} is not square: shape {k.shape}")
        if k.shape != shape:
            raise DimensionError(
                f"Kraus operator {i} has shape {k.shape}, expected {shape}"
            )
    return np.ascontiguousarray(np.stack(mats))


def choi(op) -> np.ndarray:
    """Choi matrix of a CP map given as a QuantumOperation or a Kraus list."""
    kraus = _kraus_stack(op)
    dim = kraus.shape[1]
    vecs = kraus.reshape(kraus.shape[0], dim * dim)
    return np.einsum("li,lj->ij", vecs, vecs.conj()) / dim


def choi_from_map(fn: Callable[[np.ndarray], np.ndarray], dim: int) -> np.ndarray:
    """Choi matrix of an arbitrary linear map, from its action on |i><j|."""
    j = np.zeros((dim * dim, dim * dim), dtype=np.complex128)
    j4 = j.reshape(dim, dim, dim, dim)  # [out_row, in_row, out_col, in_col]
    for a in range(dim):
        for b in range(dim):
            unit = np.zeros((dim, dim), dtype=np.complex128)
            unit[a, b] = 1.0
            j4[:, a, :, b] = np.asarray(fn(unit))
    return j / dim


def kraus_from_choi(j, cutoff: float = DEFAULT.kraus_cutoff) -> np.ndarray:
    """Canonical Kraus set from the eigendecomposition of a PSD Choi matrix.

    Eigenvalues at or below ``cutoff * max(1, |J|)`` are dropped; at least one
    operator is always returned (the zero map maps to a single zero operator).
    """
    j = np.asarray(j, dtype=np.complex128)
    dim = int(round(np.sqrt(j.shape[0])))
    if dim * dim != j.shape[0]:
        raise DimensionError(f"Choi matrix size {j.shape[0]} is not a perfect square")
    evals, evecs = np.linalg.eigh(0.5 * (j + j.conj().T))
    keep = evals > cutoff * max(1.0, max_abs(j))
    if not np.any(keep):
        return np.zeros((1, dim, dim), dtype=np.complex128)
    weights = np.sqrt(evals[keep] * dim)
    vecs = evecs[:, keep].T * weights[:, np.newaxis]
    return np.ascontiguousarray(vecs.reshape(-1, dim, dim)[::-1])


def partial_trace_first(j) -> np.ndarray:
    """Trace out the first (output) factor of a D²×D² matrix."""
    j = np.asarray(j)
    dim = int(round(np.sqrt(j.shape[0])))
    return np.einsum("aiaj->ij", j.reshape(dim, dim, dim, dim))


def min_eigenvalue(m) -> float:
    m = np.asarray(m, dtype=np.complex128)
    return float(np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0])


def is_psd(m, tol: float = DEFAULT.psd) -> bool:
    return min_eigenvalue(m) >= -tol * max(1.0, max_abs(m))


def random_hermitian(dim: int, seed=None, scale: float = 1.0) -> np.ndarray:
    rng = as_rng(seed)
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return scale * 0.5 * (z + z.conj().T)


def random_density_matrix(dim: int, seed=None, rank: int | None = None) -> np.ndarray:
    """Random state ``G G^† / Tr`` from a ``dim × rank`` Ginibre matrix."""
    rng = as_rng(seed)
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_pure_state(dim: int, seed=None) -> np.ndarray:
    rng = as_rng(seed)
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def apply_kraus(kraus: Sequence[np.ndarray] | np.ndarray, rho) -> np.ndarray:
    """``Σ_l B_l ρ B_l^†`` through the active kernel backend."""
    stack = _kraus_stack(kraus)
    rho = np.ascontiguousarray(rho, dtype=np.complex128)
    if rho.shape != stack.shape[1:]:
        raise DimensionError(f"state shape {rho.shape} does not match Kraus shape {stack.shape[1:]}")
    return _kernels.apply_kraus(stack, rho)
