"""Spectral Hamiltonians, Gibbs states and test spectra."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, TemsError
from .operator_core import as_rng, hermitian_eig, max_abs
from .tolerances import DEFAULT

__all__ = [
    "SpectralHamiltonian",
    "spectral_from_matrix",
    "spectral_from_levels",
    "partition_function",
    "gibbs_state",
    "boltzmann_weights",
    "has_distinct_differences",
    "nondegenerate_difference_spectrum",
    "has_nondegenerate_work_values",
]


@dataclass(frozen=True, eq=False)
class SpectralHamiltonian:
    """H = Σ_n e_n Π_n with strictly increasing energies.

    ``projectors`` has shape ``(n_levels, D, D)``; ``basis`` holds an
    orthonormal eigenbasis whose columns are grouped level by level
    (the first ``d_0`` columns span Π_0, and so on).
    """

    energies: np.ndarray
    projectors: np.ndarray
    degeneracies: np.ndarray
    basis: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("energies", "projectors", "degeneracies", "basis"):
            arr = np.array(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(np.diff(self.energies) <= 0):
            raise TemsError("energies must be strictly increasing")
        if int(self.degeneracies.sum()) != self.dim:
            raise DimensionError("degeneracies do not add up to the dimension")

    @property
    def dim(self) -> int:
        return int(self.basis.shape[0])

    @property
    def n_levels(self) -> int:
        return int(self.energies.shape[0])

    def matrix(self) -> np.ndarray:
        return np.einsum("n,nij->ij", self.energies, self.projectors)

    def level_vectors(self, n: int) -> np.ndarray:
        start = int(self.degeneracies[:n].sum())
        return self.basis[:, start:start + int(self.degeneracies[n])]

    def scaled(self, x: float) -> "SpectralHamiltonian":
        """Same eigenprojectors, energies ``x * e_n`` (x > 0 keeps the ordering)."""
        if x <= 0:
            raise ValueError("scale factor must be positive")
        return SpectralHamiltonian(self.energies * x, self.projectors, self.degeneracies, self.basis)

    def shifted(self, c: float) -> "SpectralHamiltonian":
        return SpectralHamiltonian(self.energies + c, self.projectors, self.degeneracies, self.basis)

    def with_energies(self, energies) -> "SpectralHamiltonian":
        energies = np.asarray(energies, dtype=float)
        if energies.shape != self.energies.shape:
            raise DimensionError("need one energy per level")
        return SpectralHamiltonian(energies, self.projectors, self.degeneracies, self.basis)

    def conjugated(self) -> "SpectralHamiltonian":
        """θ† H θ for θ = complex conjugation in the computational basis."""
        return SpectralHamiltonian(
            self.energies, self.projectors.conj(), self.degeneracies, self.basis.conj()
        )

    def rotated(self, u) -> "SpectralHamiltonian":
        """U H U^†."""
        u = np.asarray(u, dtype=np.complex128)
        projs = np.einsum("ij,njk,lk->nil", u, self.projectors, u.conj())
        return SpectralHamiltonian(self.energies, projs, self.degeneracies, u @ self.basis)

    def validate(self, tol: float = 1e-10) -> None:
        eye = np.eye(self.dim)
        if max_abs(self.projectors.sum(axis=0) - eye) > tol:
            raise TemsError("projectors do not resolve the identity")
        for n in range(self.n_levels):
            for m in range(self.n_levels):
                target = self.projectors[n] if n == m else 0.0
                if max_abs(self.projectors[n] @ self.projectors[m] - target) > tol:
                    raise TemsError(f"projectors {n} and {m} are not orthogonal idempotents")
            if abs(np.trace(self.projectors[n]).real - self.degeneracies[n]) > tol:
                raise TemsError(f"Tr Π_{n} differs from d_{n}")


def _from_grouped(energies, basis, groups) -> SpectralHamiltonian:
    projs, degs, level_e = [], [], []
    for idx in groups:
        vecs = basis[:, idx]
        projs.append(vecs @ vecs.conj().T)
        degs.append(len(idx))
        level_e.append(float(np.mean(energies[idx])))
    return SpectralHamiltonian(
        np.array(level_e), np.array(projs), np.array(degs, dtype=int), basis
    )


def spectral_from_matrix(m, group_tol: float = DEFAULT.group) -> SpectralHamiltonian:
    """Spectral decomposition of a Hermitian matrix with degeneracy grouping.

    Consecutive eigenvalues closer than ``group_tol * max(1, max|M|)`` are
    merged into one level (chained, so a run of near-equal values becomes a
    single level). The level energy is the mean of its group.
    """
    evals, evecs = hermitian_eig(m)
    gap = group_tol * max(1.0, max_abs(m))
    groups = [[0]]
    for i in range(1, evals.shape[0]):
        if evals[i] - evals[i - 1] <= gap:
            groups[-1].append(i)
        else:
            groups.append([i])
    return _from_grouped(evals, evecs, groups)


def spectral_from_levels(energies, degeneracies=None, basis=None) -> SpectralHamiltonian:
    """Hamiltonian from (energy, degeneracy) pairs.

    Levels are laid out in the computational basis unless ``basis`` (a unitary
    whose columns are the eigenvectors, grouped by level) is given. Energies
    are sorted; they must be distinct.
    """
    energies = np.asarray(energies, dtype=float)
    if energies.ndim != 1 or energies.size == 0:
        raise DimensionError("energies must be a non-empty 1-d list")
    degs = np.ones_like(energies, dtype=int) if degeneracies is None else np.asarray(degeneracies)
    if degs.shape != energies.shape:
        raise DimensionError("need one degeneracy per energy")
    if np.any(degs < 1) or np.any(degs != np.round(degs)):
        raise TemsError("degeneracies must be positive integers")
    degs = degs.astype(int)
    order = np.argsort(energies, kind="stable")
    dim = int(degs.sum())
    if basis is None:
        basis = np.eye(dim, dtype=np.complex128)
    basis = np.asarray(basis, dtype=np.complex128)
    if basis.shape != (dim, dim):
        raise DimensionError(f"basis must be {dim}x{dim}")
    starts = np.concatenate(([0], np.cumsum(degs)[:-1]))
    cols = np.concatenate([np.arange(starts[n], starts[n] + degs[n]) for n in order])
    sorted_basis = basis[:, cols]
    groups, pos = [], 0
    for n in order:
        groups.append(list(range(pos, pos + degs[n])))
        pos += degs[n]
    flat_e = np.repeat(energies[order], degs[order])
    return _from_grouped(flat_e, sorted_basis, groups)


def partition_function(h: SpectralHamiltonian, beta: float) -> float:
    """Σ_n d_n exp(-β e_n)."""
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    return float(np.sum(h.degeneracies * np.exp(-beta * h.energies)))


def boltzmann_weights(h: SpectralHamiltonian, beta: float) -> np.ndarray:
    """Level populations d_n e^{-β e_n} / Z, computed with a ground-energy shift."""
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    w = h.degeneracies * np.exp(-beta * (h.energies - h.energies[0]))
    return w / w.sum()


def gibbs_state(h: SpectralHamiltonian, beta: float) -> np.ndarray:
    pops = boltzmann_weights(h, beta)
    return np.einsum("n,nij->ij", pops / h.degeneracies, h.projectors)


def has_distinct_differences(energies, tol: float = 1e-9) -> bool:
    """True iff all ordered differences e_n - e_m (n ≠ m) are pairwise distinct
    and nonzero. Brute force; meant for the handful of levels used in tests."""
    e = np.asarray(energies, dtype=float)
    n = e.shape[0]
    diffs = [e[i] - e[j] for i in range(n) for j in range(n) if i != j]
    if any(abs(d) <= tol for d in diffs):
        return False
    diffs.sort()
    return all(b - a > tol for a, b in zip(diffs, diffs[1:]))


def nondegenerate_difference_spectrum(n_levels: int, seed=None, tol: float = 1e-9,
                                      max_tries: int = 1000) -> np.ndarray:
    """Sorted energies in [0, 1) whose pairwise differences are all distinct."""
    if n_levels < 1:
        raise ValueError("n_levels must be positive")
    rng = as_rng(seed)
    for _ in range(max_tries):
        candidate = np.sort(rng.random(n_levels))
        if has_distinct_differences(candidate, tol):
            return candidate
    raise RuntimeError("could not draw a spectrum with distinct differences")


def has_nondegenerate_work_values(e_initial, e_final, tol: float = 1e-9) -> bool:
    """True iff e_final[m] - e_initial[n] are distinct over all pairs (m, n)."""
    w = np.sort(np.subtract.outer(np.asarray(e_final), np.asarray(e_initial)).ravel())
    return bool(np.all(np.diff(w) > tol))
