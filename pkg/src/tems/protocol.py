"""Force protocols reduced to (initial Hamiltonian, net dynamics, final Hamiltonian)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NotUnitaryError, TemsError
from .hamiltonian import SpectralHamiltonian
from .instrument import QuantumOperation, is_unital
from .operator_core import evolve_unitary, is_unitary
from .tolerances import DEFAULT

__all__ = ["Protocol", "quench_protocol", "time_reversed", "evolve"]


@dataclass(frozen=True, eq=False)
class Protocol:
    """Either a unitary matrix or a unital channel as ``dynamics``."""

    h_initial: SpectralHamiltonian
    h_final: SpectralHamiltonian
    dynamics: object

    def __post_init__(self):
        dim = self.h_initial.dim
        if self.h_final.dim != dim:
            raise DimensionError("initial and final Hamiltonians differ in dimension")
        dyn = self.dynamics
        if isinstance(dyn, QuantumOperation):
            if dyn.dim != dim:
                raise DimensionError(f"channel dimension {dyn.dim} != {dim}")
            if not is_unital(dyn, DEFAULT.unital):
                raise TemsError("channel dynamics must be unital")
        else:
            u = np.array(dyn, dtype=np.complex128)
            if u.shape != (dim, dim):
                raise DimensionError(f"unitary has shape {u.shape}, expected {(dim, dim)}")
            if not is_unitary(u, DEFAULT.unitary):
                raise NotUnitaryError("dynamics matrix is not unitary")
            u.setflags(write=False)
            object.__setattr__(self, "dynamics", u)

    @property
    def dim(self) -> int:
        return self.h_initial.dim

    @property
    def is_unitary(self) -> bool:
        return not isinstance(self.dynamics, QuantumOperation)

    @property
    def unitary(self) -> np.ndarray:
        if not self.is_unitary:
            raise TemsError("protocol has channel dynamics, not a unitary")
        return self.dynamics

    def evolve(self, rho) -> np.ndarray:
        return evolve(self, rho)

    def evolve_many(self, states) -> np.ndarray:
        """Apply the dynamics to a stack of operators, shape (N, D, D)."""
        if self.is_unitary:
            u = self.dynamics
            return np.einsum("ij,njk,lk->nil", u, states, u.conj())
        return np.stack([self.dynamics.apply(s) for s in states])

    def with_hamiltonians(self, h_initial=None, h_final=None) -> "Protocol":
        return Protocol(h_initial or self.h_initial, h_final or self.h_final, self.dynamics)

    def with_dynamics(self, dynamics) -> "Protocol":
        return Protocol(self.h_initial, self.h_final, dynamics)


def quench_protocol(h0: SpectralHamiltonian, h_tau: SpectralHamiltonian, h_mid, tau: float,
                    hbar: float = 1.0) -> Protocol:
    """Sudden quench to ``h_mid``, hold for ``tau``, sudden quench to ``h_tau``.

    The quenches themselves do not contribute, so the net unitary is
    ``exp(-i tau h_mid / hbar)``.
    """
    if tau < 0:
        raise ValueError("tau must be non-negative")
    h_mid = np.asarray(h_mid, dtype=np.complex128)
    if h_mid.shape != (h0.dim, h0.dim):
        raise DimensionError(f"H_mid has shape {h_mid.shape}, expected {(h0.dim, h0.dim)}")
    return Protocol(h0, h_tau, evolve_unitary(h_mid, tau, hbar))


def time_reversed(p: Protocol) -> Protocol:
    """Backward protocol under θ = complex conjugation.

    Initial and final Hamiltonians swap and are conjugated; U ↦ θ U^† θ^† = U^T.
    """
    if not p.is_unitary:
        raise TemsError("only unitary dynamics has a time-reversed protocol here")
    return Protocol(p.h_final.conjugated(), p.h_initial.conjugated(), p.dynamics.T)


def evolve(p: Protocol, rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.shape != (p.dim, p.dim):
        raise DimensionError(f"state shape {rho.shape} does not match protocol dimension {p.dim}")
    if p.is_unitary:
        u = p.dynamics
        return u @ rho @ u.conj().T
    return p.dynamics.apply(rho)
