"""Joint outcome statistics of a two-energy-measurement run and the work they imply."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DimensionError
from .hamiltonian import SpectralHamiltonian, boltzmann_weights
from .instrument import Instrument
from .protocol import Protocol
from .tolerances import DEFAULT

__all__ = [
    "JointOutcomeTable",
    "WorkDistribution",
    "joint_table",
    "conditional_table",
    "work_distribution",
    "exp_average",
    "two_point_conditional",
    "default_work_tol",
]


@dataclass(frozen=True, eq=False)
class JointOutcomeTable:
    """``p[m, n]``: final outcome m (levels of H(τ)), initial outcome n (levels of H(0))."""

    p: np.ndarray
    e_final: np.ndarray
    e_initial: np.ndarray

    @property
    def total(self) -> float:
        return float(self.p.sum())

    def marginal_initial(self) -> np.ndarray:
        return self.p.sum(axis=0)

    def marginal_final(self) -> np.ndarray:
        return self.p.sum(axis=1)


@dataclass(frozen=True, eq=False)
class WorkDistribution:
    """Point masses ``probs[k]`` at ascending work values ``values[k]``.

    Probabilities are the raw computed values; tiny negative entries caused by
    rounding are kept so residual diagnostics can see them. Use
    :meth:`for_reporting` for a clipped, renormalized copy.
    """

    values: np.ndarray
    probs: np.ndarray

    def __len__(self) -> int:
        return int(self.values.shape[0])

    @property
    def total(self) -> float:
        return float(self.probs.sum())

    def exp_average(self, beta: float) -> float:
        return exp_average(self, beta)

    def mass_at(self, w: float, tol: float) -> float:
        hit = np.abs(self.values - w) <= tol
        return float(self.probs[hit].sum())

    def for_reporting(self, floor: float = -1e-12) -> "WorkDistribution":
        p = np.where((self.probs < 0) & (self.probs >= floor), 0.0, self.probs)
        return WorkDistribution(self.values.copy(), p / p.sum())

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["w", "p"])
        for w, p in zip(self.values, self.probs):
            writer.writerow([repr(float(w)), repr(float(p))])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"w": [float(w) for w in self.values], "p": [float(p) for p in self.probs]})

    @classmethod
    def from_json(cls, text: str) -> "WorkDistribution":
        data = json.loads(text)
        return cls(np.asarray(data["w"], dtype=float), np.asarray(data["p"], dtype=float))


def _check_dims(p: Protocol, instr0: Instrument, instr_tau: Instrument) -> None:
    if len(instr0) != p.h_initial.n_levels:
        raise DimensionError(
            f"first instrument has {len(instr0)} outcomes, H(0) has {p.h_initial.n_levels} levels"
        )
    if len(instr_tau) != p.h_final.n_levels:
        raise DimensionError(
            f"second instrument has {len(instr_tau)} outcomes, H(τ) has {p.h_final.n_levels} levels"
        )
    if instr0.dim != p.dim or instr_tau.dim != p.dim:
        raise DimensionError("instrument and protocol dimensions differ")


def _second_stage(p: Protocol, instr_tau: Instrument, states: np.ndarray) -> np.ndarray:
    # Tr φ^τ_m(X) = Tr[E_m X], so only the effects of the second instrument matter.
    evolved = np.ascontiguousarray(p.evolve_many(states))
    return _kernels.pair_traces(np.ascontiguousarray(instr_tau.effects()), evolved)


def joint_table(p: Protocol, instr0: Instrument, instr_tau: Instrument, beta: float) -> JointOutcomeTable:
    """p(m, n) = Tr φ^τ_m(U φ^0_n(ρ_β) U^†).

    ρ_β is expanded as Σ_k p⁰(k) Π_k / d_k and each level is propagated on its
    own. A dense Gibbs matrix in a rotated basis carries only absolute
    precision, which spoils the relative accuracy of thermally suppressed
    entries that e^{-βw} later amplifies.
    """
    table = joint_from_conditional(conditional_table(p, instr0, instr_tau), p.h_initial, beta)
    return JointOutcomeTable(table, p.h_final.energies.copy(), p.h_initial.energies.copy())


def conditional_table(p: Protocol, instr0: Instrument, instr_tau: Instrument,
                      path_floor: float = DEFAULT.path_floor) -> np.ndarray:
    """p(m, n | k) = Tr φ^τ_m(U φ^0_n(Π_k) U^†) / d_k, shape (M, N, K).

    A path k -> n whose first-stage probability Tr φ^0_n(Π_k) / d_k is at most
    ``path_floor`` is set to zero. Such paths are rounding residue of
    structurally forbidden transitions (n != k for an error-free first
    measurement), and every entry they feed is bounded by that probability.
    """
    _check_dims(p, instr0, instr_tau)
    h0 = p.h_initial
    out = np.empty((p.h_final.n_levels, h0.n_levels, h0.n_levels))
    for k in range(h0.n_levels):
        first = instr0.outcome_states(np.ascontiguousarray(h0.projectors[k], dtype=np.complex128))
        out[:, :, k] = _second_stage(p, instr_tau, first) / h0.degeneracies[k]
        reached = np.trace(first, axis1=1, axis2=2).real / h0.degeneracies[k]
        out[:, np.abs(reached) <= path_floor, k] = 0.0
    return out


def joint_from_conditional(cond: np.ndarray, h0: SpectralHamiltonian, beta: float) -> np.ndarray:
    """Σ_k p(m, n | k) d_k e^{-β e_k} / Z."""
    return np.einsum("mnk,k->mn", cond, boltzmann_weights(h0, beta))


def default_work_tol(table: JointOutcomeTable, rel: float = DEFAULT.work) -> float:
    scale = max(1.0, float(np.max(np.abs(table.e_final))), float(np.max(np.abs(table.e_initial))))
    return rel * scale


def work_distribution(table: JointOutcomeTable, work_tol: float | None = None) -> WorkDistribution:
    """Aggregate p(m, n) onto w = e_m(τ) - e_n(0), merging values within ``work_tol``."""
    if work_tol is None:
        work_tol = default_work_tol(table)
    w = np.subtract.outer(table.e_final, table.e_initial).ravel()
    probs = table.p.ravel()
    order = np.argsort(w, kind="stable")
    values, masses = _kernels.merge_sorted_support(
        np.ascontiguousarray(w[order]), np.ascontiguousarray(probs[order]), float(work_tol)
    )
    # outcome pairs that cannot occur are not part of the support; rounding noise is kept
    keep = masses != 0.0
    if keep.any():
        values, masses = values[keep], masses[keep]
    return WorkDistribution(values, masses)


def exp_average(dist: WorkDistribution, beta: float) -> float:
    """⟨e^{-βw}⟩ = Σ_k p_k e^{-β w_k}."""
    return float(np.sum(dist.probs * np.exp(-beta * dist.values)))


def two_point_conditional(p: Protocol) -> np.ndarray:
    """p^{2p}(m|n) = Tr Π_m(τ) U Π_n(0) U^† / d_n(0) for projective measurements."""
    h0 = p.h_initial
    evolved = np.ascontiguousarray(p.evolve_many(h0.projectors.astype(np.complex128)))
    traces = _kernels.pair_traces(np.ascontiguousarray(p.h_final.projectors, dtype=np.complex128), evolved)
    return traces / h0.degeneracies[np.newaxis, :]
