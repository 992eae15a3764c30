"""Quantum operations, instruments and the measurement families we test.

An operation is stored as a stack of Kraus operators ``(L, D, D)``. Kraus
sets are not unique, so equality between operations or instruments is
always decided on Choi matrices (:func:`instruments_equal`), never on the
Kraus lists themselves.

Time reversal uses θ = complex conjugation in the computational basis, so
reversing an instrument conjugates every Kraus operator.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels
from .errors import DimensionError, InstrumentError, NotCompletelyPositiveError
from .hamiltonian import SpectralHamiltonian
from .operator_core import (
    as_rng,
    choi,
    choi_from_map,
    haar_unitary,
    kraus_from_choi,
    max_abs,
    min_eigenvalue,
)
from .serialization import matrix_from_json, matrix_to_json
from .tolerances import DEFAULT

__all__ = [
    "QuantumOperation",
    "Channel",
    "Instrument",
    "apply",
    "effect",
    "error_matrix",
    "is_error_free",
    "effects_are_projectors",
    "nonselective",
    "is_unital",
    "time_reverse_instrument",
    "instruments_equal",
    "build_projective",
    "build_error_free",
    "build_crooks",
    "build_jii",
    "build_ji_erroneous",
    "build_outcome_mixed",
    "depolarizing",
    "transpose_depolarizing",
    "constant_channel",
    "identity_channel",
    "unitary_channel",
    "random_channel",
    "random_unital_channel",
    "channel_from_map",
    "degenerate_doubly_stochastic",
]


def _stack(kraus) -> np.ndarray:
    if isinstance(kraus, np.ndarray) and kraus.ndim == 2:
        kraus = kraus[np.newaxis]
    mats = [np.asarray(k, dtype=np.complex128) for k in kraus]
    if not mats:
        raise DimensionError("an operation needs at least one Kraus operator")
    first = mats[0].shape
    for i, k in enumerate(mats):
        if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape != first:
            raise DimensionError(f"Kraus operator {i} has shape {k.shape}, expected square {first}")
    out = np.ascontiguousarray(np.stack(mats))
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class QuantumOperation:
    """CP, trace-nonincreasing map ρ ↦ Σ_l B_l ρ B_l^†."""

    kraus: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "kraus", _stack(self.kraus))
        self._check()

    def _check(self, tol: float = DEFAULT.trace_preserving):
        eff = self.effect()
        top = np.linalg.eigvalsh(eff)[-1]
        if top > 1 + tol:
            raise InstrumentError(f"operation is trace-increasing: largest effect eigenvalue {top:.6g}")

    @property
    def dim(self) -> int:
        return int(self.kraus.shape[1])

    def apply(self, rho) -> np.ndarray:
        rho = np.ascontiguousarray(rho, dtype=np.complex128)
        if rho.shape != (self.dim, self.dim):
            raise DimensionError(f"state shape {rho.shape} does not match operation dimension {self.dim}")
        return _kernels.apply_kraus(np.ascontiguousarray(self.kraus), rho)

    def dual(self, x) -> np.ndarray:
        """Heisenberg-picture map X ↦ Σ_l B_l^† X B_l."""
        x = np.asarray(x, dtype=np.complex128)
        return np.einsum("lji,jk,lkm->im", self.kraus.conj(), x, self.kraus)

    def effect(self) -> np.ndarray:
        return np.einsum("lji,ljk->ik", self.kraus.conj(), self.kraus)

    def choi(self) -> np.ndarray:
        return choi(self.kraus)

    def conjugated(self) -> "QuantumOperation":
        return type(self)(self.kraus.conj())

    def then(self, other: "QuantumOperation") -> "QuantumOperation":
        """Composition ``other ∘ self`` (apply self first)."""
        if other.dim != self.dim:
            raise DimensionError("cannot compose operations of different dimension")
        prods = np.einsum("aij,bjk->abik", other.kraus, self.kraus).reshape(-1, self.dim, self.dim)
        return QuantumOperation(prods)


class Channel(QuantumOperation):
    """Trace-preserving operation."""

    def _check(self, tol: float = DEFAULT.trace_preserving):
        dev = max_abs(self.effect() - np.eye(self.dim))
        if dev > tol:
            raise InstrumentError(f"channel is not trace preserving: max|Σ B^†B - 1| = {dev:.3e}")

    def is_unital(self, tol: float = DEFAULT.unital) -> bool:
        return is_unital(self, tol)


@dataclass(frozen=True, eq=False)
class Instrument:
    """Outcome-indexed operations whose effects sum to the identity."""

    operations: tuple
    labels: tuple = ()

    def __post_init__(self):
        ops = tuple(op if isinstance(op, QuantumOperation) else QuantumOperation(op)
                    for op in self.operations)
        if not ops:
            raise InstrumentError("an instrument needs at least one outcome")
        dims = {op.dim for op in ops}
        if len(dims) != 1:
            raise DimensionError(f"operations have different dimensions {sorted(dims)}")
        labels = tuple(self.labels) if self.labels else tuple(range(len(ops)))
        if len(labels) != len(ops):
            raise InstrumentError("need one label per outcome")
        object.__setattr__(self, "operations", ops)
        object.__setattr__(self, "labels", labels)
        dev = max_abs(self.effects().sum(axis=0) - np.eye(self.dim))
        if dev > DEFAULT.trace_preserving:
            raise InstrumentError(f"effects do not sum to the identity: max deviation {dev:.3e}")

    @property
    def dim(self) -> int:
        return self.operations[0].dim

    def __len__(self) -> int:
        return len(self.operations)

    def __getitem__(self, n) -> QuantumOperation:
        return self.operations[n]

    def effects(self) -> np.ndarray:
        return np.stack([op.effect() for op in self.operations])

    def choi_matrices(self) -> np.ndarray:
        return np.stack([op.choi() for op in self.operations])

    def packed(self) -> tuple[np.ndarray, np.ndarray]:
        """All Kraus operators stacked, plus outcome offsets (for the kernels)."""
        counts = [op.kraus.shape[0] for op in self.operations]
        offsets = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
        return np.ascontiguousarray(np.concatenate([op.kraus for op in self.operations])), offsets

    def outcome_states(self, rho) -> np.ndarray:
        """φ_n(ρ) for every outcome n, shape (N, D, D)."""
        kraus, offsets = self.packed()
        return _kernels.apply_outcomes(kraus, offsets, np.ascontiguousarray(rho, dtype=np.complex128))

    def to_json_dict(self) -> dict:
        return {
            "outcomes": [
                {"label": label, "kraus": [matrix_to_json(k) for k in op.kraus]}
                for label, op in zip(self.labels, self.operations)
            ]
        }

    @classmethod
    def from_json_dict(cls, data: dict, path: str = "instrument") -> "Instrument":
        from .errors import ConfigError

        try:
            outcomes = data["outcomes"]
        except (KeyError, TypeError):
            raise ConfigError(path, "missing 'outcomes'") from None
        ops, labels = [], []
        for i, item in enumerate(outcomes):
            kraus = [matrix_from_json(k, f"{path}.outcomes[{i}].kraus[{j}]")
                     for j, k in enumerate(item.get("kraus", []))]
            if not kraus:
                raise ConfigError(f"{path}.outcomes[{i}].kraus", "empty Kraus list")
            try:
                ops.append(QuantumOperation(kraus))
            except (DimensionError, InstrumentError) as exc:
                raise ConfigError(f"{path}.outcomes[{i}]", str(exc)) from None
            labels.append(item.get("label", i))
        try:
            return cls(tuple(ops), tuple(labels))
        except (DimensionError, InstrumentError) as exc:
            raise ConfigError(path, str(exc)) from None


# ---------------------------------------------------------------------------
# basic queries
# ---------------------------------------------------------------------------


def apply(op: QuantumOperation, rho) -> np.ndarray:
    return op.apply(rho)


def effect(op: QuantumOperation) -> np.ndarray:
    return op.effect()


def _require_matching(instr: Instrument, h: SpectralHamiltonian) -> None:
    if len(instr) != h.n_levels:
        raise DimensionError(f"instrument has {len(instr)} outcomes but the Hamiltonian has {h.n_levels} levels")
    if instr.dim != h.dim:
        raise DimensionError(f"instrument dimension {instr.dim} != Hamiltonian dimension {h.dim}")


def error_matrix(instr: Instrument, h: SpectralHamiltonian) -> np.ndarray:
    """p(m|n) = Tr φ_m(Π_n / d_n); columns are indexed by the true level n."""
    _require_matching(instr, h)
    traces = _kernels.pair_traces(np.ascontiguousarray(instr.effects()),
                                  np.ascontiguousarray(h.projectors, dtype=np.complex128))
    return traces / h.degeneracies[np.newaxis, :]


def effects_are_projectors(instr: Instrument, h: SpectralHamiltonian, tol: float = DEFAULT.error_free) -> bool:
    _require_matching(instr, h)
    return max_abs(instr.effects() - h.projectors) <= tol


def is_error_free(instr: Instrument, h: SpectralHamiltonian, tol: float = DEFAULT.error_free) -> bool:
    """``max|p(m|n) - δ_mn| <= tol``.

    A PSD effect with ``Tr E_m Π_n <= ε`` for n ≠ m has off-diagonal blocks of
    size at most √ε, so when the error matrix passes the effects must agree
    with the projectors to within ``√tol``; anything else means the input is
    not a valid instrument and is reported as such.
    """
    err = error_matrix(instr, h)
    ok = max_abs(err - np.eye(h.n_levels)) <= tol
    if ok:
        dev = max_abs(instr.effects() - h.projectors)
        if dev > 10 * np.sqrt(tol) * max(1, h.dim):
            raise InstrumentError(
                f"error matrix is the identity but effects deviate from the projectors by {dev:.3e}"
            )
    return ok


def nonselective(instr: Instrument) -> QuantumOperation:
    """Φ = Σ_n φ_n as a single operation (a channel for a complete instrument)."""
    kraus, _ = instr.packed()
    return Channel(kraus)


def is_unital(ch: QuantumOperation, tol: float = DEFAULT.unital) -> bool:
    return max_abs(ch.apply(np.eye(ch.dim, dtype=np.complex128)) - np.eye(ch.dim)) <= tol


def time_reverse_instrument(instr: Instrument) -> Instrument:
    return Instrument(tuple(op.conjugated() for op in instr.operations), instr.labels)


def instruments_equal(a: Instrument, b: Instrument, tol: float = 1e-10) -> bool:
    if len(a) != len(b) or a.dim != b.dim:
        return False
    return max_abs(a.choi_matrices() - b.choi_matrices()) <= tol


# ---------------------------------------------------------------------------
# channels
# ---------------------------------------------------------------------------


def _cp_kraus(fn: Callable[[np.ndarray], np.ndarray], dim: int, what: str,
              tol: float = DEFAULT.psd) -> np.ndarray:
    j = choi_from_map(fn, dim)
    lo = min_eigenvalue(j)
    if lo < -tol * max(1.0, max_abs(j)):
        raise NotCompletelyPositiveError(
            f"{what} is not completely positive: Choi matrix has eigenvalue {lo:.6g}", lo
        )
    return kraus_from_choi(j)


def channel_from_map(fn: Callable[[np.ndarray], np.ndarray], dim: int, name: str = "map") -> Channel:
    """Kraus realization of a linear map via its Choi eigendecomposition."""
    return Channel(_cp_kraus(fn, dim, name))


def depolarizing(alpha: float, dim: int) -> Channel:
    """ρ ↦ (1-α) Tr ρ / D · 1 + α ρ; CP exactly for -1/(D²-1) <= α <= 1."""
    eye = np.eye(dim)

    def action(x):
        return (1 - alpha) * np.trace(x) / dim * eye + alpha * x

    return Channel(_cp_kraus(action, dim, f"depolarizing channel with alpha={alpha:g}"))


def transpose_depolarizing(alpha: float, dim: int) -> Channel:
    """ρ ↦ (1-α) Tr ρ / D · 1 + α ρ^T (transpose in the computational basis)."""
    eye = np.eye(dim)

    def action(x):
        return (1 - alpha) * np.trace(x) / dim * eye + alpha * x.T

    return Channel(_cp_kraus(action, dim, f"transpose depolarizing channel with alpha={alpha:g}"))


def identity_channel(dim: int) -> Channel:
    return Channel(np.eye(dim, dtype=np.complex128)[np.newaxis])


def unitary_channel(u) -> Channel:
    return Channel(np.asarray(u, dtype=np.complex128)[np.newaxis])


def constant_channel(state) -> Channel:
    """ρ ↦ Tr ρ · σ. ``state`` may be a density matrix or a level index of the
    computational basis given together with a dimension as ``(index, dim)``."""
    if isinstance(state, tuple):
        index, dim = state
        sigma = np.zeros((dim, dim), dtype=np.complex128)
        sigma[index, index] = 1.0
    else:
        sigma = np.asarray(state, dtype=np.complex128)
    dim = sigma.shape[0]
    evals, evecs = np.linalg.eigh(sigma)
    kraus = []
    for lam, v in zip(evals, evecs.T):
        if lam > DEFAULT.kraus_cutoff:
            for i in range(dim):
                k = np.zeros((dim, dim), dtype=np.complex128)
                k[:, i] = np.sqrt(lam) * v
                kraus.append(k)
    return Channel(kraus)


def random_channel(dim: int, n_kraus: int = 2, seed=None) -> Channel:
    """Kraus operators cut from a Haar isometry C^D -> C^(n_kraus·D)."""
    u = haar_unitary(dim * n_kraus, seed)
    iso = u[:, :dim]
    return Channel(iso.reshape(n_kraus, dim, dim))


def random_unital_channel(dim: int, n_terms: int = 3, seed=None) -> Channel:
    """Random mixture of Haar unitaries (unital by construction)."""
    rng = as_rng(seed)
    probs = rng.dirichlet(np.ones(n_terms))
    kraus = [np.sqrt(p) * haar_unitary(dim, rng) for p in probs]
    return Channel(kraus)


# ---------------------------------------------------------------------------
# instrument builders
# ---------------------------------------------------------------------------


def build_projective(h: SpectralHamiltonian) -> Instrument:
    return Instrument(tuple(QuantumOperation(p) for p in h.projectors))


def build_error_free(h: SpectralHamiltonian, channels) -> Instrument:
    """φ_m(ρ) = ℰ_m(Π_m ρ Π_m): projective measurement, then channel ℰ_m.

    ``channels`` is one channel per level, or a single channel used for all.
    """
    if isinstance(channels, QuantumOperation):
        channels = [channels] * h.n_levels
    channels = list(channels)
    if len(channels) != h.n_levels:
        raise DimensionError(f"need {h.n_levels} channels, got {len(channels)}")
    ops = []
    for m, ch in enumerate(channels):
        if ch.dim != h.dim:
            raise DimensionError(f"channel {m} has dimension {ch.dim}, expected {h.dim}")
        ops.append(QuantumOperation(np.einsum("lij,jk->lik", ch.kraus, h.projectors[m])))
    return Instrument(tuple(ops))


def build_crooks(h: SpectralHamiltonian, alpha: float, variant: str = "instrument") -> Instrument:
    """φ_n(ρ) = (1-α) Tr(Π_n ρ)/D · 1 + α Π_n ρ Π_n.

    ``variant="instrument"`` validates complete positivity of each φ_n
    directly (for nondegenerate H this is -1/(D-1) <= α <= 1).
    ``variant="universal"`` realizes the same action as a projective
    measurement followed by the depolarizing channel, which needs the
    channel itself to be CP: -1/(D²-1) <= α <= 1.
    """
    dim = h.dim
    if variant == "universal":
        return build_error_free(h, depolarizing(alpha, dim))
    if variant != "instrument":
        raise ValueError(f"unknown variant {variant!r}")
    eye = np.eye(dim)
    ops = []
    for n, proj in enumerate(h.projectors):
        def action(x, proj=proj):
            return (1 - alpha) * np.trace(proj @ x) / dim * eye + alpha * proj @ x @ proj

        ops.append(QuantumOperation(_cp_kraus(action, dim, f"crooks outcome {n} with alpha={alpha:g}")))
    return Instrument(tuple(ops))


def build_jii(h: SpectralHamiltonian) -> Instrument:
    """Effects (d_m / D)·1, realized by single Kraus operators √(d_m/D)·1."""
    eye = np.eye(h.dim, dtype=np.complex128)
    return Instrument(tuple(QuantumOperation(np.sqrt(d / h.dim) * eye) for d in h.degeneracies))


def build_ji_erroneous(basis, q, degeneracies=None, tol: float = 1e-12) -> Instrument:
    """Outcome m has the single Kraus operator √E_m, E_m = Σ_i Q(m|i)|ψ_i><ψ_i|.

    ``basis`` holds the orthonormal vectors ψ_i as columns; ``q[m, i]`` is
    the stochastic matrix. Columns of ``q`` must sum to one, and row m must
    sum to d_m (taken from ``degeneracies`` when given, otherwise required to
    be a positive integer).
    """
    basis = np.asarray(basis, dtype=np.complex128)
    q = np.asarray(q, dtype=float)
    dim = basis.shape[0]
    if basis.shape != (dim, dim):
        raise DimensionError("basis must be a square matrix of column vectors")
    if max_abs(basis.conj().T @ basis - np.eye(dim)) > 1e-10:
        raise InstrumentError("basis vectors are not orthonormal")
    if q.ndim != 2 or q.shape[1] != dim:
        raise DimensionError(f"Q must have shape (n_outcomes, {dim}), got {q.shape}")
    if np.any(q < -tol):
        bad = np.argwhere(q < -tol)[0]
        raise InstrumentError(f"Q has a negative entry at (m={bad[0]}, i={bad[1]})")
    col = q.sum(axis=0)
    for i, s in enumerate(col):
        if abs(s - 1) > tol:
            raise InstrumentError(f"column i={i} of Q sums to {s:.15g}, not 1")
    rows = q.sum(axis=1)
    if degeneracies is not None:
        degeneracies = np.asarray(degeneracies)
        if degeneracies.shape != rows.shape:
            raise DimensionError("need one degeneracy per outcome")
        targets = degeneracies
    else:
        targets = np.round(rows)
        targets[targets < 1] = 1
    for m, (s, d) in enumerate(zip(rows, targets)):
        if abs(s - d) > tol:
            raise InstrumentError(f"row m={m} of Q sums to {s:.15g}, expected degeneracy {d}")
    q = np.clip(q, 0.0, None)
    ops = []
    for m in range(q.shape[0]):
        root = (basis * np.sqrt(q[m])[np.newaxis, :]) @ basis.conj().T
        ops.append(QuantumOperation(root))
    return Instrument(tuple(ops))


def build_outcome_mixed(h: SpectralHamiltonian, epsilon: float) -> Instrument:
    """Projective measurement whose reported outcome is wrong with probability ε.

    φ_n(ρ) = Σ_k Q(n|k) Π_k ρ Π_k with Q(k|k) = 1-ε and the remaining mass
    spread evenly over the other outcomes.
    """
    n_lev = h.n_levels
    if n_lev == 1:
        return build_projective(h)
    q = np.full((n_lev, n_lev), epsilon / (n_lev - 1))
    np.fill_diagonal(q, 1 - epsilon)
    ops = []
    for n in range(n_lev):
        kraus = [np.sqrt(q[n, k]) * h.projectors[k] for k in range(n_lev) if q[n, k] > 0]
        ops.append(QuantumOperation(kraus))
    return Instrument(tuple(ops))


def degenerate_doubly_stochastic(degeneracies, n_perms: int = 2, seed=None) -> np.ndarray:
    """Random Q(m|i) with unit column sums and row sums d_m.

    A convex mixture of column permutations of the level-membership matrix;
    for a nondegenerate spectrum this is a random doubly stochastic matrix.
    """
    rng = as_rng(seed)
    degs = np.asarray(degeneracies, dtype=int)
    dim = int(degs.sum())
    member = np.zeros((degs.size, dim))
    pos = 0
    for m, d in enumerate(degs):
        member[m, pos:pos + d] = 1.0
        pos += d
    weights = rng.dirichlet(np.ones(n_perms))
    q = np.zeros_like(member)
    for w in weights:
        q += w * member[:, rng.permutation(dim)]
    return q
