"""Numerical experiments on the trace-constancy and Crooks-form lemmas and
on the error-free effect theorem.

"For every unitary" is sampled here (Haar draws plus unitaries suggested by
the proofs), so a passing experiment is evidence, not proof.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels
from .errors import DimensionError, InstrumentError
from .hamiltonian import SpectralHamiltonian, nondegenerate_difference_spectrum
from .instrument import Instrument, effects_are_projectors, error_matrix, is_error_free
from .operator_core import as_matrix, as_rng, check_hermitian, haar_unitaries, max_abs
from .serialization import input_hash, matrix_to_json, to_jsonable
from .tolerances import DEFAULT
from .verifier import CheckReport, _report

__all__ = [
    "EnsembleStats",
    "Lemma3Verdict",
    "Lemma4Fit",
    "lemma3_trace_value",
    "lemma3_trace_scan",
    "lemma3_classify",
    "lemma4_sides",
    "lemma4_check",
    "lemma4_fit",
    "family_pair",
    "unitary_mapping",
    "appendixA_effect_check",
    "experiment_record",
]


@dataclass
class EnsembleStats:
    """Spread of a scalar over an ensemble of unitaries.

    ``witness_min`` / ``witness_max`` are the unitaries attaining the extremes.
    """

    count: int
    min: float
    max: float
    mean: float
    std: float
    witness_min: np.ndarray = field(repr=False)
    witness_max: np.ndarray = field(repr=False)

    @property
    def spread(self) -> float:
        return self.max - self.min

    @classmethod
    def from_values(cls, values: np.ndarray, unitaries: np.ndarray) -> "EnsembleStats":
        lo, hi = int(np.argmin(values)), int(np.argmax(values))
        return cls(int(values.size), float(values[lo]), float(values[hi]), float(values.mean()),
                   float(values.std()), unitaries[lo].copy(), unitaries[hi].copy())

    def to_dict(self) -> dict:
        return to_jsonable({
            "count": self.count, "min": self.min, "max": self.max, "mean": self.mean,
            "std": self.std, "spread": self.spread,
            "witness_min": matrix_to_json(self.witness_min),
            "witness_max": matrix_to_json(self.witness_max),
        })


def _hermitian_pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a, b = check_hermitian(a), check_hermitian(b)
    if a.shape != b.shape:
        raise DimensionError(f"operator shapes differ: {a.shape} vs {b.shape}")
    return a, b


def lemma3_trace_value(a, b, u) -> float:
    """Re Tr U^† A U B."""
    u = as_matrix(u)
    return float(np.trace(u.conj().T @ np.asarray(a) @ u @ np.asarray(b)).real)


def phase_unitaries(dim: int, count: int, seed=None, x_range=(0.1, 100.0)) -> np.ndarray:
    """U_x = Σ_k e^{i x φ_k} |f_k><f_k| with log-spaced x.

    The φ_k have pairwise distinct differences and each sample uses a fresh
    Haar basis {f_k}.
    """
    rng = as_rng(seed)
    phases = nondegenerate_difference_spectrum(dim, rng) * 2 * np.pi
    xs = np.logspace(np.log10(x_range[0]), np.log10(x_range[1]), max(count, 1))[:count]
    bases = haar_unitaries(count, dim, rng)
    diag = np.exp(1j * xs[:, np.newaxis] * phases[np.newaxis, :])
    return np.ascontiguousarray(np.einsum("sik,sk,sjk->sij", bases, diag, bases.conj()))


def lemma3_trace_scan(a, b, n_haar: int = 200, n_structured: int = 200, seed=None) -> EnsembleStats:
    """Tr U^† A U B over Haar unitaries followed by phase unitaries U_x."""
    a, b = _hermitian_pair(a, b)
    if n_haar + n_structured < 1:
        raise ValueError("need at least one sample")
    rng = as_rng(seed)
    dim = a.shape[0]
    us = np.concatenate([haar_unitaries(n_haar, dim, rng), phase_unitaries(dim, n_structured, rng)])
    us = np.ascontiguousarray(us)
    values = _kernels.conjugated_traces(np.ascontiguousarray(a), np.ascontiguousarray(b), us)
    return EnsembleStats.from_values(values, us)


def _is_scalar(m: np.ndarray, tol: float) -> bool:
    dim = m.shape[0]
    return max_abs(m - np.trace(m).real / dim * np.eye(dim)) <= tol


def rearrangement_unitaries(a, b) -> np.ndarray:
    """Unitaries aligning the eigenbases of A and B in equal and opposite order.

    With U = V_A V_B^†, Tr U^† A U B = Σ_i a_i b_i (eigenvalues ascending), the
    maximum over unitaries; reversing one order gives the minimum.
    """
    _, va = np.linalg.eigh(a)
    _, vb = np.linalg.eigh(b)
    aligned = va @ vb.conj().T
    opposed = va[:, ::-1] @ vb.conj().T
    return np.ascontiguousarray(np.stack([aligned, opposed]))


@dataclass
class Lemma3Verdict:
    verdict: str  # "constant-compatible" or "non-constant-witnessed"
    constant: float | None
    scan: EnsembleStats
    witness: np.ndarray | None = field(default=None, repr=False)
    witness_deviation: float = 0.0
    consistent: bool = True
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return to_jsonable({
            "verdict": self.verdict,
            "constant": self.constant,
            "scan": self.scan.to_dict(),
            "witness": None if self.witness is None else matrix_to_json(self.witness),
            "witness_deviation": self.witness_deviation,
            "consistent": self.consistent,
            "notes": self.notes,
        })


def lemma3_classify(a, b, tol: float = 1e-10, n_haar: int = 200, n_structured: int = 200,
                    seed=None) -> Lemma3Verdict:
    """Decide whether Tr U^† A U B can be U-independent.

    The verdict comes from the algebraic test (A or B a multiple of the
    identity, zero included) at ``tol`` relative to max(1, max|entry|). The
    sampled scan, augmented with the two rearrangement unitaries, supplies the
    witness for the non-constant case and a consistency cross-check.
    """
    a, b = _hermitian_pair(a, b)
    dim = a.shape[0]
    scan = lemma3_trace_scan(a, b, n_haar, n_structured, seed)
    extra = rearrangement_unitaries(a, b)
    extra_vals = _kernels.conjugated_traces(np.ascontiguousarray(a), np.ascontiguousarray(b), extra)
    a_scalar = _is_scalar(a, tol * max(1.0, max_abs(a)))
    b_scalar = _is_scalar(b, tol * max(1.0, max_abs(b)))

    if a_scalar or b_scalar:
        constant = float(np.trace(a).real * np.trace(b).real / dim)
        spread = max(scan.max, *extra_vals) - min(scan.min, *extra_vals)
        consistent = spread <= 10 * tol * max(1.0, max_abs(a)) * max(1.0, max_abs(b)) * dim
        notes = [] if consistent else [f"scan spread {spread:.3e} exceeds the tolerance budget"]
        return Lemma3Verdict("constant-compatible", constant, scan, consistent=consistent, notes=notes)

    candidates = np.concatenate([scan.witness_min[None], scan.witness_max[None], extra])
    values = np.array([scan.min, scan.max, *extra_vals])
    deviations = np.abs(values - scan.mean)
    k = int(np.argmax(deviations))
    consistent = bool(deviations[k] > tol)
    notes = [] if consistent else ["no sampled unitary deviates from the mean by more than tol"]
    return Lemma3Verdict("non-constant-witnessed", None, scan, candidates[k].copy(),
                         float(deviations[k]), consistent, notes)


def lemma4_sides(rho, sigma, a, b, u) -> tuple[float, float]:
    """(<a|U^† ρ U|a>, <b|U σ U^†|b>)."""
    u = as_matrix(u)
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    ua = u @ a
    udb = u.conj().T @ b
    return (float(np.vdot(ua, np.asarray(rho) @ ua).real),
            float(np.vdot(udb, np.asarray(sigma) @ udb).real))


def unitary_mapping(src, dst) -> np.ndarray:
    """A unitary U with U|src> = |dst> for unit vectors src and dst."""
    def completed(v):
        v = np.asarray(v, dtype=np.complex128)
        v = v / np.linalg.norm(v)
        q, _ = np.linalg.qr(np.column_stack([v, np.eye(v.size, dtype=np.complex128)]))
        q = q[:, : v.size].copy()
        q[:, 0] = v  # Q's first column is v up to a phase; pin it exactly
        return q
    return completed(dst) @ completed(src).conj().T


def _structured_lemma4(rho, sigma, a, b) -> np.ndarray:
    _, v_rho = np.linalg.eigh(rho)
    _, v_sigma = np.linalg.eigh(sigma)
    maps = [unitary_mapping(a, v_rho[:, k]) for k in range(v_rho.shape[1])]
    # U^† |b> = w_k  <=>  U |w_k> = |b>
    maps += [unitary_mapping(v_sigma[:, k], b) for k in range(v_sigma.shape[1])]
    maps.append(unitary_mapping(a, b))
    maps.append(np.eye(rho.shape[0], dtype=np.complex128))
    return np.stack(maps)


def _unit(v, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.complex128).ravel()
    n = np.linalg.norm(v)
    if n == 0:
        raise ValueError(f"{name} must be nonzero")
    return v / n


def lemma4_check(rho, sigma, a, b, n_samples: int = 1000, seed=None) -> EnsembleStats:
    """|<a|U^† ρ U|a> - <b|U σ U^†|b>| over Haar and proof-structured unitaries."""
    rho, sigma = _hermitian_pair(rho, sigma)
    dim = rho.shape[0]
    a, b = _unit(a, "a"), _unit(b, "b")
    if a.size != dim or b.size != dim:
        raise DimensionError("vectors and states differ in dimension")
    us = np.ascontiguousarray(np.concatenate([_structured_lemma4(rho, sigma, a, b),
                                              haar_unitaries(n_samples, dim, seed)]))
    sides = _kernels.lemma4_sides(np.ascontiguousarray(rho), np.ascontiguousarray(sigma),
                                  np.ascontiguousarray(a), np.ascontiguousarray(b), us)
    return EnsembleStats.from_values(np.abs(sides[:, 0] - sides[:, 1]), us)


def family_pair(alpha: float, a, b) -> tuple[np.ndarray, np.ndarray]:
    """((1-α)/D 1 + α|b><b|, (1-α)/D 1 + α|a><a|)."""
    a, b = _unit(a, "a"), _unit(b, "b")
    dim = a.size
    eye = np.eye(dim, dtype=np.complex128)
    return ((1 - alpha) / dim * eye + alpha * np.outer(b, b.conj()),
            (1 - alpha) / dim * eye + alpha * np.outer(a, a.conj()))


class Lemma4Fit(NamedTuple):
    alpha: float
    residual: float
    in_range: bool


def lemma4_fit(rho, sigma, a, b) -> Lemma4Fit:
    """Least-squares α for the pair form, fitting ρ and σ jointly.

    Minimizes ‖ρ - 1/D - α P_b‖² + ‖σ - 1/D - α P_a‖² (Frobenius) with
    P_x = |x><x| - 1/D; the residual is the square root of the minimum.
    """
    rho, sigma = _hermitian_pair(rho, sigma)
    dim = rho.shape[0]
    a, b = _unit(a, "a"), _unit(b, "b")
    eye = np.eye(dim) / dim
    p_b = np.outer(b, b.conj()) - eye
    p_a = np.outer(a, a.conj()) - eye
    r0, s0 = rho - eye, sigma - eye
    denom = np.vdot(p_b, p_b).real + np.vdot(p_a, p_a).real
    alpha = 0.0 if denom == 0 else (np.vdot(p_b, r0).real + np.vdot(p_a, s0).real) / denom
    resid = np.sqrt(np.linalg.norm(r0 - alpha * p_b) ** 2 + np.linalg.norm(s0 - alpha * p_a) ** 2)
    lo = -1.0 / (dim - 1) if dim > 1 else -np.inf
    in_range = bool(lo - 1e-12 <= alpha <= 1.0 + 1e-12)
    return Lemma4Fit(float(alpha), float(resid), in_range)


def appendixA_effect_check(instr: Instrument, h: SpectralHamiltonian,
                           tol: float = DEFAULT.error_free) -> CheckReport:
    """Both sides of: error-free ⟺ every effect equals its level projector."""
    projectors = effects_are_projectors(instr, h, tol)
    err_dev = max_abs(error_matrix(instr, h) - np.eye(h.n_levels))
    effect_dev = max_abs(instr.effects() - h.projectors)
    notes = []
    try:
        error_free = is_error_free(instr, h, tol)
    except InstrumentError as exc:
        error_free = True
        notes.append(str(exc))
    diagnostics = [{"error_matrix_deviation": err_dev, "effect_deviation": effect_dev,
                    "is_error_free": error_free, "effects_are_projectors": projectors}]
    return _report("appendix_a_effects", float(error_free), float(projectors),
                   float(error_free != projectors), tol, diagnostics, notes)


def experiment_record(kind: str, inputs: dict, seed, result: dict) -> dict:
    """JSON-ready record with a hash of the canonicalized inputs."""
    inputs = to_jsonable(inputs)
    return {"experiment": kind, "seed": seed, "input_hash": input_hash(inputs),
            "inputs": inputs, "result": to_jsonable(result)}
