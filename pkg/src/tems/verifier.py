"""Fluctuation-theorem checks and certifiers for measurement instruments."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from .errors import DimensionError, TemsError
from .hamiltonian import SpectralHamiltonian
from .instrument import (
    Instrument,
    error_matrix,
    is_error_free,
    nonselective,
    time_reverse_instrument,
)
from .operator_core import choi, choi_from_map, max_abs, min_eigenvalue
from .protocol import Protocol, time_reversed
from .serialization import matrix_to_json, to_jsonable
from .tolerances import DEFAULT
from .work_stats import (
    conditional_table,
    default_work_tol,
    exp_average,
    joint_table,
    work_distribution,
)

__all__ = [
    "Scenario",
    "CheckReport",
    "AlphaFit",
    "log_partition_function",
    "free_energy_ratio",
    "check_jarzynski",
    "check_backward_jarzynski",
    "check_crooks",
    "check_detailed_balance",
    "check_condition_Ji",
    "check_condition_Jii",
    "certify_jarzynski",
    "certify_crooks",
    "fit_depolarizing_alpha",
    "CHECKS",
]


@dataclass(frozen=True, eq=False)
class Scenario:
    protocol: Protocol
    instr0: Instrument
    instr_tau: Instrument
    beta: float

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        p = self.protocol
        if len(self.instr0) != p.h_initial.n_levels or len(self.instr_tau) != p.h_final.n_levels:
            raise DimensionError("instrument outcome counts must match the Hamiltonian level counts")
        if self.instr0.dim != p.dim or self.instr_tau.dim != p.dim:
            raise DimensionError("instrument and protocol dimensions differ")

    @property
    def dim(self) -> int:
        return self.protocol.dim

    def reversed(self) -> "Scenario":
        """Backward process: reversed protocol, reversed instruments in swapped order."""
        return Scenario(
            time_reversed(self.protocol),
            time_reverse_instrument(self.instr_tau),
            time_reverse_instrument(self.instr0),
            self.beta,
        )

    def with_dynamics(self, dynamics) -> "Scenario":
        return replace(self, protocol=self.protocol.with_dynamics(dynamics))

    def scaled(self, x_initial: float = 1.0, x_final: float = 1.0) -> "Scenario":
        """Rescale the energies; eigenprojectors (and hence instruments) stay put."""
        p = self.protocol
        return replace(self, protocol=Protocol(p.h_initial.scaled(x_initial),
                                               p.h_final.scaled(x_final), p.dynamics))

    def to_json_dict(self) -> dict:
        p = self.protocol
        dyn: dict[str, Any]
        if p.is_unitary:
            dyn = {"type": "unitary", "matrix": matrix_to_json(p.dynamics)}
        else:
            dyn = {"type": "channel", "kraus": [matrix_to_json(k) for k in p.dynamics.kraus]}
        return {
            "beta": float(self.beta),
            "hamiltonians": {
                "initial": _hamiltonian_json(p.h_initial),
                "final": _hamiltonian_json(p.h_final),
            },
            "dynamics": dyn,
            "instruments": {
                "initial": {"builder": "explicit", **self.instr0.to_json_dict()},
                "final": {"builder": "explicit", **self.instr_tau.to_json_dict()},
            },
        }


def _hamiltonian_json(h: SpectralHamiltonian) -> dict:
    return {"energies": [float(e) for e in h.energies],
            "degeneracies": [int(d) for d in h.degeneracies],
            "basis": matrix_to_json(h.basis)}


@dataclass
class CheckReport:
    """Outcome of one check. ``passed`` is ``residual <= tolerance``."""

    check: str
    expected: float
    actual: float
    abs_residual: float
    rel_residual: float
    residual: float
    tolerance: float
    passed: bool
    diagnostics: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return to_jsonable({
            "check": self.check,
            "expected": self.expected,
            "actual": self.actual,
            "abs_residual": self.abs_residual,
            "rel_residual": self.rel_residual,
            "residual": self.residual,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "diagnostics": self.diagnostics,
            "notes": self.notes,
        })


def _report(name, expected, actual, residual, tol, diagnostics=None, notes=None) -> CheckReport:
    abs_res = abs(actual - expected)
    rel_res = abs_res / abs(expected) if expected != 0 else abs_res
    return CheckReport(name, float(expected), float(actual), float(abs_res), float(rel_res),
                       float(residual), float(tol), bool(residual <= tol),
                       diagnostics or [], notes or [])


def log_partition_function(h: SpectralHamiltonian, beta: float) -> float:
    e0 = h.energies[0]
    return float(-beta * e0 + np.log(np.sum(h.degeneracies * np.exp(-beta * (h.energies - e0)))))


def free_energy_ratio(p: Protocol, beta: float) -> float:
    """e^{-βΔF} = Z(τ) / Z(0)."""
    return float(np.exp(log_partition_function(p.h_final, beta) - log_partition_function(p.h_initial, beta)))


def _exp_average_of(s: Scenario) -> float:
    table = joint_table(s.protocol, s.instr0, s.instr_tau, s.beta)
    return exp_average(work_distribution(table), s.beta)


def check_jarzynski(s: Scenario, tol: float = DEFAULT.jarzynski) -> CheckReport:
    expected = free_energy_ratio(s.protocol, s.beta)
    actual = _exp_average_of(s)
    rel = abs(actual - expected) / expected
    return _report("jarzynski", expected, actual, rel, tol)


def check_backward_jarzynski(s: Scenario, tol: float = DEFAULT.jarzynski) -> CheckReport:
    back = s.reversed()
    expected = 1.0 / free_energy_ratio(s.protocol, s.beta)
    actual = _exp_average_of(back)
    rel = abs(actual - expected) / expected
    return _report("backward_jarzynski", expected, actual, rel, tol)


def _rel(a: float, b: float, floor: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def check_crooks(s: Scenario, tol: float = DEFAULT.crooks, work_tol: float | None = None,
                 mass_floor: float = DEFAULT.mass_floor) -> CheckReport:
    """p_Λ(w) = e^{-β(ΔF - w)} p_Λ̄(-w), point by point.

    Each forward support point is paired with the backward point at -w
    (within ``work_tol``); unpaired points on either side are compared with
    zero. The residual is the largest per-point relative difference, with
    ``mass_floor`` as the smallest denominator.
    """
    if not s.protocol.is_unitary:
        raise TemsError("the Crooks check needs unitary dynamics")
    fwd_table = joint_table(s.protocol, s.instr0, s.instr_tau, s.beta)
    back = s.reversed()
    bwd_table = joint_table(back.protocol, back.instr0, back.instr_tau, s.beta)
    if work_tol is None:
        work_tol = max(default_work_tol(fwd_table), default_work_tol(bwd_table))
    fwd = work_distribution(fwd_table, work_tol)
    bwd = work_distribution(bwd_table, work_tol)
    log_ratio = log_partition_function(s.protocol.h_final, s.beta) - log_partition_function(
        s.protocol.h_initial, s.beta)  # -βΔF
    used = np.zeros(len(bwd), dtype=bool)
    rows = []
    for w, pf in zip(fwd.values, fwd.probs):
        hits = np.flatnonzero(np.abs(bwd.values + w) <= work_tol)
        pb = float(bwd.probs[hits].sum()) if hits.size else 0.0
        used[hits] = True
        rhs = np.exp(log_ratio + s.beta * w) * pb
        rows.append({"w": float(w), "forward": float(pf), "backward_at_minus_w": pb,
                     "rhs": float(rhs), "rel_residual": _rel(pf, rhs, mass_floor),
                     "matched": bool(hits.size)})
    for wb, pb in zip(bwd.values[~used], bwd.probs[~used]):
        w = -wb
        rhs = np.exp(log_ratio + s.beta * w) * pb
        rows.append({"w": float(w), "forward": 0.0, "backward_at_minus_w": float(pb),
                     "rhs": float(rhs), "rel_residual": _rel(0.0, rhs, mass_floor),
                     "matched": False})
    worst = max(r["rel_residual"] for r in rows)
    total_f = float(np.sum([r["forward"] for r in rows]))
    total_r = float(np.sum([r["rhs"] for r in rows]))
    return _report("crooks", total_r, total_f, worst, tol, diagnostics=rows)


def detailed_balance_sides(s: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """Return (p_Λ(m,n|n) d_n(0), p_Λ̄(n,m|m) d_m(τ)) as (M, N) arrays."""
    fwd = conditional_table(s.protocol, s.instr0, s.instr_tau)
    back = s.reversed()
    bwd = conditional_table(back.protocol, back.instr0, back.instr_tau)
    d0 = s.protocol.h_initial.degeneracies
    dt = s.protocol.h_final.degeneracies
    n_idx = np.arange(d0.size)
    m_idx = np.arange(dt.size)
    lhs = fwd[:, n_idx, n_idx] * d0[np.newaxis, :]  # [m, n]
    rhs = (bwd[:, m_idx, m_idx] * dt[np.newaxis, :]).T  # bwd[n, m, m] -> [m, n]
    return lhs, rhs


def check_detailed_balance(s: Scenario, tol: float = DEFAULT.detailed_balance,
                           mass_floor: float = DEFAULT.mass_floor) -> CheckReport:
    lhs, rhs = detailed_balance_sides(s)
    denom = np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), mass_floor)
    rel = np.abs(lhs - rhs) / denom
    worst = float(rel.max())
    rows = [{"m": int(m), "n": int(n), "forward": float(lhs[m, n]), "backward": float(rhs[m, n]),
             "rel_residual": float(rel[m, n])}
            for m in range(lhs.shape[0]) for n in range(lhs.shape[1])]
    return _report("detailed_balance", float(rhs.sum()), float(lhs.sum()), worst, tol, diagnostics=rows)


# ---------------------------------------------------------------------------
# condition certifiers
# ---------------------------------------------------------------------------


def check_condition_Ji(instr0: Instrument, instr_tau: Instrument, h0: SpectralHamiltonian,
                       h_tau: SpectralHamiltonian, tol: float = DEFAULT.condition) -> CheckReport:
    """First measurement error free and unital; Tr E^τ_m = d_m(τ)."""
    err_res = max_abs(error_matrix(instr0, h0) - np.eye(h0.n_levels))
    phi = nonselective(instr0)
    unital_res = max_abs(phi.apply(np.eye(phi.dim, dtype=np.complex128)) - np.eye(phi.dim))
    if len(instr_tau) != h_tau.n_levels:
        raise DimensionError("second instrument outcome count != number of final levels")
    traces = np.trace(instr_tau.effects(), axis1=1, axis2=2).real
    trace_res = float(np.max(np.abs(traces - h_tau.degeneracies)))
    subs = [
        {"name": "first_error_free", "residual": err_res, "pass": err_res <= tol},
        {"name": "first_nonselective_unital", "residual": unital_res, "pass": unital_res <= tol},
        {"name": "second_effect_traces", "residual": trace_res, "pass": trace_res <= tol,
         "traces": traces.tolist()},
    ]
    worst = max(err_res, unital_res, trace_res)
    return _report("condition_Ji", 0.0, worst, worst, tol, diagnostics=subs)


def check_condition_Jii(instr_tau: Instrument, h_tau: SpectralHamiltonian, dim: int | None = None,
                        tol: float = DEFAULT.condition) -> CheckReport:
    """Effects of the second measurement equal (d_m/D)·1."""
    dim = h_tau.dim if dim is None else dim
    eye = np.eye(dim)
    effs = instr_tau.effects()
    devs = [max_abs(e - d / dim * eye) for e, d in zip(effs, h_tau.degeneracies)]
    worst = float(max(devs))
    rows = [{"m": m, "residual": float(r)} for m, r in enumerate(devs)]
    return _report("condition_Jii", 0.0, worst, worst, tol, diagnostics=rows)


def certify_jarzynski(s: Scenario, tol: float = DEFAULT.condition) -> CheckReport:
    """First measurement error free, and (Ji) or (Jii) for the pair."""
    p = s.protocol
    ji = check_condition_Ji(s.instr0, s.instr_tau, p.h_initial, p.h_final, tol)
    jii = check_condition_Jii(s.instr_tau, p.h_final, p.dim, tol)
    err_res = ji.diagnostics[0]["residual"]
    jii_res = max(err_res, jii.residual)
    worst = min(ji.residual, jii_res)
    subs = [{"name": "Ji", "residual": ji.residual, "pass": ji.passed, "detail": ji.diagnostics},
            {"name": "Jii", "residual": jii_res, "pass": jii_res <= tol, "detail": jii.diagnostics}]
    return _report("condition_jarzynski", 0.0, worst, worst, tol, diagnostics=subs)


@dataclass
class AlphaFit:
    alpha: float
    residual: float
    in_instrument_range: bool
    in_universal_range: bool
    error_free: bool
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return to_jsonable(self.__dict__)


def _crooks_family_chois(h: SpectralHamiltonian) -> tuple[np.ndarray, np.ndarray]:
    """Choi matrices of ρ ↦ Tr(Π_n ρ)/D·1 and ρ ↦ Π_n ρ Π_n, per level."""
    dim = h.dim
    eye = np.eye(dim)
    mixed, proj = [], []
    for pn in h.projectors:
        mixed.append(choi_from_map(lambda x, pn=pn: np.trace(pn @ x) / dim * eye, dim))
        proj.append(choi(pn))
    return np.array(mixed), np.array(proj)


def fit_depolarizing_alpha(instr: Instrument, h: SpectralHamiltonian,
                           tol: float = DEFAULT.error_free) -> AlphaFit:
    """Least-squares α for φ_n = (1-α) Tr(Π_n ·)/D·1 + α Π_n · Π_n over Choi matrices.

    The model is affine in α, J_n(α) = A_n + α (B_n - A_n), so the fit is a
    single projection. The residual is the Frobenius norm over all outcomes.
    """
    if len(instr) != h.n_levels:
        raise DimensionError("instrument outcome count != number of levels")
    dim = h.dim
    actual = instr.choi_matrices()
    a, b = _crooks_family_chois(h)
    direction = b - a
    denom = float(np.sum(np.abs(direction) ** 2))
    notes = []
    if denom == 0.0:
        alpha = 1.0
        notes.append("one-dimensional system: every alpha gives the same operation")
    else:
        alpha = float(np.real(np.vdot(direction, actual - a)) / denom)
    resid = float(np.sqrt(np.sum(np.abs(actual - a - alpha * direction) ** 2)))
    try:
        ef = is_error_free(instr, h, tol)
    except TemsError:
        ef = False
    if not ef:
        notes.append("error-free precondition violated")
    universal = dim == 1 or (-1.0 / (dim * dim - 1) - 1e-12 <= alpha <= 1 + 1e-12)
    model = a + alpha * direction
    instrument_ok = alpha <= 1 + 1e-12 and all(
        min_eigenvalue(j) >= -DEFAULT.psd for j in model)
    return AlphaFit(alpha, resid, bool(instrument_ok), bool(universal), bool(ef), notes)


def _range_excess(alpha: float, lo: float, hi: float = 1.0) -> float:
    return max(0.0, lo - alpha, alpha - hi)


def certify_crooks(s: Scenario, tol: float = 1e-10, alpha_tol: float = 1e-8) -> CheckReport:
    """Both instruments fit the depolarizing family with one shared α.

    The residual is the largest of: the two fit residuals, the α mismatch
    scaled by ``tol / alpha_tol``, the distance of α outside its CP range and
    the error-matrix deviation. For degenerate Hamiltonians only the
    restricted class (projective measurement plus a universal channel) is
    certified, so the universal-channel range applies.
    """
    p = s.protocol
    dim = p.dim
    f0 = fit_depolarizing_alpha(s.instr0, p.h_initial)
    ft = fit_depolarizing_alpha(s.instr_tau, p.h_final)
    degenerate = bool(np.any(p.h_initial.degeneracies > 1) or np.any(p.h_final.degeneracies > 1))
    if dim == 1:
        lo = -np.inf
    else:
        lo = -1.0 / (dim * dim - 1) if degenerate else -1.0 / (dim - 1)
    excess = max(_range_excess(f0.alpha, lo), _range_excess(ft.alpha, lo))
    mismatch = abs(f0.alpha - ft.alpha)
    err = max(max_abs(error_matrix(s.instr0, p.h_initial) - np.eye(p.h_initial.n_levels)),
              max_abs(error_matrix(s.instr_tau, p.h_final) - np.eye(p.h_final.n_levels)))
    worst = max(f0.residual, ft.residual, mismatch * tol / alpha_tol, excess, err)
    notes = ["restricted: degenerate spectrum, universal-channel class only"] if degenerate else []
    return _report("condition_crooks", 0.0, worst, worst, tol,
                   diagnostics=[{"instrument": "initial", **f0.to_dict()},
                                {"instrument": "final", **ft.to_dict()},
                                {"alpha_mismatch": mismatch, "range_excess": excess,
                                 "error_matrix_residual": err, "alpha_lower_bound": lo}],
                   notes=notes)


CHECKS = {
    "jarzynski": check_jarzynski,
    "backward_jarzynski": check_backward_jarzynski,
    "crooks": check_crooks,
    "detailed_balance": check_detailed_balance,
}
