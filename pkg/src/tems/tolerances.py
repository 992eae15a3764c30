"""Numerical tolerances used throughout the package.

Every check takes its tolerance as an argument; the defaults below are what
the public helpers fall back to when the caller passes nothing.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Any, Mapping


@dataclass(frozen=True)
class Tolerances:
    hermitian: float = 1e-12
    unitary: float = 1e-10
    psd: float = 1e-10
    group: float = 1e-9  # eigenvalue merging, relative to max(1, |M|)
    work: float = 1e-9  # work-value merging, relative to the energy scale
    trace_preserving: float = 1e-10
    error_free: float = 1e-10
    unital: float = 1e-10
    jarzynski: float = 1e-10
    crooks: float = 1e-9
    detailed_balance: float = 1e-10
    condition: float = 1e-10
    mass_floor: float = 1e-12  # denominator floor for per-point relative residuals
    kraus_cutoff: float = 1e-13  # Choi eigenvalues below this are dropped
    path_floor: float = 1e-14  # first-stage path probabilities at or below this count as zero

    def updated(self, overrides: Mapping[str, Any] | None) -> "Tolerances":
        if not overrides:
            return self
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise KeyError(f"unknown tolerance(s): {sorted(unknown)}")
        return replace(self, **{k: float(v) for k, v in overrides.items()})

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


DEFAULT = Tolerances()
