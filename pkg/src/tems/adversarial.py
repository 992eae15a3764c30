"""Sampled search for fluctuation-theorem violations.

The "for every unitary" and "for every spectrum" quantifiers are probed by
sampling: Haar-random dynamics paired with energy-scale factors x from a
log-spaced grid, followed by Nelder-Mead refinement of the best candidate
over U = U* exp(-i G(θ)), with G a Hermitian matrix built from D² real
parameters. Each random sample draws from its own child of
``SeedSequence(seed)``, so results do not depend on the worker count.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import TemsError
from .operator_core import evolve_unitary, haar_unitary
from .verifier import CHECKS, Scenario

__all__ = ["SearchResult", "adversarial_search", "x_grid", "hermitian_from_params"]


@dataclass
class SearchResult:
    worst_violation: float
    witness: Scenario
    x: float
    target: str
    evaluations: int
    random_best: float
    refined_best: float
    history: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "worst_violation": float(self.worst_violation),
            "x": float(self.x),
            "evaluations": int(self.evaluations),
            "random_best": float(self.random_best),
            "refined_best": float(self.refined_best),
            "witness": self.witness.to_json_dict(),
        }


def x_grid(n: int = 50, lo: float = 0.1, hi: float = 10.0) -> np.ndarray:
    return np.logspace(np.log10(lo), np.log10(hi), n)


def hermitian_from_params(theta: np.ndarray, dim: int) -> np.ndarray:
    """D² reals -> Hermitian matrix (diagonal, then real/imag upper triangle)."""
    h = np.zeros((dim, dim), dtype=np.complex128)
    h[np.diag_indices(dim)] = theta[:dim]
    iu = np.triu_indices(dim, 1)
    k = iu[0].size
    upper = theta[dim:dim + k] + 1j * theta[dim + k:dim + 2 * k]
    h[iu] = upper
    h[(iu[1], iu[0])] = upper.conj()
    return h


def _scaled(template: Scenario, x: float, scale: str) -> Scenario:
    if scale == "initial":
        return template.scaled(x_initial=x)
    if scale == "final":
        return template.scaled(x_final=x)
    if scale == "both":
        return template.scaled(x, x)
    return template


def _violation(template: Scenario, target: str, dynamics, x: float, scale: str) -> float:
    s = _scaled(template, x, scale)
    if dynamics is not None:
        s = s.with_dynamics(dynamics)
    residual = CHECKS[target](s).residual
    return float(residual) if np.isfinite(residual) else 1e300


def _random_chunk(args) -> list[tuple[int, float]]:
    template, target, scale, free_dynamics, seeds, indices, xs = args
    out = []
    for i, ss in zip(indices, seeds):
        u = haar_unitary(template.dim, np.random.default_rng(ss)) if free_dynamics else None
        out.append((i, _violation(template, target, u, xs[i % len(xs)], scale)))
    return out


def adversarial_search(template: Scenario, target: str = "jarzynski", budget: int = 500,
                       seed: int = 0, free_dynamics: bool = True, scale: str = "initial",
                       xs=None, refine_fraction: float = 0.5, workers: int = 1) -> SearchResult:
    """Maximize the residual of ``CHECKS[target]`` within ``budget`` evaluations.

    ``scale`` selects which spectrum the factor x multiplies ("initial",
    "final", "both" or "none"). With ``free_dynamics=False`` the template's
    dynamics is kept and only x varies.
    """
    if budget < 1:
        raise ValueError("budget must be at least one evaluation")
    if target not in CHECKS:
        raise KeyError(f"unknown check {target!r}; choose from {sorted(CHECKS)}")
    if free_dynamics and not template.protocol.is_unitary:
        raise TemsError("free dynamics search needs a unitary template")
    xs = np.asarray([1.0] if scale == "none" else (x_grid() if xs is None else xs), dtype=float)

    n_refine = int(budget * refine_fraction) if free_dynamics else 0
    if not free_dynamics:
        n_random = min(budget, len(xs))
    else:
        n_random = max(1, budget - n_refine)
        n_refine = budget - n_random
    child_seeds = np.random.SeedSequence(seed).spawn(n_random)
    indices = list(range(n_random))

    if workers > 1 and n_random > 1:
        chunks = np.array_split(np.arange(n_random), workers)
        jobs = [(template, target, scale, free_dynamics, [child_seeds[i] for i in c], list(c), xs)
                for c in chunks if len(c)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = [r for part in pool.map(_random_chunk, jobs) for r in part]
    else:
        results = _random_chunk((template, target, scale, free_dynamics, child_seeds, indices, xs))
    results.sort(key=lambda r: r[0])
    values = np.array([v for _, v in results])
    best_i = int(np.argmax(values))  # first index on ties
    best = float(values[best_i])
    best_x = float(xs[best_i % len(xs)])
    best_u = (haar_unitary(template.dim, np.random.default_rng(child_seeds[best_i]))
              if free_dynamics else None)
    random_best = best
    evaluations = n_random

    if n_refine > 0:
        dim = template.dim
        state = {"best": best, "u": best_u, "anchor": best_u, "n": 0}

        def objective(theta):
            if state["n"] >= n_refine:
                return -state["best"]
            state["n"] += 1
            u = state["anchor"] @ evolve_unitary(hermitian_from_params(theta, dim), 1.0)
            v = _violation(template, target, u, best_x, scale)
            if v > state["best"]:
                state["best"], state["u"] = v, u
            return -v

        x0 = np.zeros(dim * dim)
        step = 0.3
        # restart the simplex around the incumbent until the budget is spent
        while state["n"] < n_refine:
            before = state["n"]
            state["anchor"] = state["u"]
            simplex = np.vstack([x0, step * np.eye(dim * dim)])
            minimize(objective, x0, method="Nelder-Mead",
                     options={"maxfev": n_refine - state["n"], "initial_simplex": simplex,
                              "xatol": 1e-10, "fatol": 1e-14})
            if state["n"] == before:
                break
            step *= 0.5
        evaluations += state["n"]
        best, best_u = state["best"], state["u"]

    witness = _scaled(template, best_x, scale)
    if best_u is not None:
        witness = witness.with_dynamics(best_u)
    return SearchResult(best, witness, best_x, target, evaluations, random_best, best,
                        history=values.tolist())
