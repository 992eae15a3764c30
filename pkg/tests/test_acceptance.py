"""Acceptance criteria, one test each.

Every test appends a ``CRITERION n: PASS|FAIL ...`` line that the session
summary prints (see conftest). Run this file directly for just these checks:

    python -m tests.test_acceptance
"""
import json
import sys
import time

import numpy as np
import pytest

from tems.adversarial import adversarial_search
from tems.cli import main
from tems.hamiltonian import boltzmann_weights, has_nondegenerate_work_values, spectral_from_levels
from tems.instrument import (
    build_crooks,
    build_error_free,
    build_ji_erroneous,
    build_jii,
    build_outcome_mixed,
    build_projective,
    constant_channel,
    degenerate_doubly_stochastic,
    depolarizing,
    effects_are_projectors,
    is_error_free,
    random_channel,
    random_unital_channel,
    transpose_depolarizing,
)
from tems.lemma_lab import family_pair, lemma3_trace_scan, lemma4_check, lemma4_fit
from tems.operator_core import haar_unitary, max_abs, min_eigenvalue, random_hermitian, random_pure_state
from tems.protocol import Protocol
from tems.verifier import Scenario, check_condition_Ji, check_crooks, check_detailed_balance, check_jarzynski
from tems.work_stats import joint_table

from . import conftest
from .conftest import random_hamiltonian, random_protocol

pytestmark = pytest.mark.acceptance


def record(n: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def _projective(p, beta):
    return Scenario(p, build_projective(p.h_initial), build_projective(p.h_final), beta)


def _ji_erroneous_second(h, rng):
    q = degenerate_doubly_stochastic(h.degeneracies, 3, rng)
    return build_ji_erroneous(haar_unitary(h.dim, rng), q, h.degeneracies)


def test_criterion_01_projective_exactness():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst_j = worst_c = 0.0
    n_degenerate = 0
    for i in range(200):
        dim = (2, 3, 4, 6)[i % 4]
        degenerate = i % 2 == 1
        p = random_protocol(dim, rng, degenerate=degenerate)
        n_degenerate += int(p.h_initial.n_levels < dim or p.h_final.n_levels < dim)
        s = _projective(p, rng.uniform(0.1, 5))
        worst_j = max(worst_j, check_jarzynski(s).residual)
        worst_c = max(worst_c, check_crooks(s).residual)
    elapsed = time.perf_counter() - start
    ok = worst_j <= 1e-10 and worst_c <= 1e-9 and elapsed <= 60
    record(1, ok, f"200 scenarios ({n_degenerate} degenerate): max Jarzynski rel {worst_j:.2e} (<=1e-10), "
                  f"max Crooks per-point {worst_c:.2e} (<=1e-9), {elapsed:.1f}s (<=60s)")


def test_criterion_02_crooks_family_sufficiency():
    rng = np.random.default_rng(102)
    worst_c = worst_db = 0.0
    min_choi = np.inf
    count = 0
    for dim in (2, 3, 4):
        for alpha in (-1 / (dim - 1), -1 / (dim * dim - 1), 0.0, 0.5, 1.0):
            # below the universal-channel bound only the instrument form is CP
            variant = "instrument" if alpha < -1 / (dim * dim - 1) else "universal"
            for _ in range(20):
                p = random_protocol(dim, rng)
                i0 = build_crooks(p.h_initial, alpha, variant)
                it = build_crooks(p.h_final, alpha, variant)
                s = Scenario(p, i0, it, float(rng.uniform(0.1, 5)))
                worst_c = max(worst_c, check_crooks(s, 1e-9).residual)
                worst_db = max(worst_db, check_detailed_balance(s, 1e-10).residual)
                for instr in (i0, it):
                    min_choi = min(min_choi, min(min_eigenvalue(j) for j in instr.choi_matrices()))
                count += 1
    ok = worst_c <= 1e-9 and worst_db <= 1e-10 and min_choi >= -1e-10
    record(2, ok, f"{count} scenarios: max Crooks {worst_c:.2e} (<=1e-9), max detailed balance "
                  f"{worst_db:.2e} (<=1e-10), min Choi eigenvalue {min_choi:.2e} (>=-1e-10)")


def test_criterion_03_crooks_necessity():
    p = random_protocol(3, np.random.default_rng(103))
    ch = constant_channel((0, 3))
    t_const = Scenario(p, build_error_free(p.h_initial, ch), build_error_free(p.h_final, ch), 1.0)
    r_const = adversarial_search(t_const, "crooks", budget=2000, seed=0, scale="none")
    t_mis = Scenario(p, build_crooks(p.h_initial, 0.2), build_crooks(p.h_final, 0.8), 1.0)
    r_mis = adversarial_search(t_mis, "crooks", budget=2000, seed=0, scale="none")
    ok = r_const.worst_violation >= 1e-3 and r_mis.worst_violation >= 1e-4
    record(3, ok, f"constant-output channel D=3: violation {r_const.worst_violation:.3e} (>=1e-3); "
                  f"mismatched alpha 0.2/0.8: violation {r_mis.worst_violation:.3e} (>=1e-4), budget 2000 each")


def test_criterion_04_erroneous_second_measurement():
    rng = np.random.default_rng(104)
    worst = 0.0
    second_error_free = 0
    count = 0
    for dim in (2, 3, 4):
        for _ in range(50):
            p = random_protocol(dim, rng)
            i0 = build_error_free(p.h_initial, random_unital_channel(dim, 3, rng))
            it = _ji_erroneous_second(p.h_final, rng)
            worst = max(worst, check_jarzynski(Scenario(p, i0, it, float(rng.uniform(0.1, 5)))).residual)
            second_error_free += int(is_error_free(it, p.h_final))
            count += 1
    ok = worst <= 1e-10 and second_error_free == 0
    record(4, ok, f"{count} scenarios: max Jarzynski {worst:.2e} (<=1e-10); second measurement error free "
                  f"in {second_error_free} of {count} (expected 0)")


def test_criterion_05_jii_factorization():
    rng = np.random.default_rng(105)
    worst_fact = worst_j = 0.0
    for i in range(50):
        dim = 2 + i % 4
        p = random_protocol(dim, rng, degenerate=i % 2 == 0)
        beta = float(rng.uniform(0.1, 5))
        i0 = build_error_free(p.h_initial, random_channel(dim, 2, rng))
        s = Scenario(p, i0, build_jii(p.h_final), beta)
        table = joint_table(p, s.instr0, s.instr_tau, beta)
        expect = np.outer(p.h_final.degeneracies / dim, boltzmann_weights(p.h_initial, beta))
        worst_fact = max(worst_fact, max_abs(table.p - expect))
        worst_j = max(worst_j, check_jarzynski(s).residual)
    ok = worst_fact <= 1e-12 and worst_j <= 1e-10
    record(5, ok, f"50 scenarios: max |p(m,n) - (d_m/D) p0(n)| {worst_fact:.2e} (<=1e-12), "
                  f"max Jarzynski {worst_j:.2e} (<=1e-10)")


def test_criterion_06_first_measurement_error_necessity():
    h0 = spectral_from_levels([0.0, 1.0])
    h1 = spectral_from_levels([0.0, 1.3])
    p = Protocol(h0, h1, haar_unitary(2, 106))
    t = Scenario(p, build_outcome_mixed(h0, 0.05), build_projective(h1), 1.0)
    res = adversarial_search(t, "jarzynski", budget=500, seed=0, scale="initial")
    ok = res.worst_violation >= 1e-4
    record(6, ok, f"5% outcome-mixed first measurement, D=2, 50 x-points, budget 500: violation "
                  f"{res.worst_violation:.3e} at x={res.x:.3g} (>=1e-4)")


def test_criterion_07_unital_dynamics():
    rng = np.random.default_rng(107)
    worst = worst_cert = 0.0
    for i in range(50):
        dim = 2 + i % 3
        h0 = random_hamiltonian(dim, rng, degenerate=i % 2 == 0)
        h1 = random_hamiltonian(dim, rng, degenerate=i % 2 == 1)
        p = Protocol(h0, h1, random_unital_channel(dim, 3, rng))
        i0 = build_error_free(h0, random_unital_channel(dim, 2, rng))
        it = _ji_erroneous_second(h1, rng) if i % 2 else build_projective(h1)
        worst_cert = max(worst_cert, check_condition_Ji(i0, it, h0, h1).residual)
        worst = max(worst, check_jarzynski(Scenario(p, i0, it, float(rng.uniform(0.1, 5)))).residual)
    ok = worst <= 1e-10 and worst_cert <= 1e-10
    record(7, ok, f"50 unital-channel scenarios: (Ji) residual {worst_cert:.2e}, max Jarzynski "
                  f"{worst:.2e} (<=1e-10)")


def _all_builder_families(h, rng):
    dim = h.dim
    fams = {
        "projective": build_projective(h),
        "error_free_random": build_error_free(h, [random_channel(dim, 2, rng) for _ in range(h.n_levels)]),
        "error_free_constant": build_error_free(h, constant_channel((0, dim))),
        "crooks_universal": build_crooks(h, 0.3, "universal"),
        "transpose_depolarizing": build_error_free(h, transpose_depolarizing(0.2, dim)),
        "outcome_mixed": build_outcome_mixed(h, 0.02),
        "jii": build_jii(h),
        "ji_erroneous": _ji_erroneous_second(h, rng),
    }
    if h.n_levels == dim:
        fams["crooks_instrument_min"] = build_crooks(h, -1 / (dim - 1), "instrument")
    return fams


def test_criterion_08_appendix_a_biconditional():
    rng = np.random.default_rng(108)
    families = set()
    mismatches = []
    total = 0
    for dim in (2, 3, 4):
        for degenerate in (False, True):
            h = random_hamiltonian(dim, rng, degenerate=degenerate)
            for name, instr in _all_builder_families(h, rng).items():
                families.add(name)
                total += 1
                if is_error_free(instr, h, 1e-10) != effects_are_projectors(instr, h, 1e-10):
                    mismatches.append((dim, name))
    ok = not mismatches and len(families) >= 6
    record(8, ok, f"{total} instruments from {len(families)} families: biconditional mismatches "
                  f"{len(mismatches)} (expected 0)")


def test_criterion_09_lemma3():
    rng = np.random.default_rng(109)
    worst_const = 0.0
    for dim in (2, 3, 5):
        b = random_hermitian(dim, rng)
        for a, bb in ((2.5 * np.eye(dim), b), (b, -1.5 * np.eye(dim)), (b, np.zeros((dim, dim))),
                      (np.zeros((dim, dim)), b)):
            worst_const = max(worst_const, lemma3_trace_scan(a, bb, 500, 500, rng).spread)
    weakest = np.inf
    pairs = 0
    for i in range(50):
        dim = (2, 3, 5)[i % 3]
        a = random_hermitian(dim, rng)
        b = random_hermitian(dim, rng)
        if i % 5 == 4:  # nearly scalar A makes the deviation small
            a = np.eye(dim) + 1e-3 * a
        stats = lemma3_trace_scan(a, b, 200, 200, rng)
        dev = max(stats.max - stats.mean, stats.mean - stats.min)
        scale = np.linalg.norm(a, 2) * np.linalg.norm(b, 2)
        weakest = min(weakest, dev / scale)
        pairs += 1
    ok = worst_const <= 1e-12 and weakest >= 1e-6
    record(9, ok, f"scalar/zero cases: max spread {worst_const:.2e} over 1000 unitaries (<=1e-12); "
                  f"{pairs} non-scalar pairs: min witness deviation / (|A||B|) {weakest:.2e} (>=1e-6)")


def test_criterion_10_lemma4():
    rng = np.random.default_rng(110)
    worst_disc = worst_fit = 0.0
    weakest_pert = np.inf
    for dim in (2, 3, 4):
        lo = -1 / (dim - 1)
        for alpha in np.linspace(lo, 1.0, 6):
            a, b = random_pure_state(dim, rng), random_pure_state(dim, rng)
            rho, sigma = family_pair(alpha, a, b)
            worst_disc = max(worst_disc, lemma4_check(rho, sigma, a, b, 1000, rng).max)
            worst_fit = max(worst_fit, lemma4_fit(rho, sigma, a, b).residual)
        for _ in range(5):
            a, b = random_pure_state(dim, rng), random_pure_state(dim, rng)
            rho, sigma = family_pair(float(rng.uniform(lo, 1)), a, b)
            v = random_pure_state(dim, rng)
            rho = (1 - 1e-2) * rho + 1e-2 * np.outer(v, v.conj())
            weakest_pert = min(weakest_pert, lemma4_check(rho, sigma, a, b, 2000, rng).max)
    ok = worst_disc <= 1e-10 and worst_fit <= 1e-10 and weakest_pert >= 1e-4
    record(10, ok, f"family members: max discrepancy {worst_disc:.2e}, max fit residual {worst_fit:.2e} "
                   f"(<=1e-10); delta=1e-2 perturbations: min discrepancy {weakest_pert:.2e} (>=1e-4)")


def test_criterion_11_detailed_balance_equals_crooks():
    rng = np.random.default_rng(111)
    tol = 1e-9
    agree = passed = 0
    total = 0
    while total < 100:
        dim = 2 + total % 3
        p = random_protocol(dim, rng, nondegenerate_differences=True)
        if not has_nondegenerate_work_values(p.h_initial.energies, p.h_final.energies):
            continue
        kind = total % 4
        h0, h1 = p.h_initial, p.h_final
        if kind == 0:
            s = _projective(p, 1.0)
        elif kind == 1:
            alpha = float(rng.uniform(-1 / (dim - 1), 1))
            s = Scenario(p, build_crooks(h0, alpha), build_crooks(h1, alpha), 1.0)
        elif kind == 2:
            s = Scenario(p, build_crooks(h0, 0.2), build_crooks(h1, 0.8), 1.0)
        else:
            s = Scenario(p, build_error_free(h0, constant_channel((0, dim))),
                         build_error_free(h1, depolarizing(0.5, dim)), 1.0)
        db, cr = check_detailed_balance(s, tol), check_crooks(s, tol)
        agree += int(db.passed == cr.passed)
        passed += int(cr.passed)
        total += 1
    ok = agree == total and 0 < passed < total
    record(11, ok, f"{total} scenarios ({passed} passing, {total - passed} failing): pass/fail agreement "
                   f"{agree}/{total} at tol {tol:g}")


def test_criterion_12_determinism(tmp_path):
    verify_cfg = {
        "seed": 7, "beta": 1.0,
        "hamiltonians": {"initial": {"energies": [0, 1]}, "final": {"energies": [0, 0.7]}},
        "dynamics": {"type": "haar"},
        "instruments": {"initial": {"builder": "outcome_mixed", "epsilon": 0.05},
                        "final": {"builder": "projective"}},
        "checks": ["jarzynski", "backward_jarzynski", "crooks", "detailed_balance"],
        "adversarial": {"target": "jarzynski", "budget": 200},
    }
    scan_cfg = {"seed": 7, "grid": {"alpha": ["instrument_min", 0.5, 1], "dim": [2, 3], "beta": [0.5, 2]},
                "instruments": {"initial": {"builder": "crooks", "alpha": 0},
                                "final": {"builder": "crooks", "alpha": 0}}}
    (tmp_path / "v.json").write_text(json.dumps(verify_cfg))
    (tmp_path / "s.json").write_text(json.dumps(scan_cfg))

    def strip(path):
        data = json.loads(path.read_text())
        data.pop("timestamp")
        return data

    same = []
    for run_a, run_b in (([], []), ([], ["--workers", "2"])):
        main(["verify", "--config", str(tmp_path / "v.json"), "--out-dir", str(tmp_path / "va"), *run_a])
        main(["verify", "--config", str(tmp_path / "v.json"), "--out-dir", str(tmp_path / "vb"), *run_b])
        same.append(strip(tmp_path / "va" / "report.json") == strip(tmp_path / "vb" / "report.json"))
        same.append((tmp_path / "va" / "report_summary.csv").read_bytes()
                    == (tmp_path / "vb" / "report_summary.csv").read_bytes())
        main(["scan", "--config", str(tmp_path / "s.json"), "--out-dir", str(tmp_path / "sa"), *run_a])
        main(["scan", "--config", str(tmp_path / "s.json"), "--out-dir", str(tmp_path / "sb"), *run_b])
        same.append((tmp_path / "sa" / "scan.csv").read_bytes() == (tmp_path / "sb" / "scan.csv").read_bytes())
    ok = all(same)
    record(12, ok, f"repeated verify/scan runs (1 and 2 workers): {sum(same)}/{len(same)} report pairs identical "
                   f"with the timestamp removed")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
