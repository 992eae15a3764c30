"""Command-line front end: ``tems verify | scan | lemma``.

Exit codes: 0 when every requested check passes, 1 when any check fails,
2 when the configuration (or a command-line override) is invalid. Output
files are staged next to their destination and renamed into place only
after every result is computed, so a failed run leaves no partial files.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import itertools
import json
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .adversarial import adversarial_search
from .config import (
    LEMMA_SCHEMA,
    SCAN_SCHEMA,
    build_hamiltonian,
    build_instrument,
    build_tolerances,
    component_rng,
    load_json,
    parse_verify_config,
    resolve_alpha,
    validate,
)
from .errors import ConfigError, TemsError
from .hamiltonian import nondegenerate_difference_spectrum, spectral_from_levels
from .lemma_lab import (
    appendixA_effect_check,
    experiment_record,
    family_pair,
    lemma3_classify,
    lemma4_check,
    lemma4_fit,
)
from .operator_core import haar_unitary, random_density_matrix, random_hermitian, random_pure_state
from .protocol import Protocol
from .serialization import input_hash, matrix_from_json, vector_from_json
from .tolerances import Tolerances
from .verifier import (
    CheckReport,
    Scenario,
    certify_crooks,
    certify_jarzynski,
    check_backward_jarzynski,
    check_condition_Ji,
    check_condition_Jii,
    check_crooks,
    check_detailed_balance,
    check_jarzynski,
)

__all__ = ["main", "build_parser", "run_checks", "cmd_verify", "cmd_scan", "cmd_lemma"]

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def run_check(name: str, s: Scenario, tol: Tolerances) -> CheckReport:
    p = s.protocol
    if name == "jarzynski":
        return check_jarzynski(s, tol.jarzynski)
    if name == "backward_jarzynski":
        return check_backward_jarzynski(s, tol.jarzynski)
    if name == "crooks":
        return check_crooks(s, tol.crooks, mass_floor=tol.mass_floor)
    if name == "detailed_balance":
        return check_detailed_balance(s, tol.detailed_balance, mass_floor=tol.mass_floor)
    if name == "condition_Ji":
        return check_condition_Ji(s.instr0, s.instr_tau, p.h_initial, p.h_final, tol.condition)
    if name == "condition_Jii":
        return check_condition_Jii(s.instr_tau, p.h_final, p.dim, tol.condition)
    if name == "condition_jarzynski":
        return certify_jarzynski(s, tol.condition)
    if name == "condition_crooks":
        return certify_crooks(s, tol.condition)
    raise KeyError(name)


def run_checks(s: Scenario, names, tol: Tolerances) -> list[CheckReport]:
    return [run_check(n, s, tol) for n in names]


_CHECK_TOL = {"jarzynski": "jarzynski", "backward_jarzynski": "jarzynski",
              "crooks": "crooks", "detailed_balance": "detailed_balance"}


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in row])
    return buf.getvalue()


def write_outputs(out_dir: Path, files: dict[str, str]) -> list[Path]:
    """Stage every file, then rename them into place."""
    out_dir.mkdir(parents=True, exist_ok=True)
    staged = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=out_dir)
            with os.fdopen(fd, "w") as fh:
                fh.write(text)
            staged.append((tmp, out_dir / name))
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, final in staged:
        os.replace(tmp, final)
    return [final for _, final in staged]


def _parse_overrides(text: str | None) -> dict:
    if not text:
        return {}
    text = text.strip()
    try:
        if text.startswith("{"):
            data = json.loads(text)
            if not isinstance(data, dict):
                raise ValueError("expected an object")
            return {str(k): float(v) for k, v in data.items()}
        out = {}
        for item in text.split(","):
            key, value = item.split("=", 1)
            out[key.strip()] = float(value)
        return out
    except ValueError as exc:
        raise ConfigError("--tol-overrides", f"expected JSON object or name=value list ({exc})") from None


def _out_dir(args, raw: dict) -> Path:
    if args.out_dir:
        return Path(args.out_dir)
    return Path(raw.get("outputs", {}).get("dir", "."))


def _out_name(raw: dict, default: str) -> str:
    return raw.get("outputs", {}).get("name", default)


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def cmd_verify(args) -> int:
    raw = load_json(args.config)
    cfg = parse_verify_config(raw, args.seed, _parse_overrides(args.tol_overrides))
    s, tol = cfg.scenario, cfg.tolerances
    reports = [r.to_dict() for r in run_checks(s, cfg.checks, tol)]

    if cfg.adversarial is not None:
        adv = cfg.adversarial
        target = adv.get("target", "jarzynski")
        result = adversarial_search(
            s, target, adv.get("budget", 500), seed=cfg.seed,
            free_dynamics=adv.get("free_dynamics", True), scale=adv.get("scale", "initial"),
            refine_fraction=adv.get("refine_fraction", 0.5), workers=args.workers,
        )
        limit = getattr(tol, _CHECK_TOL[target])
        entry = {
            "check": f"adversarial_{target}",
            "expected": 0.0,
            "actual": result.worst_violation,
            "residual": result.worst_violation,
            "abs_residual": result.worst_violation,
            "rel_residual": result.worst_violation,
            "tolerance": limit,
            "pass": bool(result.worst_violation <= limit),
            "diagnostics": [{"x": result.x, "evaluations": result.evaluations,
                             "random_best": result.random_best, "refined_best": result.refined_best}],
            "notes": [],
        }
        if not entry["pass"]:
            entry["witness"] = result.witness.to_json_dict()
        reports.append(entry)

    all_pass = all(r["pass"] for r in reports)
    name = _out_name(raw, "report")
    report = {
        "timestamp": _timestamp(),
        "command": "verify",
        "seed": cfg.seed,
        "config_hash": input_hash(raw),
        "tolerances": tol.as_dict(),
        "scenario": s.to_json_dict(),
        "checks": reports,
        "all_pass": all_pass,
    }
    scenario_id = input_hash(raw)[:12]
    summary = _csv_text(["scenario_id", "check", "residual", "tolerance", "pass"],
                        [[scenario_id, r["check"], float(r["residual"]), float(r["tolerance"]),
                          str(r["pass"]).lower()] for r in reports])
    files = {f"{name}_summary.csv": summary}
    if (args.format or "json") == "json":
        files[f"{name}.json"] = _json_text(report)
    written = write_outputs(_out_dir(args, raw), files)
    for r in reports:
        print(f"{'PASS' if r['pass'] else 'FAIL'} {r['check']}: residual={r['residual']:.3e} "
              f"tol={r['tolerance']:.1e}")
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK if all_pass else EXIT_FAIL


# ---------------------------------------------------------------------------
# scan
# ---------------------------------------------------------------------------


def _with_alpha(spec: dict, alpha) -> dict:
    spec = copy.deepcopy(spec)
    if spec["builder"] == "crooks":
        spec["alpha"] = alpha
    elif spec["builder"] == "error_free":
        for ch in ([spec["channel"]] if "channel" in spec else spec.get("channels", [])):
            if ch["type"] in ("depolarizing", "transpose_depolarizing"):
                ch["alpha"] = alpha
    return spec


def _scan_point(job) -> dict:
    (index, dim, alpha, beta, x, k, seed, instruments, checks, tol) = job
    row = {"index": index, "dim": dim, "alpha_spec": alpha, "alpha": None, "beta": beta,
           "x": x, "protocol": k, "status": "ok", "error": None}
    if alpha is not None:
        row["alpha"] = resolve_alpha(alpha, dim)
    e0 = nondegenerate_difference_spectrum(dim, component_rng(seed, f"scan.h0.{dim}.{k}"))
    et = nondegenerate_difference_spectrum(dim, component_rng(seed, f"scan.htau.{dim}.{k}"))
    h0 = spectral_from_levels(e0 * x)
    ht = spectral_from_levels(et)
    u = haar_unitary(dim, component_rng(seed, f"scan.u.{dim}.{k}"))
    try:
        specs = {name: (instruments[name] if alpha is None else _with_alpha(instruments[name], alpha))
                 for name in ("initial", "final")}
        i0 = build_instrument(specs["initial"], "instruments.initial", h0, seed)
        it = build_instrument(specs["final"], "instruments.final", ht, seed)
    except ConfigError as exc:
        row["status"] = "rejected"
        row["error"] = str(exc)
        return row
    s = Scenario(Protocol(h0, ht, u), i0, it, beta)
    passes = []
    for name in checks:
        rep = run_check(name, s, tol)
        row[f"{name}_residual"] = rep.residual
        row[f"{name}_pass"] = rep.passed
        passes.append(rep.passed)
    row["all_pass"] = all(passes)
    return row


def _run_jobs(fn, jobs, workers: int) -> list:
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    return [fn(j) for j in jobs]


def cmd_scan(args) -> int:
    raw = load_json(args.config)
    validate(raw, SCAN_SCHEMA)
    seed = int(raw.get("seed", 0) if args.seed is None else args.seed)
    tol = build_tolerances(raw, _parse_overrides(args.tol_overrides))
    grid = raw["grid"]
    checks = list(raw.get("checks", ["jarzynski", "crooks", "detailed_balance"]))
    dims = grid.get("dim", [2])
    alphas = grid.get("alpha", [None])
    betas = grid.get("beta", [1.0])
    xs = grid.get("x", [1.0])
    n_proto = raw.get("protocols_per_point", 1)
    jobs = [(i, d, a, float(b), float(x), k, seed, raw["instruments"], checks, tol)
            for i, (d, a, b, x, k) in enumerate(itertools.product(dims, alphas, betas, xs, range(n_proto)))]
    rows = _run_jobs(_scan_point, jobs, args.workers)

    columns = ["index", "dim", "alpha_spec", "alpha", "beta", "x", "protocol", "status"]
    for name in checks:
        columns += [f"{name}_residual", f"{name}_pass"]
    columns += ["all_pass", "error"]
    table = [[_csv_value(row.get(c)) for c in columns] for row in rows]
    name = _out_name(raw, "scan")
    if (args.format or "csv") == "csv":
        files = {f"{name}.csv": _csv_text(columns, table)}
    else:
        files = {f"{name}.json": _json_text({"timestamp": _timestamp(), "command": "scan", "seed": seed,
                                             "config_hash": input_hash(raw), "rows": rows})}
    written = write_outputs(_out_dir(args, raw), files)
    evaluated = [r for r in rows if r["status"] == "ok"]
    failed = [r for r in evaluated if not r["all_pass"]]
    print(f"{len(rows)} grid points: {len(evaluated)} evaluated, "
          f"{len(rows) - len(evaluated)} rejected by a builder, {len(failed)} failing")
    for path in written:
        print(f"wrote {path}")
    return EXIT_FAIL if failed else EXIT_OK


def _csv_value(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (np.floating, float)):
        return float(v)
    return v


# ---------------------------------------------------------------------------
# lemma
# ---------------------------------------------------------------------------


def _lemma_matrix(exp: dict, key: str, path: str, fallback):
    return matrix_from_json(exp[key], f"{path}.{key}") if key in exp else fallback()


def _run_experiment(exp: dict, path: str, seed: int) -> dict:
    rng = component_rng(seed, path)
    kind = exp["kind"]
    expect = exp.get("expect", {})
    checks = []
    if kind == "lemma3":
        dim = exp.get("dim", 2)
        a = _lemma_matrix(exp, "A", path, lambda: random_hermitian(dim, rng))
        b = _lemma_matrix(exp, "B", path, lambda: random_hermitian(dim, rng))
        if a.shape != b.shape:
            raise ConfigError(f"{path}.B", f"shape {b.shape} differs from A {a.shape}")
        try:
            verdict = lemma3_classify(a, b, exp.get("tol", 1e-10), exp.get("n_haar", 200),
                                      exp.get("n_structured", 200), rng)
        except TemsError as exc:
            raise ConfigError(path, str(exc)) from None
        spread = verdict.scan.spread
        if "max_spread" in expect:
            checks.append(spread <= expect["max_spread"])
        if "min_spread" in expect:
            checks.append(spread >= expect["min_spread"])
        if "verdict" in expect:
            checks.append(verdict.verdict == expect["verdict"])
        inputs = {"A": a, "B": b}
        result = verdict.to_dict()
    elif kind == "lemma4":
        dim = exp.get("dim", 2)
        a = vector_from_json(exp["a"], f"{path}.a") if "a" in exp else random_pure_state(dim, rng)
        b = vector_from_json(exp["b"], f"{path}.b") if "b" in exp else random_pure_state(dim, rng)
        dim = a.size
        if "alpha" in exp:
            rho, sigma = family_pair(exp["alpha"], a, b)
        else:
            rho = _lemma_matrix(exp, "rho", path, lambda: random_density_matrix(dim, rng))
            sigma = _lemma_matrix(exp, "sigma", path, lambda: random_density_matrix(dim, rng))
        if exp.get("delta", 0) > 0:
            v = random_pure_state(dim, rng)
            rho = (1 - exp["delta"]) * rho + exp["delta"] * np.outer(v, v.conj())
        try:
            stats = lemma4_check(rho, sigma, a, b, exp.get("n_samples", 1000), rng)
            fit = lemma4_fit(rho, sigma, a, b)
        except TemsError as exc:
            raise ConfigError(path, str(exc)) from None
        if "max_discrepancy" in expect:
            checks.append(stats.max <= expect["max_discrepancy"])
        if "min_discrepancy" in expect:
            checks.append(stats.max >= expect["min_discrepancy"])
        if "max_residual" in expect:
            checks.append(fit.residual <= expect["max_residual"])
        inputs = {"rho": rho, "sigma": sigma, "a": a, "b": b}
        result = {"discrepancy": stats.to_dict(), "fit": fit._asdict()}
    else:
        if "hamiltonian" not in exp or "instrument" not in exp:
            raise ConfigError(path, "appendix_a needs 'hamiltonian' and 'instrument'")
        h = build_hamiltonian(exp["hamiltonian"], f"{path}.hamiltonian")
        instr = build_instrument(exp["instrument"], f"{path}.instrument", h, seed)
        rep = appendixA_effect_check(instr, h, exp.get("tol", 1e-10))
        checks.append(rep.passed)
        inputs = {"hamiltonian": exp["hamiltonian"], "instrument": exp["instrument"]}
        result = rep.to_dict()
    record = experiment_record(kind, inputs, {"seed": seed, "stream": path}, result)
    record["name"] = exp.get("name", path)
    record["pass"] = all(checks)
    return record


def cmd_lemma(args) -> int:
    raw = load_json(args.config)
    validate(raw, LEMMA_SCHEMA)
    seed = int(raw.get("seed", 0) if args.seed is None else args.seed)
    jobs = [(exp, f"experiments[{i}]", seed) for i, exp in enumerate(raw["experiments"])]
    records = _run_jobs(_experiment_job, jobs, args.workers)
    name = _out_name(raw, "lemma")
    if (args.format or "json") == "json":
        files = {f"{name}.json": _json_text({"timestamp": _timestamp(), "command": "lemma", "seed": seed,
                                             "config_hash": input_hash(raw), "records": records})}
    else:
        files = {f"{name}.csv": _csv_text(["name", "experiment", "input_hash", "pass"],
                                          [[r["name"], r["experiment"], r["input_hash"],
                                            str(r["pass"]).lower()] for r in records])}
    written = write_outputs(_out_dir(args, raw), files)
    for r in records:
        print(f"{'PASS' if r['pass'] else 'FAIL'} {r['name']} ({r['experiment']})")
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK if all(r["pass"] for r in records) else EXIT_FAIL


def _experiment_job(job) -> dict:
    return _run_experiment(*job)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tems", description="Fluctuation-theorem checks for "
                                     "two-energy-measurement schemes with generalized measurements.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, help_text in (
        ("verify", cmd_verify, "run the configured checks on one scenario"),
        ("scan", cmd_scan, "sweep alpha, beta, dimension and energy scale"),
        ("lemma", cmd_lemma, "run lemma experiments and emit JSON records"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")
        p.add_argument("--tol-overrides", default=None,
                       help='tolerance overrides, JSON object or "name=value,name=value"')
        p.add_argument("--out-dir", default=None, help="directory for report files")
        p.add_argument("--format", choices=["json", "csv"], default=None,
                       help="primary report format (verify/lemma default json, scan default csv)")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
