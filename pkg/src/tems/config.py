"""Scenario configuration: JSON schema, semantic validation and object building.

Complex numbers are written as ``[re, im]`` pairs (a bare real is accepted).
Energies may be in any unit as long as β is in the inverse unit; only the
products βe and βw enter the results.

Randomized components (Haar dynamics, random channels, random bases) draw
from ``numpy.random.default_rng([seed, crc32(field path)])``, so each field
has its own reproducible stream that does not shift when other fields change.
"""
from __future__ import annotations

import json
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .errors import ConfigError, TemsError
from .hamiltonian import SpectralHamiltonian, spectral_from_levels, spectral_from_matrix
from .instrument import (
    Channel,
    Instrument,
    build_crooks,
    build_error_free,
    build_ji_erroneous,
    build_jii,
    build_outcome_mixed,
    build_projective,
    constant_channel,
    degenerate_doubly_stochastic,
    depolarizing,
    identity_channel,
    random_channel,
    random_unital_channel,
    transpose_depolarizing,
)
from .operator_core import haar_unitary, is_unitary
from .protocol import Protocol, quench_protocol
from .serialization import matrix_from_json
from .tolerances import DEFAULT, Tolerances
from .verifier import Scenario

__all__ = [
    "SCENARIO_SCHEMA",
    "SCAN_SCHEMA",
    "LEMMA_SCHEMA",
    "load_json",
    "validate",
    "component_rng",
    "build_hamiltonian",
    "build_dynamics",
    "build_channel",
    "build_instrument",
    "build_scenario",
    "resolve_alpha",
    "VerifyConfig",
    "parse_verify_config",
]

_NUMBER = {"type": "number"}
_COMPLEX = {"oneOf": [_NUMBER, {"type": "array", "items": _NUMBER, "minItems": 2, "maxItems": 2}]}
_MATRIX = {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1, "items": _COMPLEX}}
_VECTOR = {"type": "array", "minItems": 1, "items": _COMPLEX}

_HAMILTONIAN = {
    "type": "object",
    "oneOf": [
        {"required": ["matrix"]},
        {"required": ["energies"]},
    ],
    "properties": {
        "matrix": _MATRIX,
        "energies": {"type": "array", "minItems": 1, "items": _NUMBER},
        "degeneracies": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
        "basis": _MATRIX,
    },
    "additionalProperties": False,
}

_CHANNEL = {
    "type": "object",
    "required": ["type"],
    "properties": {
        "type": {"enum": ["depolarizing", "transpose_depolarizing", "constant", "random",
                          "random_unital", "identity", "kraus"]},
        "alpha": {"oneOf": [_NUMBER, {"enum": ["instrument_min", "universal_min"]}]},
        "index": {"type": "integer", "minimum": 0},
        "state": _MATRIX,
        "n_kraus": {"type": "integer", "minimum": 1},
        "n_terms": {"type": "integer", "minimum": 1},
        "kraus": {"type": "array", "minItems": 1, "items": _MATRIX},
    },
    "additionalProperties": False,
}

_INSTRUMENT = {
    "type": "object",
    "required": ["builder"],
    "properties": {
        "builder": {"enum": ["projective", "crooks", "jii", "ji_erroneous", "error_free",
                             "outcome_mixed", "explicit"]},
        "alpha": {"oneOf": [_NUMBER, {"enum": ["instrument_min", "universal_min"]}]},
        "variant": {"enum": ["instrument", "universal"]},
        "epsilon": {"type": "number", "minimum": 0, "maximum": 1},
        "channel": _CHANNEL,
        "channels": {"type": "array", "minItems": 1, "items": _CHANNEL},
        "q": {"oneOf": [{"enum": ["random", "uniform"]},
                        {"type": "array", "items": {"type": "array", "items": _NUMBER}}]},
        "basis": {"oneOf": [{"enum": ["haar", "eigen"]}, _MATRIX]},
        "n_perms": {"type": "integer", "minimum": 1},
        "outcomes": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["kraus"],
                "properties": {"label": {}, "kraus": {"type": "array", "minItems": 1, "items": _MATRIX}},
                "additionalProperties": False,
            },
        },
    },
    "additionalProperties": False,
}

_DYNAMICS = {
    "type": "object",
    "required": ["type"],
    "properties": {
        "type": {"enum": ["unitary", "quench", "haar", "identity", "channel", "random_unital"]},
        "matrix": _MATRIX,
        "h_mid": _MATRIX,
        "tau": {"type": "number", "minimum": 0},
        "hbar": {"type": "number", "exclusiveMinimum": 0},
        "kraus": {"type": "array", "minItems": 1, "items": _MATRIX},
        "n_terms": {"type": "integer", "minimum": 1},
    },
    "additionalProperties": False,
}

_CHECK_NAMES = ["jarzynski", "backward_jarzynski", "crooks", "detailed_balance",
                "condition_Ji", "condition_Jii", "condition_jarzynski", "condition_crooks"]

_TOLERANCES = {
    "type": "object",
    "additionalProperties": {"type": "number", "exclusiveMinimum": 0},
}

_OUTPUTS = {
    "type": "object",
    "properties": {"dir": {"type": "string"}, "name": {"type": "string", "pattern": r"^[\w.-]+$"}},
    "additionalProperties": False,
}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["beta", "hamiltonians", "dynamics", "instruments"],
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "beta": {"type": "number", "exclusiveMinimum": 0},
        "hamiltonians": {
            "type": "object",
            "required": ["initial", "final"],
            "properties": {"initial": _HAMILTONIAN, "final": _HAMILTONIAN},
            "additionalProperties": False,
        },
        "dynamics": _DYNAMICS,
        "instruments": {
            "type": "object",
            "required": ["initial", "final"],
            "properties": {"initial": _INSTRUMENT, "final": _INSTRUMENT},
            "additionalProperties": False,
        },
        "checks": {"type": "array", "minItems": 1, "items": {"enum": _CHECK_NAMES}},
        "tolerances": _TOLERANCES,
        "adversarial": {
            "type": "object",
            "properties": {
                "target": {"enum": ["jarzynski", "backward_jarzynski", "crooks", "detailed_balance"]},
                "budget": {"type": "integer", "minimum": 1},
                "scale": {"enum": ["initial", "final", "both", "none"]},
                "free_dynamics": {"type": "boolean"},
                "refine_fraction": {"type": "number", "minimum": 0, "maximum": 1},
            },
            "additionalProperties": False,
        },
        "outputs": _OUTPUTS,
    },
    "additionalProperties": False,
}

SCAN_SCHEMA = {
    "type": "object",
    "required": ["grid", "instruments"],
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "grid": {
            "type": "object",
            "properties": {
                "alpha": {"type": "array", "minItems": 1,
                          "items": {"oneOf": [_NUMBER, {"enum": ["instrument_min", "universal_min"]}]}},
                "beta": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}},
                "dim": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
                "x": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}},
            },
            "additionalProperties": False,
        },
        "protocols_per_point": {"type": "integer", "minimum": 1},
        "instruments": {
            "type": "object",
            "required": ["initial", "final"],
            "properties": {"initial": _INSTRUMENT, "final": _INSTRUMENT},
            "additionalProperties": False,
        },
        "checks": {"type": "array", "minItems": 1, "items": {"enum": _CHECK_NAMES}},
        "tolerances": _TOLERANCES,
        "outputs": _OUTPUTS,
    },
    "additionalProperties": False,
}

_EXPECT = {
    "type": "object",
    "properties": {
        "max_spread": _NUMBER,
        "min_spread": _NUMBER,
        "max_discrepancy": _NUMBER,
        "min_discrepancy": _NUMBER,
        "max_residual": _NUMBER,
        "verdict": {"enum": ["constant-compatible", "non-constant-witnessed"]},
    },
    "additionalProperties": False,
}

LEMMA_SCHEMA = {
    "type": "object",
    "required": ["experiments"],
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "experiments": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["kind"],
                "properties": {
                    "kind": {"enum": ["lemma3", "lemma4", "appendix_a"]},
                    "name": {"type": "string"},
                    "A": _MATRIX,
                    "B": _MATRIX,
                    "rho": _MATRIX,
                    "sigma": _MATRIX,
                    "a": _VECTOR,
                    "b": _VECTOR,
                    "dim": {"type": "integer", "minimum": 1},
                    "alpha": _NUMBER,
                    "delta": {"type": "number", "minimum": 0, "maximum": 1},
                    "n_haar": {"type": "integer", "minimum": 0},
                    "n_structured": {"type": "integer", "minimum": 0},
                    "n_samples": {"type": "integer", "minimum": 0},
                    "tol": {"type": "number", "exclusiveMinimum": 0},
                    "hamiltonian": _HAMILTONIAN,
                    "instrument": _INSTRUMENT,
                    "expect": _EXPECT,
                },
                "additionalProperties": False,
            },
        },
        "outputs": _OUTPUTS,
    },
    "additionalProperties": False,
}


def _format_path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def load_json(path) -> Any:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def validate(data: Any, schema: dict) -> None:
    """Raise ConfigError naming the deepest failing field."""
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(data), key=lambda e: (-len(e.absolute_path), str(e.absolute_path)))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise ConfigError(_format_path(err.absolute_path), err.message)


def component_rng(seed: int, path: str) -> np.random.Generator:
    return np.random.default_rng([int(seed), zlib.crc32(path.encode())])


def _matrix(data, path) -> np.ndarray:
    return matrix_from_json(data, path)


def build_hamiltonian(data: dict, path: str) -> SpectralHamiltonian:
    try:
        if "matrix" in data:
            if "degeneracies" in data or "basis" in data:
                raise ConfigError(path, "'matrix' form takes no 'degeneracies' or 'basis'")
            return spectral_from_matrix(_matrix(data["matrix"], f"{path}.matrix"))
        basis = None
        if "basis" in data:
            basis = _matrix(data["basis"], f"{path}.basis")
            if basis.shape[0] != basis.shape[1] or not is_unitary(basis):
                raise ConfigError(f"{path}.basis", "basis must be a unitary matrix")
        energies = data["energies"]
        if len(set(energies)) != len(energies):
            raise ConfigError(f"{path}.energies", "energies must be distinct; use 'degeneracies'")
        return spectral_from_levels(energies, data.get("degeneracies"), basis)
    except ConfigError:
        raise
    except TemsError as exc:
        raise ConfigError(path, str(exc)) from None


def build_dynamics(data: dict, path: str, h0: SpectralHamiltonian, h_tau: SpectralHamiltonian,
                   seed: int) -> Protocol:
    kind = data["type"]
    dim = h0.dim
    try:
        if kind == "unitary":
            _require(data, "matrix", path)
            return Protocol(h0, h_tau, _matrix(data["matrix"], f"{path}.matrix"))
        if kind == "quench":
            _require(data, "h_mid", path)
            _require(data, "tau", path)
            return quench_protocol(h0, h_tau, _matrix(data["h_mid"], f"{path}.h_mid"),
                                   data["tau"], data.get("hbar", 1.0))
        if kind == "haar":
            return Protocol(h0, h_tau, haar_unitary(dim, component_rng(seed, path)))
        if kind == "identity":
            return Protocol(h0, h_tau, np.eye(dim, dtype=np.complex128))
        if kind == "channel":
            _require(data, "kraus", path)
            kraus = [_matrix(k, f"{path}.kraus[{i}]") for i, k in enumerate(data["kraus"])]
            return Protocol(h0, h_tau, Channel(kraus))
        return Protocol(h0, h_tau, random_unital_channel(dim, data.get("n_terms", 3),
                                                         component_rng(seed, path)))
    except ConfigError:
        raise
    except TemsError as exc:
        raise ConfigError(path, str(exc)) from None


def _require(data: dict, key: str, path: str) -> None:
    if key not in data:
        raise ConfigError(f"{path}.{key}", "required field is missing")


def resolve_alpha(value, dim: int) -> float:
    """Map the symbolic range endpoints to numbers for dimension ``dim``."""
    if value == "instrument_min":
        return -1.0 / (dim - 1) if dim > 1 else 1.0
    if value == "universal_min":
        return -1.0 / (dim * dim - 1) if dim > 1 else 1.0
    return float(value)


def build_channel(data: dict, path: str, dim: int, seed: int) -> Channel:
    kind = data["type"]
    try:
        if kind in ("depolarizing", "transpose_depolarizing"):
            _require(data, "alpha", path)
            alpha = resolve_alpha(data["alpha"], dim)
            return (depolarizing if kind == "depolarizing" else transpose_depolarizing)(alpha, dim)
        if kind == "constant":
            if "state" in data:
                return constant_channel(_matrix(data["state"], f"{path}.state"))
            index = data.get("index", 0)
            if index >= dim:
                raise ConfigError(f"{path}.index", f"index {index} out of range for dimension {dim}")
            return constant_channel((index, dim))
        if kind == "random":
            return random_channel(dim, data.get("n_kraus", 2), component_rng(seed, path))
        if kind == "random_unital":
            return random_unital_channel(dim, data.get("n_terms", 3), component_rng(seed, path))
        if kind == "identity":
            return identity_channel(dim)
        _require(data, "kraus", path)
        ch = Channel([_matrix(k, f"{path}.kraus[{i}]") for i, k in enumerate(data["kraus"])])
    except ConfigError:
        raise
    except TemsError as exc:
        raise ConfigError(path, str(exc)) from None
    if ch.dim != dim:
        raise ConfigError(path, f"channel dimension {ch.dim} != system dimension {dim}")
    return ch


def build_instrument(data: dict, path: str, h: SpectralHamiltonian, seed: int) -> Instrument:
    builder = data["builder"]
    dim = h.dim
    try:
        if builder == "projective":
            return build_projective(h)
        if builder == "crooks":
            _require(data, "alpha", path)
            return build_crooks(h, resolve_alpha(data["alpha"], dim), data.get("variant", "instrument"))
        if builder == "jii":
            return build_jii(h)
        if builder == "outcome_mixed":
            _require(data, "epsilon", path)
            return build_outcome_mixed(h, data["epsilon"])
        if builder == "error_free":
            if "channels" in data:
                chans = [build_channel(c, f"{path}.channels[{i}]", dim, seed)
                         for i, c in enumerate(data["channels"])]
                if len(chans) != h.n_levels:
                    raise ConfigError(f"{path}.channels", f"need {h.n_levels} channels, got {len(chans)}")
            else:
                _require(data, "channel", path)
                chans = build_channel(data["channel"], f"{path}.channel", dim, seed)
            return build_error_free(h, chans)
        if builder == "ji_erroneous":
            rng = component_rng(seed, path)
            basis_spec = data.get("basis", "haar")
            if basis_spec == "haar":
                basis = haar_unitary(dim, rng)
            elif basis_spec == "eigen":
                basis = h.basis
            else:
                basis = _matrix(basis_spec, f"{path}.basis")
            q_spec = data.get("q", "random")
            if q_spec == "random":
                q = degenerate_doubly_stochastic(h.degeneracies, data.get("n_perms", 2), rng)
            elif q_spec == "uniform":
                q = np.outer(h.degeneracies, np.ones(dim)) / dim
            else:
                q = np.asarray(q_spec, dtype=float)
            return build_ji_erroneous(basis, q, h.degeneracies)
        _require(data, "outcomes", path)
        return Instrument.from_json_dict(data, path)
    except ConfigError:
        raise
    except TemsError as exc:
        raise ConfigError(path, str(exc)) from None


def build_scenario(data: dict, seed: int) -> Scenario:
    """Build a Scenario from a schema-valid config dict."""
    h0 = build_hamiltonian(data["hamiltonians"]["initial"], "hamiltonians.initial")
    h_tau = build_hamiltonian(data["hamiltonians"]["final"], "hamiltonians.final")
    if h0.dim != h_tau.dim:
        raise ConfigError("hamiltonians.final", f"dimension {h_tau.dim} != initial dimension {h0.dim}")
    protocol = build_dynamics(data["dynamics"], "dynamics", h0, h_tau, seed)
    instr0 = build_instrument(data["instruments"]["initial"], "instruments.initial", h0, seed)
    instr_tau = build_instrument(data["instruments"]["final"], "instruments.final", h_tau, seed)
    for name, instr, h in (("initial", instr0, h0), ("final", instr_tau, h_tau)):
        if instr.dim != h.dim:
            raise ConfigError(f"instruments.{name}", f"dimension {instr.dim} != system dimension {h.dim}")
        if len(instr) != h.n_levels:
            raise ConfigError(f"instruments.{name}",
                              f"{len(instr)} outcomes but the Hamiltonian has {h.n_levels} levels")
    return Scenario(protocol, instr0, instr_tau, float(data["beta"]))


def build_tolerances(data: dict, overrides: dict | None = None) -> Tolerances:
    merged = dict(data.get("tolerances", {}))
    merged.update(overrides or {})
    try:
        return DEFAULT.updated(merged)
    except KeyError as exc:
        raise ConfigError("tolerances", str(exc.args[0])) from None


@dataclass
class VerifyConfig:
    raw: dict
    seed: int
    scenario: Scenario
    checks: list
    tolerances: Tolerances
    adversarial: dict | None


DEFAULT_CHECKS = ["jarzynski", "backward_jarzynski", "crooks", "detailed_balance"]


def parse_verify_config(data: Any, seed: int | None = None,
                        tol_overrides: dict | None = None) -> VerifyConfig:
    validate(data, SCENARIO_SCHEMA)
    seed = int(data.get("seed", 0) if seed is None else seed)
    tolerances = build_tolerances(data, tol_overrides)
    scenario = build_scenario(data, seed)
    checks = list(data.get("checks", DEFAULT_CHECKS))
    if not scenario.protocol.is_unitary:
        for name in ("backward_jarzynski", "crooks", "detailed_balance"):
            if name in checks:
                raise ConfigError("checks", f"{name!r} needs unitary dynamics")
    adv = data.get("adversarial")
    if adv is not None and not scenario.protocol.is_unitary and adv.get("free_dynamics", True):
        raise ConfigError("adversarial.free_dynamics", "free dynamics search needs unitary dynamics")
    return VerifyConfig(data, seed, scenario, checks, tolerances, adv)
