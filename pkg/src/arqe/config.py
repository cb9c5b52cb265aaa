"""Experiment configuration: TOML in, resolved JSON out.

A config file has up to five tables::

    [operator]   kind = "pauli" | "two-qubit" | "h2" | "matrix" | "genes"
    [knots]      xs, ys (and optional start_slope); omit for the uniform baseline
    [rp]         r, p, delta, w_max (false disables the cap)
    [run]        seed, repetitions, targets, max_iterations, scaling_mode, ...
    [optimize]   criterion, n_knots, budget, repetitions, fixed_budget
    [benchmark]  instances, genes ("tabulated" | "random"), eval_repetitions

Every problem found while resolving a file is reported with the line of the
offending key.
"""
from __future__ import annotations

import json
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import SCALING_MODES, RpState, RunConfig
from .errors import ArqeError, ConfigError
from .linalg import (
    check_unitary,
    environment_from_observable,
    hermitian_eigensystem,
    load_matrix,
    unitary_eigensystem,
)
from .operators import build_h2, build_pauli_combo, build_two_qubit_example, gene_environment
from .optimizer import CRITERIA
from .pcf import KnotSet, validate_knots

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

OPERATOR_KINDS = ("pauli", "two-qubit", "h2", "matrix", "genes")
SECTIONS = ("operator", "knots", "rp", "run", "optimize", "benchmark")


def _locate(text: str, section: str, key: str | None) -> int | None:
    """1-based line of ``key`` inside ``[section]`` (or of the header itself)."""
    current = None
    header = re.compile(r"^\s*\[\s*([A-Za-z0-9_-]+)\s*\]")
    for n, line in enumerate(text.splitlines(), 1):
        m = header.match(line)
        if m:
            current = m.group(1)
            if key is None and current == section:
                return n
            continue
        if current == section and key is not None and re.match(rf"^\s*{re.escape(key)}\s*=", line):
            return n
    return None


class _Reader:
    """Typed access to one TOML table with line-aware errors."""

    def __init__(self, data: dict, text: str, source: str, section: str):
        self.data, self.text, self.source, self.section = data, text, source, section

    def fail(self, key: str | None, message: str):
        line = _locate(self.text, self.section, key)
        where = f"{self.source}:{line}" if line else self.source
        name = f"[{self.section}]" + (f" {key}" if key else "")
        raise ConfigError(f"{where}: {name}: {message}")

    def get(self, key, default, kind=float):
        if key not in self.data:
            return default
        value = self.data[key]
        try:
            if kind is float:
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise TypeError
                return float(value)
            if kind is int:
                if isinstance(value, bool) or not isinstance(value, int):
                    raise TypeError
                return int(value)
            if kind is str:
                if not isinstance(value, str):
                    raise TypeError
                return value
            if kind is list:
                if not isinstance(value, list):
                    raise TypeError
                return [float(v) for v in value]
        except (TypeError, ValueError):
            self.fail(key, f"expected {kind.__name__}, got {value!r}")
        raise AssertionError(kind)

    def choice(self, key, default, options):
        value = self.get(key, default, str)
        if value not in options:
            self.fail(key, f"must be one of {list(options)}, got {value!r}")
        return value

    def check_unknown(self, allowed):
        for key in self.data:
            if key not in allowed:
                self.fail(key, f"unknown key (allowed: {', '.join(allowed)})")


@dataclass
class ExperimentConfig:
    """Fully resolved experiment settings; ``to_dict`` round-trips through JSON."""

    operator: dict = field(default_factory=lambda: {"kind": "genes", "genes": [np.pi / 2, 0.0, 0.0]})
    knots: KnotSet | None = None
    rp: dict = field(default_factory=dict)
    seed: int = 0
    repetitions: int | None = None
    targets: list[int] | None = None
    max_iterations: int = 2000
    scaling_mode: str = "knots"
    gate_noise_sigma: float = 0.0
    optimize: dict = field(default_factory=dict)
    benchmark: dict = field(default_factory=dict)
    base_dir: str = "."

    # -- derived --------------------------------------------------------

    def observable(self):
        """``(kind, matrix)`` where kind is ``"hermitian"`` or ``"unitary"``."""
        op = self.operator
        kind = op["kind"]
        if kind == "pauli":
            return "hermitian", build_pauli_combo(*op["coefficients"])
        if kind == "two-qubit":
            return "hermitian", build_two_qubit_example()
        if kind == "h2":
            return "hermitian", build_h2(*op["g"])
        if kind == "genes":
            return "unitary", gene_environment(*op["genes"])
        path = Path(op["path"])
        if not path.is_absolute():
            path = Path(self.base_dir) / path
        return load_matrix(path)

    def environment(self):
        """``(U, reference)``: the environment unitary and the eigensystem to score against."""
        kind, M = self.observable()
        if kind == "unitary" or self.operator.get("environment") == "unitary":
            U = check_unitary(M)
            return U, unitary_eigensystem(U)
        return environment_from_observable(M), hermitian_eigensystem(M)

    @property
    def dim(self) -> int:
        return self.observable()[1].shape[0]

    @property
    def n_qubits(self) -> int:
        return max(1, int(round(np.log2(self.dim))))

    def resolved_repetitions(self) -> int:
        return self.repetitions or 1000 * self.n_qubits

    def resolved_targets(self) -> list[int]:
        return self.targets if self.targets is not None else list(range(self.dim))

    def rp_state(self) -> RpState:
        return RpState(**self.rp)

    def resolved_knots(self) -> KnotSet:
        return self.knots or KnotSet.uniform(self.optimize.get("n_knots", 2))

    def run_config(self, target: int = 0, knots: KnotSet | None = None, environment=None) -> RunConfig:
        U, ref = environment or self.environment()
        return RunConfig(
            U, ref, knots or self.resolved_knots(), self.rp_state(), target,
            self.max_iterations, self.scaling_mode, self.gate_noise_sigma,
        )

    def to_dict(self) -> dict:
        rp = self.rp_state()
        return {
            "operator": self.operator,
            "knots": None if self.knots is None else self.knots.to_dict(),
            "rp": {"w": rp.w, "r": rp.r, "p": rp.p, "delta": rp.delta, "w_max": rp.w_max},
            "run": {
                "seed": self.seed,
                "repetitions": self.resolved_repetitions(),
                "targets": self.resolved_targets(),
                "max_iterations": self.max_iterations,
                "scaling_mode": self.scaling_mode,
                "gate_noise_sigma": self.gate_noise_sigma,
            },
            "optimize": self.optimize,
            "benchmark": self.benchmark,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


_RP_MESSAGES = (
    ("reward", "r"), ("punishment", "p"), ("r*p", "p"), ("threshold", "delta"),
    ("scale", "w"), ("w_max", "w_max"),
)

OPTIMIZE_DEFAULTS = {
    "criterion": "speed", "n_knots": 2, "budget": 400, "repetitions": 300, "fixed_budget": 80,
}
BENCHMARK_DEFAULTS = {"instances": 100, "genes": "tabulated", "eval_repetitions": 1000}


def parse_config(text: str, source: str = "<config>", base_dir: str = ".") -> ExperimentConfig:
    """Resolve a TOML config, or a JSON config as embedded in emitted files."""
    if text.lstrip().startswith("{"):
        try:
            data = _from_resolved(json.loads(text))
        except (json.JSONDecodeError, AttributeError) as exc:
            raise ConfigError(f"{source}: {exc}") from None
        return resolve(data, "", source, base_dir)
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return resolve(data, text, source, base_dir)


def _from_resolved(data: dict) -> dict:
    """Turn a resolved JSON config (or a manifest holding one) back into tables."""
    data = dict(data.get("config", data))
    if data.get("knots") is None:
        data.pop("knots", None)
    if "rp" in data and data["rp"].get("w_max", 0) is None:
        data["rp"] = dict(data["rp"], w_max=False)
    return data


def resolve(data: dict, text: str, source: str, base_dir: str = ".") -> ExperimentConfig:
    for name in data:
        if name not in SECTIONS:
            line = _locate(text, name, None)
            raise ConfigError(f"{source}:{line or '?'}: unknown table [{name}]")
        if not isinstance(data[name], dict):
            raise ConfigError(f"{source}:{_locate_key(text, name) or '?'}: {name} must be a table")
    cfg = ExperimentConfig(base_dir=base_dir)
    read = lambda s: _Reader(data.get(s, {}), text, source, s)  # noqa: E731

    op = read("operator")
    kind = op.choice("kind", "genes", OPERATOR_KINDS)
    if kind == "pauli":
        op.check_unknown(("kind", "coefficients"))
        coeffs = op.get("coefficients", None, list)
        if coeffs is None or len(coeffs) != 4:
            op.fail("coefficients", "pauli operators need four coefficients [aI, ax, ay, az]")
        cfg.operator = {"kind": kind, "coefficients": coeffs}
    elif kind == "two-qubit":
        op.check_unknown(("kind",))
        cfg.operator = {"kind": kind}
    elif kind == "h2":
        op.check_unknown(("kind", "g"))
        from .operators import H2_DEFAULTS

        g = op.get("g", list(H2_DEFAULTS), list)
        if len(g) != 6:
            op.fail("g", "expected six coefficients g0..g5")
        cfg.operator = {"kind": kind, "g": g}
    elif kind == "genes":
        op.check_unknown(("kind", "genes"))
        genes = op.get("genes", [np.pi / 2, 0.0, 0.0], list)
        if genes is None or len(genes) != 3:
            op.fail("genes", "expected [theta, phi, lambda]")
        cfg.operator = {"kind": kind, "genes": genes}
    else:
        op.check_unknown(("kind", "path", "environment"))
        path = op.get("path", None, str)
        if path is None:
            op.fail("kind", "matrix operators need a path")
        mode = op.choice("environment", "exponentiate", ("exponentiate", "unitary"))
        cfg.operator = {"kind": kind, "path": path, "environment": mode}

    if "knots" in data:
        kn = read("knots")
        kn.check_unknown(("xs", "ys", "start_slope"))
        xs, ys = kn.get("xs", None, list), kn.get("ys", None, list)
        if xs is None or ys is None:
            kn.fail(None, "knots need both xs and ys")
        knots = KnotSet(xs, ys, kn.choice("start_slope", "auto", ("auto", "zero", "secant")))
        problems = validate_knots(knots)
        if problems:
            kn.fail("xs", "; ".join(problems))
        cfg.knots = knots

    rp = read("rp")
    rp.check_unknown(("w", "r", "p", "delta", "w_max"))
    defaults = RpState()
    values = {k: rp.get(k, getattr(defaults, k)) for k in ("w", "r", "p", "delta")}
    if rp.data.get("w_max") is False:
        values["w_max"] = None
    else:
        values["w_max"] = rp.get("w_max", defaults.w_max)
    try:
        RpState(**values)
    except ArqeError as exc:
        msg = str(exc)
        culprit = next((k for prefix, k in _RP_MESSAGES if msg.startswith(prefix)), None)
        rp.fail(culprit if culprit in rp.data else None, msg)
    cfg.rp = values

    run = read("run")
    run.check_unknown(("seed", "repetitions", "targets", "max_iterations", "scaling_mode",
                       "gate_noise_sigma"))
    cfg.seed = run.get("seed", 0, int)
    if cfg.seed < 0:
        run.fail("seed", "seed must be non-negative")
    cfg.repetitions = run.get("repetitions", None, int)
    if cfg.repetitions is not None and cfg.repetitions < 1:
        run.fail("repetitions", "must be >= 1")
    cfg.max_iterations = run.get("max_iterations", 2000, int)
    if cfg.max_iterations < 1:
        run.fail("max_iterations", "must be >= 1")
    cfg.scaling_mode = run.choice("scaling_mode", "knots", SCALING_MODES)
    cfg.gate_noise_sigma = run.get("gate_noise_sigma", 0.0)
    if cfg.gate_noise_sigma < 0:
        run.fail("gate_noise_sigma", "must be >= 0")
    targets = run.data.get("targets")
    if targets is not None:
        if not isinstance(targets, list) or not all(isinstance(t, int) for t in targets):
            run.fail("targets", f"expected a list of integers, got {targets!r}")
        cfg.targets = targets

    opt = read("optimize")
    opt.check_unknown(tuple(OPTIMIZE_DEFAULTS))
    cfg.optimize = {
        "criterion": opt.choice("criterion", OPTIMIZE_DEFAULTS["criterion"], CRITERIA),
        **{k: opt.get(k, OPTIMIZE_DEFAULTS[k], int)
           for k in ("n_knots", "budget", "repetitions", "fixed_budget")},
    }
    for key in ("n_knots", "budget", "repetitions", "fixed_budget"):
        if cfg.optimize[key] < 1:
            opt.fail(key, "must be >= 1")

    bench = read("benchmark")
    bench.check_unknown(tuple(BENCHMARK_DEFAULTS))
    cfg.benchmark = {
        "instances": bench.get("instances", BENCHMARK_DEFAULTS["instances"], int),
        "genes": bench.choice("genes", BENCHMARK_DEFAULTS["genes"], ("tabulated", "random")),
        "eval_repetitions": bench.get("eval_repetitions", BENCHMARK_DEFAULTS["eval_repetitions"], int),
    }
    if cfg.benchmark["instances"] < 1:
        bench.fail("instances", "must be >= 1")

    # operator-dependent checks last, once everything else is known
    try:
        dim = cfg.dim
    except (ArqeError, OSError, KeyError, ValueError) as exc:
        op.fail("kind", f"cannot build operator: {exc}")
    if cfg.targets is not None:
        bad = [t for t in cfg.targets if not 0 <= t < dim]
        if bad:
            run.fail("targets", f"indices {bad} outside [0, {dim})")
    return cfg


def _locate_key(text: str, key: str) -> int | None:
    for n, line in enumerate(text.splitlines(), 1):
        if re.match(rf"^\s*{re.escape(key)}\s*=", line):
            return n
    return None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config(text, str(path), str(path.parent))
