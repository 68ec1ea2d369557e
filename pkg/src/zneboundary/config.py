"""Experiment configuration: loading, validation, overrides, and hashing.

A configuration is a flat-sectioned YAML (or JSON) file:

    model:     {type: deterministic_limit_binary, kappa: 1.0}
    rule:      {scales: [1, 3], alloc: uniform}        # or [w..] or optimal
    grid:      {mode: auto, span: [0.1, 10.0], points_per_decade: 40}
               # or {mode: explicit, eps: [...]}
    budgets:   {lo: 1.0e3, hi: 1.0e7, per_decade: 3}   # or {values: [...]}
    engine:    {kind: exact}                            # or monte_carlo + replicates
    windows:   {variance: [1.0e-4, 1.0e-3], bias: [1.0e-4, 1.0e-3], n_points: 40}
    bootstrap: {statistics: [s_obs, c_fit], n_replicates: 1000, level: 0.95, seed: 7}
    seed:      12345                                    # mandatory for monte_carlo
    output:    {dir: out, prefix: run}

Grids and regression windows are fixed here, before any estimate is
computed; reports echo them together with the configuration hash so a run
can be reproduced byte-for-byte.  Command-line ``--set section.key=value``
overrides are applied before validation and enter the hash.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError
from .models import MonomialBalanceModel, model_from_spec
from .rules import RichardsonRule, build_rule

__all__ = ["ExperimentConfig", "load_config", "parse_config", "config_hash"]

DEFAULT_GRID = {"mode": "auto", "span": [0.1, 10.0], "points_per_decade": 40}
DEFAULT_REPLICATES = 100  # Monte Carlo replicates unless configured
DEFAULT_BOOTSTRAP = {"n_replicates": 1000, "level": 0.95}
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description plus its canonical raw form."""

    model_spec: dict
    rule_spec: dict
    grid: dict
    budgets: tuple[float, ...]
    engine: dict
    windows: dict
    bootstrap: dict | None
    seed: int | None
    output: dict
    raw: dict = field(repr=False)

    @property
    def realloc(self) -> str:
        return "optimal" if self.rule_spec.get("alloc") == "optimal" else "fixed"

    def model(self):
        return model_from_spec(self.model_spec)

    def rule(self) -> RichardsonRule | None:
        if isinstance(self.model(), MonomialBalanceModel) or not self.rule_spec:
            return None
        alloc = self.rule_spec.get("alloc", "uniform")
        if alloc == "optimal":
            # per-strength reallocation happens in the engines; the rule
            # itself carries uniform base fractions
            alloc = "uniform"
        return build_rule(self.rule_spec["scales"], alloc)

    @property
    def is_monte_carlo(self) -> bool:
        return self.engine["kind"] == "monte_carlo"

    @property
    def replicates(self) -> int:
        return int(self.engine.get("replicates", DEFAULT_REPLICATES))

    def variance_window(self) -> tuple[float, float] | None:
        win = self.windows.get("variance")
        return (float(win[0]), float(win[1])) if win else None

    def bias_window(self) -> tuple[float, float] | None:
        win = self.windows.get("bias")
        return (float(win[0]), float(win[1])) if win else None

    def hash(self) -> str:
        return config_hash(self.raw)

    def out_path(self, suffix: str) -> Path:
        out = self.output
        return Path(out.get("dir", ".")) / f"{out.get('prefix', 'run')}_{suffix}"


def config_hash(raw: dict) -> str:
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _apply_override(raw: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"override must look like section.key=value, got {assignment!r}")
    path, _, value = assignment.partition("=")
    keys = path.strip().split(".")
    target = raw
    for key in keys[:-1]:
        target = target.setdefault(key, {})
        if not isinstance(target, dict):
            raise ConfigError(f"cannot override through non-mapping key {key!r}")
    try:
        target[keys[-1]] = yaml.safe_load(value)
    except yaml.YAMLError as err:
        raise ConfigError(f"unparsable override value {value!r}: {err}") from err


def _expand_budgets(spec) -> tuple[float, ...]:
    if isinstance(spec, (list, tuple)):
        values = [float(b) for b in spec]
    elif isinstance(spec, dict) and "values" in spec:
        values = [float(b) for b in spec["values"]]
    elif isinstance(spec, dict) and {"lo", "hi", "per_decade"} <= set(spec):
        lo, hi = float(spec["lo"]), float(spec["hi"])
        if not 0 < lo < hi:
            raise ConfigError(f"budget ladder needs 0 < lo < hi, got {spec}")
        per_decade = int(spec["per_decade"])
        n = int(round(np.log10(hi / lo) * per_decade)) + 1
        values = list(np.geomspace(lo, hi, max(n, 2)))
    else:
        raise ConfigError(
            f"budgets must be a list, {{values: [...]}}, or {{lo, hi, per_decade}}; got {spec!r}"
        )
    if any(b <= 0 for b in values):
        raise ConfigError("budgets must be positive")
    if sorted(values) != values:
        raise ConfigError("budgets must be sorted ascending")
    return tuple(values)


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a raw mapping into an ExperimentConfig."""
    if not isinstance(raw, dict):
        raise ConfigError(f"configuration root must be a mapping, got {type(raw).__name__}")
    unknown = set(raw) - {
        "model", "rule", "grid", "budgets", "engine", "windows", "bootstrap",
        "seed", "output",
    }
    if unknown:
        raise ConfigError(f"unknown configuration sections {sorted(unknown)}")
    for section in ("model", "budgets"):
        if section not in raw:
            raise ConfigError(f"missing configuration section {section!r}")

    model_spec = raw["model"]
    model = model_from_spec(model_spec)  # validates type and parameters

    rule_spec = raw.get("rule") or {}
    if not isinstance(model, MonomialBalanceModel) and rule_spec:
        if "scales" not in rule_spec:
            raise ConfigError("rule section needs scales (or set rule to null for "
                              "a noisy-vs-itself sweep)")
        alloc = rule_spec.get("alloc", "uniform")
        build_rule(rule_spec["scales"], "uniform" if alloc == "optimal" else alloc)
        rule_spec = {"scales": list(rule_spec["scales"]), "alloc": alloc}
    elif isinstance(model, MonomialBalanceModel):
        rule_spec = {}

    grid = {**DEFAULT_GRID, **raw.get("grid", {})}
    if grid["mode"] == "explicit":
        eps = grid.get("eps")
        if not eps:
            raise ConfigError("explicit grid needs at least one eps value")
        if sorted(eps) != list(eps) or eps[0] <= 0:
            raise ConfigError("explicit grid must be positive ascending")
    elif grid["mode"] == "auto":
        span = grid.get("span", [0.1, 10.0])
        if not 0 < float(span[0]) < float(span[1]):
            raise ConfigError(f"auto-grid span must be increasing positive, got {span}")
    else:
        raise ConfigError(f"grid mode must be auto or explicit, got {grid['mode']!r}")

    budgets = _expand_budgets(raw["budgets"])

    engine = {"kind": "exact", **raw.get("engine", {})}
    if engine["kind"] not in ("exact", "monte_carlo"):
        raise ConfigError(f"engine kind must be exact or monte_carlo, got {engine['kind']!r}")

    if not rule_spec and not isinstance(model, MonomialBalanceModel):
        if engine["kind"] == "monte_carlo":
            raise ConfigError("the monte_carlo engine needs a rule section")
        if grid["mode"] != "explicit":
            raise ConfigError("a rule-less sweep needs an explicit grid "
                              "(the auto window is centered on the rule's boundary)")

    seed = raw.get("seed")
    if engine["kind"] == "monte_carlo":
        if seed is None:
            raise ConfigError("a master seed is mandatory for the monte_carlo engine")
        if isinstance(model, MonomialBalanceModel):
            raise ConfigError("monomial balance models have no sampler; use the exact engine")
        if any(b != int(b) for b in budgets):
            raise ConfigError("monte_carlo budgets must be integers")
        if int(engine.get("replicates", DEFAULT_REPLICATES)) < 2:
            raise ConfigError("monte_carlo needs at least 2 replicates")

    windows = raw.get("windows", {})
    for name in ("variance", "bias"):
        win = windows.get(name)
        if win is not None and not (len(win) == 2 and 0 < float(win[0]) < float(win[1])):
            raise ConfigError(f"{name} window must be [lo, hi] with 0 < lo < hi, got {win}")

    bootstrap = raw.get("bootstrap")
    if bootstrap is not None:
        bootstrap = {**DEFAULT_BOOTSTRAP, **bootstrap}
        if engine["kind"] != "monte_carlo":
            raise ConfigError("bootstrap requires the monte_carlo engine (raw counts)")
        if "statistics" not in bootstrap:
            raise ConfigError("bootstrap section needs a statistics list")
        if "seed" not in bootstrap:
            raise ConfigError("bootstrap section needs its own seed")

    return ExperimentConfig(
        model_spec=model_spec,
        rule_spec=rule_spec,
        grid=grid,
        budgets=budgets,
        engine=engine,
        windows=windows,
        bootstrap=bootstrap,
        seed=None if seed is None else int(seed),
        output={"dir": ".", "prefix": "run", **raw.get("output", {})},
        raw=raw,
    )


def load_config(path, overrides: list[str] = ()) -> ExperimentConfig:
    """Load a YAML/JSON configuration file and apply --set overrides."""
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError(f"cannot parse configuration {path}: {err}") from err
    if raw is None:
        raise ConfigError(f"configuration {path} is empty")
    for assignment in overrides:
        _apply_override(raw, assignment)
    return parse_config(raw)
