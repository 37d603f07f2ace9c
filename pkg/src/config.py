from __future__ import annotations

import math
import os
import re
from dataclasses import asdict, dataclass, replace
from typing import Any, Iterable, Literal

import yaml

from .limit_laws import (
    DEFAULT_N_MIX,
    DEFAULT_R_MAX,
    MAX_R_MAX,
    Balanced,
    Dense,
    RegimeError,
    RegimeLimit,
    Sparse,
    validate_limit,
)
from .projector import DEFAULT_PAIR_CAP
from .weights import WeightModel, WeightSpecError, format_weight_spec, parse_weight_spec

CONFIG_ENV_KEY = "CONFIG_PATH"
DEFAULT_CONFIG_PATH = "config.yml"

REGIMES = ("sparse", "balanced", "dense")
DEGREE_ESTIMATORS = ("all_vertices", "v1_only")
VALID_LOG_LEVELS = {"CRITICAL", "ERROR", "WARNING", "INFO", "DEBUG"}
KNOWN_KEYS = {
    "regime",
    "beta",
    "m_rule",
    "n_grid",
    "p1",
    "p2",
    "replicates",
    "master_seed",
    "r_max",
    "n_mix",
    "degree_estimator",
    "output_dir",
    "log_level",
    "workers",
    "pair_cap",
    "allow_infinite_a2",
    "record_runtimes",
    "results_database_path",
}

_M_RULE_RE = re.compile(r"^(pow|lin):([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)$")

Regime = Literal["sparse", "balanced", "dense"]
DegreeEstimator = Literal["all_vertices", "v1_only"]


class ConfigError(ValueError):
    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        where = []
        if field:
            where.append(f"field '{field}'")
        if line:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.field = field
        self.line = line


@dataclass(frozen=True)
class MRule:
    kind: Literal["pow", "lin"]
    value: float

    def attributes_for(self, n: int) -> int:
        if self.kind == "pow":
            return max(1, round(n**self.value))
        return max(1, round(self.value * n))

    def __str__(self) -> str:
        return f"{self.kind}:{self.value!r}"


@dataclass(frozen=True)
class ExperimentConfig:
    regime: Regime
    n_grid: tuple[int, ...]
    p1: WeightModel
    p2: WeightModel
    beta: float | None = None
    m_rule: MRule | None = None
    replicates: int = 1
    master_seed: int = 0
    r_max: int = DEFAULT_R_MAX
    n_mix: int = DEFAULT_N_MIX
    degree_estimator: DegreeEstimator = "all_vertices"
    output_dir: str = "results"
    log_level: str = "INFO"
    workers: int = 1
    pair_cap: int = DEFAULT_PAIR_CAP
    allow_infinite_a2: bool = False
    record_runtimes: bool = False
    results_database_path: str | None = None

    def attributes_for(self, n: int) -> int:
        if self.regime == "balanced":
            assert self.beta is not None
            return max(1, round(self.beta * n))
        assert self.m_rule is not None
        return self.m_rule.attributes_for(n)

    def limit(self) -> RegimeLimit:
        if self.regime == "sparse":
            return Sparse()
        if self.regime == "balanced":
            assert self.beta is not None
            return Balanced(self.beta, self.p1, self.p2, self.allow_infinite_a2)
        return Dense(self.p1, self.p2)

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["p1"] = format_weight_spec(self.p1)
        data["p2"] = format_weight_spec(self.p2)
        data["m_rule"] = str(self.m_rule) if self.m_rule else None
        data["n_grid"] = list(self.n_grid)
        return data


def parse_m_rule(text: Any) -> MRule:
    match = _M_RULE_RE.match(str(text).strip())
    if not match:
        raise ValueError(f"m_rule must look like 'pow:<exponent>' or 'lin:<c>', got {text!r}")
    value = float(match.group(2))
    if not math.isfinite(value) or value <= 0:
        raise ValueError("m_rule parameter must be positive")
    return MRule(match.group(1), value)  # type: ignore[arg-type]


def _key_lines(text: str) -> dict[str, int]:
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    if not isinstance(node, yaml.MappingNode):
        return {}
    return {
        str(key.value): key.start_mark.line + 1
        for key, _value in node.value
        if isinstance(key, yaml.ScalarNode)
    }


def _as_int(data: dict[str, Any], key: str, default: int, lines: dict[str, int]) -> int:
    raw = data.get(key, default)
    if isinstance(raw, bool):
        raise ConfigError(f"{key} must be an integer", key, lines.get(key))
    try:
        value = int(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be an integer", key, lines.get(key))
    if isinstance(raw, float) and raw != value:
        raise ConfigError(f"{key} must be an integer", key, lines.get(key))
    return value


def _as_bool(data: dict[str, Any], key: str, lines: dict[str, int]) -> bool:
    raw = data.get(key, False)
    if not isinstance(raw, bool):
        raise ConfigError(f"{key} must be true or false", key, lines.get(key))
    return raw


def _weight(data: dict[str, Any], key: str, lines: dict[str, int]) -> WeightModel:
    raw = data.get(key)
    if raw is None:
        raise ConfigError(f"Config missing '{key}'", key, lines.get(key))
    try:
        return parse_weight_spec(str(raw))
    except WeightSpecError as exc:
        raise ConfigError(f"malformed weight specifier: {exc}", key, lines.get(key))
    except ValueError as exc:
        raise ConfigError(f"invalid weight model: {exc}", key, lines.get(key))


def config_from_mapping(
    data: dict[str, Any], lines: dict[str, int] | None = None
) -> ExperimentConfig:
    lines = lines or {}
    unknown = sorted(set(data) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown key '{unknown[0]}'", unknown[0], lines.get(unknown[0]))

    regime = str(data.get("regime") or "").strip().lower()
    if regime not in REGIMES:
        raise ConfigError(
            f"unknown regime '{regime}'. Must be one of {list(REGIMES)}",
            "regime",
            lines.get("regime"),
        )

    raw_grid = data.get("n_grid")
    if not isinstance(raw_grid, list) or not raw_grid:
        raise ConfigError("n_grid must be a nonempty list", "n_grid", lines.get("n_grid"))
    try:
        n_grid = tuple(int(n) for n in raw_grid)
    except (TypeError, ValueError):
        raise ConfigError("n_grid entries must be integers", "n_grid", lines.get("n_grid"))
    if any(isinstance(raw, bool) or raw != n for raw, n in zip(raw_grid, n_grid)):
        raise ConfigError("n_grid entries must be integers", "n_grid", lines.get("n_grid"))
    if any(n < 1 for n in n_grid):
        raise ConfigError("n_grid entries must be positive", "n_grid", lines.get("n_grid"))
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ConfigError("n_grid must be strictly increasing", "n_grid", lines.get("n_grid"))

    beta: float | None = None
    m_rule: MRule | None = None
    if regime == "balanced":
        if data.get("m_rule") is not None:
            raise ConfigError(
                "balanced regime fixes m = round(beta * n); remove m_rule",
                "m_rule",
                lines.get("m_rule"),
            )
        try:
            beta = float(data.get("beta"))  # type: ignore[arg-type]
        except (TypeError, ValueError):
            raise ConfigError("balanced regime needs a numeric beta", "beta", lines.get("beta"))
        if not math.isfinite(beta) or beta <= 0:
            raise ConfigError("beta must be positive", "beta", lines.get("beta"))
    else:
        if data.get("beta") is not None:
            raise ConfigError(
                f"beta only applies to the balanced regime, not {regime}",
                "beta",
                lines.get("beta"),
            )
        if data.get("m_rule") is None:
            raise ConfigError(f"{regime} regime needs an m_rule", "m_rule", lines.get("m_rule"))
        try:
            m_rule = parse_m_rule(data["m_rule"])
        except ValueError as exc:
            raise ConfigError(str(exc), "m_rule", lines.get("m_rule"))
        _check_m_rule(regime, m_rule, n_grid, lines.get("m_rule"))

    p1 = _weight(data, "p1", lines)
    p2 = _weight(data, "p2", lines)

    replicates = _as_int(data, "replicates", 1, lines)
    if replicates < 1:
        raise ConfigError("replicates must be positive", "replicates", lines.get("replicates"))
    master_seed = _as_int(data, "master_seed", 0, lines)
    if not 0 <= master_seed < 2**64:
        raise ConfigError(
            "master_seed must be a 64-bit unsigned integer",
            "master_seed",
            lines.get("master_seed"),
        )
    r_max = _as_int(data, "r_max", DEFAULT_R_MAX, lines)
    if not 0 <= r_max <= MAX_R_MAX:
        raise ConfigError(f"r_max must lie in [0, {MAX_R_MAX}]", "r_max", lines.get("r_max"))
    n_mix = _as_int(data, "n_mix", DEFAULT_N_MIX, lines)
    if n_mix < 1:
        raise ConfigError("n_mix must be positive", "n_mix", lines.get("n_mix"))
    workers = _as_int(data, "workers", 1, lines)
    if workers < 1:
        raise ConfigError("workers must be positive", "workers", lines.get("workers"))
    pair_cap = _as_int(data, "pair_cap", DEFAULT_PAIR_CAP, lines)

    degree_estimator = str(data.get("degree_estimator") or "all_vertices")
    if degree_estimator not in DEGREE_ESTIMATORS:
        raise ConfigError(
            f"degree_estimator must be one of {list(DEGREE_ESTIMATORS)}",
            "degree_estimator",
            lines.get("degree_estimator"),
        )

    log_level = str(data.get("log_level") or "INFO").upper()
    if log_level not in VALID_LOG_LEVELS:
        raise ConfigError(
            f"Invalid log_level '{log_level}'. Must be one of {sorted(VALID_LOG_LEVELS)}",
            "log_level",
            lines.get("log_level"),
        )

    output_dir = str(data.get("output_dir") or "results")
    results_database_path = data.get("results_database_path")

    config = ExperimentConfig(
        regime=regime,  # type: ignore[arg-type]
        n_grid=n_grid,
        p1=p1,
        p2=p2,
        beta=beta,
        m_rule=m_rule,
        replicates=replicates,
        master_seed=master_seed,
        r_max=r_max,
        n_mix=n_mix,
        degree_estimator=degree_estimator,  # type: ignore[arg-type]
        output_dir=output_dir,
        log_level=log_level,
        workers=workers,
        pair_cap=pair_cap,
        allow_infinite_a2=_as_bool(data, "allow_infinite_a2", lines),
        record_runtimes=_as_bool(data, "record_runtimes", lines),
        results_database_path=(
            str(results_database_path) if results_database_path else None
        ),
    )
    try:
        validate_limit(config.limit())
    except RegimeError as exc:
        raise ConfigError(str(exc), exc.field, lines.get(exc.field or ""))
    return config


def _check_m_rule(
    regime: str, rule: MRule, n_grid: tuple[int, ...], line: int | None
) -> None:
    """Sparse needs m/n -> 0, dense needs m/n -> inf, also visible on the grid."""
    if regime == "sparse":
        if rule.kind == "lin" or rule.value >= 1:
            raise ConfigError(f"sparse regime needs m/n -> 0, got {rule}", "m_rule", line)
    elif rule.kind == "lin" or rule.value <= 1:
        raise ConfigError(f"dense regime needs m/n -> inf, got {rule}", "m_rule", line)
    if len(n_grid) > 1:
        first, last = n_grid[0], n_grid[-1]
        ratio_first = rule.attributes_for(first) / first
        ratio_last = rule.attributes_for(last) / last
        shrinking = ratio_last < ratio_first
        if (regime == "sparse") != shrinking:
            raise ConfigError(
                f"m/n goes from {ratio_first:.3g} to {ratio_last:.3g} on the grid, "
                f"inconsistent with the {regime} regime",
                "m_rule",
                line,
            )


def parse_config(text: str) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text) or {}
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark else None
        raise ConfigError(f"malformed YAML: {exc.problem}", line=line)
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping of keys to values")
    return config_from_mapping(data, _key_lines(text))


def parse_overrides(overrides: Iterable[str]) -> dict[str, Any]:
    parsed: dict[str, Any] = {}
    for item in overrides:
        key, sep, raw = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown key '{key}'", key)
        parsed[key] = yaml.safe_load(raw) if raw.strip() else None
    return parsed


def load_config(
    path: str | None = None, overrides: Iterable[str] = ()
) -> ExperimentConfig:
    config_path = path or os.environ.get(CONFIG_ENV_KEY, DEFAULT_CONFIG_PATH)
    with open(config_path, "r", encoding="utf-8") as fh:
        text = fh.read()
    extra = parse_overrides(overrides)
    if not extra:
        return parse_config(text)
    try:
        data = yaml.safe_load(text) or {}
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark else None
        raise ConfigError(f"malformed YAML: {exc.problem}", line=line)
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping of keys to values")
    data.update(extra)
    lines = {key: line for key, line in _key_lines(text).items() if key not in extra}
    return config_from_mapping(data, lines)


def with_output_dir(config: ExperimentConfig, output_dir: str) -> ExperimentConfig:
    return replace(config, output_dir=output_dir)
