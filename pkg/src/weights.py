from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

SUPPORTED_MOMENTS = (1, 2, 3, 4)
DISCRETE_SUM_TOLERANCE = 1e-12

_NUMBER_RE = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")


class WeightModelError(ValueError):
    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class WeightSpecError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


@dataclass(frozen=True)
class Degenerate:
    c: float


@dataclass(frozen=True)
class Exponential:
    rate: float


@dataclass(frozen=True)
class Pareto:
    """Density alpha * xmin**alpha * x**(-alpha - 1) on [xmin, inf)."""

    alpha: float
    xmin: float


@dataclass(frozen=True)
class FiniteDiscrete:
    atoms: tuple[tuple[float, float], ...]

    @property
    def values(self) -> np.ndarray:
        return np.array([value for value, _prob in self.atoms], dtype=float)

    @property
    def probs(self) -> np.ndarray:
        return np.array([prob for _value, prob in self.atoms], dtype=float)


WeightModel = Union[Degenerate, Exponential, Pareto, FiniteDiscrete]


@dataclass(frozen=True)
class MomentValue:
    finite: bool
    value: float = math.inf

    def __float__(self) -> float:
        return self.value if self.finite else math.inf


def _require_positive(value: float, field: str) -> None:
    if not math.isfinite(value) or value <= 0:
        raise WeightModelError(f"{field} must be a positive real, got {value!r}", field)


def validate(model: WeightModel) -> None:
    if isinstance(model, Degenerate):
        if not math.isfinite(model.c) or model.c < 0:
            raise WeightModelError(f"c must be nonnegative, got {model.c!r}", "c")
    elif isinstance(model, Exponential):
        _require_positive(model.rate, "rate")
    elif isinstance(model, Pareto):
        _require_positive(model.alpha, "alpha")
        _require_positive(model.xmin, "xmin")
    elif isinstance(model, FiniteDiscrete):
        if not model.atoms:
            raise WeightModelError("discrete model needs at least one atom", "atoms")
        for index, (value, prob) in enumerate(model.atoms):
            if not math.isfinite(value) or value < 0:
                raise WeightModelError(
                    f"atom {index} value must be nonnegative, got {value!r}",
                    f"atoms[{index}].value",
                )
            if not math.isfinite(prob) or prob < 0 or prob > 1:
                raise WeightModelError(
                    f"atom {index} probability must lie in [0, 1], got {prob!r}",
                    f"atoms[{index}].prob",
                )
        total = math.fsum(prob for _value, prob in model.atoms)
        if abs(total - 1.0) > DISCRETE_SUM_TOLERANCE:
            raise WeightModelError(
                f"atom probabilities sum to {total!r}, expected 1", "atoms"
            )
    else:
        raise WeightModelError(f"unknown weight model {model!r}", "variant")


def moment(model: WeightModel, k: int) -> MomentValue:
    if k not in SUPPORTED_MOMENTS:
        raise WeightModelError(
            f"moment order must be one of {SUPPORTED_MOMENTS}, got {k!r}", "k"
        )
    if isinstance(model, Degenerate):
        return MomentValue(True, model.c**k)
    if isinstance(model, Exponential):
        return MomentValue(True, math.factorial(k) / model.rate**k)
    if isinstance(model, Pareto):
        if model.alpha <= k:
            return MomentValue(False)
        return MomentValue(True, model.alpha * model.xmin**k / (model.alpha - k))
    if isinstance(model, FiniteDiscrete):
        return MomentValue(
            True, math.fsum(prob * value**k for value, prob in model.atoms)
        )
    raise WeightModelError(f"unknown weight model {model!r}", "variant")


def sample(model: WeightModel, count: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(model, Degenerate):
        return np.full(count, float(model.c))
    if isinstance(model, Exponential):
        return rng.exponential(1.0 / model.rate, size=count)
    if isinstance(model, Pareto):
        # numpy's pareto is the Lomax law; shifting by one gives the classical form.
        return model.xmin * (1.0 + rng.pareto(model.alpha, size=count))
    if isinstance(model, FiniteDiscrete):
        probs = model.probs
        return rng.choice(model.values, size=count, p=probs / probs.sum())
    raise WeightModelError(f"unknown weight model {model!r}", "variant")


def zero_mass(model: WeightModel) -> float:
    """P(weight == 0)."""
    if isinstance(model, Degenerate):
        return 1.0 if model.c == 0 else 0.0
    if isinstance(model, FiniteDiscrete):
        return math.fsum(prob for value, prob in model.atoms if value == 0)
    return 0.0


def has_power_law_tail(model: WeightModel) -> bool:
    return isinstance(model, Pareto)


def _parse_number(text: str, pos: int, what: str) -> tuple[float, int]:
    match = _NUMBER_RE.match(text, pos)
    if not match:
        raise WeightSpecError(f"expected a number for {what}", pos)
    return float(match.group(0)), match.end()


def _expect(text: str, pos: int, char: str) -> int:
    if pos >= len(text) or text[pos] != char:
        found = repr(text[pos]) if pos < len(text) else "end of input"
        raise WeightSpecError(f"expected {char!r}, found {found}", pos)
    return pos + 1


def _expect_end(text: str, pos: int) -> None:
    if pos != len(text):
        raise WeightSpecError(f"unexpected trailing text {text[pos:]!r}", pos)


def parse_weight_spec(text: str) -> WeightModel:
    """Parse "degenerate:c", "exp:rate", "pareto:alpha,xmin" or "discrete:v:p,v:p,...".

    Whitespace is not permitted; the returned model is validated.
    """
    kind, sep, _rest = text.partition(":")
    if not sep:
        raise WeightSpecError("missing ':' after model name", len(text))
    pos = len(kind) + 1
    model: WeightModel
    if kind == "degenerate":
        c, pos = _parse_number(text, pos, "c")
        _expect_end(text, pos)
        model = Degenerate(c)
    elif kind == "exp":
        rate, pos = _parse_number(text, pos, "rate")
        _expect_end(text, pos)
        model = Exponential(rate)
    elif kind == "pareto":
        alpha, pos = _parse_number(text, pos, "alpha")
        pos = _expect(text, pos, ",")
        xmin, pos = _parse_number(text, pos, "xmin")
        _expect_end(text, pos)
        model = Pareto(alpha, xmin)
    elif kind == "discrete":
        atoms: list[tuple[float, float]] = []
        while True:
            value, pos = _parse_number(text, pos, "atom value")
            pos = _expect(text, pos, ":")
            prob, pos = _parse_number(text, pos, "atom probability")
            atoms.append((value, prob))
            if pos == len(text):
                break
            pos = _expect(text, pos, ",")
        model = FiniteDiscrete(tuple(atoms))
    else:
        raise WeightSpecError(f"unknown weight model {kind!r}", 0)
    validate(model)
    return model


def format_weight_spec(model: WeightModel) -> str:
    if isinstance(model, Degenerate):
        return f"degenerate:{model.c!r}"
    if isinstance(model, Exponential):
        return f"exp:{model.rate!r}"
    if isinstance(model, Pareto):
        return f"pareto:{model.alpha!r},{model.xmin!r}"
    if isinstance(model, FiniteDiscrete):
        return "discrete:" + ",".join(f"{v!r}:{p!r}" for v, p in model.atoms)
    raise WeightModelError(f"unknown weight model {model!r}", "variant")
