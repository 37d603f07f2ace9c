from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy import stats as scipy_stats

from .limit_laws import PmfVector

MIN_HILL_K = 10


def _finite_or_none(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


class HillEstimationError(ValueError):
    pass


def empirical_pmf(samples: Sequence[int] | np.ndarray, r_max: int) -> PmfVector:
    values = np.asarray(samples, dtype=np.int64)
    if values.size == 0:
        raise ValueError("empirical pmf needs at least one sample")
    if (values < 0).any():
        raise ValueError("samples must be nonnegative integers")
    in_range = values[values <= r_max]
    counts = np.bincount(in_range, minlength=r_max + 1)
    tail = (values.size - in_range.size) / values.size
    return PmfVector(counts / values.size, tail)


def rebucket(pmf: PmfVector, r_max: int) -> PmfVector:
    """Pool everything above r_max into the tail; r_max may not exceed pmf.r_max."""
    if r_max > pmf.r_max:
        raise ValueError(f"cannot extend a pmf from r_max={pmf.r_max} to {r_max}")
    if r_max == pmf.r_max:
        return pmf
    excess = math.fsum(pmf.masses[r_max + 1 :])
    stderr = pmf.stderr[: r_max + 1] if pmf.stderr is not None else None
    return PmfVector(pmf.masses[: r_max + 1], pmf.tail_mass + excess, stderr)


def total_variation(p: PmfVector, q: PmfVector) -> float:
    r_max = min(p.r_max, q.r_max)
    p, q = rebucket(p, r_max), rebucket(q, r_max)
    distance = 0.5 * (
        float(np.sum(np.abs(p.masses - q.masses))) + abs(p.tail_mass - q.tail_mass)
    )
    return min(1.0, distance)


def hill_tail_index(samples: Sequence[int] | np.ndarray, k: int) -> float:
    """Hill estimate from the k largest positive samples against the (k+1)-th.

    Zeros are excluded; ties are kept unless every log-spacing vanishes.
    """
    if k < MIN_HILL_K:
        raise HillEstimationError(f"k must be at least {MIN_HILL_K}, got {k}")
    values = np.asarray(samples, dtype=float)
    positive = np.sort(values[values > 0])[::-1]
    if k >= positive.size:
        raise HillEstimationError(
            f"k={k} needs more than k positive samples, got {positive.size}"
        )
    log_spacings = np.log(positive[:k] / positive[k])
    denominator = float(np.sum(log_spacings))
    if denominator <= 0:
        raise HillEstimationError("degenerate order statistics: zero log-spacing")
    return k / denominator


def two_proportion_z_test(
    success_a: int, n_a: int, success_b: int, n_b: int
) -> tuple[float, float]:
    """z statistic and one-sided p-value for H1: rate_a > rate_b (pooled variance)."""
    if n_a < 1 or n_b < 1:
        raise ValueError("both groups need at least one trial")
    rate_a, rate_b = success_a / n_a, success_b / n_b
    pooled = (success_a + success_b) / (n_a + n_b)
    spread = math.sqrt(pooled * (1.0 - pooled) * (1.0 / n_a + 1.0 / n_b))
    if spread == 0:
        z = 0.0 if rate_a == rate_b else math.copysign(math.inf, rate_a - rate_b)
    else:
        z = (rate_a - rate_b) / spread
    return z, float(scipy_stats.norm.sf(z))


@dataclass
class ComparisonReport:
    tv_distance: float
    sample_size: int
    r_max: int
    contributions: list[float]
    metadata: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def compare(
        cls, empirical: PmfVector, reference: PmfVector, sample_size: int, **metadata
    ) -> ComparisonReport:
        r_max = min(empirical.r_max, reference.r_max)
        p, q = rebucket(empirical, r_max), rebucket(reference, r_max)
        contributions = 0.5 * np.abs(p.masses - q.masses)
        contributions = np.append(contributions, 0.5 * abs(p.tail_mass - q.tail_mass))
        return cls(
            tv_distance=total_variation(p, q),
            sample_size=sample_size,
            r_max=r_max,
            contributions=[float(c) for c in contributions],
            metadata=dict(metadata),
        )

    def to_json(self) -> str:
        payload = {
            "tv": self.tv_distance,
            "n_samples": self.sample_size,
            "r_max": self.r_max,
            "seed": self.metadata.get("seed"),
            "regime": self.metadata.get("regime"),
            "runtime_ms": self.metadata.get("runtime_ms"),
            "metadata": {
                key: _finite_or_none(value)
                for key, value in self.metadata.items()
                if key not in {"seed", "regime", "runtime_ms"}
            },
            "contributions": self.contributions,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")
