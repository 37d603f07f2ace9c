from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy import stats

from .weights import (
    Degenerate,
    Exponential,
    FiniteDiscrete,
    Pareto,
    WeightModel,
    has_power_law_tail,
    moment,
    sample,
    validate,
    zero_mass,
)

LOGGER = logging.getLogger(__name__)

DEFAULT_R_MAX = 200
DEFAULT_N_MIX = 100_000
MAX_R_MAX = 10_000
NORMALIZATION_TOLERANCE = 1e-9
SIZE_BIAS_TAIL_LIMIT = 1e-6
MIX_CHUNK = 4096


class PmfError(ValueError):
    pass


class RegimeError(ValueError):
    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


@dataclass(frozen=True, eq=False)
class PmfVector:
    """Probability masses on {0, ..., r_max} plus the mass pooled above r_max."""

    masses: np.ndarray
    tail_mass: float = 0.0
    stderr: np.ndarray | None = None

    def __post_init__(self):
        masses = np.asarray(self.masses, dtype=float)
        object.__setattr__(self, "masses", masses)
        if masses.ndim != 1 or masses.size == 0:
            raise PmfError("masses must be a nonempty vector")
        if (masses < 0).any() or self.tail_mass < 0:
            raise PmfError("probability masses must be nonnegative")
        total = math.fsum(masses) + self.tail_mass
        if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
            raise PmfError(f"masses sum to {total!r}, expected 1")
        if self.stderr is not None:
            stderr = np.asarray(self.stderr, dtype=float)
            if stderr.shape != masses.shape:
                raise PmfError("stderr must align with masses")
            object.__setattr__(self, "stderr", stderr)

    @property
    def r_max(self) -> int:
        return self.masses.size - 1

    def mean(self) -> float:
        """Mean of the in-range part; the tail is not included."""
        return math.fsum(np.arange(self.masses.size) * self.masses)

    @classmethod
    def from_masses(
        cls, masses: np.ndarray, stderr: np.ndarray | None = None
    ) -> PmfVector:
        masses = np.clip(np.asarray(masses, dtype=float), 0.0, None)
        tail = max(0.0, 1.0 - math.fsum(masses))
        return cls(masses, tail, stderr)

    @classmethod
    def point_mass(cls, r: int, r_max: int) -> PmfVector:
        masses = np.zeros(r_max + 1)
        if r <= r_max:
            masses[r] = 1.0
            return cls(masses, 0.0)
        return cls(masses, 1.0)


@dataclass(frozen=True)
class Sparse:
    pass


@dataclass(frozen=True)
class Balanced:
    beta: float
    p1: WeightModel
    p2: WeightModel
    allow_infinite_a2: bool = False


@dataclass(frozen=True)
class Dense:
    p1: WeightModel
    p2: WeightModel


RegimeLimit = Union[Sparse, Balanced, Dense]


def validate_limit(limit: RegimeLimit) -> None:
    if isinstance(limit, Sparse):
        return
    validate(limit.p1)
    validate(limit.p2)
    if isinstance(limit, Balanced):
        if not math.isfinite(limit.beta) or limit.beta <= 0:
            raise RegimeError(f"beta must be positive, got {limit.beta!r}", "beta")
        if not moment(limit.p1, 2).finite and not limit.allow_infinite_a2:
            raise RegimeError(
                "balanced limit needs E X^2 < inf (set allow_infinite_a2 to explore)",
                "p1",
            )
        if not moment(limit.p1, 1).finite:
            raise RegimeError("balanced limit needs E X < inf", "p1")
    elif isinstance(limit, Dense):
        if not moment(limit.p1, 2).finite:
            raise RegimeError("dense limit needs E X^2 < inf", "p1")
    else:
        raise RegimeError(f"unknown regime {limit!r}", "regime")
    if not moment(limit.p2, 1).finite:
        raise RegimeError("limit needs E Y < inf", "p2")


def poisson_pmf(mu: float, r_max: int) -> PmfVector:
    if mu == 0:
        return PmfVector.point_mass(0, r_max)
    masses = stats.poisson.pmf(np.arange(r_max + 1), mu)
    tail = float(stats.poisson.sf(r_max, mu))
    return PmfVector(masses, tail)


def _monte_carlo_mixture(
    mus: np.ndarray, width: int, transform: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Average conditional Poisson(mu) pmfs over draws, chunk by chunk.

    With `transform`, each conditional pmf row is mapped through it first.
    Returns per-entry means and their standard errors.
    """
    support = np.arange(width if transform is None else transform.shape[0])
    out_width = width if transform is None else transform.shape[1]
    total = np.zeros(out_width)
    total_sq = np.zeros(out_width)
    for start in range(0, mus.size, MIX_CHUNK):
        chunk = mus[start : start + MIX_CHUNK]
        rows = stats.poisson.pmf(support[None, :], chunk[:, None])
        if transform is not None:
            rows = rows @ transform
        total += rows.sum(axis=0)
        total_sq += (rows**2).sum(axis=0)
    count = mus.size
    mean = total / count
    if count > 1:
        variance = np.clip(total_sq / count - mean**2, 0.0, None) * count / (count - 1)
        stderr = np.sqrt(variance / count)
    else:
        stderr = np.zeros(out_width)
    return mean, stderr


def mixed_poisson_pmf(
    mixing: WeightModel,
    scale: float,
    r_max: int,
    n_mix: int = DEFAULT_N_MIX,
    rng: np.random.Generator | None = None,
) -> PmfVector:
    """pmf of a Poisson variable with random mean scale * W, W ~ mixing.

    Closed forms for degenerate, exponential (geometric) and finite discrete
    mixing; Monte Carlo over n_mix draws of W otherwise.
    """
    validate(mixing)
    if scale < 0 or not math.isfinite(scale):
        raise PmfError(f"scale must be nonnegative, got {scale!r}")
    if not 0 <= r_max <= MAX_R_MAX:
        raise PmfError(f"r_max must lie in [0, {MAX_R_MAX}], got {r_max!r}")
    if n_mix < 1:
        raise PmfError("n_mix must be at least 1")
    if scale == 0:
        return PmfVector.point_mass(0, r_max)
    if isinstance(mixing, Degenerate):
        return poisson_pmf(mixing.c * scale, r_max)
    if isinstance(mixing, Exponential):
        success = mixing.rate / (mixing.rate + scale)
        masses = success * (1.0 - success) ** np.arange(r_max + 1)
        return PmfVector(masses, (1.0 - success) ** (r_max + 1))
    if isinstance(mixing, FiniteDiscrete):
        masses = np.zeros(r_max + 1)
        tail = 0.0
        for value, prob in mixing.atoms:
            component = poisson_pmf(value * scale, r_max)
            masses += prob * component.masses
            tail += prob * component.tail_mass
        return PmfVector(masses, tail)
    if rng is None:
        raise PmfError("Monte Carlo mixing needs a random stream")
    LOGGER.debug("Mixing %s over %s Monte Carlo draws", type(mixing).__name__, n_mix)
    mus = scale * sample(mixing, n_mix, rng)
    masses, stderr = _monte_carlo_mixture(mus, r_max + 1)
    return PmfVector.from_masses(masses, stderr)


def size_biased_pmf(base: PmfVector, mean: float | None = None) -> PmfVector:
    """P(tau = r) = (r + 1) P(base = r + 1) / E base, on {0, ..., base.r_max - 1}.

    Without `mean` the in-range mean stands in for E base, so the base tail
    must be negligible. With the exact mean the unresolved mass becomes tail.
    """
    if mean is None:
        if base.tail_mass >= SIZE_BIAS_TAIL_LIMIT:
            raise PmfError(
                f"base tail mass {base.tail_mass:.3g} too large for size biasing; "
                "raise r_max"
            )
        mean = base.mean()
    if mean <= 0:
        raise PmfError("size biasing needs a base law with positive mean")
    r = np.arange(base.masses.size)
    return PmfVector.from_masses(r[1:] * base.masses[1:] / mean)


def compound_poisson_pmf(lam: float, severity: PmfVector, r_max: int) -> PmfVector:
    """Panjer recursion for sum_{j <= N} tau_j with N ~ Poisson(lam)."""
    if lam < 0:
        raise PmfError(f"lambda must be nonnegative, got {lam!r}")
    f = severity.masses
    g = np.zeros(r_max + 1)
    g[0] = math.exp(-lam * (1.0 - f[0]))
    weighted = np.arange(f.size) * f
    for s in range(1, r_max + 1):
        k = min(s, f.size - 1)
        if k == 0:
            break
        g[s] = lam / s * float(np.dot(weighted[1 : k + 1], g[s - 1 :: -1][:k]))
    return PmfVector.from_masses(g)


def convolution_powers(severity: PmfVector, r_max: int, k_max: int) -> np.ndarray:
    """Row k holds the k-fold convolution of severity, truncated at r_max."""
    powers = np.zeros((k_max + 1, r_max + 1))
    powers[0, 0] = 1.0
    for k in range(1, k_max + 1):
        powers[k] = np.convolve(powers[k - 1], severity.masses)[: r_max + 1]
    return powers


def _tau_pmf(
    limit: Balanced, r_max: int, n_mix: int, rng: np.random.Generator | None
) -> PmfVector:
    a1 = moment(limit.p1, 1).value
    b1 = moment(limit.p2, 1).value
    scale = b1 / math.sqrt(limit.beta)
    base = mixed_poisson_pmf(limit.p1, scale, r_max + 1, n_mix, rng)
    if moment(limit.p1, 2).finite:
        return size_biased_pmf(base)
    # E tau is infinite here, so the truncated law keeps a visible tail.
    return size_biased_pmf(base, mean=a1 * scale)


def _positive_summands(tau: PmfVector) -> tuple[float, PmfVector]:
    """Split tau into P(tau > 0) and the law of tau given tau > 0.

    Zero summands never move the sum, so a Poisson(lam) count of tau draws
    has the same sum as a Poisson(lam * P(tau > 0)) count of positive ones.
    """
    keep = math.fsum(tau.masses[1:]) + tau.tail_mass
    if keep <= 0:
        return 0.0, PmfVector.point_mass(0, tau.r_max)
    positive = np.concatenate(([0.0], tau.masses[1:] / keep))
    return keep, PmfVector.from_masses(positive)


def _balanced_pmf(
    limit: Balanced, r_max: int, n_mix: int, rng: np.random.Generator | None
) -> PmfVector:
    a1 = moment(limit.p1, 1).value
    b1 = moment(limit.p2, 1).value
    if a1 * b1 == 0:
        return PmfVector.point_mass(0, r_max)
    tau = _tau_pmf(limit, r_max, n_mix, rng)
    count_scale = a1 * math.sqrt(limit.beta)
    if isinstance(limit.p2, Degenerate):
        return compound_poisson_pmf(limit.p2.c * count_scale, tau, r_max)

    keep, positive = _positive_summands(tau)
    if keep == 0:
        return PmfVector.point_mass(0, r_max)
    # Every positive summand adds at least one, so counts above r_max only
    # feed the tail and the truncated sum over k is exact on 0..r_max.
    powers = convolution_powers(positive, r_max, r_max)
    if isinstance(limit.p2, Pareto):
        if rng is None:
            raise PmfError("Monte Carlo mixing needs a random stream")
        mus = keep * count_scale * sample(limit.p2, n_mix, rng)
        masses, stderr = _monte_carlo_mixture(mus, r_max + 1, transform=powers)
        return PmfVector.from_masses(masses, stderr)
    counts = mixed_poisson_pmf(limit.p2, keep * count_scale, r_max, n_mix, rng)
    return PmfVector.from_masses(counts.masses @ powers)


def limit_pmf(
    limit: RegimeLimit,
    r_max: int = DEFAULT_R_MAX,
    n_mix: int = DEFAULT_N_MIX,
    rng: np.random.Generator | None = None,
) -> PmfVector:
    validate_limit(limit)
    if isinstance(limit, Sparse):
        return PmfVector.point_mass(0, r_max)
    if isinstance(limit, Dense):
        scale = moment(limit.p1, 2).value * moment(limit.p2, 1).value
        return mixed_poisson_pmf(limit.p2, scale, r_max, n_mix, rng)
    return _balanced_pmf(limit, r_max, n_mix, rng)


def limit_mean(limit: RegimeLimit) -> float:
    """E d* = E Lambda_3 = a2 * b1^2; zero in the sparse regime."""
    if isinstance(limit, Sparse):
        return 0.0
    a2 = moment(limit.p1, 2)
    b1 = moment(limit.p2, 1)
    if not (a2.finite and b1.finite):
        return math.inf
    return a2.value * b1.value**2


def has_power_law_limit(limit: RegimeLimit) -> bool:
    if isinstance(limit, Dense):
        return has_power_law_tail(limit.p2)
    if isinstance(limit, Balanced):
        heavy = has_power_law_tail(limit.p1) or has_power_law_tail(limit.p2)
        return heavy and zero_mass(limit.p1) < 1 and zero_mass(limit.p2) < 1
    return False


def sparse_isolation_bound(n: int, m: int, p1: WeightModel, p2: WeightModel) -> float:
    """Markov bound sqrt(m/n) * a1 * b1 on P(d(v_1) > 0)."""
    return math.sqrt(m / n) * float(moment(p1, 1)) * float(moment(p2, 1))


class LimitSampler:
    """Two-stage sampler for the limit laws; tau is drawn by pmf inversion."""

    def __init__(
        self,
        limit: RegimeLimit,
        r_max: int = DEFAULT_R_MAX,
        n_mix: int = DEFAULT_N_MIX,
        rng: np.random.Generator | None = None,
    ):
        validate_limit(limit)
        self.limit = limit
        self._tau_cdf: np.ndarray | None = None
        if isinstance(limit, Balanced):
            a1 = moment(limit.p1, 1).value
            b1 = moment(limit.p2, 1).value
            self._count_scale = a1 * math.sqrt(limit.beta)
            if a1 * b1 > 0:
                tau = _tau_pmf(limit, r_max, n_mix, rng)
                keep, positive = _positive_summands(tau)
                self._count_scale *= keep
                if keep > 0:
                    self._tau_cdf = np.cumsum(positive.masses)
        elif isinstance(limit, Dense):
            self._dense_scale = moment(limit.p1, 2).value * moment(limit.p2, 1).value

    def draw(self, rng: np.random.Generator) -> int:
        return int(self.draw_many(1, rng)[0])

    def draw_many(self, count: int, rng: np.random.Generator) -> np.ndarray:
        limit = self.limit
        if isinstance(limit, Sparse):
            return np.zeros(count, dtype=np.int64)
        y = sample(limit.p2, count, rng)
        if isinstance(limit, Dense):
            return rng.poisson(y * self._dense_scale).astype(np.int64)
        if self._tau_cdf is None:
            return np.zeros(count, dtype=np.int64)
        summands = rng.poisson(y * self._count_scale)
        # Only positive summands are drawn; draws past the truncated cdf land
        # on r_max + 1, the pooled tail.
        tau = np.searchsorted(
            self._tau_cdf, rng.random(int(summands.sum())), side="right"
        )
        owner = np.repeat(np.arange(count), summands)
        return np.bincount(owner, weights=tau, minlength=count).astype(np.int64)


def sample_limit(
    limit: RegimeLimit,
    rng: np.random.Generator,
    r_max: int = DEFAULT_R_MAX,
    n_mix: int = DEFAULT_N_MIX,
) -> int:
    return LimitSampler(limit, r_max, n_mix, rng).draw(rng)


def _check_probs(probs: Sequence[float]) -> np.ndarray:
    p = np.asarray(probs, dtype=float)
    if ((p < 0) | (p > 1) | np.isnan(p)).any():
        raise ValueError("indicator probabilities must lie in [0, 1]")
    return p


def lecam_bound(probs: Sequence[float]) -> float:
    return float(np.sum(_check_probs(probs) ** 2))


def indicator_sum_pmf(probs: Sequence[float]) -> PmfVector:
    masses = np.ones(1)
    for p in _check_probs(probs):
        masses = np.convolve(masses, [1.0 - p, p])
    return PmfVector.from_masses(masses)


def lecam_gap(probs: Sequence[float]) -> float:
    """Exact total variation between a sum of indicators and Poisson(sum p)."""
    exact = indicator_sum_pmf(probs)
    poisson = poisson_pmf(float(np.sum(probs)), exact.r_max)
    return 0.5 * (
        float(np.sum(np.abs(exact.masses - poisson.masses)))
        + abs(exact.tail_mass - poisson.tail_mass)
    )


def format_pmf_csv(pmf: PmfVector) -> str:
    stderr = pmf.stderr if pmf.stderr is not None else np.zeros(pmf.masses.size)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["r", "mass", "stderr"])
    for r, (mass, se) in enumerate(zip(pmf.masses, stderr)):
        writer.writerow([r, repr(float(mass)), repr(float(se))])
    writer.writerow(["tail", repr(float(pmf.tail_mass)), ""])
    return buffer.getvalue()


def write_pmf_csv(pmf: PmfVector, path: str | Path) -> None:
    Path(path).write_text(format_pmf_csv(pmf), encoding="utf-8")


def read_pmf_csv(path: str | Path) -> PmfVector:
    masses: list[float] = []
    stderr: list[float] = []
    tail = 0.0
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if row["r"] == "tail":
                tail = float(row["mass"])
                continue
            masses.append(float(row["mass"]))
            stderr.append(float(row["stderr"] or 0.0))
    return PmfVector(np.array(masses), tail, np.array(stderr))
