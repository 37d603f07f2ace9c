"""Desk-scale acceptance fixtures, run by `python -m src.runner check`.

Each check returns (passed, detail); `run_checks` times them and wraps the
outcome in a CheckResult. Fixtures use fixed seeds so a failure reproduces.
"""

from __future__ import annotations

import logging
import math
import tempfile
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .bipartite import (
    BipartiteInstance,
    GenerationParams,
    edge_probability,
    generate_fast,
    generate_instance,
    generate_naive,
)
from .config import ExperimentConfig, MRule
from .limit_laws import (
    Balanced,
    Dense,
    LimitSampler,
    lecam_bound,
    lecam_gap,
    limit_pmf,
    poisson_pmf,
    size_biased_pmf,
)
from .projector import coincidence_rate, degrees
from .runner import run_experiment
from .stats import empirical_pmf, hill_tail_index, total_variation, two_proportion_z_test
from .weights import Degenerate, Exponential, Pareto

LOGGER = logging.getLogger(__name__)

ACCEPTANCE_SEED = 20_240_601
Z_TEST_LEVEL = 0.01

# (x_weights, y_weights) with m * n <= 6; several pairs hit the min{1, .} clamp.
EXACTNESS_FIXTURES = (
    ([0.5], [1.0]),
    ([1.0, 2.5], [0.5, 1.5, 3.0]),
    ([0.3, 1.0, 2.0], [1.0, 0.7]),
    ([0.0, 1.2], [2.0, 0.4, 0.9]),
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    runtime_s: float


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream,)))


def _outcome_codes(instance: BipartiteInstance) -> int:
    bits = instance.edge_attributes() * instance.n + instance.indices
    return int(np.sum(np.left_shift(np.int64(1), bits)))


def _product_law(x_weights: list[float], y_weights: list[float]) -> np.ndarray:
    m, n = len(x_weights), len(y_weights)
    probs = np.array(
        [edge_probability(x, y, n, m) for x in x_weights for y in y_weights]
    )
    codes = np.arange(2 ** probs.size)
    present = (codes[:, None] >> np.arange(probs.size)) & 1
    return np.prod(np.where(present == 1, probs, 1.0 - probs), axis=1)


def check_generator_exactness(seed: int, replicates: int = 100_000) -> tuple[bool, str]:
    worst = 0.0
    for index, (xs, ys) in enumerate(EXACTNESS_FIXTURES):
        exact = _product_law(xs, ys)
        x, y = np.array(xs), np.array(ys)
        for method, generator in (("fast", generate_fast), ("naive", generate_naive)):
            rng = _rng(seed, 2 * index + (method == "naive"))
            codes = [_outcome_codes(generator(x, y, rng)) for _ in range(replicates)]
            observed = np.bincount(codes, minlength=exact.size) / replicates
            stderr = np.sqrt(exact * (1.0 - exact) / replicates)
            deviation = np.abs(observed - exact)
            # One count of continuity slack for outcomes with tiny expected counts.
            excess = deviation > 4.0 * stderr + 1.0 / replicates
            excess |= (exact == 0) & (observed > 0)
            if excess.any():
                outcome = int(np.argmax(excess))
                return False, (
                    f"{method} fixture {index}: outcome {outcome} observed "
                    f"{observed[outcome]:.5f}, exact {exact[outcome]:.5f}"
                )
            with np.errstate(divide="ignore", invalid="ignore"):
                z = np.where(stderr > 0, deviation / stderr, 0.0)
            worst = max(worst, float(z.max()))
    return True, f"{len(EXACTNESS_FIXTURES)} fixtures, worst deviation {worst:.2f} stderr"


def brute_force_degrees(instance: BipartiteInstance) -> np.ndarray:
    members = [set(instance.vertex_attributes(j).tolist()) for j in range(instance.n)]
    return np.array(
        [
            sum(1 for k in range(instance.n) if k != j and members[j] & members[k])
            for j in range(instance.n)
        ],
        dtype=np.int64,
    )


def check_projection_oracle(seed: int, instances: int = 100) -> tuple[bool, str]:
    rng = _rng(seed, 100)
    for index in range(instances):
        params = GenerationParams(
            n=int(rng.integers(1, 9)),
            m=int(rng.integers(1, 7)),
            p1=Exponential(0.5),
            p2=Exponential(0.5),
        )
        instance = generate_instance(params, rng)
        fast = degrees(instance).degrees
        slow = brute_force_degrees(instance)
        if not np.array_equal(fast, slow):
            return False, f"instance {index}: degrees {fast.tolist()} != {slow.tolist()}"
    return True, f"{instances} random instances match the brute-force check"


def check_size_bias_fixed_point(seed: int) -> tuple[bool, str]:
    r_max = 80
    worst = 0.0
    for mu in (0.1, 0.5, 1.0, 2.0, 5.0):
        biased = size_biased_pmf(poisson_pmf(mu, r_max))
        expected = poisson_pmf(mu, r_max - 1)
        worst = max(worst, float(np.max(np.abs(biased.masses - expected.masses))))
    return worst <= 1e-10, f"max entrywise gap {worst:.2e}"


def check_compound_evaluator(seed: int, draws: int = 1_000_000) -> tuple[bool, str]:
    limit = Balanced(1.0, Degenerate(1.0), Degenerate(1.0))
    pmf = limit_pmf(limit, r_max=60)
    rng = _rng(seed, 200)
    samples = LimitSampler(limit, 60, rng=rng).draw_many(draws, rng)
    tv = total_variation(empirical_pmf(samples, 60), pmf)
    g0 = math.exp(-(1.0 - math.exp(-1.0)))
    gap = abs(pmf.masses[0] - g0)
    passed = tv <= 0.005 and gap <= 1e-9
    return passed, f"tv {tv:.4f} over {draws} draws, |g0 - closed form| {gap:.1e}"


def check_dense_closed_form(seed: int) -> tuple[bool, str]:
    pmf = limit_pmf(Dense(Degenerate(1.0), Exponential(1.0)), r_max=60)
    expected = 0.5 ** (np.arange(61) + 1.0)
    gap = float(np.max(np.abs(pmf.masses - expected)))
    return gap <= 1e-12, f"max gap to 2^-(r+1): {gap:.1e}"


def _experiment(config: ExperimentConfig, workdir: Path, label: str):
    return run_experiment(replace(config, output_dir=str(workdir / label)))


def _fixture(
    regime: str,
    n_grid: tuple[int, ...],
    replicates: int,
    seed: int,
    *,
    beta: float | None = None,
    m_rule: MRule | None = None,
) -> ExperimentConfig:
    return ExperimentConfig(
        regime=regime,  # type: ignore[arg-type]
        n_grid=n_grid,
        p1=Exponential(1.0),
        p2=Exponential(1.0),
        beta=beta,
        m_rule=m_rule,
        replicates=replicates,
        master_seed=seed,
    )


def check_sparse_isolation(seed: int, replicates: int = 5) -> tuple[bool, str]:
    config = _fixture("sparse", (1000, 100_000), replicates, seed, m_rule=MRule("pow", 0.4))
    with tempfile.TemporaryDirectory() as tmp:
        rows = _experiment(config, Path(tmp), "sparse").rows
    small, large = rows[0], rows[-1]
    z, p_value = two_proportion_z_test(
        round(large.isolated_fraction * large.sample_size),
        large.sample_size,
        round(small.isolated_fraction * small.sample_size),
        small.sample_size,
    )
    passed = large.isolated_fraction >= 0.95 and p_value < Z_TEST_LEVEL
    return passed, (
        f"isolated {small.isolated_fraction:.4f} at n={small.n}, "
        f"{large.isolated_fraction:.4f} at n={large.n} (z={z:.2f}, p={p_value:.2g})"
    )


def check_balanced_convergence(seed: int, replicates: int = 10) -> tuple[bool, str]:
    config = _fixture("balanced", (1000, 30_000), replicates, seed, beta=1.0)
    with tempfile.TemporaryDirectory() as tmp:
        rows = _experiment(config, Path(tmp), "balanced").rows
    small, large = rows[0], rows[-1]
    passed = large.tv <= 0.05 and large.tv < small.tv
    tail = "n/a" if large.tail_index is None else f"{large.tail_index:.2f}"
    return passed, (
        f"tv {small.tv:.4f} at n={small.n}, {large.tv:.4f} at n={large.n}; "
        f"informational tail index {tail}"
    )


def check_dense_convergence(seed: int, replicates: int = 10) -> tuple[bool, str]:
    config = _fixture("dense", (500, 4000), replicates, seed, m_rule=MRule("pow", 1.5))
    with tempfile.TemporaryDirectory() as tmp:
        rows = _experiment(config, Path(tmp), "dense").rows
    small, large = rows[0], rows[-1]
    passed = large.tv <= 0.05 and large.tv <= small.tv
    return passed, f"tv {small.tv:.4f} at n={small.n}, {large.tv:.4f} at n={large.n}"


def check_coincidence_decay(seed: int, replicates: int = 2000) -> tuple[bool, str]:
    rates = {}
    for stream, n in enumerate((500, 4000)):
        params = GenerationParams(n=n, m=n, p1=Exponential(1.0), p2=Exponential(1.0))
        rates[n] = coincidence_rate(params, replicates, _rng(seed, 300 + stream))
    z, p_value = two_proportion_z_test(
        round(rates[500] * replicates),
        replicates,
        round(rates[4000] * replicates),
        replicates,
    )
    passed = rates[4000] < rates[500] and p_value < Z_TEST_LEVEL
    return passed, (
        f"coincidence {rates[500]:.4f} at n=500, {rates[4000]:.4f} at n=4000 "
        f"(z={z:.2f}, p={p_value:.2g})"
    )


def check_power_law_tail(
    seed: int, min_positive: int = 100_000, n: int = 4000, k: int = 1000
) -> tuple[bool, str]:
    params = GenerationParams(
        n=n, m=round(n**1.5), p1=Exponential(1.0), p2=Pareto(2.5, 1.0)
    )
    rng = _rng(seed, 400)
    pooled: list[np.ndarray] = []
    positives = 0
    while positives < min_positive:
        sample = degrees(generate_instance(params, rng)).degrees
        pooled.append(sample)
        positives += int(np.count_nonzero(sample))
    estimate = hill_tail_index(np.concatenate(pooled), k)
    passed = 2.1 <= estimate <= 2.9
    return passed, f"Hill estimate {estimate:.3f} from {positives} positive degrees (k={k})"


def check_lecam_bound(seed: int, vectors: int = 50) -> tuple[bool, str]:
    rng = _rng(seed, 500)
    slack = math.inf
    for _ in range(vectors):
        probs = rng.random(int(rng.integers(1, 9)))
        gap, bound = lecam_gap(probs), lecam_bound(probs)
        if gap > bound + 1e-12:
            return False, f"exact tv {gap:.5f} exceeds bound {bound:.5f} for {probs.tolist()}"
        slack = min(slack, bound - gap)
    return True, f"{vectors} vectors, smallest slack {slack:.2e}"


def _snapshot(directory: Path) -> dict[str, bytes]:
    return {
        path.name: path.read_bytes()
        for path in sorted(directory.iterdir())
        if path.suffix in {".csv", ".json"}
    }


def check_determinism(seed: int, replicates: int = 2) -> tuple[bool, str]:
    config = _fixture("balanced", (1000, 3000), replicates, seed, beta=1.0)
    # Both runs share one output directory so the manifest paths agree.
    with tempfile.TemporaryDirectory() as tmp:
        workdir = Path(tmp)
        _experiment(config, workdir, "run")
        first = _snapshot(workdir / "run")
        _experiment(config, workdir, "run")
        second = _snapshot(workdir / "run")
    differing = sorted(name for name in first if first[name] != second.get(name))
    if first.keys() != second.keys() or differing:
        return False, f"outputs differ: {differing or sorted(first.keys() ^ second.keys())}"
    return True, f"{len(first)} output files byte-identical"


CHECKS: dict[str, Callable[[int], tuple[bool, str]]] = {
    "generator_exactness": check_generator_exactness,
    "projection_oracle": check_projection_oracle,
    "size_bias_fixed_point": check_size_bias_fixed_point,
    "compound_evaluator": check_compound_evaluator,
    "dense_closed_form": check_dense_closed_form,
    "sparse_isolation": check_sparse_isolation,
    "balanced_convergence": check_balanced_convergence,
    "dense_convergence": check_dense_convergence,
    "coincidence_decay": check_coincidence_decay,
    "power_law_tail": check_power_law_tail,
    "lecam_bound": check_lecam_bound,
    "determinism": check_determinism,
}


def run_checks(
    only: Iterable[str] | None = None, seed: int = ACCEPTANCE_SEED
) -> list[CheckResult]:
    names = list(only) if only else list(CHECKS)
    unknown = [name for name in names if name not in CHECKS]
    if unknown:
        raise ValueError(f"unknown check '{unknown[0]}'. Must be one of {list(CHECKS)}")
    results = []
    for name in names:
        started = time.perf_counter()
        try:
            passed, detail = CHECKS[name](seed)
        except Exception as exc:
            LOGGER.exception("Check %s raised", name)
            passed, detail = False, f"raised {type(exc).__name__}: {exc}"
        runtime = time.perf_counter() - started
        LOGGER.info("Check %s %s in %.1fs: %s", name, "passed" if passed else "FAILED", runtime, detail)
        results.append(CheckResult(name, passed, detail, runtime))
    return results
