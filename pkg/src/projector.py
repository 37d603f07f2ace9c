from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np
from scipy import sparse

from .bipartite import BipartiteInstance, GenerationParams, generate_instance

LOGGER = logging.getLogger(__name__)

DEFAULT_PAIR_CAP = 10**9


class MembershipOverflowError(ValueError):
    def __init__(self, message: str, pair_count: int, cap: int):
        super().__init__(message)
        self.pair_count = pair_count
        self.cap = cap


@dataclass(frozen=True, eq=False)
class DegreeSample:
    degrees: np.ndarray
    replicate_id: int
    a1_hat: float
    a2_hat: float
    b1_hat: float
    b2_hat: float


def _incidence(b: BipartiteInstance) -> sparse.csr_matrix:
    data = np.ones(b.edge_count, dtype=np.int64)
    return sparse.csr_matrix((data, b.indices, b.indptr), shape=(b.m, b.n))


def pair_count(b: BipartiteInstance) -> int:
    sizes = b.attribute_sizes().astype(np.int64)
    return int(np.dot(sizes, sizes))


def degrees(
    b: BipartiteInstance, replicate_id: int = 0, pair_cap: int = DEFAULT_PAIR_CAP
) -> DegreeSample:
    """Degrees of the intersection graph, shared neighbours counted once.

    The co-membership product B^T B costs O(sum_i u_i^2); its off-diagonal
    nonzeros in row j are exactly the distinct neighbours of vertex j.
    """
    pairs = pair_count(b)
    if pairs > pair_cap:
        raise MembershipOverflowError(
            f"sum of squared attribute sizes {pairs} exceeds cap {pair_cap}; "
            "use degrees_of_subset for the vertices you need",
            pair_count=pairs,
            cap=pair_cap,
        )
    incidence = _incidence(b)
    co_membership = (incidence.T @ incidence).tocsr()
    row_nnz = np.diff(co_membership.indptr)
    has_attribute = np.bincount(b.indices, minlength=b.n) > 0
    degree_vector = row_nnz - has_attribute.astype(np.int64)
    return DegreeSample(
        degrees=degree_vector.astype(np.int64),
        replicate_id=replicate_id,
        **empirical_moments(b),
    )


def empirical_moments(b: BipartiteInstance) -> dict[str, float]:
    return {
        "a1_hat": float(np.mean(b.x_weights)),
        "a2_hat": float(np.mean(b.x_weights**2)),
        "b1_hat": float(np.mean(b.y_weights)),
        "b2_hat": float(np.mean(b.y_weights**2)),
    }


def neighbours(b: BipartiteInstance, j: int) -> np.ndarray:
    """Sorted distinct vertices sharing at least one attribute with j."""
    _check_vertex(b, j)
    attrs = b.vertex_attributes(j)
    if attrs.size == 0:
        return np.empty(0, dtype=np.int64)
    members = np.unique(np.concatenate([b.attribute(int(i)) for i in attrs]))
    return members[members != j]


def degrees_of_subset(b: BipartiteInstance, vertices: Iterable[int]) -> np.ndarray:
    return np.asarray([neighbours(b, j).size for j in vertices], dtype=np.int64)


def _check_vertex(b: BipartiteInstance, j: int) -> None:
    if not 0 <= j < b.n:
        raise IndexError(f"vertex index {j} out of range [0, {b.n})")


def l_statistic(b: BipartiteInstance, j: int) -> int:
    """Sum over attributes containing j of their other members, with multiplicity."""
    _check_vertex(b, j)
    sizes = b.attribute_sizes()
    return int(np.sum(sizes[b.vertex_attributes(j)] - 1))


def l_statistics(b: BipartiteInstance) -> np.ndarray:
    others = (b.attribute_sizes() - 1)[b.edge_attributes()]
    return np.bincount(b.indices, weights=others, minlength=b.n).astype(np.int64)


def coincidence_bound(b: BipartiteInstance, j: int) -> float:
    """Union bound on P(d(v_j) != L | X, Y): n^-1 * b2_hat * Y_j^2 * Q_X."""
    _check_vertex(b, j)
    x2 = b.x_weights**2
    q_x = (np.sum(x2) ** 2 - np.sum(x2**2)) / 2.0 / b.m**2
    others = np.delete(b.y_weights, j)
    b2_hat = float(np.sum(others**2)) / b.n
    return float(b2_hat * b.y_weights[j] ** 2 * q_x / b.n)


def coincidence_rate(
    params: GenerationParams, replicates: int, rng: np.random.Generator
) -> float:
    """Fraction of fresh replicates in which vertex 0's degree differs from L."""
    if replicates < 1:
        raise ValueError("replicates must be at least 1")
    mismatches = 0
    for _ in range(replicates):
        instance = generate_instance(params, rng)
        degree = int(degrees_of_subset(instance, [0])[0])
        if degree != l_statistic(instance, 0):
            mismatches += 1
    rate = mismatches / replicates
    LOGGER.debug(
        "Coincidence rate n=%s m=%s: %s/%s", params.n, params.m, mismatches, replicates
    )
    return rate


def write_degree_csv(
    path: str | Path,
    samples: Sequence[DegreeSample],
    form: Literal["long", "histogram"] = "long",
) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if form == "histogram":
            counts = np.bincount(np.concatenate([s.degrees for s in samples]))
            writer.writerow(["degree", "count"])
            for degree, count in enumerate(counts):
                if count:
                    writer.writerow([degree, int(count)])
            return
        writer.writerow(["replicate_id", "vertex_id", "degree"])
        for s in samples:
            for vertex_id, degree in enumerate(s.degrees):
                writer.writerow([s.replicate_id, vertex_id, int(degree)])
