from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from .weights import WeightModel, sample

LOGGER = logging.getLogger(__name__)

NAIVE_PAIR_LIMIT = 10**7
# Vertices sorted by weight are split where the weight halves, so the envelope
# overestimates any p_ij in its block by at most a factor of two.
ENVELOPE_RATIO = 0.5

GeneratorMethod = Literal["fast", "naive"]


class GeneratorSizeError(ValueError):
    """Raised when the quadratic oracle is asked for more than NAIVE_PAIR_LIMIT pairs."""


def edge_intensity(x: float, y: float, n: int, m: int) -> float:
    return x * y / math.sqrt(n * m)


def edge_probability(x: float, y: float, n: int, m: int) -> float:
    return min(1.0, edge_intensity(x, y, n, m))


@dataclass(frozen=True, eq=False)
class BipartiteInstance:
    """Attribute-major adjacency of H_{X,Y} in compressed form.

    Attribute i's vertex list is indices[indptr[i]:indptr[i + 1]], sorted.
    """

    n: int
    m: int
    x_weights: np.ndarray
    y_weights: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    proposals: int = 0
    _vertex_view: dict[str, np.ndarray] = field(
        default_factory=dict, repr=False, compare=False
    )

    @property
    def edge_count(self) -> int:
        return int(self.indices.size)

    def attribute(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def attribute_sizes(self) -> np.ndarray:
        return np.diff(self.indptr)

    def edge_attributes(self) -> np.ndarray:
        """Attribute index of every stored edge, aligned with `indices`."""
        return np.repeat(np.arange(self.m), self.attribute_sizes())

    def vertex_attributes(self, j: int) -> np.ndarray:
        if not self._vertex_view:
            order = np.argsort(self.indices, kind="stable")
            counts = np.bincount(self.indices, minlength=self.n)
            self._vertex_view["indptr"] = np.concatenate(([0], np.cumsum(counts)))
            self._vertex_view["attrs"] = self.edge_attributes()[order]
        view = self._vertex_view
        return view["attrs"][view["indptr"][j] : view["indptr"][j + 1]]

    def max_intensity(self) -> float:
        if self.m == 0 or self.n == 0:
            return 0.0
        return edge_intensity(
            float(self.x_weights.max()), float(self.y_weights.max()), self.n, self.m
        )


def instance_from_edges(
    x_weights: np.ndarray,
    y_weights: np.ndarray,
    attrs: np.ndarray,
    vertices: np.ndarray,
    proposals: int = 0,
) -> BipartiteInstance:
    x_weights = np.asarray(x_weights, dtype=float)
    y_weights = np.asarray(y_weights, dtype=float)
    m, n = x_weights.size, y_weights.size
    attrs = np.asarray(attrs, dtype=np.int64)
    vertices = np.asarray(vertices, dtype=np.int64)
    order = np.lexsort((vertices, attrs))
    counts = np.bincount(attrs, minlength=m)
    indptr = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
    return BipartiteInstance(
        n=n,
        m=m,
        x_weights=x_weights,
        y_weights=y_weights,
        indptr=indptr,
        indices=vertices[order],
        proposals=proposals,
    )


def _check_weights(x_weights: np.ndarray, y_weights: np.ndarray) -> None:
    if x_weights.size < 1 or y_weights.size < 1:
        raise ValueError("need at least one attribute and one vertex")
    if (x_weights < 0).any() or (y_weights < 0).any():
        raise ValueError("weights must be nonnegative")


def generate_naive(
    x_weights: np.ndarray, y_weights: np.ndarray, rng: np.random.Generator
) -> BipartiteInstance:
    """Reference oracle: one Bernoulli draw per attribute/vertex pair."""
    x_weights = np.asarray(x_weights, dtype=float)
    y_weights = np.asarray(y_weights, dtype=float)
    _check_weights(x_weights, y_weights)
    m, n = x_weights.size, y_weights.size
    if m * n > NAIVE_PAIR_LIMIT:
        raise GeneratorSizeError(
            f"naive generator limited to {NAIVE_PAIR_LIMIT} pairs, got m*n={m * n}"
        )
    probs = np.minimum(1.0, np.outer(x_weights, y_weights) / math.sqrt(n * m))
    hits = rng.random((m, n)) < probs
    attrs, vertices = np.nonzero(hits)
    return instance_from_edges(x_weights, y_weights, attrs, vertices)


def _envelope_blocks(y_sorted: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split descending weights into blocks; returns (block starts, block ends)."""
    starts: list[int] = []
    ends: list[int] = []
    descending = -y_sorted
    pos = 0
    while pos < y_sorted.size:
        top = y_sorted[pos]
        if top <= 0:
            break
        end = int(np.searchsorted(descending, -top * ENVELOPE_RATIO, side="right"))
        end = max(end, pos + 1)
        starts.append(pos)
        ends.append(end)
        pos = end
    return np.asarray(starts, dtype=np.int64), np.asarray(ends, dtype=np.int64)


def generate_fast(
    x_weights: np.ndarray, y_weights: np.ndarray, rng: np.random.Generator
) -> BipartiteInstance:
    """Exact sampler with expected cost O(#edges + m * #blocks + n log n).

    Vertices are walked in descending weight order. Within a block the
    envelope q = min(1, x_i * y_block_max / sqrt(nm)) drives geometric skips;
    a proposed vertex is kept with probability p_ij / q. All attributes advance
    together, one skip per round.
    """
    x_weights = np.asarray(x_weights, dtype=float)
    y_weights = np.asarray(y_weights, dtype=float)
    _check_weights(x_weights, y_weights)
    m, n = x_weights.size, y_weights.size
    scale = math.sqrt(n * m)

    order = np.argsort(-y_weights, kind="stable")
    y_sorted = y_weights[order]
    block_start, block_end = _envelope_blocks(y_sorted)
    block_top = y_sorted[block_start] if block_start.size else np.empty(0)
    n_blocks = block_start.size

    attr = np.flatnonzero(x_weights > 0)
    if n_blocks == 0:
        attr = attr[:0]
    block = np.zeros(attr.size, dtype=np.int64)
    pos = np.zeros(attr.size, dtype=np.int64)

    kept_attrs: list[np.ndarray] = []
    kept_slots: list[np.ndarray] = []
    proposals = 0
    rounds = 0
    while attr.size:
        rounds += 1
        x = x_weights[attr]
        q = np.minimum(1.0, x * block_top[block] / scale)
        # Later blocks have smaller tops, so an underflowed envelope ends the walk.
        live = q > 0
        if not live.all():
            attr, block, pos, x, q = attr[live], block[live], pos[live], x[live], q[live]
            if not attr.size:
                break
        # Geometric skip by inversion, kept in floating point so tiny envelopes
        # cannot overflow an integer gap.
        with np.errstate(divide="ignore"):
            gap = np.floor(np.log1p(-rng.random(attr.size)) / np.log1p(-q)) + 1.0
        end = block_end[block]
        inside = pos + gap - 1.0 < end
        candidate = np.where(inside, pos + gap - 1.0, 0.0).astype(np.int64)

        prop_attr = attr[inside]
        prop_slot = candidate[inside]
        proposals += int(prop_slot.size)
        if prop_slot.size:
            p = np.minimum(1.0, x[inside] * y_sorted[prop_slot] / scale)
            accept = rng.random(prop_slot.size) * q[inside] < p
            kept_attrs.append(prop_attr[accept])
            kept_slots.append(prop_slot[accept])

        pos = np.where(inside, candidate + 1, end)
        block = np.where(pos >= end, block + 1, block)
        alive = block < n_blocks
        attr, block, pos = attr[alive], block[alive], pos[alive]

    if kept_attrs:
        attrs = np.concatenate(kept_attrs)
        vertices = order[np.concatenate(kept_slots)]
    else:
        attrs = np.empty(0, dtype=np.int64)
        vertices = np.empty(0, dtype=np.int64)
    LOGGER.debug(
        "Fast generator: m=%s n=%s blocks=%s rounds=%s proposals=%s edges=%s",
        m,
        n,
        n_blocks,
        rounds,
        proposals,
        attrs.size,
    )
    return instance_from_edges(
        x_weights, y_weights, attrs, vertices, proposals=proposals
    )


@dataclass(frozen=True)
class GenerationParams:
    n: int
    m: int
    p1: WeightModel
    p2: WeightModel


def generate_instance(
    params: GenerationParams,
    rng: np.random.Generator,
    method: GeneratorMethod = "fast",
) -> BipartiteInstance:
    """Realize X ~ P1 (attributes) and Y ~ P2 (vertices), then generate edges."""
    x_weights = sample(params.p1, params.m, rng)
    y_weights = sample(params.p2, params.n, rng)
    if method == "naive":
        return generate_naive(x_weights, y_weights, rng)
    return generate_fast(x_weights, y_weights, rng)


def dump_instance(instance: BipartiteInstance) -> str:
    lines = [f"{instance.n} {instance.m} {instance.edge_count}"]
    for i in range(instance.m):
        members = " ".join(str(int(j)) for j in instance.attribute(i))
        lines.append(f"{i} {members}".rstrip())
    lines.append(" ".join(repr(float(x)) for x in instance.x_weights))
    lines.append(" ".join(repr(float(y)) for y in instance.y_weights))
    return "\n".join(lines) + "\n"


def load_instance(text: str) -> BipartiteInstance:
    lines = text.splitlines()
    n, m, edge_count = (int(token) for token in lines[0].split())
    attrs: list[int] = []
    vertices: list[int] = []
    for line in lines[1 : m + 1]:
        tokens = [int(token) for token in line.split()]
        attrs.extend([tokens[0]] * (len(tokens) - 1))
        vertices.extend(tokens[1:])
    x_weights = np.array([float(t) for t in lines[m + 1].split()], dtype=float)
    y_weights = np.array([float(t) for t in lines[m + 2].split()], dtype=float)
    if x_weights.size != m or y_weights.size != n:
        raise ValueError("weight blocks do not match the header sizes")
    instance = instance_from_edges(x_weights, y_weights, np.array(attrs), np.array(vertices))
    if instance.edge_count != edge_count:
        raise ValueError(
            f"header declares {edge_count} edges, found {instance.edge_count}"
        )
    return instance


def write_instance(instance: BipartiteInstance, path: str | Path) -> None:
    Path(path).write_text(dump_instance(instance), encoding="utf-8")
