"""Sufficient statistics and closed-form CPT estimators."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import IncompleteDataError, PriorDomainError
from .model import MISSING, NetworkStructure, ParameterSet, PriorSpec


@dataclass(frozen=True, eq=False)
class SufficientStatistics:
    """Per-node ``q_i x r_i`` counts ``N[i][j, k]``; fractional after an E-step."""

    counts: tuple[np.ndarray, ...]

    def __post_init__(self):
        tables = []
        for c in self.counts:
            a = np.array(c, dtype=float)
            a.setflags(write=False)
            tables.append(a)
        object.__setattr__(self, "counts", tuple(tables))

    def __getitem__(self, i: int) -> np.ndarray:
        return self.counts[i]

    def __len__(self) -> int:
        return len(self.counts)

    def __eq__(self, other):
        if not isinstance(other, SufficientStatistics) or len(other) != len(self):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self.counts, other.counts))

    @classmethod
    def zeros(cls, structure: NetworkStructure) -> "SufficientStatistics":
        return cls(tuple(np.zeros(shape) for shape in structure.table_shapes()))


class Estimate(NamedTuple):
    params: ParameterSet
    fallback: tuple[np.ndarray, ...]  # per node, True where the row was set uniform


def family_codes(structure: NetworkStructure, values: np.ndarray, node: int) -> tuple[np.ndarray, np.ndarray]:
    """Parent configuration index and child state per record, for complete rows."""
    cards = structure.cardinalities
    j = np.zeros(values.shape[0], dtype=np.int64)
    for p in structure.parent_indices[node]:
        j = j * cards[p] + values[:, p]
    return j, values[:, node]


def count_complete(structure: NetworkStructure, dataset) -> SufficientStatistics:
    """Integer counts ``N_ijk`` from a fully observed dataset."""
    values = np.asarray(dataset.values)
    holes = np.argwhere(values == MISSING)
    if holes.size:
        records = sorted({int(r) + 1 for r in holes[:, 0]})
        first_r, first_c = holes[0]
        raise IncompleteDataError(
            f"missing cells in records {records}; first at record {first_r + 1}, "
            f"node {structure.nodes[first_c].name!r}"
        )
    counts = []
    for i, (q, r) in enumerate(structure.table_shapes()):
        j, k = family_codes(structure, values, i)
        counts.append(np.bincount(j * r + k, minlength=q * r).reshape(q, r).astype(float))
    return SufficientStatistics(tuple(counts))


def _normalize_or_uniform(numer: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    totals = numer.sum(axis=1)
    flagged = totals <= 0.0
    safe = np.where(flagged, 1.0, totals)
    out = numer / safe[:, None]
    out[flagged] = 1.0 / numer.shape[1]
    return out, flagged


def ml_estimate(stats: SufficientStatistics) -> Estimate:
    """Relative frequencies ``N_ijk / N_ij``; empty rows fall back to uniform and are flagged."""
    tables, flags = zip(*(_normalize_or_uniform(np.asarray(c)) for c in stats.counts)) if len(stats) else ((), ())
    return Estimate(ParameterSet(tables), tuple(flags))


def map_estimate(stats: SufficientStatistics, prior: PriorSpec) -> Estimate:
    """Dirichlet posterior mode ``(N + alpha - 1) / sum_k (N + alpha - 1)``; needs alpha >= 1."""
    tables, flags = [], []
    for c, a in zip(stats.counts, prior.alpha):
        if np.any(a < 1.0):
            raise PriorDomainError("MAP estimation needs every alpha >= 1")
        t, f = _normalize_or_uniform(c + (a - 1.0))
        tables.append(t)
        flags.append(f)
    return Estimate(ParameterSet(tuple(tables)), tuple(flags))


def posterior_mean_estimate(stats: SufficientStatistics, prior: PriorSpec) -> ParameterSet:
    """Dirichlet posterior mean ``(alpha_ijk + N_ijk) / (alpha_ij + N_ij)``."""
    tables = []
    for i, (c, a, a_row) in enumerate(zip(stats.counts, prior.alpha, prior.alpha_row)):
        denom = a_row + c.sum(axis=1)
        if np.any(denom <= 0.0):
            raise PriorDomainError(f"node {i}: zero prior row with no data")
        tables.append((a + c) / denom[:, None])
    return ParameterSet(tuple(tables))
