"""Bound step of the robust Bayesian estimator.

Every incomplete record is classified, per family event ``(x_j, x_k)``, by
whether some completion of its missing family cells could realize the
event.  Two virtual frequencies follow:

* ``completable_to_jk``: incomplete records that can be completed to
  ``pa = x_j, X_i = x_k``.  Completing all of them that way maximizes the
  posterior-mean estimate of ``theta_ijk``.
* ``completable_to_j_not_k``: incomplete records that can be completed to
  ``pa = x_j`` with the child in some state other than ``x_k``.  Completing
  all of them that way minimizes it.

Neither depends on the parameters, only on the data.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import PriorDomainError
from .estimators import family_codes
from .model import MISSING, NetworkStructure, PriorSpec, parent_values_of


class FamilyMatch(Enum):
    FULLY_OBSERVED_MATCH = "fully-observed-match"
    COMPLETABLE = "completable"
    INCONSISTENT = "inconsistent"


def family_consistency(
    record: Sequence[int], structure: NetworkStructure, node: int | str, j: int, k: int | None = None
) -> FamilyMatch:
    """Classify one record against the family event ``(x_j, x_k)``; ``k=None`` matches any child state."""
    i = structure.node_index(node)
    wanted = dict(zip(structure.parent_indices[i], parent_values_of(structure, i, j)))
    if k is not None:
        wanted[i] = k
    fam = structure.family(i)
    complete = all(record[v] != MISSING for v in fam)
    for v, want in wanted.items():
        if record[v] != MISSING and record[v] != want:
            return FamilyMatch.INCONSISTENT
    return FamilyMatch.FULLY_OBSERVED_MATCH if complete else FamilyMatch.COMPLETABLE


@dataclass(frozen=True, eq=False)
class VirtualFrequencies:
    """Counts for one node, each a ``q_i x r_i`` integer array except ``row_observed_total``."""

    fully_observed_count: np.ndarray
    completable_to_jk: np.ndarray
    completable_to_j_not_k: np.ndarray
    row_observed_total: np.ndarray

    @property
    def n_max(self) -> np.ndarray:
        return self.completable_to_jk

    @property
    def n_min(self) -> np.ndarray:
        return self.completable_to_j_not_k


@dataclass(frozen=True, eq=False)
class ParameterBounds:
    lower: tuple[np.ndarray, ...]
    upper: tuple[np.ndarray, ...]

    def __post_init__(self):
        for name in ("lower", "upper"):
            tables = []
            for t in getattr(self, name):
                a = np.array(t, dtype=float)
                a.setflags(write=False)
                tables.append(a)
            object.__setattr__(self, name, tuple(tables))

    def __len__(self) -> int:
        return len(self.lower)

    def __eq__(self, other):
        if not isinstance(other, ParameterBounds):
            return NotImplemented
        pairs = list(zip(self.lower, other.lower)) + list(zip(self.upper, other.upper))
        return len(self) == len(other) and all(np.array_equal(a, b) for a, b in pairs)


def virtual_frequencies(structure: NetworkStructure, dataset, node: int | str) -> VirtualFrequencies:
    i = structure.node_index(node)
    cards = structure.cardinalities
    q, r = structure.n_configs[i], cards[i]
    parents = structure.parent_indices[i]
    values = np.asarray(dataset.values)
    fam_vals = values[:, list(structure.family(i))]
    complete = np.all(fam_vals != MISSING, axis=1)

    j, k = family_codes(structure, values[complete], i)
    observed = np.bincount(j * r + k, minlength=q * r).reshape(q, r)

    inc = values[~complete]
    # parent-configuration consistency, one column per j
    configs = np.array([parent_values_of(structure, i, jj) for jj in range(q)], dtype=np.int64).reshape(q, len(parents))
    cj = np.ones((inc.shape[0], q), dtype=np.int64)
    for a, p in enumerate(parents):
        col = inc[:, p][:, None]
        cj &= ((col == MISSING) | (col == configs[None, :, a])).astype(np.int64)
    child = inc[:, i][:, None]
    states = np.arange(r)[None, :]
    child_is_k = ((child == MISSING) | (child == states)).astype(np.int64)
    child_not_k = ((child == MISSING) | (child != states)).astype(np.int64)

    return VirtualFrequencies(
        fully_observed_count=observed,
        completable_to_jk=cj.T @ child_is_k,
        completable_to_j_not_k=cj.T @ child_not_k,
        row_observed_total=observed.sum(axis=1),
    )


def compute_bounds(structure: NetworkStructure, dataset, prior: PriorSpec) -> ParameterBounds:
    """Per-parameter interval ``[min_ijk, max_ijk]`` bracketing the posterior-mean estimate."""
    lower, upper = [], []
    for i in range(len(structure)):
        a, a_row = prior.alpha[i], prior.alpha_row[i]
        if np.any(a_row <= 0.0):
            raise PriorDomainError(f"node {structure.nodes[i].name!r}: a prior row sums to zero")
        vf = virtual_frequencies(structure, dataset, i)
        n = vf.fully_observed_count.astype(float)
        n_row = vf.row_observed_total.astype(float)[:, None]
        n_min = vf.n_min.astype(float)
        n_max = vf.n_max.astype(float)
        # Same association order as posterior_mean_estimate so the complete-data case is bit-exact.
        lower.append((a + n) / (a_row[:, None] + n_row + n_min))
        upper.append((a + n + n_max) / (a_row[:, None] + n_row + n_max))
    return ParameterBounds(tuple(lower), tuple(upper))


def count_violations(params, bounds: ParameterBounds) -> int:
    return int(
        sum(np.count_nonzero((t < lo) | (t > hi)) for t, lo, hi in zip(params.tables, bounds.lower, bounds.upper))
    )
