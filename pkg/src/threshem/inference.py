"""Exact inference by variable elimination.

Factors carry a leading batch axis so that a group of records sharing the
same set of missing cells can be processed in one pass; single queries use
a batch of one.  Observed cells are absorbed into the CPT factors before
elimination, so only missing variables ever appear in a factor scope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np

from .errors import StateIndexError, StructureError, ZeroProbabilityEvidenceError
from .model import MISSING, NetworkStructure, ParameterSet

# Largest state space over a record's missing variables for which the
# batched E-step multiplies all factors at once instead of eliminating
# per family.
JOINT_LIMIT = 4096

_LETTERS = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"


@dataclass(frozen=True)
class Factor:
    """Nonnegative table over ``scope``; ``values`` has shape ``(batch, *cards)``."""

    scope: tuple[int, ...]
    values: np.ndarray


class Posterior(NamedTuple):
    table: np.ndarray
    evidence_probability: float


class RecordLikelihood(NamedTuple):
    loglik: float
    zero_probability: bool


def as_evidence(structure: NetworkStructure, evidence: Sequence[int | None]) -> np.ndarray:
    """Validate an evidence vector; ``None`` and ``MISSING`` both mean unobserved."""
    if len(evidence) != len(structure):
        raise StructureError(f"evidence has {len(evidence)} entries for {len(structure)} nodes")
    out = np.empty(len(structure), dtype=np.int64)
    for i, v in enumerate(evidence):
        if v is None or v == MISSING:
            out[i] = MISSING
            continue
        if not 0 <= v < structure.cardinalities[i]:
            raise StateIndexError(f"node {structure.nodes[i].name!r}: observed state {v} out of range")
        out[i] = v
    return out


@lru_cache(maxsize=4096)
def _subscripts(scopes: tuple[tuple[int, ...], ...], keep: tuple[int, ...]) -> str:
    letters: dict[int, str] = {}
    for scope in scopes + (keep,):
        for v in scope:
            letters.setdefault(v, _LETTERS[len(letters)])
    inputs = ",".join("..." + "".join(letters[v] for v in scope) for scope in scopes)
    return inputs + "->..." + "".join(letters[v] for v in keep)


def _multiply(factors: Sequence[Factor], keep: Sequence[int], cards: Sequence[int]) -> Factor:
    """Product of ``factors`` summed down to the variables in ``keep`` (in that order)."""
    keep = tuple(keep)
    if not factors:
        return Factor(keep, np.ones((1, *[cards[v] for v in keep])))
    spec = _subscripts(tuple(f.scope for f in factors), keep)
    return Factor(keep, np.einsum(spec, *[f.values for f in factors]))


def _elimination_order(factors: Sequence[Factor], eliminate: set[int]) -> list[int]:
    """Greedy min-degree order on the interaction graph; ties go to the lower node index."""
    scopes = [set(f.scope) for f in factors]
    remaining = set(eliminate)
    order = []
    while remaining:
        def degree(v):
            nbrs = set()
            for s in scopes:
                if v in s:
                    nbrs |= s
            return len(nbrs - {v})

        v = min(remaining, key=lambda u: (degree(u), u))
        touching = [s for s in scopes if v in s]
        merged = set().union(*touching) - {v} if touching else set()
        scopes = [s for s in scopes if v not in s] + [merged]
        remaining.remove(v)
        order.append(v)
    return order


def eliminate(factors: Sequence[Factor], targets: Sequence[int], cards: Sequence[int]) -> Factor:
    """Sum every variable outside ``targets`` out of the product of ``factors``."""
    factors = list(factors)
    present = set().union(*(f.scope for f in factors)) if factors else set()
    for v in _elimination_order(factors, present - set(targets)):
        touching = [f for f in factors if v in f.scope]
        others = [f for f in factors if v not in f.scope]
        scope = []
        for f in touching:
            scope.extend(u for u in f.scope if u != v and u not in scope)
        factors = others + [_multiply(touching, scope, cards)]
    return _multiply(factors, list(targets), cards)


def reduced_factors(structure: NetworkStructure, params: ParameterSet, evidence: np.ndarray) -> list[Factor]:
    """CPT factors with observed cells absorbed.

    ``evidence`` is a ``(batch, n)`` array whose rows share one missing
    pattern (taken from the first row).
    """
    cards = structure.cardinalities
    missing = evidence[0] == MISSING
    factors = []
    for i in range(len(structure)):
        fam = structure.family(i)
        table = params.tables[i].reshape([cards[v] for v in fam])
        obs_axes = [a for a, v in enumerate(fam) if not missing[v]]
        mis_axes = [a for a, v in enumerate(fam) if missing[v]]
        scope = tuple(fam[a] for a in mis_axes)
        if obs_axes:
            moved = table.transpose(obs_axes + mis_axes)
            values = moved[tuple(evidence[:, fam[a]] for a in obs_axes)]
        else:
            values = table[None, ...]
        factors.append(Factor(scope, values))
    return factors


def _embed(structure: NetworkStructure, evidence: np.ndarray, scope: Sequence[int], partial: np.ndarray) -> np.ndarray:
    """Place a table over the missing members of ``scope`` into a full table over ``scope``."""
    cards = structure.cardinalities
    batch = evidence.shape[0]
    full = np.zeros((batch, *[cards[v] for v in scope]))
    missing = evidence[0] == MISSING
    index: list = [np.arange(batch)]
    for v in scope:
        index.append(slice(None) if missing[v] else evidence[:, v])
    full[tuple(index)] = partial
    return full


def _posterior_batch(
    structure: NetworkStructure, params: ParameterSet, evidence: np.ndarray, targets: Sequence[int]
) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalized joint over ``targets`` with evidence, plus P(evidence), for a batch."""
    cards = structure.cardinalities
    missing = evidence[0] == MISSING
    factors = reduced_factors(structure, params, evidence)
    kept = [v for v in targets if missing[v]]
    joint = eliminate(factors, kept, cards).values
    batch = evidence.shape[0]
    joint = np.broadcast_to(joint, (batch, *joint.shape[1:]))
    p = joint.reshape(batch, -1).sum(axis=1)
    return _embed(structure, evidence, targets, joint), p


def marginal(
    structure: NetworkStructure,
    params: ParameterSet,
    evidence: Sequence[int | None],
    targets: Sequence[int | str],
    record: int | None = None,
) -> Posterior:
    """Posterior table over ``targets`` (axes in the given order) and P(evidence).

    Raises ``ZeroProbabilityEvidenceError`` when the evidence is impossible.
    """
    ev = as_evidence(structure, evidence)[None, :]
    tgt = [structure.node_index(t) for t in targets]
    if not tgt:
        raise StructureError("marginal needs at least one target")
    if len(set(tgt)) != len(tgt):
        raise StructureError("duplicate target")
    joint, p = _posterior_batch(structure, params, ev, tgt)
    pe = float(p[0])
    if not pe > 0.0:
        where = f"record {record}: " if record is not None else ""
        raise ZeroProbabilityEvidenceError(where + "evidence has probability zero", record=record)
    return Posterior(joint[0] / pe, pe)


def family_posterior(
    structure: NetworkStructure,
    params: ParameterSet,
    evidence: Sequence[int | None],
    node: int | str,
    record: int | None = None,
) -> np.ndarray:
    """``q_i x r_i`` table of P(X_i = k, pa(X_i) = j | evidence)."""
    i = structure.node_index(node)
    table, _ = marginal(structure, params, evidence, structure.family(i), record=record)
    return table.reshape(structure.n_configs[i], structure.cardinalities[i])


def record_log_likelihood(
    structure: NetworkStructure, params: ParameterSet, evidence: Sequence[int | None]
) -> RecordLikelihood:
    """log P(observed cells); ``-inf`` flagged as ``zero_probability`` for impossible records."""
    ev = as_evidence(structure, evidence)[None, :]
    factors = reduced_factors(structure, params, ev)
    p = float(eliminate(factors, [], structure.cardinalities).values.reshape(-1)[0])
    if p > 0.0:
        return RecordLikelihood(math.log(p), False)
    return RecordLikelihood(-math.inf, True)


def batch_family_posteriors(
    structure: NetworkStructure, params: ParameterSet, evidence: np.ndarray
) -> tuple[list[np.ndarray], np.ndarray]:
    """Family posteriors for every node over a batch of records with one missing pattern.

    Returns ``(tables, p)`` where ``tables[i]`` has shape ``(batch, q_i, r_i)``
    and ``p`` holds P(evidence) per record.  Rows with ``p == 0`` come back
    all-zero; the caller decides what to do with them.
    """
    cards = structure.cardinalities
    batch = evidence.shape[0]
    missing = evidence[0] == MISSING
    mvars = [v for v in range(len(structure)) if missing[v]]
    factors = reduced_factors(structure, params, evidence)

    per_family: list[np.ndarray] = []
    if math.prod(cards[v] for v in mvars) <= JOINT_LIMIT:
        joint = _multiply(factors, mvars, cards).values
        joint = np.broadcast_to(joint, (batch, *joint.shape[1:]))
        p = joint.reshape(batch, -1).sum(axis=1)
        for i in range(len(structure)):
            fam = structure.family(i)
            keep = [v for v in fam if missing[v]]
            part = _multiply([Factor(tuple(mvars), joint)], keep, cards).values
            per_family.append(_embed(structure, evidence, fam, part))
    else:
        p = None
        for i in range(len(structure)):
            fam = structure.family(i)
            keep = [v for v in fam if missing[v]]
            part = eliminate(factors, keep, cards).values
            part = np.broadcast_to(part, (batch, *part.shape[1:]))
            if p is None:
                p = part.reshape(batch, -1).sum(axis=1)
            per_family.append(_embed(structure, evidence, fam, part))

    safe = np.where(p > 0.0, p, 1.0)
    tables = []
    for i, full in enumerate(per_family):
        t = full.reshape(batch, structure.n_configs[i], cards[i]) / safe[:, None, None]
        t[p <= 0.0] = 0.0
        tables.append(t)
    return tables, p
