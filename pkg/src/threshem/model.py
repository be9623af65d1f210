"""Network structure, parameter containers and configuration indexing.

States are dense integer indices everywhere inside the package; labels are
only used at the file boundary.  A parent configuration ``j`` is the
mixed-radix encoding of the parent state tuple with the *last* listed parent
varying fastest, so a node's table reshaped to ``(*parent_cards, r_i)`` in C
order is indexed by ``(*parent_values, k)``.
"""

from __future__ import annotations

import graphlib
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    MissingValueError,
    ParameterError,
    PriorDomainError,
    StateIndexError,
    StructureError,
)

#: Marker for an unobserved cell in datasets and evidence vectors.
MISSING = -1

ROW_SUM_TOL = 1e-9
RENORMALIZE_TOL = 1e-6


@dataclass(frozen=True)
class Node:
    name: str
    states: tuple[str, ...]
    parents: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "parents", tuple(self.parents))

    @property
    def cardinality(self) -> int:
        return len(self.states)


@dataclass(frozen=True)
class Violation:
    node: str
    kind: str
    message: str


@dataclass(frozen=True)
class NetworkStructure:
    """An ordered collection of nodes forming a DAG.

    Construction never fails on structural problems so that
    :func:`validate_network` can report them; the derived properties
    (``cardinalities``, ``parent_indices``, ...) raise ``StructureError``
    on an invalid structure.
    """

    nodes: tuple[Node, ...]

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))

    @classmethod
    def from_lists(cls, spec: Iterable[tuple[str, Sequence[str], Sequence[str]]]) -> "NetworkStructure":
        return cls(tuple(Node(name, tuple(states), tuple(parents)) for name, states, parents in spec))

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(node.name for node in self.nodes)

    @cached_property
    def _checked(self) -> bool:
        problems = validate_network(self)
        if problems:
            raise StructureError("; ".join(f"{v.node}: {v.message}" for v in problems))
        return True

    @cached_property
    def index(self) -> dict[str, int]:
        self._checked
        return {node.name: i for i, node in enumerate(self.nodes)}

    @cached_property
    def cardinalities(self) -> tuple[int, ...]:
        self._checked
        return tuple(node.cardinality for node in self.nodes)

    @cached_property
    def parent_indices(self) -> tuple[tuple[int, ...], ...]:
        idx = self.index
        return tuple(tuple(idx[p] for p in node.parents) for node in self.nodes)

    @cached_property
    def n_configs(self) -> tuple[int, ...]:
        cards = self.cardinalities
        return tuple(math.prod(cards[p] for p in pa) for pa in self.parent_indices)

    @cached_property
    def topological_order(self) -> tuple[int, ...]:
        # Kahn's algorithm, ties broken by declaration order.
        pending = [len(pa) for pa in self.parent_indices]
        children: list[list[int]] = [[] for _ in self.nodes]
        for i, pa in enumerate(self.parent_indices):
            for p in pa:
                children[p].append(i)
        ready = [i for i, c in enumerate(pending) if c == 0]
        order = []
        while ready:
            ready.sort()
            i = ready.pop(0)
            order.append(i)
            for c in children[i]:
                pending[c] -= 1
                if pending[c] == 0:
                    ready.append(c)
        return tuple(order)

    def node_index(self, node: int | str) -> int:
        if isinstance(node, str):
            try:
                return self.index[node]
            except KeyError:
                raise StructureError(f"unknown node {node!r}") from None
        if not 0 <= node < len(self.nodes):
            raise StructureError(f"node index {node} out of range")
        return int(node)

    def family(self, node: int | str) -> tuple[int, ...]:
        """Parents of ``node`` followed by the node itself."""
        i = self.node_index(node)
        return self.parent_indices[i] + (i,)

    def table_shapes(self) -> tuple[tuple[int, int], ...]:
        return tuple(zip(self.n_configs, self.cardinalities))


def validate_network(structure: NetworkStructure) -> list[Violation]:
    """Return every structural violation; an empty list means valid."""
    violations: list[Violation] = []
    seen: set[str] = set()
    for node in structure.nodes:
        if node.name in seen:
            violations.append(Violation(node.name, "duplicate-name", f"node name {node.name!r} declared twice"))
        seen.add(node.name)
        if len(node.states) < 2:
            violations.append(
                Violation(node.name, "cardinality", f"needs at least 2 states, has {len(node.states)}")
            )
        if len(set(node.states)) != len(node.states):
            violations.append(Violation(node.name, "duplicate-state", "state labels are not unique"))
        if len(set(node.parents)) != len(node.parents):
            violations.append(Violation(node.name, "duplicate-parent", "a parent is listed twice"))

    graph: dict[str, set[str]] = {}
    for node in structure.nodes:
        known = set()
        for p in node.parents:
            if p not in seen:
                violations.append(Violation(node.name, "unknown-parent", f"parent {p!r} is not a declared node"))
            else:
                known.add(p)
        graph.setdefault(node.name, set()).update(known)

    # Each CycleError names one cycle; break it and look again so that
    # independent cycles are all reported.
    while True:
        try:
            tuple(graphlib.TopologicalSorter(graph).static_order())
            break
        except graphlib.CycleError as exc:
            cycle = exc.args[1]
            violations.append(Violation(cycle[0], "cycle", "directed cycle " + " -> ".join(cycle)))
            # graphlib reports [v0, v1, ..., v0] with each v_m a parent of v_{m+1}.
            graph[cycle[1]].discard(cycle[0])
    return violations


def parent_config_index(structure: NetworkStructure, node: int | str, parent_values: Sequence[int]) -> int:
    i = structure.node_index(node)
    parents = structure.parent_indices[i]
    name = structure.nodes[i].name
    if len(parent_values) != len(parents):
        raise StateIndexError(f"node {name!r} has {len(parents)} parents, got {len(parent_values)} values")
    j = 0
    for p, v in zip(parents, parent_values):
        card = structure.cardinalities[p]
        if not 0 <= v < card:
            raise StateIndexError(
                f"parent {structure.nodes[p].name!r} of node {name!r}: state index {v} out of range 0..{card - 1}"
            )
        j = j * card + int(v)
    return j


def parent_values_of(structure: NetworkStructure, node: int | str, j: int) -> tuple[int, ...]:
    """Inverse of :func:`parent_config_index`."""
    i = structure.node_index(node)
    if not 0 <= j < structure.n_configs[i]:
        raise StateIndexError(f"configuration {j} out of range for node {structure.nodes[i].name!r}")
    values = []
    for p in reversed(structure.parent_indices[i]):
        j, v = divmod(j, structure.cardinalities[p])
        values.append(v)
    return tuple(reversed(values))


@dataclass(frozen=True, eq=False)
class ParameterSet:
    """One ``q_i x r_i`` table per node.

    Rows are not required to sum to one here (the regularization step
    produces unnormalized rows); use :func:`check_parameters` to enforce the
    stochastic-row invariant.
    """

    tables: tuple[np.ndarray, ...]

    def __post_init__(self):
        tables = []
        for t in self.tables:
            a = np.array(t, dtype=float)
            if a.ndim != 2:
                raise ParameterError(f"parameter tables must be 2-D, got shape {a.shape}")
            a.setflags(write=False)
            tables.append(a)
        object.__setattr__(self, "tables", tuple(tables))

    def __len__(self) -> int:
        return len(self.tables)

    def __getitem__(self, i: int) -> np.ndarray:
        return self.tables[i]

    def __eq__(self, other):
        if not isinstance(other, ParameterSet) or len(other) != len(self):
            return NotImplemented
        return all(a.shape == b.shape and np.array_equal(a, b) for a, b in zip(self.tables, other.tables))

    def max_abs_diff(self, other: "ParameterSet") -> float:
        return max((float(np.max(np.abs(a - b))) for a, b in zip(self.tables, other.tables)), default=0.0)

    @classmethod
    def uniform(cls, structure: NetworkStructure) -> "ParameterSet":
        return cls(tuple(np.full((q, r), 1.0 / r) for q, r in structure.table_shapes()))

    @classmethod
    def from_rows(
        cls,
        structure: NetworkStructure,
        tables: Sequence[Sequence[Sequence[float]]],
        renormalize_tol: float = RENORMALIZE_TOL,
    ) -> "ParameterSet":
        """Build from hand-written tables, renormalizing rows off by at most ``renormalize_tol``."""
        out = []
        for (q, r), node, rows in zip(structure.table_shapes(), structure.nodes, tables):
            a = np.array(rows, dtype=float)
            if a.shape != (q, r):
                raise ParameterError(f"node {node.name!r}: table shape {a.shape}, expected {(q, r)}")
            if np.any(a < 0) or not np.all(np.isfinite(a)):
                raise ParameterError(f"node {node.name!r}: negative or non-finite probability")
            sums = a.sum(axis=1)
            bad = np.flatnonzero(np.abs(sums - 1.0) > renormalize_tol)
            if bad.size:
                raise ParameterError(f"node {node.name!r}: row {int(bad[0])} sums to {float(sums[bad[0]])!r}")
            drift = np.abs(sums - 1.0) > ROW_SUM_TOL
            a[drift] /= sums[drift, None]
            out.append(a)
        if len(out) != len(structure):
            raise ParameterError(f"expected {len(structure)} tables, got {len(tables)}")
        return cls(tuple(out))


def check_parameters(structure: NetworkStructure, params: ParameterSet, tol: float = ROW_SUM_TOL) -> None:
    """Raise ``ParameterError`` unless ``params`` is a valid row-stochastic set for ``structure``."""
    if len(params) != len(structure):
        raise ParameterError(f"expected {len(structure)} tables, got {len(params)}")
    for (q, r), node, t in zip(structure.table_shapes(), structure.nodes, params.tables):
        if t.shape != (q, r):
            raise ParameterError(f"node {node.name!r}: table shape {t.shape}, expected {(q, r)}")
        if np.any(t < 0) or not np.all(np.isfinite(t)):
            raise ParameterError(f"node {node.name!r}: negative or non-finite probability")
        dev = np.abs(t.sum(axis=1) - 1.0)
        if np.any(dev > tol):
            raise ParameterError(f"node {node.name!r}: row {int(np.argmax(dev))} does not sum to 1")


@dataclass(frozen=True, eq=False)
class PriorSpec:
    """Dirichlet hyperparameters ``alpha[i][j, k]``."""

    alpha: tuple[np.ndarray, ...]
    alpha_row: tuple[np.ndarray, ...] = field(init=False)

    def __post_init__(self):
        tables = []
        for t in self.alpha:
            a = np.array(t, dtype=float)
            if np.any(a < 0) or not np.all(np.isfinite(a)):
                raise PriorDomainError("Dirichlet hyperparameters must be finite and nonnegative")
            a.setflags(write=False)
            tables.append(a)
        object.__setattr__(self, "alpha", tuple(tables))
        rows = []
        for a in tables:
            s = a.sum(axis=1)
            s.setflags(write=False)
            rows.append(s)
        object.__setattr__(self, "alpha_row", tuple(rows))

    @classmethod
    def uniform(cls, structure: NetworkStructure, value: float = 1.0) -> "PriorSpec":
        return cls(tuple(np.full(shape, float(value)) for shape in structure.table_shapes()))


def joint_probability(structure: NetworkStructure, params: ParameterSet, assignment: Sequence[int]) -> float:
    """Product of the CPT entries selected by a full assignment."""
    if len(assignment) != len(structure):
        raise MissingValueError(f"assignment covers {len(assignment)} of {len(structure)} nodes")
    for i, v in enumerate(assignment):
        if v is None or v == MISSING:
            raise MissingValueError(f"node {structure.nodes[i].name!r} is missing from the assignment")
        if not 0 <= v < structure.cardinalities[i]:
            raise StateIndexError(f"node {structure.nodes[i].name!r}: state index {v} out of range")
    p = 1.0
    for i, pa in enumerate(structure.parent_indices):
        j = parent_config_index(structure, i, [assignment[q] for q in pa])
        p *= float(params.tables[i][j, assignment[i]])
    return p
