"""File formats, synthetic data generation and MCAR masking.

Network files are JSON::

    {
      "nodes": [{"name": "A", "states": ["a0", "a1"], "parents": []}, ...],
      "cpts": {"A": [[0.6, 0.4]], ...}
    }

``cpts`` is optional; rows follow the parent-configuration index and
columns the state order.  Bounds files hold ``{"bounds": {name: {"min":
rows, "max": rows}}}``.  Datasets are comma-separated with a header of node
names, ``?`` for a missing cell and optional ``#`` comment lines.
Probabilities are written with 17 significant digits.
"""

from __future__ import annotations

import json
import os
import re
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .bounds import ParameterBounds
from .errors import FormatError, ParameterError, StructureError, ThreshEMError
from .model import (
    MISSING,
    RENORMALIZE_TOL,
    NetworkStructure,
    Node,
    ParameterSet,
    check_parameters,
    validate_network,
)
from .rng import DOMAIN_MASK, DOMAIN_SAMPLE, SplitMix64

MISSING_TOKEN = "?"
LABEL_RE = re.compile(r"^[A-Za-z0-9_+-]+$")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Records over ``columns``; ``values[l, i]`` is a state index or ``MISSING``."""

    columns: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        v = np.array(self.values, dtype=np.int64).reshape(-1, len(self.columns))
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_records(cls, structure: NetworkStructure, records: Iterable[Sequence[int | None]]) -> "Dataset":
        rows = [[MISSING if c is None else c for c in rec] for rec in records]
        ds = cls(structure.names, np.array(rows, dtype=np.int64).reshape(-1, len(structure)))
        check_dataset(structure, ds)
        return ds

    def __len__(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.columns == other.columns and np.array_equal(self.values, other.values)

    @property
    def records(self) -> list[tuple[int | None, ...]]:
        return [tuple(None if c == MISSING else int(c) for c in row) for row in self.values]


def check_dataset(structure: NetworkStructure, dataset: Dataset) -> None:
    if dataset.columns != structure.names:
        raise StructureError(f"dataset columns {dataset.columns} do not match network nodes {structure.names}")
    v = dataset.values
    cards = np.array(structure.cardinalities)
    bad = np.argwhere((v != MISSING) & ((v < 0) | (v >= cards[None, :])))
    if bad.size:
        r, c = bad[0]
        raise FormatError(f"record {r + 1}: state index {v[r, c]} out of range for node {dataset.columns[c]!r}")


def missingness_rate(dataset: Dataset) -> float:
    if dataset.values.size == 0:
        return 0.0
    return float(np.count_nonzero(dataset.values == MISSING)) / dataset.values.size


# -- generation ---------------------------------------------------------------


def _draw(row: np.ndarray, u: float) -> int:
    acc = 0.0
    last = 0
    for k, p in enumerate(row):
        if p > 0.0:
            last = k
        acc += p
        if u < acc:
            return k
    return last


def forward_sample(structure: NetworkStructure, params: ParameterSet, n: int, seed: int) -> Dataset:
    """``n`` complete records drawn ancestrally; record ``l`` uses its own stream."""
    check_parameters(structure, params)
    order = structure.topological_order
    values = np.empty((n, len(structure)), dtype=np.int64)
    tables = [t.tolist() for t in params.tables]
    cards = structure.cardinalities
    for l in range(n):
        rng = SplitMix64.stream(seed, DOMAIN_SAMPLE, l)
        row = values[l]
        for i in order:
            j = 0
            for p in structure.parent_indices[i]:
                j = j * cards[p] + int(row[p])
            row[i] = _draw(tables[i][j], rng.uniform())
    return Dataset(structure.names, values)


def mask_mcar(dataset: Dataset, rate: float, seed: int) -> Dataset:
    """Hide each cell independently with probability ``rate``."""
    if not 0.0 <= rate <= 1.0:
        raise ThreshEMError(f"missingness rate {rate} outside [0, 1]")
    values = np.array(dataset.values)
    n_rec, n_col = values.shape
    for l in range(n_rec):
        rng = SplitMix64.stream(seed, DOMAIN_MASK, l)
        for c in range(n_col):
            if rng.uniform() < rate:
                values[l, c] = MISSING
    return Dataset(dataset.columns, values)


# -- network files ------------------------------------------------------------


def _fmt(x: float) -> str:
    return "%.17g" % x


def _json_pos(text: str, needle: str) -> tuple[int | None, int | None]:
    pos = text.find(needle)
    if pos < 0:
        return None, None
    line = text.count("\n", 0, pos) + 1
    return line, pos - (text.rfind("\n", 0, pos) + 1) + 1


def _load_json(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(doc, dict):
        raise FormatError("top level must be an object", 1, 1)
    return doc


def _label(value, what: str, text: str) -> str:
    if not isinstance(value, str) or not LABEL_RE.match(value):
        line, col = _json_pos(text, json.dumps(value)) if isinstance(value, str) else (None, None)
        raise FormatError(f"{what} {value!r} must match [A-Za-z0-9_+-]+", line, col)
    return value


def _parse_structure(doc: dict, text: str) -> NetworkStructure:
    raw = doc.get("nodes")
    if not isinstance(raw, list):
        raise FormatError("missing 'nodes' list")
    nodes = []
    for entry in raw:
        if not isinstance(entry, dict) or "name" not in entry or "states" not in entry:
            raise FormatError(f"node entry {entry!r} needs 'name' and 'states'")
        extra = set(entry) - {"name", "states", "parents"}
        if extra:
            raise FormatError(f"node {entry['name']!r}: unknown keys {sorted(extra)}")
        name = _label(entry["name"], "node name", text)
        states = entry["states"]
        parents = entry.get("parents", [])
        if not isinstance(states, list) or not isinstance(parents, list):
            raise FormatError(f"node {name!r}: 'states' and 'parents' must be lists")
        nodes.append(
            Node(
                name,
                tuple(_label(s, "state label", text) for s in states),
                tuple(_label(p, "parent name", text) for p in parents),
            )
        )
    structure = NetworkStructure(tuple(nodes))
    problems = validate_network(structure)
    if problems:
        v = problems[0]
        line, col = _json_pos(text, json.dumps(v.node))
        raise FormatError(f"node {v.node!r}: {v.message}", line, col)
    return structure


def _rows_of(value, name: str, n_rows: int, n_cols: int) -> list[list[float]]:
    if not isinstance(value, list) or len(value) != n_rows:
        raise ParameterError(f"node {name!r}: expected {n_rows} rows")
    rows = []
    for j, row in enumerate(value):
        if not isinstance(row, list) or len(row) != n_cols:
            got = len(row) if isinstance(row, list) else "no"
            raise ParameterError(f"node {name!r}: row {j} has {got} entries, expected {n_cols}")
        if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in row):
            raise ParameterError(f"node {name!r}: row {j} holds a non-numeric entry")
        rows.append([float(x) for x in row])
    return rows


def parse_network(text: str) -> tuple[NetworkStructure, ParameterSet | None]:
    doc = _load_json(text)
    extra = set(doc) - {"nodes", "cpts", "comment"}
    if extra:
        raise FormatError(f"unknown top-level keys {sorted(extra)}")
    structure = _parse_structure(doc, text)
    cpts = doc.get("cpts")
    if cpts is None:
        return structure, None
    if not isinstance(cpts, dict):
        raise FormatError("'cpts' must be an object")
    unknown = set(cpts) - set(structure.names)
    if unknown:
        raise FormatError(f"cpts for undeclared nodes {sorted(unknown)}")
    tables = []
    for node, (q, r) in zip(structure.nodes, structure.table_shapes()):
        if node.name not in cpts:
            raise ParameterError(f"node {node.name!r}: no CPT given")
        tables.append(_rows_of(cpts[node.name], node.name, q, r))
    return structure, ParameterSet.from_rows(structure, tables, RENORMALIZE_TOL)


def _rows_json(table: np.ndarray, indent: str) -> str:
    rows = ["[" + ", ".join(_fmt(x) for x in row) + "]" for row in table]
    return "[\n" + ",\n".join(indent + "  " + r for r in rows) + "\n" + indent + "]"


def serialize_network(structure: NetworkStructure, params: ParameterSet | None = None, comment: str | None = None) -> str:
    lines = ["{"]
    if comment is not None:
        lines.append(f"  \"comment\": {json.dumps(comment)},")
    node_lines = []
    for node in structure.nodes:
        node_lines.append(
            "    {"
            f"\"name\": {json.dumps(node.name)}, "
            f"\"states\": {json.dumps(list(node.states))}, "
            f"\"parents\": {json.dumps(list(node.parents))}"
            "}"
        )
    lines.append("  \"nodes\": [\n" + ",\n".join(node_lines) + "\n  ]" + ("," if params is not None else ""))
    if params is not None:
        check_parameters(structure, params)
        cpt_lines = [
            f"    {json.dumps(node.name)}: {_rows_json(t, '    ')}" for node, t in zip(structure.nodes, params.tables)
        ]
        lines.append("  \"cpts\": {\n" + ",\n".join(cpt_lines) + "\n  }")
    lines.append("}")
    return "\n".join(lines) + "\n"


def serialize_bounds(structure: NetworkStructure, bounds: ParameterBounds) -> str:
    entries = []
    for node, lo, hi in zip(structure.nodes, bounds.lower, bounds.upper):
        entries.append(
            f"    {json.dumps(node.name)}: {{\n"
            f"      \"min\": {_rows_json(lo, '      ')},\n"
            f"      \"max\": {_rows_json(hi, '      ')}\n"
            "    }"
        )
    return "{\n  \"bounds\": {\n" + ",\n".join(entries) + "\n  }\n}\n"


def parse_bounds(text: str, structure: NetworkStructure) -> ParameterBounds:
    doc = _load_json(text)
    body = doc.get("bounds")
    if not isinstance(body, dict):
        raise FormatError("missing 'bounds' object")
    lower, upper = [], []
    for node, (q, r) in zip(structure.nodes, structure.table_shapes()):
        entry = body.get(node.name)
        if not isinstance(entry, dict) or "min" not in entry or "max" not in entry:
            raise FormatError(f"node {node.name!r}: needs 'min' and 'max' tables")
        lower.append(np.array(_rows_of(entry["min"], node.name, q, r)))
        upper.append(np.array(_rows_of(entry["max"], node.name, q, r)))
    return ParameterBounds(tuple(lower), tuple(upper))


# -- dataset files ------------------------------------------------------------


def parse_dataset(text: str, structure: NetworkStructure) -> Dataset:
    header = None
    rows: list[list[int]] = []
    index = structure.index
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip("\r")
        if not line.strip() or line.startswith("#"):
            continue
        cells = line.split(",")
        if header is None:
            for pos, name in enumerate(cells):
                if name not in index:
                    raise FormatError(f"unknown column {name!r}", lineno, pos + 1)
            if len(set(cells)) != len(cells):
                raise FormatError("duplicate column in header", lineno)
            absent = [n for n in structure.names if n not in cells]
            if absent:
                raise FormatError(f"missing columns {absent}", lineno)
            header = [index[n] for n in cells]
            lookup = [{s: k for k, s in enumerate(structure.nodes[i].states)} for i in header]
            continue
        record = len(rows) + 1
        if len(cells) != len(header):
            raise FormatError(f"record {record} has {len(cells)} cells, expected {len(header)}", lineno)
        row = [MISSING] * len(structure)
        for pos, (i, cell) in enumerate(zip(header, cells)):
            if cell == MISSING_TOKEN:
                continue
            try:
                row[i] = lookup[pos][cell]
            except KeyError:
                raise FormatError(
                    f"record {record}: unknown state {cell!r} for node {structure.nodes[i].name!r}", lineno, pos + 1
                ) from None
        rows.append(row)
    if header is None:
        raise FormatError("empty dataset file: no header line")
    return Dataset(structure.names, np.array(rows, dtype=np.int64).reshape(-1, len(structure)))


def serialize_dataset(structure: NetworkStructure, dataset: Dataset, comments: Sequence[str] = ()) -> str:
    check_dataset(structure, dataset)
    out = [f"# {c}" for c in comments]
    out.append(",".join(structure.names))
    labels = [node.states for node in structure.nodes]
    for row in dataset.values:
        out.append(",".join(MISSING_TOKEN if v == MISSING else labels[i][v] for i, v in enumerate(row)))
    return "\n".join(out) + "\n"


# -- CSV tables and atomic writes ---------------------------------------------

TRACE_HEADER = (
    "iteration",
    "observed_loglik",
    "expected_loglik",
    "max_param_delta",
    "clip_count",
    "post_norm_violations",
    "skipped_records",
)
SUMMARY_HEADER = (
    "trial",
    "em_iters",
    "them_iters",
    "em_final_ll",
    "them_final_ll",
    "em_zero_params",
    "them_zero_params",
    "them_violations",
)


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return _fmt(float(x))


def serialize_table(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(_cell(x) for x in row) for row in rows)
    return "\n".join(lines) + "\n"


def parse_table(text: str) -> tuple[list[str], list[list[float]]]:
    lines = [ln for ln in text.split("\n") if ln and not ln.startswith("#")]
    header = lines[0].split(",")
    return header, [[float(c) for c in ln.split(",")] for ln in lines[1:]]


def write_atomic(path: str | os.PathLike, text: str) -> None:
    """Write ``text`` to a temporary file next to ``path`` and rename it into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_text(path: str | os.PathLike) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()
