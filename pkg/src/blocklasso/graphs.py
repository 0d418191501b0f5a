"""Network, partition and attribute ingestion.

Reads delimited edge lists and node-attribute tables, builds block
partitions from attribute combinations, and runs pre-fit diagnostics.
All loaders map opaque string node ids to dense indices internally;
node order is always the sorted order of the ids, so loading is
invariant to the row order of the input files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "Graph",
    "Partition",
    "AttributeTable",
    "ValidationReport",
    "EdgeListError",
    "AttributeTableError",
    "PartitionError",
    "load_edge_list",
    "load_node_list",
    "load_attributes",
    "partition_from_attributes",
    "validate",
]


class EdgeListError(ValueError):
    """An edge-list file violates the input contract."""


class AttributeTableError(ValueError):
    """An attribute table is malformed or missing required values."""


class PartitionError(ValueError):
    """A block partition is inconsistent with its node set."""


@dataclass
class Graph:
    """Undirected graph with nonnegative integer edge weights and no self-loops.

    ``node_ids`` are held in sorted order and ``weights`` is the symmetric
    adjacency matrix aligned to that order (binary graphs use {0, 1}).
    Instances are treated as immutable once constructed.
    """

    node_ids: tuple[str, ...]
    weights: np.ndarray

    def __post_init__(self):
        self.node_ids = tuple(str(v) for v in self.node_ids)
        if len(set(self.node_ids)) != len(self.node_ids):
            raise ValueError("duplicate node ids")
        w = np.asarray(self.weights)
        n = len(self.node_ids)
        if w.ndim != 2 or w.shape != (n, n):
            raise ValueError(f"weight matrix must be {n}x{n}, got {w.shape}")
        if not np.issubdtype(w.dtype, np.integer):
            if not np.all(np.isfinite(w)) or np.any(w != np.round(w)):
                raise ValueError("edge weights must be integers")
        w = w.astype(np.int64)
        if np.any(w < 0):
            raise ValueError("edge weights must be nonnegative")
        if np.any(np.diag(w) != 0):
            raise ValueError("self-loops are not allowed")
        if not np.array_equal(w, w.T):
            raise ValueError("weight matrix must be symmetric")
        self.weights = w
        self._index = {v: i for i, v in enumerate(self.node_ids)}

    @property
    def node_count(self) -> int:
        return len(self.node_ids)

    @property
    def is_binary(self) -> bool:
        return bool(np.all(self.weights <= 1))

    @property
    def edge_count(self) -> int:
        """Number of node pairs with a nonzero weight."""
        return int(np.count_nonzero(np.triu(self.weights, k=1)))

    @property
    def density(self) -> float:
        n = self.node_count
        pairs = n * (n - 1) // 2
        return self.edge_count / pairs if pairs else 0.0

    def index_of(self, node_id: str) -> int:
        return self._index[node_id]


@dataclass
class Partition:
    """Assignment of every node to one of ``block_count`` labeled blocks.

    ``block_of`` maps node id to a 0-based index into ``block_labels``
    (labels are kept sorted). Every block must contain at least one node.
    """

    block_labels: tuple[str, ...]
    block_of: dict[str, int]

    def __post_init__(self):
        self.block_labels = tuple(str(v) for v in self.block_labels)
        if len(set(self.block_labels)) != len(self.block_labels):
            raise PartitionError("duplicate block labels")
        p = len(self.block_labels)
        if p < 1:
            raise PartitionError("partition needs at least one block")
        used = set()
        for node, idx in self.block_of.items():
            if not 0 <= idx < p:
                raise PartitionError(f"node {node!r} has out-of-range block index {idx}")
            used.add(idx)
        if used != set(range(p)):
            missing = sorted(set(range(p)) - used)
            labels = ", ".join(self.block_labels[i] for i in missing)
            raise PartitionError(f"empty blocks: {labels}")

    @property
    def block_count(self) -> int:
        return len(self.block_labels)

    def label_of(self, node_id: str) -> str:
        return self.block_labels[self.block_of[node_id]]

    def sizes(self) -> np.ndarray:
        counts = np.zeros(self.block_count, dtype=np.int64)
        for idx in self.block_of.values():
            counts[idx] += 1
        return counts

    def indices_for(self, node_ids) -> np.ndarray:
        """Block index of each node in ``node_ids``, preserving order."""
        try:
            return np.array([self.block_of[v] for v in node_ids], dtype=np.int64)
        except KeyError as exc:
            raise PartitionError(f"node {exc.args[0]!r} is not in the partition") from None


@dataclass
class AttributeTable:
    """Per-node named attributes, stored as strings and coerced on demand."""

    node_ids: tuple[str, ...]
    columns: dict[str, tuple[str, ...]]

    def __post_init__(self):
        self.node_ids = tuple(str(v) for v in self.node_ids)
        if len(set(self.node_ids)) != len(self.node_ids):
            raise AttributeTableError("duplicate node rows")
        for name, values in self.columns.items():
            if len(values) != len(self.node_ids):
                raise AttributeTableError(f"attribute {name!r} has {len(values)} values "
                                          f"for {len(self.node_ids)} nodes")
        self._row = {v: i for i, v in enumerate(self.node_ids)}

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.columns)

    def has_node(self, node_id: str) -> bool:
        return node_id in self._row

    def value(self, node_id: str, attribute: str) -> str:
        """Raw string value; empty string means missing."""
        if attribute not in self.columns:
            raise AttributeTableError(f"unknown attribute {attribute!r}")
        if node_id not in self._row:
            raise AttributeTableError(f"node {node_id!r} has no attribute row")
        return self.columns[attribute][self._row[node_id]]

    def numeric(self, node_id: str, attribute: str) -> float:
        raw = self.value(node_id, attribute)
        try:
            return float(raw)
        except ValueError:
            raise AttributeTableError(
                f"attribute {attribute!r} of node {node_id!r} is not numeric: {raw!r}"
            ) from None


def _detect_delimiter(line: str) -> str:
    return "\t" if "\t" in line else ","


def _read_lines(path) -> list[str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise
    return text.splitlines()


def load_edge_list(path, mode: str = "binary", *, extra_nodes=(), node_file=None,
                   has_header: bool = False, delimiter: str | None = None) -> Graph:
    """Load an undirected graph from a delimited edge list.

    Parameters
    ----------
    path : str or Path
        Text file with columns ``source,target`` (binary mode) or
        ``source,target,weight`` (weighted mode); comma or tab delimited,
        autodetected unless ``delimiter`` is given.
    mode : {"binary", "weighted"}
        Binary mode collapses duplicate rows with logical-or; weighted
        mode sums the integer weights of duplicate rows.
    extra_nodes : iterable of str
        Additional node ids to include (possibly isolated).
    node_file : str or Path, optional
        Companion file with one node id per line, merged into the node set.
    has_header : bool
        Skip the first line.

    Raises
    ------
    EdgeListError
        On self-loops, malformed rows, or invalid weights; the message
        names the offending line.
    """
    if mode not in ("binary", "weighted"):
        raise ValueError(f"mode must be 'binary' or 'weighted', got {mode!r}")
    lines = _read_lines(path)
    expected = 2 if mode == "binary" else 3
    accum: dict[tuple[str, str], int] = {}
    nodes: set[str] = set(str(v) for v in extra_nodes)
    if node_file is not None:
        nodes.update(load_node_list(node_file))
    sep = delimiter
    start = 1 if has_header else 0
    for lineno, raw in enumerate(lines, start=1):
        if lineno <= start or not raw.strip():
            continue
        if sep is None:
            sep = _detect_delimiter(raw)
        fields = [f.strip() for f in raw.split(sep)]
        if len(fields) != expected:
            raise EdgeListError(
                f"{path}: line {lineno}: expected {expected} columns, got {len(fields)}"
            )
        a, b = fields[0], fields[1]
        if not a or not b:
            raise EdgeListError(f"{path}: line {lineno}: empty node id")
        if a == b:
            raise EdgeListError(f"{path}: line {lineno}: self-loop on node {a!r}")
        if mode == "weighted":
            try:
                weight = int(fields[2])
            except ValueError:
                raise EdgeListError(
                    f"{path}: line {lineno}: non-integer weight {fields[2]!r}"
                ) from None
            if weight < 0:
                raise EdgeListError(f"{path}: line {lineno}: negative weight {weight}")
        else:
            weight = 1
        key = (a, b) if a < b else (b, a)
        if mode == "weighted":
            accum[key] = accum.get(key, 0) + weight
        else:
            accum[key] = 1
        nodes.add(a)
        nodes.add(b)

    node_ids = tuple(sorted(nodes))
    index = {v: i for i, v in enumerate(node_ids)}
    n = len(node_ids)
    weights = np.zeros((n, n), dtype=np.int64)
    for (a, b), weight in accum.items():
        i, j = index[a], index[b]
        weights[i, j] = weight
        weights[j, i] = weight
    return Graph(node_ids=node_ids, weights=weights)


def load_node_list(path) -> tuple[str, ...]:
    """Read one node id per line; blank lines are ignored."""
    return tuple(line.strip() for line in _read_lines(path) if line.strip())


def load_attributes(path, delimiter: str | None = None) -> AttributeTable:
    """Load a node-attribute table from delimited text with a header row.

    The first column holds the node id; remaining header names become
    attribute names. Empty cells are treated as missing values.
    """
    lines = [line for line in _read_lines(path) if line.strip()]
    if not lines:
        raise AttributeTableError(f"{path}: empty attribute table")
    sep = delimiter or _detect_delimiter(lines[0])
    header = [f.strip() for f in lines[0].split(sep)]
    if len(header) < 1:
        raise AttributeTableError(f"{path}: missing header")
    attr_names = header[1:]
    if len(set(attr_names)) != len(attr_names):
        raise AttributeTableError(f"{path}: duplicate attribute names in header")
    node_ids: list[str] = []
    values: list[list[str]] = [[] for _ in attr_names]
    for lineno, raw in enumerate(lines[1:], start=2):
        fields = [f.strip() for f in raw.split(sep)]
        if len(fields) != len(header):
            raise AttributeTableError(
                f"{path}: line {lineno}: expected {len(header)} columns, got {len(fields)}"
            )
        node_ids.append(fields[0])
        for k, v in enumerate(fields[1:]):
            values[k].append(v)
    columns = {name: tuple(col) for name, col in zip(attr_names, values)}
    return AttributeTable(node_ids=tuple(node_ids), columns=columns)


def partition_from_attributes(attrs: AttributeTable, keys, overrides=None,
                              separator: str = "-") -> Partition:
    """Build a partition whose blocks are combinations of attribute values.

    Each node is assigned the label formed by joining its values of
    ``keys`` with ``separator``; nodes listed in ``overrides`` (a map
    node id -> block label) get the override label instead and need no
    attribute values. Block labels are sorted, so the result is
    deterministic regardless of input order.
    """
    overrides = dict(overrides or {})
    keys = list(keys)
    block_of_label: dict[str, str] = {}
    for node in attrs.node_ids:
        if node in overrides:
            block_of_label[node] = str(overrides[node])
            continue
        if not keys:
            raise PartitionError(f"node {node!r} has no partition keys and no override")
        parts = []
        for key in keys:
            value = attrs.value(node, key)
            if not value:
                raise PartitionError(
                    f"node {node!r} is missing a value for {key!r} and has no override"
                )
            parts.append(value)
        block_of_label[node] = separator.join(parts)
    for node, label in overrides.items():
        block_of_label.setdefault(str(node), str(label))
    labels = tuple(sorted(set(block_of_label.values())))
    index = {label: i for i, label in enumerate(labels)}
    block_of = {node: index[label] for node, label in block_of_label.items()}
    return Partition(block_labels=labels, block_of=block_of)


@dataclass
class ValidationReport:
    """Diagnostics for a (graph, partition) pair; report-only, never raises."""

    passed: bool
    node_count: int
    block_count: int
    density: float
    block_sizes: dict[str, int]
    empty_pairs: tuple[tuple[str, str], ...]
    data_sparse_pairs: tuple[tuple[str, str], ...]
    problems: tuple[str, ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "passed": self.passed,
            "node_count": self.node_count,
            "block_count": self.block_count,
            "density": self.density,
            "block_sizes": self.block_sizes,
            "empty_pairs": [list(pair) for pair in self.empty_pairs],
            "data_sparse_pairs": [list(pair) for pair in self.data_sparse_pairs],
            "problems": list(self.problems),
        }

    def to_text(self) -> str:
        lines = [
            f"nodes: {self.node_count}",
            f"blocks: {self.block_count}",
            f"density: {self.density:.6g}",
            "block sizes: " + ", ".join(f"{k}={v}" for k, v in self.block_sizes.items()),
            f"block pairs without dyads: {len(self.empty_pairs)}",
        ]
        if self.empty_pairs:
            lines.append("  " + "; ".join(f"({a},{b})" for a, b in self.empty_pairs))
        lines.append(f"data-sparse block pairs (dyads but no edges): {len(self.data_sparse_pairs)}")
        if self.data_sparse_pairs:
            lines.append("  " + "; ".join(f"({a},{b})" for a, b in self.data_sparse_pairs))
        for problem in self.problems:
            lines.append(f"PROBLEM: {problem}")
        lines.append("status: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)


def validate(graph: Graph, partition: Partition) -> ValidationReport:
    """Check that a graph and partition are mutually consistent.

    Reports basic size/density figures, block pairs with no dyads at all
    (inestimable without outside information) and block pairs whose dyads
    carry no edges (data-sparse). Passes iff the partition covers exactly
    the graph's node set.
    """
    problems: list[str] = []
    graph_nodes = set(graph.node_ids)
    part_nodes = set(partition.block_of)
    for node in sorted(part_nodes - graph_nodes):
        problems.append(f"partition references unknown node {node!r}")
    for node in sorted(graph_nodes - part_nodes):
        problems.append(f"graph node {node!r} is missing from the partition")

    p = partition.block_count
    sizes = np.zeros(p, dtype=np.int64)
    for node in graph.node_ids:
        if node in partition.block_of:
            sizes[partition.block_of[node]] += 1
    block_sizes = {label: int(sizes[i]) for i, label in enumerate(partition.block_labels)}

    # Per-pair dyad and edge-weight tallies over the shared node set.
    common = [v for v in graph.node_ids if v in partition.block_of]
    idx = np.array([graph.index_of(v) for v in common], dtype=np.int64)
    blocks = np.array([partition.block_of[v] for v in common], dtype=np.int64)
    pair_dyads = np.zeros((p, p), dtype=np.int64)
    pair_weight = np.zeros((p, p), dtype=np.int64)
    if len(common) >= 2:
        iu, ju = np.triu_indices(len(common), k=1)
        r, s = blocks[iu], blocks[ju]
        lo, hi = np.minimum(r, s), np.maximum(r, s)
        np.add.at(pair_dyads, (lo, hi), 1)
        np.add.at(pair_weight, (lo, hi), graph.weights[idx[iu], idx[ju]])

    empty, sparse = [], []
    for r in range(p):
        for s in range(r, p):
            pair = (partition.block_labels[r], partition.block_labels[s])
            if pair_dyads[r, s] == 0:
                empty.append(pair)
            elif pair_weight[r, s] == 0:
                sparse.append(pair)

    return ValidationReport(
        passed=not problems,
        node_count=graph.node_count,
        block_count=p,
        density=graph.density,
        block_sizes=block_sizes,
        empty_pairs=tuple(empty),
        data_sparse_pairs=tuple(sparse),
        problems=tuple(problems),
    )
