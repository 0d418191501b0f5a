"""Constraint-respecting design matrices for blockmodel GLMs.

Two model families are encoded over the dyad table:

* the degree-corrected Bernoulli blockmodel, whose linear predictor for a
  dyad (i, j) with i in block r and j in block s is
  ``intercept + a_i + a_j + f_rs`` with node effects summing to zero;
* the covariate-adjusted Poisson blockmodel with predictor
  ``intercept + x_ij·b + g_r + g_s + f_rs`` with block effects summing
  to zero.

In both, every row of the block-interaction matrix f sums to zero, so
the within-block value f_rr equals minus the sum of that block's
off-diagonal values. The encoding substitutes that identity directly:
there is one free column per unordered block pair {r, s} with r < s, a
between-block dyad puts +1 in its pair column, and a within-block dyad
in block r puts -1 in every column {r, t}. Sum-to-zero node and block
effects are coded the usual way, folding the last (sorted) level into
the remaining columns with -1 entries.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .covariates import DyadTable
from .graphs import Partition

__all__ = [
    "ModelSpec",
    "DesignMatrix",
    "encode",
    "reconstruct_interactions",
]

FAMILIES = ("bernoulli_logit", "poisson_log")

GROUP_INTERCEPT = "intercept"
GROUP_COVARIATE = "covariate"
GROUP_NODE = "node_effect"
GROUP_BLOCK = "block_effect"
GROUP_INTERACTION = "interaction"


@dataclass
class ModelSpec:
    """Which family and effect groups a model includes.

    The two tested presets are :meth:`degree_corrected` (Bernoulli with
    node effects) and :meth:`covariate_adjusted` (Poisson with block main
    effects and covariates); arbitrary combinations are permitted.
    ``penalize_covariates`` defaults to penalizing covariates whenever
    any are included, which matches the covariate-adjusted preset.
    """

    family: str
    node_effects: bool = False
    block_main_effects: bool = False
    covariates: tuple[str, ...] = ()
    penalize_covariates: bool | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        self.covariates = tuple(self.covariates)

    @classmethod
    def degree_corrected(cls) -> "ModelSpec":
        """Bernoulli model with node effects and block interactions."""
        return cls(family="bernoulli_logit", node_effects=True,
                   block_main_effects=False, penalize_covariates=False)

    @classmethod
    def covariate_adjusted(cls, covariates=()) -> "ModelSpec":
        """Poisson model with block main effects, covariates and interactions."""
        return cls(family="poisson_log", node_effects=False,
                   block_main_effects=True, covariates=tuple(covariates),
                   penalize_covariates=True)

    @property
    def penalizes_covariates(self) -> bool:
        if self.penalize_covariates is None:
            return bool(self.covariates)
        return self.penalize_covariates


@dataclass
class DesignMatrix:
    """Sparse dyad-by-coefficient matrix plus column metadata.

    Column order is: intercept, covariates, node effects (n-1), block
    main effects (p-1), block interactions (one per unordered pair,
    lexicographic). ``penalized_mask`` marks the interaction columns and,
    when requested, the covariate columns. ``inestimable`` marks columns
    with no nonzero entries; fitters hold those coefficients at zero.
    """

    matrix: sp.csr_array
    column_names: tuple[str, ...]
    groups: tuple[str, ...]
    penalized_mask: np.ndarray
    inestimable: np.ndarray
    spec: ModelSpec
    node_ids: tuple[str, ...]
    block_labels: tuple[str, ...]
    block_pairs: tuple[tuple[int, int], ...]
    dyad_blocks: np.ndarray = field(repr=False)  # (m, 2) block index of each endpoint

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_columns(self) -> int:
        return self.matrix.shape[1]

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def block_count(self) -> int:
        return len(self.block_labels)

    @property
    def parameter_count(self) -> int:
        """Model parameter count in the blockmodel accounting convention.

        For a node-effect model this is n + p(p-1)/2; for a block-effect
        model it is (number of covariates) + p(p+1)/2, the intercept and
        constrained effects being folded into the block tally. For the
        two presets this equals ``n_columns`` exactly.
        """
        n, p = self.n_nodes, self.block_count
        if self.spec.node_effects and not self.spec.block_main_effects:
            return n + p * (p - 1) // 2
        if self.spec.block_main_effects and not self.spec.node_effects:
            return len(self.spec.covariates) + p * (p + 1) // 2
        return self.n_columns

    def group_indices(self, group: str) -> np.ndarray:
        return np.flatnonzero(np.array(self.groups) == group)

    def linear_predictor(self, coefficients) -> np.ndarray:
        coefficients = np.asarray(coefficients, dtype=np.float64)
        if coefficients.shape != (self.n_columns,):
            raise ValueError(f"expected {self.n_columns} coefficients")
        return self.matrix @ coefficients

    def csc(self) -> sp.csc_array:
        """Column-oriented form of the matrix, cached for solvers."""
        cached = getattr(self, "_csc", None)
        if cached is None:
            cached = self.matrix.tocsc()
            cached.sort_indices()
            object.__setattr__(self, "_csc", cached)
        return cached

    def column_slices(self):
        """(indptr, indices, data) of the CSC form."""
        csc = self.csc()
        return csc.indptr, csc.indices, csc.data

    def columns_submatrix(self, mask) -> sp.csc_array:
        return self.csc()[:, np.flatnonzero(mask)]

    def expand_node_effects(self, coefficients) -> np.ndarray:
        """Full length-n node-effect vector; the folded last entry is
        minus the sum of the free ones, so the vector sums to zero."""
        idx = self.group_indices(GROUP_NODE)
        free = np.asarray(coefficients)[idx]
        return np.concatenate([free, [-free.sum()]]) if len(idx) else np.zeros(0)

    def expand_block_effects(self, coefficients) -> np.ndarray:
        idx = self.group_indices(GROUP_BLOCK)
        free = np.asarray(coefficients)[idx]
        return np.concatenate([free, [-free.sum()]]) if len(idx) else np.zeros(0)

    def interaction_matrix(self, coefficients) -> np.ndarray:
        """Symmetric p-by-p block-interaction matrix implied by a fit."""
        idx = self.group_indices(GROUP_INTERACTION)
        return reconstruct_interactions(np.asarray(coefficients)[idx], self.block_count)

    def dump_triplets(self, path) -> None:
        """Write the matrix as text triplets: one ``row col value`` line
        per stored entry, sorted by (row, col), with a ``# rows cols``
        header line."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with Path(path).open("w", encoding="utf-8") as handle:
            handle.write(f"# {self.n_rows} {self.n_columns}\n")
            for k in order:
                handle.write(f"{coo.row[k]} {coo.col[k]} {float(coo.data[k])!r}\n")


def encode(table: DyadTable, partition: Partition, spec: ModelSpec) -> DesignMatrix:
    """Encode a model specification over a dyad table as a design matrix.

    Requires the table and the partition to cover the same node set.
    Covariate names in ``spec`` must exist in the table. See the module
    docstring for the column coding.
    """
    table_nodes = set(table.node_ids)
    part_nodes = set(partition.block_of)
    if table_nodes != part_nodes:
        extra = sorted(part_nodes - table_nodes)[:5]
        missing = sorted(table_nodes - part_nodes)[:5]
        raise ValueError(
            f"partition and dyad table cover different node sets "
            f"(missing from table: {extra}, missing from partition: {missing})"
        )
    for name in spec.covariates:
        if name not in table.covariate_names:
            raise ValueError(f"covariate {name!r} is not in the dyad table")

    n = len(table.node_ids)
    p = partition.block_count
    if p < 1:
        raise ValueError("partition must have at least one block")
    m = table.dyad_count
    i_idx = table.dyads[:, 0]
    j_idx = table.dyads[:, 1]
    node_blocks = partition.indices_for(table.node_ids)
    r_i = node_blocks[i_idx]
    r_j = node_blocks[j_idx]

    names: list[str] = ["intercept"]
    groups: list[str] = [GROUP_INTERCEPT]
    rows: list[np.ndarray] = [np.arange(m)]
    cols: list[np.ndarray] = [np.zeros(m, dtype=np.int64)]
    vals: list[np.ndarray] = [np.ones(m)]
    offset = 1

    for name in spec.covariates:
        col = table.column(name)
        nz = np.flatnonzero(col)
        rows.append(nz)
        cols.append(np.full(len(nz), offset, dtype=np.int64))
        vals.append(col[nz].astype(np.float64))
        names.append(name)
        groups.append(GROUP_COVARIATE)
        offset += 1

    if spec.node_effects and n >= 2:
        node_off = offset
        # i < j <= n-1, so the i endpoint never needs folding.
        rows.append(np.arange(m))
        cols.append(node_off + i_idx)
        vals.append(np.ones(m))
        plain = j_idx < n - 1
        rows.append(np.flatnonzero(plain))
        cols.append(node_off + j_idx[plain])
        vals.append(np.ones(int(plain.sum())))
        folded = np.flatnonzero(~plain)
        if len(folded) and n > 1:
            rows.append(np.repeat(folded, n - 1))
            cols.append(np.tile(node_off + np.arange(n - 1), len(folded)))
            vals.append(-np.ones(len(folded) * (n - 1)))
        names.extend(f"node:{v}" for v in table.node_ids[:-1])
        groups.extend([GROUP_NODE] * (n - 1))
        offset += n - 1

    if spec.block_main_effects and p >= 2:
        block_off = offset
        for endpoint in (r_i, r_j):
            plain = endpoint < p - 1
            rows.append(np.flatnonzero(plain))
            cols.append(block_off + endpoint[plain])
            vals.append(np.ones(int(plain.sum())))
            folded = np.flatnonzero(~plain)
            if len(folded):
                rows.append(np.repeat(folded, p - 1))
                cols.append(np.tile(block_off + np.arange(p - 1), len(folded)))
                vals.append(-np.ones(len(folded) * (p - 1)))
        names.extend(f"block:{label}" for label in partition.block_labels[:-1])
        groups.extend([GROUP_BLOCK] * (p - 1))
        offset += p - 1

    pairs = [(r, s) for r in range(p) for s in range(r + 1, p)]
    pair_col = -np.ones((p, p), dtype=np.int64)
    for k, (r, s) in enumerate(pairs):
        pair_col[r, s] = pair_col[s, r] = offset + k
    if pairs:
        between = np.flatnonzero(r_i != r_j)
        rows.append(between)
        cols.append(pair_col[r_i[between], r_j[between]])
        vals.append(np.ones(len(between)))
        within = np.flatnonzero(r_i == r_j)
        if len(within):
            # -1 in every column pairing this block with another.
            block_cols = pair_col[r_i[within]]          # (len(within), p)
            keep = block_cols >= 0                      # drops the diagonal slot
            rows.append(np.repeat(within, p - 1))
            cols.append(block_cols[keep])
            vals.append(-np.ones(len(within) * (p - 1)))
        names.extend(
            f"interaction:{partition.block_labels[r]}|{partition.block_labels[s]}"
            for r, s in pairs
        )
        groups.extend([GROUP_INTERACTION] * len(pairs))
        offset += len(pairs)

    q = offset
    matrix = sp.coo_array(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(m, q),
    ).tocsr()
    matrix.sum_duplicates()
    matrix.eliminate_zeros()
    matrix.sort_indices()

    groups_arr = np.array(groups)
    penalized = groups_arr == GROUP_INTERACTION
    if spec.penalizes_covariates:
        penalized |= groups_arr == GROUP_COVARIATE
    nnz_per_col = np.diff(matrix.tocsc().indptr)
    inestimable = nnz_per_col == 0

    return DesignMatrix(
        matrix=matrix,
        column_names=tuple(names),
        groups=tuple(groups),
        penalized_mask=penalized,
        inestimable=inestimable,
        spec=spec,
        node_ids=table.node_ids,
        block_labels=partition.block_labels,
        block_pairs=tuple(pairs),
        dyad_blocks=np.column_stack([r_i, r_j]),
    )


def reconstruct_interactions(coefficients, block_count: int) -> np.ndarray:
    """Expand free block-interaction coefficients to the full symmetric matrix.

    ``coefficients`` holds the p(p-1)/2 upper-triangle values in
    lexicographic pair order; the diagonal is completed from the
    zero-row-sum constraint, so every row of the result sums to zero.
    """
    p = int(block_count)
    coefficients = np.asarray(coefficients, dtype=np.float64)
    expected = p * (p - 1) // 2
    if coefficients.shape != (expected,):
        raise ValueError(
            f"expected {expected} interaction coefficients for {p} blocks, "
            f"got {coefficients.shape}"
        )
    out = np.zeros((p, p))
    if expected:
        iu, ju = np.triu_indices(p, k=1)
        out[iu, ju] = coefficients
        out[ju, iu] = coefficients
    np.fill_diagonal(out, 0.0)
    np.fill_diagonal(out, -out.sum(axis=1))
    return out
