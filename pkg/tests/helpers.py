"""Shared instance builders for the test suite."""

from __future__ import annotations

import numpy as np

import blocklasso as bl


def graph_from_weights(weights, prefix="v") -> bl.Graph:
    weights = np.asarray(weights)
    n = weights.shape[0]
    width = max(2, len(str(n - 1)))
    return bl.Graph(tuple(f"{prefix}{i:0{width}d}" for i in range(n)), weights)


def one_block_partition(graph: bl.Graph) -> bl.Partition:
    return bl.Partition(("all",), {v: 0 for v in graph.node_ids})


def bernoulli_instance(seed: int, n: int = 12, p: int = 3, *, intercept: float = -0.3,
                       fraction_zero: float = 0.3, magnitude: float = 0.8,
                       node_scale: float = 0.0):
    """Graph + dyad table + partition + degree-corrected design."""
    interactions = bl.sparse_interactions(p, fraction_zero, magnitude, seed=seed) if p > 1 else None
    node_effects = None
    if node_scale > 0:
        rng = np.random.default_rng(seed + 77)
        node_effects = rng.normal(scale=node_scale, size=n)
        node_effects -= node_effects.mean()
    spec = bl.GeneratorSpec(n=n, p=p, family="bernoulli_logit", intercept=intercept,
                            interactions=interactions, node_effects=node_effects, seed=seed)
    graph, table, partition = bl.sample_graph(spec)
    design = bl.encode(table, partition, bl.ModelSpec.degree_corrected())
    return graph, table, partition, design


def poisson_instance(seed: int, n: int = 12, p: int = 3, *, intercept: float = 0.3,
                     n_covariates: int = 0, fraction_zero: float = 0.3,
                     magnitude: float = 0.5):
    interactions = bl.sparse_interactions(p, fraction_zero, magnitude, seed=seed) if p > 1 else None
    rng = np.random.default_rng(seed + 13)
    block_effects = None
    if p > 1:
        block_effects = rng.normal(scale=0.2, size=p)
        block_effects -= block_effects.mean()
    covariates = coefs = None
    if n_covariates:
        m = n * (n - 1) // 2
        covariates = rng.normal(size=(m, n_covariates))
        coefs = rng.normal(scale=0.3, size=n_covariates)
    spec = bl.GeneratorSpec(n=n, p=p, family="poisson_log", intercept=intercept,
                            interactions=interactions, block_effects=block_effects,
                            covariate_values=covariates, covariate_coefs=coefs, seed=seed)
    graph, table, partition = bl.sample_graph(spec)
    design = bl.encode(table, partition, bl.ModelSpec.covariate_adjusted(table.covariate_names))
    return graph, table, partition, design
