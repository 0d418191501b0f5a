"""Command-line front door: fit, simulate, compare and validate.

A run is driven by a single JSON config document; command-line flags
override individual config fields (flags > config > defaults). All
artifacts are plain files in the output directory, written with sorted
keys and shortest-round-trip float formatting, so repeated runs with the
same config and inputs produce byte-identical coefficient CSVs and
reduced-graph JSON.

Exit codes: 0 success, 2 usage or I/O error, 3 data or validation
error, 4 non-convergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .covariates import CovariateSpec, build_dyad_table, standardize
from .design import ModelSpec, encode
from .glm import ConvergenceError, FitResult, fit_mle, read_fit_json
from .graphs import (AttributeTable, load_attributes, load_edge_list,
                     partition_from_attributes, validate)
from .penalty import adaptive_weights, lambda_path, select
from .reduced import export_reduced_graph, reduce_positive, reduce_threshold

EXIT_OK = 0
EXIT_IO = 2
EXIT_DATA = 3
EXIT_CONVERGENCE = 4

MODELS = ("degree_corrected", "covariate_adjusted", "custom")


# --------------------------------------------------------------------------
# config handling


def _deep_update(base: dict, extra: dict) -> dict:
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_update(base[key], value)
        else:
            base[key] = value
    return base


def _load_config(path) -> dict:
    if path is None:
        return {}
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return data


_FIT_DEFAULTS = {
    "edges": None,
    "mode": "binary",
    "has_header": False,
    "attributes": None,
    "nodes": None,
    "partition": {"keys": [], "overrides": {}},
    "model": "degree_corrected",
    "family": None,
    "node_effects": False,
    "block_main_effects": False,
    "covariates": [],
    "penalize_covariates": None,
    "standardize": [],
    "penalty": {
        "enabled": True,
        "gamma_w": 1.0,
        "grid_size": 100,
        "grid_ratio": 1e-4,
        "selection": "bic",
        "lambda": "auto",
    },
    "threshold": None,
    "formats": ["json", "dot"],
    "styling": {},
    "out": "blocklasso_out",
}


def _resolve_fit_config(args) -> dict:
    cfg = json.loads(json.dumps(_FIT_DEFAULTS))
    _deep_update(cfg, _load_config(args.config))
    for key in ("edges", "mode", "has_header", "attributes", "nodes", "model", "family", "out"):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if getattr(args, "partition_key", None):
        cfg["partition"]["keys"] = list(args.partition_key)
    if getattr(args, "override", None):
        overrides = dict(cfg["partition"].get("overrides") or {})
        for item in args.override:
            node, _, label = item.partition("=")
            if not label:
                raise ValueError(f"--override takes NODE=LABEL, got {item!r}")
            overrides[node] = label
        cfg["partition"]["overrides"] = overrides
    if getattr(args, "penalized", None) is not None:
        cfg["penalty"]["enabled"] = args.penalized
    if getattr(args, "gamma_w", None) is not None:
        cfg["penalty"]["gamma_w"] = args.gamma_w
    if getattr(args, "grid_size", None) is not None:
        cfg["penalty"]["grid_size"] = args.grid_size
    if getattr(args, "grid_ratio", None) is not None:
        cfg["penalty"]["grid_ratio"] = args.grid_ratio
    if getattr(args, "select", None) is not None:
        cfg["penalty"]["selection"] = {"bic": "bic", "fixed": "fixed_lambda"}[args.select]
    if getattr(args, "lam", None) is not None:
        cfg["penalty"]["lambda"] = args.lam
    if getattr(args, "threshold", None) is not None:
        cfg["threshold"] = args.threshold
    if getattr(args, "format", None):
        cfg["formats"] = list(dict.fromkeys(args.format))
    if cfg["edges"] is None:
        raise ValueError("no edge file given (use --edges or the config)")
    if cfg["model"] not in MODELS:
        raise ValueError(f"model must be one of {MODELS}, got {cfg['model']!r}")
    lam = cfg["penalty"]["lambda"]
    if isinstance(lam, str) and lam != "auto":
        cfg["penalty"]["lambda"] = float(lam)
    return cfg


def _config_hash(cfg: dict) -> str:
    # the output directory does not affect what is computed
    hashed = {k: v for k, v in cfg.items() if k != "out"}
    canonical = json.dumps(hashed, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _sha256_file(path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def _manifest(command: str, cfg: dict, inputs: list, timings: dict, out_dir: Path) -> None:
    manifest = {
        "command": command,
        "config": cfg,
        "config_hash": _config_hash(cfg),
        "inputs": {str(p): _sha256_file(p) for p in inputs if p and Path(p).exists()},
        "versions": {
            "blocklasso": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": sys.version.split()[0],
        },
        "timings": timings,
    }
    _write_json(out_dir / "manifest.json", manifest)


# --------------------------------------------------------------------------
# fit


def _build_model_spec(cfg: dict, covariate_names) -> ModelSpec:
    model = cfg["model"]
    if model == "degree_corrected":
        if covariate_names:
            raise ValueError("the degree_corrected preset takes no covariates; use custom")
        return ModelSpec.degree_corrected()
    if model == "covariate_adjusted":
        return ModelSpec.covariate_adjusted(covariate_names)
    if not cfg["family"]:
        raise ValueError("custom model needs a family")
    return ModelSpec(
        family=cfg["family"],
        node_effects=bool(cfg["node_effects"]),
        block_main_effects=bool(cfg["block_main_effects"]),
        covariates=tuple(covariate_names),
        penalize_covariates=cfg["penalize_covariates"],
    )


def _load_inputs(cfg: dict):
    attrs = load_attributes(cfg["attributes"]) if cfg["attributes"] else None
    extra_nodes = attrs.node_ids if attrs else ()
    graph = load_edge_list(cfg["edges"], mode=cfg["mode"], extra_nodes=extra_nodes,
                           node_file=cfg["nodes"], has_header=bool(cfg["has_header"]))
    attrs_for_partition = attrs if attrs is not None else AttributeTable(graph.node_ids, {})
    partition = partition_from_attributes(
        attrs_for_partition,
        cfg["partition"].get("keys") or [],
        cfg["partition"].get("overrides") or {},
    )
    return graph, attrs, partition


def _reduced_outputs(out_dir: Path, stem: str, rg, formats, styling) -> None:
    wanted = list(dict.fromkeys(["json", *formats]))
    for fmt in wanted:
        suffix = {"json": ".json", "dot": ".dot", "graphml": ".graphml"}[fmt]
        export_reduced_graph(rg, fmt, out_dir / f"{stem}{suffix}", styling=styling or None)


def cmd_fit(args) -> int:
    started = time.perf_counter()
    cfg = _resolve_fit_config(args)
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)

    graph, attrs, partition = _load_inputs(cfg)
    report = validate(graph, partition)
    _write_json(out_dir / "validation.json", report.to_json_dict())
    if not report.passed:
        raise ValueError("input validation failed:\n" + report.to_text())

    specs = [CovariateSpec.from_json_dict(d) for d in cfg["covariates"]]
    table = build_dyad_table(graph, attrs, specs)
    scaling = None
    if cfg["standardize"]:
        table, scaling = standardize(table, cfg["standardize"])
    spec = _build_model_spec(cfg, table.covariate_names)
    design = encode(table, partition, spec)

    t_fit = time.perf_counter()
    mle = fit_mle(design, table.response)
    mle.write_json(out_dir / "mle_fit.json")
    mle.write_coefficients_csv(out_dir / "mle_coefficients.csv")
    rg_mle = reduce_positive(mle.block_interactions, partition.block_labels)
    _reduced_outputs(out_dir, "reduced_mle", rg_mle, cfg["formats"], cfg["styling"])
    if cfg["threshold"] is not None:
        rg_thresh = reduce_threshold(mle, partition, float(cfg["threshold"]))
        _reduced_outputs(out_dir, "reduced_mle_threshold", rg_thresh,
                         cfg["formats"], cfg["styling"])

    summary = {
        "n": graph.node_count,
        "p": partition.block_count,
        "dyads": table.dyad_count,
        "family": spec.family,
        "model": cfg["model"],
        "columns": design.n_columns,
        "parameter_count": design.parameter_count,
        "mle": {
            "log_likelihood": mle.log_likelihood,
            "deviance": mle.deviance,
            "converged": mle.converged,
            "sign_summary": rg_mle.sign_summary.to_json_dict(),
        },
    }

    t_path = time.perf_counter()
    if cfg["penalty"]["enabled"]:
        if not mle.converged:
            raise ConvergenceError(
                "maximum-likelihood fit did not converge "
                f"(cause: {mle.diagnostics.get('cause')}); cannot derive penalty weights"
            )
        weights = adaptive_weights(mle, design.penalized_mask, cfg["penalty"]["gamma_w"])
        path = lambda_path(design, table.response, weights=weights,
                           grid_size=int(cfg["penalty"]["grid_size"]),
                           grid_ratio=float(cfg["penalty"]["grid_ratio"]))
        path.write_csv(out_dir / "path_summary.csv")
        lam_setting = cfg["penalty"]["lambda"]
        if cfg["penalty"]["selection"] == "fixed_lambda" or not isinstance(lam_setting, str):
            if isinstance(lam_setting, str):
                raise ValueError("fixed-lambda selection needs --lambda VALUE")
            selected = select(path, "fixed_lambda", fixed_lambda=float(lam_setting))
        else:
            selected = select(path, "bic")
        selected.write_json(out_dir / "selected_fit.json")
        selected.write_coefficients_csv(out_dir / "selected_coefficients.csv")
        rg_sel = reduce_positive(selected.block_interactions, partition.block_labels)
        _reduced_outputs(out_dir, "reduced_selected", rg_sel, cfg["formats"], cfg["styling"])
        summary["selected"] = {
            "lambda": selected.diagnostics.get("lambda"),
            "log_likelihood": selected.log_likelihood,
            "df": selected.diagnostics.get("df"),
            "active_set_size": selected.diagnostics.get("active_set_size"),
            "converged": selected.converged,
            "sign_summary": rg_sel.sign_summary.to_json_dict(),
        }
        if path.selected_index is not None:
            summary["selected"]["grid_index"] = path.selected_index
    if scaling is not None:
        summary["standardized_columns"] = {
            name: {"mean": scaling.means[name], "sd": scaling.sds[name]}
            for name in scaling.sds
        }

    _write_json(out_dir / "summary.json", summary)
    finished = time.perf_counter()
    _manifest("fit", cfg, [cfg["edges"], cfg["attributes"], cfg["nodes"]],
              {"load_s": t_fit - started, "mle_s": t_path - t_fit,
               "penalized_s": finished - t_path, "total_s": finished - started},
              out_dir)

    print(f"n={graph.node_count} p={partition.block_count} dyads={table.dyad_count} "
          f"columns={design.n_columns}")
    pos, zero, neg = rg_mle.sign_summary.as_tuple()
    print(f"mle: log_likelihood={mle.log_likelihood:.6f} "
          f"signs(+/0/-)={pos}/{zero}/{neg} converged={mle.converged}")
    if "selected" in summary:
        sel = summary["selected"]
        signs = sel["sign_summary"]
        print(f"selected: lambda={sel['lambda']:.6g} df={sel['df']} "
              f"signs(+/0/-)={signs['positive']}/{signs['zero']}/{signs['negative']}")
    print(f"artifacts written to {out_dir}")
    return EXIT_OK


# --------------------------------------------------------------------------
# simulate


_SIM_DEFAULTS = {
    "simulate": {
        "n": 40,
        "p": 4,
        "family": "bernoulli_logit",
        "intercept": 0.0,
        "fraction_zero": 0.5,
        "magnitude": 0.8,
        "interactions": None,
        "node_effects": None,
        "block_effects": None,
        "block_sizes": None,
        "seed": 0,
    },
    "out": "blocklasso_sim",
}


def cmd_simulate(args) -> int:
    from .simulate import GeneratorSpec, sample_graph, sparse_interactions, write_dataset

    started = time.perf_counter()
    cfg = json.loads(json.dumps(_SIM_DEFAULTS))
    _deep_update(cfg, _load_config(args.config))
    sim = cfg["simulate"]
    for key in ("n", "p", "family", "intercept", "fraction_zero", "magnitude", "seed"):
        value = getattr(args, key, None)
        if value is not None:
            sim[key] = value
    if args.out is not None:
        cfg["out"] = args.out

    if sim["interactions"] is not None:
        interactions = np.array(sim["interactions"], dtype=np.float64)
    else:
        interactions = sparse_interactions(int(sim["p"]), float(sim["fraction_zero"]),
                                           float(sim["magnitude"]), int(sim["seed"]))
        sim["interactions"] = [[float(v) for v in row] for row in interactions]
    spec = GeneratorSpec(
        n=int(sim["n"]),
        p=int(sim["p"]),
        family=sim["family"],
        intercept=float(sim["intercept"]),
        interactions=interactions,
        node_effects=None if sim["node_effects"] is None else np.array(sim["node_effects"]),
        block_effects=None if sim["block_effects"] is None else np.array(sim["block_effects"]),
        block_sizes=None if sim["block_sizes"] is None else tuple(sim["block_sizes"]),
        seed=int(sim["seed"]),
    )
    graph, _table, partition = sample_graph(spec)
    out_dir = Path(cfg["out"])
    mode = "binary" if spec.family == "bernoulli_logit" else "weighted"
    paths = write_dataset(out_dir, graph, partition, spec, mode=mode)
    _manifest("simulate", cfg, [], {"total_s": time.perf_counter() - started}, out_dir)
    print(f"simulated n={spec.n} p={spec.p} family={spec.family} seed={spec.seed}")
    for name, path in sorted(paths.items()):
        print(f"  {name}: {path}")
    return EXIT_OK


# --------------------------------------------------------------------------
# compare


def _sign(value: float) -> int:
    value = float(value)
    return int(value > 0) - int(value < 0)


def compare_fits(fit_a: FitResult, fit_b: FitResult) -> dict:
    """Side-by-side comparison of two fits over the same design."""
    if fit_a.column_names != fit_b.column_names:
        raise ValueError("fits are over different designs (column names differ)")
    if fit_a.block_labels != fit_b.block_labels:
        raise ValueError("fits are over different designs (block labels differ)")
    deltas = {
        name: float(b - a)
        for name, a, b in zip(fit_a.column_names, fit_a.coefficients, fit_b.coefficients)
    }
    max_abs_delta = max((abs(v) for v in deltas.values()), default=0.0)
    rg_a = reduce_positive(fit_a.block_interactions, fit_a.block_labels)
    rg_b = reduce_positive(fit_b.block_interactions, fit_b.block_labels)
    p = fit_a.block_count
    zeroed = sum(
        1
        for r in range(p)
        for s in range(r, p)
        if _sign(fit_a.block_interactions[r, s]) != 0 and fit_b.block_interactions[r, s] == 0.0
    )
    edges_a = set(rg_a.edges)
    edges_b = set(rg_b.edges)
    as_labels = lambda pairs: sorted([rg_a.blocks[r], rg_a.blocks[s]] for r, s in pairs)
    return {
        "coefficients": {
            name: {"a": float(fit_a.coefficients[k]), "b": float(fit_b.coefficients[k]),
                   "delta": deltas[name]}
            for k, name in enumerate(fit_a.column_names)
        },
        "max_abs_delta": max_abs_delta,
        "log_likelihood": {"a": fit_a.log_likelihood, "b": fit_b.log_likelihood},
        "sign_summary": {
            "a": rg_a.sign_summary.to_json_dict(),
            "b": rg_b.sign_summary.to_json_dict(),
        },
        "pairs_zeroed": zeroed,
        "edges_only_a": as_labels(edges_a - edges_b),
        "edges_only_b": as_labels(edges_b - edges_a),
    }


def cmd_compare(args) -> int:
    fit_a = read_fit_json(args.fit_a)
    fit_b = read_fit_json(args.fit_b)
    report = compare_fits(fit_a, fit_b)
    width = max((len(name) for name in report["coefficients"]), default=4)
    print(f"{'name'.ljust(width)}  {'a':>14}  {'b':>14}  {'delta':>14}")
    for name, row in report["coefficients"].items():
        print(f"{name.ljust(width)}  {row['a']:>14.6g}  {row['b']:>14.6g}  "
              f"{row['delta']:>14.6g}")
    sa, sb = report["sign_summary"]["a"], report["sign_summary"]["b"]
    print(f"signs(+/0/-): a={sa['positive']}/{sa['zero']}/{sa['negative']} "
          f"b={sb['positive']}/{sb['zero']}/{sb['negative']}")
    print(f"pairs zeroed (nonzero in a, zero in b): {report['pairs_zeroed']}")
    print(f"edges only in a: {len(report['edges_only_a'])}; "
          f"only in b: {len(report['edges_only_b'])}")
    print(f"max |delta|: {report['max_abs_delta']:.3g}")
    if args.out:
        _write_json(args.out, report)
    return EXIT_OK


# --------------------------------------------------------------------------
# validate


def cmd_validate(args) -> int:
    cfg = _resolve_fit_config(args)
    graph, _attrs, partition = _load_inputs(cfg)
    report = validate(graph, partition)
    print(report.to_text())
    if args.out is not None:
        _write_json(args.out, report.to_json_dict())
    return EXIT_OK if report.passed else EXIT_DATA


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blocklasso",
        description="Blockmodel fitting with maximum likelihood and the adaptive "
                    "lasso, and reduced-graph derivation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_input_flags(p):
        p.add_argument("--config", help="JSON config document")
        p.add_argument("--edges", help="edge-list file")
        p.add_argument("--mode", choices=["binary", "weighted"])
        p.add_argument("--has-header", dest="has_header", action="store_true", default=None,
                       help="the edge file starts with a header row")
        p.add_argument("--attributes", help="node attribute table")
        p.add_argument("--nodes", help="companion node-list file")
        p.add_argument("--partition-key", action="append",
                       help="attribute used to form blocks (repeatable)")
        p.add_argument("--override", action="append", metavar="NODE=LABEL",
                       help="assign a node directly to a block (repeatable)")

    fit = sub.add_parser("fit", help="fit a blockmodel and derive reduced graphs")
    add_input_flags(fit)
    fit.add_argument("--model", choices=MODELS)
    fit.add_argument("--family", choices=["bernoulli_logit", "poisson_log"])
    fit.add_argument("--penalized", action=argparse.BooleanOptionalAction, default=None)
    fit.add_argument("--lambda", dest="lam",
                     help="'auto' (path + selection rule) or a numeric penalty")
    fit.add_argument("--gamma-w", type=float, help="adaptive-weight exponent")
    fit.add_argument("--grid-size", type=int)
    fit.add_argument("--grid-ratio", type=float)
    fit.add_argument("--select", choices=["bic", "fixed"])
    fit.add_argument("--threshold", type=float,
                     help="also derive a mean-probability threshold reduced graph")
    fit.add_argument("--format", action="append", choices=["json", "dot", "graphml"])
    fit.add_argument("--out", help="output directory")
    fit.set_defaults(func=cmd_fit)

    sim = sub.add_parser("simulate", help="draw a synthetic network and write its files")
    sim.add_argument("--config", help="JSON config document")
    sim.add_argument("--n", type=int)
    sim.add_argument("--p", type=int)
    sim.add_argument("--family", choices=["bernoulli_logit", "poisson_log"])
    sim.add_argument("--intercept", type=float)
    sim.add_argument("--fraction-zero", dest="fraction_zero", type=float)
    sim.add_argument("--magnitude", type=float)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--out", help="output directory")
    sim.set_defaults(func=cmd_simulate)

    cmp_ = sub.add_parser("compare", help="compare two serialized fits")
    cmp_.add_argument("fit_a")
    cmp_.add_argument("fit_b")
    cmp_.add_argument("--out", help="write the comparison as JSON")
    cmp_.set_defaults(func=cmd_compare)

    val = sub.add_parser("validate", help="check inputs and report diagnostics")
    add_input_flags(val)
    val.add_argument("--out", help="write the report as JSON")
    val.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConvergenceError as exc:
        print(f"error (non-convergence): {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except FileNotFoundError as exc:
        name = exc.filename if exc.filename else exc
        print(f"error (I/O): no such file: {name}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error (I/O): {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error (data): {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
