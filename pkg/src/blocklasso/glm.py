"""Maximum-likelihood fitting of the blockmodel GLMs.

Both families are fit by iteratively reweighted least squares with a
step-halving line search on the exact log-likelihood. The weighted
least-squares subproblems are solved by a direct (Cholesky) factorization
of the normal equations, so a fit is deterministic for a fixed input.
Columns flagged inestimable by the encoder are held at zero.

Quasi-separation is a realistic input for the Bernoulli family with node
effects (a node adjacent to everything, or to nothing, drives its effect
to infinity). When a coefficient passes 15 in magnitude while the
likelihood is still climbing, the fit restarts with a tiny ridge
(1e-8 on the squared coefficient norm), a warning is emitted, and the
result is flagged not-converged with cause ``"separation"``.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.special import expit, gammaln, xlogy

from .design import FAMILIES, DesignMatrix

__all__ = [
    "ConvergenceError",
    "FitResult",
    "fit_mle",
    "log_likelihood",
    "read_fit_json",
]

MAX_ITERATIONS = 100
LL_TOL = 1e-10
SCORE_TOL = 1e-6
SEPARATION_BOUND = 15.0
SEPARATION_RIDGE = 1e-8
WEIGHT_FLOOR = 1e-10


class ConvergenceError(RuntimeError):
    """A fit did not converge where a converged fit is required."""


def _check_family(family: str) -> str:
    if family not in FAMILIES:
        raise ValueError(f"family must be one of {FAMILIES}, got {family!r}")
    return family


def _mean_value(family: str, eta: np.ndarray) -> np.ndarray:
    if family == "bernoulli_logit":
        return expit(eta)
    with np.errstate(over="ignore"):
        return np.exp(eta)


def _working_weights(family: str, mu: np.ndarray) -> np.ndarray:
    if family == "bernoulli_logit":
        return mu * (1.0 - mu)
    return mu


def _log_likelihood_eta(eta: np.ndarray, y: np.ndarray, family: str) -> float:
    if family == "bernoulli_logit":
        return float(np.sum(y * eta - np.logaddexp(0.0, eta)))
    with np.errstate(over="ignore"):
        return float(np.sum(y * eta - np.exp(eta) - gammaln(y + 1.0)))


def _deviance(y: np.ndarray, mu: np.ndarray, family: str) -> float:
    if family == "bernoulli_logit":
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = xlogy(y, mu) + xlogy(1.0 - y, 1.0 - mu)
        return float(-2.0 * np.sum(terms))
    return float(2.0 * np.sum(xlogy(y, y / mu) - (y - mu)))


def _validate_response(response, family: str, m: int) -> np.ndarray:
    y = np.asarray(response, dtype=np.float64)
    if y.shape != (m,):
        raise ValueError(f"response must have length {m}, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError("response contains non-finite values")
    if family == "bernoulli_logit":
        if not np.all((y == 0.0) | (y == 1.0)):
            raise ValueError("Bernoulli responses must be 0 or 1")
    else:
        if np.any(y < 0) or np.any(y != np.round(y)):
            raise ValueError("Poisson responses must be nonnegative integers")
    return y


def log_likelihood(coefficients, design: DesignMatrix, response, family: str | None = None) -> float:
    """Exact log-likelihood of a coefficient vector.

    Bernoulli: sum of ``y*eta - log(1 + exp(eta))``; Poisson: sum of
    ``y*eta - exp(eta) - log(y!)``, with ``eta`` the linear predictor.
    """
    family = _check_family(family or design.spec.family)
    y = _validate_response(response, family, design.n_rows)
    eta = design.linear_predictor(coefficients)
    return _log_likelihood_eta(eta, y, family)


@dataclass
class _IrlsResult:
    beta: np.ndarray
    log_likelihood: float
    iterations: int
    converged: bool
    separation: bool
    score_max: float
    score_bound: float
    cause: str | None


def _solve_normal_equations(A: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    jitter = 0.0
    for _ in range(8):
        try:
            system = A if jitter == 0.0 else A + jitter * np.eye(A.shape[0])
            with warnings.catch_warnings():
                # a near-singular system is handled by escalating jitter
                warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
                return scipy.linalg.solve(system, rhs, assume_a="pos")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning):
            jitter = max(jitter * 100.0, 1e-10 * max(1.0, float(np.abs(A).max())))
    return np.linalg.lstsq(A, rhs, rcond=None)[0]


def _initial_beta(family: str, y: np.ndarray, qa: int, intercept_pos: int | None) -> np.ndarray:
    beta = np.zeros(qa)
    if intercept_pos is None:
        return beta
    m = len(y)
    mean = float(np.mean(y)) if m else 0.5
    if family == "bernoulli_logit":
        mean = min(max(mean, 1.0 / (m + 2.0)), 1.0 - 1.0 / (m + 2.0))
        beta[intercept_pos] = float(np.log(mean / (1.0 - mean)))
    else:
        beta[intercept_pos] = float(np.log(max(mean, 1.0 / (m + 2.0))))
    return beta


def _irls(X: sp.csc_array, y: np.ndarray, family: str, *, ridge: float = 0.0,
          intercept_pos: int | None = 0, max_iter: int = MAX_ITERATIONS,
          ll_tol: float = LL_TOL, score_tol: float = SCORE_TOL,
          detect_separation: bool = True) -> _IrlsResult:
    """IRLS with step halving on the columns of ``X`` (all treated free)."""
    m, qa = X.shape
    Xt = X.T.tocsr()
    score_bound = score_tol * (1.0 + float(np.abs(Xt @ y).max(initial=0.0)))
    beta = _initial_beta(family, y, qa, intercept_pos)
    eta = X @ beta
    objective = _log_likelihood_eta(eta, y, family) - ridge * float(beta @ beta)
    separation = False
    cause: str | None = "max_iterations"
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        mu = _mean_value(family, eta)
        w = np.clip(_working_weights(family, mu), WEIGHT_FLOOR, None)
        z = eta + (y - mu) / w
        A = (Xt @ X.multiply(w[:, None])).toarray()
        if ridge:
            A[np.diag_indices_from(A)] += 2.0 * ridge
        rhs = Xt @ (w * z)
        proposal = _solve_normal_equations(A, rhs)

        accepted = None
        candidate = proposal
        for _ in range(31):
            eta_try = X @ candidate
            obj_try = _log_likelihood_eta(eta_try, y, family) - ridge * float(candidate @ candidate)
            if obj_try >= objective - 1e-13 * (1.0 + abs(objective)):
                accepted = (candidate, eta_try, obj_try)
                break
            candidate = 0.5 * (beta + candidate)
        if accepted is None:
            cause = "no_progress"
            break
        delta = accepted[2] - objective
        beta, eta, objective = accepted

        if (detect_separation and family == "bernoulli_logit" and ridge == 0.0
                and float(np.abs(beta).max(initial=0.0)) > SEPARATION_BOUND
                and delta > 1e-8 * (1.0 + abs(objective))):
            separation = True
            cause = "separation"
            break

        mu = _mean_value(family, eta)
        score = Xt @ (y - mu) - 2.0 * ridge * beta
        score_max = float(np.abs(score).max(initial=0.0))
        if abs(delta) <= ll_tol * (1.0 + abs(objective)) and score_max <= score_bound:
            converged = True
            cause = None
            break

    mu = _mean_value(family, eta)
    raw_score = float(np.abs(Xt @ (y - mu)).max(initial=0.0))
    return _IrlsResult(
        beta=beta,
        log_likelihood=_log_likelihood_eta(eta, y, family),
        iterations=iterations,
        converged=converged,
        separation=separation,
        score_max=raw_score,
        score_bound=score_bound,
        cause=cause,
    )


@dataclass
class FitResult:
    """A fitted model: named coefficients plus derived quantities.

    ``block_interactions`` is the full symmetric block-interaction matrix
    with the constrained diagonal filled in (every row sums to zero).
    ``fitted_values`` holds the per-dyad mean and is dropped by JSON
    serialization (it is recomputable from the coefficients).
    """

    family: str
    column_names: tuple[str, ...]
    coefficients: np.ndarray
    log_likelihood: float
    deviance: float
    converged: bool
    iterations: int
    fitted_values: np.ndarray | None
    block_interactions: np.ndarray
    block_labels: tuple[str, ...]
    node_ids: tuple[str, ...]
    groups: tuple[str, ...]
    diagnostics: dict = field(default_factory=dict)

    @property
    def block_count(self) -> int:
        return len(self.block_labels)

    def coefficient(self, name: str) -> float:
        try:
            return float(self.coefficients[self.column_names.index(name)])
        except ValueError:
            raise KeyError(f"no coefficient named {name!r}") from None

    def named_coefficients(self) -> dict[str, float]:
        return {name: float(v) for name, v in zip(self.column_names, self.coefficients)}

    def node_effect_values(self) -> dict[str, float]:
        """Full node-effect vector keyed by node id (sums to zero)."""
        idx = [k for k, g in enumerate(self.groups) if g == "node_effect"]
        if not idx:
            return {}
        free = self.coefficients[idx]
        values = np.concatenate([free, [-free.sum()]])
        return {node: float(v) for node, v in zip(self.node_ids, values)}

    def block_effect_values(self) -> dict[str, float]:
        idx = [k for k, g in enumerate(self.groups) if g == "block_effect"]
        if not idx:
            return {}
        free = self.coefficients[idx]
        values = np.concatenate([free, [-free.sum()]])
        return {label: float(v) for label, v in zip(self.block_labels, values)}

    def to_json_dict(self) -> dict:
        return {
            "family": self.family,
            "column_names": list(self.column_names),
            "coefficients": self.named_coefficients(),
            "log_likelihood": self.log_likelihood,
            "deviance": self.deviance,
            "converged": self.converged,
            "iterations": self.iterations,
            "block_labels": list(self.block_labels),
            "node_ids": list(self.node_ids),
            "groups": list(self.groups),
            "block_interactions": [[float(v) for v in row] for row in self.block_interactions],
            "node_effect_values": self.node_effect_values(),
            "block_effect_values": self.block_effect_values(),
            "diagnostics": _json_safe(self.diagnostics),
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")

    def write_coefficients_csv(self, path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["name", "value"])
            for name, value in zip(self.column_names, self.coefficients):
                writer.writerow([name, repr(float(value))])

    @classmethod
    def from_json_dict(cls, data: dict) -> "FitResult":
        names = tuple(data.get("column_names") or data["coefficients"])
        return cls(
            family=data["family"],
            column_names=names,
            coefficients=np.array([data["coefficients"][k] for k in names]),
            log_likelihood=float(data["log_likelihood"]),
            deviance=float(data["deviance"]),
            converged=bool(data["converged"]),
            iterations=int(data["iterations"]),
            fitted_values=None,
            block_interactions=np.array(data["block_interactions"], dtype=np.float64),
            block_labels=tuple(data["block_labels"]),
            node_ids=tuple(data["node_ids"]),
            groups=tuple(data["groups"]),
            diagnostics=dict(data.get("diagnostics", {})),
        )


def _json_safe(value):
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_json_safe(v) for v in value.tolist()]
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, float) and np.isinf(value):
        return "inf"
    return value


def read_fit_json(path) -> FitResult:
    return FitResult.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def assemble_fit(design: DesignMatrix, beta: np.ndarray, response, family: str, *,
                 converged: bool, iterations: int, diagnostics: dict) -> FitResult:
    """Build a :class:`FitResult` from a full-length coefficient vector."""
    y = np.asarray(response, dtype=np.float64)
    eta = design.linear_predictor(beta)
    mu = _mean_value(family, eta)
    diagnostics = dict(diagnostics)
    diagnostics.setdefault(
        "fixed_zero",
        [design.column_names[k] for k in np.flatnonzero(design.inestimable)],
    )
    return FitResult(
        family=family,
        column_names=design.column_names,
        coefficients=np.asarray(beta, dtype=np.float64),
        log_likelihood=_log_likelihood_eta(eta, y, family),
        deviance=_deviance(y, mu, family),
        converged=converged,
        iterations=iterations,
        fitted_values=mu,
        block_interactions=design.interaction_matrix(beta),
        block_labels=design.block_labels,
        node_ids=design.node_ids,
        groups=design.groups,
        diagnostics=diagnostics,
    )


def fit_mle(design: DesignMatrix, response, family: str | None = None, *,
            max_iter: int = MAX_ITERATIONS, exclude: np.ndarray | None = None) -> FitResult:
    """Maximum-likelihood fit by IRLS with step halving.

    A converged result satisfies the score condition
    ``max|X'(y - fitted)| <= 1e-6 * (1 + max|X'y|)``. Non-convergence is
    reported through ``converged``/``diagnostics``, not an exception.
    ``exclude`` optionally forces extra columns to zero (used internally
    for restricted fits).
    """
    family = _check_family(family or design.spec.family)
    y = _validate_response(response, family, design.n_rows)
    active = ~design.inestimable
    if exclude is not None:
        active &= ~np.asarray(exclude, dtype=bool)
    active_idx = np.flatnonzero(active)
    X_active = design.columns_submatrix(active)
    names = np.array(design.column_names)
    try:
        intercept_pos = int(np.flatnonzero(names[active_idx] == "intercept")[0])
    except IndexError:
        intercept_pos = None

    result = _irls(X_active, y, family, intercept_pos=intercept_pos, max_iter=max_iter)
    ridge_used = 0.0
    if result.separation:
        warnings.warn(
            "quasi-separation detected (a coefficient passed "
            f"{SEPARATION_BOUND:g} with the likelihood still climbing); "
            f"refitting with ridge {SEPARATION_RIDGE:g} on the squared norm",
            RuntimeWarning,
            stacklevel=2,
        )
        stabilized = _irls(X_active, y, family, ridge=SEPARATION_RIDGE,
                           intercept_pos=intercept_pos, max_iter=max_iter,
                           detect_separation=False)
        ridge_used = SEPARATION_RIDGE
        result = _IrlsResult(
            beta=stabilized.beta,
            log_likelihood=stabilized.log_likelihood,
            iterations=result.iterations + stabilized.iterations,
            converged=False,
            separation=True,
            score_max=stabilized.score_max,
            score_bound=stabilized.score_bound,
            cause="separation",
        )

    beta = np.zeros(design.n_columns)
    beta[active_idx] = result.beta
    diagnostics = {
        "score_max": result.score_max,
        "score_bound": result.score_bound,
        "ridge": ridge_used,
    }
    if result.cause:
        diagnostics["cause"] = result.cause
    return assemble_fit(design, beta, y, family, converged=result.converged,
                        iterations=result.iterations, diagnostics=diagnostics)
