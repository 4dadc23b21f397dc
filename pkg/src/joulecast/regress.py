"""Linear regression stack: OLS, Lasso coordinate descent, metrics, k-fold CV.

OLS is solved through an orthogonal decomposition (SVD via lstsq), which
returns the minimum-norm solution on rank-deficient designs. The Lasso
minimizes (1/2n)*SS_res + lambda*||beta||_1 with an unpenalized intercept
handled by centering, so with centered data every coefficient is zeroed once
lambda >= max_j |X_j^T y| / n.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import MeasurementRecord, SplitSpec, config_key, split
from .errors import (
    ColumnMismatchError,
    NonFiniteError,
    NotConvergedWarning,
    SingularityWarning,
    TooFewRecordsError,
    ValidationError,
)
from .features import (
    FeatureSetKind,
    PolynomialSpec,
    build_design,
    transform_records,
)


@dataclass(frozen=True)
class LinearModel:
    coefficients: tuple[float, ...]
    intercept: float
    kind: str = "ols"  # "ols" | "lasso"
    lam: float = 0.0

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[1] != len(self.coefficients):
            raise ColumnMismatchError(
                f"model has {len(self.coefficients)} coefficients, matrix has {X.shape[1]} columns"
            )
        return X @ np.asarray(self.coefficients) + self.intercept


@dataclass(frozen=True)
class EvalMetrics:
    r2: float
    mse: float
    max_error: float


@dataclass(frozen=True)
class CvReport:
    k: int
    r2_scores: tuple[float, ...]
    mse_scores: tuple[float, ...]

    @property
    def r2_mean(self) -> float:
        return float(np.mean(self.r2_scores))

    @property
    def r2_std(self) -> float:
        return float(np.std(self.r2_scores))

    @property
    def mse_mean(self) -> float:
        return float(np.mean(self.mse_scores))

    @property
    def mse_std(self) -> float:
        return float(np.std(self.mse_scores))


def _check_finite(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise NonFiniteError("regression inputs contain NaN/Inf")
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValidationError(f"incompatible shapes X{X.shape}, y{y.shape}")
    return X, y


def fit_ols(X: np.ndarray, y: np.ndarray) -> LinearModel:
    """Least squares with a centered-out intercept.

    One iterative-refinement step tightens the solution to machine precision,
    so exactly representable problems solve exactly.
    """
    X, y = _check_finite(X, y)
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = X - x_mean
    yc = y - y_mean
    beta, _, rank, _ = np.linalg.lstsq(Xc, yc, rcond=None)
    correction, *_ = np.linalg.lstsq(Xc, yc - Xc @ beta, rcond=None)
    beta = beta + correction
    if rank < X.shape[1]:
        warnings.warn(
            f"design matrix rank {rank} < {X.shape[1]} columns; minimum-norm solution",
            SingularityWarning,
            stacklevel=2,
        )
    intercept = float(y_mean - x_mean @ beta)
    return LinearModel(tuple(float(b) for b in beta), intercept, kind="ols")


def soft_threshold(z: float, threshold: float) -> float:
    if z > threshold:
        return z - threshold
    if z < -threshold:
        return z + threshold
    return 0.0


def fit_lasso(
    X: np.ndarray,
    y: np.ndarray,
    lam: float,
    tol: float = 1e-8,
    max_iter: int = 10_000,
) -> LinearModel:
    """Cyclic coordinate descent with soft-thresholding on centered data."""
    X, y = _check_finite(X, y)
    if lam < 0:
        raise ValidationError(f"lambda={lam} must be non-negative")
    n, p = X.shape
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = X - x_mean
    yc = y - y_mean
    col_norm = (Xc**2).sum(axis=0) / n
    beta = np.zeros(p)
    residual = yc.copy()
    converged = False
    for _ in range(max_iter):
        max_delta = 0.0
        for j in range(p):
            if col_norm[j] == 0.0:
                continue
            old = beta[j]
            rho = float(Xc[:, j] @ residual) / n + col_norm[j] * old
            new = soft_threshold(rho, lam) / col_norm[j]
            if new != old:
                residual += Xc[:, j] * (old - new)
                beta[j] = new
            max_delta = max(max_delta, abs(new - old))
        if max_delta < tol:
            converged = True
            break
    if not converged:
        warnings.warn(
            f"lasso stopped after {max_iter} sweeps without reaching tol={tol}",
            NotConvergedWarning,
            stacklevel=2,
        )
    intercept = float(y_mean - x_mean @ beta)
    return LinearModel(tuple(float(b) for b in beta), intercept, kind="lasso", lam=float(lam))


def lasso_objective(X: np.ndarray, y: np.ndarray, model: LinearModel) -> float:
    residual = y - model.predict(X)
    return float((residual @ residual) / (2 * len(y)) + model.lam * np.abs(model.coefficients).sum())


def evaluate(model: LinearModel, X: np.ndarray, y: np.ndarray) -> EvalMetrics:
    """R^2 (about the evaluation-set mean), MSE, and max absolute error.

    Sums are exactly rounded (fsum), so the metrics are invariant under row
    permutation of the evaluation set.
    """
    X, y = _check_finite(X, y)
    residual = y - model.predict(X)
    ss_res = math.fsum(float(r) * float(r) for r in residual)
    y_mean = math.fsum(map(float, y)) / len(y)
    ss_tot = math.fsum((float(v) - y_mean) ** 2 for v in y)
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res == 0.0 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return EvalMetrics(r2=r2, mse=ss_res / len(y), max_error=float(np.abs(residual).max()))


@dataclass(frozen=True)
class ModelSpec:
    """One regression pipeline: feature set, expansion, scaling, and model family."""

    feature_set: FeatureSetKind
    poly: PolynomialSpec | None = None
    feature_scaler: str = "none"
    model: str = "ols"  # "ols" | "lasso"
    lam: float = 0.0
    tol: float = 1e-8
    max_iter: int = 10_000

    def fit(self, X: np.ndarray, y: np.ndarray) -> LinearModel:
        if self.model == "ols":
            return fit_ols(X, y)
        if self.model == "lasso":
            return fit_lasso(X, y, self.lam, tol=self.tol, max_iter=self.max_iter)
        raise ValidationError(f"unknown model family {self.model!r}")


def group_kfold_indices(keys: Sequence[tuple], k: int, seed: int) -> list[list[int]]:
    """Deterministic k folds of record indices, keeping equal keys together."""
    groups: dict[tuple, list[int]] = {}
    for i, key in enumerate(keys):
        groups.setdefault(key, []).append(i)
    unique = sorted(groups, key=lambda key: tuple(-1 if v is None else v for v in key[1:]) + (key[0],))
    if len(unique) < k:
        raise TooFewRecordsError(f"{len(unique)} configuration groups cannot fill {k} folds")
    gen = np.random.default_rng(seed)
    order = [unique[i] for i in gen.permutation(len(unique))]
    folds: list[list[int]] = [[] for _ in range(k)]
    for pos, key in enumerate(order):
        folds[pos % k].extend(groups[key])
    return folds


def cross_validate(
    records: list[MeasurementRecord],
    spec: ModelSpec,
    k: int = 10,
    seed: int = 0,
) -> CvReport:
    """Configuration-grouped k-fold CV; scalers are refit on each fold's training part.

    MSE is reported as a positive quantity (some frameworks negate it for
    score-maximization APIs).
    """
    if k < 2:
        raise ValidationError(f"k={k} must be at least 2")
    folds = group_kfold_indices([config_key(r.config) for r in records], k, seed)
    r2s, mses = [], []
    for held_out in folds:
        held_set = set(held_out)
        train = [r for i, r in enumerate(records) if i not in held_set]
        test = [records[i] for i in held_out]
        design, feat_params, target_params = build_design(
            train, spec.feature_set, spec.poly, spec.feature_scaler
        )
        model = spec.fit(design.X, design.y)
        test_design = transform_records(test, spec.feature_set, spec.poly, feat_params, target_params)
        metrics = evaluate(model, test_design.X, test_design.y)
        r2s.append(metrics.r2)
        mses.append(metrics.mse)
    return CvReport(k=k, r2_scores=tuple(r2s), mse_scores=tuple(mses))


def grid_search_lambda(
    records: list[MeasurementRecord],
    spec: ModelSpec,
    grid: Sequence[float],
    split_spec: SplitSpec | None = None,
) -> float:
    """Pick the penalty maximizing validation R^2; ties go to the larger (sparser) lambda."""
    if not grid:
        raise ValidationError("lambda grid is empty")
    if len(grid) == 1:
        return float(grid[0])
    split_spec = split_spec or SplitSpec()
    train, val, _ = split(records, split_spec)
    design, feat_params, target_params = build_design(
        train, spec.feature_set, spec.poly, spec.feature_scaler
    )
    val_design = transform_records(val, spec.feature_set, spec.poly, feat_params, target_params)
    best = None
    for lam in sorted(float(g) for g in grid):
        model = fit_lasso(design.X, design.y, lam, tol=spec.tol, max_iter=spec.max_iter)
        r2 = evaluate(model, val_design.X, val_design.y).r2
        if best is None or r2 >= best[0]:
            best = (r2, lam)
    return best[1]
