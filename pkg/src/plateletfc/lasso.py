"""L1-regularized regression: coordinate descent, CV, and bootstrap bands.

The objective is (1/(2N))*sum((y - b0 - X beta)^2) + lambda*sum(|beta_j|)
with an unpenalized intercept b0. Features are expected standardized with
training statistics; the target is left in demand units (the intercept
absorbs its mean), so weights are comparable across features and
predictions need no back-transform.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .data import FeatureMatrix

MAX_SWEEPS = 10_000
TOL = 1e-7


def soft_threshold(z: float, gamma: float) -> float:
    """sign(z) * max(|z| - gamma, 0)."""
    if z > gamma:
        return z - gamma
    if z < -gamma:
        return z + gamma
    return 0.0


@dataclass
class LassoModel:
    weights: np.ndarray
    intercept: float
    lam: float
    feature_names: tuple[str, ...]
    selected: frozenset[str]
    kkt_violation: float
    n_sweeps: int
    objective_history: np.ndarray = field(repr=False, default=None)


@dataclass(frozen=True)
class CvResult:
    lambda_star: float
    grid: np.ndarray
    cv_errors: np.ndarray


@dataclass(frozen=True)
class BootstrapBand:
    weight_low: np.ndarray
    weight_high: np.ndarray
    pred_low: np.ndarray | None
    pred_point: np.ndarray | None
    pred_high: np.ndarray | None
    n_replicates: int
    level: float


@njit(cache=True)
def _cd_fit(X, r, beta, b0, lam, denom, max_sweeps, tol):
    """Cyclic coordinate descent; mutates beta and r, returns (b0, sweeps, history)."""
    n, p = X.shape
    history = np.empty(max_sweeps)
    sweeps = 0
    for s in range(max_sweeps):
        max_delta = 0.0
        shift = r.mean()
        b0 += shift
        r -= shift
        if abs(shift) > max_delta:
            max_delta = abs(shift)
        for j in range(p):
            if denom[j] <= 0.0:
                continue
            bj = beta[j]
            zj = bj * denom[j] + np.dot(X[:, j], r) / n
            if zj > lam:
                bn = (zj - lam) / denom[j]
            elif zj < -lam:
                bn = (zj + lam) / denom[j]
            else:
                bn = 0.0
            if bn != bj:
                d = bn - bj
                for i in range(n):
                    r[i] -= d * X[i, j]
                beta[j] = bn
                if abs(d) > max_delta:
                    max_delta = abs(d)
        penalty = 0.0
        for j in range(p):
            penalty += abs(beta[j])
        history[s] = 0.5 * np.dot(r, r) / n + lam * penalty
        sweeps = s + 1
        if max_delta < tol:
            break
    return b0, sweeps, history


def _unpack(X, y):
    if isinstance(X, FeatureMatrix):
        if not X.standardized:
            raise ValueError("feature matrix must be standardized before fitting")
        values = X.values
        names = X.feature_names
        if y is None:
            y = X.target
    else:
        values = np.asarray(X, dtype=float)
        if y is None:
            raise ValueError("y is required when X is a plain array")
        names = tuple(f"x{j}" for j in range(values.shape[1]))
    y = np.asarray(y, dtype=float)
    if not (np.all(np.isfinite(values)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite values in inputs")
    if values.shape[0] != y.size:
        raise ValueError("X and y row counts differ")
    # column-major so coordinate sweeps touch contiguous memory
    return np.asfortranarray(values), y, names


def fit_lasso(X, y=None, lam: float = 0.0, warm_start: np.ndarray | None = None) -> LassoModel:
    """Fit by cyclic coordinate descent at one penalty value.

    Converges when no coordinate (intercept included) moves more than
    1e-7 in a sweep, capped at 10,000 sweeps. The fitted model records
    its worst KKT violation for auditability.
    """
    values, y, names = _unpack(X, y)
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    n, p = values.shape
    denom = (values * values).sum(axis=0) / n
    beta = np.zeros(p) if warm_start is None else warm_start.astype(float).copy()
    b0 = float(np.mean(y))
    r = y - b0 - values @ beta
    b0, sweeps, history = _cd_fit(values, r, beta, b0, lam, denom, MAX_SWEEPS, TOL)

    grad = values.T @ r / n
    kkt = 0.0
    for j in range(p):
        if abs(beta[j]) > 1e-12:
            kkt = max(kkt, abs(abs(grad[j]) - lam))
        else:
            kkt = max(kkt, max(0.0, abs(grad[j]) - lam))

    selected = frozenset(names[j] for j in range(p) if abs(beta[j]) > 1e-12)
    return LassoModel(
        weights=beta,
        intercept=float(b0),
        lam=float(lam),
        feature_names=names,
        selected=selected,
        kkt_violation=float(kkt),
        n_sweeps=int(sweeps),
        objective_history=history[:sweeps].copy(),
    )


def lambda_max(X, y=None) -> float:
    """Smallest penalty at which every weight is zero."""
    values, y, _ = _unpack(X, y)
    n = values.shape[0]
    return float(np.max(np.abs(values.T @ (y - y.mean()))) / n)


def lambda_path(X, y=None, n_lambdas: int = 100) -> np.ndarray:
    """Log-spaced descending grid from lambda_max to lambda_max/1000."""
    if n_lambdas < 2:
        raise ValueError("need at least 2 grid points")
    top = lambda_max(X, y)
    return np.geomspace(top, top * 1e-3, n_lambdas)


def _fold_bounds(n: int, k: int) -> list[tuple[int, int]]:
    edges = np.linspace(0, n, k + 1).astype(int)
    return [(int(edges[i]), int(edges[i + 1])) for i in range(k)]


def cv_select_lambda(
    X,
    y=None,
    k: int = 5,
    grid: np.ndarray | None = None,
    seed: int = 0,
    shuffle: bool = False,
) -> CvResult:
    """Pick the penalty by k-fold cross-validation over the grid.

    Folds are contiguous blocks of the time-ordered rows by default
    (daily rows are autocorrelated; shuffled folds would leak adjacent
    days across the split). ``shuffle=True`` opts into seeded random
    folds. Ties in mean validation MSE go to the larger penalty.
    """
    values, y, _ = _unpack(X, y)
    n = values.shape[0]
    if n < k:
        raise ValueError("need at least k rows")
    if grid is None:
        grid = lambda_path(values, y)
    grid = np.asarray(grid, dtype=float)

    order = np.arange(n)
    if shuffle:
        order = np.random.default_rng(seed).permutation(n)
    bounds = _fold_bounds(n, k)
    if any(hi - lo < 2 for lo, hi in bounds):
        raise ValueError("a fold has fewer than 2 rows")

    errors = np.zeros(grid.size)
    for lo, hi in bounds:
        val_idx = order[lo:hi]
        train_idx = np.concatenate([order[:lo], order[hi:]])
        Xt, yt = values[train_idx], y[train_idx]
        Xv, yv = values[val_idx], y[val_idx]
        warm = None
        # descending penalties with warm starts
        for gi in np.argsort(-grid):
            model = fit_lasso(Xt, yt, lam=grid[gi], warm_start=warm)
            warm = model.weights
            pred = model.intercept + Xv @ model.weights
            errors[gi] += float(np.mean((yv - pred) ** 2))
    errors /= k

    best = 0
    for gi in range(1, grid.size):
        if errors[gi] < errors[best] or (
            errors[gi] == errors[best] and grid[gi] > grid[best]
        ):
            best = gi
    return CvResult(lambda_star=float(grid[best]), grid=grid, cv_errors=errors)


def bootstrap(
    X,
    y=None,
    lam: float = 0.0,
    B: int = 1000,
    level: float = 0.95,
    seed: int = 0,
    X_test=None,
) -> BootstrapBand:
    """Percentile bands from B resample-with-replacement refits.

    Replicate b draws its rows with an rng seeded by (seed, b), so results
    do not depend on execution order and replicates can run concurrently.
    When X_test is given, per-date prediction bands are returned with the
    median replicate prediction as the point.
    """
    values, y, _ = _unpack(X, y)
    if B < 1:
        raise ValueError("need at least one replicate")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    n, p = values.shape
    base = fit_lasso(values, y, lam=lam)

    test_values = None
    if X_test is not None:
        test_values = X_test.values if isinstance(X_test, FeatureMatrix) else np.asarray(X_test, dtype=float)

    weights = np.empty((B, p))
    preds = np.empty((B, test_values.shape[0])) if test_values is not None else None
    for b in range(B):
        rng = np.random.default_rng([seed, b])
        idx = rng.integers(0, n, size=n)
        model = fit_lasso(values[idx], y[idx], lam=lam, warm_start=base.weights)
        weights[b] = model.weights
        if preds is not None:
            preds[b] = model.intercept + test_values @ model.weights

    alpha = 100.0 * (1.0 - level) / 2.0
    w_low, w_high = np.percentile(weights, [alpha, 100.0 - alpha], axis=0)
    if preds is not None:
        p_low, p_mid, p_high = np.percentile(preds, [alpha, 50.0, 100.0 - alpha], axis=0)
    else:
        p_low = p_mid = p_high = None
    return BootstrapBand(
        weight_low=w_low,
        weight_high=w_high,
        pred_low=p_low,
        pred_point=p_mid,
        pred_high=p_high,
        n_replicates=B,
        level=level,
    )


def predict_lasso(model: LassoModel, X_test) -> np.ndarray:
    """intercept + X beta, in demand units."""
    if isinstance(X_test, FeatureMatrix):
        if X_test.feature_names != model.feature_names:
            raise ValueError("feature names do not match the fitted model")
        values = X_test.values
    else:
        values = np.asarray(X_test, dtype=float)
        if values.shape[1] != model.weights.size:
            raise ValueError("feature count does not match the fitted model")
    return model.intercept + values @ model.weights
