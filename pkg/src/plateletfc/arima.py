"""Univariate ARIMA: estimation, order search, forecasting, diagnostics.

The model on the d-times differenced series w is

    w_t = mu + sum_i phi_i w_{t-i} + eps_t - sum_j theta_j eps_{t-j}

with the moving-average terms entering with a minus sign. Estimation
minimizes the conditional sum of squared innovations (CSS): innovations
before max(p, q) are pinned at zero, so results can differ slightly from
exact-likelihood implementations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from datetime import date

import numpy as np
from numba import njit
from scipy.optimize import minimize
from scipy.stats import jarque_bera

from .stats import acf as acf_fn
from .stats import adf_test
from .stats import pacf as pacf_fn


class ArimaFitError(RuntimeError):
    """Estimation failure; carries the best parameters seen so far."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class ArimaOrder:
    p: int
    d: int
    q: int

    def __post_init__(self):
        if min(self.p, self.d, self.q) < 0:
            raise ValueError("order terms must be nonnegative")
        if self.p > 5 or self.q > 5 or self.d > 2:
            raise ValueError("order outside search bounds (p,q <= 5, d <= 2)")


@dataclass
class ArimaModel:
    order: ArimaOrder
    mu: float
    phi: np.ndarray
    theta: np.ndarray
    sigma2: float
    aic: float
    residuals: np.ndarray | None = None
    train_range: tuple[date, date] | None = None


def difference(series, d: int) -> np.ndarray:
    y = np.asarray(series, dtype=float)
    if d < 0:
        raise ValueError("d must be nonnegative")
    if y.size < d + 1:
        raise ValueError("series too short to difference")
    return np.diff(y, n=d) if d > 0 else y.copy()


def integrate(diffed, d: int, anchors) -> np.ndarray:
    """Invert d-fold differencing; anchors are the first d original values."""
    w = np.asarray(diffed, dtype=float)
    a = np.asarray(anchors, dtype=float)
    if d == 0:
        return w.copy()
    if a.size != d:
        raise ValueError(f"need exactly {d} anchor values")
    if d == 1:
        return np.concatenate([a, a[-1] + np.cumsum(w)])
    inner = integrate(w, d - 1, np.diff(a))
    return integrate(inner, 1, a[:1])


@njit(cache=True)
def _innovations(w, mu, phi, theta, t0):
    """One-step innovations with eps pinned to zero before t0."""
    n = w.size
    p = phi.size
    q = theta.size
    eps = np.zeros(n)
    for t in range(t0, n):
        pred = mu
        for i in range(p):
            pred += phi[i] * w[t - 1 - i]
        for j in range(q):
            pred -= theta[j] * eps[t - 1 - j]
        eps[t] = w[t] - pred
    return eps


def _css_sse(w: np.ndarray, x: np.ndarray, p: int, q: int, t0: int) -> float:
    eps = _innovations(w, x[0], x[1 : 1 + p], x[1 + p :], t0)
    tail = eps[t0:]
    # explosive trial parameters overflow to inf; that is the barrier
    with np.errstate(over="ignore", invalid="ignore"):
        s = float(tail @ tail)
    return s if np.isfinite(s) else 1e300


def _poly_roots_outside(coeffs: np.ndarray, margin: float = 1e-4) -> bool:
    """True when 1 - c1 z - ... - ck z^k has all roots outside the unit circle."""
    if coeffs.size == 0:
        return True
    poly = np.concatenate([-coeffs[::-1], [1.0]])
    roots = np.roots(poly)
    if roots.size == 0:
        return True
    return bool(np.min(np.abs(roots)) > 1.0 + margin)


def _shrink_into_region(coeffs: np.ndarray) -> np.ndarray:
    out = coeffs.copy()
    for _ in range(100):
        if _poly_roots_outside(out):
            return out
        out *= 0.95
    return np.zeros_like(coeffs)


def _hannan_rissanen_init(w: np.ndarray, p: int, q: int) -> np.ndarray:
    n = w.size
    if q == 0 and p == 0:
        return np.array([w.mean()])
    if q == 0:
        X = np.column_stack([np.ones(n - p)] + [w[p - i - 1 : n - i - 1] for i in range(p)])
        beta, _, _, _ = np.linalg.lstsq(X, w[p:], rcond=None)
        return np.concatenate([beta[:1], _shrink_into_region(beta[1:])])
    # long autoregression for innovation estimates
    m = min(max(20, 2 * (p + q)), n // 4)
    Xm = np.column_stack([np.ones(n - m)] + [w[m - i - 1 : n - i - 1] for i in range(m)])
    beta, _, _, _ = np.linalg.lstsq(Xm, w[m:], rcond=None)
    eps_hat = np.zeros(n)
    eps_hat[m:] = w[m:] - Xm @ beta
    k = max(p, q)
    start = m + k
    cols = [np.ones(n - start)]
    for i in range(1, p + 1):
        cols.append(w[start - i : n - i])
    for j in range(1, q + 1):
        cols.append(eps_hat[start - j : n - j])
    X = np.column_stack(cols)
    beta, _, _, _ = np.linalg.lstsq(X, w[start:], rcond=None)
    mu0 = beta[0]
    phi0 = _shrink_into_region(beta[1 : 1 + p])
    theta0 = _shrink_into_region(-beta[1 + p :])
    return np.concatenate([[mu0], phi0, theta0])


def aic(sse: float, n_eff: int, k: int) -> float:
    """Gaussian AIC from a sum of squares: n*ln(sse/n) + 2k."""
    if sse <= 0.0:
        raise ValueError("sse must be positive")
    if n_eff <= k:
        raise ValueError("n_eff must exceed parameter count")
    return float(n_eff * np.log(sse / n_eff) + 2 * k)


def fit_arma(series, p: int, q: int) -> ArimaModel:
    """Fit a stationary ARMA(p, q) with constant by CSS.

    Pure AR cases are solved exactly by least squares; mixed models are
    refined by L-BFGS from a Hannan-Rissanen start. Parameter count for
    the AIC is p + q + 2 (constant and innovation variance).
    """
    w = np.asarray(series, dtype=float)
    if not np.all(np.isfinite(w)):
        raise ValueError("series contains non-finite values")
    n = w.size
    if n < 10 * (p + q + 1):
        raise ValueError(f"need at least {10 * (p + q + 1)} observations for ARMA({p},{q})")
    t0 = max(p, q)

    if q == 0:
        if p == 0:
            x = np.array([w.mean()])
        else:
            X = np.column_stack(
                [np.ones(n - p)] + [w[p - i - 1 : n - i - 1] for i in range(p)]
            )
            x, _, _, _ = np.linalg.lstsq(X, w[p:], rcond=None)
        sse = _css_sse(w, x, p, q, t0)
    else:
        x0 = _hannan_rissanen_init(w, p, q)
        res = minimize(
            lambda x: _css_sse(w, x, p, q, t0),
            x0,
            method="L-BFGS-B",
            options={"maxiter": 500},
        )
        if not np.isfinite(res.fun):
            raise ArimaFitError(
                f"CSS objective diverged for ARMA({p},{q})",
                {"x": res.x.tolist()},
            )
        if not res.success:
            grad_ok = np.max(np.abs(res.jac)) < 1e-3 * (1.0 + abs(res.fun))
            if not grad_ok:
                raise ArimaFitError(
                    f"optimizer did not converge for ARMA({p},{q}): {res.message}",
                    {"x": res.x.tolist(), "sse": float(res.fun)},
                )
        x, sse = res.x, float(res.fun)

    mu = float(x[0])
    phi = np.asarray(x[1 : 1 + p], dtype=float)
    theta = np.asarray(x[1 + p :], dtype=float)
    if not _poly_roots_outside(phi):
        raise ArimaFitError(
            f"AR estimate at or inside the unit circle for ARMA({p},{q})",
            {"phi": phi.tolist()},
        )
    if not _poly_roots_outside(theta):
        raise ArimaFitError(
            f"MA estimate at or inside the unit circle for ARMA({p},{q})",
            {"theta": theta.tolist()},
        )

    eps = _innovations(w, mu, phi, theta, t0)
    residuals = eps[t0:]
    n_eff = n - t0
    sse = float(residuals @ residuals)
    k = p + q + 2
    return ArimaModel(
        order=ArimaOrder(p, 0, q),
        mu=mu,
        phi=phi,
        theta=theta,
        sigma2=sse / n_eff,
        aic=aic(sse, n_eff, k),
        residuals=residuals,
    )


def choose_d(series, max_d: int = 2, adf_max_lag: int | None = None) -> int:
    """Smallest d in 0..max_d whose differenced series rejects a unit root.

    Falls back to max_d when even that many differences fail to reject.
    """
    for d in range(max_d + 1):
        w = difference(series, d)
        if adf_test(w, max_lag=adf_max_lag).reject_at_5pct:
            return d
    return max_d


_STEPWISE_STARTS = ((0, 0), (1, 0), (0, 1), (2, 2))


def auto_arima(
    series,
    max_p: int = 5,
    max_q: int = 5,
    max_d: int = 2,
    adf_max_lag: int | None = None,
) -> ArimaModel:
    """Stepwise AIC order search over (p, q) after unit-root differencing.

    Starts from {(0,0), (1,0), (0,1), (2,2)}, then hill-climbs: probe the
    incumbent's axis neighbors (p or q changed by one) in parsimony order
    (smaller p+q first, then smaller p) and move to the first with lower
    AIC, stopping at a local minimum. The probe order is fixed, so the
    result does not depend on the order candidate fits are computed in.
    Candidates that fail to fit are skipped.
    """
    y = np.asarray(series, dtype=float)
    if y.size < 60:
        raise ValueError("need at least 60 observations")
    d = choose_d(y, max_d=max_d, adf_max_lag=adf_max_lag)
    w = difference(y, d)

    cache: dict[tuple[int, int], ArimaModel | None] = {}

    def try_fit(p: int, q: int) -> ArimaModel | None:
        if (p, q) not in cache:
            try:
                cache[(p, q)] = fit_arma(w, p, q)
            except (ArimaFitError, ValueError):
                cache[(p, q)] = None
        return cache[(p, q)]

    def rank(order: tuple[int, int]):
        model = cache[order]
        return (model.aic, order[0] + order[1], order[0])

    candidates = [
        (p, q) for p, q in _STEPWISE_STARTS if p <= max_p and q <= max_q
    ]
    fitted = [pq for pq in candidates if try_fit(*pq) is not None]
    if not fitted:
        raise ArimaFitError("no starting order could be fitted")
    best = min(fitted, key=rank)

    while True:
        neighbors = []
        for dp, dq in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            p, q = best[0] + dp, best[1] + dq
            if 0 <= p <= max_p and 0 <= q <= max_q:
                neighbors.append((p, q))
        neighbors.sort(key=lambda pq: (pq[0] + pq[1], pq[0], pq[1]))
        moved = False
        for pq in neighbors:
            if try_fit(*pq) is not None and rank(pq) < rank(best):
                best = pq
                moved = True
                break
        if not moved:
            break

    model = cache[best]
    return replace(model, order=ArimaOrder(best[0], d, best[1]))


def _required_history(model: ArimaModel) -> int:
    o = model.order
    return o.d + max(o.p, o.q) + 1


def forecast_one_step(model: ArimaModel, history) -> float:
    """Forecast the next value given the full observed history."""
    y = np.asarray(history, dtype=float)
    if y.size < _required_history(model):
        raise ValueError(f"need at least {_required_history(model)} history values")
    o = model.order
    w = difference(y, o.d)
    t0 = max(o.p, o.q)
    eps = _innovations(w, model.mu, model.phi, model.theta, t0)
    w_next = model.mu
    for i in range(o.p):
        w_next += model.phi[i] * w[-1 - i]
    for j in range(o.q):
        w_next -= model.theta[j] * eps[-1 - j]
    if o.d == 0:
        return float(w_next)
    if o.d == 1:
        return float(y[-1] + w_next)
    return float(2 * y[-1] - y[-2] + w_next)


def forecast_path(model: ArimaModel, history, steps: int) -> np.ndarray:
    """Multi-step forecast: future innovations zero, forecasts fed back."""
    y = np.asarray(history, dtype=float)
    if y.size < _required_history(model):
        raise ValueError(f"need at least {_required_history(model)} history values")
    if steps < 1:
        raise ValueError("steps must be positive")
    o = model.order
    w = difference(y, o.d)
    t0 = max(o.p, o.q)
    eps = _innovations(w, model.mu, model.phi, model.theta, t0)
    w_ext = list(w)
    e_ext = list(eps)
    news = []
    for _ in range(steps):
        w_next = model.mu
        for i in range(o.p):
            w_next += model.phi[i] * w_ext[-1 - i]
        for j in range(o.q):
            w_next -= model.theta[j] * e_ext[-1 - j]
        w_ext.append(w_next)
        e_ext.append(0.0)
        news.append(w_next)
    news = np.array(news)
    if o.d == 0:
        return news
    if o.d == 1:
        return y[-1] + np.cumsum(news)
    d1 = (y[-1] - y[-2]) + np.cumsum(news)
    return y[-1] + np.cumsum(d1)


def rolling_forecast(model: ArimaModel, train, test, refit_every: int = 0) -> np.ndarray:
    """One-step-ahead forecasts across the test span.

    Each day's observed actual is appended to the history before the next
    forecast; coefficients stay fixed unless refit_every > 0, in which
    case the same order is re-estimated every that many steps.
    """
    train = np.asarray(train, dtype=float)
    test = np.asarray(test, dtype=float)
    current = model
    preds = np.empty(test.size)
    for h in range(test.size):
        history = np.concatenate([train, test[:h]])
        if refit_every > 0 and h > 0 and h % refit_every == 0:
            o = current.order
            refit = fit_arma(difference(history, o.d), o.p, o.q)
            current = replace(refit, order=o)
        preds[h] = forecast_one_step(current, history)
    return preds


@dataclass(frozen=True)
class ResidualDiagnostics:
    residuals: np.ndarray
    acf: np.ndarray
    pacf: np.ndarray
    mean: float
    normality_p: float


def residual_diagnostics(model: ArimaModel, max_lag: int = 28) -> ResidualDiagnostics:
    """Residual ACF/PACF (through lag 28 by default), mean, and normality."""
    if model.residuals is None:
        raise ValueError("model carries no residuals (loaded from artifact?)")
    r = model.residuals
    lag = min(max_lag, r.size - 1)
    jb = jarque_bera(r)
    return ResidualDiagnostics(
        residuals=r,
        acf=acf_fn(r, lag),
        pacf=pacf_fn(r, lag),
        mean=float(r.mean()),
        normality_p=float(jb.pvalue),
    )


def save_model(model: ArimaModel, path) -> None:
    """Serialize order, coefficients, and fit stats as a JSON document."""
    doc = {
        "order": {"p": model.order.p, "d": model.order.d, "q": model.order.q},
        "mu": model.mu,
        "phi": model.phi.tolist(),
        "theta": model.theta.tolist(),
        "sigma2": model.sigma2,
        "aic": model.aic,
        "train_range": [d.isoformat() for d in model.train_range]
        if model.train_range
        else None,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_model(path) -> ArimaModel:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    train_range = None
    if doc.get("train_range"):
        train_range = tuple(date.fromisoformat(s) for s in doc["train_range"])
    return ArimaModel(
        order=ArimaOrder(**doc["order"]),
        mu=float(doc["mu"]),
        phi=np.asarray(doc["phi"], dtype=float),
        theta=np.asarray(doc["theta"], dtype=float),
        sigma2=float(doc["sigma2"]),
        aic=float(doc["aic"]),
        residuals=None,
        train_range=train_range,
    )
