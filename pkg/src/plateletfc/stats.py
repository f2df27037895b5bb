"""Evaluation metrics, exploratory statistics, and seasonal decomposition.

Covers the error metrics shared by every model (rmse, mape), the
correlation and hypothesis-testing tools used for series diagnostics
(acf/pacf, unit-root test, Mann-Whitney U, one-way ANOVA, boxplot
summaries), and an additive STL decomposition built on local linear
regression.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.stats import f as f_dist
from scipy.stats import norm, rankdata


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    reject_at_5pct: bool
    critical_values: dict | None = None
    used_lag: int | None = None
    df: tuple | None = None


@dataclass(frozen=True)
class BoxplotSummary:
    q1: float
    median: float
    q3: float
    iqr: float
    whisker_low: float
    whisker_high: float
    outliers: tuple


@dataclass(frozen=True)
class StlResult:
    trend: np.ndarray
    seasonal: np.ndarray
    residual: np.ndarray
    period: int


def _as_series(x, name="series") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    return arr


def rmse(actual, predicted) -> float:
    """Root mean squared error."""
    a = _as_series(actual, "actual")
    p = _as_series(predicted, "predicted")
    if a.size == 0 or a.size != p.size:
        raise ValueError("actual and predicted must be equal nonzero lengths")
    return float(np.sqrt(np.mean((a - p) ** 2)))


def mape(actual, predicted, return_exclusions: bool = False):
    """Mean absolute percentage error, in percent.

    Points with a zero actual are excluded from the mean; pass
    ``return_exclusions=True`` to also get how many were dropped.
    Raises if every actual is zero.
    """
    a = _as_series(actual, "actual")
    p = _as_series(predicted, "predicted")
    if a.size == 0 or a.size != p.size:
        raise ValueError("actual and predicted must be equal nonzero lengths")
    keep = a != 0.0
    n_excluded = int(np.sum(~keep))
    if not np.any(keep):
        raise ValueError("mape undefined: all actual values are zero")
    value = float(100.0 * np.mean(np.abs(a[keep] - p[keep]) / np.abs(a[keep])))
    if return_exclusions:
        return value, n_excluded
    return value


def acf(series, max_lag: int) -> np.ndarray:
    """Autocorrelation at lags 0..max_lag (biased normalization)."""
    x = _as_series(series)
    if max_lag < 0:
        raise ValueError("max_lag must be nonnegative")
    if x.size <= max_lag:
        raise ValueError("series must be longer than max_lag")
    x = x - x.mean()
    denom = float(np.dot(x, x))
    if denom == 0.0:
        raise ValueError("acf undefined for a constant series")
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for k in range(1, max_lag + 1):
        out[k] = float(np.dot(x[:-k], x[k:])) / denom
    return out


def pacf(series, max_lag: int) -> np.ndarray:
    """Partial autocorrelation at lags 0..max_lag via Durbin-Levinson."""
    r = acf(series, max_lag)
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    if max_lag == 0:
        return out
    phi = np.zeros((max_lag + 1, max_lag + 1))
    phi[1, 1] = r[1]
    out[1] = r[1]
    for k in range(2, max_lag + 1):
        num = r[k] - np.dot(phi[k - 1, 1:k], r[k - 1 : 0 : -1])
        den = 1.0 - np.dot(phi[k - 1, 1:k], r[1:k])
        phi[k, k] = num / den if den != 0.0 else 0.0
        for j in range(1, k):
            phi[k, j] = phi[k - 1, j] - phi[k, k] * phi[k - 1, k - j]
        out[k] = phi[k, k]
    return out


# Response-surface critical values for the constant-only unit-root
# regression (MacKinnon 2010), and the p-value polynomials (MacKinnon
# 1994). Surfaces are in 1/T powers of the regression sample size.
_ADF_CRIT_SURFACE = {
    "1%": (-3.43035, -6.5393, -16.786, -79.433),
    "5%": (-2.86154, -2.8903, -4.234, -40.040),
    "10%": (-2.56677, -1.5384, -2.809, 0.0),
}
_ADF_P_SMALL = (2.1659, 1.4412, 0.038269)
_ADF_P_LARGE = (1.7339, 0.93202, -0.12745, -0.010368)
_ADF_P_STAR = -1.61
_ADF_P_MIN = -18.83
_ADF_P_MAX = 2.74


def _adf_p_value(stat: float) -> float:
    if stat <= _ADF_P_MIN:
        return 0.0
    if stat >= _ADF_P_MAX:
        return 1.0
    coeffs = _ADF_P_SMALL if stat <= _ADF_P_STAR else _ADF_P_LARGE
    z = 0.0
    for power, c in enumerate(coeffs):
        z += c * stat**power
    return float(norm.cdf(z))


def schwert_lag(n: int) -> int:
    """Default augmentation order for a length-n series."""
    return int(np.floor(12.0 * (n / 100.0) ** 0.25))


def adf_test(series, max_lag: int | None = None) -> TestResult:
    """Augmented Dickey-Fuller unit-root test, constant-only regression.

    Regresses the first difference on a constant, the lagged level, and
    ``max_lag`` lagged differences (Schwert's rule when unspecified).
    ``reject_at_5pct`` means the unit root is rejected, i.e. the series
    looks stationary. The p-value is the MacKinnon (1994) approximation;
    critical values are the MacKinnon (2010) response surface.
    """
    y = _as_series(series)
    n = y.size
    if max_lag is None:
        max_lag = schwert_lag(n)
    if max_lag < 0:
        raise ValueError("max_lag must be nonnegative")
    if n < 20 + max_lag:
        raise ValueError(f"need at least {20 + max_lag} observations, got {n}")
    if np.all(y == y[0]):
        raise ValueError("adf_test undefined for a constant series")

    dy = np.diff(y)
    k = max_lag
    nobs = dy.size - k
    dep = dy[k:]
    cols = [np.ones(nobs), y[k:-1]]
    for i in range(1, k + 1):
        cols.append(dy[k - i : -i])
    X = np.column_stack(cols)

    beta, _, _, _ = np.linalg.lstsq(X, dep, rcond=None)
    resid = dep - X @ beta
    dof = nobs - X.shape[1]
    if dof <= 0:
        raise ValueError("not enough observations for the requested lag order")
    sigma2 = float(resid @ resid) / dof
    xtx_inv = np.linalg.inv(X.T @ X)
    se = np.sqrt(sigma2 * xtx_inv[1, 1])
    stat = float(beta[1] / se)

    crit = {}
    for level, (b0, b1, b2, b3) in _ADF_CRIT_SURFACE.items():
        crit[level] = b0 + b1 / nobs + b2 / nobs**2 + b3 / nobs**3
    return TestResult(
        statistic=stat,
        p_value=_adf_p_value(stat),
        reject_at_5pct=bool(stat < crit["5%"]),
        critical_values=crit,
        used_lag=k,
    )


def mann_whitney_u(a, b) -> TestResult:
    """Two-sided Mann-Whitney U with tie-corrected normal approximation.

    The statistic is U for the first sample: the number of (a, b) pairs
    with a > b, counting ties as one half.
    """
    a = _as_series(a, "a")
    b = _as_series(b, "b")
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    na, nb = a.size, b.size
    combined = np.concatenate([a, b])
    ranks = rankdata(combined)
    u_a = float(ranks[:na].sum() - na * (na + 1) / 2.0)

    n = na + nb
    mean = na * nb / 2.0
    _, tie_counts = np.unique(combined, return_counts=True)
    tie_term = float(np.sum(tie_counts**3 - tie_counts)) / (n * (n - 1))
    var = na * nb / 12.0 * ((n + 1) - tie_term)
    if var <= 0.0:
        # every value identical across both samples
        return TestResult(statistic=u_a, p_value=1.0, reject_at_5pct=False)
    diff = u_a - mean
    correction = 0.5 * np.sign(diff)
    z = (diff - correction) / np.sqrt(var)
    p = min(1.0, float(2.0 * norm.sf(abs(z))))
    return TestResult(statistic=u_a, p_value=p, reject_at_5pct=bool(p < 0.05))


def anova_oneway(groups) -> TestResult:
    """One-way ANOVA F test across the given samples."""
    samples = [_as_series(g, "group") for g in groups]
    if len(samples) < 2:
        raise ValueError("need at least two groups")
    if any(g.size < 2 for g in samples):
        raise ValueError("every group needs at least two points")
    all_values = np.concatenate(samples)
    grand = all_values.mean()
    ss_between = sum(g.size * (g.mean() - grand) ** 2 for g in samples)
    ss_within = sum(float(np.sum((g - g.mean()) ** 2)) for g in samples)
    df1 = len(samples) - 1
    df2 = all_values.size - len(samples)
    if ss_within == 0.0:
        raise ValueError("zero within-group variance; F undefined")
    f_stat = (ss_between / df1) / (ss_within / df2)
    p = float(f_dist.sf(f_stat, df1, df2))
    return TestResult(
        statistic=float(f_stat), p_value=p, reject_at_5pct=bool(p < 0.05), df=(df1, df2)
    )


def boxplot_stats(values) -> BoxplotSummary:
    """Quartiles (linear interpolation) and 1.5-IQR whiskers/outliers."""
    x = np.sort(_as_series(values, "values"))
    if x.size < 4:
        raise ValueError("need at least 4 values")
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    iqr = q3 - q1
    lo_fence = q1 - 1.5 * iqr
    hi_fence = q3 + 1.5 * iqr
    inside = x[(x >= lo_fence) & (x <= hi_fence)]
    outliers = x[(x < lo_fence) | (x > hi_fence)]
    return BoxplotSummary(
        q1=float(q1),
        median=float(med),
        q3=float(q3),
        iqr=float(iqr),
        whisker_low=float(inside.min()),
        whisker_high=float(inside.max()),
        outliers=tuple(float(v) for v in outliers),
    )


@njit(cache=True)
def _loess(x, y, rho, window, xout):
    """Local linear regression with tricube weights at the xout points.

    window is the neighborhood size q; when q exceeds the sample the
    bandwidth is stretched by q/n as usual. rho carries externally
    supplied robustness weights (all ones when not robust).
    """
    n = x.size
    q = window if window < n else n
    out = np.empty(xout.size)
    for m in range(xout.size):
        x0 = xout[m]
        d = np.abs(x - x0)
        if window < n:
            h = np.partition(d, q - 1)[q - 1]
        else:
            h = d.max() * window / n
        if h <= 0.0:
            h = 1.0
        wts = np.empty(n)
        sw = 0.0
        swx = 0.0
        swy = 0.0
        for i in range(n):
            u = d[i] / h
            if u < 1.0:
                w = (1.0 - u * u * u) ** 3
            else:
                w = 0.0
            w *= rho[i]
            wts[i] = w
            sw += w
            swx += w * x[i]
            swy += w * y[i]
        if sw <= 0.0:
            # robustness weights killed the whole neighborhood; fall
            # back to the unweighted neighborhood mean
            total = 0.0
            count = 0
            for i in range(n):
                if d[i] <= h:
                    total += y[i]
                    count += 1
            out[m] = total / count if count > 0 else 0.0
            continue
        mx = swx / sw
        my = swy / sw
        sxx = 0.0
        sxy = 0.0
        for i in range(n):
            dx = x[i] - mx
            sxx += wts[i] * dx * dx
            sxy += wts[i] * dx * (y[i] - my)
        if sxx > 1e-12 * (1.0 + mx * mx):
            b = sxy / sxx
        else:
            b = 0.0
        out[m] = my + b * (x0 - mx)
    return out


def _moving_average(x: np.ndarray, w: int) -> np.ndarray:
    return np.convolve(x, np.full(w, 1.0 / w), mode="valid")


def _next_odd(v: float) -> int:
    k = int(np.ceil(v))
    return k if k % 2 == 1 else k + 1


def stl_decompose(
    series,
    period: int,
    seasonal_window: int = 7,
    trend_window: int | None = None,
    low_pass_window: int | None = None,
    inner: int = 2,
    outer: int = 1,
) -> StlResult:
    """Additive seasonal-trend decomposition using local regression.

    Iterates cycle-subseries smoothing (seasonal), a ``period``-wide
    low-pass correction, and trend smoothing; ``outer`` extra passes
    reweight by bisquare robustness weights. The residual is defined as
    series - trend - seasonal, so the additive identity is exact.
    """
    y = _as_series(series)
    n = y.size
    if period < 2:
        raise ValueError("period must be at least 2")
    if n < 2 * period:
        raise ValueError("series must cover at least two full periods")
    if seasonal_window % 2 == 0:
        seasonal_window += 1
    if trend_window is None:
        trend_window = _next_odd(1.5 * period / (1.0 - 1.5 / seasonal_window))
    if low_pass_window is None:
        low_pass_window = _next_odd(period)

    t_grid = np.arange(n, dtype=float)
    rho = np.ones(n)
    trend = np.zeros(n)
    seasonal = np.zeros(n)

    for outer_pass in range(outer + 1):
        for _ in range(inner):
            detrended = y - trend
            # seasonal: smooth each cycle subseries, extending one
            # period beyond both ends for the low-pass stage
            c = np.empty(n + 2 * period)
            for j in range(period):
                sub = detrended[j::period]
                sub_rho = rho[j::period]
                pos = np.arange(sub.size, dtype=float)
                eval_pos = np.arange(-1.0, sub.size + 1.0)
                smoothed = _loess(pos, sub, sub_rho, seasonal_window, eval_pos)
                c[j + period :: period][: sub.size] = smoothed[1:-1]
                c[j] = smoothed[0]
                tail = j + period + sub.size * period
                if tail < c.size:
                    c[tail] = smoothed[-1]
            low = _moving_average(_moving_average(_moving_average(c, period), period), 3)
            low = _loess(t_grid, low, rho, low_pass_window, t_grid)
            seasonal = c[period : period + n] - low
            trend = _loess(t_grid, y - seasonal, rho, trend_window, t_grid)
        if outer_pass < outer:
            resid = y - trend - seasonal
            scale = 6.0 * np.median(np.abs(resid))
            if scale <= 0.0:
                rho = np.ones(n)
            else:
                u = np.clip(np.abs(resid) / scale, 0.0, 1.0)
                rho = (1.0 - u**2) ** 2

    residual = y - trend - seasonal
    return StlResult(trend=trend, seasonal=seasonal, residual=residual, period=period)
