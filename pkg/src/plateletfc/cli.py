"""Command-line harness: data prep, model fitting, two-scenario evaluation.

Ties the other modules together behind subcommands (synth, ingest,
decompose, fit, evaluate, compare, report). Every fitted model is seeded
from the run's master seed independently of the others, so a model list
reordering or a per-model failure cannot change any other model's
numbers.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .additive import AdditiveConfig, fit_additive, point_forecast, predict_additive
from .arima import auto_arima, rolling_forecast, save_model
from .data import (
    SCENARIOS,
    TWO_YEAR,
    DailyAggregate,
    FeatureMatrix,
    ScenarioSplit,
    aggregate_daily,
    build_features,
    demand_series,
    export_daily,
    ingest_granular,
    read_received,
    split_scenario,
    write_granular,
    write_received,
)
from .lasso import bootstrap, cv_select_lambda, fit_lasso, lambda_path, predict_lasso
from .lstm import LstmConfig, grid_search, predict_lstm, save_checkpoint, train_lstm
from .stats import acf, mape, pacf, rmse, stl_decompose
from .synth import SynthConfig, generate, write_truth_log

MODEL_ORDER = ("arima", "additive", "lasso", "lstm")
UNIVARIATE_MODELS = ("arima", "additive")
METRICS_COLUMNS = ("model", "scenario", "train_rmse", "train_mape", "test_rmse", "test_mape")


@dataclass(frozen=True)
class ModelMetrics:
    train_rmse: float
    train_mape: float
    test_rmse: float
    test_mape: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.train_rmse, self.train_mape, self.test_rmse, self.test_mape)


@dataclass
class ForecastSeries:
    dates: list[dt.date]
    actual: np.ndarray
    point: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None


@dataclass
class ModelOutcome:
    model: str
    metrics: ModelMetrics | None = None
    error: str | None = None


@dataclass
class EvaluationReport:
    scenario: str
    outcomes: list[ModelOutcome]
    forecasts: dict[str, ForecastSeries]
    train_dates: list[dt.date]
    train_target: np.ndarray
    arima_residuals: np.ndarray | None = None
    metrics_path: str | None = None
    plot_paths: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class RunConfig:
    out_dir: str
    granular_path: str | None = None
    received_path: str | None = None
    synth: SynthConfig | None = None
    scenario: ScenarioSplit = TWO_YEAR
    models: tuple[str, ...] = MODEL_ORDER
    seed: int = 0
    arima_max_p: int = 5
    arima_max_q: int = 5
    arima_max_d: int = 2
    additive: AdditiveConfig | None = None
    lasso_folds: int = 5
    lasso_grid_size: int = 40
    bootstrap_replicates: int = 200
    interval_level: float = 0.95
    lstm_grid: tuple[LstmConfig, ...] | None = None

    def __post_init__(self):
        if not self.models:
            raise ValueError("select at least one model")
        unknown = [m for m in self.models if m not in MODEL_ORDER]
        if unknown:
            raise ValueError(f"unknown model(s): {', '.join(unknown)}")
        if (self.granular_path is None) != (self.received_path is None):
            raise ValueError("granular and received paths must be given together")


def default_lstm_grid(seed: int) -> tuple[LstmConfig, ...]:
    return tuple(
        LstmConfig(window=w, hidden=h, epochs=30, batch=64, learning_rate=0.005,
                   grad_clip=5.0, seed=seed)
        for h in (16, 32) for w in (7, 14)
    )


def load_aggregates(config: RunConfig) -> list[DailyAggregate]:
    """Daily aggregates from input files, or from the seeded generator."""
    if config.granular_path is not None:
        records = ingest_granular(config.granular_path)
        received = read_received(config.received_path)
        span = (min(received), max(received))
        return aggregate_daily(records, received, span)
    synth = config.synth or SynthConfig(seed=config.seed)
    return generate(synth).aggregates


def _feature_scenario(fm: FeatureMatrix, scenario: ScenarioSplit) -> ScenarioSplit:
    # lag features consume the first week of history, so the feature
    # matrix may start a few days after the scenario's nominal train start
    if fm.dates[0] > scenario.train_start:
        return replace(scenario, train_start=fm.dates[0])
    return scenario


def _series_slice(dates, values, start: dt.date, end: dt.date) -> tuple[list[dt.date], np.ndarray]:
    idx = [i for i, d in enumerate(dates) if start <= d <= end]
    if not idx or dates[idx[0]] != start or dates[idx[-1]] != end:
        raise ValueError(f"data does not cover {start}..{end}")
    return [dates[i] for i in idx], values[idx[0] : idx[-1] + 1]


def _metrics(train_actual, train_pred, test_actual, test_pred) -> ModelMetrics:
    return ModelMetrics(
        train_rmse=rmse(train_actual, train_pred),
        train_mape=mape(train_actual, train_pred),
        test_rmse=rmse(test_actual, test_pred),
        test_mape=mape(test_actual, test_pred),
    )


def _run_arima(config, train_y, test_y, test_dates):
    model = auto_arima(
        train_y, max_p=config.arima_max_p, max_q=config.arima_max_q, max_d=config.arima_max_d
    )
    test_pred = rolling_forecast(model, train_y, test_y)
    resid = model.residuals
    offset = train_y.size - resid.size
    train_pred = train_y[offset:] - resid
    metrics = _metrics(train_y[offset:], train_pred, test_y, test_pred)
    series = ForecastSeries(dates=list(test_dates), actual=test_y.copy(), point=test_pred)
    return metrics, series, model


def _run_additive(config, train_dates, train_y, test_y, test_dates):
    model = fit_additive(train_dates, train_y, config.additive)
    train_pred = point_forecast(model, train_dates)
    forecast = predict_additive(model, test_dates, seed=config.seed)
    metrics = _metrics(train_y, train_pred, test_y, forecast.point)
    series = ForecastSeries(
        dates=list(test_dates), actual=test_y.copy(), point=forecast.point,
        lower=forecast.lower, upper=forecast.upper,
    )
    return metrics, series, model


def _run_lasso(config, train_fm, test_fm):
    grid = lambda_path(train_fm.values, train_fm.target, n_lambdas=config.lasso_grid_size)
    cv = cv_select_lambda(train_fm, k=config.lasso_folds, grid=grid, seed=config.seed)
    model = fit_lasso(train_fm, lam=cv.lambda_star)
    train_pred = predict_lasso(model, train_fm)
    test_pred = predict_lasso(model, test_fm)
    band = bootstrap(
        train_fm, lam=cv.lambda_star, B=config.bootstrap_replicates,
        level=config.interval_level, seed=config.seed, X_test=test_fm,
    )
    metrics = _metrics(train_fm.target, train_pred, test_fm.target, test_pred)
    series = ForecastSeries(
        dates=list(test_fm.dates), actual=test_fm.target.copy(), point=test_pred,
        lower=band.pred_low, upper=band.pred_high,
    )
    return metrics, series, model


def _with_context(train_fm: FeatureMatrix, test_fm: FeatureMatrix) -> FeatureMatrix:
    return FeatureMatrix(
        dates=list(train_fm.dates) + list(test_fm.dates),
        feature_names=train_fm.feature_names,
        values=np.vstack([train_fm.values, test_fm.values]),
        target=np.concatenate([train_fm.target, test_fm.target]),
        col_means=train_fm.col_means,
        col_scales=train_fm.col_scales,
    )


def _run_lstm(config, train_fm, test_fm):
    grid = config.lstm_grid or default_lstm_grid(config.seed)
    result = grid_search(train_fm, grid)
    model = train_lstm(train_fm, result.best_config)
    w = result.best_config.window
    train_dates = train_fm.dates[w - 1 :]
    train_pred = predict_lstm(model, train_fm, train_dates)
    context = _with_context(train_fm, test_fm)
    test_pred = predict_lstm(model, context, test_fm.dates)
    metrics = _metrics(train_fm.target[w - 1 :], train_pred, test_fm.target, test_pred)
    series = ForecastSeries(
        dates=list(test_fm.dates), actual=test_fm.target.copy(), point=test_pred
    )
    return metrics, series, model


def run_scenario(config: RunConfig) -> EvaluationReport:
    """Fit the selected models on the scenario and evaluate on its test year.

    Per-model failures are recorded in the report without aborting the
    remaining models. Metrics land in ``metrics_<scenario>.csv`` and the
    plot files are emitted alongside.
    """
    aggregates = load_aggregates(config)
    dates_all, demand_all = demand_series(aggregates)
    s = config.scenario
    train_dates, train_y = _series_slice(dates_all, demand_all, s.train_start, s.train_end)
    test_dates, test_y = _series_slice(dates_all, demand_all, s.test_start, s.test_end)

    needs_features = any(m in config.models for m in ("lasso", "lstm"))
    train_fm = test_fm = None
    if needs_features:
        fm = build_features(aggregates)
        train_fm, test_fm = split_scenario(fm, _feature_scenario(fm, s))

    models = [m for m in MODEL_ORDER if m in config.models]
    outcomes: list[ModelOutcome] = []
    forecasts: dict[str, ForecastSeries] = {}
    arima_residuals = None
    for name in models:
        try:
            if name == "arima":
                metrics, series, model = _run_arima(config, train_y, test_y, test_dates)
                arima_residuals = model.residuals
            elif name == "additive":
                metrics, series, _ = _run_additive(config, train_dates, train_y, test_y, test_dates)
            elif name == "lasso":
                metrics, series, _ = _run_lasso(config, train_fm, test_fm)
            else:
                metrics, series, _ = _run_lstm(config, train_fm, test_fm)
        except Exception as exc:  # noqa: BLE001 - failure isolation per model
            outcomes.append(ModelOutcome(model=name, error=str(exc)))
            continue
        outcomes.append(ModelOutcome(model=name, metrics=metrics))
        forecasts[name] = series

    report = EvaluationReport(
        scenario=s.name,
        outcomes=outcomes,
        forecasts=forecasts,
        train_dates=train_dates,
        train_target=train_y,
        arima_residuals=arima_residuals,
    )
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.metrics_path = str(out / f"metrics_{s.name}.csv")
    write_metrics(report.metrics_path, report)
    failures = [o for o in outcomes if o.error is not None]
    if failures:
        with open(out / f"errors_{s.name}.csv", "w", encoding="utf-8", newline="") as fh:
            fh.write("model,error\n")
            for o in failures:
                msg = o.error.replace("\n", " ").replace(",", ";")
                fh.write(f"{o.model},{msg}\n")
    report.plot_paths = emit_plot_data(report, config.out_dir)
    return report


def write_metrics(path, report: EvaluationReport) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(METRICS_COLUMNS) + "\n")
        for o in report.outcomes:
            if o.metrics is None:
                continue
            vals = ",".join(repr(v) for v in o.metrics.as_tuple())
            fh.write(f"{o.model},{report.scenario},{vals}\n")


def read_metrics(path) -> EvaluationReport:
    """Rebuild a metrics-only report from a written metrics table."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        if tuple(header) != METRICS_COLUMNS:
            raise ValueError(f"unexpected metrics header in {path}")
        outcomes = []
        scenario = None
        for line in fh:
            parts = line.rstrip("\n").split(",")
            if len(parts) != len(METRICS_COLUMNS):
                raise ValueError(f"malformed metrics row in {path}")
            model, row_scenario = parts[0], parts[1]
            if scenario is None:
                scenario = row_scenario
            elif scenario != row_scenario:
                raise ValueError("metrics file mixes scenarios")
            outcomes.append(ModelOutcome(
                model=model,
                metrics=ModelMetrics(*(float(v) for v in parts[2:])),
            ))
    if scenario is None:
        raise ValueError(f"metrics file {path} has no rows")
    return EvaluationReport(
        scenario=scenario, outcomes=outcomes, forecasts={},
        train_dates=[], train_target=np.empty(0),
    )


def emit_plot_data(report: EvaluationReport, out_dir) -> list[str]:
    """Per-model forecast tables plus decomposition and residual files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []

    for name in MODEL_ORDER:
        series = report.forecasts.get(name)
        if series is None:
            continue
        path = out / f"forecast_{name}_{report.scenario}.csv"
        with_bands = series.lower is not None
        with open(path, "w", encoding="utf-8", newline="") as fh:
            cols = "date,actual,forecast,lower,upper" if with_bands else "date,actual,forecast"
            fh.write(cols + "\n")
            for i, d in enumerate(series.dates):
                row = [d.isoformat(), repr(float(series.actual[i])), repr(float(series.point[i]))]
                if with_bands:
                    row += [repr(float(series.lower[i])), repr(float(series.upper[i]))]
                fh.write(",".join(row) + "\n")
        paths.append(str(path))

    if report.train_target.size >= 21:
        stl = stl_decompose(report.train_target, period=7)
        path = out / f"stl_{report.scenario}.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("date,observed,trend,seasonal,remainder\n")
            for i, d in enumerate(report.train_dates):
                fh.write(",".join([
                    d.isoformat(),
                    repr(float(report.train_target[i])),
                    repr(float(stl.trend[i])),
                    repr(float(stl.seasonal[i])),
                    repr(float(stl.residual[i])),
                ]) + "\n")
        paths.append(str(path))

    if report.arima_residuals is not None:
        r = report.arima_residuals
        band = 1.96 / np.sqrt(r.size)
        for fn, label in ((acf, "acf"), (pacf, "pacf")):
            vals = fn(r, min(28, r.size - 1))
            path = out / f"residual_{label}_{report.scenario}.csv"
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write("lag,value,white_noise_band\n")
                for lag, v in enumerate(vals):
                    fh.write(f"{lag},{float(v)!r},{float(band)!r}\n")
            paths.append(str(path))
    return paths


def compare_report(reports, out_dir) -> str:
    """Merge reports into one table grouped univariate/multivariate.

    Rows are ordered by model (univariate group first), then scenario
    name; values are written with full precision so a re-parse recovers
    them exactly. A fixed-width text rendering lands next to the csv.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("need at least one report")
    rows = []
    for rep in reports:
        for o in rep.outcomes:
            if o.metrics is not None:
                rows.append((o.model, rep.scenario, o.metrics))
    rows.sort(key=lambda r: (MODEL_ORDER.index(r[0]), r[1]))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "compare.csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(METRICS_COLUMNS) + "\n")
        for model, scenario, m in rows:
            fh.write(f"{model},{scenario}," + ",".join(repr(v) for v in m.as_tuple()) + "\n")

    txt_path = out / "compare.txt"
    with open(txt_path, "w", encoding="utf-8", newline="") as fh:
        header = f"{'model':<10}{'scenario':<12}{'train_rmse':>12}{'train_mape':>12}{'test_rmse':>12}{'test_mape':>12}\n"
        for group, members in (("univariate", UNIVARIATE_MODELS),
                               ("multivariate", tuple(m for m in MODEL_ORDER if m not in UNIVARIATE_MODELS))):
            group_rows = [r for r in rows if r[0] in members]
            if not group_rows:
                continue
            fh.write(f"== {group} ==\n")
            fh.write(header)
            for model, scenario, m in group_rows:
                fh.write(f"{model:<10}{scenario:<12}" + "".join(f"{v:>12.4f}" for v in m.as_tuple()) + "\n")
            fh.write("\n")
    return str(csv_path)


def _parse_date(raw: str) -> dt.date:
    return dt.date.fromisoformat(raw)


def _synth_from_dict(raw: dict, seed: int | None = None) -> SynthConfig:
    kwargs = dict(raw)
    for key in ("start", "end", "bump_start", "bump_end"):
        if key in kwargs:
            kwargs[key] = _parse_date(kwargs[key])
    if "monthly_means" in kwargs:
        kwargs["monthly_means"] = {int(k): float(v) for k, v in kwargs["monthly_means"].items()}
    if "dow_means" in kwargs:
        kwargs["dow_means"] = tuple(float(v) for v in kwargs["dow_means"])
    if seed is not None and "seed" not in kwargs:
        kwargs["seed"] = seed
    return SynthConfig(**kwargs)


def _scenario_from_name(name: str) -> ScenarioSplit:
    if name not in SCENARIOS:
        known = ", ".join(sorted(SCENARIOS))
        raise ValueError(f"unknown scenario {name!r}; known: {known}")
    return SCENARIOS[name]


def load_run_config(args) -> RunConfig:
    """RunConfig from the optional json config file plus CLI overrides."""
    raw = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ValueError("config file must hold a json object")

    seed = args.seed if args.seed is not None else int(raw.get("seed", 0))
    scenario_name = args.scenario or raw.get("scenario", TWO_YEAR.name)
    models_raw = args.models or raw.get("models")
    if isinstance(models_raw, str):
        models = tuple(m.strip() for m in models_raw.split(",") if m.strip())
    elif models_raw:
        models = tuple(models_raw)
    else:
        models = MODEL_ORDER

    kwargs = dict(
        out_dir=args.out,
        scenario=_scenario_from_name(scenario_name),
        models=models,
        seed=seed,
    )
    if getattr(args, "granular", None):
        kwargs["granular_path"] = args.granular
        kwargs["received_path"] = args.received
    if "synth" in raw:
        kwargs["synth"] = _synth_from_dict(raw["synth"], seed=seed)
    arima_raw = raw.get("arima", {})
    for key in ("max_p", "max_q", "max_d"):
        if key in arima_raw:
            kwargs[f"arima_{key}"] = int(arima_raw[key])
    if "additive" in raw:
        kwargs["additive"] = AdditiveConfig(**raw["additive"])
    lasso_raw = raw.get("lasso", {})
    if "cv_folds" in lasso_raw:
        kwargs["lasso_folds"] = int(lasso_raw["cv_folds"])
    if "grid_size" in lasso_raw:
        kwargs["lasso_grid_size"] = int(lasso_raw["grid_size"])
    if "bootstrap_replicates" in lasso_raw:
        kwargs["bootstrap_replicates"] = int(lasso_raw["bootstrap_replicates"])
    if "interval_level" in lasso_raw:
        kwargs["interval_level"] = float(lasso_raw["interval_level"])
    lstm_raw = raw.get("lstm", {})
    if "grid" in lstm_raw:
        kwargs["lstm_grid"] = tuple(
            LstmConfig(**{**entry, "seed": int(entry.get("seed", seed))})
            for entry in lstm_raw["grid"]
        )
    return RunConfig(**kwargs)


def _cmd_synth(args) -> int:
    raw = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh).get("synth", {})
    cfg = _synth_from_dict(raw, seed=args.seed)
    result = generate(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_granular(result.records, out / "granular.csv")
    write_received(result.received, out / "received.csv")
    write_truth_log(result.truth, out / "truth.csv")
    export_daily(result.aggregates, out / "daily.csv")
    print(f"wrote {len(result.records)} records over {len(result.aggregates)} days to {out}")
    return 0


def _cmd_ingest(args) -> int:
    records = ingest_granular(args.granular)
    received = read_received(args.received)
    span = (min(received), max(received))
    aggregates = aggregate_daily(records, received, span)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    export_daily(aggregates, out / "daily.csv")
    total = sum(a.units_transfused for a in aggregates)
    print(f"aggregated {len(aggregates)} days, {total} units, into {out / 'daily.csv'}")
    return 0


def _cmd_decompose(args) -> int:
    records = ingest_granular(args.granular)
    received = read_received(args.received)
    span = (min(received), max(received))
    aggregates = aggregate_daily(records, received, span)
    dates, demand = demand_series(aggregates)
    stl = stl_decompose(demand, period=args.period)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "stl.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("date,observed,trend,seasonal,remainder\n")
        for i, d in enumerate(dates):
            fh.write(",".join([
                d.isoformat(), repr(float(demand[i])), repr(float(stl.trend[i])),
                repr(float(stl.seasonal[i])), repr(float(stl.residual[i])),
            ]) + "\n")
    max_lag = min(28, demand.size - 1)
    for fn, label in ((acf, "acf"), (pacf, "pacf")):
        vals = fn(demand, max_lag)
        with open(out / f"{label}.csv", "w", encoding="utf-8", newline="") as fh:
            fh.write("lag,value\n")
            for lag, v in enumerate(vals):
                fh.write(f"{lag},{float(v)!r}\n")
    print(f"wrote decomposition files to {out}")
    return 0


def _cmd_fit(args) -> int:
    config = load_run_config(args)
    aggregates = load_aggregates(config)
    dates_all, demand_all = demand_series(aggregates)
    s = config.scenario
    train_dates, train_y = _series_slice(dates_all, demand_all, s.train_start, s.train_end)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    train_fm = None
    if any(m in config.models for m in ("lasso", "lstm")):
        fm = build_features(aggregates)
        eff = _feature_scenario(fm, s)
        train_fm, _ = split_scenario(fm, eff)

    for name in [m for m in MODEL_ORDER if m in config.models]:
        if name == "arima":
            model = auto_arima(train_y, max_p=config.arima_max_p,
                               max_q=config.arima_max_q, max_d=config.arima_max_d)
            save_model(model, out / f"arima_{s.name}.json")
            o = model.order
            print(f"arima: order ({o.p},{o.d},{o.q}) aic {model.aic:.2f}")
        elif name == "additive":
            model = fit_additive(train_dates, train_y, config.additive)
            with open(out / f"additive_{s.name}.csv", "w", encoding="utf-8", newline="") as fh:
                fh.write("term,weight\n")
                fh.write(f"intercept,{float(model.base_intercept)!r}\n")
                fh.write(f"slope,{float(model.base_slope)!r}\n")
                for cp, delta in zip(model.changepoint_dates, model.changepoint_deltas):
                    fh.write(f"changepoint_{cp.isoformat()},{float(delta)!r}\n")
                for i, w in enumerate(model.weekly_coeffs):
                    fh.write(f"weekly_{i},{float(w)!r}\n")
                for i, w in enumerate(model.yearly_coeffs):
                    fh.write(f"yearly_{i},{float(w)!r}\n")
                for name_, w in sorted(model.holiday_effects.items()):
                    fh.write(f"holiday_{name_},{float(w)!r}\n")
            print(f"additive: sigma {model.residual_sigma:.3f}")
        elif name == "lasso":
            grid = lambda_path(train_fm.values, train_fm.target, n_lambdas=config.lasso_grid_size)
            cv = cv_select_lambda(train_fm, k=config.lasso_folds, grid=grid, seed=config.seed)
            model = fit_lasso(train_fm, lam=cv.lambda_star)
            with open(out / f"lasso_{s.name}.csv", "w", encoding="utf-8", newline="") as fh:
                fh.write("feature,weight\n")
                fh.write(f"(intercept),{float(model.intercept)!r}\n")
                for fname, w in zip(model.feature_names, model.weights):
                    fh.write(f"{fname},{float(w)!r}\n")
            print(f"lasso: lambda {cv.lambda_star:.5f}, {len(model.selected)} active features")
        else:
            grid = config.lstm_grid or default_lstm_grid(config.seed)
            result = grid_search(train_fm, grid)
            model = train_lstm(train_fm, result.best_config)
            save_checkpoint(model, out / f"lstm_{s.name}.npz")
            c = result.best_config
            print(f"lstm: window {c.window} hidden {c.hidden}, final loss {model.loss_history[-1]:.3f}")
    return 0


def _print_report(report: EvaluationReport) -> None:
    for o in report.outcomes:
        if o.error is not None:
            print(f"{o.model:<10} {report.scenario:<10} FAILED: {o.error}")
        else:
            m = o.metrics
            print(f"{o.model:<10} {report.scenario:<10} train_rmse {m.train_rmse:8.4f} "
                  f"train_mape {m.train_mape:7.3f} test_rmse {m.test_rmse:8.4f} "
                  f"test_mape {m.test_mape:7.3f}")


def _cmd_evaluate(args) -> int:
    config = load_run_config(args)
    report = run_scenario(config)
    _print_report(report)
    return 0 if any(o.metrics is not None for o in report.outcomes) else 1


def _cmd_compare(args) -> int:
    reports = [read_metrics(path) for path in args.metrics]
    path = compare_report(reports, args.out)
    print(f"wrote {path}")
    return 0


def _cmd_report(args) -> int:
    base = load_run_config(args)
    reports = []
    for name in args.scenarios:
        config = replace(base, scenario=_scenario_from_name(name))
        report = run_scenario(config)
        _print_report(report)
        reports.append(report)
    path = compare_report(reports, base.out_dir)
    print(f"wrote {path}")
    return 0


def _add_run_arguments(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="json config file with per-model blocks")
    p.add_argument("--granular", help="granular transfusion csv (needs --received)")
    p.add_argument("--received", help="received-units csv")
    p.add_argument("--scenario", help="scenario name (TwoYear or EightYear)")
    p.add_argument("--models", help="comma-separated subset of arima,additive,lasso,lstm")
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plateletfc",
        description="platelet demand forecasting harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a seeded synthetic dataset")
    p.add_argument("--config", help="json config file (synth block)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("ingest", help="aggregate granular records to daily rows")
    p.add_argument("--granular", required=True)
    p.add_argument("--received", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_ingest)

    p = sub.add_parser("decompose", help="seasonal-trend decomposition of daily demand")
    p.add_argument("--granular", required=True)
    p.add_argument("--received", required=True)
    p.add_argument("--period", type=int, default=7)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_decompose)

    p = sub.add_parser("fit", help="fit models on a scenario's training years")
    _add_run_arguments(p)
    p.set_defaults(fn=_cmd_fit)

    p = sub.add_parser("evaluate", help="fit and evaluate one scenario")
    _add_run_arguments(p)
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("compare", help="merge metrics tables into a comparison")
    p.add_argument("--metrics", nargs="+", required=True, help="metrics csv paths")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_compare)

    p = sub.add_parser("report", help="run both scenarios end to end and compare")
    _add_run_arguments(p)
    p.add_argument("--scenarios", nargs="+", default=["TwoYear", "EightYear"])
    p.set_defaults(fn=_cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
