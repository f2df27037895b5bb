"""Daily platelet demand forecasting toolkit.

Univariate (ARIMA, additive trend/seasonality) and multivariate (lasso,
LSTM) daily-demand models, plus a calibrated synthetic transfusion data
generator and a scenario-comparison command line.
"""

__version__ = "0.1.0"

from .data import (  # noqa: F401
    DAY_NAMES,
    EIGHT_YEAR,
    FEATURE_NAMES,
    LABS,
    LOCATIONS,
    SCENARIOS,
    TWO_YEAR,
    DailyAggregate,
    FeatureMatrix,
    IngestError,
    ScenarioSplit,
    TransfusionRecord,
    aggregate_daily,
    build_features,
    date_range,
    demand_series,
    destandardize,
    export_daily,
    ingest_granular,
    read_received,
    split_scenario,
    standardize,
    write_granular,
    write_received,
)
from .stats import (  # noqa: F401
    BoxplotSummary,
    StlResult,
    TestResult,
    acf,
    adf_test,
    anova_oneway,
    boxplot_stats,
    mann_whitney_u,
    mape,
    pacf,
    rmse,
    schwert_lag,
    stl_decompose,
)
from .arima import (  # noqa: F401
    ArimaFitError,
    ArimaModel,
    ArimaOrder,
    ResidualDiagnostics,
    aic,
    auto_arima,
    choose_d,
    difference,
    fit_arma,
    forecast_one_step,
    forecast_path,
    integrate,
    load_model,
    residual_diagnostics,
    rolling_forecast,
    save_model,
)
from .additive import (  # noqa: F401
    AdditiveConfig,
    AdditiveForecast,
    AdditiveModel,
    HolidayCalendar,
    components,
    design_matrix,
    fit_additive,
    fit_without_holidays,
    make_holiday_calendar,
    point_forecast,
    predict_additive,
    with_sigma,
)
from .lasso import (  # noqa: F401
    BootstrapBand,
    CvResult,
    LassoModel,
    bootstrap,
    cv_select_lambda,
    fit_lasso,
    lambda_max,
    lambda_path,
    predict_lasso,
    soft_threshold,
)
from .lstm import (  # noqa: F401
    AdamState,
    GridResult,
    LayerParams,
    LstmConfig,
    LstmParams,
    TrainedLstm,
    adam_step,
    grid_search,
    init_adam,
    init_params,
    load_checkpoint,
    lstm_backward,
    lstm_forward,
    predict_lstm,
    save_checkpoint,
    train_lstm,
    write_loss_history,
)
from .synth import (  # noqa: F401
    GroundTruthLog,
    PlantReport,
    SynthConfig,
    SynthResult,
    generate,
    generate_daily,
    plant_report,
    write_truth_log,
)
from .cli import (  # noqa: F401
    EvaluationReport,
    ForecastSeries,
    ModelMetrics,
    ModelOutcome,
    RunConfig,
    compare_report,
    default_lstm_grid,
    emit_plot_data,
    load_aggregates,
    load_run_config,
    read_metrics,
    run_scenario,
    write_metrics,
)
