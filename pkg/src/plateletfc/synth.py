"""Seeded synthetic transfusion data calibrated to published summary stats.

The daily demand is an additive latent intensity: a base level plus
centered month and day-of-week profiles, holiday effects, planted
covariate contributions driven by a shared patient-acuity factor, a
multi-year level profile, and Gaussian noise, truncated and rounded to a
nonnegative integer count. Granular per-transfusion records are then
fabricated to reaggregate exactly to the daily numbers.

Two independent generator streams are derived from the master seed: one
for the daily latent process, one for record materialization. The daily
series is therefore identical whether or not granular records are built.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from .additive import make_holiday_calendar
from .data import (
    LABS,
    LOCATIONS,
    DailyAggregate,
    TransfusionRecord,
    aggregate_daily,
    date_range,
)

# per-lab (base count, acuity loading, count noise sd); the three labs
# carrying planted demand signal get the large loadings
LAB_PROFILE = {
    "ALP": (4.0, 0.5, 0.6),
    "MPV": (5.0, 0.4, 0.6),
    "hematocrit": (6.0, 0.6, 0.6),
    "PO2": (3.0, 0.3, 0.6),
    "creatinine": (5.0, 0.5, 0.6),
    "INR": (4.0, 0.4, 0.6),
    "MCHb": (3.0, 0.3, 0.6),
    "MCHb_conc": (3.0, 0.3, 0.6),
    "hb": (9.0, 1.35, 0.8),
    "mcv": (4.0, 0.4, 0.6),
    "plt": (7.0, 1.6, 0.8),
    "redcellwidth": (6.0, 1.05, 0.8),
    "wbc": (5.0, 0.6, 0.6),
    "ALC": (3.0, 0.3, 0.6),
}

LOCATION_PROBS = (0.26, 0.22, 0.18, 0.14, 0.08, 0.12)

ACUITY_RHO = 0.7
MISSING_FLAG_RATE = 0.05
MONDAY_SPIKE = 10.0
BULLWHIP_SD = 2.0


def _default_monthly_means() -> dict[int, float]:
    """Cosine interpolation through the January minimum and July maximum."""
    mid = (17.35 + 20.38) / 2.0
    amp = (20.38 - 17.35) / 2.0
    return {m: mid - amp * np.cos(2.0 * np.pi * (m - 1) / 12.0) for m in range(1, 13)}


def _default_dow_means() -> tuple[float, ...]:
    # Monday and Tuesday anchored; Wed-Fri filled so weekdays average
    # 21.20; both weekend days at the published weekend mean
    return (20.04, 21.68, 21.43, 21.43, 21.42, 12.37, 12.37)


def _default_holiday_effects() -> dict[str, float]:
    return {
        "New Year's Day": -5.0,
        "Family Day": -3.0,
        "Good Friday": -4.0,
        "Victoria Day": -3.0,
        "Canada Day": 1.5,
        "Civic Holiday": -3.0,
        "Labour Day": -3.0,
        "Thanksgiving": -4.0,
        "Christmas": -6.0,
        "Boxing Day": -5.0,
    }


def _default_covariates() -> dict[str, float]:
    return {
        "abnormal_plt": 0.7,
        "abnormal_hb": 0.5,
        "abnormal_redcellwidth": 0.4,
        "yesterday_Usage": 0.12,
        "lastWeek_Usage": 0.02,
    }


@dataclass(frozen=True)
class SynthConfig:
    start: dt.date = dt.date(2010, 1, 1)
    end: dt.date = dt.date(2018, 12, 31)
    overall_mean: float = 17.90
    overall_sd: float = 7.05
    weekday_mean: float = 21.20
    weekend_mean: float = 12.37
    monthly_means: dict[int, float] = field(default_factory=_default_monthly_means)
    dow_means: tuple[float, ...] = field(default_factory=_default_dow_means)
    holiday_effects: dict[str, float] = field(default_factory=_default_holiday_effects)
    received_inflation: float = 1.0
    covariate_model: dict[str, float] = field(default_factory=_default_covariates)
    noise_sd: float = 2.28
    level_bump: float = 7.5
    bump_start: dt.date = dt.date(2016, 1, 1)
    bump_end: dt.date = dt.date(2017, 12, 31)
    seed: int = 0

    def __post_init__(self):
        if self.end < self.start:
            raise ValueError("end date precedes start date")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")
        if len(self.dow_means) != 7:
            raise ValueError("dow_means needs 7 entries")
        if set(self.monthly_means) != set(range(1, 13)):
            raise ValueError("monthly_means needs entries for months 1..12")
        if self.received_inflation < 0:
            raise ValueError("received_inflation must be nonnegative")
        for key in self.covariate_model:
            if not (key.startswith("abnormal_") or key in ("yesterday_Usage", "lastWeek_Usage")):
                raise ValueError(f"unsupported covariate {key!r}")
            if key.startswith("abnormal_") and key[len("abnormal_"):] not in LABS:
                raise ValueError(f"unknown lab in covariate {key!r}")


@dataclass
class GroundTruthLog:
    dates: list[dt.date]
    base: np.ndarray
    month: np.ndarray
    dow: np.ndarray
    holiday: np.ndarray
    covariate: np.ndarray
    level: np.ndarray
    noise: np.ndarray
    intensity: np.ndarray
    demand: np.ndarray
    received: np.ndarray
    abnormal_counts: np.ndarray  # (n_days, 14) latent planted counts, pre-clip
    weights: dict[str, float]


@dataclass
class PlantReport:
    weights: dict[str, float]
    dates: list[dt.date]
    components: dict[str, np.ndarray]


@dataclass
class SynthResult:
    records: list[TransfusionRecord]
    received: dict[dt.date, int]
    aggregates: list[DailyAggregate]
    truth: GroundTruthLog


def generate_daily(config: SynthConfig) -> GroundTruthLog:
    """Latent process and daily counts only, no granular materialization."""
    days = date_range(config.start, config.end)
    n = len(days)
    rng = np.random.default_rng([config.seed, 0])

    # fixed draw order keeps the stream identical to generate()'s
    acuity_eps = rng.standard_normal(n)
    count_eps = rng.standard_normal((n, len(LABS)))
    noise = rng.standard_normal(n) * config.noise_sd
    received_eps = rng.standard_normal(n) * BULLWHIP_SD

    acuity = np.empty(n)
    prev = 0.0
    innov_sd = np.sqrt(1.0 - ACUITY_RHO ** 2)
    for i in range(n):
        prev = ACUITY_RHO * prev + innov_sd * acuity_eps[i]
        acuity[i] = prev

    bases = np.array([LAB_PROFILE[lab][0] for lab in LABS])
    scales = np.array([LAB_PROFILE[lab][1] for lab in LABS])
    count_sds = np.array([LAB_PROFILE[lab][2] for lab in LABS])
    counts = np.maximum(
        0.0, np.rint(bases + np.outer(acuity, scales) + count_eps * count_sds)
    )

    month_means = np.array([config.monthly_means[d.month] for d in days])
    month_comp = month_means - np.mean(list(config.monthly_means.values()))
    dow_idx = np.array([d.weekday() for d in days])
    dow_centered = np.asarray(config.dow_means) - np.mean(config.dow_means)
    dow_comp = dow_centered[dow_idx]

    holiday_comp = np.zeros(n)
    lookup = make_holiday_calendar(range(config.start.year, config.end.year + 1)).lookup()
    for i, d in enumerate(days):
        name = lookup.get(d)
        if name is not None:
            holiday_comp[i] = config.holiday_effects.get(name, 0.0)

    in_bump = np.array([config.bump_start <= d <= config.bump_end for d in days])
    level_comp = np.where(in_bump, config.level_bump, 0.0)
    level_comp = level_comp - level_comp.mean()

    lab_weights = np.zeros(len(LABS))
    for key, w in config.covariate_model.items():
        if key.startswith("abnormal_"):
            lab_weights[LABS.index(key[len("abnormal_"):])] = w
    w_yesterday = config.covariate_model.get("yesterday_Usage", 0.0)
    w_lastweek = config.covariate_model.get("lastWeek_Usage", 0.0)

    lab_part = (counts - bases) @ lab_weights

    # holidays drag the realized mean below the target; raising the base
    # by the mean holiday effect cancels that exactly, including through
    # the lag-feedback terms, which reference the target mean directly
    base = np.full(n, config.overall_mean - holiday_comp.mean())
    demand = np.empty(n, dtype=np.int64)
    covariate = np.empty(n)
    intensity = np.empty(n)
    mu = config.overall_mean
    history = [mu] * 7  # demand lags, most recent last
    for i in range(n):
        lag_part = w_yesterday * (history[-1] - mu) + w_lastweek * (sum(history) - 7 * mu)
        covariate[i] = lab_part[i] + lag_part
        intensity[i] = (
            base[i] + month_comp[i] + dow_comp[i] + holiday_comp[i]
            + covariate[i] + level_comp[i] + noise[i]
        )
        demand[i] = max(0, int(round(intensity[i])))
        history.pop(0)
        history.append(float(demand[i]))

    if np.all(intensity < 0):
        raise ValueError("infeasible config: latent intensity is negative everywhere")

    # the supplier ships nothing on Sundays; Monday restocks yesterday's
    # consumption plus a backlog spike, other days track the previous
    # day's consumption with order noise
    received = np.empty(n, dtype=np.int64)
    prev_demand = float(round(mu))
    for i in range(n):
        wd = int(dow_idx[i])
        if wd == 6:
            received[i] = 0
        else:
            mod = MONDAY_SPIKE if wd == 0 else 0.0
            raw = prev_demand + config.received_inflation * (mod + received_eps[i])
            received[i] = max(0, int(round(raw)))
        prev_demand = float(demand[i])

    return GroundTruthLog(
        dates=days,
        base=base,
        month=month_comp,
        dow=dow_comp,
        holiday=holiday_comp,
        covariate=covariate,
        level=level_comp,
        noise=noise,
        intensity=intensity,
        demand=demand,
        received=received,
        abnormal_counts=counts.astype(np.int64),
        weights=dict(config.covariate_model),
    )


def generate(config: SynthConfig) -> SynthResult:
    """Full dataset: granular records, received series, exact aggregates."""
    truth = generate_daily(config)
    rng = np.random.default_rng([config.seed, 1])

    records: list[TransfusionRecord] = []
    for i, day in enumerate(truth.dates):
        d = int(truth.demand[i])
        if d == 0:
            continue
        # units per patient are geometric (most patients take one unit,
        # a tail takes several), so the day's patient census is a noisy
        # reading of the day's demand rather than a fixed fraction of it
        doses = rng.geometric(0.7, size=d)
        cuts = np.cumsum(doses)
        n_patients = int(np.searchsorted(cuts, d, side="left")) + 1
        patient_of_record = np.searchsorted(cuts, np.arange(d), side="right")
        patient_ids = [f"{day.isoformat()}-p{j:02d}" for j in range(n_patients)]
        locations = rng.choice(len(LOCATIONS), size=n_patients, p=LOCATION_PROBS)
        perm = rng.permutation(n_patients)

        flags_by_patient = [dict.fromkeys(LABS, "normal") for _ in range(n_patients)]
        for k, lab in enumerate(LABS):
            c = min(int(truth.abnormal_counts[i, k]), n_patients)
            for j in perm[:c]:
                flags_by_patient[j][lab] = "abnormal"
        miss = rng.random(size=(n_patients, len(LABS))) < MISSING_FLAG_RATE
        for j in range(n_patients):
            for k, lab in enumerate(LABS):
                if miss[j, k] and flags_by_patient[j][lab] == "normal":
                    flags_by_patient[j][lab] = "missing"

        for r in range(d):
            j = int(patient_of_record[r])
            records.append(
                TransfusionRecord(
                    date=day,
                    patient_id=patient_ids[j],
                    location=LOCATIONS[int(locations[j])],
                    lab_flags=flags_by_patient[j],
                )
            )

    received_map = {day: int(truth.received[i]) for i, day in enumerate(truth.dates)}
    aggregates = aggregate_daily(records, received_map, (config.start, config.end))
    return SynthResult(
        records=records, received=received_map, aggregates=aggregates, truth=truth
    )


def plant_report(truth: GroundTruthLog) -> PlantReport:
    """Oracle tables: planted weights and the per-day latent components."""
    return PlantReport(
        weights=dict(truth.weights),
        dates=list(truth.dates),
        components={
            "base": truth.base.copy(),
            "month": truth.month.copy(),
            "dow": truth.dow.copy(),
            "holiday": truth.holiday.copy(),
            "covariate": truth.covariate.copy(),
            "level": truth.level.copy(),
            "noise": truth.noise.copy(),
            "intensity": truth.intensity.copy(),
        },
    )


def write_truth_log(truth: GroundTruthLog, sink) -> None:
    """Structured text dump of the latent components, for test oracles."""
    if isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__"):
        with open(sink, "w", encoding="utf-8", newline="") as fh:
            write_truth_log(truth, fh)
            return
    sink.write("date,base,month,dow,holiday,covariate,level,noise,intensity,demand,received\n")
    for i, day in enumerate(truth.dates):
        parts = [
            day.isoformat(),
            repr(float(truth.base[i])),
            repr(float(truth.month[i])),
            repr(float(truth.dow[i])),
            repr(float(truth.holiday[i])),
            repr(float(truth.covariate[i])),
            repr(float(truth.level[i])),
            repr(float(truth.noise[i])),
            repr(float(truth.intensity[i])),
            str(int(truth.demand[i])),
            str(int(truth.received[i])),
        ]
        sink.write(",".join(parts) + "\n")
