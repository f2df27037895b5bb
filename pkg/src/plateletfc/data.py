"""Granular transfusion records, daily aggregation, and feature engineering.

The pipeline is: granular per-transfusion rows -> one aggregate row per
calendar day -> a lagged/one-hot feature matrix aligned to the daily demand
target -> standardized train/test splits for the two evaluation scenarios.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from datetime import date, timedelta
from typing import Iterable, Mapping, Sequence

import numpy as np

LABS = (
    "ALP",
    "MPV",
    "hematocrit",
    "PO2",
    "creatinine",
    "INR",
    "MCHb",
    "MCHb_conc",
    "hb",
    "mcv",
    "plt",
    "redcellwidth",
    "wbc",
    "ALC",
)

LOCATIONS = (
    "GeneralMedicine",
    "Hematology",
    "IntensiveCare",
    "CardiovascularSurgery",
    "Pediatric",
    "Other",
)

DAY_NAMES = (
    "Monday",
    "Tuesday",
    "Wednesday",
    "Thursday",
    "Friday",
    "Saturday",
    "Sunday",
)

# Model features: 14 abnormal-lab counts, 5 named locations (Other is
# tracked in aggregates but is not a model variable), 7 day-of-week
# indicators, and 3 lag features. 29 columns total.
FEATURE_NAMES = (
    tuple(f"abnormal_{lab}" for lab in LABS)
    + tuple(f"location_{loc}" for loc in LOCATIONS[:-1])
    + DAY_NAMES
    + ("lastWeek_Usage", "yesterday_Usage", "yesterday_ReceivedUnits")
)

LAB_FLAG_STATES = ("normal", "abnormal", "missing")


class IngestError(ValueError):
    """Raised for malformed granular input.

    ``line`` is the 1-based line number for row-level problems and None for
    file-level (fatal) ones such as a missing required column.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class TransfusionRecord:
    """One platelet transfusion event."""

    date: date
    patient_id: str
    location: str
    lab_flags: Mapping[str, str]

    def __post_init__(self):
        if self.location not in LOCATIONS:
            raise ValueError(f"unknown location {self.location!r}")
        if set(self.lab_flags) != set(LABS):
            raise ValueError("lab_flags must contain exactly the 14 declared labs")
        for lab, state in self.lab_flags.items():
            if state not in LAB_FLAG_STATES:
                raise ValueError(f"bad flag {state!r} for lab {lab}")


@dataclass(frozen=True)
class DailyAggregate:
    """Per-day demand, received units, and aggregated patient covariates."""

    date: date
    units_transfused: int
    units_received: int
    abnormal_counts: Mapping[str, int]
    location_counts: Mapping[str, int]

    def __post_init__(self):
        if self.units_transfused < 0 or self.units_received < 0:
            raise ValueError("unit counts must be nonnegative")
        for name, count in self.abnormal_counts.items():
            if count < 0:
                raise ValueError(f"negative abnormal count for {name}")


@dataclass
class FeatureMatrix:
    """Feature rows aligned to a daily demand target.

    ``values`` is (n_days, 29) in FEATURE_NAMES order. ``col_means`` and
    ``col_scales`` are populated once the matrix has been standardized;
    until then the values are raw counts/indicators.
    """

    dates: list[date]
    feature_names: tuple[str, ...]
    values: np.ndarray
    target: np.ndarray
    col_means: np.ndarray | None = None
    col_scales: np.ndarray | None = None

    @property
    def standardized(self) -> bool:
        return self.col_means is not None

    def validate(self):
        n = len(self.dates)
        if self.values.shape != (n, len(self.feature_names)):
            raise ValueError("values shape does not match dates/features")
        if self.target.shape != (n,):
            raise ValueError("target length does not match dates")
        for a, b in zip(self.dates, self.dates[1:]):
            if (b - a).days != 1:
                raise ValueError(f"dates must be consecutive; gap after {a}")


@dataclass(frozen=True)
class ScenarioSplit:
    """A named train/test date partition; test starts the day after train ends."""

    name: str
    train_start: date
    train_end: date
    test_start: date
    test_end: date

    def __post_init__(self):
        if self.test_start != self.train_end + timedelta(days=1):
            raise ValueError("test range must start the day after train ends")
        if self.train_start > self.train_end or self.test_start > self.test_end:
            raise ValueError("date ranges must be nonempty")


TWO_YEAR = ScenarioSplit(
    "TwoYear", date(2016, 1, 1), date(2017, 12, 31), date(2018, 1, 1), date(2018, 12, 31)
)
EIGHT_YEAR = ScenarioSplit(
    "EightYear", date(2010, 1, 1), date(2017, 12, 31), date(2018, 1, 1), date(2018, 12, 31)
)

SCENARIOS = {s.name: s for s in (TWO_YEAR, EIGHT_YEAR)}

_REQUIRED_COLUMNS = ("date", "patient_id", "location") + tuple(f"lab_{lab}" for lab in LABS)


def _parse_flag(raw: str | None) -> str:
    if raw is None:
        return "missing"
    value = raw.strip().lower()
    if value in ("normal", "abnormal"):
        return value
    return "missing"


def ingest_granular(source) -> list[TransfusionRecord]:
    """Parse delimited granular transfusion rows into records.

    ``source`` is a path or an open text stream. The header must declare
    the columns date, patient_id, location and lab_<name> for each of the
    14 labs. Lab cells that are blank or not recognizably normal/abnormal
    become ``missing``; a malformed date or unknown location raises an
    IngestError carrying the offending line number.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            return ingest_granular(fh)

    reader = csv.DictReader(source)
    if reader.fieldnames is None:
        raise IngestError("empty input: no header row")
    missing = [c for c in _REQUIRED_COLUMNS if c not in reader.fieldnames]
    if missing:
        raise IngestError(f"missing required columns: {', '.join(missing)}")

    records = []
    for row in reader:
        line = reader.line_num
        try:
            day = date.fromisoformat(row["date"].strip())
        except (ValueError, AttributeError):
            raise IngestError(f"malformed date {row['date']!r}", line=line) from None
        location = (row["location"] or "").strip()
        if location not in LOCATIONS:
            raise IngestError(f"unknown location {location!r}", line=line)
        flags = {lab: _parse_flag(row.get(f"lab_{lab}")) for lab in LABS}
        records.append(
            TransfusionRecord(
                date=day,
                patient_id=(row["patient_id"] or "").strip(),
                location=location,
                lab_flags=flags,
            )
        )
    return records


def read_received(source) -> dict[date, int]:
    """Read the two-column (date, count) received-units file."""
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            return read_received(fh)
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None:
        raise IngestError("empty received-units input")
    out: dict[date, int] = {}
    for row in reader:
        if not row:
            continue
        out[date.fromisoformat(row[0].strip())] = int(row[1])
    return out


def date_range(start: date, end: date) -> list[date]:
    """Inclusive list of consecutive days from start to end."""
    if end < start:
        raise ValueError("end date precedes start date")
    return [start + timedelta(days=i) for i in range((end - start).days + 1)]


def aggregate_daily(
    records: Sequence[TransfusionRecord],
    received: Mapping[date, int],
    span: tuple[date, date],
) -> list[DailyAggregate]:
    """Aggregate granular records to one row per calendar day.

    A patient is counted abnormal for a lab if any of their records that
    day carries an abnormal flag; location counts are distinct patients
    per location. Days without transfusions yield all-zero rows so the
    daily series stays contiguous.
    """
    start, end = span
    days = date_range(start, end)
    by_day: dict[date, list[TransfusionRecord]] = {d: [] for d in days}
    for rec in records:
        if rec.date not in by_day:
            raise ValueError(f"record date {rec.date} outside declared range")
        by_day[rec.date].append(rec)

    missing_received = [d for d in days if d not in received]
    if missing_received:
        raise ValueError(f"received map missing {len(missing_received)} dates, first {missing_received[0]}")

    out = []
    for day in days:
        recs = by_day[day]
        abnormal = {}
        for lab in LABS:
            abnormal[lab] = len({r.patient_id for r in recs if r.lab_flags[lab] == "abnormal"})
        loc_counts = {}
        for loc in LOCATIONS:
            loc_counts[loc] = len({r.patient_id for r in recs if r.location == loc})
        out.append(
            DailyAggregate(
                date=day,
                units_transfused=len(recs),
                units_received=int(received[day]),
                abnormal_counts=abnormal,
                location_counts=loc_counts,
            )
        )
    return out


def demand_series(daily: Sequence[DailyAggregate]) -> tuple[list[date], np.ndarray]:
    """Daily demand as (dates, float array), for the univariate models."""
    return [d.date for d in daily], np.array([d.units_transfused for d in daily], dtype=float)


def build_features(daily: Sequence[DailyAggregate]) -> FeatureMatrix:
    """Assemble the 29-column feature matrix from daily aggregates.

    The first 7 days are dropped because the lag features are undefined
    there. lastWeek_Usage is the trailing 7-day demand sum ending the day
    before; yesterday_* are one-day lags.
    """
    if len(daily) < 8:
        raise ValueError("need at least 8 consecutive days of aggregates")
    daily = sorted(daily, key=lambda d: d.date)
    for a, b in zip(daily, daily[1:]):
        if (b.date - a.date).days != 1:
            raise ValueError(f"daily aggregates must be consecutive; gap after {a.date}")

    transfused = np.array([d.units_transfused for d in daily], dtype=float)
    received = np.array([d.units_received for d in daily], dtype=float)

    rows = []
    dates = []
    target = []
    for i in range(7, len(daily)):
        d = daily[i]
        row = [float(d.abnormal_counts[lab]) for lab in LABS]
        row += [float(d.location_counts[loc]) for loc in LOCATIONS[:-1]]
        dow = [0.0] * 7
        dow[d.date.weekday()] = 1.0
        row += dow
        row.append(float(transfused[i - 7 : i].sum()))
        row.append(float(transfused[i - 1]))
        row.append(float(received[i - 1]))
        rows.append(row)
        dates.append(d.date)
        target.append(float(d.units_transfused))

    m = FeatureMatrix(
        dates=dates,
        feature_names=FEATURE_NAMES,
        values=np.array(rows, dtype=float),
        target=np.array(target, dtype=float),
    )
    m.validate()
    return m


def standardize(
    m: FeatureMatrix, stats: tuple[np.ndarray, np.ndarray] | None = None
) -> FeatureMatrix:
    """Center and scale each column to unit variance (population divisor N).

    With ``stats`` absent the statistics are computed from ``m`` itself
    (training mode); test matrices must be passed the training stats.
    """
    if m.standardized:
        raise ValueError("matrix is already standardized")
    if stats is None:
        means = m.values.mean(axis=0)
        scales = m.values.std(axis=0)  # ddof=0, population form
        zero = np.flatnonzero(scales == 0.0)
        if zero.size:
            names = ", ".join(m.feature_names[j] for j in zero)
            raise ValueError(f"zero-variance column(s) in training mode: {names}")
    else:
        means, scales = np.asarray(stats[0], dtype=float), np.asarray(stats[1], dtype=float)
        if means.shape != (len(m.feature_names),) or scales.shape != means.shape:
            raise ValueError("stats shape does not match feature count")

    return FeatureMatrix(
        dates=list(m.dates),
        feature_names=m.feature_names,
        values=(m.values - means) / scales,
        target=m.target.copy(),
        col_means=means.copy(),
        col_scales=scales.copy(),
    )


def destandardize(m: FeatureMatrix) -> FeatureMatrix:
    """Invert standardization, recovering raw column values."""
    if not m.standardized:
        raise ValueError("matrix is not standardized")
    return FeatureMatrix(
        dates=list(m.dates),
        feature_names=m.feature_names,
        values=m.values * m.col_scales + m.col_means,
        target=m.target.copy(),
    )


def _slice_by_range(m: FeatureMatrix, start: date, end: date) -> FeatureMatrix:
    idx = [i for i, d in enumerate(m.dates) if start <= d <= end]
    if not idx:
        raise ValueError(f"no feature rows in range {start}..{end}")
    if m.dates[idx[0]] > start or m.dates[idx[-1]] < end:
        raise ValueError(f"feature matrix does not cover {start}..{end}")
    sel = np.array(idx)
    return FeatureMatrix(
        dates=[m.dates[i] for i in idx],
        feature_names=m.feature_names,
        values=m.values[sel],
        target=m.target[sel],
    )


def split_scenario(m: FeatureMatrix, s: ScenarioSplit) -> tuple[FeatureMatrix, FeatureMatrix]:
    """Partition rows into the scenario's train/test ranges and standardize.

    The train matrix provides the standardization statistics; the test
    matrix is transformed with those same statistics.
    """
    if m.standardized:
        raise ValueError("split expects an unstandardized matrix")
    train_raw = _slice_by_range(m, s.train_start, s.train_end)
    test_raw = _slice_by_range(m, s.test_start, s.test_end)
    train = standardize(train_raw)
    test = standardize(test_raw, stats=(train.col_means, train.col_scales))
    return train, test


_EXPORT_COLUMNS = (
    ("date", "units_transfused", "units_received")
    + tuple(f"abnormal_{lab}" for lab in LABS)
    + tuple(f"location_{loc}" for loc in LOCATIONS)
)


def export_daily(daily: Sequence[DailyAggregate], sink) -> None:
    """Write daily aggregates as delimited text, fixed column order."""
    if isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__"):
        with open(sink, "w", encoding="utf-8", newline="") as fh:
            export_daily(daily, fh)
            return
    writer = csv.writer(sink)
    writer.writerow(_EXPORT_COLUMNS)
    for d in daily:
        row = [d.date.isoformat(), d.units_transfused, d.units_received]
        row += [d.abnormal_counts[lab] for lab in LABS]
        row += [d.location_counts[loc] for loc in LOCATIONS]
        writer.writerow(row)


def write_granular(records: Sequence[TransfusionRecord], sink) -> None:
    """Write granular records in the format ingest_granular reads back."""
    if isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__"):
        with open(sink, "w", encoding="utf-8", newline="") as fh:
            write_granular(records, fh)
            return
    writer = csv.writer(sink)
    writer.writerow(_REQUIRED_COLUMNS)
    for r in records:
        row = [r.date.isoformat(), r.patient_id, r.location]
        row += [r.lab_flags[lab] if r.lab_flags[lab] != "missing" else "" for lab in LABS]
        writer.writerow(row)


def write_received(received: Mapping[date, int], sink) -> None:
    if isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__"):
        with open(sink, "w", encoding="utf-8", newline="") as fh:
            write_received(received, fh)
            return
    writer = csv.writer(sink)
    writer.writerow(["date", "units_received"])
    for day in sorted(received):
        writer.writerow([day.isoformat(), received[day]])
