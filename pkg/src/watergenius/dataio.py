"""Demand data ingestion, min-max scaling, lag windows and chronological splits.

Demand CSV files carry a ``date,demand_ml`` header with ISO dates; population
files carry ``year,population``. Rows whose demand is absent are dropped and
counted, and no lag window is ever built across the resulting gap.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from datetime import date, timedelta

import numpy as np

from .numerics import Matrix

MISSING_TOKENS = frozenset({"", "na", "n/a", "nan", "null", "none", "-", "?"})

# Reference split: 1470 / 1005 / 995 patterns out of 3470.
DEFAULT_FRACTIONS = (1470 / 3470, 1005 / 3470, 995 / 3470)

DEFAULT_START = date(1997, 1, 4)


class DataError(ValueError):
    """Raised for malformed, inconsistent or insufficient input data."""


@dataclass(frozen=True)
class DemandSeries:
    """Daily demand observations (megaliters) plus mid-year population estimates."""

    dates: tuple[date, ...]
    demands: np.ndarray
    populations: dict[int, int]
    discarded: int = 0

    def __post_init__(self):
        demands = np.asarray(self.demands, dtype=np.float64)
        object.__setattr__(self, "demands", demands)
        if len(self.dates) != demands.shape[0]:
            raise DataError("dates and demands differ in length")
        for prev, cur in zip(self.dates, self.dates[1:]):
            if cur <= prev:
                raise DataError(f"observation dates not strictly increasing at {cur}")
        if demands.size and not np.all(demands > 0):
            raise DataError("demands must be strictly positive")
        missing = sorted({d.year for d in self.dates} - set(self.populations))
        if missing:
            raise DataError(f"no population estimate for year(s) {missing}")

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def day_numbers(self) -> np.ndarray:
        return np.array([d.toordinal() for d in self.dates], dtype=np.int64)


@dataclass(frozen=True)
class Scaler:
    """Per-column min-max bounds; ``x_min``/``x_max`` broadcast over the last axis."""

    x_min: np.ndarray
    x_max: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.x_min, dtype=np.float64))
        hi = np.atleast_1d(np.asarray(self.x_max, dtype=np.float64))
        if lo.shape != hi.shape:
            raise DataError("scaler bounds differ in shape")
        bad = np.flatnonzero(~(hi > lo))
        if bad.size:
            raise DataError(f"degenerate column(s) {bad.tolist()}: x_max must exceed x_min")
        object.__setattr__(self, "x_min", lo)
        object.__setattr__(self, "x_max", hi)

    def scale(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        return (values - self.x_min) / (self.x_max - self.x_min)

    def unscale(self, scaled) -> np.ndarray:
        scaled = np.asarray(scaled, dtype=np.float64)
        return scaled * (self.x_max - self.x_min) + self.x_min

    def column(self, j: int) -> "Scaler":
        return Scaler(self.x_min[[j]], self.x_max[[j]])


def normalize(values, scaler: Scaler | None = None) -> tuple[np.ndarray, Scaler]:
    """Min-max scale ``values`` into [0, 1].

    When ``scaler`` is None the bounds are taken from ``values`` itself
    (column-wise for 2-D input). Returns the scaled values and the scaler used.
    """
    values = np.asarray(values, dtype=np.float64)
    if scaler is None:
        if values.shape[0] < 2:
            raise DataError("need at least two values to fit a scaler")
        scaler = Scaler(values.min(axis=0), values.max(axis=0))
    return scaler.scale(values), scaler


def denormalize(scaled, scaler: Scaler) -> np.ndarray:
    """Invert :func:`normalize`."""
    return scaler.unscale(scaled)


@dataclass(frozen=True)
class PatternSet:
    """Supervised lag patterns.

    ``scaler`` is None for raw patterns. Once normalized it covers the input
    columns followed by the target column, so ``scaler.column(-1)`` maps model
    outputs back to megaliters.
    """

    inputs: Matrix
    targets: Matrix
    lag_count: int
    includes_population: bool
    dates: tuple[date, ...] = ()
    scaler: Scaler | None = None

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=np.float64)
        targets = np.asarray(self.targets, dtype=np.float64)
        if targets.ndim == 1:
            targets = targets[:, None]
        if inputs.ndim != 2 or targets.ndim != 2 or targets.shape[1] != 1:
            raise DataError("inputs must be 2-D and targets a single column")
        if inputs.shape[0] != targets.shape[0]:
            raise DataError(
                f"{inputs.shape[0]} input rows but {targets.shape[0]} targets"
            )
        expected = self.lag_count + (1 if self.includes_population else 0)
        if inputs.shape[1] != expected:
            raise DataError(f"expected {expected} input columns, got {inputs.shape[1]}")
        if self.dates and len(self.dates) != inputs.shape[0]:
            raise DataError("one date per pattern required")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.inputs.shape[1]

    def to_ml(self, values) -> np.ndarray:
        """Map target-scale values (e.g. predictions) back to megaliters."""
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        if self.scaler is None:
            return values
        return self.scaler.column(-1).unscale(values)

    def targets_ml(self) -> np.ndarray:
        return self.to_ml(self.targets)

    def subset(self, idx) -> "PatternSet":
        idx = np.asarray(idx)
        dates = tuple(self.dates[i] for i in idx) if self.dates else ()
        return replace(self, inputs=self.inputs[idx], targets=self.targets[idx], dates=dates)


@dataclass(frozen=True)
class SplitSet:
    train: PatternSet
    validation: PatternSet
    test: PatternSet
    bounds: tuple[tuple[int, int], ...] = field(default=())


def _parse_date(text: str, lineno: int, path) -> date:
    try:
        return date.fromisoformat(text.strip())
    except ValueError:
        raise DataError(f"{path}:{lineno}: malformed date {text!r}") from None


def _check_header(reader, expected: list[str], path):
    try:
        header = next(reader)
    except StopIteration:
        raise DataError(f"{path}: empty file") from None
    if [h.strip().lower() for h in header] != expected:
        raise DataError(f"{path}:1: expected header {','.join(expected)}, got {header}")


def read_population_csv(path) -> dict[int, int]:
    populations: dict[int, int] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        _check_header(reader, ["year", "population"], path)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                year, pop = int(row[0]), int(row[1])
            except ValueError:
                raise DataError(f"{path}:{lineno}: malformed number in {row}") from None
            if year in populations:
                raise DataError(f"{path}:{lineno}: duplicate year {year}")
            if pop <= 0:
                raise DataError(f"{path}:{lineno}: population must be positive")
            populations[year] = pop
    if not populations:
        raise DataError(f"{path}: no population rows")
    years = sorted(populations)
    gaps = sorted(set(range(years[0], years[-1] + 1)) - set(years))
    if gaps:
        raise DataError(f"{path}: population years missing {gaps}")
    return populations


def load_csv(demand_path, population_path) -> DemandSeries:
    """Read a demand CSV and a population CSV into a :class:`DemandSeries`.

    Rows with an absent demand value (blank, NA, NaN, ...) are discarded and
    counted in ``DemandSeries.discarded``.
    """
    populations = read_population_csv(population_path)
    dates: list[date] = []
    demands: list[float] = []
    discarded = 0
    with open(demand_path, newline="") as fh:
        reader = csv.reader(fh)
        _check_header(reader, ["date", "demand_ml"], demand_path)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) > 2:
                raise DataError(f"{demand_path}:{lineno}: expected 2 fields, got {len(row)}")
            day = _parse_date(row[0], lineno, demand_path)
            raw = row[1].strip() if len(row) == 2 else ""
            if raw.lower() in MISSING_TOKENS:
                discarded += 1
                continue
            try:
                value = float(raw.replace(" ", ""))
            except ValueError:
                raise DataError(f"{demand_path}:{lineno}: malformed demand {raw!r}") from None
            if not math.isfinite(value) or value <= 0:
                raise DataError(f"{demand_path}:{lineno}: demand must be positive, got {raw!r}")
            if dates and day <= dates[-1]:
                raise DataError(f"{demand_path}:{lineno}: date {day} is not after {dates[-1]}")
            dates.append(day)
            demands.append(value)
    if not dates:
        raise DataError(f"{demand_path}: no demand observations")
    try:
        return DemandSeries(tuple(dates), np.array(demands), populations, discarded)
    except DataError as exc:
        raise DataError(f"{demand_path}: {exc}") from None


def write_csv(series: DemandSeries, demand_path, population_path) -> None:
    """Write ``series`` in the same formats :func:`load_csv` reads."""
    with open(demand_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "demand_ml"])
        for d, v in zip(series.dates, series.demands):
            w.writerow([d.isoformat(), repr(float(v))])
    with open(population_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["year", "population"])
        for year in sorted(series.populations):
            w.writerow([year, series.populations[year]])


def build_patterns(series: DemandSeries, lag_count: int, include_population: bool = True) -> PatternSet:
    """Sliding-window patterns: demands at t-lag..t-1 (+ population) -> demand at t.

    Windows must cover ``lag_count + 1`` consecutive calendar days, so any
    window touching a discarded date is skipped. The population input is the
    estimate for the target day's year. Values are left raw; see
    :func:`split_chronological` for scaling.
    """
    if lag_count < 1:
        raise DataError("lag_count must be at least 1")
    n = len(series)
    if n <= lag_count:
        raise DataError(f"series of {n} points is too short for {lag_count} lags")
    days = series.day_numbers
    ends = np.arange(lag_count, n)
    contiguous = (days[ends] - days[ends - lag_count]) == lag_count
    ends = ends[contiguous]
    if ends.size == 0:
        raise DataError("no gap-free window of the requested length")
    offsets = np.arange(-lag_count, 0)
    inputs = series.demands[ends[:, None] + offsets[None, :]]
    if include_population:
        pop = np.array(
            [series.populations[series.dates[t].year] for t in ends], dtype=np.float64
        )
        inputs = np.column_stack([inputs, pop])
    targets = series.demands[ends][:, None]
    dates = tuple(series.dates[t] for t in ends)
    return PatternSet(inputs, targets, lag_count, include_population, dates)


def split_sizes(n: int, fractions=DEFAULT_FRACTIONS) -> tuple[int, int, int]:
    """Contiguous split sizes for ``n`` items; the test split takes the remainder."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3:
        raise DataError("need exactly three split fractions")
    if any(not 0.0 < f < 1.0 for f in fractions):
        raise DataError(f"split fractions must lie in (0, 1), got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise DataError(f"split fractions must sum to 1, got {sum(fractions)}")
    n_train = int(round(n * fractions[0]))
    n_val = int(round(n * fractions[1]))
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise DataError(f"{n} patterns cannot fill three nonempty splits {fractions}")
    return n_train, n_val, n_test


def split_chronological(patterns: PatternSet, fractions=DEFAULT_FRACTIONS) -> SplitSet:
    """Split raw patterns train -> validation -> test and scale them.

    The scaler is fitted on the training split alone (inputs and target, per
    column) and reused for validation and test, which may therefore stray
    slightly outside [0, 1].
    """
    if patterns.scaler is not None:
        raise DataError("split_chronological expects raw (unscaled) patterns")
    n_train, n_val, n_test = split_sizes(len(patterns), fractions)
    bounds = ((0, n_train), (n_train, n_train + n_val), (n_train + n_val, len(patterns)))
    train = patterns.subset(np.arange(*bounds[0]))
    table = np.column_stack([train.inputs, train.targets])
    try:
        _, scaler = normalize(table)
    except DataError as exc:
        raise DataError(f"training split cannot be scaled: {exc}") from None

    def scaled(part: PatternSet) -> PatternSet:
        table = scaler.scale(np.column_stack([part.inputs, part.targets]))
        return replace(part, inputs=table[:, :-1], targets=table[:, -1:], scaler=scaler)

    parts = [scaled(patterns.subset(np.arange(lo, hi))) for lo, hi in bounds]
    return SplitSet(*parts, bounds=bounds)


def synthesize_series(
    rng: np.random.Generator,
    days: int = 3473,
    base_demand: float = 2300.0,
    growth: float = 0.03,
    weekly_amp: float = 0.04,
    annual_amp: float = 0.10,
    noise_sd: float = 50.0,
    pop_start: int = 8_324_886,
    pop_growth_rate: float = 0.0313,
    start: date = DEFAULT_START,
) -> DemandSeries:
    """Generate a realistic daily demand series.

    demand(t) = base * (1 + growth)**(t/365)
                * (1 + weekly_amp*sin(2*pi*t/7) + annual_amp*sin(2*pi*t/365.25))
                + N(0, noise_sd**2)

    Population grows geometrically from ``pop_start`` in the start year.
    """
    if days < 30:
        raise DataError("days must be at least 30")
    if min(weekly_amp, annual_amp, noise_sd) < 0:
        raise DataError("amplitudes and noise must be nonnegative")
    if base_demand <= 0:
        raise DataError("base_demand must be positive")
    t = np.arange(days, dtype=np.float64)
    trend = base_demand * (1.0 + growth) ** (t / 365.0)
    season = 1.0 + weekly_amp * np.sin(2 * np.pi * t / 7.0) + annual_amp * np.sin(2 * np.pi * t / 365.25)
    demand = trend * season
    if noise_sd > 0:
        demand = demand + rng.normal(0.0, noise_sd, size=days)
    if not np.all(demand > 0):
        raise DataError("synthetic parameters produce nonpositive demand")
    dates = tuple(start + timedelta(days=int(k)) for k in range(days))
    years = range(dates[0].year, dates[-1].year + 1)
    populations = {
        y: int(round(pop_start * (1.0 + pop_growth_rate) ** (y - dates[0].year))) for y in years
    }
    return DemandSeries(dates, demand, populations)
