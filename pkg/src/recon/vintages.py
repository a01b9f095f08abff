"""Ingestion and alignment of real-time data vintages.

A vintage file is a long-format CSV with one published estimate per row::

    series,period,release,value
    0,2003Q1,1,2.1
    0,2003Q1,2,2.4
    1,2003Q1,2,NA

``release`` is the ordinal position of the estimate in the chosen release
schedule (1 = first estimate used), not the number of months elapsed.
"""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

from .exceptions import InputError

HEADER = ("series", "period", "release", "value")
N_SERIES = 2

_PERIOD_RE = re.compile(r"^(\d{4})Q([1-4])$")

# Schedule used for the U.S. expenditure/income comparison. The income side
# has no Advance estimate; its first available value sits at release 2. For
# fourth quarters the first income estimate arrives with the Third estimate,
# one month later than other quarters, but it is stored in the same slot.
BEA_RELEASE_SCHEDULE: dict[int, tuple[str, ...]] = {
    0: ("Advance", "Third", "12th", "24th"),
    1: ("Advance (not published)", "Second/Third", "12th", "24th"),
}
BEA_SCHEDULE_NOTES = (
    "series 1 release 2 holds the Second estimate for Q1-Q3 and the Third "
    "estimate for Q4 (later calendar arrival, same ordinal slot)"
)


def parse_period(text: str) -> pd.Period:
    """Parse ``YYYYQn`` into a quarterly :class:`pandas.Period`."""
    m = _PERIOD_RE.match(text.strip())
    if m is None:
        raise InputError(f"malformed period {text!r}; expected YYYYQn")
    return pd.Period(year=int(m.group(1)), quarter=int(m.group(2)), freq="Q")


def format_period(period: pd.Period) -> str:
    return f"{period.year}Q{period.quarter}"


@dataclass(frozen=True, order=True)
class VintageObservation:
    series: int
    period: pd.Period
    release: int
    value: float

    def __post_init__(self):
        if self.series not in (0, 1):
            raise InputError(f"series must be 0 or 1, got {self.series}")
        if self.release < 1:
            raise InputError(f"release index must be >= 1, got {self.release}")
        object.__setattr__(self, "value", float(self.value))

    @property
    def key(self) -> tuple[int, pd.Period, int]:
        return (self.series, self.period, self.release)


@dataclass(frozen=True)
class VintagePanel:
    """Ragged set of published estimates for two series.

    Periods inside ``period_range`` with no observation at all are legal.
    """

    observations: tuple[VintageObservation, ...]
    period_range: tuple[pd.Period, pd.Period]
    release_labels: Mapping[int, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for ob in self.observations:
            if ob.key in seen:
                raise InputError(
                    f"duplicate observation for series={ob.series} "
                    f"period={format_period(ob.period)} release={ob.release}"
                )
            seen.add(ob.key)
            if not (self.period_range[0] <= ob.period <= self.period_range[1]):
                raise InputError(f"period {format_period(ob.period)} outside period_range")
        ordered = tuple(sorted(self.observations, key=lambda o: (o.series, o.period, o.release)))
        object.__setattr__(self, "observations", ordered)

    @property
    def periods(self) -> pd.PeriodIndex:
        start, end = self.period_range
        return pd.period_range(start, end, freq="Q")

    def releases_per_series(self) -> list[list[int]]:
        """Release indices present for each series, ascending."""
        out: list[set[int]] = [set() for _ in range(N_SERIES)]
        for ob in self.observations:
            out[ob.series].add(ob.release)
        return [sorted(s) for s in out]

    def max_release(self) -> int:
        return max((ob.release for ob in self.observations), default=0)

    def __len__(self) -> int:
        return len(self.observations)


def _parse_value(raw: str, lineno: int) -> float | None:
    raw = raw.strip()
    if raw == "NA":
        return None
    try:
        value = float(raw)
    except ValueError:
        raise InputError(f"line {lineno}: non-numeric value {raw!r}") from None
    if not math.isfinite(value):
        raise InputError(f"line {lineno}: non-finite value {raw!r}")
    return value


def parse_vintage_csv(text: str | io.TextIOBase) -> VintagePanel:
    """Parse the long-format vintage CSV into a validated :class:`VintagePanel`.

    ``NA`` values and absent rows are both treated as missing. The period
    range spans the earliest to the latest period mentioned in any row.
    """
    if not isinstance(text, str):
        text = text.read()
    if text.startswith("\ufeff"):
        text = text[1:]
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = next(reader)
    except StopIteration:
        raise InputError("empty panel") from None
    if tuple(h.strip() for h in header) != HEADER:
        raise InputError(f"expected header {','.join(HEADER)!r}, got {','.join(header)!r}")

    observations = []
    keys: set[tuple[int, pd.Period, int]] = set()
    periods: list[pd.Period] = []
    n_rows = 0
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 4:
            raise InputError(f"line {lineno}: expected 4 fields, got {len(row)}")
        n_rows += 1
        series_raw, period_raw, release_raw, value_raw = row
        try:
            series = int(series_raw)
            release = int(release_raw)
        except ValueError:
            raise InputError(f"line {lineno}: series and release must be integers") from None
        if series not in (0, 1):
            raise InputError(f"line {lineno}: series must be 0 or 1, got {series}")
        if release < 1:
            raise InputError(f"line {lineno}: release index must be >= 1, got {release}")
        try:
            period = parse_period(period_raw)
        except InputError as exc:
            raise InputError(f"line {lineno}: {exc}") from None
        key = (series, period, release)
        if key in keys:
            raise InputError(
                f"line {lineno}: duplicate (series, period, release) = "
                f"({series}, {format_period(period)}, {release})"
            )
        keys.add(key)
        periods.append(period)
        value = _parse_value(value_raw, lineno)
        if value is not None:
            observations.append(VintageObservation(series, period, release, value))

    if n_rows == 0:
        raise InputError("empty panel")
    return VintagePanel(tuple(observations), (min(periods), max(periods)))


def serialize_vintage_csv(panel: VintagePanel) -> str:
    """Render a panel as CSV sorted by (series, period, release)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    for ob in panel.observations:
        writer.writerow([ob.series, format_period(ob.period), ob.release, repr(ob.value)])
    return buf.getvalue()


def panel_from_matrix(values: np.ndarray, start: pd.Period | str, l: int) -> VintagePanel:
    """Build a panel from a ``T x 2l`` grid (NaN = missing); inverse of alignment."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[1] != N_SERIES * l:
        raise InputError(f"expected a T x {N_SERIES * l} grid, got shape {values.shape}")
    if isinstance(start, str):
        start = parse_period(start)
    obs = []
    for t in range(values.shape[0]):
        for j in range(values.shape[1]):
            v = values[t, j]
            if np.isfinite(v):
                obs.append(VintageObservation(j // l, start + t, j % l + 1, float(v)))
    return VintagePanel(tuple(obs), (start, start + values.shape[0] - 1))


@dataclass(frozen=True)
class ObservationMatrix:
    """Aligned ``T x 2l`` grid; columns are series 0 releases 1..l then series 1.

    Masked cells hold NaN in ``values``.
    """

    values: np.ndarray
    missing_mask: np.ndarray
    periods: pd.PeriodIndex | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        mask = np.array(self.missing_mask, dtype=bool)
        if values.ndim != 2 or values.shape != mask.shape:
            raise InputError("values and missing_mask must be 2-D grids of the same shape")
        if values.shape[1] % N_SERIES:
            raise InputError("column count must be even (2 series x l releases)")
        values[mask] = np.nan
        if np.any(~mask & ~np.isfinite(values)):
            raise InputError("unmasked entries must be finite")
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "missing_mask", mask)

    @classmethod
    def from_array(cls, values, periods=None) -> ObservationMatrix:
        values = np.asarray(values, dtype=float)
        return cls(values, ~np.isfinite(values), periods)

    @property
    def n_periods(self) -> int:
        return self.values.shape[0]

    @property
    def l(self) -> int:
        return self.values.shape[1] // N_SERIES

    def column(self, series: int, release: int) -> int:
        """Zero-based column index of ``(series, release)``; release is 1-based."""
        return series * self.l + release - 1

    def n_observed(self) -> int:
        return int((~self.missing_mask).sum())

    def to_frame(self) -> pd.DataFrame:
        cols = [f"y{s}_r{i}" for s in range(N_SERIES) for i in range(1, self.l + 1)]
        return pd.DataFrame(self.values, index=self.periods, columns=cols)


def to_observation_matrix(panel: VintagePanel, config) -> ObservationMatrix:
    """Align a panel on the contiguous quarter grid with ``2 * config.l`` columns."""
    l = int(config.l)
    if panel.max_release() > l:
        raise InputError(
            f"panel contains release {panel.max_release()} but config has l={l}"
        )
    periods = panel.periods
    values = np.full((len(periods), N_SERIES * l), np.nan)
    start = panel.period_range[0]
    for ob in panel.observations:
        row = (ob.period - start).n
        values[row, ob.series * l + ob.release - 1] = ob.value
    return ObservationMatrix(values, np.isnan(values), periods)


def observations_from_rows(rows: Iterable[tuple[int, str, int, float]]) -> VintagePanel:
    """Convenience constructor from ``(series, 'YYYYQn', release, value)`` tuples."""
    obs = [VintageObservation(s, parse_period(p), r, float(v)) for s, p, r, v in rows]
    if not obs:
        raise InputError("empty panel")
    periods = [o.period for o in obs]
    return VintagePanel(tuple(obs), (min(periods), max(periods)))
