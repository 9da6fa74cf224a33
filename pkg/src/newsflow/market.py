"""Price ingestion, session-aware return series, and hourly sentiment binning.

All instants are stored as timezone-aware UTC datetimes.  Trading sessions are
interpreted in US/Eastern with hourly marks at 9:30, 10:30, ..., 15:30; hourly
returns never span a session boundary.
"""

from __future__ import annotations

import bisect
import csv
import datetime as dt
import logging
from dataclasses import dataclass, field
from zoneinfo import ZoneInfo

import numpy as np

from .errors import ConfigError, DataError

log = logging.getLogger(__name__)

ET = ZoneInfo("America/New_York")
UTC = dt.timezone.utc

SESSION_OPEN = dt.time(9, 30)
SESSION_LAST_MARK = dt.time(15, 30)
MARKS_PER_DAY = 7  # 9:30 through 15:30 inclusive


def parse_utc(value: str) -> dt.datetime:
    """Parse an ISO-8601 timestamp; naive values and 'Z' suffixes mean UTC."""
    text = value.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    parsed = dt.datetime.fromisoformat(text)
    if parsed.tzinfo is None:
        return parsed.replace(tzinfo=UTC)
    return parsed.astimezone(UTC)


class TradingCalendar:
    """Sorted set of trading dates with k-day shifts and forward rolling."""

    def __init__(self, dates):
        self.dates = sorted(set(dates))
        if not self.dates:
            raise DataError("trading calendar is empty")
        self._index = {d: i for i, d in enumerate(self.dates)}

    @classmethod
    def load(cls, path) -> "TradingCalendar":
        dates = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line and not line.startswith("#"):
                    dates.append(dt.date.fromisoformat(line))
        return cls(dates)

    def __contains__(self, d: dt.date) -> bool:
        return d in self._index

    def __len__(self) -> int:
        return len(self.dates)

    def roll_forward(self, d: dt.date) -> dt.date | None:
        """Smallest trading date >= d, or None past the calendar end."""
        i = bisect.bisect_left(self.dates, d)
        return self.dates[i] if i < len(self.dates) else None

    def shift(self, d: dt.date, k: int) -> dt.date | None:
        """Trading date k steps away from trading date d; None off-calendar."""
        i = self._index.get(d)
        if i is None:
            raise DataError(f"{d} is not a trading date")
        j = i + k
        return self.dates[j] if 0 <= j < len(self.dates) else None

    def session_marks(self, d: dt.date) -> list[dt.datetime]:
        """UTC instants of the hourly session marks on trading date d."""
        base = dt.datetime.combine(d, SESSION_OPEN, tzinfo=ET)
        return [(base + dt.timedelta(hours=h)).astimezone(UTC) for h in range(MARKS_PER_DAY)]

    def session_instant(self, d: dt.date, at: dt.time) -> dt.datetime:
        return dt.datetime.combine(d, at, tzinfo=ET).astimezone(UTC)


@dataclass(frozen=True)
class PriceBar:
    """One daily bar (open/close) or one minute mid-quote observation."""

    ticker: str
    timestamp: dt.datetime  # UTC; midnight UTC of the date for daily bars
    open: float | None = None
    close: float | None = None
    mid: float | None = None


@dataclass
class LoadReport:
    rows: int = 0
    skipped: int = 0
    reasons: dict = field(default_factory=dict)

    def skip(self, reason: str):
        self.skipped += 1
        self.reasons[reason] = self.reasons.get(reason, 0) + 1


def load_prices(path, kind: str) -> tuple[list[PriceBar], LoadReport]:
    """Load and validate a price CSV.

    ``kind="daily"`` expects columns date,ticker,open,close[,adj_close];
    ``kind="minute"`` expects timestamp_utc,ticker,mid or
    timestamp_utc,ticker,bid,ask (mid computed).  Bad rows (non-positive or
    unparseable prices, duplicate timestamps) are skipped and counted; output
    is sorted per ticker by timestamp.
    """
    if kind not in ("daily", "minute"):
        raise ConfigError(f"unknown price kind {kind!r}")
    report = LoadReport()
    bars: list[PriceBar] = []
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot read price file {path}: {exc}") from exc
    with fh:
        for row in csv.DictReader(fh):
            report.rows += 1
            try:
                bar = _parse_price_row(row, kind)
            except (KeyError, ValueError, TypeError):
                report.skip("malformed")
                continue
            if bar is None:
                report.skip("non_positive_price")
                continue
            bars.append(bar)
    out_of_order = any(
        a.ticker == b.ticker and a.timestamp > b.timestamp for a, b in zip(bars, bars[1:])
    )
    bars.sort(key=lambda b: (b.ticker, b.timestamp))
    if out_of_order:
        log.warning("%s: rows were out of order; output sorted", path)
    deduped: list[PriceBar] = []
    for bar in bars:
        if deduped and deduped[-1].ticker == bar.ticker and deduped[-1].timestamp == bar.timestamp:
            report.skip("duplicate_timestamp")
            continue
        deduped.append(bar)
    if not deduped:
        log.warning("%s: no valid price rows", path)
    return deduped, report


def _parse_price_row(row: dict, kind: str) -> PriceBar | None:
    ticker = row["ticker"].strip()
    if not ticker:
        raise ValueError("empty ticker")
    if kind == "daily":
        date = dt.date.fromisoformat(row["date"].strip())
        open_, close = float(row["open"]), float(row["close"])
        if open_ <= 0 or close <= 0:
            return None
        ts = dt.datetime.combine(date, dt.time(0), tzinfo=UTC)
        return PriceBar(ticker=ticker, timestamp=ts, open=open_, close=close)
    ts = parse_utc(row["timestamp_utc"])
    if "mid" in row and row.get("mid", "").strip():
        mid = float(row["mid"])
    else:
        mid = (float(row["bid"]) + float(row["ask"])) / 2.0
    if mid <= 0:
        return None
    return PriceBar(ticker=ticker, timestamp=ts, mid=mid)


@dataclass
class ReturnSeries:
    """Simple returns aligned to one grid instant each (the interval end for
    hourly series, the formation-day session open for daily open-to-open)."""

    ticker: str
    grid: list[dt.datetime]
    returns: np.ndarray

    def __post_init__(self):
        self.returns = np.asarray(self.returns, dtype=float)
        if len(self.grid) != len(self.returns):
            raise DataError("grid and returns lengths differ")
        if np.any(~np.isfinite(self.returns)):
            raise DataError("return series contains NaN or infinity")
        if any(a >= b for a, b in zip(self.grid, self.grid[1:])):
            raise DataError("return grid is not strictly increasing")


def hourly_returns(bars: list[PriceBar], calendar: TradingCalendar) -> ReturnSeries:
    """Hourly in-session returns from minute mid-quotes for a single ticker.

    Each session mark takes the last mid-quote at or before it from the same
    ET date (last observation carried forward within the day only).  Returns
    are between consecutive marks of the same day; days with fewer than two
    in-session quotes are skipped.
    """
    if not bars:
        raise DataError("no minute bars supplied")
    tickers = {b.ticker for b in bars}
    if len(tickers) != 1:
        raise DataError(f"hourly_returns expects one ticker, got {sorted(tickers)}")
    ticker = bars[0].ticker

    by_date: dict[dt.date, list[PriceBar]] = {}
    for bar in sorted(bars, key=lambda b: b.timestamp):
        by_date.setdefault(bar.timestamp.astimezone(ET).date(), []).append(bar)

    grid: list[dt.datetime] = []
    rets: list[float] = []
    for date in sorted(by_date):
        if date not in calendar:
            continue
        day_bars = by_date[date]
        marks = calendar.session_marks(date)
        in_session = [b for b in day_bars if marks[0] <= b.timestamp <= marks[-1]]
        if len(in_session) < 2:
            continue
        times = [b.timestamp for b in day_bars]
        mark_values: list[float | None] = []
        for mark in marks:
            i = bisect.bisect_right(times, mark) - 1
            mark_values.append(day_bars[i].mid if i >= 0 else None)
        for prev, cur, mark in zip(mark_values, mark_values[1:], marks[1:]):
            if prev is not None and cur is not None:
                grid.append(mark)
                rets.append(cur / prev - 1.0)
    return ReturnSeries(ticker=ticker, grid=grid, returns=np.asarray(rets))


def open_to_open_returns(bars: list[PriceBar]) -> ReturnSeries:
    """Daily open-to-open returns for one ticker: r_t = open_{t+1}/open_t - 1,
    aligned to the formation day's 9:30 ET instant."""
    daily = sorted((b for b in bars if b.open is not None), key=lambda b: b.timestamp)
    if len(daily) < 2:
        raise DataError("need at least two daily bars")
    tickers = {b.ticker for b in daily}
    if len(tickers) != 1:
        raise DataError(f"open_to_open_returns expects one ticker, got {sorted(tickers)}")
    grid = []
    rets = []
    for cur, nxt in zip(daily, daily[1:]):
        date = cur.timestamp.astimezone(UTC).date()
        grid.append(dt.datetime.combine(date, SESSION_OPEN, tzinfo=ET).astimezone(UTC))
        rets.append(nxt.open / cur.open - 1.0)
    return ReturnSeries(ticker=daily[0].ticker, grid=grid, returns=np.asarray(rets))


def daily_return_map(series: ReturnSeries) -> dict[dt.date, float]:
    """Open-to-open returns keyed by ET formation date."""
    return {
        instant.astimezone(ET).date(): float(r)
        for instant, r in zip(series.grid, series.returns)
    }


@dataclass
class HourlySentimentSeries:
    """Mean article sentiment per top-of-hour UTC bin; empty bins are absent."""

    ticker: str
    grid: list[dt.datetime]
    scores: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)
        self.counts = np.asarray(self.counts, dtype=int)
        if not (len(self.grid) == len(self.scores) == len(self.counts)):
            raise DataError("sentiment series fields have mismatched lengths")
        if np.any((self.scores < 0) | (self.scores > 1)):
            raise DataError("sentiment scores outside [0, 1]")
        if np.any(self.counts < 1):
            raise DataError("sentiment bin with zero articles")


def bin_sentiment_hourly(scored: list[tuple[dt.datetime, float]], ticker: str) -> HourlySentimentSeries:
    """Average scores into top-of-hour UTC bins: bin h holds publish times in
    [h, h+1)."""
    sums: dict[dt.datetime, float] = {}
    counts: dict[dt.datetime, int] = {}
    for when, score in scored:
        if not 0.0 <= score <= 1.0:
            raise DataError(f"score {score} outside [0, 1]")
        h = when.astimezone(UTC).replace(minute=0, second=0, microsecond=0)
        sums[h] = sums.get(h, 0.0) + score
        counts[h] = counts.get(h, 0) + 1
    grid = sorted(sums)
    return HourlySentimentSeries(
        ticker=ticker,
        grid=grid,
        scores=np.array([sums[h] / counts[h] for h in grid]),
        counts=np.array([counts[h] for h in grid]),
    )


def label_return(
    publish_time_utc: dt.datetime,
    opens: dict[dt.date, float],
    calendar: TradingCalendar,
) -> float | None:
    """Open-to-open return from two trading days before publication to one
    trading day after: open_{t+1} / open_{t-2} - 1, where t is the publication
    ET date rolled forward to a trading day.  None when any open is missing."""
    pub_date = publish_time_utc.astimezone(ET).date()
    t = calendar.roll_forward(pub_date)
    if t is None:
        return None
    t_minus = calendar.shift(t, -2)
    t_plus = calendar.shift(t, +1)
    if t_minus is None or t_plus is None:
        return None
    open_before = opens.get(t_minus)
    open_after = opens.get(t_plus)
    if open_before is None or open_after is None:
        return None
    return open_after / open_before - 1.0
