"""Sentiment-ranked long-short portfolios, baselines, and performance stats.

Portfolios are dollar-neutral: equal weights within each leg, long and short
notionals equal, so a uniform market move cancels.  A day's return is the
mean open-to-open return of the long leg minus that of the short leg.
"""

from __future__ import annotations

import datetime as dt
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import ConfigError, DataError, DegenerateSeriesError, InsufficientDataError
from .market import TradingCalendar
from .seeds import substream
from .util import parallel_map

log = logging.getLogger(__name__)

TRADING_DAYS_PER_YEAR = 252

REGIMES = ("daily-930", "daily-4pm", "weekly")


@dataclass(frozen=True)
class PortfolioSpec:
    """News window and sizing rules for one strategy.

    Windows per regime, with t the trading day and times in ET (half-open):
    daily-930 holds news from 9:30 on day t-1 through 9:00 on day t, shifted
    by day_lag (0 and -1 are look-ahead diagnostics); weekly runs from 9:30 on
    t-5 to 9:00 on t and holds for five days; daily-4pm runs from 16:00 on
    t-1 to 9:00 on t.
    """

    n_long: int = 20
    n_short: int = 20
    day_lag: int = 1
    regime: str = "daily-930"

    def __post_init__(self):
        if self.n_long < 1 or self.n_short < 1:
            raise ConfigError("both legs need at least one position")
        if self.day_lag not in (-1, 0, 1):
            raise ConfigError(f"day_lag must be -1, 0 or 1, got {self.day_lag}")
        if self.regime not in REGIMES:
            raise ConfigError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        if self.regime != "daily-930" and self.day_lag != 1:
            raise ConfigError("look-ahead day lags apply to the daily-930 regime only")

    @property
    def hold_days(self) -> int:
        return 5 if self.regime == "weekly" else 1


_NINE_AM = dt.time(9, 0)
_NINE_THIRTY = dt.time(9, 30)
_FOUR_PM = dt.time(16, 0)


def news_window(day: dt.date, spec: PortfolioSpec, calendar: TradingCalendar):
    """UTC (start, end) of the news window for trading day ``day``; None when
    the window falls off the calendar."""
    if spec.regime == "weekly":
        start_day, start_time = calendar.shift(day, -5), _NINE_THIRTY
        end_day = day
    elif spec.regime == "daily-4pm":
        start_day, start_time = calendar.shift(day, -1), _FOUR_PM
        end_day = day
    else:
        start_day, start_time = calendar.shift(day, -spec.day_lag), _NINE_THIRTY
        end_day = calendar.shift(day, 1 - spec.day_lag)
    if start_day is None or end_day is None:
        return None
    return (
        calendar.session_instant(start_day, start_time),
        calendar.session_instant(end_day, _NINE_AM),
    )


@dataclass(frozen=True)
class DailyPortfolio:
    formation_date: dt.date
    long: tuple[str, ...]
    short: tuple[str, ...]

    def __post_init__(self):
        if set(self.long) & set(self.short):
            raise DataError("long and short legs overlap")


def build_portfolio(
    day: dt.date,
    scored_articles,
    spec: PortfolioSpec,
    calendar: TradingCalendar,
) -> DailyPortfolio | None:
    """Rank companies by mean article score inside the day's news window.

    Top n_long go long, bottom n_short short, ties broken by ticker.  With
    fewer scored companies than n_long + n_short the split shrinks
    proportionally (logged); None when a leg would be empty.
    """
    window = news_window(day, spec, calendar)
    if window is None:
        return None
    start, end = window
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for article in scored_articles:
        if article.ticker is None or not start <= article.publish_time_utc < end:
            continue
        sums[article.ticker] = sums.get(article.ticker, 0.0) + article.score
        counts[article.ticker] = counts.get(article.ticker, 0) + 1
    if not sums:
        return None
    ranked = sorted(sums, key=lambda tk: (-(sums[tk] / counts[tk]), tk))
    k = len(ranked)
    n_long, n_short = spec.n_long, spec.n_short
    if k < n_long + n_short:
        total = n_long + n_short
        n_long = k * spec.n_long // total
        n_short = k * spec.n_short // total
        log.warning(
            "%s: only %d scored companies; trading %d long / %d short", day, k, n_long, n_short
        )
        if n_long == 0 or n_short == 0:
            return None
    return DailyPortfolio(
        formation_date=day,
        long=tuple(ranked[:n_long]),
        short=tuple(ranked[-n_short:]),
    )


@dataclass
class DailyReturns:
    dates: list[dt.date]
    values: np.ndarray

    def as_map(self) -> dict[dt.date, float]:
        return dict(zip(self.dates, self.values))


def _leg_return(tickers, day_returns: dict[str, float], day: dt.date, side: str) -> float | None:
    available = [day_returns[tk] for tk in tickers if tk in day_returns]
    missing = len(tickers) - len(available)
    if missing:
        log.info("%s: %d %s-leg tickers missing returns; re-weighted", day, missing, side)
    if not available:
        return None
    return float(np.mean(available))


def returns_by_day(returns_by_ticker: dict[str, dict[dt.date, float]]) -> dict[dt.date, dict[str, float]]:
    by_day: dict[dt.date, dict[str, float]] = {}
    for ticker, rets in returns_by_ticker.items():
        for day, value in rets.items():
            by_day.setdefault(day, {})[ticker] = value
    return by_day


def _simulate_by_day(
    portfolios: list[DailyPortfolio],
    by_day: dict[dt.date, dict[str, float]],
    calendar: TradingCalendar,
    hold_days: int,
) -> DailyReturns:
    daily: dict[dt.date, float] = {}
    for portfolio in portfolios:
        day = portfolio.formation_date
        for step in range(hold_days):
            held = calendar.shift(day, step) if step else day
            if held is None or held in daily:
                continue
            day_returns = by_day.get(held, {})
            long_ret = _leg_return(portfolio.long, day_returns, held, "long")
            short_ret = _leg_return(portfolio.short, day_returns, held, "short")
            if long_ret is None or short_ret is None:
                log.warning("%s: empty portfolio leg; day skipped", held)
                continue
            daily[held] = long_ret - short_ret
    dates = sorted(daily)
    return DailyReturns(dates=dates, values=np.array([daily[d] for d in dates]))


def simulate(
    portfolios: list[DailyPortfolio],
    returns_by_ticker: dict[str, dict[dt.date, float]],
    calendar: TradingCalendar,
    hold_days: int = 1,
) -> DailyReturns:
    """Daily strategy returns: mean(long) - mean(short) per held day.

    hold_days > 1 marks the same composition to market on each day from t to
    t+hold_days-1 (weekly rebalancing).  Tickers without a return that day are
    dropped from their leg with re-weighting; a day with an empty leg is
    skipped and logged.
    """
    return _simulate_by_day(portfolios, returns_by_day(returns_by_ticker), calendar, hold_days)


@dataclass
class Metrics:
    ann_avg_return: float
    ann_volatility: float
    sharpe: float
    mdd: float


def metrics(daily_returns) -> Metrics:
    """Annualised mean/volatility/Sharpe (zero risk-free rate) and the maximum
    drawdown of the compounded equity curve."""
    r = np.asarray(daily_returns, dtype=float)
    if len(r) < 2:
        raise InsufficientDataError("metrics need at least two returns", required=2, got=len(r))
    ann_ret = float(r.mean()) * TRADING_DAYS_PER_YEAR
    vol = float(r.std(ddof=1))
    if vol == 0.0:
        raise DegenerateSeriesError("zero volatility: Sharpe ratio undefined")
    ann_vol = vol * math.sqrt(TRADING_DAYS_PER_YEAR)
    equity = np.concatenate([[1.0], np.cumprod(1.0 + r)])
    peaks = np.maximum.accumulate(equity)
    mdd = float(np.max((peaks - equity) / peaks))
    return Metrics(
        ann_avg_return=ann_ret,
        ann_volatility=ann_vol,
        sharpe=ann_ret / ann_vol,
        mdd=mdd,
    )


@dataclass
class AlphaStats:
    alpha_ann: float
    alpha_p: float
    r_squared: float


def regress_alpha(strategy_returns, benchmark_returns) -> AlphaStats:
    """OLS of strategy on benchmark daily returns; the annualised intercept is
    alpha, with a two-sided p-value from the normal approximation of its
    t-statistic."""
    y = np.asarray(strategy_returns, dtype=float)
    x = np.asarray(benchmark_returns, dtype=float)
    if len(y) != len(x):
        raise DataError("strategy and benchmark series must be aligned")
    n = len(y)
    if n < 10:
        raise InsufficientDataError("regression needs n >= 10", required=10, got=n)
    sxx = float(np.sum((x - x.mean()) ** 2))
    if sxx == 0.0:
        raise DegenerateSeriesError("benchmark returns have zero variance")
    slope = float(np.sum((x - x.mean()) * (y - y.mean()))) / sxx
    intercept = float(y.mean() - slope * x.mean())
    residuals = y - intercept - slope * x
    sse = float(np.sum(residuals**2))
    sst = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 - sse / sst if sst > 0 else 0.0
    sigma2 = sse / (n - 2)
    se_intercept = math.sqrt(sigma2 * (1.0 / n + x.mean() ** 2 / sxx))
    if se_intercept == 0.0:
        alpha_p = 1.0 if intercept == 0.0 else 0.0
    else:
        alpha_p = 2.0 * float(stats.norm.sf(abs(intercept / se_intercept)))
    return AlphaStats(
        alpha_ann=intercept * TRADING_DAYS_PER_YEAR,
        alpha_p=alpha_p,
        r_squared=r_squared,
    )


def sharpe_pvalue(observed_sharpe: float, baseline_sharpes) -> float:
    """Bootstrap p-value of a Sharpe ratio against the random baselines:
    (1 + #{baseline >= observed}) / (n + 1)."""
    baseline = np.asarray(baseline_sharpes, dtype=float)
    if len(baseline) == 0:
        raise ConfigError("baseline distribution is empty")
    return (1 + int(np.sum(baseline >= observed_sharpe))) / (len(baseline) + 1)


@dataclass
class BaselinePath:
    returns: DailyReturns
    metrics: Metrics | None  # None when the path degenerates (zero volatility)


def random_baseline(
    universe,
    returns_by_ticker: dict[str, dict[dt.date, float]],
    dates: list[dt.date],
    calendar: TradingCalendar,
    spec: PortfolioSpec,
    n_sims: int = 500,
    seed: int = 0,
    threads: int = 1,
) -> list[BaselinePath]:
    """Random long-short baseline: each path draws n_long + n_short tickers
    uniformly without replacement every day and is simulated exactly like the
    main strategy.  Deterministic per (seed, path index)."""
    universe = sorted(set(universe))
    need = spec.n_long + spec.n_short
    if len(universe) < need:
        raise ConfigError(f"universe has {len(universe)} tickers, need {need}")
    tickers = np.array(universe)
    by_day = returns_by_day(returns_by_ticker)

    def one_path(path_idx: int) -> BaselinePath:
        rng = substream(seed, "random-baseline", path_idx)
        picks = np.argsort(rng.random((len(dates), len(tickers))), axis=1)[:, :need]
        portfolios = [
            DailyPortfolio(
                formation_date=day,
                long=tuple(tickers[row[: spec.n_long]]),
                short=tuple(tickers[row[spec.n_long :]]),
            )
            for day, row in zip(dates, picks)
        ]
        series = _simulate_by_day(portfolios, by_day, calendar, hold_days=spec.hold_days)
        try:
            path_metrics = metrics(series.values)
        except (DegenerateSeriesError, InsufficientDataError):
            path_metrics = None
        return BaselinePath(returns=series, metrics=path_metrics)

    return parallel_map(one_path, range(n_sims), threads=threads)


@dataclass
class ComparisonStats:
    correlation: float
    corr_p: float  # one-sided t-test for positive correlation
    jaccard_long_mean: float
    jaccard_long_sd: float
    jaccard_short_mean: float
    jaccard_short_sd: float
    n_days: int


def _jaccard(a: set, b: set) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def compare_strategies(
    returns_a: DailyReturns,
    returns_b: DailyReturns,
    portfolios_a: list[DailyPortfolio],
    portfolios_b: list[DailyPortfolio],
) -> ComparisonStats:
    """Pearson correlation of aligned daily returns plus per-day Jaccard
    overlap of the long and short legs."""
    map_a, map_b = returns_a.as_map(), returns_b.as_map()
    common = sorted(set(map_a) & set(map_b))
    if not common:
        raise DataError("the strategies share no dates")
    ra = np.array([map_a[d] for d in common])
    rb = np.array([map_b[d] for d in common])
    n = len(common)
    sa, sb = ra.std(), rb.std()
    corr = float(np.corrcoef(ra, rb)[0, 1]) if sa > 0 and sb > 0 else 0.0
    if n > 2 and abs(corr) < 1.0:
        t_stat = corr * math.sqrt((n - 2) / (1.0 - corr**2))
        corr_p = float(stats.t.sf(t_stat, df=n - 2))
    else:
        corr_p = 0.0 if corr >= 1.0 else 1.0

    port_a = {p.formation_date: p for p in portfolios_a}
    port_b = {p.formation_date: p for p in portfolios_b}
    shared = sorted(set(port_a) & set(port_b))
    long_j = np.array([_jaccard(set(port_a[d].long), set(port_b[d].long)) for d in shared])
    short_j = np.array([_jaccard(set(port_a[d].short), set(port_b[d].short)) for d in shared])

    def sd(values: np.ndarray) -> float:
        return float(values.std(ddof=1)) if len(values) > 1 else 0.0

    return ComparisonStats(
        correlation=corr,
        corr_p=corr_p,
        jaccard_long_mean=float(long_j.mean()) if len(long_j) else 0.0,
        jaccard_long_sd=sd(long_j),
        jaccard_short_mean=float(short_j.mean()) if len(short_j) else 0.0,
        jaccard_short_sd=sd(short_j),
        n_days=n,
    )


@dataclass
class BacktestReport:
    daily: DailyReturns
    ann_avg_return: float
    ann_volatility: float
    sharpe: float
    mdd: float
    n_days: int
    sharpe_p: float | None = None
    alpha_ann: float | None = None
    alpha_p: float | None = None
    r_squared: float | None = None


def build_report(
    daily: DailyReturns,
    baselines: list[BaselinePath] | None = None,
    benchmark: DailyReturns | None = None,
) -> BacktestReport:
    """Assemble the performance report, bootstrapping the Sharpe p-value from
    the baselines and regressing on the benchmark when given (aligned on
    common dates)."""
    stats_ = metrics(daily.values)
    report = BacktestReport(
        daily=daily,
        ann_avg_return=stats_.ann_avg_return,
        ann_volatility=stats_.ann_volatility,
        sharpe=stats_.sharpe,
        mdd=stats_.mdd,
        n_days=len(daily.values),
    )
    if baselines:
        sharpes = [b.metrics.sharpe for b in baselines if b.metrics is not None]
        if sharpes:
            report.sharpe_p = sharpe_pvalue(stats_.sharpe, sharpes)
    if benchmark is not None:
        bench_map = benchmark.as_map()
        common = [d for d in daily.dates if d in bench_map]
        if len(common) >= 10:
            strat_map = daily.as_map()
            alpha = regress_alpha(
                [strat_map[d] for d in common], [bench_map[d] for d in common]
            )
            report.alpha_ann = alpha.alpha_ann
            report.alpha_p = alpha.alpha_p
            report.r_squared = alpha.r_squared
    return report
