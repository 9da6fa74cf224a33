"""Transfer entropy from sentiment to returns with symbolic quantile encoding.

The estimator is the plug-in form with one step of history on each side: over
observed triples (r_{t+1}, r_t, s_t) it sums p(triple) * log2 of the ratio of
empirical transition probabilities with and without the source symbol, i.e.
the KL form of the uncertainty-reduction H(r_{t+1}|r_t) - H(r_{t+1}|r_t,s_t).
Significance comes from a first-order Markov bootstrap of the source, and
finite-sample bias is corrected by subtracting the mean over source shuffles
(effective transfer entropy).  A Benjamini-Yekutieli step-up controls the
false discovery rate across tickers.
"""

from __future__ import annotations

import datetime as dt
import logging
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, DegenerateSeriesError, InsufficientDataError
from .market import ET, HourlySentimentSeries, ReturnSeries
from .seeds import substream
from .util import parallel_map

log = logging.getLogger(__name__)

MIN_TRIPLES = 100


# --- stationarity pre-test ---------------------------------------------------


@dataclass(frozen=True)
class AdfResult:
    statistic: float
    reject_at_1pct: bool
    lag_used: int


def adf_unit_root(series, max_lag: int | None = None) -> AdfResult:
    """Augmented Dickey-Fuller test (constant, no trend), AIC lag selection
    over 0..floor(12 (n/100)^{1/4}), rejecting at the MacKinnon 1% critical
    value."""
    from statsmodels.tsa.stattools import adfuller

    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < 25:
        raise InsufficientDataError("ADF needs at least 25 observations", required=25, got=n)
    if np.ptp(x) == 0:
        raise DegenerateSeriesError("ADF is undefined for a constant series")
    if max_lag is None:
        max_lag = int(np.floor(12.0 * (n / 100.0) ** 0.25))
    max_lag = max(0, min(max_lag, n // 2 - 2))
    try:
        stat, _pvalue, lag_used, _nobs, crit, _ic = adfuller(
            x, maxlag=max_lag, regression="c", autolag="AIC"
        )
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise DegenerateSeriesError(f"ADF regression failed: {exc}") from exc
    return AdfResult(
        statistic=float(stat),
        reject_at_1pct=bool(stat < crit["1%"]),
        lag_used=int(lag_used),
    )


def difference(series) -> np.ndarray:
    """First differences: out[i] = in[i+1] - in[i]."""
    x = np.asarray(series, dtype=float)
    if len(x) < 2:
        raise InsufficientDataError("differencing needs at least two points", required=2, got=len(x))
    return np.diff(x)


# --- symbolic encoding -------------------------------------------------------


@dataclass(frozen=True)
class SymbolicEncoderConfig:
    quantiles: tuple[float, ...] = (0.05, 0.25, 0.50, 0.75, 0.95)

    def __post_init__(self):
        q = self.quantiles
        if not q or any(not 0.0 < v < 1.0 for v in q) or any(a >= b for a, b in zip(q, q[1:])):
            raise ConfigError("quantiles must be strictly increasing within (0, 1)")

    @property
    def n_bins(self) -> int:
        return len(self.quantiles) + 1


@dataclass
class SymbolSeries:
    symbols: np.ndarray
    boundaries: np.ndarray
    source_len: int
    n_bins: int

    def __len__(self) -> int:
        return len(self.symbols)

    @classmethod
    def from_symbols(cls, symbols, n_bins: int) -> "SymbolSeries":
        symbols = np.asarray(symbols, dtype=np.int64)
        if symbols.min(initial=0) < 0 or symbols.max(initial=0) >= n_bins:
            raise DataError(f"symbols must lie in [0, {n_bins})")
        return cls(
            symbols=symbols,
            boundaries=np.array([]),
            source_len=len(symbols),
            n_bins=n_bins,
        )


def symbolic_encode(series, config: SymbolicEncoderConfig = SymbolicEncoderConfig()) -> SymbolSeries:
    """Quantile-bin a real-valued series into a small alphabet.

    Boundaries are empirical quantiles (linear interpolation); bins are
    left-closed, so a value equal to a boundary goes to the upper bin.  Heavy
    ties can collapse coincident boundaries, shrinking the alphabet.
    """
    x = np.asarray(series, dtype=float)
    if len(x) < 20:
        raise InsufficientDataError("encoding needs at least 20 observations", required=20, got=len(x))
    if len(np.unique(x)) < 2:
        raise DegenerateSeriesError("cannot quantile-encode a constant series")
    boundaries = np.unique(np.quantile(x, config.quantiles, method="linear"))
    symbols = np.searchsorted(boundaries, x, side="right").astype(np.int64)
    return SymbolSeries(
        symbols=symbols,
        boundaries=boundaries,
        source_len=len(x),
        n_bins=len(boundaries) + 1,
    )


# --- plug-in transfer entropy ------------------------------------------------


def te_from_triples(r_next, r_prev, s_prev, n_bins: int) -> float:
    """Plug-in transfer entropy in bits over observed (r_{t+1}, r_t, s_t)
    triples; 0 log 0 terms contribute nothing and the result is clamped at
    the theoretical floor of zero."""
    r_next = np.asarray(r_next, dtype=np.int64)
    r_prev = np.asarray(r_prev, dtype=np.int64)
    s_prev = np.asarray(s_prev, dtype=np.int64)
    b = int(n_bins)
    keys = (r_next * b + r_prev) * b + s_prev
    joint = np.bincount(keys, minlength=b * b * b).astype(float).reshape(b, b, b)
    total = joint.sum()
    n_bc = joint.sum(axis=0)  # counts over (r_t, s_t)
    n_ab = joint.sum(axis=2)  # counts over (r_{t+1}, r_t)
    n_b = joint.sum(axis=(0, 2))  # counts over r_t

    a_idx, b_idx, c_idx = np.nonzero(joint)
    counts = joint[a_idx, b_idx, c_idx]
    ratio = counts * n_b[b_idx] / (n_bc[b_idx, c_idx] * n_ab[a_idx, b_idx])
    te = float(np.sum(counts / total * np.log2(ratio)))
    return max(te, 0.0)


def _te_rows(r_next: np.ndarray, r_prev: np.ndarray, s_rows: np.ndarray, n_bins: int) -> np.ndarray:
    """te_from_triples applied to each row of s_rows (shared target triples)."""
    return np.array([te_from_triples(r_next, r_prev, row, n_bins) for row in s_rows])


@dataclass(frozen=True)
class TEConfig:
    history_target: int = 1  # return history length; the estimator requires 1
    history_source: int = 1  # sentiment history length; the estimator requires 1
    sentiment_lag: int = 0  # hours of extra source lag (0 = adjacent hour)
    n_shuffles: int = 100
    n_bootstrap: int = 300
    seed: int = 0
    encoder: SymbolicEncoderConfig = field(default_factory=SymbolicEncoderConfig)

    def __post_init__(self):
        if self.history_target != 1 or self.history_source != 1:
            raise ConfigError("the plug-in estimator supports one step of history only")
        if self.sentiment_lag < 0:
            raise ConfigError(f"sentiment_lag must be >= 0, got {self.sentiment_lag}")


def _aligned_triples(source: SymbolSeries, target: SymbolSeries, lag: int):
    if len(source) != len(target):
        raise DataError("source and target series must have equal length")
    n = len(target)
    effective = n - 1 - lag
    if effective < MIN_TRIPLES:
        raise InsufficientDataError(
            f"need at least {MIN_TRIPLES} aligned observations, got {max(effective, 0)}",
            required=MIN_TRIPLES,
            got=max(effective, 0),
        )
    t = np.arange(lag, n - 1)
    return target.symbols[t + 1], target.symbols[t], source.symbols[t - lag]


def transfer_entropy(source: SymbolSeries, target: SymbolSeries, cfg: TEConfig) -> float:
    """Transfer entropy in bits from source to target, pairing the target's
    next value with one step of target history and the source shifted back by
    cfg.sentiment_lag."""
    r_next, r_prev, s_prev = _aligned_triples(source, target, cfg.sentiment_lag)
    return te_from_triples(r_next, r_prev, s_prev, max(source.n_bins, target.n_bins))


def effective_te(
    source: SymbolSeries,
    target: SymbolSeries,
    cfg: TEConfig,
    rng: np.random.Generator | None = None,
) -> float:
    """TE minus the mean TE over uniformly shuffled sources (marginals kept,
    temporal coupling destroyed).  Seeded and deterministic."""
    if cfg.n_shuffles < 1:
        raise ConfigError(f"n_shuffles must be >= 1, got {cfg.n_shuffles}")
    rng = rng if rng is not None else substream(cfg.seed, "ete-shuffle")
    r_next, r_prev, s_prev = _aligned_triples(source, target, cfg.sentiment_lag)
    n_bins = max(source.n_bins, target.n_bins)
    observed = te_from_triples(r_next, r_prev, s_prev, n_bins)
    shuffled_rows = rng.permuted(np.tile(s_prev, (cfg.n_shuffles, 1)), axis=1)
    shuffled = _te_rows(r_next, r_prev, shuffled_rows, n_bins)
    return observed - float(shuffled.mean())


def _markov_transition(symbols: np.ndarray, n_bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Empirical 1-step transition matrix and marginal, as cumulative rows."""
    counts = np.bincount(symbols[:-1] * n_bins + symbols[1:], minlength=n_bins * n_bins)
    trans = counts.reshape(n_bins, n_bins).astype(float)
    marginal = np.bincount(symbols, minlength=n_bins).astype(float)
    marginal /= marginal.sum()
    row_sums = trans.sum(axis=1)
    empty = row_sums == 0
    trans[empty] = marginal  # unseen states fall back to the marginal
    trans[~empty] /= row_sums[~empty, None]
    return np.cumsum(trans, axis=1), np.cumsum(marginal)


def _simulate_markov(
    rng: np.random.Generator, trans_cum: np.ndarray, init_cum: np.ndarray, n_steps: int, n_chains: int
) -> np.ndarray:
    """Simulate n_chains surrogate chains of length n_steps, vectorised across
    chains (one uniform draw per chain per step)."""
    n_bins = trans_cum.shape[0]
    u = rng.random((n_chains, n_steps))
    states = np.empty((n_chains, n_steps), dtype=np.int64)
    states[:, 0] = np.minimum((init_cum < u[:, 0, None]).sum(axis=1), n_bins - 1)
    for t in range(1, n_steps):
        rows = trans_cum[states[:, t - 1]]
        states[:, t] = np.minimum((rows < u[:, t, None]).sum(axis=1), n_bins - 1)
    return states


def bootstrap_pvalue(
    source: SymbolSeries,
    target: SymbolSeries,
    cfg: TEConfig,
    rng: np.random.Generator | None = None,
) -> float:
    """Bootstrap p-value under a first-order Markov null for the source.

    Surrogate sources are simulated from the source's empirical 1-step
    transition matrix (Markov structure kept, coupling to the target broken);
    p = (1 + #{surrogate TE >= observed}) / (n_bootstrap + 1).
    """
    if cfg.n_bootstrap < 1:
        raise ConfigError(f"n_bootstrap must be >= 1, got {cfg.n_bootstrap}")
    rng = rng if rng is not None else substream(cfg.seed, "bootstrap")
    r_next, r_prev, s_prev = _aligned_triples(source, target, cfg.sentiment_lag)
    n_bins = max(source.n_bins, target.n_bins)
    observed = te_from_triples(r_next, r_prev, s_prev, n_bins)

    trans_cum, init_cum = _markov_transition(source.symbols, source.n_bins)
    chains = _simulate_markov(rng, trans_cum, init_cum, len(source), cfg.n_bootstrap)
    t = np.arange(cfg.sentiment_lag, len(target) - 1)
    surrogates = _te_rows(r_next, r_prev, chains[:, t - cfg.sentiment_lag], n_bins)
    return (1 + int(np.sum(surrogates >= observed))) / (cfg.n_bootstrap + 1)


# --- false discovery rate ----------------------------------------------------


def by_fdr(pvalues: dict, q: float) -> list:
    """Benjamini-Yekutieli step-up: reject the k smallest p-values where k is
    the largest i with p_(i) <= q i / (M c(M)), c(M) the harmonic sum."""
    if not 0.0 < q < 1.0:
        raise ConfigError(f"q must be in (0, 1), got {q}")
    if not pvalues:
        raise ConfigError("need at least one p-value")
    items = sorted(pvalues.items(), key=lambda kv: (kv[1], str(kv[0])))
    for key, p in items:
        if not 0.0 <= p <= 1.0:
            raise DataError(f"p-value for {key!r} outside [0, 1]: {p}")
    m = len(items)
    c_m = np.sum(1.0 / np.arange(1, m + 1))
    k = 0
    for i, (_, p) in enumerate(items, start=1):
        if p <= q * i / (m * c_m):
            k = i
    return sorted(key for key, _ in items[:k])


# --- per-ticker study --------------------------------------------------------


@dataclass(frozen=True)
class TEResult:
    ticker: str
    te_bits: float
    ete_bits: float
    p_value: float
    lag_hours: int
    n_obs: int
    differenced: bool


@dataclass
class AlignedSlots:
    """Per-session-slot arrays for one ticker: one slot per hourly return,
    sentiment attached to the slot in which it becomes known."""

    sentiment: np.ndarray  # forward-filled; NaN before the first observation
    returns: np.ndarray
    day_ids: np.ndarray
    first_observed: int


def align_session_slots(sent: HourlySentimentSeries, ret: ReturnSeries) -> AlignedSlots:
    """Attach hourly sentiment bins to hourly-return slots.

    Each return slot covers one in-session hour ending at a grid mark.  A bin
    starting inside a slot's hour joins that slot; bins outside any session
    (overnight, weekends, holidays) are carried to the next session's first
    slot.  Slot sentiment is the article-count-weighted mean; slots with no
    news carry the last observed value forward.
    """
    n = len(ret.grid)
    if n == 0:
        raise InsufficientDataError("empty return series", required=MIN_TRIPLES, got=0)
    one_hour = dt.timedelta(hours=1)
    slot_starts = [mark - one_hour for mark in ret.grid]
    slot_dates = [mark.astimezone(ET).date() for mark in ret.grid]
    day_ids = np.zeros(n, dtype=np.int64)
    for i in range(1, n):
        day_ids[i] = day_ids[i - 1] + (slot_dates[i] != slot_dates[i - 1])

    weighted = np.zeros(n)
    weights = np.zeros(n)
    for when, score, count in zip(sent.grid, sent.scores, sent.counts):
        idx = bisect_right(slot_starts, when) - 1
        if idx < 0 or when >= ret.grid[idx]:
            idx += 1  # outside every session hour: carry forward
        if idx >= n:
            continue
        weighted[idx] += float(score) * count
        weights[idx] += count

    sentiment = np.full(n, np.nan)
    observed = weights > 0
    sentiment[observed] = weighted[observed] / weights[observed]
    if not observed.any():
        raise InsufficientDataError("no sentiment overlaps the return series", required=1, got=0)
    first = int(np.flatnonzero(observed)[0])
    for i in range(first + 1, n):
        if not observed[i]:
            sentiment[i] = sentiment[i - 1]
    return AlignedSlots(
        sentiment=sentiment,
        returns=np.asarray(ret.returns, dtype=float),
        day_ids=day_ids,
        first_observed=first,
    )


def study_ticker(
    ticker: str,
    sent: HourlySentimentSeries,
    ret: ReturnSeries,
    cfg: TEConfig,
) -> TEResult:
    """Full single-ticker study: ADF pre-test (difference the sentiment when a
    unit root is not rejected), quantile encoding of both series, then TE,
    effective TE and the bootstrap p-value over within-day triples."""
    slots = align_session_slots(sent, ret)
    lag = cfg.sentiment_lag
    n = len(slots.returns)

    raw = slots.sentiment[slots.first_observed :]
    adf = adf_unit_root(raw)
    differenced = not adf.reject_at_1pct
    if differenced:
        values = difference(raw)
        offset = slots.first_observed + 1  # values[i - offset] is s_i - s_{i-1}
    else:
        values = raw
        offset = slots.first_observed

    source = symbolic_encode(values, cfg.encoder)
    target = symbolic_encode(slots.returns, cfg.encoder)
    n_bins = max(source.n_bins, target.n_bins)

    t = np.arange(max(lag + offset, 0), n - 1)
    t = t[slots.day_ids[t + 1] == slots.day_ids[t]]
    if len(t) < MIN_TRIPLES:
        raise InsufficientDataError(
            f"{ticker}: {len(t)} within-day triples, need {MIN_TRIPLES}",
            required=MIN_TRIPLES,
            got=len(t),
        )
    r_next = target.symbols[t + 1]
    r_prev = target.symbols[t]
    src_pos = t - lag - offset
    s_prev = source.symbols[src_pos]

    te = te_from_triples(r_next, r_prev, s_prev, n_bins)

    rng_shuffle = substream(cfg.seed, ticker, "shuffle", lag)
    shuffled_rows = rng_shuffle.permuted(np.tile(s_prev, (cfg.n_shuffles, 1)), axis=1)
    ete = te - float(_te_rows(r_next, r_prev, shuffled_rows, n_bins).mean())

    if cfg.n_bootstrap < 1:
        raise ConfigError(f"n_bootstrap must be >= 1, got {cfg.n_bootstrap}")
    rng_boot = substream(cfg.seed, ticker, "bootstrap", lag)
    trans_cum, init_cum = _markov_transition(source.symbols, source.n_bins)
    chains = _simulate_markov(rng_boot, trans_cum, init_cum, len(source), cfg.n_bootstrap)
    surrogates = _te_rows(r_next, r_prev, chains[:, src_pos], n_bins)
    p_value = (1 + int(np.sum(surrogates >= te))) / (cfg.n_bootstrap + 1)

    return TEResult(
        ticker=ticker,
        te_bits=te,
        ete_bits=ete,
        p_value=p_value,
        lag_hours=lag,
        n_obs=len(t),
        differenced=differenced,
    )


@dataclass
class StudyResult:
    results: list[TEResult]
    rejected: list[str]  # tickers surviving the Benjamini-Yekutieli step-up
    skipped: dict[str, str]

    def by_ticker(self) -> dict[str, TEResult]:
        return {r.ticker: r for r in self.results}


def run_te_study(
    sentiment: dict[str, HourlySentimentSeries],
    returns: dict[str, ReturnSeries],
    cfg: TEConfig,
    q: float = 0.05,
    threads: int = 1,
) -> StudyResult:
    """Per-ticker TE study with FDR control across tickers.

    Tickers with insufficient or degenerate data are excluded and listed in
    the skipped report.  Per-ticker randomness derives from (seed, ticker), so
    the study is reproducible at any parallelism level.
    """
    tickers = sorted(set(sentiment) & set(returns))
    skipped: dict[str, str] = {}

    def one(ticker: str):
        try:
            return study_ticker(ticker, sentiment[ticker], returns[ticker], cfg)
        except (InsufficientDataError, DegenerateSeriesError) as exc:
            return (ticker, str(exc))

    outcomes = parallel_map(one, tickers, threads=threads)
    results = []
    for outcome in outcomes:
        if isinstance(outcome, TEResult):
            results.append(outcome)
        else:
            ticker, reason = outcome
            skipped[ticker] = reason
            log.warning("excluded %s: %s", ticker, reason)
    rejected = by_fdr({r.ticker: r.p_value for r in results}, q) if results else []
    return StudyResult(results=results, rejected=rejected, skipped=skipped)
