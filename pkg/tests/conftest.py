"""Shared fixtures: synthetic trading calendars, planted sentiment/return
universes for the study tests, and a small on-disk corpus for the CLI."""

from __future__ import annotations

import datetime as dt
import json

import numpy as np
import pytest

from newsflow.market import HourlySentimentSeries, ReturnSeries, TradingCalendar
from newsflow.seeds import substream

SLOTS_PER_DAY = 6  # returns ending 10:30 .. 15:30 ET


def weekday_calendar(start: dt.date, n_days: int, holidays=()) -> TradingCalendar:
    dates = []
    day = start
    while len(dates) < n_days:
        if day.weekday() < 5 and day not in holidays:
            dates.append(day)
        day += dt.timedelta(days=1)
    return TradingCalendar(dates)


@pytest.fixture(scope="session")
def calendar_2021() -> TradingCalendar:
    return weekday_calendar(dt.date(2021, 1, 4), 260)


def slot_instants(calendar: TradingCalendar, n_days: int):
    """(bin_start, mark_end) UTC instants per slot for the first n_days."""
    bins, marks = [], []
    for date in calendar.dates[:n_days]:
        day_marks = calendar.session_marks(date)
        for i in range(SLOTS_PER_DAY):
            # the article bin lands mid-slot (xx:00 ET inside the 9:30-anchored hour)
            bins.append(day_marks[i] + dt.timedelta(minutes=30))
            marks.append(day_marks[i + 1])
    return bins, marks


def planted_pair(
    ticker: str,
    calendar: TradingCalendar,
    n_days: int,
    rng: np.random.Generator,
    couple_lag: int | None = None,
    strength: float = 0.8,
    noise: float = 0.5,
) -> tuple[HourlySentimentSeries, ReturnSeries]:
    """Synthetic hourly sentiment and return series on the session grid.

    When couple_lag is set, r[t+1] is driven by the sign of s[t - couple_lag]
    (flat slot indexing), i.e. coupling the study should detect at exactly
    that sentiment lag.
    """
    bins, marks = slot_instants(calendar, n_days)
    n = len(bins)
    scores = rng.random(n)
    returns = noise * rng.standard_normal(n)
    if couple_lag is not None:
        shift = 1 + couple_lag
        returns[shift:] += strength * np.sign(scores[:-shift] - 0.5)
    sent = HourlySentimentSeries(
        ticker=ticker, grid=bins, scores=scores, counts=np.ones(n, dtype=int)
    )
    ret = ReturnSeries(ticker=ticker, grid=marks, returns=returns)
    return sent, ret


# --- on-disk corpus fixture for the CLI --------------------------------------

POSITIVE_WORDS = ["surge", "rally", "gain", "beat", "strong", "record", "upbeat", "boost", "soar", "win"]
NEGATIVE_WORDS = ["slump", "miss", "drop", "weak", "loss", "cut", "fear", "fall", "plunge", "probe"]
FILLER_WORDS = [
    "company", "quarter", "report", "statement", "chief", "executive", "analyst", "guidance",
    "market", "shares", "price", "percent", "billion", "release", "product", "segment",
]


def corpus_companies(n: int = 10):
    names = [
        "Acme Industries", "Borealis Systems", "Cascade Energy", "Dynamo Retail",
        "Evergreen Capital", "Fairview Logistics", "Granite Health", "Horizon Media",
        "Ironwood Materials", "Juniper Technologies",
    ][:n]
    return {name: {"ticker": f"T{i:02d}", "keywords": [name, f"T{i:02d}"]} for i, name in enumerate(names)}


def build_corpus_fixture(root, seed: int = 7, n_days: int = 120, n_companies: int = 8):
    """Write a deterministic end-to-end input set under ``root``.

    Prices are planted so that articles' positive/negative word balance
    predicts the open-to-open label, which lets the rolling sentiment fit
    discover the planted vocabulary.
    """
    root.mkdir(parents=True, exist_ok=True)
    rng = substream(seed, "corpus-fixture")
    calendar = weekday_calendar(dt.date(2021, 1, 4), n_days, holidays=(dt.date(2021, 2, 15),))
    companies = corpus_companies(n_companies)
    names = sorted(companies)

    (root / "calendar.txt").write_text(
        "".join(f"{d.isoformat()}\n" for d in calendar.dates), encoding="utf-8"
    )
    (root / "keywords.json").write_text(json.dumps(companies, indent=2), encoding="utf-8")
    (root / "stopwords.txt").write_text(
        "the\nand\nfor\nwith\nthat\nthis\nfrom\nhave\nwas\nwere\n", encoding="utf-8"
    )

    # latent sentiment p per (company, day) drives both article wording and
    # the next open-to-open move
    latent = rng.random((len(names), len(calendar.dates)))

    articles = []
    for ci, name in enumerate(names):
        ticker = companies[name]["ticker"]
        for di, date in enumerate(calendar.dates):
            if rng.random() < 0.25:  # not every company makes news every day
                continue
            p = latent[ci, di]
            n_pos = int(rng.binomial(6, p))
            words = list(rng.choice(POSITIVE_WORDS, size=n_pos)) + list(
                rng.choice(NEGATIVE_WORDS, size=6 - n_pos)
            )
            words += list(rng.choice(FILLER_WORDS, size=8))
            order = rng.permutation(len(words))
            body_words = [words[i] for i in order]
            publish = calendar.session_instant(date, dt.time(10, 0)) + dt.timedelta(
                minutes=int(rng.integers(0, 240))
            )
            body = (
                f"{name} {' '.join(body_words[:7])} earnings notes.\n\n"
                f"{name} shares stock market investors discussed {' '.join(body_words[7:])}."
            )
            articles.append(
                {
                    "publish_date_utc": publish.isoformat(),
                    "crawl_time_utc": (publish + dt.timedelta(hours=2)).isoformat(),
                    "url": f"https://news.example/{ticker}/{di}-{len(articles)}",
                    "title": f"{name} update {di} {'-'.join(body_words[:2])}",
                    "text": body,
                    "mentions_counter": None,
                    "company": None,
                    "ticker": None,
                }
            )
    # a pair of exact-title duplicates and a near-duplicate body
    dup = dict(articles[0])
    dup["url"] = "https://mirror.example/dup"
    articles.append(dup)
    near = dict(articles[1])
    near["url"] = "https://mirror.example/near"
    near["title"] = near["title"] + " syndicated"
    near["text"] = near["text"] + " Extra sentence appended."
    articles.append(near)
    with open(root / "articles.jsonl", "w", encoding="utf-8") as fh:
        for record in articles:
            fh.write(json.dumps(record) + "\n")

    # daily opens: next-day move follows today's latent sentiment
    with open(root / "daily.csv", "w", encoding="utf-8") as fh:
        fh.write("date,ticker,open,close,adj_close\n")
        for ci, name in enumerate(names):
            ticker = companies[name]["ticker"]
            price = 100.0 * (1 + 0.1 * rng.random())
            for di, date in enumerate(calendar.dates):
                fh.write(f"{date.isoformat()},{ticker},{price:.6f},{price:.6f},{price:.6f}\n")
                drift = 0.03 * (latent[ci, di] - 0.5)
                price *= 1.0 + drift + 0.004 * rng.standard_normal()
        # benchmark index
        price = 300.0
        for date in calendar.dates:
            fh.write(f"{date.isoformat()},SPY,{price:.6f},{price:.6f},{price:.6f}\n")
            price *= 1.0 + 0.002 * rng.standard_normal()

    # minute mid-quotes at each session mark (plus one mid-hour quote)
    with open(root / "minute.csv", "w", encoding="utf-8") as fh:
        fh.write("timestamp_utc,ticker,mid\n")
        for ci, name in enumerate(names):
            ticker = companies[name]["ticker"]
            mid = 100.0
            for date in calendar.dates:
                for mark in calendar.session_marks(date):
                    mid *= 1.0 + 0.002 * rng.standard_normal()
                    fh.write(f"{mark.isoformat()},{ticker},{mid:.6f}\n")

    config_text = f"""
[paths]
articles = "articles.jsonl"
keywords = "keywords.json"
stopwords = "stopwords.txt"
calendar = "calendar.txt"
prices_daily = "daily.csv"
prices_minute = "minute.csv"

[ingest]
shingle_k = 5
jaccard_threshold = 0.7
financial_filter = "lexicon"

[sestm]
alpha_plus = 0.03
alpha_minus = 0.03
kappa = 8
lambda = 0.2
min_df = 4
score_start = "2021-03"
exclude_neutral = true

[te]
lags = [0]
n_shuffles = 20
n_bootstrap = 50
q = 0.05

[backtest]
regime = "daily-930"
day_lag = 1
n_long = 2
n_short = 2
n_sims = 50
benchmark = "SPY"

[run]
master_seed = 20210704
output_dir = "out"
threads = 1
"""
    (root / "newsflow.toml").write_text(config_text, encoding="utf-8")
    return root / "newsflow.toml"
