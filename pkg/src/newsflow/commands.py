"""Pipeline subcommand implementations.

Each command reads its inputs, writes CSV/JSON reports plus rendered figures
under the configured output directory, and embeds the effective config hash
and master seed in every report for provenance.  No command mutates its
inputs.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
from collections import Counter
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import backtest as bt
from . import corpus, figures, infotheory, market, sestm
from .config import RunConfig
from .errors import ConfigError, DataError

log = logging.getLogger(__name__)


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _provenance(config: RunConfig, command: str) -> dict:
    return {
        "command": command,
        "config_hash": config.hash(),
        "master_seed": config.master_seed,
        "config": config.as_dict(),
    }


# --- ingest -------------------------------------------------------------------


def _article_record(article: corpus.Article) -> dict:
    return {
        "publish_date_utc": article.publish_time_utc.isoformat(),
        "crawl_time_utc": article.crawl_time_utc.isoformat() if article.crawl_time_utc else None,
        "url": article.url,
        "title": article.title,
        "text": article.text,
        "mentions_counter": {k: article.mentions[k] for k in sorted(article.mentions)},
        "company": article.aligned_company,
        "ticker": article.ticker,
    }


def cmd_ingest(config: RunConfig) -> dict:
    """Load, filter, align and deduplicate the article corpus.

    Writes the surviving articles back out in the input schema together with a
    per-stage attrition report and figure.
    """
    paths = config.require_paths("articles", "keywords")
    table = corpus.KeywordTable.load(paths["keywords"])
    articles, load_report = corpus.load_articles(paths["articles"])

    stages = []
    n_input = load_report.lines

    def record_stage(name: str, before: int, after: int):
        removed = before - after
        stages.append(
            {
                "stage": name,
                "in": before,
                "out": after,
                "removed": removed,
                "removed_pct": 100.0 * removed / before if before else 0.0,
            }
        )

    record_stage("load", n_input, len(articles))

    # Mentions: recompute from the keyword table when absent, otherwise keep
    # the precomputed counts restricted to companies the table knows.
    matched = []
    for article in articles:
        if article.mentions:
            mentions = {c: n for c, n in article.mentions.items() if c in table}
        else:
            mentions = corpus.match_companies(article.title, article.text, table)
        if mentions:
            matched.append(replace(article, mentions=mentions))
    record_stage("company_match", len(articles), len(matched))

    filtered = corpus.filter_mentions(matched)
    record_stage("mention_filter", len(matched), len(filtered))

    mode = config.ingest["financial_filter"]
    if mode == "lexicon":
        predicate = corpus.finance_lexicon_filter()
        financial = [a for a in filtered if predicate(a)]
    elif mode == "none":
        financial = filtered
    else:
        raise ConfigError(f"unknown financial_filter mode {mode!r}")
    record_stage("financial_filter", len(filtered), len(financial))

    aligned = []
    for article in financial:
        company = article.aligned_company or corpus.align_article(article, table)
        if company is None:
            continue
        aligned.append(replace(article, aligned_company=company, ticker=table.ticker(company)))
    record_stage("alignment", len(financial), len(aligned))

    deduped = corpus.dedup(
        aligned,
        shingle_k=int(config.ingest["shingle_k"]),
        jaccard_threshold=float(config.ingest["jaccard_threshold"]),
    )
    record_stage("dedup", len(aligned), len(deduped))

    out_dir = config.output_dir / "ingest"
    out_dir.mkdir(parents=True, exist_ok=True)
    artifact = out_dir / "articles.jsonl"
    with open(artifact, "w", encoding="utf-8") as fh:
        for article in sorted(deduped, key=corpus.Article.sort_key):
            fh.write(json.dumps(_article_record(article), sort_keys=True, ensure_ascii=False))
            fh.write("\n")

    report = _provenance(config, "ingest")
    report["stages"] = stages
    report["load_skipped_reasons"] = dict(sorted(load_report.reasons.items()))
    report["articles_out"] = len(deduped)
    _write_json(out_dir / "ingest_report.json", report)
    figures.save_attrition_figure(stages, out_dir / "attrition.png")
    log.info("ingest: %d lines in, %d articles out", n_input, len(deduped))
    return report


# --- fit and score -------------------------------------------------------------


def _load_artifact(config: RunConfig) -> list[corpus.Article]:
    artifact = config.output_dir / "ingest" / "articles.jsonl"
    if not artifact.exists():
        raise DataError(f"ingest artifact not found at {artifact}; run `ingest` first")
    articles, _ = corpus.load_articles(artifact)
    return articles


def _month_key(month: dt.datetime) -> str:
    return f"{month.year:04d}-{month.month:02d}"


def cmd_fit_score(config: RunConfig) -> dict:
    """Rolling monthly refits of the sentiment model, then score every
    article with the model from the start of its month."""
    paths = config.require_paths("stopwords", "calendar", "prices_daily")
    articles = _load_artifact(config)
    if not articles:
        raise DataError("ingest artifact contains no articles")
    stopwords = corpus.load_stopwords(paths["stopwords"])
    calendar = market.TradingCalendar.load(paths["calendar"])
    bars, _ = market.load_prices(paths["prices_daily"], kind="daily")
    opens_by_ticker: dict[str, dict[dt.date, float]] = {}
    for bar in bars:
        opens_by_ticker.setdefault(bar.ticker, {})[bar.timestamp.date()] = bar.open

    docs = []
    for i, article in enumerate(sorted(articles, key=corpus.Article.sort_key)):
        doc_id = f"doc{i:07d}"
        tokens = Counter(corpus.tokenize(article.title + "\n" + article.text, stopwords))
        label = None
        opens = opens_by_ticker.get(article.ticker or "", {})
        if opens:
            ret = market.label_return(article.publish_time_utc, opens, calendar)
            if ret is not None and ret != 0.0:
                label = corpus.LabeledDoc.from_return(doc_id, ret)
        docs.append(
            sestm.CorpusDoc(
                doc_id=doc_id,
                publish_time_utc=article.publish_time_utc,
                token_counts=dict(tokens),
                ticker=article.ticker,
                label=label,
            )
        )

    try:
        year, month = map(int, str(config.sestm["score_start"]).split("-"))
        score_start = dt.datetime(year, month, 1, tzinfo=market.UTC)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"score_start must look like 2018-01: {exc}") from exc
    warmup = [d for d in docs if d.label is not None and d.publish_time_utc < score_start]
    if not warmup:
        raise ConfigError(
            f"no labeled articles before {_month_key(score_start)}: the warm-up window "
            "preceding the first scheduled fit is empty"
        )
    last = max(d.publish_time_utc for d in docs)
    months = sestm.month_range(score_start, last)

    params = sestm.ScreeningParams(
        alpha_plus=float(config.sestm["alpha_plus"]),
        alpha_minus=float(config.sestm["alpha_minus"]),
        kappa=int(config.sestm["kappa"]),
    )
    models = sestm.rolling_refit(
        docs,
        months,
        params,
        prior_weight=float(config.sestm["lambda"]),
        min_df=int(config.sestm["min_df"]),
    )
    scored = sestm.score_corpus(docs, models)

    out_dir = config.output_dir / "scores"
    models_dir = out_dir / "models"
    models_dir.mkdir(parents=True, exist_ok=True)
    for month, model in models:
        if model is not None:
            (models_dir / f"{_month_key(month)}.json").write_text(model.to_json() + "\n")
    _write_csv(
        out_dir / "scored.csv",
        ["doc_id", "publish_time_utc", "ticker", "score", "n_charged", "model_month"],
        [
            (
                a.doc_id,
                a.publish_time_utc.isoformat(),
                a.ticker or "",
                float(a.score),
                a.n_charged,
                _month_key(a.model_month),
            )
            for a in scored
        ],
    )
    report = _provenance(config, "fit-score")
    report["months_fitted"] = [_month_key(m) for m, model in models if model is not None]
    report["months_skipped"] = [_month_key(m) for m, model in models if model is None]
    report["articles_scored"] = len(scored)
    report["vocab_sizes"] = {
        _month_key(m): len(model.charged_vocab) for m, model in models if model is not None
    }
    _write_json(out_dir / "fit_report.json", report)
    log.info("fit-score: %d months, %d articles scored", len(months), len(scored))
    return report


def _load_scored(config: RunConfig) -> list[sestm.ScoredArticle]:
    path = config.output_dir / "scores" / "scored.csv"
    if not path.exists():
        raise DataError(f"scored articles not found at {path}; run `fit-score` first")
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            year, month = map(int, row["model_month"].split("-"))
            rows.append(
                sestm.ScoredArticle(
                    doc_id=row["doc_id"],
                    ticker=row["ticker"] or None,
                    publish_time_utc=market.parse_utc(row["publish_time_utc"]),
                    score=float(row["score"]),
                    n_charged=int(row["n_charged"]),
                    model_month=dt.datetime(year, month, 1, tzinfo=market.UTC),
                )
            )
    return rows


def _usable_scores(config: RunConfig, scored) -> list[sestm.ScoredArticle]:
    if config.sestm["exclude_neutral"]:
        return [a for a in scored if a.has_signal]
    return list(scored)


# --- transfer entropy study ----------------------------------------------------


def cmd_te(config: RunConfig) -> dict:
    """Per-ticker transfer entropy studies (one per configured sentiment lag)
    with Benjamini-Yekutieli FDR control."""
    paths = config.require_paths("prices_minute", "calendar")
    calendar = market.TradingCalendar.load(paths["calendar"])
    scored = _usable_scores(config, _load_scored(config))
    if not scored:
        raise DataError("no scored articles with signal; nothing to study")

    by_ticker: dict[str, list] = {}
    for article in scored:
        if article.ticker:
            by_ticker.setdefault(article.ticker, []).append(
                (article.publish_time_utc, article.score)
            )
    sentiment = {
        ticker: market.bin_sentiment_hourly(items, ticker)
        for ticker, items in sorted(by_ticker.items())
    }

    minute_bars, _ = market.load_prices(paths["prices_minute"], kind="minute")
    bars_by_ticker: dict[str, list] = {}
    for bar in minute_bars:
        bars_by_ticker.setdefault(bar.ticker, []).append(bar)
    returns = {}
    for ticker in sorted(set(sentiment) & set(bars_by_ticker)):
        series = market.hourly_returns(bars_by_ticker[ticker], calendar)
        if len(series.returns):
            returns[ticker] = series

    encoder = infotheory.SymbolicEncoderConfig(quantiles=tuple(config.te["quantiles"]))
    q = float(config.te["q"])
    out_dir = config.output_dir / "te"
    out_dir.mkdir(parents=True, exist_ok=True)

    all_rows = []
    studies = {}
    for lag in config.te["lags"]:
        cfg = infotheory.TEConfig(
            sentiment_lag=int(lag),
            n_shuffles=int(config.te["n_shuffles"]),
            n_bootstrap=int(config.te["n_bootstrap"]),
            seed=config.master_seed,
            encoder=encoder,
        )
        study = infotheory.run_te_study(sentiment, returns, cfg, q=q, threads=config.threads)
        studies[int(lag)] = study
        rejected = set(study.rejected)
        for r in study.results:
            all_rows.append(
                (
                    r.ticker,
                    float(r.te_bits),
                    float(r.ete_bits),
                    float(r.p_value),
                    r.lag_hours,
                    r.n_obs,
                    r.differenced,
                    r.ticker in rejected,
                )
            )
        figures.save_te_figure(study.results, rejected, out_dir / f"te_study_lag{lag}.png")

    _write_csv(
        out_dir / "te_study.csv",
        ["ticker", "te_bits", "ete_bits", "p_value", "lag_hours", "n_obs", "differenced", "by_rejected"],
        all_rows,
    )
    manifest = _provenance(config, "te")
    manifest["fdr_q"] = q
    manifest["rejected"] = {str(lag): s.rejected for lag, s in studies.items()}
    manifest["skipped"] = {str(lag): s.skipped for lag, s in studies.items()}
    _write_json(out_dir / "te_manifest.json", manifest)
    log.info(
        "te: %d tickers studied, rejections per lag: %s",
        len(returns),
        {lag: len(s.rejected) for lag, s in studies.items()},
    )
    return manifest


# --- backtest -------------------------------------------------------------------


def cmd_backtest(config: RunConfig) -> dict:
    """Simulate the sentiment strategy against random baselines and the
    benchmark, then write the full performance report."""
    paths = config.require_paths("prices_daily", "calendar")
    calendar = market.TradingCalendar.load(paths["calendar"])
    scored = _usable_scores(config, _load_scored(config))
    if not scored:
        raise DataError("no scored articles with signal; nothing to trade")

    bars, _ = market.load_prices(paths["prices_daily"], kind="daily")
    bars_by_ticker: dict[str, list] = {}
    for bar in bars:
        bars_by_ticker.setdefault(bar.ticker, []).append(bar)
    returns_by_ticker = {}
    for ticker, ticker_bars in sorted(bars_by_ticker.items()):
        if len(ticker_bars) >= 2:
            returns_by_ticker[ticker] = market.daily_return_map(
                market.open_to_open_returns(ticker_bars)
            )

    spec = bt.PortfolioSpec(
        n_long=int(config.backtest["n_long"]),
        n_short=int(config.backtest["n_short"]),
        day_lag=int(config.backtest["day_lag"]),
        regime=str(config.backtest["regime"]),
    )
    benchmark_ticker = str(config.backtest["benchmark"]) or None

    formation_days = calendar.dates if spec.hold_days == 1 else calendar.dates[:: spec.hold_days]
    portfolios = []
    for day in formation_days:
        portfolio = bt.build_portfolio(day, scored, spec, calendar)
        if portfolio is not None:
            portfolios.append(portfolio)
    if not portfolios:
        raise DataError("no formation day produced a portfolio; check the inputs")

    daily = bt.simulate(portfolios, returns_by_ticker, calendar, hold_days=spec.hold_days)
    if len(daily.values) < 2:
        raise DataError("fewer than two strategy days; cannot compute statistics")

    universe = sorted(tk for tk in returns_by_ticker if tk != benchmark_ticker)
    baselines = bt.random_baseline(
        universe,
        returns_by_ticker,
        daily.dates,
        calendar,
        spec,
        n_sims=int(config.backtest["n_sims"]),
        seed=config.master_seed,
        threads=config.threads,
    )
    benchmark = None
    if benchmark_ticker and benchmark_ticker in returns_by_ticker:
        bench_map = returns_by_ticker[benchmark_ticker]
        bench_dates = [d for d in daily.dates if d in bench_map]
        benchmark = bt.DailyReturns(
            dates=bench_dates, values=np.array([bench_map[d] for d in bench_dates])
        )
    report = bt.build_report(daily, baselines=baselines, benchmark=benchmark)

    out_dir = config.output_dir / "backtest"
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(
        out_dir / "daily_returns.csv",
        ["date", "return"],
        [(d.isoformat(), float(r)) for d, r in zip(daily.dates, daily.values)],
    )
    equity = np.cumprod(1.0 + daily.values)
    _write_csv(
        out_dir / "equity_curve.csv",
        ["date", "equity"],
        [(d.isoformat(), float(e)) for d, e in zip(daily.dates, equity)],
    )
    _write_csv(
        out_dir / "portfolios.csv",
        ["date", "side", "ticker"],
        [
            (p.formation_date.isoformat(), side, ticker)
            for p in portfolios
            for side, leg in (("long", p.long), ("short", p.short))
            for ticker in leg
        ],
    )

    usable = [b.metrics for b in baselines if b.metrics is not None]
    baseline_sharpes = np.array([m.sharpe for m in usable]) if usable else np.array([0.0])
    payload = _provenance(config, "backtest")
    payload["report"] = {
        "ann_avg_return": report.ann_avg_return,
        "ann_volatility": report.ann_volatility,
        "sharpe": report.sharpe,
        "sharpe_p": report.sharpe_p,
        "mdd": report.mdd,
        "alpha_ann": report.alpha_ann,
        "alpha_p": report.alpha_p,
        "r_squared": report.r_squared,
        "n_days": report.n_days,
    }
    payload["random_baseline"] = {
        "n_sims": len(baselines),
        "sharpe_mean": float(baseline_sharpes.mean()),
        "sharpe_sd": float(baseline_sharpes.std(ddof=1)) if len(baseline_sharpes) > 1 else 0.0,
        "mdd_mean": float(np.mean([m.mdd for m in usable])) if usable else None,
        "ann_return_mean": float(np.mean([m.ann_avg_return for m in usable])) if usable else None,
    }
    _write_json(out_dir / "report.json", payload)

    benchmark_curve = None
    if benchmark is not None and benchmark.dates == daily.dates:
        benchmark_curve = benchmark.values
    figures.save_equity_figure(
        daily.dates,
        daily.values,
        out_dir / "equity.png",
        benchmark=benchmark_curve,
        baseline_paths=[b.returns.values for b in baselines[:100] if len(b.returns.values) == len(daily.values)],
    )
    log.info("backtest: %d days, sharpe %.2f", report.n_days, report.sharpe)
    return payload


# --- strategy comparison ---------------------------------------------------------


def _load_run(run_dir: Path) -> tuple[bt.DailyReturns, list[bt.DailyPortfolio]]:
    returns_path = run_dir / "backtest" / "daily_returns.csv"
    portfolios_path = run_dir / "backtest" / "portfolios.csv"
    if not returns_path.exists() or not portfolios_path.exists():
        raise DataError(f"{run_dir} does not contain a completed backtest run")
    dates, values = [], []
    with open(returns_path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            dates.append(dt.date.fromisoformat(row["date"]))
            values.append(float(row["return"]))
    legs: dict[dt.date, dict[str, list[str]]] = {}
    with open(portfolios_path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            day = dt.date.fromisoformat(row["date"])
            legs.setdefault(day, {"long": [], "short": []})[row["side"]].append(row["ticker"])
    portfolios = [
        bt.DailyPortfolio(formation_date=day, long=tuple(sides["long"]), short=tuple(sides["short"]))
        for day, sides in sorted(legs.items())
    ]
    return bt.DailyReturns(dates=dates, values=np.array(values)), portfolios


def cmd_compare(config: RunConfig, run_a, run_b) -> dict:
    """Compare two completed backtest runs: return correlation and per-day
    Jaccard overlap of the portfolio legs."""
    returns_a, portfolios_a = _load_run(Path(run_a))
    returns_b, portfolios_b = _load_run(Path(run_b))
    stats = bt.compare_strategies(returns_a, returns_b, portfolios_a, portfolios_b)

    out_dir = config.output_dir / "compare"
    _write_csv(
        out_dir / "comparison.csv",
        [
            "correlation",
            "corr_p",
            "jaccard_long_mean",
            "jaccard_long_sd",
            "jaccard_short_mean",
            "jaccard_short_sd",
            "n_days",
        ],
        [
            (
                float(stats.correlation),
                float(stats.corr_p),
                float(stats.jaccard_long_mean),
                float(stats.jaccard_long_sd),
                float(stats.jaccard_short_mean),
                float(stats.jaccard_short_sd),
                stats.n_days,
            )
        ],
    )
    manifest = _provenance(config, "compare")
    manifest["run_a"] = str(run_a)
    manifest["run_b"] = str(run_b)
    manifest["comparison"] = asdict(stats)
    _write_json(out_dir / "compare_manifest.json", manifest)
    return manifest
