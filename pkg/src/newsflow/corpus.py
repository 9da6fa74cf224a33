"""Load, filter, align, deduplicate, and vectorise news articles.

Everything in this module is a pure function over immutable inputs, so the
article list can be sharded across workers; outputs are deterministic for
identical inputs.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DataError
from .market import parse_utc

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Article:
    publish_time_utc: dt.datetime
    title: str
    text: str
    url: str = ""
    crawl_time_utc: dt.datetime | None = None
    mentions: dict[str, int] = field(default_factory=dict)
    aligned_company: str | None = None
    ticker: str | None = None

    def sort_key(self):
        return (self.publish_time_utc, self.url, self.title)


@dataclass(frozen=True)
class ArticleSchema:
    """JSONL field names; defaults match the released-dataset layout."""

    publish_time: str = "publish_date_utc"
    crawl_time: str = "crawl_time_utc"
    url: str = "url"
    title: str = "title"
    text: str = "text"
    mentions: str = "mentions_counter"
    company: str = "company"
    ticker: str = "ticker"


DEFAULT_SCHEMA = ArticleSchema()


@dataclass
class LoadReport:
    lines: int = 0
    loaded: int = 0
    skipped: int = 0
    reasons: Counter = field(default_factory=Counter)

    def skip(self, reason: str):
        self.skipped += 1
        self.reasons[reason] += 1


def _parse_mentions(raw) -> dict[str, int]:
    if raw is None:
        return {}
    if isinstance(raw, dict):
        items = raw.items()
    elif isinstance(raw, list):
        items = ((k, v) for k, v in raw)
    else:
        raise ValueError("mentions must be a mapping or list of pairs")
    mentions = {}
    for company, count in items:
        count = int(count)
        if count < 1:
            raise ValueError("mention count below 1")
        mentions[str(company)] = count
    return mentions


def load_articles(path, schema: ArticleSchema = DEFAULT_SCHEMA) -> tuple[list[Article], LoadReport]:
    """Read one JSON object per line; invalid records are counted, not fatal.

    Raises DataError if the file is unreadable or more than half of the lines
    are invalid (likely the wrong file).
    """
    report = LoadReport()
    articles: list[Article] = []
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read article file {path}: {exc}") from exc
    with fh:
        for line in fh:
            if not line.strip():
                continue
            report.lines += 1
            try:
                record = json.loads(line)
                publish = parse_utc(str(record[schema.publish_time]))
            except (json.JSONDecodeError, KeyError, ValueError, TypeError):
                report.skip("missing_or_bad_publish_time")
                continue
            title = str(record.get(schema.title, "") or "").strip()
            text = str(record.get(schema.text, "") or "").strip()
            if not title or not text:
                report.skip("empty_title_or_text")
                continue
            crawl = None
            raw_crawl = record.get(schema.crawl_time)
            if raw_crawl:
                try:
                    crawl = parse_utc(str(raw_crawl))
                except ValueError:
                    crawl = None
            try:
                mentions = _parse_mentions(record.get(schema.mentions))
            except (ValueError, TypeError):
                report.skip("bad_mentions")
                continue
            company = record.get(schema.company) or None
            if company is not None and mentions and company not in mentions:
                report.skip("aligned_company_not_mentioned")
                continue
            articles.append(
                Article(
                    publish_time_utc=publish,
                    crawl_time_utc=crawl,
                    url=str(record.get(schema.url, "") or ""),
                    title=title,
                    text=text,
                    mentions=mentions,
                    aligned_company=company,
                    ticker=record.get(schema.ticker) or None,
                )
            )
            report.loaded += 1
    if report.lines == 0:
        log.warning("%s: no articles found", path)
    elif report.skipped > report.lines / 2:
        raise DataError(
            f"{path}: {report.skipped}/{report.lines} lines invalid; wrong file?"
        )
    return articles, report


# --- company matching ------------------------------------------------------

_TICKER_STYLE = re.compile(r"^[A-Z0-9&.\-]{1,5}$")


def _is_ticker_keyword(keyword: str) -> bool:
    # All-caps short keywords ("IBM") match case-sensitively so that prose
    # "ibm" does not count; longer names match case-insensitively.
    return len(keyword) <= 5 and keyword.upper() == keyword and bool(_TICKER_STYLE.match(keyword))


def _keyword_pattern(keyword: str) -> re.Pattern:
    flags = 0 if _is_ticker_keyword(keyword) else re.IGNORECASE
    return re.compile(r"(?<!\w)" + re.escape(keyword) + r"(?!\w)", flags)


class KeywordTable:
    """Company -> (ticker, keywords) with precompiled matchers."""

    def __init__(self, entries: dict[str, dict]):
        if not entries:
            raise ConfigError("keyword table is empty")
        self.entries = {}
        self._patterns: dict[str, list[re.Pattern]] = {}
        for company, entry in entries.items():
            keywords = list(entry["keywords"])
            if not keywords:
                raise ConfigError(f"company {company!r} has no keywords")
            self.entries[company] = {"ticker": entry["ticker"], "keywords": keywords}
            self._patterns[company] = [_keyword_pattern(k) for k in keywords]

    @classmethod
    def load(cls, path) -> "KeywordTable":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def __contains__(self, company: str) -> bool:
        return company in self.entries

    def companies(self) -> list[str]:
        return sorted(self.entries)

    def ticker(self, company: str) -> str:
        return self.entries[company]["ticker"]

    def count_occurrences(self, company: str, text: str) -> int:
        return sum(len(p.findall(text)) for p in self._patterns[company])

    def first_occurrence(self, company: str, text: str) -> int | None:
        positions = [m.start() for p in self._patterns[company] for m in [p.search(text)] if m]
        return min(positions) if positions else None


def match_companies(title: str, text: str, table: KeywordTable) -> dict[str, int]:
    """Total keyword occurrences per company across title + text."""
    haystack = title + "\n" + text
    counts = {}
    for company in table.companies():
        n = table.count_occurrences(company, haystack)
        if n > 0:
            counts[company] = n
    return counts


def filter_mentions(articles: list[Article]) -> list[Article]:
    """Keep mentions with count >= 2; drop articles left with none."""
    kept = []
    for article in articles:
        mentions = {c: n for c, n in article.mentions.items() if n >= 2}
        if mentions:
            kept.append(replace(article, mentions=mentions))
    return kept


def first_paragraph(text: str, fallback_chars: int = 500) -> str:
    """Text before the first blank line, else the first 500 characters."""
    parts = re.split(r"\n\s*\n", text, maxsplit=1)
    if len(parts) == 2:
        return parts[0]
    return text[:fallback_chars]


def align_article(article: Article, table: KeywordTable) -> str | None:
    """Company whose keyword appears in the title or first paragraph.

    Ties break by higher total mention count, then earliest first occurrence,
    then company id (for determinism).  None if no mentioned company appears
    there.
    """
    head = article.title + "\n" + first_paragraph(article.text)
    candidates = []
    for company in sorted(article.mentions):
        if company not in table:
            continue
        offset = table.first_occurrence(company, head)
        if offset is not None:
            candidates.append((-article.mentions[company], offset, company))
    if not candidates:
        return None
    return min(candidates)[2]


# --- deduplication ---------------------------------------------------------

_WORD = re.compile(r"\w+")


def _normalized_title(title: str) -> str:
    return " ".join(title.lower().split())


def _shingles(text: str, k: int) -> frozenset:
    words = _WORD.findall(text.lower())
    if not words:
        return frozenset()
    if len(words) < k:
        return frozenset([tuple(words)])
    return frozenset(tuple(words[i : i + k]) for i in range(len(words) - k + 1))


def _jaccard(a: frozenset, b: frozenset) -> float:
    if not a or not b:
        return 0.0
    return len(a & b) / len(a | b)


def dedup(articles: list[Article], shingle_k: int = 5, jaccard_threshold: float = 0.7) -> list[Article]:
    """Two-pass duplicate removal, keeping the earliest copy.

    Pass 1 drops articles whose normalised titles already appeared.  Pass 2
    drops articles whose body k-shingle Jaccard similarity with an earlier
    survivor reaches the threshold, restricted to the same aligned company and
    UTC calendar day.  Idempotent and independent of input order.
    """
    if shingle_k < 1:
        raise ConfigError(f"shingle_k must be >= 1, got {shingle_k}")
    if not 0.0 < jaccard_threshold <= 1.0:
        raise ConfigError(f"jaccard_threshold must be in (0, 1], got {jaccard_threshold}")

    ordered = sorted(articles, key=Article.sort_key)

    seen_titles = set()
    buckets: dict[tuple, list[frozenset]] = {}
    survivors = []
    for article in ordered:
        title = _normalized_title(article.title)
        if title in seen_titles:
            continue
        seen_titles.add(title)
        if article.aligned_company is None:
            survivors.append(article)
            continue
        key = (article.aligned_company, article.publish_time_utc.date())
        shingles = _shingles(article.text, shingle_k)
        bucket = buckets.setdefault(key, [])
        if any(_jaccard(shingles, other) >= jaccard_threshold for other in bucket):
            continue
        bucket.append(shingles)
        survivors.append(article)
    return survivors


# --- tokenisation and the document-term matrix -----------------------------

_ALPHA = re.compile(r"[a-z]+")

DEFAULT_STOPWORDS = frozenset(
    """a about above after again against all also am an and any are aren as at be because been
    before being below between both but by can cannot could couldn did didn do does doesn doing
    don down during each few for from further had hadn has hasn have haven having he her here hers
    herself him himself his how i if in into is isn it its itself just me more most mustn my myself
    no nor not now of off on once only or other ought our ours ourselves out over own same shan she
    should shouldn so some such than that the their theirs them themselves then there these they
    this those through to too under until up very was wasn we were weren what when where which
    while who whom why will with won would wouldn you your yours yourself yourselves""".split()
)


def load_stopwords(path) -> frozenset:
    """One token per line, UTF-8; blank lines ignored."""
    with open(path, encoding="utf-8") as fh:
        return frozenset(line.strip() for line in fh if line.strip())


def tokenize(text: str, stopwords: frozenset = DEFAULT_STOPWORDS) -> list[str]:
    """Lowercase ASCII-alphabetic runs, length >= 3, stopwords removed."""
    return [
        token
        for token in _ALPHA.findall(text.lower())
        if len(token) >= 3 and token not in stopwords
    ]


@dataclass
class DocTermMatrix:
    vocab: list[str]  # lexicographic
    counts: sp.csr_matrix  # n_docs x n_terms raw frequencies
    doc_ids: list

    @property
    def n_docs(self) -> int:
        return self.counts.shape[0]

    def vocab_index(self) -> dict[str, int]:
        return {term: j for j, term in enumerate(self.vocab)}


def build_term_matrix(token_docs, min_df: int = 1, doc_ids=None) -> DocTermMatrix:
    """Count matrix over tokens appearing in at least min_df documents.

    Columns are lexicographically ordered, so the construction is
    deterministic.  Tokenisation must already have been applied.
    """
    token_docs = list(token_docs)
    if not token_docs:
        raise DataError("cannot build a term matrix from an empty corpus")
    if min_df < 1:
        raise ConfigError(f"min_df must be >= 1, got {min_df}")
    if doc_ids is None:
        doc_ids = list(range(len(token_docs)))

    doc_freq: Counter = Counter()
    doc_counts = []
    for tokens in token_docs:
        counts = tokens if isinstance(tokens, (Counter, dict)) else Counter(tokens)
        doc_counts.append(counts)
        doc_freq.update(counts.keys())
    vocab = sorted(term for term, df in doc_freq.items() if df >= min_df)
    if not vocab:
        log.warning("term matrix has an empty vocabulary (min_df=%d)", min_df)
    index = {term: j for j, term in enumerate(vocab)}

    rows, cols, data = [], [], []
    for i, counts in enumerate(doc_counts):
        for term, n in counts.items():
            j = index.get(term)
            if j is not None:
                rows.append(i)
                cols.append(j)
                data.append(n)
    counts = sp.csr_matrix(
        (data, (rows, cols)), shape=(len(token_docs), len(vocab)), dtype=np.int64
    )
    return DocTermMatrix(vocab=vocab, counts=counts, doc_ids=list(doc_ids))


@dataclass(frozen=True)
class LabeledDoc:
    doc_id: object
    label_return: float
    label_sign: int

    def __post_init__(self):
        if self.label_return == 0:
            raise DataError("zero returns carry no sign and are excluded")
        if self.label_sign != (1 if self.label_return > 0 else -1):
            raise DataError("label_sign inconsistent with label_return")

    @classmethod
    def from_return(cls, doc_id, label_return: float) -> "LabeledDoc":
        return cls(doc_id, label_return, 1 if label_return > 0 else -1)


# --- financial/non-financial filter ----------------------------------------

FINANCE_LEXICON = frozenset(
    """stock stocks share shares shareholder shareholders equity equities market markets trading
    trader traders earnings revenue revenues profit profits loss losses dividend dividends quarter
    quarterly guidance forecast outlook analyst analysts rating upgrade downgrade price target
    valuation ipo merger acquisition takeover buyback nasdaq nyse sec filing filings portfolio
    investor investors investment fund funds hedge etf bond bonds yield interest rate rates fed
    inflation gdp margin margins eps ebitda cash debt balance sheet capital fiscal""".split()
)


def finance_lexicon_filter(lexicon: frozenset = FINANCE_LEXICON, min_hits: int = 1):
    """Default pluggable financial-news predicate: at least min_hits lexicon
    words anywhere in title + text."""

    def predicate(article: Article) -> bool:
        words = set(_ALPHA.findall((article.title + " " + article.text).lower()))
        return len(words & lexicon) >= min_hits

    return predicate
