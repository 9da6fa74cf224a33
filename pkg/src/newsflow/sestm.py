"""Supervised two-topic sentiment model (SESTM-style).

Fitting has three stages: marginal screening selects the sentiment-charged
vocabulary, a rank proxy turns return labels into approximate per-document
sentiment weights, and the topic vectors come from the closed-form
least-squares solution of the mixture regression.  New articles are scored by
penalised maximum likelihood with a symmetric Beta prior pulling scores toward
the neutral value 0.5.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.stats import rankdata

from .corpus import DocTermMatrix, LabeledDoc
from .errors import ConfigError, FittingError, InsufficientDataError
from .market import UTC

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScreeningParams:
    """Thresholds for the charged-vocabulary screen.

    A word j with document frequency k_j and positive-label fraction f_j is
    charged when k_j > kappa and f_j lies outside [1/2 - alpha_minus,
    1/2 + alpha_plus] (strict inequalities).
    """

    alpha_plus: float = 0.1
    alpha_minus: float = 0.1
    kappa: int = 20

    def __post_init__(self):
        if self.alpha_plus < 0 or 0.5 + self.alpha_plus > 1:
            raise ConfigError(f"alpha_plus must be in [0, 0.5], got {self.alpha_plus}")
        if self.alpha_minus < 0 or 0.5 - self.alpha_minus < 0:
            raise ConfigError(f"alpha_minus must be in [0, 0.5], got {self.alpha_minus}")
        if self.kappa < 1:
            raise ConfigError(f"kappa must be a positive integer, got {self.kappa}")


@dataclass
class ScreeningStats:
    """Per-word audit statistics: doc_freq is k_j; pos_frac is f_j (NaN where
    a word appears in no labeled document)."""

    vocab: list[str]
    doc_freq: np.ndarray
    pos_frac: np.ndarray


def screen_vocabulary(
    matrix: DocTermMatrix, labels: list[LabeledDoc], params: ScreeningParams
) -> tuple[list[str], ScreeningStats]:
    """Select the sentiment-charged vocabulary by marginal screening."""
    if matrix.n_docs != len(labels):
        raise ConfigError(
            f"matrix has {matrix.n_docs} rows but {len(labels)} labels supplied"
        )
    signs = np.array([lab.label_sign for lab in labels])
    if not ((signs > 0).any() and (signs < 0).any()):
        raise ConfigError("screening needs at least one positive and one negative label")

    presence = (matrix.counts > 0).astype(np.int64)
    doc_freq = np.asarray(presence.sum(axis=0)).ravel()
    pos_freq = np.asarray(presence[signs > 0].sum(axis=0)).ravel()
    with np.errstate(invalid="ignore"):
        pos_frac = np.where(doc_freq > 0, pos_freq / np.maximum(doc_freq, 1), np.nan)

    frequent = doc_freq > params.kappa
    charged_frac = (pos_frac > 0.5 + params.alpha_plus) | (pos_frac < 0.5 - params.alpha_minus)
    selected = frequent & np.nan_to_num(charged_frac, nan=False)

    stats = ScreeningStats(vocab=matrix.vocab, doc_freq=doc_freq, pos_frac=pos_frac)
    if not selected.any():
        if not frequent.any():
            raise ConfigError(
                f"empty charged vocabulary: no word exceeds kappa={params.kappa} documents"
            )
        raise ConfigError(
            "empty charged vocabulary: alpha thresholds "
            f"(+{params.alpha_plus}, -{params.alpha_minus}) exclude every frequent word"
        )
    charged = [matrix.vocab[j] for j in np.flatnonzero(selected)]
    return charged, stats


def rank_proxy(labels: list[LabeledDoc]) -> np.ndarray:
    """rank(y_i)/n with average ranks for ties; values in (0, 1]."""
    if len(labels) < 2:
        raise InsufficientDataError("rank proxy needs n >= 2", required=2, got=len(labels))
    y = np.array([lab.label_return for lab in labels], dtype=float)
    return rankdata(y, method="average") / len(y)


def fit_topics(counts_charged, proxy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form topic estimate from charged-word counts and the rank proxy.

    Rows with no charged words are dropped from the fit.  Each document row is
    normalised to frequencies, regressed on the weights [p_i, 1 - p_i], and the
    resulting columns are clipped at zero and renormalised onto the simplex.
    """
    counts = sp.csr_matrix(counts_charged, dtype=float)
    proxy = np.asarray(proxy, dtype=float)
    if counts.shape[0] != len(proxy):
        raise ConfigError("counts and proxy lengths differ")
    totals = np.asarray(counts.sum(axis=1)).ravel()
    keep = totals > 0
    if keep.sum() < 2:
        raise InsufficientDataError(
            "need at least two documents with charged words", required=2, got=int(keep.sum())
        )
    counts = counts[keep]
    proxy = proxy[keep]
    totals = totals[keep]

    freqs = sp.diags(1.0 / totals) @ counts  # rows of d~
    weights = np.vstack([proxy, 1.0 - proxy])  # 2 x n
    gram = weights @ weights.T
    if np.linalg.cond(gram) > 1e12:
        raise FittingError("rank proxies are all equal; weight matrix is singular")
    estimate = (freqs.T @ weights.T) @ np.linalg.inv(gram)  # |vocab| x 2

    clipped = np.clip(np.asarray(estimate), 0.0, None)
    sums = clipped.sum(axis=0)
    if np.any(sums <= 0):
        raise FittingError("a topic vector collapsed to zero after clipping")
    normalized = clipped / sums
    return normalized[:, 0].copy(), normalized[:, 1].copy()


def _as_probability_vector(values, name: str) -> np.ndarray:
    vec = np.asarray(values, dtype=float)
    if np.any(vec < 0) or abs(vec.sum() - 1.0) > 1e-9:
        raise FittingError(f"{name} is not a probability vector")
    return vec


@dataclass
class SentimentModel:
    """Charged vocabulary with its positive/negative topic vectors."""

    charged_vocab: list[str]
    o_plus: np.ndarray
    o_minus: np.ndarray
    params: ScreeningParams
    prior_weight: float  # serialised as "lambda"
    fitted_at: dt.datetime

    def __post_init__(self):
        if len(self.charged_vocab) < 2:
            raise FittingError("charged vocabulary must contain at least two words")
        self.o_plus = _as_probability_vector(self.o_plus, "o_plus")
        self.o_minus = _as_probability_vector(self.o_minus, "o_minus")
        if not (len(self.charged_vocab) == len(self.o_plus) == len(self.o_minus)):
            raise FittingError("vocabulary and topic vector lengths differ")
        if self.prior_weight <= 0:
            raise ConfigError(f"prior weight must be positive, got {self.prior_weight}")
        self._index = {term: j for j, term in enumerate(self.charged_vocab)}

    def count_vector(self, token_counts: dict) -> np.ndarray:
        d = np.zeros(len(self.charged_vocab))
        for term, n in token_counts.items():
            j = self._index.get(term)
            if j is not None:
                d[j] = n
        return d

    def to_json(self) -> str:
        return json.dumps(
            {
                "charged_vocab": self.charged_vocab,
                "o_plus": self.o_plus.tolist(),
                "o_minus": self.o_minus.tolist(),
                "params": {
                    "alpha_plus": self.params.alpha_plus,
                    "alpha_minus": self.params.alpha_minus,
                    "kappa": self.params.kappa,
                },
                "lambda": self.prior_weight,
                "fitted_at": self.fitted_at.isoformat(),
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, payload: str) -> "SentimentModel":
        raw = json.loads(payload)
        return cls(
            charged_vocab=list(raw["charged_vocab"]),
            o_plus=np.array(raw["o_plus"], dtype=float),
            o_minus=np.array(raw["o_minus"], dtype=float),
            params=ScreeningParams(**raw["params"]),
            prior_weight=raw["lambda"],
            fitted_at=dt.datetime.fromisoformat(raw["fitted_at"]),
        )


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_max(f, lo: float, hi: float, tol: float = 1e-6) -> float:
    """Maximise a unimodal function on [lo, hi] to absolute tolerance tol."""
    a, b = lo, hi
    x1 = b - _INV_PHI * (b - a)
    x2 = a + _INV_PHI * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol:
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INV_PHI * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INV_PHI * (b - a)
            f1 = f(x1)
    return 0.5 * (a + b)


@dataclass(frozen=True)
class ScoredValue:
    score: float
    n_charged: int  # total charged-word count; 0 flags "no charged words"

    @property
    def has_signal(self) -> bool:
        return self.n_charged > 0


_EDGE = 1e-6


def score_article(d, model: SentimentModel) -> ScoredValue:
    """Penalised MLE sentiment for a charged-word count vector.

    Maximises (1/s) sum_j d_j log(p O+_j + (1-p) O-_j) + lambda log(p (1-p))
    over [1e-6, 1 - 1e-6] by golden-section search (the objective is strictly
    concave for lambda > 0).  A document with no charged words scores a
    flagged neutral 0.5 without touching the optimiser.
    """
    d = np.asarray(d, dtype=float)
    if d.shape != model.o_plus.shape:
        raise ConfigError("count vector length does not match the model vocabulary")
    active = d > 0
    # Words clipped to zero in both topics carry no likelihood information.
    usable = active & ((model.o_plus > 0) | (model.o_minus > 0))
    s = d[active].sum()
    if s <= 0 or not usable.any():
        return ScoredValue(score=0.5, n_charged=0)
    dj = d[usable]
    plus = model.o_plus[usable]
    minus = model.o_minus[usable]
    lam = model.prior_weight

    def objective(p: float) -> float:
        mix = p * plus + (1.0 - p) * minus
        return float(np.dot(dj, np.log(mix)) / s + lam * math.log(p * (1.0 - p)))

    score = golden_section_max(objective, _EDGE, 1.0 - _EDGE, tol=1e-6)
    return ScoredValue(score=score, n_charged=int(s))


# --- rolling monthly refits --------------------------------------------------


@dataclass
class CorpusDoc:
    """One tokenised article ready for fitting and scoring."""

    doc_id: object
    publish_time_utc: dt.datetime
    token_counts: dict[str, int]
    ticker: str | None = None
    label: LabeledDoc | None = None


def month_start(when: dt.datetime) -> dt.datetime:
    return dt.datetime(when.year, when.month, 1, tzinfo=UTC)


def next_month(month: dt.datetime) -> dt.datetime:
    if month.month == 12:
        return dt.datetime(month.year + 1, 1, 1, tzinfo=UTC)
    return dt.datetime(month.year, month.month + 1, 1, tzinfo=UTC)


def month_range(first: dt.datetime, last: dt.datetime) -> list[dt.datetime]:
    months = []
    cur = month_start(first)
    stop = month_start(last)
    while cur <= stop:
        months.append(cur)
        cur = next_month(cur)
    return months


def fit_model(
    docs: list[CorpusDoc],
    params: ScreeningParams,
    prior_weight: float,
    min_df: int,
    fitted_at: dt.datetime,
) -> SentimentModel:
    """Fit one model from labeled documents: matrix -> screen -> proxy -> topics."""
    from .corpus import build_term_matrix

    labeled = [doc for doc in docs if doc.label is not None]
    if len(labeled) < 2:
        raise InsufficientDataError("need at least two labeled documents", required=2, got=len(labeled))
    matrix = build_term_matrix(
        [doc.token_counts for doc in labeled],
        min_df=min_df,
        doc_ids=[doc.doc_id for doc in labeled],
    )
    labels = [doc.label for doc in labeled]
    charged, _ = screen_vocabulary(matrix, labels, params)
    index = matrix.vocab_index()
    charged_counts = matrix.counts[:, [index[t] for t in charged]]
    proxy = rank_proxy(labels)
    o_plus, o_minus = fit_topics(charged_counts, proxy)
    return SentimentModel(
        charged_vocab=charged,
        o_plus=o_plus,
        o_minus=o_minus,
        params=params,
        prior_weight=prior_weight,
        fitted_at=fitted_at,
    )


def rolling_refit(
    docs: list[CorpusDoc],
    months: list[dt.datetime],
    params: ScreeningParams,
    prior_weight: float,
    min_df: int,
) -> list[tuple[dt.datetime, SentimentModel | None]]:
    """Refit at each month boundary on every labeled document published
    strictly before it.  Hyperparameters stay fixed across refits; months with
    no prior labeled documents are skipped with a warning."""
    ordered = sorted(docs, key=lambda doc: (doc.publish_time_utc, str(doc.doc_id)))
    models = []
    for month in months:
        train = [doc for doc in ordered if doc.publish_time_utc < month and doc.label is not None]
        if not train:
            log.warning("no labeled documents before %s; month skipped", month.date())
            models.append((month, None))
            continue
        models.append((month, fit_model(train, params, prior_weight, min_df, fitted_at=month)))
    return models


@dataclass(frozen=True)
class ScoredArticle:
    doc_id: object
    ticker: str | None
    publish_time_utc: dt.datetime
    score: float
    n_charged: int
    model_month: dt.datetime

    @property
    def has_signal(self) -> bool:
        return self.n_charged > 0


def score_corpus(
    docs: list[CorpusDoc],
    models: list[tuple[dt.datetime, SentimentModel | None]],
) -> list[ScoredArticle]:
    """Score each document with the model fitted at the start of its month.

    Documents falling in a skipped month (no model) are left unscored, so no
    document is ever scored by a model that saw it.
    """
    scored = []
    for month, model in models:
        if model is None:
            continue
        end = next_month(month)
        for doc in docs:
            if month <= doc.publish_time_utc < end:
                value = score_article(model.count_vector(doc.token_counts), model)
                scored.append(
                    ScoredArticle(
                        doc_id=doc.doc_id,
                        ticker=doc.ticker,
                        publish_time_utc=doc.publish_time_utc,
                        score=value.score,
                        n_charged=value.n_charged,
                        model_month=month,
                    )
                )
    scored.sort(key=lambda a: (a.publish_time_utc, str(a.doc_id)))
    return scored
