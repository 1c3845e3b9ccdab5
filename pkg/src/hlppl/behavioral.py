"""Media-attention and news-tone signals.

Scalar functions work on one symbol-date; ``daily_signals`` builds the
per-date series from an aligned bundle and records which dates had no
coverage or no news.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import DegenerateInputError, FeatureUnavailableError, ValidationError
from .ingestion import SENTIMENT_CLASSES, AlignedBundle, NewsArticleRecord, to_iso


def hype_index(counts: Mapping[str, float], symbol: str) -> float:
    """Share of the day's market-wide article count that mentions ``symbol``.

    Returns 0.0 when the universe has no coverage at all; callers that need
    to distinguish that case check ``sum(counts.values()) == 0``.
    """
    total = sum(counts.values())
    if total <= 0:
        return 0.0
    return counts.get(symbol, 0) / total


def cap_weight(market_caps: Mapping[str, float], symbol: str) -> float:
    cap = market_caps.get(symbol)
    if cap is None or not cap > 0:
        raise FeatureUnavailableError(f"no market cap for {symbol}")
    total = sum(market_caps.values())
    if not total > 0:
        raise FeatureUnavailableError("total market cap is not positive")
    return cap / total


def cap_adjusted_hype(hype: float, market_caps: Mapping[str, float], symbol: str) -> float:
    """Hype divided by the symbol's capitalization weight in the universe."""
    return hype / cap_weight(market_caps, symbol)


def classify_cap_hype(value: float) -> str:
    if value > 1.0:
        return "excessive"
    if value < 1.0:
        return "under"
    return "neutral"


def sentiment_score(articles: Sequence[NewsArticleRecord]) -> float:
    """Weight-averaged polarity; 0.0 for an empty article set."""
    if not articles:
        return 0.0
    w = np.array([a.weight for a in articles], dtype=float)
    s = np.array([a.polarity for a in articles], dtype=float)
    if np.any(w <= 0):
        raise ValidationError("article weights must be positive")
    return float(np.clip(w @ s / w.sum(), -1.0, 1.0))


def finbert_daily_aggregate(articles: Sequence[NewsArticleRecord]) -> tuple[float, float, float]:
    """Confidence-weighted class shares ``(pos, neu, neg)`` for one day."""
    conf = {c: 0.0 for c in SENTIMENT_CLASSES}
    total = 0.0
    for a in articles:
        conf[a.sentiment_class] += a.confidence
        total += a.confidence
    if total <= 0:
        raise DegenerateInputError("no article with positive confidence")
    return conf["positive"] / total, conf["neutral"] / total, conf["negative"] / total


@dataclass(frozen=True, eq=False)
class SignalSeries:
    days: np.ndarray
    hype: np.ndarray
    cap_hype: Optional[np.ndarray]
    sentiment: np.ndarray
    s_pos: np.ndarray
    s_neu: np.ndarray
    s_neg: np.ndarray
    no_coverage: np.ndarray
    no_news: np.ndarray
    features_available: bool

    def __len__(self):
        return len(self.days)

    @property
    def finbert_sentiment(self) -> np.ndarray:
        """Alternative tone measure ``S_pos - S_neg``."""
        return self.s_pos - self.s_neg

    def to_csv(self, path, fmt: str = "{:.12g}") -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date", "hype", "cap_hype", "sentiment", "s_pos", "s_neu", "s_neg"])
            for i, d in enumerate(self.days):
                ch = "" if self.cap_hype is None or np.isnan(self.cap_hype[i]) else fmt.format(self.cap_hype[i])
                w.writerow(
                    [
                        to_iso(d),
                        fmt.format(self.hype[i]),
                        ch,
                        fmt.format(self.sentiment[i]),
                        fmt.format(self.s_pos[i]),
                        fmt.format(self.s_neu[i]),
                        fmt.format(self.s_neg[i]),
                    ]
                )


def daily_signals(bundle: AlignedBundle) -> SignalSeries:
    """Hype, cap-adjusted hype and sentiment for every trading day in ``bundle``.

    Days without coverage or news contribute zeros. Sentiment uses only
    articles about the symbol itself; the class-share triple also counts
    market-wide articles.
    """
    symbol = bundle.prices.symbol
    n = len(bundle)
    hype = np.zeros(n)
    cap_hype = np.full(n, np.nan) if bundle.caps_available else None
    sent = np.zeros(n)
    pos, neu, neg = np.zeros(n), np.zeros(n), np.zeros(n)
    no_cov = np.ones(n, dtype=bool)
    no_news = np.ones(n, dtype=bool)
    for i in range(n):
        row = bundle.features[i]
        if row is not None and sum(row.article_count_by_symbol.values()) > 0:
            no_cov[i] = False
            hype[i] = hype_index(row.article_count_by_symbol, symbol)
            if cap_hype is not None:
                try:
                    cap_hype[i] = cap_adjusted_hype(hype[i], row.market_cap_by_symbol, symbol)
                except FeatureUnavailableError:
                    pass
        day_articles = bundle.articles[i]
        own = [a for a in day_articles if a.symbol == symbol]
        if own:
            no_news[i] = False
            sent[i] = sentiment_score(own)
        if any(a.confidence > 0 for a in day_articles):
            pos[i], neu[i], neg[i] = finbert_daily_aggregate(day_articles)
    return SignalSeries(
        bundle.prices.days.copy(),
        hype,
        cap_hype,
        sent,
        pos,
        neu,
        neg,
        no_cov,
        no_news,
        bundle.features_available,
    )
