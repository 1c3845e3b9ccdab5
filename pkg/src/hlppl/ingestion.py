"""Loading, validation and daily alignment of prices, news and market features.

Dates are ISO-8601 strings on disk and proleptic Gregorian ordinals
(``datetime.date.toordinal``) in memory.
"""

from __future__ import annotations

import csv
import datetime as _dt
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    DuplicateDateError,
    InsufficientDataError,
    ParseError,
    ValidationError,
)

log = logging.getLogger(__name__)

MIN_FIT_LENGTH = 100
MARKET_MARKERS = frozenset({"*", "MARKET", "MKT"})
SENTIMENT_CLASSES = ("positive", "neutral", "negative")


def to_day(value) -> int:
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, _dt.date):
        return value.toordinal()
    return _dt.date.fromisoformat(str(value).strip()).toordinal()


def to_iso(day: int) -> str:
    return _dt.date.fromordinal(int(day)).isoformat()


@dataclass(frozen=True, eq=False)
class PriceSeries:
    symbol: str
    days: np.ndarray
    close: np.ndarray
    volume: Optional[np.ndarray] = None

    def __post_init__(self):
        days = np.asarray(self.days, dtype=np.int64)
        close = np.asarray(self.close, dtype=float)
        if days.ndim != 1 or days.shape != close.shape:
            raise ValidationError("days and close must be 1-D arrays of equal length")
        if len(days) > 1 and np.any(np.diff(days) <= 0):
            raise ValidationError("dates must be strictly increasing")
        if not np.all(np.isfinite(close)) or np.any(close <= 0):
            raise ValidationError("close prices must be finite and positive")
        volume = self.volume
        if volume is not None:
            volume = np.asarray(volume, dtype=float)
            if volume.shape != close.shape:
                raise ValidationError("volume length differs from close")
            if np.any(volume < 0):
                raise ValidationError("volume must be non-negative")
            volume.setflags(write=False)
        days.setflags(write=False)
        close.setflags(write=False)
        object.__setattr__(self, "days", days)
        object.__setattr__(self, "close", close)
        object.__setattr__(self, "volume", volume)

    def __len__(self):
        return len(self.days)

    @property
    def log_close(self) -> np.ndarray:
        return np.log(self.close)

    @property
    def dates(self) -> list[str]:
        return [to_iso(d) for d in self.days]

    @property
    def fit_eligible(self) -> bool:
        return len(self) >= MIN_FIT_LENGTH

    def window(self, start: int, stop: int) -> "PriceSeries":
        """Positional slice ``[start, stop)``."""
        vol = None if self.volume is None else self.volume[start:stop]
        return PriceSeries(self.symbol, self.days[start:stop], self.close[start:stop], vol)

    def same_content(self, other: "PriceSeries") -> bool:
        if self.symbol != other.symbol or len(self) != len(other):
            return False
        if (self.volume is None) != (other.volume is None):
            return False
        ok = np.array_equal(self.days, other.days) and np.array_equal(self.close, other.close)
        if self.volume is not None:
            ok = ok and np.array_equal(self.volume, other.volume)
        return bool(ok)


@dataclass(frozen=True)
class NewsArticleRecord:
    date: int
    symbol: str
    polarity: float
    weight: float = 1.0
    sentiment_class: str = "neutral"
    confidence: float = 0.0

    def __post_init__(self):
        if not -1.0 <= self.polarity <= 1.0:
            raise ValidationError(f"polarity {self.polarity} outside [-1, 1]")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(f"confidence {self.confidence} outside [0, 1]")
        if not self.weight > 0:
            raise ValidationError(f"weight {self.weight} must be positive")
        if self.sentiment_class not in SENTIMENT_CLASSES:
            raise ValidationError(f"unknown sentiment class {self.sentiment_class!r}")


@dataclass(frozen=True)
class MarketFeatureRow:
    date: int
    article_count_by_symbol: dict = field(default_factory=dict)
    market_cap_by_symbol: dict = field(default_factory=dict)

    def __post_init__(self):
        for sym, n in self.article_count_by_symbol.items():
            if n < 0:
                raise ValidationError(f"negative article count for {sym}")
        for sym, cap in self.market_cap_by_symbol.items():
            if not cap > 0:
                raise ValidationError(f"market cap for {sym} must be positive")


@dataclass
class AlignedBundle:
    """One row per trading date of ``prices``."""

    prices: PriceSeries
    articles: list  # list[list[NewsArticleRecord]], one list per trading day
    features: list  # list[MarketFeatureRow | None]
    rejected: list  # (NewsArticleRecord, reason)
    features_available: bool
    caps_available: bool

    def __len__(self):
        return len(self.prices)

    @property
    def article_counts(self) -> list[int]:
        return [len(a) for a in self.articles]


# --------------------------------------------------------------------------- CSV


def _open_rows(path, required: Sequence[str]):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in required if c not in header]
        if missing:
            raise ParseError(f"missing column(s) {missing}", line=1, path=path)
        reader.fieldnames = header
        for row in reader:
            yield reader.line_num, {k: (v.strip() if isinstance(v, str) else v) for k, v in row.items()}


def _num(row, key, line, path, default=None):
    raw = row.get(key)
    if raw is None or raw == "":
        if default is not None:
            return default
        raise ParseError(f"empty {key!r}", line=line, path=path)
    try:
        return float(raw)
    except ValueError:
        raise ParseError(f"bad {key} value {raw!r}", line=line, path=path) from None


def _day(row, line, path):
    try:
        return to_day(row["date"])
    except (ValueError, TypeError):
        raise ParseError(f"bad date {row.get('date')!r}", line=line, path=path) from None


def load_prices(path, symbol: str) -> PriceSeries:
    """Read a ``date,close[,volume]`` CSV into a validated, date-sorted series."""
    days, close, volume = [], [], []
    has_volume = None
    seen = {}
    for line, row in _open_rows(path, ("date", "close")):
        d = _day(row, line, path)
        if d in seen:
            raise DuplicateDateError(f"{path}:{line}: duplicate date {to_iso(d)} (first at line {seen[d]})")
        seen[d] = line
        c = _num(row, "close", line, path)
        if not np.isfinite(c) or c <= 0:
            raise ValidationError(f"{path}:{line}: non-positive close {c}")
        if has_volume is None:
            has_volume = "volume" in row
        if has_volume:
            v = _num(row, "volume", line, path)
            if v < 0:
                raise ValidationError(f"{path}:{line}: negative volume {v}")
            volume.append(v)
        days.append(d)
        close.append(c)
    if len(days) < 2:
        raise InsufficientDataError(f"{path}: need at least 2 price rows, got {len(days)}")
    order = np.argsort(days, kind="stable")
    vol = np.asarray(volume)[order] if has_volume else None
    return PriceSeries(symbol, np.asarray(days)[order], np.asarray(close)[order], vol)


def load_news(path) -> list[NewsArticleRecord]:
    out = []
    for line, row in _open_rows(path, ("date", "symbol", "polarity", "sentiment_class", "confidence")):
        try:
            out.append(
                NewsArticleRecord(
                    date=_day(row, line, path),
                    symbol=row["symbol"],
                    polarity=_num(row, "polarity", line, path),
                    weight=_num(row, "weight", line, path, default=1.0),
                    sentiment_class=row["sentiment_class"].lower(),
                    confidence=_num(row, "confidence", line, path),
                )
            )
        except ValidationError as exc:
            raise ValidationError(f"{path}:{line}: {exc}") from None
    return out


def load_features(path) -> list[MarketFeatureRow]:
    """Long-format ``date,symbol,article_count[,market_cap]`` into one row per date."""
    counts: dict[int, dict] = {}
    caps: dict[int, dict] = {}
    for line, row in _open_rows(path, ("date", "symbol", "article_count")):
        d = _day(row, line, path)
        n = _num(row, "article_count", line, path)
        if n < 0 or n != int(n):
            raise ValidationError(f"{path}:{line}: article_count must be a non-negative integer")
        counts.setdefault(d, {})[row["symbol"]] = int(n)
        raw_cap = row.get("market_cap")
        if raw_cap not in (None, ""):
            cap = _num(row, "market_cap", line, path)
            if cap <= 0:
                raise ValidationError(f"{path}:{line}: market_cap must be positive")
            caps.setdefault(d, {})[row["symbol"]] = cap
    return [MarketFeatureRow(d, counts[d], caps.get(d, {})) for d in sorted(counts)]


def write_prices(series: PriceSeries, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if series.volume is None:
            w.writerow(["date", "close"])
            for d, c in zip(series.days, series.close):
                w.writerow([to_iso(d), repr(float(c))])
        else:
            w.writerow(["date", "close", "volume"])
            for d, c, v in zip(series.days, series.close, series.volume):
                w.writerow([to_iso(d), repr(float(c)), repr(float(v))])


def write_news(records: Iterable[NewsArticleRecord], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "symbol", "polarity", "weight", "sentiment_class", "confidence"])
        for r in records:
            w.writerow([to_iso(r.date), r.symbol, repr(r.polarity), repr(r.weight), r.sentiment_class, repr(r.confidence)])


def write_features(rows: Iterable[MarketFeatureRow], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "symbol", "article_count", "market_cap"])
        for row in rows:
            for sym in sorted(row.article_count_by_symbol):
                cap = row.market_cap_by_symbol.get(sym)
                w.writerow([to_iso(row.date), sym, row.article_count_by_symbol[sym], "" if cap is None else repr(cap)])


# --------------------------------------------------------------------- alignment


def _trading_slot(days: np.ndarray, day: int) -> Optional[int]:
    """Index of the first trading day on or after ``day``; None if outside the calendar."""
    i = int(np.searchsorted(days, day, side="left"))
    if i == len(days):
        return None
    if i == 0 and day < days[0]:
        # no previous trading date to roll forward from
        return None
    return i


def align_daily(
    prices: PriceSeries,
    news: Sequence[NewsArticleRecord] = (),
    features: Sequence[MarketFeatureRow] = (),
) -> AlignedBundle:
    """Attach news and features to the trading calendar of ``prices``.

    Records dated on non-trading days roll forward to the next trading day.
    Article counts rolled onto the same trading day are summed; market caps
    keep the latest value.
    """
    if len(prices) == 0:
        raise InsufficientDataError("empty price series")
    days = prices.days
    n = len(days)
    articles: list[list] = [[] for _ in range(n)]
    rejected = []
    for rec in news:
        if rec.symbol != prices.symbol and rec.symbol not in MARKET_MARKERS:
            rejected.append((rec, "other_symbol"))
            continue
        slot = _trading_slot(days, rec.date)
        if slot is None:
            reason = "after_last_trading_date" if rec.date > days[-1] else "before_first_trading_date"
            rejected.append((rec, reason))
            continue
        articles[slot].append(rec)

    counts: list[Optional[dict]] = [None] * n
    caps: list[Optional[dict]] = [None] * n
    for row in sorted(features, key=lambda r: r.date):
        slot = _trading_slot(days, row.date)
        if slot is None:
            log.debug("dropping feature row dated %s outside calendar", to_iso(row.date))
            continue
        acc = counts[slot] if counts[slot] is not None else {}
        for sym, k in row.article_count_by_symbol.items():
            acc[sym] = acc.get(sym, 0) + k
        counts[slot] = acc
        if row.market_cap_by_symbol:
            c = dict(caps[slot] or {})
            c.update(row.market_cap_by_symbol)
            caps[slot] = c
    feat_rows = [
        None if counts[i] is None else MarketFeatureRow(int(days[i]), counts[i], caps[i] or {})
        for i in range(n)
    ]
    features_available = any(r is not None for r in feat_rows)
    caps_available = any(r is not None and r.market_cap_by_symbol for r in feat_rows)
    if not features_available:
        log.warning("no market features for %s: hype inputs absent", prices.symbol)
    return AlignedBundle(prices, articles, feat_rows, rejected, features_available, caps_available)
