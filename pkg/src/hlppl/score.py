"""Bubble Score composition and episode labeling."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError, ValidationError
from .ingestion import to_iso

DEFAULT_TAU = 0.8
DEFAULT_D_MIN = 10


@dataclass(frozen=True)
class ScoreParams:
    alpha1: float = 0.2
    alpha2: float = 0.2

    def __post_init__(self):
        if self.alpha1 < 0 or self.alpha2 < 0:
            raise ValidationError("alpha1 and alpha2 must be non-negative")


def _check_inputs(eps, hype, sent):
    eps, hype, sent = (np.asarray(v, dtype=float) for v in (eps, hype, sent))
    if np.any(~np.isfinite(eps)) or np.any(np.abs(eps) > 1.0):
        raise ContractError("epsilon_norm must lie in [-1, 1]")
    if np.any(~np.isfinite(hype)) or np.any((hype < 0.0) | (hype > 1.0)):
        raise ContractError("hype must lie in [0, 1]")
    if np.any(~np.isfinite(sent)) or np.any(np.abs(sent) > 1.0):
        raise ContractError("sentiment must lie in [-1, 1]")
    return eps, hype, sent


def compose_score(epsilon_norm: float, hype: float, sentiment: float, params: ScoreParams = ScoreParams()) -> float:
    """Hype pushes the score away from zero on the residual's side; sentiment adds with its own sign.

    A zero residual keeps only the sentiment term.
    """
    _check_inputs(epsilon_norm, hype, sentiment)
    a1, a2 = params.alpha1, params.alpha2
    if epsilon_norm > 0:
        return epsilon_norm + a1 * hype + a2 * sentiment
    if epsilon_norm < 0:
        return epsilon_norm - a1 * hype + a2 * sentiment
    return a2 * sentiment


def compose_scores(epsilon_norm, hype, sentiment, params: ScoreParams = ScoreParams()) -> np.ndarray:
    eps, h, s = _check_inputs(epsilon_norm, hype, sentiment)
    a1, a2 = params.alpha1, params.alpha2
    out = a2 * s
    pos = eps > 0
    neg = eps < 0
    out[pos] = eps[pos] + a1 * h[pos] + a2 * s[pos]
    out[neg] = eps[neg] - a1 * h[neg] + a2 * s[neg]
    return out


@dataclass(frozen=True, eq=False)
class ScoreSeries:
    days: np.ndarray
    epsilon_norm: np.ndarray
    hype: np.ndarray
    sentiment: np.ndarray
    score: np.ndarray
    params: ScoreParams = ScoreParams()

    def __len__(self):
        return len(self.days)

    @classmethod
    def build(cls, days, epsilon_norm, hype, sentiment, params: ScoreParams = ScoreParams()) -> "ScoreSeries":
        n = len(days)
        if not (len(epsilon_norm) == len(hype) == len(sentiment) == n):
            raise ValidationError("score components differ in length")
        score = compose_scores(epsilon_norm, hype, sentiment, params)
        return cls(
            np.asarray(days, dtype=np.int64),
            np.asarray(epsilon_norm, dtype=float),
            np.asarray(hype, dtype=float),
            np.asarray(sentiment, dtype=float),
            score,
            params,
        )

    def recomputed(self) -> np.ndarray:
        return compose_scores(self.epsilon_norm, self.hype, self.sentiment, self.params)

    def to_csv(self, path, fmt: str = "{:.12g}") -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date", "epsilon_norm", "hype", "sentiment", "bubble_score"])
            for i, d in enumerate(self.days):
                w.writerow(
                    [to_iso(d)]
                    + [fmt.format(v) for v in (self.epsilon_norm[i], self.hype[i], self.sentiment[i], self.score[i])]
                )


@dataclass(frozen=True)
class Episode:
    start: int  # date ordinal
    end: int
    type: str  # "normal" or "negative"
    intensity: float
    duration: int  # trading days
    start_index: int
    end_index: int

    def to_row(self, fmt: str = "{:.12g}") -> list:
        return [to_iso(self.start), to_iso(self.end), self.type, self.duration, fmt.format(self.intensity)]


def label_episodes(
    scores,
    tau: float = DEFAULT_TAU,
    d_min: int = DEFAULT_D_MIN,
    days: Optional[Sequence[int]] = None,
) -> list[Episode]:
    """Maximal same-sign runs with ``|score| > tau`` lasting at least ``d_min`` days.

    ``scores`` is a ScoreSeries or a plain array; with a plain array the
    episode dates are positional unless ``days`` is given.
    """
    if not tau > 0:
        raise ValidationError("tau must be positive")
    if d_min < 1:
        raise ValidationError("d_min must be >= 1")
    if isinstance(scores, ScoreSeries):
        values = scores.score
        days = scores.days
    else:
        values = np.asarray(scores, dtype=float)
        days = np.arange(len(values)) if days is None else np.asarray(days)
    side = np.where(values > tau, 1, np.where(values < -tau, -1, 0))
    episodes = []
    i = 0
    n = len(values)
    while i < n:
        if side[i] == 0:
            i += 1
            continue
        j = i
        while j + 1 < n and side[j + 1] == side[i]:
            j += 1
        length = j - i + 1
        if length >= d_min:
            episodes.append(
                Episode(
                    start=int(days[i]),
                    end=int(days[j]),
                    type="normal" if side[i] > 0 else "negative",
                    intensity=float(np.max(np.abs(values[i : j + 1]))),
                    duration=length,
                    start_index=i,
                    end_index=j,
                )
            )
        i = j + 1
    return episodes


def write_episodes(episodes: Sequence[Episode], path, fmt: str = "{:.12g}") -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["start", "end", "type", "duration", "intensity"])
        for ep in episodes:
            w.writerow(ep.to_row(fmt))


def plot_records(scores: ScoreSeries, episodes: Sequence[Episode], close=None) -> list[dict]:
    """Per-date rows with episode shading flags, for any plotting tool."""
    n = len(scores)
    normal = np.zeros(n, dtype=bool)
    negative = np.zeros(n, dtype=bool)
    for ep in episodes:
        target = normal if ep.type == "normal" else negative
        target[ep.start_index : ep.end_index + 1] = True
    rows = []
    for i in range(n):
        row = {"date": to_iso(scores.days[i])}
        if close is not None:
            row["close"] = float(close[i])
        row["bubble_score"] = float(scores.score[i])
        row["normal_episode"] = int(normal[i])
        row["negative_episode"] = int(negative[i])
        rows.append(row)
    return rows


def write_plot_data(rows: list[dict], path, fmt: str = "{:.12g}") -> None:
    if not rows:
        Path(path).write_text("date,bubble_score,normal_episode,negative_episode\n")
        return
    keys = list(rows[0])
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for r in rows:
            w.writerow([fmt.format(r[k]) if isinstance(r[k], float) else r[k] for k in keys])
