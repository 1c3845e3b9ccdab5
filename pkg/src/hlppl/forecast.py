"""Multi-horizon forecasts, error metrics and the combined training loss.

Any forecaster can feed the backtester through ``ForecastSet`` and the
``date,h1,...,h5`` CSV; ``baseline_forecast`` is a persistence-with-decay
stand-in.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .backtest import HORIZONS
from .errors import ContractError, InsufficientDataError, ParseError, ValidationError
from .ingestion import to_day, to_iso


@dataclass(frozen=True, eq=False)
class ForecastSet:
    days: np.ndarray
    predictions: dict  # horizon -> np.ndarray aligned with days
    source: str = "external"
    bounds: tuple = (-2.0, 2.0)

    def __post_init__(self):
        lo, hi = self.bounds
        for h, v in self.predictions.items():
            v = np.asarray(v, dtype=float)
            if len(v) != len(self.days):
                raise ValidationError(f"horizon {h} has {len(v)} values for {len(self.days)} dates")
            finite = v[np.isfinite(v)]
            if np.any((finite < lo) | (finite > hi)):
                raise ValidationError(f"horizon {h} predictions outside [{lo}, {hi}]")

    def to_csv(self, path, fmt: str = "{:.12g}") -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date"] + [f"h{h}" for h in HORIZONS])
            for i, d in enumerate(self.days):
                w.writerow([to_iso(d)] + [fmt.format(self.predictions[h][i]) for h in HORIZONS])

    @classmethod
    def from_csv(cls, path, source: str = "external", bounds: tuple = (-2.0, 2.0)) -> "ForecastSet":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"no such file: {path}")
        days, cols = [], {h: [] for h in HORIZONS}
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            need = ["date"] + [f"h{h}" for h in HORIZONS]
            missing = [c for c in need if c not in (reader.fieldnames or [])]
            if missing:
                raise ParseError(f"missing column(s) {missing}", line=1, path=path)
            for row in reader:
                try:
                    days.append(to_day(row["date"]))
                    for h in HORIZONS:
                        cols[h].append(float(row[f"h{h}"]))
                except ValueError as exc:
                    raise ParseError(str(exc), line=reader.line_num, path=path) from None
        return cls(np.asarray(days, dtype=np.int64), {h: np.asarray(v) for h, v in cols.items()}, source, bounds)


def _ar1_alpha(values: np.ndarray) -> float:
    x = values[:-1]
    denom = float(x @ x)
    if denom == 0.0:
        return 0.0
    return float(-(x @ np.diff(values)) / denom)


def baseline_forecast(scores, h: int, alpha: Optional[float] = None, strict_range: bool = False) -> np.ndarray:
    """``score(t) * (1 - alpha)**h`` for every date t.

    ``alpha`` defaults to the in-sample no-intercept AR(1) estimate on
    ``scores``; it is clamped to [0, 1]. With ``strict_range`` the output is
    clipped to [-1, 1].
    """
    values = np.asarray(getattr(scores, "score", scores), dtype=float)
    if h not in HORIZONS:
        raise ValidationError(f"horizon must be one of {HORIZONS}")
    if len(values) < 2:
        raise InsufficientDataError("baseline forecast needs at least 2 observations")
    a = _ar1_alpha(values) if alpha is None else float(alpha)
    a = min(max(a, 0.0), 1.0)
    out = values * (1.0 - a) ** h
    if strict_range:
        out = np.clip(out, -1.0, 1.0)
    return out


def baseline_forecast_set(scores, alpha: Optional[float] = None, strict_range: bool = False) -> ForecastSet:
    values = np.asarray(getattr(scores, "score", scores), dtype=float)
    days = np.asarray(getattr(scores, "days", np.arange(len(values))), dtype=np.int64)
    a = _ar1_alpha(values) if alpha is None else alpha
    preds = {h: baseline_forecast(values, h, a, strict_range) for h in HORIZONS}
    lo = -1.0 if strict_range else -np.inf
    hi = 1.0 if strict_range else np.inf
    return ForecastSet(days, preds, source="baseline", bounds=(lo, hi))


# ---------------------------------------------------------------------- metrics


def _pearson(a: np.ndarray, b: np.ndarray) -> Optional[float]:
    ac, bc = a - a.mean(), b - b.mean()
    saa, sbb = float(ac @ ac), float(bc @ bc)
    if saa == 0.0 or sbb == 0.0:
        return None
    # one square root keeps corr(x, x) == 1 exactly
    return float(np.clip((ac @ bc) / math.sqrt(saa * sbb), -1.0, 1.0))


def eval_metrics(predicted, actual) -> dict:
    """Pearson correlation, MSE, MAE and RMSE; correlation is None when undefined.

    ``mse`` is reported as ``rmse * rmse`` so the two agree bit for bit.
    """
    p = np.asarray(predicted, dtype=float)
    a = np.asarray(actual, dtype=float)
    if p.shape != a.shape or len(p) < 2:
        raise ContractError("predicted and actual need equal length >= 2")
    err = p - a
    rmse = math.sqrt(float(np.mean(err * err)))
    return {
        "correlation": _pearson(p, a),
        "mse": rmse * rmse,
        "mae": float(np.mean(np.abs(err))),
        "rmse": rmse,
    }


# ------------------------------------------------------------------ combined loss


@dataclass(frozen=True)
class LossWeights:
    huber: float = 1.0
    corr: float = 0.5
    r2: float = 0.5
    consistency: float = 0.5
    smooth: float = 0.1
    huber_delta: float = 1.0

    def __post_init__(self):
        lams = self.lambdas
        if any(l < 0 for l in lams):
            raise ValidationError("loss weights must be non-negative")
        if not any(l > 0 for l in lams):
            raise ValidationError("at least one loss weight must be positive")
        if not self.huber_delta > 0:
            raise ValidationError("huber_delta must be positive")

    @property
    def lambdas(self) -> tuple:
        return (self.huber, self.corr, self.r2, self.consistency, self.smooth)

    @classmethod
    def of(cls, l1, l2, l3, l4, l5, delta=1.0) -> "LossWeights":
        return cls(l1, l2, l3, l4, l5, delta)


@dataclass
class LossResult:
    total: float
    terms: dict  # name -> unweighted value
    degenerate: set = field(default_factory=set)


def _check_pair(predicted, actual):
    p = np.asarray(predicted, dtype=float)
    a = np.asarray(actual, dtype=float)
    if p.ndim != 1 or p.shape != a.shape or len(p) < 3:
        raise ContractError("predicted and actual need equal length >= 3")
    return p, a


def _terms(p, a, delta):
    """Unweighted term values, their gradients in ``p``, and degeneracy flags."""
    n = len(p)
    r = p - a
    absr = np.abs(r)
    quad = absr <= delta
    huber = float(np.mean(np.where(quad, 0.5 * r * r, delta * (absr - 0.5 * delta))))
    g_huber = np.where(quad, r, delta * np.sign(r)) / n

    degenerate = set()
    pc, ac = p - p.mean(), a - a.mean()
    sp, sa = math.sqrt(float(pc @ pc)), math.sqrt(float(ac @ ac))
    if sp == 0.0 or sa == 0.0:
        corr, g_corr = 0.0, np.zeros(n)
        degenerate.add("corr")
    else:
        rho = float(pc @ ac) / math.sqrt(float(pc @ pc) * float(ac @ ac))
        corr = 1.0 - rho
        g_corr = -(ac / (sp * sa) - rho * pc / (sp * sp))

    sst = float(ac @ ac)
    if sst == 0.0:
        r2, g_r2 = 0.0, np.zeros(n)
        degenerate.add("r2")
    else:
        r2 = float(r @ r) / sst
        g_r2 = 2.0 * r / sst

    d = np.diff(p) - np.diff(a)
    cons = float(np.mean(d * d))
    g_cons = -np.diff(np.concatenate(([0.0], 2.0 * d / len(d), [0.0])))

    s = np.diff(p, 2)
    smooth = float(np.mean(s * s))
    v = 2.0 * s / len(s)
    # adjoint of the second difference
    g_smooth = np.zeros(n)
    g_smooth[:-2] += v
    g_smooth[1:-1] -= 2.0 * v
    g_smooth[2:] += v

    values = {"huber": huber, "corr": corr, "r2": r2, "consistency": cons, "smooth": smooth}
    grads = {"huber": g_huber, "corr": g_corr, "r2": g_r2, "consistency": g_cons, "smooth": g_smooth}
    return values, grads, degenerate


_ORDER = ("huber", "corr", "r2", "consistency", "smooth")


def combined_loss(predicted, actual, weights: LossWeights = LossWeights()) -> LossResult:
    """Weighted Huber + (1 - corr) + (1 - R^2) + difference consistency + smoothness.

    Correlation and R^2 terms are zero, and flagged, when undefined.
    """
    p, a = _check_pair(predicted, actual)
    values, _, degenerate = _terms(p, a, weights.huber_delta)
    total = sum(lam * values[k] for lam, k in zip(weights.lambdas, _ORDER))
    return LossResult(float(total), values, degenerate)


def loss_gradient(predicted, actual, weights: LossWeights = LossWeights()) -> np.ndarray:
    """Analytic gradient of ``combined_loss`` with respect to ``predicted``."""
    p, a = _check_pair(predicted, actual)
    _, grads, _ = _terms(p, a, weights.huber_delta)
    g = np.zeros(len(p))
    for lam, k in zip(weights.lambdas, _ORDER):
        if lam:
            g += lam * grads[k]
    return g
