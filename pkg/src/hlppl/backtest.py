"""Threshold trading on Bubble Score series, with stop-loss and costs.

Ledger rules
------------
* A position commits ``max_position`` of current equity as notional.
* ``transaction_cost`` is charged on traded notional at entry and at exit.
* While open, equity is marked to market at each close; idle cash earns zero.
* ``Trade.return_net`` is the trade's net P&L over equity just before entry,
  so final equity is the product of ``1 + return_net`` over all trades.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import ContractError, ValidationError
from .ingestion import PriceSeries, to_iso

TRADING_DAYS = 252
HORIZONS = (1, 2, 3, 4, 5)

LONG, FLAT, SHORT = 1, 0, -1


@dataclass(frozen=True)
class StrategyConfig:
    theta1: float = 0.7
    theta2: float = 0.3
    stop_loss: float = 0.15
    max_position: float = 0.5
    transaction_cost: float = 0.001
    discount_rate: float = 0.02
    horizon: int = 0  # 0 trades the current score, 1..5 a forecast horizon
    execution: str = "close"  # or "next_close": fill one day after the signal
    initial_capital: float = 1.0

    def __post_init__(self):
        if not 0 < self.theta2 < self.theta1:
            raise ValidationError("need 0 < theta2 < theta1")
        if not 0 < self.stop_loss < 1:
            raise ValidationError("stop_loss must lie in (0, 1)")
        if not 0 < self.max_position <= 1:
            raise ValidationError("max_position must lie in (0, 1]")
        if self.transaction_cost < 0:
            raise ValidationError("transaction_cost must be non-negative")
        if self.horizon not in (0,) + HORIZONS:
            raise ValidationError("horizon must be 0..5")
        if self.execution not in ("close", "next_close"):
            raise ValidationError(f"unknown execution mode {self.execution!r}")
        if not self.initial_capital > 0:
            raise ValidationError("initial_capital must be positive")


@dataclass(frozen=True)
class SignalEvent:
    index: int
    day: int
    kind: str  # long_entry, short_entry, long_exit, short_exit


@dataclass(frozen=True)
class Trade:
    direction: str
    entry_date: int
    entry_price: float
    exit_date: int
    exit_price: float
    exit_reason: str  # threshold, stop_loss, reversal, end_of_data
    return_net: float
    quantity: float
    entry_equity: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["entry_date"] = to_iso(self.entry_date)
        d["exit_date"] = to_iso(self.exit_date)
        return d


@dataclass(frozen=True)
class Metrics:
    cumulative_return: float
    annualized_return: Optional[float]
    sharpe_ratio: Optional[float]
    max_drawdown: float
    win_rate: float
    trade_count: int
    n_days: int


@dataclass(eq=False)
class BacktestReport:
    days: np.ndarray
    equity: np.ndarray
    positions: np.ndarray
    trades: list
    metrics: Metrics
    label: str = "strategy"

    def __getattr__(self, name):
        # metric fields read as report attributes
        metrics = self.__dict__.get("metrics")
        if metrics is not None and name in Metrics.__dataclass_fields__:
            return getattr(metrics, name)
        raise AttributeError(name)

    def to_dict(self) -> dict:
        out = {"label": self.label}
        out.update(asdict(self.metrics))
        out["final_equity"] = float(self.equity[-1])
        out["trades"] = [t.to_dict() for t in self.trades]
        return out

    def write_equity(self, path, fmt: str = "{:.12g}") -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date", "equity"])
            for d, e in zip(self.days, self.equity):
                w.writerow([to_iso(d), fmt.format(e)])


# ----------------------------------------------------------------- signal rules


def _threshold_action(position: int, value: float, cfg: StrategyConfig) -> Optional[str]:
    if position == LONG:
        return "long_exit" if value >= -cfg.theta2 else None
    if position == SHORT:
        return "short_exit" if value <= cfg.theta2 else None
    if value <= -cfg.theta1:
        return "long_entry"
    if value >= cfg.theta1:
        return "short_entry"
    return None


def generate_signals(scores, config: StrategyConfig = StrategyConfig(), days=None) -> list[SignalEvent]:
    """Stateful scan of a score series into entry and exit events.

    At most one event per day and no re-entry on the day of an exit.
    """
    days_arr, values = _dated(scores, days)
    events = []
    position = FLAT
    for i, v in enumerate(values):
        if not math.isfinite(v):
            continue
        action = _threshold_action(position, v, config)
        if action is None:
            continue
        events.append(SignalEvent(i, int(days_arr[i]), action))
        if action == "long_entry":
            position = LONG
        elif action == "short_entry":
            position = SHORT
        else:
            position = FLAT
    return events


def apply_reversal_exit(forecasts, h: int, position=LONG) -> bool:
    """True when forecasts at horizons ``h`` and ``h+1`` have opposite signs.

    ``forecasts`` maps horizon to prediction, or is a sequence starting at
    horizon 1. Without an open position, or without an ``h+1`` forecast,
    the rule does not fire.
    """
    if position in (FLAT, None, "flat"):
        return False
    if isinstance(forecasts, Mapping):
        a, b = forecasts.get(h), forecasts.get(h + 1)
    else:
        a = forecasts[h - 1] if 0 < h <= len(forecasts) else None
        b = forecasts[h] if 0 < h + 1 <= len(forecasts) else None
    if a is None or b is None or not (math.isfinite(a) and math.isfinite(b)):
        return False
    return a * b < 0


# -------------------------------------------------------------------- execution


def _dated(scores, days=None):
    if hasattr(scores, "score") and hasattr(scores, "days"):
        return np.asarray(scores.days, dtype=np.int64), np.asarray(scores.score, dtype=float)
    if isinstance(scores, tuple) and len(scores) == 2 and days is None:
        d, v = scores
        return np.asarray(d, dtype=np.int64), np.asarray(v, dtype=float)
    values = np.asarray(scores, dtype=float)
    d = np.arange(len(values), dtype=np.int64) if days is None else np.asarray(days, dtype=np.int64)
    if len(d) != len(values):
        raise ContractError("days and values differ in length")
    return d, values


def _align(prices: PriceSeries, sig_days, values, extra=None):
    common, pi, si = np.intersect1d(prices.days, sig_days, assume_unique=True, return_indices=True)
    if len(common) == 0:
        raise ContractError("prices and signal series share no dates")
    aligned_extra = None if extra is None else {h: np.asarray(v, dtype=float)[si] for h, v in extra.items()}
    return common, prices.close[pi], values[si], aligned_extra


def _simulate(days, close, values, cfg: StrategyConfig, reversal=None, h=None, label="strategy"):
    n = len(days)
    c = cfg.transaction_cost
    equity = np.empty(n)
    positions = np.zeros(n, dtype=np.int8)
    trades = []
    cash = cfg.initial_capital  # equity while flat
    pos = FLAT
    qty = entry_price = entry_equity = base = 0.0
    entry_day = 0
    pending = None

    def close_position(i, reason):
        nonlocal pos, cash
        price = close[i]
        value = base + pos * qty * (price - entry_price) - c * qty * price
        trades.append(
            Trade(
                "long" if pos == LONG else "short",
                entry_day,
                entry_price,
                int(days[i]),
                float(price),
                reason,
                (value - entry_equity) / entry_equity,
                qty,
                entry_equity,
            )
        )
        cash = value
        pos = FLAT

    def open_position(i, direction):
        nonlocal pos, qty, entry_price, entry_equity, base, entry_day, cash
        entry_equity = cash
        notional = cfg.max_position * cash
        entry_price = float(close[i])
        qty = notional / entry_price
        base = cash - c * notional
        entry_day = int(days[i])
        pos = direction

    for i in range(n):
        price = close[i]
        last = i == n - 1
        exited_today = False
        if pos != FLAT and pos * (entry_price - price) / entry_price >= cfg.stop_loss:
            close_position(i, "stop_loss")
            exited_today = True
            pending = None
        if cfg.execution == "next_close" and pending is not None:
            kind, reason = pending
            pending = None
            if kind.endswith("exit") and pos != FLAT:
                close_position(i, reason)
                exited_today = True
            elif kind.endswith("entry") and pos == FLAT and not exited_today and not last:
                open_position(i, LONG if kind == "long_entry" else SHORT)
        v = values[i]
        action = None
        if math.isfinite(v) and not exited_today:
            action = _threshold_action(pos, v, cfg)
            reason = "threshold"
            if action is None and pos != FLAT and reversal is not None and h is not None:
                row = {k: reversal[k][i] for k in reversal}
                if apply_reversal_exit(row, h, pos):
                    action = "long_exit" if pos == LONG else "short_exit"
                    reason = "reversal"
        if action is not None:
            if cfg.execution == "next_close":
                pending = (action, reason)
            elif action.endswith("exit"):
                close_position(i, reason)
            elif not last:
                open_position(i, LONG if action == "long_entry" else SHORT)
        if last and pos != FLAT:
            close_position(i, "end_of_data")
        if pos != FLAT:
            equity[i] = base + pos * qty * (price - entry_price)
        else:
            equity[i] = cash
        positions[i] = pos
    metrics = performance_metrics(equity, trades, cfg, initial=cfg.initial_capital)
    return BacktestReport(np.asarray(days, dtype=np.int64), equity, positions, trades, metrics, label)


def run_backtest(prices: PriceSeries, scores, config: StrategyConfig = StrategyConfig(), days=None) -> BacktestReport:
    """Trade ``scores`` (a ScoreSeries, ``(days, values)`` pair, or values with ``days``) against ``prices``.

    Only dates present in both inputs are simulated. A bare value array
    without ``days`` is matched to ``prices`` by position.
    """
    if days is None and not hasattr(scores, "days") and not isinstance(scores, tuple):
        if len(scores) != len(prices):
            raise ContractError(f"{len(scores)} undated scores for {len(prices)} prices")
        days = prices.days
    sig_days, values = _dated(scores, days)
    d, close, v, _ = _align(prices, sig_days, values)
    return _simulate(d, close, v, config)


def buy_and_hold_benchmark(prices: PriceSeries, config: StrategyConfig = StrategyConfig()) -> BacktestReport:
    """Full-capital long from the first close to the last, costs on both legs."""
    n = len(prices)
    if n == 0:
        raise ContractError("empty price series")
    c = config.transaction_cost
    cap = config.initial_capital
    close = prices.close
    qty = cap / close[0]
    base = cap - c * cap
    equity = base + qty * (close - close[0])
    trades = []
    if n > 1:
        equity[-1] -= c * qty * close[-1]
        trades.append(
            Trade("long", int(prices.days[0]), float(close[0]), int(prices.days[-1]), float(close[-1]),
                  "end_of_data", (equity[-1] - cap) / cap, qty, cap)
        )
    positions = np.ones(n, dtype=np.int8)
    positions[-1] = 0 if n > 1 else 1
    metrics = performance_metrics(equity, trades, config, initial=cap)
    return BacktestReport(prices.days.copy(), equity, positions, trades, metrics, "buy_and_hold")


@dataclass
class MultiHorizonResult:
    reports: dict  # horizon -> BacktestReport
    best_horizon: int

    def summary(self) -> dict:
        return {
            "best_horizon": self.best_horizon,
            "horizons": {str(h): asdict(r.metrics) for h, r in self.reports.items()},
        }


def multi_horizon_backtest(prices: PriceSeries, forecasts, config: StrategyConfig = StrategyConfig()) -> MultiHorizonResult:
    """One backtest per forecast horizon with the reversal exit active.

    ``forecasts`` has ``days`` and ``predictions`` (horizon -> values), or is
    a ``(days, {horizon: values})`` pair. Best horizon maximizes annualized
    return; ties go to the lowest horizon.
    """
    if isinstance(forecasts, tuple):
        f_days, preds = forecasts
    else:
        f_days, preds = forecasts.days, forecasts.predictions
    missing = [h for h in HORIZONS if h not in preds]
    if missing:
        raise ContractError(f"missing forecast horizon(s) {missing}")
    f_days = np.asarray(f_days, dtype=np.int64)
    reports = {}
    for h in HORIZONS:
        values = np.asarray(preds[h], dtype=float)
        if len(values) != len(f_days):
            raise ContractError(f"horizon {h} series length differs from dates")
        d, close, v, rev = _align(prices, f_days, values, extra={k: preds[k] for k in HORIZONS})
        reports[h] = _simulate(d, close, v, config, reversal=rev, h=h, label=f"h{h}")

    def key(h):
        ar = reports[h].metrics.annualized_return
        return (-(ar if ar is not None else -math.inf), h)

    best = min(HORIZONS, key=key)
    return MultiHorizonResult(reports, best)


# ---------------------------------------------------------------------- metrics


def max_drawdown(equity, initial: Optional[float] = None) -> float:
    eq = np.asarray(equity, dtype=float)
    peak = np.maximum.accumulate(eq)
    if initial is not None:
        peak = np.maximum(peak, initial)
    return float(np.max((peak - eq) / peak)) if len(eq) else 0.0


def performance_metrics(equity, trades: Sequence[Trade] = (), config: StrategyConfig = StrategyConfig(),
                        initial: Optional[float] = None) -> Metrics:
    """Return, risk and trade statistics for an equity curve.

    ``initial`` is the starting capital (defaults to ``equity[0]``). The
    annualized figure discounts terminal wealth continuously at
    ``config.discount_rate`` over ``(len(equity) - 1) / 252`` years before
    annualizing. Undefined ratios are reported as None.
    """
    eq = np.asarray(equity, dtype=float)
    if len(eq) == 0:
        raise ContractError("empty equity curve")
    start = float(eq[0]) if initial is None else float(initial)
    gross = float(eq[-1]) / start
    n_days = len(eq) - 1
    if n_days > 0:
        years = n_days / TRADING_DAYS
        annualized = (gross * math.exp(-config.discount_rate * years)) ** (1.0 / years) - 1.0
    else:
        annualized = None
    sharpe = None
    if len(eq) > 2:
        rets = eq[1:] / eq[:-1] - 1.0
        sd = float(np.std(rets, ddof=1))
        if sd > 0:
            sharpe = float(np.mean(rets)) / sd * math.sqrt(TRADING_DAYS)
    wins = sum(1 for t in trades if t.return_net > 0)
    return Metrics(
        cumulative_return=gross - 1.0,
        annualized_return=annualized,
        sharpe_ratio=sharpe,
        max_drawdown=max_drawdown(eq, initial=start),
        win_rate=wins / len(trades) if trades else 0.0,
        trade_count=len(trades),
        n_days=n_days,
    )


def aggregate_reports(reports: Sequence[dict]) -> dict:
    """Mean of each numeric metric over per-symbol report dicts (None entries skipped)."""
    keys = ("cumulative_return", "annualized_return", "sharpe_ratio", "max_drawdown", "win_rate", "trade_count")
    out = {"symbols": len(reports)}
    for k in keys:
        vals = [r[k] for r in reports if r.get(k) is not None]
        out[k] = float(np.mean(vals)) if vals else None
    return out


def report_json(report: BacktestReport, path, digits: int = 12) -> None:
    Path(path).write_text(dumps_rounded(report.to_dict(), digits) + "\n")


def dumps_rounded(obj, digits: int = 12) -> str:
    return json.dumps(round_floats(obj, digits), indent=2, sort_keys=False)


def round_floats(obj, digits: int = 12):
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return None
        return float(f"{obj:.{digits}g}")
    if isinstance(obj, (np.floating,)):
        return round_floats(float(obj), digits)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, dict):
        return {k: round_floats(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v, digits) for v in obj]
    return obj
