"""Bubble detection from LPPL residuals, media hype and news sentiment."""

from .backtest import (
    StrategyConfig,
    apply_reversal_exit,
    buy_and_hold_benchmark,
    generate_signals,
    multi_horizon_backtest,
    performance_metrics,
    run_backtest,
)
from .behavioral import (
    cap_adjusted_hype,
    daily_signals,
    finbert_daily_aggregate,
    hype_index,
    sentiment_score,
)
from .forecast import ForecastSet, LossWeights, baseline_forecast, combined_loss, eval_metrics, loss_gradient
from .ingestion import PriceSeries, align_daily, load_features, load_news, load_prices
from .lppl import FitConfig, LpplFit, LpplParams, fit_lppl, linear_subfit, lppl_eval
from .residuals import compute_residuals, fit_ar1, normalize_residuals
from .score import Episode, ScoreParams, ScoreSeries, compose_score, label_episodes

__version__ = "0.1.0"
