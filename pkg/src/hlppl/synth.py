"""Synthetic fixtures with known ground truth.

Prices follow an LPPL trajectory plus a mean-reverting AR(1) residual:

    ln p[t+1] = ln p[t] + (lppl[t+1] - lppl[t]) - alpha * (ln p[t] - lppl[t]) + u[t]

Parameter draws use the ``SAMPLING_BOUNDS`` below, which sit strictly
inside the default fitting bounds.
"""

from __future__ import annotations

import datetime as _dt
import math
from dataclasses import dataclass

import numpy as np

from .ingestion import MarketFeatureRow, NewsArticleRecord, PriceSeries
from .lppl import LpplParams, lppl_eval

SAMPLING_BOUNDS = {
    "tc_offset": (5.0, 100.0),  # days past the last observation
    "m": (0.1, 0.9),
    "omega": (4.0, 15.0),
    "rise": (0.3, 0.8),  # total power-law log-price gain over the window
    "c_ratio": (0.05, 0.15),  # C / |B|
}

START_DATE = _dt.date(2020, 1, 1)


def reference_params(n: int = 300) -> LpplParams:
    """Fixed bubble used by recovery tests: m=0.5, omega=8, t_c 30 days past the end."""
    return LpplParams(A=math.log(100.0), B=-0.05, C=0.005, tc=n - 1 + 30.0, m=0.5, omega=8.0, phi=0.0)


def random_params(rng: np.random.Generator, n: int = 300) -> LpplParams:
    b = SAMPLING_BOUNDS
    tc = n - 1 + rng.uniform(*b["tc_offset"])
    m = rng.uniform(*b["m"])
    omega = rng.uniform(*b["omega"])
    phi = rng.uniform(0.0, 2.0 * math.pi)
    rise = rng.uniform(*b["rise"])
    B = -rise / (tc**m - (tc - (n - 1)) ** m)
    C = abs(B) * rng.uniform(*b["c_ratio"])
    return LpplParams(A=math.log(100.0), B=B, C=C, tc=tc, m=m, omega=omega, phi=phi)


def business_days(n: int, start: _dt.date = START_DATE) -> np.ndarray:
    out = []
    d = start
    while len(out) < n:
        if d.weekday() < 5:
            out.append(d.toordinal())
        d += _dt.timedelta(days=1)
    return np.asarray(out, dtype=np.int64)


def lppl_log_prices(params: LpplParams, n: int, noise: float = 0.0, rng=None) -> np.ndarray:
    """LPPL path on days ``0..n-1`` plus optional i.i.d. Gaussian noise."""
    y = lppl_eval(params, np.arange(n, dtype=float))
    if noise > 0:
        y = y + rng.normal(0.0, noise, n)
    return y


def ar1_residuals(alpha: float, noise_std: float, n: int, rng, eps0: float = 0.0) -> np.ndarray:
    """``eps[t+1] = (1 - alpha) eps[t] + u[t]``."""
    u = rng.normal(0.0, noise_std, n - 1)
    eps = np.empty(n)
    eps[0] = eps0
    for i in range(n - 1):
        eps[i + 1] = (1.0 - alpha) * eps[i] + u[i]
    return eps


def ou_log_prices(params: LpplParams, n: int, alpha: float, noise_std: float, rng) -> np.ndarray:
    """Iterate the log-price recursion with LPPL drift and AR(1) pull."""
    trend = lppl_eval(params, np.arange(n, dtype=float))
    u = rng.normal(0.0, noise_std, n - 1)
    y = np.empty(n)
    y[0] = trend[0]
    for i in range(n - 1):
        y[i + 1] = y[i] + (trend[i + 1] - trend[i]) - alpha * (y[i] - trend[i]) + u[i]
    return y


@dataclass
class SyntheticBundle:
    prices: PriceSeries
    truth: LpplParams
    alpha: float
    noise_std: float
    news: list
    features: list


def make_bundle(
    symbol: str = "SYN",
    n: int = 300,
    seed: int = 0,
    alpha: float = 0.2,
    noise_std: float = 0.01,
    peers: int = 9,
    params: LpplParams | None = None,
) -> SyntheticBundle:
    """Prices, news and peer article counts for one synthetic symbol.

    Media coverage and tone rise with the residual so the behavioural
    signals co-move with mispricing.
    """
    rng = np.random.default_rng(seed)
    truth = params if params is not None else reference_params(n)
    y = ou_log_prices(truth, n, alpha, noise_std, rng)
    days = business_days(n)
    prices = PriceSeries(symbol, days, np.exp(y))

    eps = y - lppl_eval(truth, np.arange(n, dtype=float))
    scale = max(float(np.max(np.abs(eps))), 1e-12)
    news, features = [], []
    peer_names = [f"PEER{k:02d}" for k in range(peers)]
    for i, d in enumerate(days):
        z = eps[i] / scale
        k = int(rng.poisson(1.0 + 3.0 * abs(z)))
        for _ in range(k):
            pol = float(np.clip(z + rng.normal(0.0, 0.3), -1.0, 1.0))
            cls = "positive" if pol > 0.2 else "negative" if pol < -0.2 else "neutral"
            conf = float(np.clip(0.5 + 0.5 * abs(pol) + rng.normal(0.0, 0.05), 0.05, 1.0))
            news.append(NewsArticleRecord(int(d), symbol, round(pol, 6), 1.0, cls, round(conf, 6)))
        counts = {symbol: k}
        caps = {symbol: float(round(np.exp(y[i]) * 1e7, 2))}
        for j, peer in enumerate(peer_names):
            counts[peer] = int(rng.poisson(2.0))
            caps[peer] = float(round(1e9 * (1.0 + j), 2))
        features.append(MarketFeatureRow(int(d), counts, caps))
    return SyntheticBundle(prices, truth, alpha, noise_std, news, features)
