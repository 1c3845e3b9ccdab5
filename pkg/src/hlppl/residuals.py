"""Residuals around the fitted LPPL path, their AR(1) dynamics and normalization."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ContractError, DegenerateInputError, InsufficientDataError, ValidationError
from .ingestion import PriceSeries, to_iso
from .lppl import LpplFit, lppl_eval

MIN_AR1_LENGTH = 30
ZERO_GUARD = 1e-12
NORMALIZATION_MODES = ("global", "running")


@dataclass(frozen=True, eq=False)
class ResidualSeries:
    days: np.ndarray
    epsilon: np.ndarray
    epsilon_norm: Optional[np.ndarray] = None
    normalization_mode: Optional[str] = None

    def __post_init__(self):
        if len(self.days) != len(self.epsilon):
            raise ValidationError("days and epsilon differ in length")
        if self.epsilon_norm is not None:
            if len(self.epsilon_norm) != len(self.epsilon):
                raise ValidationError("epsilon_norm length differs")
            if np.any(np.abs(self.epsilon_norm) > 1.0):
                raise ValidationError("epsilon_norm outside [-1, 1]")

    def __len__(self):
        return len(self.epsilon)

    def to_csv(self, path, fmt: str = "{:.12g}") -> None:
        norm = self.epsilon_norm if self.epsilon_norm is not None else [math.nan] * len(self)
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date", "epsilon", "epsilon_norm"])
            for d, e, z in zip(self.days, self.epsilon, norm):
                w.writerow([to_iso(d), fmt.format(e), fmt.format(z)])


@dataclass(frozen=True)
class Ar1Estimate:
    alpha: float
    noise_std: float
    half_life: Optional[float]
    r_squared: float
    n_obs: int


def compute_residuals(series: PriceSeries, fit: LpplFit) -> ResidualSeries:
    """``ln p(t)`` minus the fitted trajectory on every day of the fit window."""
    if len(series) != fit.n_obs or (int(series.days[0]), int(series.days[-1])) != tuple(fit.window):
        raise ContractError(
            f"series window {to_iso(series.days[0])}..{to_iso(series.days[-1])} (n={len(series)}) "
            f"does not match fit window {to_iso(fit.window[0])}..{to_iso(fit.window[1])} (n={fit.n_obs})"
        )
    t = np.arange(len(series), dtype=float)
    eps = series.log_close - lppl_eval(fit.params, t)
    return ResidualSeries(series.days.copy(), eps)


def _as_array(residuals) -> np.ndarray:
    if isinstance(residuals, ResidualSeries):
        return np.asarray(residuals.epsilon, dtype=float)
    return np.asarray(residuals, dtype=float)


def fit_ar1(residuals) -> Ar1Estimate:
    """Regress the one-step change on the negated level, without intercept.

    ``eps[t+1] - eps[t] = -alpha * eps[t] + u[t]``
    """
    eps = _as_array(residuals)
    if len(eps) < MIN_AR1_LENGTH:
        raise InsufficientDataError(f"AR(1) fit needs {MIN_AR1_LENGTH} residuals, got {len(eps)}")
    if np.all(eps == eps[0]):
        raise DegenerateInputError("residual series is constant")
    x = -eps[:-1]
    dy = np.diff(eps)
    alpha = float(x @ dy / (x @ x))
    u = dy - alpha * x
    ssr = float(u @ u)
    n = len(dy)
    noise_std = math.sqrt(ssr / (n - 1))
    sst = float(dy @ dy)  # uncentered, matching the no-intercept regression
    r2 = 1.0 - ssr / sst if sst > 0 else 0.0
    half_life = math.log(2.0) / alpha if alpha > 0 else None
    return Ar1Estimate(alpha, noise_std, half_life, r2, len(eps))


def normalize_residuals(residuals, mode: str = "global") -> ResidualSeries:
    """Scale residuals into [-1, 1] by the largest absolute deviation.

    ``global`` divides by the maximum over the whole window; ``running``
    divides each value by the maximum over all earlier-or-equal dates.
    """
    if mode not in NORMALIZATION_MODES:
        raise ValidationError(f"unknown normalization mode {mode!r}")
    if isinstance(residuals, ResidualSeries):
        base = residuals
    else:
        eps = np.asarray(residuals, dtype=float)
        base = ResidualSeries(np.arange(len(eps), dtype=np.int64), eps)
    eps = np.asarray(base.epsilon, dtype=float)
    absval = np.abs(eps)
    if len(eps) == 0 or absval.max() < ZERO_GUARD:
        raise DegenerateInputError("residuals are all zero; normalization undefined")
    if mode == "global":
        norm = eps / absval.max()
    else:
        peak = np.maximum.accumulate(absval)
        norm = np.zeros_like(eps)
        live = peak > 0
        norm[live] = eps[live] / peak[live]
    np.clip(norm, -1.0, 1.0, out=norm)
    return replace(base, epsilon_norm=norm, normalization_mode=mode)
