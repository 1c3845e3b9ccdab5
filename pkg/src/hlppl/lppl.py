"""Log-periodic power law model: evaluation and multi-start fitting.

Time is the trading-day index within the fitted window (first day = 0).
For fixed ``(t_c, m, omega)`` the model is linear in ``A, B, C1, C2`` with

    C cos(omega ln(t_c - t) + phi) = C1 cos(omega ln(t_c - t)) + C2 sin(omega ln(t_c - t))

so the search runs over three nonlinear parameters only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import (
    DegenerateWindowError,
    DomainError,
    FitFailureError,
    InsufficientDataError,
    ValidationError,
)
from .ingestion import MIN_FIT_LENGTH, PriceSeries, to_iso

_PENALTY = 1e300


@dataclass(frozen=True)
class LpplParams:
    A: float
    B: float
    C: float
    tc: float
    m: float
    omega: float
    phi: float

    def __post_init__(self):
        if not 0.0 < self.m < 1.0:
            raise ValidationError(f"m={self.m} outside (0, 1)")
        if not self.omega > 0.0:
            raise ValidationError(f"omega={self.omega} must be positive")

    @classmethod
    def from_linear(cls, A, B, C1, C2, tc, m, omega) -> "LpplParams":
        return cls(float(A), float(B), math.hypot(C1, C2), float(tc), float(m), float(omega), math.atan2(-C2, C1))

    @property
    def C1(self) -> float:
        return self.C * math.cos(self.phi)

    @property
    def C2(self) -> float:
        return -self.C * math.sin(self.phi)


def lppl_eval(params: LpplParams, t):
    """Log-price of the LPPL trajectory at day index ``t`` (scalar or array)."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr >= params.tc):
        raise DomainError(f"t must be < t_c={params.tc}")
    dt = params.tc - t_arr
    power = dt**params.m
    out = params.A + params.B * power + params.C * power * np.cos(params.omega * np.log(dt) + params.phi)
    return float(out) if np.ndim(out) == 0 else out


class LinearSubfit(NamedTuple):
    A: float
    B: float
    C1: float
    C2: float
    sse: float


def _design(t: np.ndarray, tc: float, m: float, omega: float) -> np.ndarray:
    lg = np.log(tc - t)
    f = np.exp(m * lg)
    ph = omega * lg
    X = np.empty((4, len(t)))
    X[0] = 1.0
    X[1] = f
    X[2] = f * np.cos(ph)
    X[3] = f * np.sin(ph)
    return X


def _log_prices(series) -> np.ndarray:
    if isinstance(series, PriceSeries):
        return series.log_close
    return np.asarray(series, dtype=float)


def linear_subfit(tc: float, m: float, omega: float, series) -> LinearSubfit:
    """Least-squares ``(A, B, C1, C2)`` for fixed nonlinear parameters.

    ``series`` is a PriceSeries window or an array of log prices.
    """
    y = _log_prices(series)
    t = np.arange(len(y), dtype=float)
    if len(y) == 0 or tc <= t[-1]:
        raise DomainError(f"t_c={tc} must exceed the last day index {len(y) - 1}")
    X = _design(t, tc, m, omega).T
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < 4:
        raise DegenerateWindowError(f"design matrix rank {rank} < 4 at t_c={tc}, m={m}, omega={omega}")
    r = y - X @ coef
    return LinearSubfit(*(float(c) for c in coef), float(r @ r))


def _fast_sse(t, y, tc, m, omega) -> float:
    """Objective for the search; normal equations are faster than lstsq."""
    X = _design(t, tc, m, omega)
    G = X @ X.T
    try:
        coef = np.linalg.solve(G, X @ y)
    except np.linalg.LinAlgError:
        return _PENALTY
    r = y - coef @ X
    val = float(r @ r)
    return val if math.isfinite(val) else _PENALTY


@dataclass(frozen=True)
class FitConfig:
    restarts: int = 32
    tc_search: Optional[tuple] = None  # offsets past the last day; default (1, 0.5 * n)
    m_bounds: tuple = (0.01, 0.99)
    omega_bounds: tuple = (2.0, 25.0)
    max_iterations: int = 500
    tolerance: float = 1e-9
    rng_seed: int = 0
    min_length: int = MIN_FIT_LENGTH

    def __post_init__(self):
        if self.restarts < 1:
            raise ValidationError("restarts must be >= 1")
        for name in ("m_bounds", "omega_bounds") + (("tc_search",) if self.tc_search else ()):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValidationError(f"{name} must be an increasing pair")
        if not (0 < self.m_bounds[0] and self.m_bounds[1] < 1):
            raise ValidationError("m_bounds must lie inside (0, 1)")
        if self.omega_bounds[0] <= 0:
            raise ValidationError("omega_bounds must be positive")
        if self.tc_search and self.tc_search[0] <= 0:
            raise ValidationError("t_c search must start past the window end")

    def bounds(self, n: int) -> np.ndarray:
        lo, hi = self.tc_search if self.tc_search else (1.0, 0.5 * n)
        last = n - 1
        return np.array([[last + lo, last + hi], list(self.m_bounds), list(self.omega_bounds)], dtype=float)


@dataclass(frozen=True)
class LpplFit:
    params: LpplParams
    sse: float
    rmse: float
    window: tuple  # (start day, end day) as ordinals
    n_obs: int
    restarts_used: int
    restart_log: tuple = field(default=(), repr=False, compare=False)  # (initial sse, final sse) per restart

    def to_dict(self) -> dict:
        p = self.params
        return {
            "A": p.A,
            "B": p.B,
            "C": p.C,
            "t_c": p.tc,
            "m": p.m,
            "omega": p.omega,
            "phi": p.phi,
            "sse": self.sse,
            "rmse": self.rmse,
            "window_start": to_iso(self.window[0]),
            "window_end": to_iso(self.window[1]),
            "n_obs": self.n_obs,
            "restarts_used": self.restarts_used,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LpplFit":
        from .ingestion import to_day

        params = LpplParams(d["A"], d["B"], d["C"], d["t_c"], d["m"], d["omega"], d["phi"])
        return cls(
            params,
            d["sse"],
            d["rmse"],
            (to_day(d["window_start"]), to_day(d["window_end"])),
            int(d["n_obs"]),
            int(d.get("restarts_used", 0)),
        )


def _nelder_mead(f, x0, f0, max_iter, rtol, atol=0.0, step=0.1):
    """Nelder-Mead on the unit cube; trial points are projected onto the box.

    Stops when the spread of simplex values falls below ``rtol * best + atol``.
    The starting vertex is kept in the simplex, so the result never exceeds ``f0``.
    """
    dim = len(x0)
    simplex = [x0]
    values = [f0]
    for i in range(dim):
        v = x0.copy()
        v[i] = v[i] + step if v[i] + step <= 1.0 else v[i] - step
        simplex.append(v)
        values.append(f(v))
    simplex = np.array(simplex)
    values = np.array(values)
    for _ in range(max_iter):
        order = np.argsort(values, kind="stable")
        simplex, values = simplex[order], values[order]
        best, worst = values[0], values[-1]
        if worst - best <= rtol * abs(best) + atol:
            break
        centroid = simplex[:-1].mean(axis=0)
        xr = np.clip(2.0 * centroid - simplex[-1], 0.0, 1.0)
        fr = f(xr)
        if fr < best:
            xe = np.clip(3.0 * centroid - 2.0 * simplex[-1], 0.0, 1.0)
            fe = f(xe)
            if fe < fr:
                simplex[-1], values[-1] = xe, fe
            else:
                simplex[-1], values[-1] = xr, fr
        elif fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
        else:
            if fr < worst:
                xc = centroid + 0.5 * (xr - centroid)
            else:
                xc = centroid + 0.5 * (simplex[-1] - centroid)
            fc = f(xc)
            if fc < min(fr, worst):
                simplex[-1], values[-1] = xc, fc
            else:
                for j in range(1, dim + 1):
                    simplex[j] = simplex[0] + 0.5 * (simplex[j] - simplex[0])
                    values[j] = f(simplex[j])
    i = int(np.argmin(values))
    return simplex[i], float(values[i])


def fit_log_prices(y, config: FitConfig = FitConfig()):
    """Multi-start fit on a raw log-price array.

    Returns ``(params, sse, restarts_used, restart_log)``.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n < config.min_length:
        raise InsufficientDataError(f"LPPL fit needs at least {config.min_length} observations, got {n}")
    t = np.arange(n, dtype=float)
    box = config.bounds(n)
    lo, span = box[:, 0], box[:, 1] - box[:, 0]

    def to_params(u):
        return lo + span * u

    def objective(u):
        tc, m, omega = to_params(u)
        return _fast_sse(t, y, tc, m, omega)

    # noiseless data drive the sse to rounding level, where a relative rule never fires
    atol = 1e-15 * float(np.sum((y - y.mean()) ** 2)) + 1e-300
    candidates = []
    log = []
    for k in range(config.restarts):
        rng = np.random.default_rng([config.rng_seed, k])
        u0 = rng.uniform(0.0, 1.0, size=3)
        try:
            sub0 = linear_subfit(*to_params(u0), y)
        except (DegenerateWindowError, DomainError):
            log.append((math.nan, math.nan))
            continue
        u, sse = _nelder_mead(objective, u0, sub0.sse, config.max_iterations, config.tolerance, atol)
        tc, m, omega = to_params(u)
        try:
            sub = linear_subfit(tc, m, omega, y)
        except (DegenerateWindowError, DomainError):
            log.append((sub0.sse, math.nan))
            continue
        if not (0.0 < m < 1.0 and omega > 0.0 and tc > n - 1):
            log.append((sub0.sse, math.nan))
            continue
        if sub.sse > sub0.sse:
            # search objective and lstsq disagree in the last bits
            tc, m, omega = to_params(u0)
            sub = sub0
        log.append((sub0.sse, sub.sse))
        candidates.append((sub.sse, tc, m, omega, sub))
    if not candidates:
        raise FitFailureError(f"all {config.restarts} restarts failed")
    sse, tc, m, omega, sub = min(candidates, key=lambda c: (c[0], c[1]))
    params = LpplParams.from_linear(sub.A, sub.B, sub.C1, sub.C2, tc, m, omega)
    return params, sse, len(candidates), tuple(log)


def fit_lppl(series: PriceSeries, config: FitConfig = FitConfig()) -> LpplFit:
    """Best multi-start LPPL fit over the whole of ``series``."""
    params, sse, used, log = fit_log_prices(series.log_close, config)
    n = len(series)
    return LpplFit(
        params=params,
        sse=sse,
        rmse=math.sqrt(sse / n),
        window=(int(series.days[0]), int(series.days[-1])),
        n_obs=n,
        restarts_used=used,
        restart_log=log,
    )
