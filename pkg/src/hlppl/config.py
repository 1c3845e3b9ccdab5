"""Run configuration: defaults, TOML file, then command-line overrides."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import tomli
import tomli_w

from .backtest import StrategyConfig
from .errors import ValidationError
from .lppl import FitConfig
from .residuals import NORMALIZATION_MODES
from .score import DEFAULT_D_MIN, DEFAULT_TAU, ScoreParams


@dataclass
class InputsSection:
    symbol: str = "SYM"
    prices: Optional[str] = None
    news: Optional[str] = None
    features: Optional[str] = None
    forecasts: Optional[str] = None


@dataclass
class FitSection:
    restarts: int = 32
    tc_search: Optional[list] = None
    m_bounds: list = field(default_factory=lambda: [0.01, 0.99])
    omega_bounds: list = field(default_factory=lambda: [2.0, 25.0])
    max_iterations: int = 500
    tolerance: float = 1e-9
    window_mode: str = "full"  # or "rolling"
    window: int = 250
    step: int = 5


@dataclass
class ScoreSection:
    alpha1: float = 0.2
    alpha2: float = 0.2
    tau: float = DEFAULT_TAU
    d_min: int = DEFAULT_D_MIN
    normalization: str = "global"
    sentiment: str = "polarity"  # or "finbert" (S_pos - S_neg)


@dataclass
class StrategySection:
    theta1: float = 0.7
    theta2: float = 0.3
    stop_loss: float = 0.15
    max_position: float = 0.5
    transaction_cost: float = 0.001
    discount_rate: float = 0.02
    horizon: int = 0
    execution: str = "close"
    multi_horizon: bool = False


@dataclass
class OutputSection:
    dir: str = "out"


@dataclass
class RunConfig:
    rng_seed: int = 0
    inputs: InputsSection = field(default_factory=InputsSection)
    fit: FitSection = field(default_factory=FitSection)
    score: ScoreSection = field(default_factory=ScoreSection)
    strategy: StrategySection = field(default_factory=StrategySection)
    output: OutputSection = field(default_factory=OutputSection)

    def validate(self) -> "RunConfig":
        self.fit_config()
        self.score_params()
        self.strategy_config()
        if self.score.normalization not in NORMALIZATION_MODES:
            raise ValidationError(f"normalization must be one of {NORMALIZATION_MODES}")
        if self.score.sentiment not in ("polarity", "finbert"):
            raise ValidationError("score.sentiment must be 'polarity' or 'finbert'")
        if self.fit.window_mode not in ("full", "rolling"):
            raise ValidationError("fit.window_mode must be 'full' or 'rolling'")
        if self.fit.window_mode == "rolling" and (self.fit.window < 100 or self.fit.step < 1):
            raise ValidationError("rolling fits need window >= 100 and step >= 1")
        if not self.score.tau > 0 or self.score.d_min < 1:
            raise ValidationError("need tau > 0 and d_min >= 1")
        return self

    def fit_config(self) -> FitConfig:
        f = self.fit
        return FitConfig(
            restarts=f.restarts,
            tc_search=tuple(f.tc_search) if f.tc_search else None,
            m_bounds=tuple(f.m_bounds),
            omega_bounds=tuple(f.omega_bounds),
            max_iterations=f.max_iterations,
            tolerance=f.tolerance,
            rng_seed=self.rng_seed,
        )

    def score_params(self) -> ScoreParams:
        return ScoreParams(self.score.alpha1, self.score.alpha2)

    def strategy_config(self) -> StrategyConfig:
        s = asdict(self.strategy)
        s.pop("multi_horizon")
        return StrategyConfig(**s)

    def to_dict(self) -> dict:
        return _drop_none(asdict(self))

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())


_SECTIONS = {
    "inputs": InputsSection,
    "fit": FitSection,
    "score": ScoreSection,
    "strategy": StrategySection,
    "output": OutputSection,
}


def _drop_none(d):
    if isinstance(d, dict):
        return {k: _drop_none(v) for k, v in d.items() if v is not None}
    return d


def _coerce(cls, key, value):
    names = {f.name: f for f in fields(cls)}
    if key not in names:
        raise ValidationError(f"unknown config key {cls.__name__}.{key}")
    default = getattr(cls(), key)
    if isinstance(default, bool):
        if isinstance(value, str):
            return value.lower() in ("1", "true", "yes")
        return bool(value)
    if isinstance(default, int) and not isinstance(value, bool):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value


def from_dict(data: dict, base: Optional[RunConfig] = None) -> RunConfig:
    cfg = base or RunConfig()
    for key, value in data.items():
        if key == "rng_seed":
            cfg.rng_seed = int(value)
        elif key in _SECTIONS:
            if not isinstance(value, dict):
                raise ValidationError(f"[{key}] must be a table")
            section = getattr(cfg, key)
            updates = {k: _coerce(_SECTIONS[key], k, v) for k, v in value.items()}
            setattr(cfg, key, replace(section, **updates))
        else:
            raise ValidationError(f"unknown config section {key!r}")
    return cfg


def load_config(path=None) -> RunConfig:
    """Defaults overlaid with a TOML file; input paths resolve against the file's directory."""
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    try:
        data = tomli.loads(path.read_text())
    except tomli.TOMLDecodeError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    cfg = from_dict(data)
    base = path.parent
    for name in ("prices", "news", "features", "forecasts"):
        p = getattr(cfg.inputs, name)
        if p and not Path(p).is_absolute():
            setattr(cfg.inputs, name, str(base / p))
    if not Path(cfg.output.dir).is_absolute() and "output" in data and "dir" in data["output"]:
        cfg.output.dir = str(base / cfg.output.dir)
    return cfg


def apply_overrides(cfg: RunConfig, assignments) -> RunConfig:
    """Apply ``section.key=value`` strings; values parse as TOML scalars when possible."""
    for item in assignments or ():
        if "=" not in item:
            raise ValidationError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        try:
            value = tomli.loads(f"v = {raw}")["v"]
        except tomli.TOMLDecodeError:
            value = raw
        if "." in key:
            section, name = key.split(".", 1)
            from_dict({section: {name: value}}, cfg)
        else:
            from_dict({key: value}, cfg)
    return cfg
