"""Command-line pipeline: synth -> fit -> score -> label -> forecast -> backtest -> report.

Exit codes: 0 success, 2 I/O, 3 validation, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import backtest as bt
from .behavioral import daily_signals
from .config import RunConfig, apply_overrides, load_config
from .errors import (
    ContractError,
    DegenerateInputError,
    DomainError,
    FitFailureError,
    InsufficientDataError,
    ParseError,
    ValidationError,
)
from .forecast import ForecastSet, baseline_forecast_set
from .ingestion import (
    MIN_FIT_LENGTH,
    align_daily,
    load_features,
    load_news,
    load_prices,
    to_day,
    to_iso,
    write_features,
    write_news,
    write_prices,
)
from .lppl import LpplFit, fit_lppl
from .residuals import ResidualSeries, compute_residuals, normalize_residuals
from .score import ScoreSeries, label_episodes, plot_records, write_episodes, write_plot_data
from .synth import make_bundle

log = logging.getLogger("hlppl")

EXIT_OK, EXIT_IO, EXIT_VALIDATION, EXIT_NUMERIC = 0, 2, 3, 4
FMT = "{:.12g}"


# ----------------------------------------------------------------------- helpers


def _symbol_dir(cfg: RunConfig) -> Path:
    d = Path(cfg.output.dir) / cfg.inputs.symbol
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_json(path: Path, obj) -> None:
    path.write_text(bt.dumps_rounded(obj) + "\n")


def _echo_config(cfg: RunConfig, out: Path) -> None:
    (out / "effective_config.toml").write_text(cfg.dumps())


def _require(path, what):
    if not path:
        raise FileNotFoundError(f"no {what} file configured")
    return path


def _read_columns(path: Path, columns) -> tuple[np.ndarray, dict]:
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    days, cols = [], {c: [] for c in columns}
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in ("date",) + tuple(columns) if c not in (reader.fieldnames or [])]
        if missing:
            raise ParseError(f"missing column(s) {missing}", line=1, path=path)
        for row in reader:
            try:
                days.append(to_day(row["date"]))
                for c in columns:
                    cols[c].append(float(row[c]))
            except ValueError as exc:
                raise ParseError(str(exc), line=reader.line_num, path=path) from None
    return np.asarray(days, dtype=np.int64), {c: np.asarray(v) for c, v in cols.items()}


def _load_scores(path: Path, cfg: RunConfig) -> ScoreSeries:
    days, cols = _read_columns(path, ("epsilon_norm", "hype", "sentiment", "bubble_score"))
    return ScoreSeries(days, cols["epsilon_norm"], cols["hype"], cols["sentiment"], cols["bubble_score"], cfg.score_params())


# ---------------------------------------------------------------------- commands


def cmd_synth(cfg: RunConfig, args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    b = make_bundle(cfg.inputs.symbol, n=args.n, seed=cfg.rng_seed, alpha=args.alpha, noise_std=args.noise_std)
    write_prices(b.prices, out / "prices.csv")
    write_news(b.news, out / "news.csv")
    write_features(b.features, out / "features.csv")
    p = b.truth
    _write_json(
        out / "truth.json",
        {"A": p.A, "B": p.B, "C": p.C, "t_c": p.tc, "m": p.m, "omega": p.omega, "phi": p.phi,
         "alpha": b.alpha, "noise_std": b.noise_std, "n": args.n, "seed": cfg.rng_seed},
    )
    run = RunConfig(rng_seed=cfg.rng_seed)
    run.inputs.symbol = cfg.inputs.symbol
    run.inputs.prices = "prices.csv"
    run.inputs.news = "news.csv"
    run.inputs.features = "features.csv"
    run.output.dir = "out"
    (out / "config.toml").write_text(run.dumps())
    print(f"wrote synthetic fixture to {out}")
    return EXIT_OK


def _rolling_residuals(prices, cfg: RunConfig):
    """Refit every ``step`` days on a trailing window; each date keeps the residual
    from the earliest window that ends on or after it."""
    w, step = cfg.fit.window, cfg.fit.step
    n = len(prices)
    if n < w:
        raise InsufficientDataError(f"rolling window {w} exceeds series length {n}")
    eps = np.full(n, np.nan)
    fits = []
    ends = list(range(w - 1, n, step))
    if ends[-1] != n - 1:
        ends.append(n - 1)
    prev_end = -1
    for k, end in enumerate(ends):
        window = prices.window(end - w + 1, end + 1)
        fit = fit_lppl(window, replace(cfg.fit_config(), rng_seed=cfg.rng_seed + k))
        res = compute_residuals(window, fit).epsilon
        lo = 0 if k == 0 else prev_end + 1
        eps[lo : end + 1] = res[lo - (end - w + 1) :]
        prev_end = end
        fits.append(fit.to_dict())
    return ResidualSeries(prices.days.copy(), eps), fits


def cmd_fit(cfg: RunConfig, args) -> int:
    prices = load_prices(_require(cfg.inputs.prices, "prices"), cfg.inputs.symbol)
    out = _symbol_dir(cfg)
    if cfg.fit.window_mode == "full":
        if len(prices) < MIN_FIT_LENGTH:
            raise InsufficientDataError(
                f"LPPL fit needs at least {MIN_FIT_LENGTH} daily observations, got {len(prices)}"
            )
        fit = fit_lppl(prices, cfg.fit_config())
        residuals = compute_residuals(prices, fit)
        payload = {"mode": "full", "rng_seed": cfg.rng_seed, "fit": fit.to_dict()}
    else:
        residuals, fits = _rolling_residuals(prices, cfg)
        payload = {"mode": "rolling", "rng_seed": cfg.rng_seed, "window": cfg.fit.window,
                   "step": cfg.fit.step, "fits": fits}
    residuals = normalize_residuals(residuals, cfg.score.normalization)
    _write_json(out / "fit.json", payload)
    residuals.to_csv(out / "residuals.csv", FMT)
    _echo_config(cfg, out)
    if payload["mode"] == "full":
        f = payload["fit"]
        print(f"{cfg.inputs.symbol}: t_c={f['t_c']:.2f} m={f['m']:.3f} omega={f['omega']:.3f} rmse={f['rmse']:.5f}")
    else:
        print(f"{cfg.inputs.symbol}: {len(payload['fits'])} rolling fits")
    return EXIT_OK


def _score_series(cfg: RunConfig, prices, out: Path):
    res_path = out / "residuals.csv"
    if not res_path.exists():
        if not getattr(cfg, "_fit_inline", False):
            raise FileNotFoundError(f"no such file: {res_path} (run `fit` first or pass --fit-inline)")
        cmd_fit(cfg, None)
    days, cols = _read_columns(res_path, ("epsilon",))
    residuals = normalize_residuals(ResidualSeries(days, cols["epsilon"]), cfg.score.normalization)

    news = load_news(cfg.inputs.news) if cfg.inputs.news else []
    features = load_features(cfg.inputs.features) if cfg.inputs.features else []
    if not cfg.inputs.news:
        log.warning("no news file: sentiment contributes 0")
    if not cfg.inputs.features:
        log.warning("no features file: hype contributes 0")
    bundle = align_daily(prices, news, features)
    signals = daily_signals(bundle)
    idx = np.searchsorted(prices.days, residuals.days)
    if np.any(idx >= len(prices)) or not np.array_equal(prices.days[np.minimum(idx, len(prices) - 1)], residuals.days):
        raise ContractError("residual dates do not match the price calendar")
    hype = signals.hype[idx]
    sent = (signals.finbert_sentiment if cfg.score.sentiment == "finbert" else signals.sentiment)[idx]
    eps_norm = residuals.epsilon_norm
    keep = np.isfinite(eps_norm)
    scores = ScoreSeries.build(residuals.days[keep], eps_norm[keep], hype[keep], sent[keep], cfg.score_params())
    return scores, signals, prices.close[idx][keep]


def cmd_score(cfg: RunConfig, args) -> int:
    prices = load_prices(_require(cfg.inputs.prices, "prices"), cfg.inputs.symbol)
    out = _symbol_dir(cfg)
    scores, signals, close = _score_series(cfg, prices, out)
    episodes = label_episodes(scores, cfg.score.tau, cfg.score.d_min)
    scores.to_csv(out / "scores.csv", FMT)
    signals.to_csv(out / "signals.csv", FMT)
    write_episodes(episodes, out / "episodes.csv", FMT)
    write_plot_data(plot_records(scores, episodes, close), out / "plot_data.csv", FMT)
    _echo_config(cfg, out)
    print(f"{cfg.inputs.symbol}: {len(scores)} scores, {len(episodes)} episode(s)")
    return EXIT_OK


def cmd_label(cfg: RunConfig, args) -> int:
    out = _symbol_dir(cfg)
    scores = _load_scores(out / "scores.csv", cfg)
    episodes = label_episodes(scores, cfg.score.tau, cfg.score.d_min)
    write_episodes(episodes, out / "episodes.csv", FMT)
    _echo_config(cfg, out)
    for ep in episodes:
        print(f"{to_iso(ep.start)} .. {to_iso(ep.end)}  {ep.type:8s} {ep.duration:4d}d  {ep.intensity:.3f}")
    return EXIT_OK


def cmd_forecast(cfg: RunConfig, args) -> int:
    out = _symbol_dir(cfg)
    scores = _load_scores(out / "scores.csv", cfg)
    fs = baseline_forecast_set(scores, alpha=args.alpha, strict_range=args.strict_range)
    fs.to_csv(out / "forecasts.csv", FMT)
    print(f"{cfg.inputs.symbol}: baseline forecasts for {len(fs.days)} dates")
    return EXIT_OK


def cmd_backtest(cfg: RunConfig, args) -> int:
    prices = load_prices(_require(cfg.inputs.prices, "prices"), cfg.inputs.symbol)
    out = _symbol_dir(cfg)
    strat = cfg.strategy_config()
    bench = bt.buy_and_hold_benchmark(prices, strat)
    if cfg.strategy.multi_horizon:
        path = Path(cfg.inputs.forecasts) if cfg.inputs.forecasts else out / "forecasts.csv"
        forecasts = ForecastSet.from_csv(path)
        result = bt.multi_horizon_backtest(prices, forecasts, strat)
        for h, rep in result.reports.items():
            bt.report_json(rep, out / f"report_h{h}.json")
            rep.write_equity(out / f"equity_h{h}.csv", FMT)
        summary = result.summary()
        summary["buy_and_hold"] = bench.to_dict()
        summary["buy_and_hold"].pop("trades")
        _write_json(out / "summary.json", summary)
        line = f"best horizon h={result.best_horizon}"
        main = result.reports[result.best_horizon]
    else:
        scores = _load_scores(out / "scores.csv", cfg)
        if strat.horizon:
            path = Path(cfg.inputs.forecasts) if cfg.inputs.forecasts else out / "forecasts.csv"
            fs = ForecastSet.from_csv(path)
            main = bt.run_backtest(prices, (fs.days, fs.predictions[strat.horizon]), strat)
        else:
            main = bt.run_backtest(prices, scores, strat)
        bt.report_json(main, out / "report.json")
        main.write_equity(out / "equity.csv", FMT)
        line = "strategy"
    bt.report_json(bench, out / "benchmark.json")
    bench.write_equity(out / "benchmark_equity.csv", FMT)
    _echo_config(cfg, out)
    ar = main.metrics.annualized_return
    print(f"{cfg.inputs.symbol} {line}: annualized {ar if ar is None else f'{ar:.4%}'}, "
          f"trades {main.metrics.trade_count}, buy-and-hold {bench.metrics.cumulative_return:.4%} cumulative")
    return EXIT_OK


def cmd_report(cfg: RunConfig, args) -> int:
    root = Path(cfg.output.dir)
    if not root.exists():
        raise FileNotFoundError(f"no such directory: {root}")
    strategy, bench = [], []
    for sym_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        rep = sym_dir / "report.json"
        if not rep.exists() and (sym_dir / "summary.json").exists():
            summary = json.loads((sym_dir / "summary.json").read_text())
            rep = sym_dir / f"report_h{summary['best_horizon']}.json"
        if rep.exists():
            strategy.append(json.loads(rep.read_text()))
        if (sym_dir / "benchmark.json").exists():
            bench.append(json.loads((sym_dir / "benchmark.json").read_text()))
    if not strategy:
        raise FileNotFoundError(f"no backtest reports under {root}")
    agg = {"strategy": bt.aggregate_reports(strategy), "buy_and_hold": bt.aggregate_reports(bench)}
    _write_json(root / "aggregate.json", agg)
    for name, row in agg.items():
        fmt = lambda v: "n/a" if v is None else f"{v:.4f}"
        print(f"{name:13s} symbols={row['symbols']} ann={fmt(row['annualized_return'])} "
              f"sharpe={fmt(row['sharpe_ratio'])} mdd={fmt(row['max_drawdown'])} win={fmt(row['win_rate'])}")
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "fit": cmd_fit,
    "score": cmd_score,
    "label": cmd_label,
    "forecast": cmd_forecast,
    "backtest": cmd_backtest,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hlppl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("-c", "--config", help="TOML run configuration")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a config value (repeatable)")
        p.add_argument("--symbol")
        p.add_argument("--prices")
        p.add_argument("--news")
        p.add_argument("--features")
        p.add_argument("--forecasts")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        return p

    common(sub.add_parser("synth", help="write a synthetic LPPL + AR(1) fixture"))
    sub.choices["synth"].add_argument("--n", type=int, default=300)
    sub.choices["synth"].add_argument("--alpha", type=float, default=0.2)
    sub.choices["synth"].add_argument("--noise-std", type=float, default=0.01)

    p = common(sub.add_parser("fit", help="fit LPPL and write residuals"))
    p.add_argument("--restarts", type=int)
    p.add_argument("--window-mode", choices=("full", "rolling"))

    p = common(sub.add_parser("score", help="compose Bubble Scores and label episodes"))
    p.add_argument("--fit-inline", action="store_true", help="fit first if no residuals exist")
    for name in ("alpha1", "alpha2", "tau"):
        p.add_argument(f"--{name}", type=float)
    p.add_argument("--d-min", type=int)

    p = common(sub.add_parser("label", help="relabel episodes from scores.csv"))
    p.add_argument("--tau", type=float)
    p.add_argument("--d-min", "--min-days", dest="d_min", type=int)

    p = common(sub.add_parser("forecast", help="baseline multi-horizon forecasts"))
    p.add_argument("--alpha", type=float, help="fixed decay rate (default: AR(1) estimate)")
    p.add_argument("--strict-range", action="store_true", help="clip forecasts to [-1, 1]")

    p = common(sub.add_parser("backtest", help="threshold strategy vs buy-and-hold"))
    p.add_argument("--multi-horizon", action="store_true")
    p.add_argument("--horizon", type=int)

    common(sub.add_parser("report", help="aggregate per-symbol reports"))
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    apply_overrides(cfg, args.set)
    flags = {
        ("inputs", "symbol"): args.symbol,
        ("inputs", "prices"): args.prices,
        ("inputs", "news"): args.news,
        ("inputs", "features"): args.features,
        ("inputs", "forecasts"): args.forecasts,
        ("output", "dir"): args.out if args.command != "synth" else None,
        ("fit", "restarts"): getattr(args, "restarts", None),
        ("fit", "window_mode"): getattr(args, "window_mode", None),
        ("score", "alpha1"): getattr(args, "alpha1", None),
        ("score", "alpha2"): getattr(args, "alpha2", None),
        ("score", "tau"): getattr(args, "tau", None),
        ("score", "d_min"): getattr(args, "d_min", None),
        ("strategy", "horizon"): getattr(args, "horizon", None),
    }
    for (section, key), value in flags.items():
        if value is not None:
            setattr(getattr(cfg, section), key, value)
    if getattr(args, "multi_horizon", False):
        cfg.strategy.multi_horizon = True
    if args.seed is not None:
        cfg.rng_seed = args.seed
    if args.command == "synth":
        if args.out is None:
            raise ValidationError("synth needs --out")
        if args.symbol is None and args.config is None:
            cfg.inputs.symbol = "SYN"
    for name in ("prices", "news", "features", "forecasts"):
        p = getattr(cfg.inputs, name)
        if p:
            setattr(cfg.inputs, name, str(Path(p).resolve()))
    cfg.output.dir = str(Path(cfg.output.dir).resolve())
    cfg._fit_inline = getattr(args, "fit_inline", False)
    return cfg.validate()


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ParseError, ValidationError, InsufficientDataError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (DegenerateInputError, FitFailureError, DomainError, ArithmeticError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
