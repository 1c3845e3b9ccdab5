import csv
import hashlib
import json
import logging
import math
import shutil

import numpy as np
import pytest

from hlppl.cli import main
from hlppl.config import RunConfig, apply_overrides, load_config
from hlppl.errors import ValidationError
from hlppl.synth import business_days
from hlppl.ingestion import to_iso

from conftest import FIXTURES

SYNTH = FIXTURES / "synth"


@pytest.fixture
def fixture_dir(tmp_path):
    d = tmp_path / "fixture"
    shutil.copytree(SYNTH, d)
    return d


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_prices(path, close):
    days = business_days(len(close))
    path.write_text("date,close\n" + "".join(f"{to_iso(d)},{float(c)!r}\n" for d, c in zip(days, close)))
    return days


def write_scores(path, days, scores):
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = "".join(f"{to_iso(d)},0,0,0,{s!r}\n" for d, s in zip(days, scores))
    path.write_text("date,epsilon_norm,hype,sentiment,bubble_score\n" + rows)


def tree_digest(root):
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def test_missing_prices_file(tmp_path, capsys):
    missing = tmp_path / "nowhere.csv"
    assert main(["fit", "--prices", str(missing), "--out", str(tmp_path / "o")]) == 2
    assert str(missing) in capsys.readouterr().err


def test_short_window_exit_code(tmp_path, capsys):
    write_prices(tmp_path / "p.csv", list(np.linspace(10, 12, 99)))
    assert main(["fit", "--prices", str(tmp_path / "p.csv"), "--out", str(tmp_path / "o")]) == 3
    assert "100" in capsys.readouterr().err


def test_malformed_prices_exit_code(tmp_path, capsys):
    (tmp_path / "p.csv").write_text("date,close\n2020-01-01,1\n2020-01-02,x\n")
    assert main(["fit", "--prices", str(tmp_path / "p.csv"), "--out", str(tmp_path / "o")]) == 3
    assert "p.csv:3:" in capsys.readouterr().err


def test_fit_bundled_fixture(fixture_dir):
    out = fixture_dir / "out"
    assert main(["fit", "-c", str(fixture_dir / "config.toml")]) == 0
    fit = json.loads((out / "SYN" / "fit.json").read_text())["fit"]
    truth = json.loads((fixture_dir / "truth.json").read_text())
    assert abs(fit["t_c"] - truth["t_c"]) <= 15
    rows = read_csv(out / "SYN" / "residuals.csv")
    assert len(rows) == 300 and list(rows[0]) == ["date", "epsilon", "epsilon_norm"]
    assert max(abs(float(r["epsilon_norm"])) for r in rows) == 1.0


def test_score_requires_fit(fixture_dir, capsys):
    assert main(["score", "-c", str(fixture_dir / "config.toml")]) == 2
    assert "--fit-inline" in capsys.readouterr().err


def test_score_with_zero_weights_equals_residuals(fixture_dir):
    cfg = str(fixture_dir / "config.toml")
    assert main(["score", "-c", cfg, "--fit-inline", "--alpha1", "0", "--alpha2", "0"]) == 0
    rows = read_csv(fixture_dir / "out" / "SYN" / "scores.csv")
    assert all(r["bubble_score"] == r["epsilon_norm"] for r in rows)
    assert any(float(r["hype"]) > 0 for r in rows)
    for name in ("signals.csv", "episodes.csv", "plot_data.csv"):
        assert (fixture_dir / "out" / "SYN" / name).exists()


def test_score_without_news_warns(fixture_dir, caplog):
    cfg = str(fixture_dir / "config.toml")
    with caplog.at_level(logging.WARNING, logger="hlppl"):
        assert main(["score", "-c", cfg, "--fit-inline", "--set", 'inputs.news=""', "--set", 'inputs.features=""']) == 0
    assert "no news file" in caplog.text
    rows = read_csv(fixture_dir / "out" / "SYN" / "scores.csv")
    assert all(float(r["hype"]) == 0 and float(r["sentiment"]) == 0 for r in rows)
    assert all(r["bubble_score"] == r["epsilon_norm"] for r in rows)


def test_label_twelve_day_run(tmp_path):
    days = business_days(40)
    scores = [0.0] * 40
    scores[10:22] = [0.9] * 12
    write_scores(tmp_path / "o" / "X" / "scores.csv", days, scores)
    assert main(["label", "--symbol", "X", "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "X" / "episodes.csv")
    assert rows == [
        {"start": to_iso(days[10]), "end": to_iso(days[21]), "type": "normal", "duration": "12", "intensity": "0.9"}
    ]
    assert main(["label", "--symbol", "X", "--out", str(tmp_path / "o"), "--min-days", "13"]) == 0
    assert read_csv(tmp_path / "o" / "X" / "episodes.csv") == []


def test_backtest_worked_ledger(tmp_path):
    days = write_prices(tmp_path / "p.csv", [100.0, 110.0])
    write_scores(tmp_path / "o" / "X" / "scores.csv", days, [-0.8, -0.2])
    args = ["backtest", "--symbol", "X", "--prices", str(tmp_path / "p.csv"), "--out", str(tmp_path / "o")]
    assert main(args) == 0
    report = json.loads((tmp_path / "o" / "X" / "report.json").read_text())
    assert abs(report["final_equity"] - 1.04895) <= 1e-10
    assert report["trade_count"] == 1 and report["trades"][0]["exit_reason"] == "threshold"
    assert (tmp_path / "o" / "X" / "benchmark.json").exists()


def test_backtest_flat_prices(tmp_path):
    days = write_prices(tmp_path / "p.csv", [20.0] * 30)
    scores = [0.0] * 30
    scores[3], scores[8] = -0.9, 0.0
    write_scores(tmp_path / "o" / "X" / "scores.csv", days, scores)
    assert main(["backtest", "--symbol", "X", "--prices", str(tmp_path / "p.csv"), "--out", str(tmp_path / "o")]) == 0
    strat = json.loads((tmp_path / "o" / "X" / "report.json").read_text())
    bench = json.loads((tmp_path / "o" / "X" / "benchmark.json").read_text())
    assert strat["cumulative_return"] == pytest.approx(-0.001, abs=1e-12)  # 0.05% per leg on half the capital
    assert bench["cumulative_return"] == pytest.approx(-0.002, abs=1e-12)


def test_multi_horizon_outputs(fixture_dir):
    cfg = str(fixture_dir / "config.toml")
    assert main(["score", "-c", cfg, "--fit-inline"]) == 0
    assert main(["forecast", "-c", cfg]) == 0
    assert main(["backtest", "-c", cfg, "--multi-horizon"]) == 0
    sym = fixture_dir / "out" / "SYN"
    assert sorted(p.name for p in sym.glob("equity_h*.csv")) == [f"equity_h{h}.csv" for h in range(1, 6)]
    summary = json.loads((sym / "summary.json").read_text())
    assert summary["best_horizon"] in range(1, 6)
    assert main(["report", "-c", cfg]) == 0
    assert json.loads((fixture_dir / "out" / "aggregate.json").read_text())["strategy"]["symbols"] == 1


def test_backtest_misaligned_dates(tmp_path):
    write_prices(tmp_path / "p.csv", [1.0, 2.0, 3.0])
    write_scores(tmp_path / "o" / "X" / "scores.csv", business_days(10)[5:], [0.0] * 5)
    assert main(["backtest", "--symbol", "X", "--prices", str(tmp_path / "p.csv"), "--out", str(tmp_path / "o")]) == 3


def test_reruns_are_byte_identical(fixture_dir):
    cfg = str(fixture_dir / "config.toml")
    out = fixture_dir / "out"

    def pipeline():
        for cmd in (["fit"], ["score"], ["backtest"]):
            assert main(cmd + ["-c", cfg]) == 0
        return tree_digest(out)

    first = pipeline()
    assert pipeline() == first


def test_effective_config_round_trips(fixture_dir):
    cfg = str(fixture_dir / "config.toml")
    assert main(["fit", "-c", cfg, "--set", "score.tau=0.75", "--seed", "3", "--restarts", "4"]) == 0
    echoed = fixture_dir / "out" / "SYN" / "effective_config.toml"
    loaded = load_config(echoed)
    assert loaded.score.tau == 0.75 and loaded.rng_seed == 3 and loaded.fit.restarts == 4
    assert loaded.dumps() == echoed.read_text()


def test_config_precedence(tmp_path):
    (tmp_path / "c.toml").write_text('[score]\ntau = 0.9\nd_min = 12\n[inputs]\nprices = "p.csv"\n')
    cfg = load_config(tmp_path / "c.toml")
    assert cfg.score.tau == 0.9 and cfg.score.alpha1 == 0.2
    assert cfg.inputs.prices == str(tmp_path / "p.csv")
    apply_overrides(cfg, ["score.tau=0.7", "strategy.multi_horizon=true", "rng_seed=5"])
    assert cfg.score.tau == 0.7 and cfg.strategy.multi_horizon is True and cfg.rng_seed == 5


def test_config_rejects_unknown_keys():
    with pytest.raises(ValidationError):
        apply_overrides(RunConfig(), ["score.nope=1"])
    with pytest.raises(ValidationError):
        apply_overrides(RunConfig(), ["nosection.x=1"])


def test_invalid_config_value_exit_code(fixture_dir):
    assert main(["fit", "-c", str(fixture_dir / "config.toml"), "--set", "strategy.theta2=0.9"]) == 3


def test_synth_is_deterministic(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "a"), "--seed", "7"]) == 0
    assert tree_digest(tmp_path / "a") == tree_digest(SYNTH)


def test_rolling_fit(fixture_dir):
    cfg = str(fixture_dir / "config.toml")
    args = ["fit", "-c", cfg, "--window-mode", "rolling", "--restarts", "4", "--set", "fit.step=25"]
    assert main(args) == 0
    payload = json.loads((fixture_dir / "out" / "SYN" / "fit.json").read_text())
    assert payload["mode"] == "rolling" and len(payload["fits"]) == 3  # windows ending at 249, 274, 299
    rows = read_csv(fixture_dir / "out" / "SYN" / "residuals.csv")
    assert len(rows) == 300 and all(math.isfinite(float(r["epsilon"])) for r in rows)
