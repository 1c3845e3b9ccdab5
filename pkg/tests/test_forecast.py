import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hlppl.backtest import HORIZONS, multi_horizon_backtest
from hlppl.errors import ContractError, InsufficientDataError, ValidationError
from hlppl.forecast import (
    ForecastSet,
    LossWeights,
    baseline_forecast,
    baseline_forecast_set,
    combined_loss,
    eval_metrics,
    loss_gradient,
)
from hlppl.ingestion import PriceSeries
from hlppl.synth import business_days

from oracles import central_difference, huber, max_relative_error


def test_baseline_examples():
    s = np.array([0.8, 0.8, 0.8])
    for h in HORIZONS:
        assert baseline_forecast(s, h, alpha=0.0)[0] == 0.8
        assert baseline_forecast(s, h, alpha=1.0)[0] == 0.0
    assert baseline_forecast(s, 2, alpha=0.5)[0] == pytest.approx(0.2)


def test_baseline_clamps_alpha_and_range():
    s = np.array([0.9, -1.8, 1.5])
    assert np.array_equal(baseline_forecast(s, 1, alpha=-3.0), s)
    assert np.array_equal(baseline_forecast(s, 3, alpha=0.0, strict_range=True), [0.9, -1.0, 1.0])


def test_baseline_errors():
    with pytest.raises(ValidationError):
        baseline_forecast([0.1, 0.2], 6)
    with pytest.raises(InsufficientDataError):
        baseline_forecast([0.1], 1)


def test_baseline_set_uses_fitted_alpha():
    rng = np.random.default_rng(0)
    s = np.zeros(300)
    for i in range(299):
        s[i + 1] = 0.7 * s[i] + rng.normal(0, 0.1)
    fs = baseline_forecast_set(s)
    ratio = fs.predictions[1][1:] / np.where(s[1:] == 0, np.nan, s[1:])
    assert np.nanstd(ratio) < 1e-12
    assert 0.6 < np.nanmean(ratio) < 0.8


def test_zero_alpha_makes_horizons_equivalent():
    rng = np.random.default_rng(4)
    n = 120
    close = 100 * np.exp(np.cumsum(rng.normal(0, 0.02, n)))
    prices = PriceSeries("X", business_days(n), close)
    s = np.clip(np.cumsum(rng.normal(0, 0.3, n)) * 0.3, -1.5, 1.5)
    fs = baseline_forecast_set(type("S", (), {"score": s, "days": prices.days})(), alpha=0.0)
    res = multi_horizon_backtest(prices, fs)
    assert all(np.array_equal(res.reports[h].equity, res.reports[1].equity) for h in HORIZONS)
    assert res.best_horizon == 1


def test_forecast_csv_round_trip(tmp_path):
    days = business_days(4)
    preds = {h: np.linspace(-1, 1, 4) / h for h in HORIZONS}
    fs = ForecastSet(days, preds)
    fs.to_csv(tmp_path / "f.csv")
    back = ForecastSet.from_csv(tmp_path / "f.csv")
    assert np.array_equal(back.days, days)
    for h in HORIZONS:
        assert np.allclose(back.predictions[h], preds[h], rtol=1e-11)


def test_forecast_bounds():
    with pytest.raises(ValidationError):
        ForecastSet(business_days(2), {h: np.array([0.0, 2.5]) for h in HORIZONS})


def test_metrics_examples():
    a = np.array([1.0, 2.0, 4.0])
    m = eval_metrics(a, a)
    assert m["correlation"] == pytest.approx(1.0, abs=1e-15)
    assert (m["mse"], m["mae"], m["rmse"]) == (0.0, 0.0, 0.0)
    assert eval_metrics(-a, a)["correlation"] == pytest.approx(-1.0, abs=1e-15)
    m = eval_metrics([0.0, 0.0], [1.0, 3.0])
    assert m["mse"] == pytest.approx(5.0)
    assert m["mae"] == 2.0
    assert m["rmse"] == pytest.approx(np.sqrt(5.0))


def test_metrics_constant_actual():
    assert eval_metrics([1.0, 2.0], [3.0, 3.0])["correlation"] is None


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=2, max_size=50))
def test_rmse_squared_is_mse(pairs):
    p, a = np.array(pairs).T
    m = eval_metrics(p, a)
    assert m["rmse"] * m["rmse"] == m["mse"]


def test_loss_zero_for_perfect_linear_prediction():
    # 0.1 steps are not exact in binary, so the second difference is ~1e-17
    x = [0.0, 0.1, 0.2, 0.3]
    res = combined_loss(x, x)
    assert res.total == pytest.approx(0.0, abs=1e-15)
    assert all(v == pytest.approx(0.0, abs=1e-15) for v in res.terms.values())
    assert res.degenerate == set()
    exact = [0.0, 0.25, 0.5, 0.75]
    assert combined_loss(exact, exact).total == 0.0


def test_loss_huber_linear_regime():
    a = np.array([0.1, 0.5, -0.2, 0.3])
    res = combined_loss(a + 10, a, LossWeights.of(1, 0, 0, 0, 0))
    assert res.total == pytest.approx(9.5)


def test_loss_smoothness_example():
    res = combined_loss([0, 1, 0, 1], [5, 2, 7, 1], LossWeights.of(0, 0, 0, 0, 1))
    assert res.total == 4.0


def test_loss_terms_against_direct_formulas():
    rng = np.random.default_rng(6)
    p, a = rng.normal(size=(2, 25))
    t = combined_loss(p, a, LossWeights(huber_delta=0.7)).terms
    assert t["huber"] == pytest.approx(np.mean([huber(r, 0.7) for r in p - a]))
    assert t["corr"] == pytest.approx(1 - np.corrcoef(p, a)[0, 1])
    assert t["r2"] == pytest.approx(np.sum((p - a) ** 2) / np.sum((a - a.mean()) ** 2))
    assert t["consistency"] == pytest.approx(np.mean((np.diff(p) - np.diff(a)) ** 2))
    assert t["smooth"] == pytest.approx(np.mean(np.diff(p, 2) ** 2))


def test_loss_degenerate_terms():
    res = combined_loss([1.0, 1.0, 1.0], [0.0, 1.0, 2.0])
    assert res.degenerate == {"corr"} and res.terms["corr"] == 0.0
    res = combined_loss([0.0, 1.0, 2.0], [1.0, 1.0, 1.0])
    assert res.degenerate == {"corr", "r2"}
    g = loss_gradient([0.0, 1.0, 2.0], [1.0, 1.0, 1.0], LossWeights.of(0, 1, 1, 0, 0))
    assert np.all(g == 0.0)


def test_loss_input_contract():
    with pytest.raises(ContractError):
        combined_loss([1.0, 2.0], [1.0, 2.0])
    with pytest.raises(ContractError):
        combined_loss([1.0, 2.0, 3.0], [1.0, 2.0])


def test_weights_validation():
    with pytest.raises(ValidationError):
        LossWeights.of(0, 0, 0, 0, 0)
    with pytest.raises(ValidationError):
        LossWeights.of(1, -1, 0, 0, 0)
    with pytest.raises(ValidationError):
        LossWeights(huber_delta=0.0)


def test_gradient_at_minimum():
    a = np.array([0.3, -0.1, 0.4, 0.2])
    g = loss_gradient(a, a, LossWeights.of(1, 0, 0, 1, 0))
    assert np.all(g == 0.0)


def test_gradient_huber_linear_component():
    a = np.zeros(5)
    p = a.copy()
    p[2] = 3.0
    g = loss_gradient(p, a, LossWeights.of(2.0, 0, 0, 0, 0, delta=1.0))
    assert g[2] == pytest.approx(2.0 * 1.0 / 5)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(14)
    w = LossWeights.of(1, 1, 1, 1, 1)
    for _ in range(20):
        p, a = rng.normal(size=(2, 20))
        g = loss_gradient(p, a, w)
        fd = central_difference(lambda x: combined_loss(x, a, w).total, p)
        assert max_relative_error(g, fd) < 1e-4


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(3, 30))
def test_loss_non_negative_and_reindex_invariant(seed, n):
    rng = np.random.default_rng(seed)
    p, a = rng.normal(size=(2, n))
    lam = rng.uniform(0, 2, 5)
    w = LossWeights.of(*lam)
    res = combined_loss(p, a, w)
    assert res.total >= 0
    flipped = combined_loss(p[::-1], a[::-1], w).terms
    for k, v in res.terms.items():
        assert flipped[k] == pytest.approx(v, rel=1e-9, abs=1e-12)
