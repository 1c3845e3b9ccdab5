import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hlppl.errors import ContractError, ValidationError
from hlppl.score import (
    ScoreParams,
    ScoreSeries,
    compose_score,
    compose_scores,
    label_episodes,
    plot_records,
    write_episodes,
)
from hlppl.synth import business_days

from oracles import brute_force_episodes

GRID = np.linspace(-1, 1, 9)
HGRID = np.linspace(0, 1, 5)


def test_compose_examples():
    one = ScoreParams(1.0, 1.0)
    assert compose_score(0.5, 0.2, -0.1, one) == pytest.approx(0.6)
    assert compose_score(-0.5, 0.2, -0.1, one) == pytest.approx(-0.8)
    assert compose_score(0.3, 0.0, 0.0) == 0.3


def test_zero_residual_keeps_sentiment_only():
    assert compose_score(0.0, 1.0, 0.5, ScoreParams(0.7, 0.4)) == 0.4 * 0.5


@pytest.mark.parametrize("args", [(1.1, 0, 0), (0, -0.1, 0), (0, 1.1, 0), (0, 0, -1.5), (float("nan"), 0, 0)])
def test_compose_bounds(args):
    with pytest.raises(ContractError):
        compose_score(*args)


def test_params_non_negative():
    with pytest.raises(ValidationError):
        ScoreParams(-0.1, 0.2)


def test_vectorized_matches_scalar():
    combos = np.array(list(itertools.product(GRID, HGRID, GRID)))
    p = ScoreParams(0.3, 0.7)
    vec = compose_scores(combos[:, 0], combos[:, 1], combos[:, 2], p)
    assert vec.tolist() == [compose_score(e, h, s, p) for e, h, s in combos]


def test_hype_monotonicity():
    p = ScoreParams(0.2, 0.2)
    for e in (-0.6, 0.6):
        vals = [compose_score(e, h, 0.1, p) for h in HGRID]
        diffs = np.diff(vals)
        assert np.all(diffs >= 0) if e > 0 else np.all(diffs <= 0)


def test_score_series_recomputes():
    days = business_days(4)
    s = ScoreSeries.build(days, [0.1, -0.2, 0.0, 1.0], [0.5, 0.1, 0.3, 1.0], [0.2, -0.4, 0.6, 1.0])
    assert np.array_equal(s.score, s.recomputed())


def test_twelve_day_run():
    scores = np.zeros(30)
    scores[5:17] = 0.9
    (ep,) = label_episodes(scores, 0.8, 10)
    assert (ep.type, ep.duration, ep.intensity, ep.start_index, ep.end_index) == ("normal", 12, 0.9, 5, 16)


def test_five_day_run_is_dropped():
    scores = np.zeros(30)
    scores[5:10] = 0.9
    assert label_episodes(scores, 0.8, 10) == []


def test_sign_change_splits_runs():
    scores = np.array([-0.85] * 10 + [0.85] * 10)
    eps = label_episodes(scores, 0.8, 10)
    assert [(e.type, e.duration) for e in eps] == [("negative", 10), ("normal", 10)]


def test_threshold_is_strict():
    assert label_episodes(np.full(20, 0.8), 0.8, 10) == []


def test_episode_dates_follow_series():
    days = business_days(15)
    s = ScoreSeries.build(days, np.full(15, 0.9), np.zeros(15), np.zeros(15))
    (ep,) = label_episodes(s)
    assert ep.start == days[0] and ep.end == days[-1]


def test_label_parameter_validation():
    with pytest.raises(ValidationError):
        label_episodes([1.0], tau=0)
    with pytest.raises(ValidationError):
        label_episodes([1.0], d_min=0)


@settings(max_examples=150, deadline=None)
@given(
    st.lists(st.sampled_from([-1.2, -0.9, -0.81, -0.8, -0.3, 0.0, 0.5, 0.8, 0.81, 1.0, 1.5]), max_size=80),
    st.integers(1, 6),
)
def test_label_matches_oracle_and_invariants(values, d_min):
    eps = label_episodes(values, 0.8, d_min)
    got = [(e.start_index, e.end_index, e.type, e.intensity) for e in eps]
    assert got == brute_force_episodes(values, 0.8, d_min)
    for e in eps:
        assert e.duration >= d_min and e.intensity > 0.8 and e.start <= e.end
    padded = list(values) + [0.0, 0.5, -0.7]
    assert label_episodes(padded, 0.8, d_min) == eps


def test_episode_and_plot_exports(tmp_path):
    days = business_days(12)
    s = ScoreSeries.build(days, np.full(12, 0.9), np.zeros(12), np.zeros(12))
    eps = label_episodes(s)
    write_episodes(eps, tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text() == "start,end,type,duration,intensity\n2020-01-01,2020-01-16,normal,12,0.9\n"
    rows = plot_records(s, eps, close=np.ones(12))
    assert all(r["normal_episode"] == 1 and r["negative_episode"] == 0 for r in rows)
    s.to_csv(tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "date,epsilon_norm,hype,sentiment,bubble_score"
