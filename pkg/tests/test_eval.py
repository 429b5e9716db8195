import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _helpers import pearson_loop, rank_average
from qmap.dataset import SplitSpec, split_references
from qmap.errors import DomainError, FitError, ShapeError, UndefinedCorrelationError
from qmap.eval import (
    StudySetup,
    evaluate,
    fit_logistic,
    logistic,
    logistic_holdout,
    patch_average_study,
    plcc,
    repeated_splits,
    srcc,
    train_eval_maps,
    write_reports,
    write_study,
)
from qmap.models import PoolNetSpec

finite = st.floats(-1e3, 1e3, allow_nan=False)


def planted(q, e1, e2, e3, e4):
    return [e2 + (e1 - e2) / (1.0 + math.exp(-(x - e3) / abs(e4))) for x in q]


def test_srcc_tie_case_matches_closed_form():
    assert srcc([1, 2, 2, 4], [1, 3, 2, 4]) == pytest.approx(3 / math.sqrt(10), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(data=st.lists(st.tuples(finite, finite), min_size=3, max_size=25))
def test_metrics_match_brute_force(data):
    a = [round(x, 1) for x, _ in data]
    b = [round(y, 1) for _, y in data]
    ra, rb = rank_average(a), rank_average(b)
    if len(set(a)) < 2 or len(set(b)) < 2:
        with pytest.raises(UndefinedCorrelationError):
            srcc(a, b)
        return
    assert srcc(a, b) == pytest.approx(pearson_loop(list(ra), list(rb)), abs=1e-12)
    assert plcc(a, b) == pytest.approx(pearson_loop(a, b), abs=1e-12)


def test_metric_invariances():
    rng = np.random.default_rng(0)
    p = rng.standard_normal(30)
    g = p + 0.5 * rng.standard_normal(30)
    assert srcc(np.exp(p), g) == pytest.approx(srcc(p, g), abs=1e-12)
    assert plcc(3 * p + 7, g) == pytest.approx(plcc(p, g), abs=1e-12)
    assert srcc(p, g) == pytest.approx(srcc(g, p), abs=1e-12)
    assert srcc(p, p) == 1.0 and plcc(p, -p) == pytest.approx(-1.0)


def test_metric_degenerate_inputs():
    with pytest.raises(UndefinedCorrelationError):
        srcc([1, 2], [1, 2])
    with pytest.raises(UndefinedCorrelationError):
        plcc([1, 1, 1], [1, 2, 3])
    with pytest.raises(ShapeError):
        plcc([1, 2, 3], [1, 2])


def test_logistic_function_limits():
    assert logistic(np.array([1e6]), 80, 10, 0, 5)[0] == pytest.approx(80)
    assert logistic(np.array([-1e6]), 80, 10, 0, 5)[0] == pytest.approx(10)
    assert logistic(np.array([3.0]), 80, 10, 3.0, -5)[0] == pytest.approx(45)


@pytest.mark.parametrize("eta", [(90, 5, 50, 8), (70, 20, 0.4, 0.1), (10, 95, 30, 12)])
def test_logistic_recovers_planted_curve(eta):
    lo, hi = eta[2] - 4 * abs(eta[3]), eta[2] + 4 * abs(eta[3])
    q = list(np.linspace(lo, hi, 40))
    y = planted(q, *eta)
    params, mapped = fit_logistic(q, y)
    rmse = math.sqrt(sum((m - t) ** 2 for m, t in zip(mapped, y)) / len(y))
    assert rmse < 1e-6
    assert np.allclose(params(np.asarray(q)), mapped)


def test_logistic_rejects_degenerate_data():
    with pytest.raises(DomainError):
        fit_logistic([1, 2, 3], [1, 2, 3])
    with pytest.raises(DomainError):
        fit_logistic(np.ones(10), np.arange(10.0))


def test_evaluate_report_and_per_type(tmp_path):
    rng = np.random.default_rng(1)
    g = rng.uniform(0, 100, 40)
    p = g + rng.normal(0, 10, 40)
    types = ["a"] * 20 + ["b"] * 18 + ["c"] * 2
    report = evaluate(p, g, types, logistic=True)
    assert report.n == 40
    assert report.srcc == pytest.approx(srcc(p, g))
    assert set(report.per_type) == {"a", "b"}
    assert report.plcc_mapped >= report.plcc - 1e-9
    path = tmp_path / "r.csv"
    write_reports([("all", report)], path)
    assert path.read_text().splitlines()[0].startswith("name,n,srcc")


def test_logistic_holdout_reports_on_the_remainder():
    q = np.linspace(0, 1, 50)
    g = np.asarray(planted(q, 90, 10, 0.5, 0.1))
    report = logistic_holdout(q, g, seed=3)
    assert report.n == 10
    assert report.plcc_mapped == pytest.approx(1.0, abs=1e-9)


def test_repeated_splits_take_the_median():
    summary = repeated_splits(lambda s: {"srcc": float(s), "plcc": float(-s)}, repetitions=5, seed=10)
    assert summary.seeds == (10, 11, 12, 13, 14)
    assert summary.median == {"srcc": 12.0, "plcc": -12.0}
    threaded = repeated_splits(lambda s: s * 0.5, repetitions=4, seed=0, workers=3)
    assert threaded.median == 0.75
    with pytest.raises(DomainError):
        repeated_splits(lambda s: s, repetitions=0)


@pytest.fixture(scope="module")
def study_data():
    rng = np.random.default_rng(7)
    maps, scores = [], []
    for _ in range(16):
        level = rng.uniform(0.3, 1.0)
        m = np.clip(level + rng.normal(0, 0.3 * (1 - level), (32, 32)), 0, 1)
        maps.append(m)
        scores.append(100 * (1 - 2 * m.std()))
    return maps, scores


def test_study_is_deterministic_and_writes_csv(study_data, tmp_path):
    maps, scores = study_data
    setup = StudySetup(spec=PoolNetSpec(input_size=32, conv_channels=(4, 4, 8, 8, 8), fc_units=16), epochs=2)
    a = patch_average_study(maps, scores, blocks=(1, 8), setup=setup, csv_path=tmp_path / "s.csv")
    b = patch_average_study(maps, scores, blocks=(1, 8), setup=setup)
    assert a == b
    assert [r.block for r in a] == [1, 8]
    assert a[0].n_train + a[0].n_test == 16
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "block,srcc,plcc,n_train,n_test" and len(lines) == 3


def test_study_block_one_equals_plain_training(study_data):
    maps, scores = study_data
    setup = StudySetup(spec=PoolNetSpec(input_size=32, conv_channels=(4, 4, 8, 8, 8), fc_units=16), epochs=1)
    (row,) = patch_average_study(maps, scores, blocks=(1,), setup=setup)
    # With every map its own group the split is the plain index split.
    train, _ = split_references([str(i) for i in range(16)], SplitSpec(0.8, 0))
    tr = [int(t) for t in sorted(train, key=int)]
    te = [i for i in range(16) if i not in tr]
    direct = train_eval_maps(maps, scores, tr, te, setup)
    assert (row.srcc, row.plcc) == (direct.srcc, direct.plcc)


def test_study_input_checks(tmp_path):
    with pytest.raises(DomainError):
        patch_average_study([], [])
    with pytest.raises(ShapeError):
        patch_average_study([np.zeros((8, 8)), np.zeros((8, 9))], [1, 2])
    write_study([], tmp_path / "empty.csv")
    assert (tmp_path / "empty.csv").read_text() == "block,srcc,plcc,n_train,n_test\n"


def test_logistic_iteration_cap_raises():
    q = np.linspace(0, 1, 30)
    with pytest.raises(FitError, match="RMSE"):
        fit_logistic(q, planted(q, 90, 10, 0.5, 0.1), max_iter=5)
