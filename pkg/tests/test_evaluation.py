import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from foliagepl import evaluation, synth
from foliagepl.evaluation import (EvalReport, compare_models, evaluate_overall,
                                  evaluate_regional, export_plot_data,
                                  read_regional, read_scatter, scatter_data)
from foliagepl.fitting import FitResult, fit_all
from foliagepl.models import (A1Params, A2Params, BParams, FSPLParams,
                              ITUParams, fspl)
from foliagepl.table import FeatureTable

ITU = ITUParams(34.5, 6.0)


def _table(pl, d=50.0, **cols):
    pl = np.asarray(pl, float)
    return FeatureTable.from_columns(pl, np.full(pl.size, d), **cols)


def test_overall_examples():
    d = np.array([20.0, 50.0, 80.0])
    exact = fspl(d, 28)
    assert evaluate_overall(FeatureTable.from_columns(exact, d),
                            FSPLParams()).overall_rmse_db == 0
    r = evaluate_overall(FeatureTable.from_columns(exact + 3, d), FSPLParams())
    assert r.overall_rmse_db == pytest.approx(3.0)
    assert r.mean_error_db == pytest.approx(-3.0)
    base = fspl(50.0, 28)
    r = evaluate_overall(_table([base - 3, base - 4]), FSPLParams())
    assert r.overall_rmse_db == pytest.approx(3.5355, abs=1e-4)
    with pytest.raises(ValueError):
        evaluate_overall(_table([]), FSPLParams())


def test_regional_examples():
    base = fspl(50.0, 28)
    t = _table([base + 1, base + 2], dw_m=[5.0, 15.0])
    w = evaluate_regional(t, FSPLParams(), 'd_w', 10).regional
    assert [(x.window_start, x.window_end, x.sample_count) for x in w] == [
        (0, 10, 1), (10, 20, 1)]
    assert w[0].rmse_db == pytest.approx(1)
    assert w[1].rmse_db == pytest.approx(2)

    t = _table([base + 1], dw_m=[10.0])
    w = evaluate_regional(t, FSPLParams(), 'd_w', 10).regional
    assert w[0].sample_count == 0 and w[0].rmse_db is None
    assert (w[1].window_start, w[1].sample_count) == (10, 1)

    t = _table([base + 1, base - 3, base], dw_m=[1.0, 2.0, 9.9])
    r = evaluate_regional(t, FSPLParams(), 'd_w', 10)
    assert len(r.regional) == 1
    assert r.regional[0].rmse_db == pytest.approx(r.overall_rmse_db)
    assert not r.regional[0].low_confidence
    with pytest.raises(ValueError):
        evaluate_regional(t, FSPLParams(), 'd_w', 0)


def test_sliding_windows():
    t = _table(np.full(4, fspl(50.0, 28)), dw_m=[0.0, 4.0, 6.0, 12.0])
    w = evaluate_regional(t, FSPLParams(), 'd_w', 10, step=5).regional
    assert [(x.window_start, x.sample_count) for x in w] == [
        (0, 3), (5, 2), (10, 1)]


def _random_table(rng, n):
    d = rng.uniform(5, 100, n)
    dw = np.maximum(d - 15, 0)
    return FeatureTable.from_columns(
        fspl(d, 28) + rng.normal(20, 8, n), d, dw_m=dw,
        df_m=rng.uniform(0, 0.6, n) * d)


def partition_error(table, params, axis, width):
    """Relative gap between overall and window-recombined squared error."""
    r = evaluate_regional(table, params, axis, width)
    total = sum(w.sample_count * w.rmse_db ** 2 for w in r.regional
                if w.sample_count)
    assert sum(w.sample_count for w in r.regional) == len(table)
    overall = r.overall_rmse_db ** 2 * len(table)
    return abs(total - overall) / overall


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 300),
       st.floats(0.5, 40.0))
def test_windows_partition_records(seed, n, width):
    t = _random_table(np.random.default_rng(seed), n)
    assert partition_error(t, ITU, 'd_w', width) <= 1e-9


def test_compare_identical_predictor_and_unknown_baseline():
    # A1 with a zero far slope predicts exactly what A2 does
    t = _random_table(np.random.default_rng(1), 200)
    fits = [FitResult(A2Params(2.09, 17.87), 0.0, 1, True),
            FitResult(A1Params(2.09, 0.0, 17.87), 0.0, 1, True)]
    comp = compare_models(t, fits, 'd_f', 10, 'A2')
    assert comp.models == ('A1',)
    for row in comp.rows:
        if row.sample_count:
            assert row.improvement_db['A1'] == 0
        else:
            assert row.improvement_db['A1'] is None
    with pytest.raises(ValueError, match='baseline'):
        compare_models(t, fits, 'd_w', 10, 'WMED')


def test_compare_generator_beats_baseline():
    scene = synth.make_scene(synth.SceneSpec(seed=5, n_records=300,
                                             noise_sigma_db=0.0))
    t = scene.table
    fits = fit_all(t, ['ITU', 'B'])
    comp = compare_models(t, fits, 'd_w', 10, 'ITU')
    populated = [r for r in comp.rows if r.sample_count]
    assert populated
    for row in populated:
        assert row.improvement_db['B'] >= 0
        assert row.improvement_db['B'] == pytest.approx(
            row.baseline_rmse_db - row.rmse_db['B'])


def test_compare_antisymmetric():
    t = _random_table(np.random.default_rng(2), 200)
    fits = [FitResult(ITU, 0.0, 1, True),
            FitResult(BParams(38.04, 4.47), 0.0, 1, True)]
    ab = compare_models(t, fits, 'd_f', 10, 'ITU')
    ba = compare_models(t, fits, 'd_f', 10, 'B')
    for r1, r2 in zip(ab.rows, ba.rows):
        if r1.sample_count:
            assert r1.improvement_db['B'] == pytest.approx(
                -r2.improvement_db['ITU'])


def test_export_regional():
    empty = EvalReport('ITU', 1.0, 0.0, 0, (), 'dw_m')
    assert export_plot_data(empty) == \
        'window_start,window_end,sample_count,rmse_db\n'
    t = _table([fspl(50.0, 28) + 2], dw_m=[3.0])
    r = evaluate_regional(t, FSPLParams(), 'd_w', 10)
    text = export_plot_data(r)
    assert text.splitlines() == [
        'window_start,window_end,sample_count,rmse_db',
        '0.0000,10.0000,1,2.0000']
    assert read_regional(io.StringIO(text)) == r.regional


def test_export_comparison_columns():
    t = _random_table(np.random.default_rng(3), 50)
    fits = [FitResult(ITU, 0.0, 1, True),
            FitResult(BParams(38.04, 4.47), 0.0, 1, True)]
    text = export_plot_data(compare_models(t, fits, 'd_w', 10, 'ITU'))
    header = text.splitlines()[0].split(',')
    assert header[:2] == ['window_center', 'baseline_rmse_db']
    assert 'B_improvement_db' in header
    with pytest.raises(TypeError):
        export_plot_data(42)


def test_scatter_round_trip_rmse(tmp_path):
    t = _random_table(np.random.default_rng(6), 250)
    s = scatter_data(t, ITU)
    assert s.axis == 'dw_m'
    path = tmp_path / 'scatter.csv'
    export_plot_data(s, path)
    back = read_scatter(path)
    r0 = evaluate_overall(t, ITU).overall_rmse_db
    r1 = math.sqrt(np.mean((back.predicted_db - back.measured_db) ** 2))
    # four decimals on both columns bound the error by 1e-4 per residual
    assert abs(r0 - r1) <= 1e-4
    assert_allclose(back.axis_value, s.axis_value, atol=5e-5)
    assert path.read_text() == evaluation.write_scatter(back)


def test_low_confidence_flag():
    t = _table(np.full(2, fspl(50.0, 28)), dw_m=[1.0, 2.0])
    (w,) = evaluate_regional(t, FSPLParams(), 'd_w', 10).regional
    assert w.low_confidence


def test_csv_stream_destination():
    buf = io.StringIO()
    t = _table([fspl(50.0, 28)], dw_m=[1.0])
    evaluation.write_overall([evaluate_overall(t, FSPLParams())], buf)
    assert buf.getvalue().startswith('model,overall_rmse_db')
