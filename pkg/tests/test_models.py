import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from foliagepl import models
from foliagepl.geometry import SiteFeatures
from foliagepl.models import (A1Params, A2Params, AFParams, BParams, CParams,
                              FSPLParams, ITUParams, WMEDParams, epl_a1,
                              epl_a2, epl_af, epl_b, epl_c, epl_itu,
                              epl_wmed, fspl, params_from_dict,
                              params_to_dict, predict)

C_LIGHT = 299792458.0
ITU = ITUParams(34.5, 6.0)
B = BParams(38.04, 4.47)
A1 = A1Params(2.39, 0.12, 14.0)
A2 = A2Params(2.09, 17.87)
CP = CParams(19.14, 2.09, 0.06, 18.02)


def test_fspl():
    assert_allclose(fspl(1, 28), 61.39, atol=0.01)
    assert_allclose(fspl(100, 28), 101.39, atol=0.01)
    assert fspl(1000, 28) - fspl(100, 28) == pytest.approx(20.0, abs=1e-12)
    ref = 20 * math.log10(4 * math.pi * 37.5 * 28e9 / C_LIGHT)
    assert fspl(37.5, 28) == pytest.approx(ref, rel=1e-14)
    with pytest.raises(ValueError):
        fspl(0, 28)
    with pytest.raises(ValueError):
        fspl(10, 0)


def test_af():
    p = AFParams(6.47)
    assert epl_af(0, p) == 0
    assert epl_af(1, p) == pytest.approx(6.47)
    assert_allclose(epl_af(3, p), 19.41, atol=1e-9)


def test_itu():
    assert epl_itu(0, ITU) == 0
    assert_allclose(epl_itu(30, ITU), 34.31, atol=0.01)
    assert_allclose(epl_itu(5, ITU), 20.04, atol=0.01)


def test_wmed():
    assert_allclose(epl_wmed(10, 28), 11.59, atol=0.01)
    assert_allclose(epl_wmed(100, 28), 51.38, atol=0.01)
    assert epl_wmed(0, 28) == 0
    b1 = 0.45 * 28 ** 0.284 * 14
    b2 = 1.33 * 28 ** 0.284 * 14 ** 0.588
    assert abs(b1 - b2) <= 0.1
    assert epl_wmed(14, 28) == pytest.approx(b1)


def test_wmed_beyond_400(caplog):
    with pytest.raises(ValueError, match='extrapolate'):
        epl_wmed(401, 28)
    v = epl_wmed(401, 28, mode='extrapolate')
    assert v == pytest.approx(1.33 * 28 ** 0.284 * 401 ** 0.588)
    assert 'extrapolated' in caplog.text
    assert epl_wmed(400, 28) == pytest.approx(1.33 * 28 ** 0.284 * 400 **
                                              0.588)


def test_a1_a2():
    assert epl_a1(0, A1) == 0
    assert_allclose(epl_a1(20, A1), 34.18, atol=0.01)
    assert epl_a1(14, A1) == pytest.approx(33.46)
    assert epl_a1(14 + 1e-9, A1) == pytest.approx(33.46)
    assert epl_a2(0, A2) == 0
    assert_allclose(epl_a2(30, A2), 37.35, atol=0.01)
    assert_allclose(epl_a2(10, A2), 20.9, atol=1e-9)


def test_b():
    assert epl_b(0, B) == 0
    assert_allclose(epl_b(10, B), 26.29, atol=0.01)
    assert epl_b(1e4, B) == pytest.approx(38.04)


def test_c_modes():
    assert epl_c(0, CP) == 0
    assert epl_c(0, CP, 'paper_literal') == 0
    assert_allclose(epl_c(10, CP), 40.04, atol=0.01)
    assert_allclose(epl_c(30, CP), 57.52, atol=0.01)
    lit = epl_c(30, CP, 'paper_literal')
    assert lit == pytest.approx(18.02 * 2.09 + 11.98 * 0.06)
    # jump of L0 at the origin, in both modes
    assert epl_c(1e-9, CP) == pytest.approx(19.14)
    assert epl_c(1e-9, CP, 'paper_literal') == pytest.approx(19.14)
    # downward step of exactly L0 at A_f in the literal reading
    below = epl_c(18.02, CP, 'paper_literal')
    above = epl_c(18.02 + 1e-12, CP, 'paper_literal')
    assert below - above == pytest.approx(19.14, abs=1e-9)
    assert epl_c(18.02, CP) == pytest.approx(epl_c(18.02 + 1e-12, CP))


def test_params_validation():
    with pytest.raises(ValueError):
        ITUParams(0.0, 6.0)
    with pytest.raises(ValueError):
        ITUParams(34.5, 0.0)
    with pytest.raises(ValueError):
        A1Params(1, 1, 0)
    with pytest.raises(ValueError):
        AFParams(-1)
    with pytest.raises(ValueError):
        CParams(1, 1, 1, float('inf'))


@pytest.mark.parametrize('p', [FSPLParams(), AFParams(6.47), ITU,
                               WMEDParams(), A1, A2, B, CP])
def test_params_document_round_trip(p):
    doc = json.loads(json.dumps(params_to_dict(p)))
    assert params_from_dict(doc) == p


def test_params_document_format():
    assert params_to_dict(ITU) == {
        'model': 'ITU', 'max_attenuation_db': 34.5,
        'specific_attenuation_db_per_m': 6.0}
    assert params_from_dict({'model': 'A-II', 'l1_db_per_m': 2,
                             'breakpoint_m': 3}) == A2Params(2, 3)
    with pytest.raises(ValueError, match='unknown'):
        params_from_dict({'model': 'AF', 'loss_per_tree_db': 1, 'x': 2})
    with pytest.raises(ValueError, match='missing'):
        params_from_dict({'model': 'ITU', 'max_attenuation_db': 1})
    with pytest.raises(ValueError, match='unknown model'):
        params_from_dict({'model': 'Okumura'})


FEAT = SiteFeatures(100.0, 85.0, 20.0, 10.0, 0)


def test_predict():
    p = predict(FEAT, FSPLParams(), 28)
    assert p.excess_db == 0
    assert_allclose(p.total_db, 101.39, atol=0.01)
    p = predict(FEAT, ITU, 28)
    assert_allclose(p.total_db, 135.89, atol=0.01)
    ref = fspl(100, 28) + 34.5 * (1 - math.exp(-85 * 6 / 34.5))
    assert p.total_db == pytest.approx(ref, rel=1e-14)
    assert predict(FEAT, AFParams(6.47), 28).total_db == fspl(100, 28)


@pytest.mark.parametrize('p', [FSPLParams(), AFParams(6.47), ITU,
                               WMEDParams(), A1, A2, B, CP])
def test_predict_total_is_sum(p):
    for f in (FEAT, SiteFeatures(37.0, 22.0, 5.5, 30.0, 3)):
        pr = predict(f, p, 28)
        assert pr.total_db == pr.fspl_db + pr.excess_db
        assert pr.excess_db >= 0


DEPTH = st.floats(0, 400, allow_nan=False)


@settings(max_examples=200)
@given(DEPTH, DEPTH)
def test_monotone(x, y):
    lo, hi = min(x, y), max(x, y)
    for f in (lambda v: epl_itu(v, ITU), lambda v: epl_b(v, B),
              lambda v: epl_a1(v, A1), lambda v: epl_a2(v, A2),
              lambda v: epl_wmed(v, 28), lambda v: epl_c(v, CP),
              lambda v: epl_af(v, AFParams(6.47))):
        assert f(lo) <= f(hi) + 1e-9


@settings(max_examples=200)
@given(st.floats(0, 1e3), st.floats(1e-3, 1e3))
def test_itu_bounded(x, dx):
    for p in (ITU, B):
        a, b = epl_itu(x, p), epl_itu(x + dx, p)
        assert 0 <= a <= p.max_attenuation_db
        assert a <= b


def test_itu_concave():
    x = np.linspace(0, 60, 601)
    y = models.itu_law(x, 34.5, 6.0)
    assert np.all(np.diff(y, 2) <= 1e-12)
    assert np.all(np.diff(y) > 0)


@settings(max_examples=100)
@given(DEPTH, st.floats(0, 10), st.floats(0.1, 100))
def test_a1_with_zero_l2_equals_a2(x, l1, bp):
    assert epl_a1(x, A1Params(l1, 0.0, bp)) == pytest.approx(
        epl_a2(x, A2Params(l1, bp)), abs=1e-9)


def test_zero_blockage_gives_zero():
    for f in (epl_itu(0, ITU), epl_b(0, B), epl_a1(0, A1), epl_a2(0, A2),
              epl_wmed(0, 28), epl_c(0, CP), epl_af(0, AFParams(6.47))):
        assert f == 0


def test_vectorised():
    x = np.array([0.0, 10.0, 20.0])
    assert_allclose(epl_a1(x, A1), [0, 23.9, 34.18], atol=1e-9)
