import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stcast.errors import MetricsError
from stcast.fields import GridSpec
from stcast.metrics import acc_weighted, haversine, mde, rmse_weighted

QUARTER_KM = 10007.543398010286   # 6371 * pi / 2
ANTIPODAL_KM = 20015.086796020572  # 6371 * pi


# ---------------------------------------------------------------------------
# brute-force references
# ---------------------------------------------------------------------------

def loop_weights(lats):
    total = sum(math.cos(math.radians(p)) for p in lats)
    return [len(lats) * math.cos(math.radians(p)) / total for p in lats]


def loop_rmse(pred, truth, lats):
    L = loop_weights(lats)
    acc = 0.0
    for i in range(pred.shape[0]):
        for j in range(pred.shape[1]):
            acc += L[i] * (pred[i, j] - truth[i, j]) ** 2
    return math.sqrt(acc / (pred.shape[0] * pred.shape[1]))


def loop_acc_centered(pred, truth, lats):
    L = loop_weights(lats)
    n = pred.shape[0] * pred.shape[1]
    clim = sum(L[i] * truth[i, j]
               for i in range(pred.shape[0])
               for j in range(pred.shape[1])) / n
    num = den_p = den_t = 0.0
    for i in range(pred.shape[0]):
        for j in range(pred.shape[1]):
            pa = pred[i, j] - clim
            ta = truth[i, j] - clim
            num += L[i] * pa * ta
            den_p += L[i] * pa * pa
            den_t += L[i] * ta * ta
    return num / math.sqrt(den_p * den_t)


def loop_acc_literal(pred, truth, lats):
    L = loop_weights(lats)
    num = den_p = den_t = 0.0
    for i in range(pred.shape[0]):
        for j in range(pred.shape[1]):
            num += L[i] * pred[i, j] * truth[i, j]
            den_p += L[i] * pred[i, j] ** 2
            den_t += L[i] * truth[i, j] ** 2
    return math.sqrt(num / (den_p * den_t))


def loop_haversine(p1, p2):
    lat1, lon1 = map(math.radians, p1)
    lat2, lon2 = map(math.radians, p2)
    a = (math.sin((lat2 - lat1) / 2) ** 2
         + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2)
    return 2 * 6371.0 * math.asin(math.sqrt(a))


# ---------------------------------------------------------------------------
# RMSE
# ---------------------------------------------------------------------------

def test_rmse_perfect_forecast():
    grid = GridSpec.equiangular(6, 8)
    x = np.random.default_rng(0).normal(size=(6, 8))
    assert rmse_weighted(x, x, grid) == 0.0


def test_rmse_single_cell_equator():
    grid = GridSpec(lats=np.array([0.0]), lons=np.array([0.0]))
    assert rmse_weighted(np.array([[3.0]]), np.array([[1.0]]), grid) == pytest.approx(2.0, abs=1e-14)


def test_rmse_matches_loop_oracle():
    rng = np.random.default_rng(17)
    grid = GridSpec.equiangular(4, 8)
    for _ in range(20):
        p = rng.normal(size=(4, 8))
        t = rng.normal(size=(4, 8))
        npt.assert_allclose(rmse_weighted(p, t, grid),
                            loop_rmse(p, t, grid.lats), rtol=1e-12)


def test_rmse_longitude_rotation_invariant():
    rng = np.random.default_rng(2)
    grid = GridSpec.equiangular(8, 16)
    p = rng.normal(size=(8, 16))
    t = rng.normal(size=(8, 16))
    base = rmse_weighted(p, t, grid)
    for k in (1, 5, 11):
        npt.assert_allclose(
            rmse_weighted(np.roll(p, k, axis=1), np.roll(t, k, axis=1), grid),
            base, rtol=1e-12)


def test_rmse_shape_mismatch():
    grid = GridSpec.equiangular(4, 4)
    with pytest.raises(MetricsError):
        rmse_weighted(np.zeros((4, 4)), np.zeros((4, 5)), grid)


# ---------------------------------------------------------------------------
# ACC
# ---------------------------------------------------------------------------

def test_acc_perfect_forecast_is_one():
    grid = GridSpec.equiangular(5, 10)
    x = np.random.default_rng(1).normal(size=(5, 10))
    assert acc_weighted(x, x, grid) == pytest.approx(1.0, abs=1e-12)


def test_acc_anticorrelated_is_minus_one():
    grid = GridSpec.equiangular(5, 10)
    rng = np.random.default_rng(4)
    x = rng.normal(size=(5, 10))
    w = len(grid.lats) * np.cos(np.deg2rad(grid.lats)) / np.cos(np.deg2rad(grid.lats)).sum()
    x -= np.sum(w[:, None] * x) / x.size  # zero weighted mean
    assert acc_weighted(-x, x, grid) == pytest.approx(-1.0, abs=1e-12)


def test_acc_matches_loop_oracle_both_modes():
    rng = np.random.default_rng(23)
    grid = GridSpec.equiangular(4, 6)
    for _ in range(20):
        p = rng.normal(size=(4, 6))
        t = rng.normal(size=(4, 6))
        npt.assert_allclose(acc_weighted(p, t, grid),
                            loop_acc_centered(p, t, grid.lats), rtol=1e-12)
        p2, t2 = np.abs(p) + 0.5, np.abs(t) + 0.5  # keep literal sqrt real
        npt.assert_allclose(acc_weighted(p2, t2, grid, literal=True),
                            loop_acc_literal(p2, t2, grid.lats), rtol=1e-12)


def test_acc_literal_perfect_forecast_is_not_one():
    # literal formula reduces to 1/sqrt(sum L x^2) when pred == truth
    grid = GridSpec.equiangular(4, 6)
    x = np.abs(np.random.default_rng(5).normal(size=(4, 6))) + 1.0
    lit = acc_weighted(x, x, grid, literal=True)
    w = len(grid.lats) * np.cos(np.deg2rad(grid.lats)) / np.cos(np.deg2rad(grid.lats)).sum()
    npt.assert_allclose(lit, 1.0 / math.sqrt(np.sum(w[:, None] * x * x)), rtol=1e-12)
    assert abs(lit - 1.0) > 0.1


def test_acc_zero_denominator_raises():
    grid = GridSpec.equiangular(3, 3)
    with pytest.raises(MetricsError):
        acc_weighted(np.ones((3, 3)), np.ones((3, 3)), grid)


# ---------------------------------------------------------------------------
# haversine / MDE
# ---------------------------------------------------------------------------

def test_haversine_identical_points():
    assert haversine((12.0, 34.0), (12.0, 34.0)) == 0.0


def test_haversine_quarter_circle():
    assert haversine((0.0, 0.0), (0.0, 90.0)) == pytest.approx(QUARTER_KM, abs=1e-9)


def test_haversine_antipodal():
    assert haversine((0.0, 0.0), (0.0, 180.0)) == pytest.approx(ANTIPODAL_KM, abs=1e-9)


def test_haversine_invalid_latitude():
    with pytest.raises(MetricsError):
        haversine((91.0, 0.0), (0.0, 0.0))


@settings(max_examples=60, deadline=None)
@given(st.tuples(st.floats(-90, 90), st.floats(-180, 180)),
       st.tuples(st.floats(-90, 90), st.floats(-180, 180)),
       st.tuples(st.floats(-90, 90), st.floats(-180, 180)))
def test_haversine_symmetry_and_triangle(p, q, r):
    assert haversine(p, q) == pytest.approx(haversine(q, p), abs=1e-9)
    assert haversine(p, q) >= 0.0
    assert haversine(p, r) <= haversine(p, q) + haversine(q, r) + 1e-9


def test_haversine_matches_loop_oracle():
    rng = np.random.default_rng(6)
    for _ in range(50):
        p = (rng.uniform(-90, 90), rng.uniform(-180, 180))
        q = (rng.uniform(-90, 90), rng.uniform(-180, 180))
        npt.assert_allclose(haversine(p, q), loop_haversine(p, q), atol=1e-9)


def test_mde_identical_tracks():
    track = [(10.0, 20.0), (11.0, 21.0)]
    assert mde(track, track) == 0.0


def test_mde_single_point():
    assert mde([(0.0, 0.0)], [(0.0, 90.0)]) == pytest.approx(QUARTER_KM, abs=1e-9)


def test_mde_two_point_average():
    d = haversine((0.0, 0.0), (0.0, 10.0))
    pred = [(0.0, 0.0), (0.0, 0.0)]
    obs = [(0.0, 0.0), (0.0, 10.0)]
    assert mde(pred, obs) == pytest.approx(d / 2.0, rel=1e-12)


def test_mde_reversal_invariant():
    rng = np.random.default_rng(8)
    a = [(rng.uniform(-60, 60), rng.uniform(0, 359)) for _ in range(7)]
    b = [(rng.uniform(-60, 60), rng.uniform(0, 359)) for _ in range(7)]
    assert mde(a, b) == pytest.approx(mde(a[::-1], b[::-1]), rel=1e-12)


def test_mde_errors():
    with pytest.raises(MetricsError):
        mde([], [])
    with pytest.raises(MetricsError):
        mde([(0.0, 0.0)], [(0.0, 0.0), (1.0, 1.0)])
