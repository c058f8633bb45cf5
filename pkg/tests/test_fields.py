import math
from datetime import datetime

import numpy as np
import numpy.testing as npt
import pytest

from stcast.errors import FieldError
from stcast.fields import (FieldTensor, GridSpec, NormStats, RegionSpec,
                           compute_latitude_weights, compute_norm_stats,
                           crop_region, denormalize, load_field, normalize,
                           save_field)

T0 = datetime(2021, 6, 15, 12)


def make_field(values, variables=None, n_lat=None, n_lon=None):
    values = np.asarray(values, dtype=np.float64)
    n_lat = n_lat or values.shape[1]
    n_lon = n_lon or values.shape[2]
    grid = GridSpec.equiangular(n_lat, n_lon)
    variables = variables or [f"var{i}" for i in range(values.shape[0])]
    return FieldTensor(grid, values, variables, T0)


# ---------------------------------------------------------------------------
# latitude weights
# ---------------------------------------------------------------------------

def test_latitude_weights_sum_to_n_lat():
    for n_lat, n_lon in [(3, 4), (16, 32), (32, 64), (721, 2)]:
        grid = GridSpec.equiangular(n_lat, n_lon)
        w = compute_latitude_weights(grid)
        assert np.all(w >= 0)
        npt.assert_allclose(w.sum(), n_lat, rtol=1e-10)


def test_latitude_weights_frozen_values():
    # direct evaluation of n_lat*cos(phi)/sum(cos) at {-45, 0, 45}
    grid = GridSpec(lats=np.array([-45.0, 0.0, 45.0]), lons=np.array([0.0]))
    w = compute_latitude_weights(grid)
    npt.assert_allclose(
        w, [0.8786796564403576, 1.2426406871192852, 0.8786796564403576],
        atol=1e-12)


def test_latitude_weights_single_row():
    grid = GridSpec(lats=np.array([0.0]), lons=np.array([0.0, 90.0]))
    npt.assert_allclose(compute_latitude_weights(grid), [1.0])


def test_bad_latitude_rejected():
    with pytest.raises(FieldError):
        GridSpec(lats=np.array([0.0, 95.0]), lons=np.array([0.0]))


def test_non_monotone_rejected():
    with pytest.raises(FieldError):
        GridSpec(lats=np.array([0.0, 10.0, 5.0]), lons=np.array([0.0]))


# ---------------------------------------------------------------------------
# normalization statistics
# ---------------------------------------------------------------------------

def test_constant_field_std_clamped():
    f = make_field(np.full((1, 4, 8), 3.25))
    stats = compute_norm_stats([f])
    mean, std = stats.mean_std("var0")
    assert mean == 3.25
    assert std == 1e-8


def test_two_sample_mean():
    zeros = make_field(np.zeros((2, 4, 8)))
    twos = make_field(np.full((2, 4, 8), 2.0))
    stats = compute_norm_stats([zeros, twos])
    for var in ("var0", "var1"):
        mean, _ = stats.mean_std(var)
        assert mean == 1.0


def test_norm_stats_match_two_pass_reference():
    rng = np.random.default_rng(7)
    fields = [make_field(rng.normal(1.5, 2.0, (3, 5, 6))) for _ in range(3)]
    stats = compute_norm_stats(fields)
    for c in range(3):
        data = np.concatenate([f.values[c].ravel() for f in fields])
        ref_mean = data.sum() / data.size            # two-pass reference
        ref_std = math.sqrt(((data - ref_mean) ** 2).sum() / data.size)
        mean, std = stats.mean_std(f"var{c}")
        npt.assert_allclose(mean, ref_mean, rtol=1e-12)
        npt.assert_allclose(std, ref_std, rtol=1e-12)


def test_norm_stats_errors():
    with pytest.raises(FieldError):
        compute_norm_stats([])
    a = make_field(np.zeros((1, 2, 2)), variables=["a"])
    b = make_field(np.zeros((1, 2, 2)), variables=["b"])
    with pytest.raises(FieldError):
        compute_norm_stats([a, b])


def test_normalize_at_mean_is_zero():
    f = make_field(np.full((1, 3, 4), 5.0))
    stats = NormStats({"var0": (5.0, 2.0)})
    assert np.all(normalize(f, stats).values == 0.0)


def test_normalize_scalar_example():
    f = make_field(np.full((1, 1, 1), 9.0))
    out = normalize(f, NormStats({"var0": (5.0, 2.0)}))
    assert out.values[0, 0, 0] == 2.0


def test_normalize_roundtrip():
    rng = np.random.default_rng(3)
    f = make_field(rng.normal(10.0, 4.0, (2, 6, 9)))
    stats = compute_norm_stats([f])
    back = denormalize(normalize(f, stats), stats)
    npt.assert_allclose(back.values, f.values, rtol=1e-12, atol=1e-12)


def test_normalize_missing_variable():
    f = make_field(np.zeros((1, 2, 2)))
    with pytest.raises(FieldError):
        normalize(f, NormStats({"other": (0.0, 1.0)}))


def test_norm_stats_json_roundtrip(tmp_path):
    stats = NormStats({"t2m": (1.5, 2.5), "msl": (-3.0, 0.25)})
    stats.to_json(tmp_path / "stats.json")
    back = NormStats.from_json(tmp_path / "stats.json")
    assert back.stats == stats.stats


# ---------------------------------------------------------------------------
# region cropping
# ---------------------------------------------------------------------------

def test_crop_whole_grid_identity():
    f = make_field(np.random.default_rng(0).normal(size=(2, 4, 6)))
    out = crop_region(f, RegionSpec(center_x=2, center_y=3, height=4, width=6))
    npt.assert_array_equal(out.values, f.values)
    npt.assert_array_equal(out.grid.lats, f.grid.lats)
    with pytest.raises(FieldError):
        crop_region(f, RegionSpec(center_x=0, center_y=3, height=4, width=6))


def test_crop_single_cell():
    f = make_field(np.arange(2 * 5 * 7, dtype=float).reshape(2, 5, 7))
    out = crop_region(f, RegionSpec(center_x=3, center_y=4, height=1, width=1))
    npt.assert_array_equal(out.values[:, 0, 0], f.values[:, 3, 4])


def test_crop_matches_index_oracle():
    rng = np.random.default_rng(11)
    f = make_field(rng.normal(size=(3, 12, 16)))
    region = RegionSpec(center_x=6, center_y=8, height=4, width=6)
    out = crop_region(f, region)
    assert out.values.shape == (3, 4, 6)
    r0 = 6 - 4 // 2
    c0 = 8 - 6 // 2
    for c in range(3):                       # element-wise index oracle
        for i in range(4):
            for j in range(6):
                assert out.values[c, i, j] == f.values[c, r0 + i, c0 + j]
    assert out.grid.lats[0] == f.grid.lats[r0]
    assert not np.shares_memory(out.values, f.values)


# ---------------------------------------------------------------------------
# grid file IO
# ---------------------------------------------------------------------------

def f32_field(shape=(2, 4, 6), seed=5):
    rng = np.random.default_rng(seed)
    vals = rng.normal(size=shape).astype(np.float32).astype(np.float64)
    return make_field(vals, variables=["t2m", "msl"][: shape[0]])


def test_grid_file_roundtrip_bit_exact(tmp_path):
    f = f32_field()
    save_field(f, tmp_path / "f.f32")
    back = load_field(tmp_path / "f.f32")
    assert np.array_equal(back.values, f.values)
    assert back.variables == f.variables
    assert back.timestamp == f.timestamp
    npt.assert_array_equal(back.grid.lats, f.grid.lats)
    # and the payload bytes themselves are stable
    save_field(back, tmp_path / "g.f32")
    assert (tmp_path / "f.f32").read_bytes() == (tmp_path / "g.f32").read_bytes()


def test_truncated_payload_rejected(tmp_path):
    f = f32_field()
    save_field(f, tmp_path / "f.f32")
    data = (tmp_path / "f.f32").read_bytes()
    (tmp_path / "f.f32").write_bytes(data[:-8])
    with pytest.raises(FieldError) as e:
        load_field(tmp_path / "f.f32")
    assert e.value.code == "dimension-mismatch"


def test_month_inconsistency_rejected(tmp_path):
    f = f32_field()
    save_field(f, tmp_path / "f.f32")
    side = (tmp_path / "f.json").read_text().replace('"month": 6', '"month": 3')
    (tmp_path / "f.json").write_text(side)
    with pytest.raises(FieldError) as e:
        load_field(tmp_path / "f.f32")
    assert e.value.code == "month-mismatch"


def test_malformed_sidecar_rejected(tmp_path):
    f = f32_field()
    save_field(f, tmp_path / "f.f32")
    (tmp_path / "f.json").write_text("{not json")
    with pytest.raises(FieldError) as e:
        load_field(tmp_path / "f.f32")
    assert e.value.code == "malformed-header"


def test_field_values_immutable():
    f = f32_field()
    with pytest.raises(ValueError):
        f.values[0, 0, 0] = 1.0


def test_non_finite_rejected():
    vals = np.zeros((1, 2, 2))
    vals[0, 0, 0] = np.nan
    with pytest.raises(FieldError):
        make_field(vals)
