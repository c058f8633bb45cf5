import numpy as np
import numpy.testing as npt
import pytest
import torch

from stcast.ensemble import (NoiseConfig, ensemble_forecast, ensemble_spread,
                             perlin2d, perturb)
from stcast.errors import EnsembleError
from stcast.fields import RegionSpec
from stcast.model import GlobalForecaster, ModelConfig
from stcast.noise import GradientNoise2D
from stcast.synth import SynthConfig, synth_generate
from stcast.training import make_pairs, rollout, train_global


def test_amplitude_zero_gives_zero_field():
    cfg = NoiseConfig(amplitude=0.0)
    assert np.all(perlin2d(16, 32, cfg, 0) == 0.0)


def test_member_determinism():
    cfg = NoiseConfig(amplitude=0.1, seed=3)
    a = perlin2d(16, 32, cfg, member_index=5)
    b = perlin2d(16, 32, cfg, member_index=5)
    assert np.array_equal(a, b)
    c = perlin2d(16, 32, cfg, member_index=6)
    assert not np.array_equal(a, c)


def test_peak_amplitude_bound():
    cfg = NoiseConfig(amplitude=0.25, seed=1)
    for member in range(5):
        field = perlin2d(32, 64, cfg, member)
        assert np.abs(field).max() <= 0.25 + 1e-12


def test_near_zero_mean_over_seeds():
    means = []
    for seed in range(20):
        cfg = NoiseConfig(amplitude=1.0, seed=seed)
        means.append(perlin2d(64, 128, cfg, 0).mean())
    assert max(abs(m) for m in means) < 0.05


def test_longitude_periodicity_at_lattice_level():
    rng = np.random.default_rng(7)
    noise = GradientNoise2D(4, 8, rng, periodic_v=True)
    u = np.linspace(0.1, 3.9, 13)[:, None]
    v = np.arange(0.0, 2.25, 0.25)[None, :]  # dyadic: v + 8 is exact
    npt.assert_array_equal(noise.sample(u, v), noise.sample(u, v + 8.0))
    v2 = np.linspace(0.03, 1.97, 9)[None, :]
    npt.assert_allclose(noise.sample(u, v2), noise.sample(u, v2 + 8.0),
                        atol=1e-12)


def test_config_validation():
    with pytest.raises(EnsembleError):
        NoiseConfig(amplitude=-0.1)
    with pytest.raises(EnsembleError):
        NoiseConfig(octaves=0)
    with pytest.raises(EnsembleError):
        NoiseConfig(persistence=0.0)


# ---------------------------------------------------------------------------
# ensemble rollouts on a small trained model
# ---------------------------------------------------------------------------

SYNTH = SynthConfig(global_shape=(8, 16), regional_shape=(8, 16),
                    region=RegionSpec(4, 10, 2, 4), remote_center=(4, 5),
                    seq_len=10, noise_scale_cells=4.0)


@pytest.fixture(scope="module")
def toy_model():
    torch.manual_seed(0)
    cfg = ModelConfig(channels=4, grid_shape=(8, 16), patch=2, width=16,
                      blocks=2, heads=2, window=2, n_experts=2, top_k=1,
                      batch_size=4, steps=60, lr=1e-3)
    model = GlobalForecaster(cfg)
    g, _ = synth_generate(SYNTH, seed=11)
    train_global(model, make_pairs(g), seed=0)
    return model, g[0]


def test_amplitude_zero_matches_deterministic_rollout(toy_model):
    model, initial = toy_model
    mean_traj, members = ensemble_forecast(initial, model, n_members=3,
                                           steps=3, config=NoiseConfig(amplitude=0.0))
    det = rollout(initial, 3, model)
    for m, d in zip(mean_traj, det):
        assert np.array_equal(m.values, d.values)
    assert len(members) == 3


def test_single_member_mean_is_member(toy_model):
    model, initial = toy_model
    mean_traj, members = ensemble_forecast(initial, model, n_members=1,
                                           steps=2,
                                           config=NoiseConfig(amplitude=0.05))
    for m, s in zip(mean_traj, members[0]):
        npt.assert_allclose(m.values, s.values, rtol=0, atol=0)


def test_mean_recomputable_from_members(toy_model):
    model, initial = toy_model
    mean_traj, members = ensemble_forecast(initial, model, n_members=4,
                                           steps=3,
                                           config=NoiseConfig(amplitude=0.05))
    for lead in range(3):
        recomputed = np.mean([m[lead].values for m in members], axis=0)
        npt.assert_allclose(mean_traj[lead].values, recomputed, atol=1e-12)


def test_spread_monotone_in_amplitude(toy_model):
    model, initial = toy_model
    spreads = []
    for amp in (0.01, 0.05, 0.1):
        _, members = ensemble_forecast(initial, model, n_members=4, steps=4,
                                       config=NoiseConfig(amplitude=amp, seed=2))
        stacked = np.stack([m[3].values for m in members])
        spreads.append(float(stacked.std(axis=0).mean()))
    assert spreads[0] <= spreads[1] <= spreads[2]


def test_ensemble_mean_error_convexity(toy_model):
    model, initial = toy_model
    g, _ = synth_generate(SYNTH, seed=11)
    steps = 4
    truth = g[1:steps + 1]
    mean_traj, members = ensemble_forecast(initial, model, n_members=4,
                                           steps=steps,
                                           config=NoiseConfig(amplitude=0.05))
    for lead in range(steps):
        err_mean = np.mean((mean_traj[lead].values - truth[lead].values) ** 2)
        err_members = np.mean([(m[lead].values - truth[lead].values) ** 2
                               for m in members])
        assert err_mean <= err_members + 1e-12


def test_spread_rows_schema(toy_model):
    model, initial = toy_model
    _, members = ensemble_forecast(initial, model, n_members=3, steps=2,
                                   config=NoiseConfig(amplitude=0.05))
    rows = ensemble_spread(members)
    assert len(rows) == 2 * 4
    assert rows[0][0] == 6 and rows[-1][0] == 12
    assert all(r[2] >= 0 for r in rows)


def test_member_count_validated(toy_model):
    model, initial = toy_model
    with pytest.raises(EnsembleError):
        ensemble_forecast(initial, model, n_members=0, steps=1,
                          config=NoiseConfig())
