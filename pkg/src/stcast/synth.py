"""Synthetic atmospheres for training and verification at desk scale.

The generator produces paired global (coarse) and regional (fine) sequences
with four planted structures, each there so a specific model capability has
signal to detect:

* smooth advected gradient-noise fields (the forecastable dynamics),
* an annual cycle: a month-dependent scalar times a fixed spatial pattern,
* a driver process painted onto a patch of the global grid that sits outside
  the regional box, and
* the regional response: the regional field at t+1 receives
  ``beta * driver(t) * bump``, so regional skill beyond the local dynamics
  requires reading the patch from the global state at t.

Global and regional base noise are drawn from independent streams; the only
cross-grid dependence is the ``beta`` coupling. Everything is a pure function
of (config, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np

from .errors import FieldError
from .fields import FieldTensor, GridSpec, RegionSpec
from .noise import GradientNoise2D

DEFAULT_VARIABLES = ("t2m", "u10", "v10", "msl")


@dataclass(frozen=True)
class SynthConfig:
    global_shape: tuple = (32, 64)
    regional_shape: tuple = (24, 48)
    region: RegionSpec = field(default_factory=lambda: RegionSpec(16, 40, 12, 24))
    variables: tuple = DEFAULT_VARIABLES
    seq_len: int = 16
    start_time: datetime = datetime(2021, 1, 15, 0)
    step_hours: int = 6
    base_amp: float = 1.0
    noise_scale_cells: float = 8.0   # lattice spacing, global cells
    advect_cells: float = 1.0        # zonal drift per step, global cells
    seasonal_amp: float = 1.0        # annual-cycle amplitude, first variable
    beta: float = 1.0                # coupling of regional t+1 to the patch at t
    remote_center: tuple = (16, 22)  # patch (row, col), outside the region box
    remote_sigma: float = 1.5        # patch extent, global cells
    remote_amp: float = 2.0          # patch visibility in the global field
    rho: float = 0.3                 # AR(1) memory of the driver
    detail_amp: float = 0.4          # fine-scale octave on the regional grid
    detail_scale_cells: float = 3.0  # spacing of that octave, regional cells
    # None derives regional drift/scale from the geographic refinement factor;
    # explicit values (in regional cells) let the two grids share cell-space
    # statistics, which is what a backbone reused across grids expects
    regional_advect_cells: float | None = None
    regional_scale_cells: float | None = None
    couple_all_channels: bool = False  # bump every channel, not just the first

    def __post_init__(self):
        if min(self.global_shape) < 1 or min(self.regional_shape) < 1:
            raise FieldError("bad-config", "grid dims must be positive")
        if self.seq_len < 1:
            raise FieldError("bad-config", "seq_len must be >= 1")
        if self.beta < 0:
            raise FieldError("bad-config", "beta must be >= 0")
        if not self.variables:
            raise FieldError("bad-config", "at least one variable required")


def regional_grid_for(global_grid: GridSpec, region: RegionSpec,
                      regional_shape: tuple) -> GridSpec:
    """Fine grid covering the geographic extent of ``region``.

    Assumes the global grid is equiangular with descending lats and ascending
    lons (as built by ``GridSpec.equiangular``).
    """
    region.validate_inside(global_grid.n_lat, global_grid.n_lon)
    rs, cs = region.row_slice(), region.col_slice()
    dlat = abs(float(global_grid.lats[0] - global_grid.lats[1]))
    dlon = abs(float(global_grid.lons[1] - global_grid.lons[0]))
    lat_top = float(global_grid.lats[rs.start]) + dlat / 2.0
    lat_bot = float(global_grid.lats[rs.stop - 1]) - dlat / 2.0
    lon_left = float(global_grid.lons[cs.start]) - dlon / 2.0
    lon_right = float(global_grid.lons[cs.stop - 1]) + dlon / 2.0
    n_lat_r, n_lon_r = regional_shape
    return GridSpec.box((lat_top, lat_bot), (lon_left, lon_right), n_lat_r, n_lon_r)


def _season_factor(month: int) -> float:
    return math.cos(2.0 * math.pi * (month - 7) / 12.0)


def _advected_base(noise: GradientNoise2D, n_rows: int, n_cols: int,
                   cells_per_lattice_u: float, cells_per_lattice_v: float,
                   shift_cells: float, v_offset: float = 0.0) -> np.ndarray:
    u = (np.arange(n_rows)[:, None] + 0.5) / cells_per_lattice_u
    v = (np.arange(n_cols)[None, :] + 0.5 - shift_cells + v_offset) / cells_per_lattice_v
    return noise.sample(u, v)


def synth_generate(config: SynthConfig, seed: int):
    """Generate (global sequence, regional sequence) of FieldTensors."""
    n_lat_g, n_lon_g = config.global_shape
    n_lat_r, n_lon_r = config.regional_shape
    n_chan = len(config.variables)
    global_grid = GridSpec.equiangular(n_lat_g, n_lon_g)
    regional_grid = regional_grid_for(global_grid, config.region,
                                      config.regional_shape)

    streams = np.random.SeedSequence(seed).spawn(3 * n_chan + 3)
    rng_gbase = [np.random.default_rng(streams[c]) for c in range(n_chan)]
    rng_rbase = [np.random.default_rng(streams[n_chan + c]) for c in range(n_chan)]
    rng_detail = [np.random.default_rng(streams[2 * n_chan + c]) for c in range(n_chan)]
    rng_season_g = np.random.default_rng(streams[3 * n_chan])
    rng_season_r = np.random.default_rng(streams[3 * n_chan + 1])
    rng_driver = np.random.default_rng(streams[3 * n_chan + 2])

    # global lattices (lon-periodic)
    scale = config.noise_scale_cells
    gn_u = max(1, round(n_lat_g / scale))
    gn_v = max(1, round(n_lon_g / scale))
    g_noise = [GradientNoise2D(gn_u, gn_v, r) for r in rng_gbase]
    g_season = GradientNoise2D(gn_u, gn_v, rng_season_g)

    # regional lattices (non-periodic, padded so advection has inflow)
    refine = (360.0 / n_lon_g) / abs(float(regional_grid.lons[1] - regional_grid.lons[0]))
    if config.regional_advect_cells is not None:
        shift_r = config.regional_advect_cells      # regional cells per step
    else:
        shift_r = config.advect_cells * refine
    v_pad = max(0.0, shift_r * config.seq_len)
    span = n_lon_r + abs(shift_r) * config.seq_len + 1.0
    scale_r = config.regional_scale_cells or (scale * refine)
    rn_u = max(1, round(n_lat_r / scale_r))
    rn_v = max(1, math.ceil(span / scale_r))
    r_noise = [GradientNoise2D(rn_u, rn_v, r, periodic_v=False) for r in rng_rbase]
    r_season = GradientNoise2D(rn_u, rn_v, rng_season_r, periodic_v=False)
    dn_u = max(1, round(n_lat_r / config.detail_scale_cells))
    dn_v = max(1, math.ceil(span / config.detail_scale_cells))
    d_noise = [GradientNoise2D(dn_u, dn_v, r, periodic_v=False) for r in rng_detail]

    # driver values at times -1 .. seq_len-1: drv[k] is the value at time k-1
    innov = rng_driver.standard_normal(config.seq_len + 1)
    drv = np.empty(config.seq_len + 1)
    drv[0] = innov[0]
    for k in range(1, config.seq_len + 1):
        drv[k] = config.rho * drv[k - 1] + math.sqrt(1.0 - config.rho ** 2) * innov[k]

    # static patterns
    ci, cj = config.remote_center
    ii = np.arange(n_lat_g)[:, None]
    jj = np.arange(n_lon_g)[None, :]
    dj = np.minimum(np.abs(jj - cj), n_lon_g - np.abs(jj - cj))  # lon wrap
    patch = np.exp(-((ii - ci) ** 2 + dj ** 2) / (2.0 * config.remote_sigma ** 2))
    xs = (np.arange(n_lon_r)[None, :] + 0.5) / n_lon_r
    ys = (np.arange(n_lat_r)[:, None] + 0.5) / n_lat_r
    bump = (np.sin(np.pi * xs) * np.sin(np.pi * ys)) ** 2
    season_g = 0.5 + _advected_base(g_season, n_lat_g, n_lon_g,
                                    n_lat_g / gn_u, n_lon_g / gn_v, 0.0)
    season_r = 0.5 + _advected_base(r_season, n_lat_r, n_lon_r,
                                    n_lat_r / rn_u, scale_r, 0.0)

    global_seq, regional_seq = [], []
    for t in range(config.seq_len):
        ts = config.start_time + timedelta(hours=config.step_hours * t)
        season = config.seasonal_amp * _season_factor(ts.month)

        gvals = np.empty((n_chan, n_lat_g, n_lon_g))
        for c in range(n_chan):
            gvals[c] = config.base_amp * _advected_base(
                g_noise[c], n_lat_g, n_lon_g, n_lat_g / gn_u, n_lon_g / gn_v,
                config.advect_cells * t)
        gvals[0] += season * season_g
        gvals[0] += config.remote_amp * drv[t + 1] * patch  # driver at time t
        global_seq.append(FieldTensor(global_grid, gvals, config.variables, ts))

        rvals = np.empty((n_chan, n_lat_r, n_lon_r))
        for c in range(n_chan):
            rvals[c] = config.base_amp * _advected_base(
                r_noise[c], n_lat_r, n_lon_r, n_lat_r / rn_u, scale_r,
                shift_r * t, v_offset=v_pad)
            rvals[c] += config.detail_amp * _advected_base(
                d_noise[c], n_lat_r, n_lon_r, n_lat_r / dn_u,
                config.detail_scale_cells, shift_r * t, v_offset=v_pad)
        rvals[0] += season * season_r
        response = config.beta * drv[t] * bump  # driver one step earlier
        if config.couple_all_channels:
            rvals += response[None, :, :]
        else:
            rvals[0] += response
        regional_seq.append(FieldTensor(regional_grid, rvals, config.variables, ts))

    return global_seq, regional_seq


# ---------------------------------------------------------------------------
# planted-depression sequences for cyclone-tracking fixtures
# ---------------------------------------------------------------------------

def circular_path(center: tuple, radius_cells: float, start_angle: float,
                  step_angle: float, n: int) -> list:
    """(row, col) waypoints on a circle, in fractional grid cells."""
    out = []
    for t in range(n):
        a = start_angle + step_angle * t
        out.append((center[0] + radius_cells * math.sin(a),
                    center[1] + radius_cells * math.cos(a)))
    return out


def depression_sequence(shape: tuple, path_cells: list, seed: int = 0,
                        depth: float = 8.0, sigma_cells: float = 1.8,
                        base_amp: float = 0.3,
                        start_time: datetime = datetime(2021, 7, 15, 0),
                        variables: tuple = ("msl",),
                        advect_cells: float = 0.0):
    """MSL sequence with a Gaussian low moving along ``path_cells``.

    The well is much deeper than the background, so its cell is the grid
    argmin at every step. Extra variables, if any, carry plain advected noise.
    """
    n_lat, n_lon = shape
    grid = GridSpec.equiangular(n_lat, n_lon)
    if "msl" not in variables:
        raise FieldError("bad-config", "depression sequence needs an msl channel")
    streams = np.random.SeedSequence(seed).spawn(len(variables))
    n_u, n_v = max(1, round(n_lat / 6)), max(1, round(n_lon / 6))
    lattices = [GradientNoise2D(n_u, n_v, np.random.default_rng(s)) for s in streams]
    ii = np.arange(n_lat)[:, None]
    jj = np.arange(n_lon)[None, :]
    seq = []
    for t, (prow, pcol) in enumerate(path_cells):
        ts = start_time + timedelta(hours=6 * t)
        vals = np.empty((len(variables), n_lat, n_lon))
        for c in range(len(variables)):
            vals[c] = base_amp * _advected_base(
                lattices[c], n_lat, n_lon, n_lat / n_u, n_lon / n_v,
                advect_cells * t)
        dj = np.minimum(np.abs(jj - pcol), n_lon - np.abs(jj - pcol))
        well = np.exp(-((ii - prow) ** 2 + dj ** 2) / (2.0 * sigma_cells ** 2))
        vals[variables.index("msl")] -= depth * well
        seq.append(FieldTensor(grid, vals, variables, ts))
    return seq
