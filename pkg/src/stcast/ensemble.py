"""Perlin-noise initial-condition perturbation and ensemble-mean forecasting.

Each member perturbs every channel of the initial state with its own
deterministic multi-octave gradient noise (longitude-periodic), rolls out the
model, and the ensemble mean is the pointwise average across members at each
lead time. Member ``i``, channel ``c`` uses noise stream ``i * C + c``, so
members and channels are all mutually independent and schedule-independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EnsembleError
from .fields import FieldTensor
from .noise import PEAK, perlin_grid
from .training import rollout


@dataclass(frozen=True)
class NoiseConfig:
    amplitude: float = 0.05     # peak perturbation, normalized-field units
    base_scale: float = 16.0    # cells per lattice period at octave 0
    octaves: int = 3
    persistence: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.amplitude < 0:
            raise EnsembleError("bad-config", "amplitude must be >= 0")
        if self.octaves < 1:
            raise EnsembleError("bad-config", "octaves must be >= 1")
        if not 0 < self.persistence <= 1:
            raise EnsembleError("bad-config", "persistence must be in (0, 1]")
        if self.base_scale <= 0:
            raise EnsembleError("bad-config", "base_scale must be > 0")


def perlin2d(n_lat: int, n_lon: int, config: NoiseConfig,
             member_index: int) -> np.ndarray:
    """One member's noise field, scaled so |values| <= amplitude.

    Octave o halves the lattice spacing and multiplies its contribution by
    persistence^o; (config.seed, member_index, o) fully determines each
    octave's gradients.
    """
    if n_lat < 1 or n_lon < 1:
        raise EnsembleError("bad-config", "grid dims must be positive")
    if config.amplitude == 0.0:
        return np.zeros((n_lat, n_lon))
    total = np.zeros((n_lat, n_lon))
    norm = 0.0
    for octave in range(config.octaves):
        spacing = config.base_scale / (2 ** octave)
        gain = config.persistence ** octave
        rng = np.random.default_rng(
            np.random.SeedSequence([config.seed, member_index, octave]))
        total += gain * perlin_grid(n_lat, n_lon, spacing, spacing, rng,
                                    periodic_lon=True)
        norm += gain
    return total * (config.amplitude / (PEAK * norm))


def perturb(field: FieldTensor, config: NoiseConfig,
            member_index: int) -> FieldTensor:
    """Initial state plus fresh member-indexed noise on every channel."""
    if config.amplitude == 0.0:
        return field
    c, n_lat, n_lon = field.values.shape
    noise = np.stack([perlin2d(n_lat, n_lon, config, member_index * c + ch)
                      for ch in range(c)])
    return field.with_values(field.values + noise)


def ensemble_forecast(initial: FieldTensor, model, n_members: int, steps: int,
                      config: NoiseConfig):
    """(mean trajectory, member trajectories) of ``n_members`` rollouts."""
    if n_members < 1:
        raise EnsembleError("bad-config", "need at least one member")
    if config.amplitude == 0.0:
        # identical members: the mean is the deterministic rollout, bit-exact
        traj = rollout(initial, steps, model)
        return traj, [traj] * n_members
    members = [rollout(perturb(initial, config, i), steps, model)
               for i in range(n_members)]
    mean_traj = []
    for lead in range(steps):
        stacked = np.stack([m[lead].values for m in members])
        ref = members[0][lead]
        mean_traj.append(FieldTensor(ref.grid, stacked.mean(axis=0),
                                     ref.variables, ref.timestamp))
    return mean_traj, members


def ensemble_spread(members) -> list:
    """Rows (lead_hours, variable, mean per-point std across members)."""
    if not members:
        raise EnsembleError("bad-config", "no members")
    rows = []
    steps = len(members[0])
    for lead in range(steps):
        stacked = np.stack([m[lead].values for m in members])
        std = stacked.std(axis=0)
        ref = members[0][lead]
        for ci, var in enumerate(ref.variables):
            rows.append((6 * (lead + 1), var, float(std[ci].mean())))
    return rows
