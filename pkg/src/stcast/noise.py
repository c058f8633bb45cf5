"""Gradient-lattice (Perlin-style) noise, evaluable at arbitrary coordinates.

The lattice holds one random unit gradient per node; a sample point takes the
dot product of each corner gradient with its offset vector, blended with the
quintic fade 6t^5 - 15t^4 + 10t^3. Values are bounded by +-sqrt(2)/2. The
second axis can wrap, which makes fields longitude-periodic.
"""

from __future__ import annotations

import numpy as np

PEAK = np.sqrt(2.0) / 2.0  # max |value| of 2-D unit-gradient lattice noise


def _fade(t: np.ndarray) -> np.ndarray:
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


class GradientNoise2D:
    """One octave of gradient noise on an ``n_u x n_v`` cell lattice.

    Coordinates passed to :meth:`sample` are in lattice units: u in [0, n_u],
    v anywhere (wrapped mod n_v when periodic, else clamped to [0, n_v]).
    """

    def __init__(self, n_u: int, n_v: int, rng: np.random.Generator,
                 periodic_v: bool = True):
        if n_u < 1 or n_v < 1:
            raise ValueError("lattice must have at least one cell per axis")
        self.n_u = n_u
        self.n_v = n_v
        self.periodic_v = periodic_v
        n_v_nodes = n_v if periodic_v else n_v + 1
        angles = rng.uniform(0.0, 2.0 * np.pi, size=(n_u + 1, n_v_nodes))
        self._gu = np.cos(angles)
        self._gv = np.sin(angles)

    def _node(self, iu: np.ndarray, iv: np.ndarray) -> tuple:
        if self.periodic_v:
            iv = np.mod(iv, self.n_v)
        return self._gu[iu, iv], self._gv[iu, iv]

    def sample(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Evaluate the noise at broadcastable lattice coordinates."""
        u = np.clip(np.asarray(u, dtype=np.float64), 0.0, self.n_u - 1e-9)
        v = np.asarray(v, dtype=np.float64)
        if self.periodic_v:
            v = np.mod(v, self.n_v)
        else:
            v = np.clip(v, 0.0, self.n_v - 1e-9)
        u, v = np.broadcast_arrays(u, v)

        iu = np.floor(u).astype(np.intp)
        iv = np.floor(v).astype(np.intp)
        fu = u - iu
        fv = v - iv

        out = np.zeros_like(fu)
        wu = _fade(fu)
        wv = _fade(fv)
        for du, dv, weight in (
            (0, 0, (1 - wu) * (1 - wv)),
            (0, 1, (1 - wu) * wv),
            (1, 0, wu * (1 - wv)),
            (1, 1, wu * wv),
        ):
            gu, gv = self._node(iu + du, iv + dv)
            out += weight * (gu * (fu - du) + gv * (fv - dv))
        return out


def perlin_grid(n_lat: int, n_lon: int, lat_cells: float, lon_cells: float,
                rng: np.random.Generator, periodic_lon: bool = True) -> np.ndarray:
    """Sample one octave on a full [n_lat x n_lon] grid.

    ``lat_cells``/``lon_cells`` give the lattice spacing in grid cells; the
    longitude lattice is rounded so an integer number of periods fits, which
    keeps the field exactly periodic.
    """
    if n_lat < 1 or n_lon < 1:
        raise ValueError("grid dims must be positive")
    n_u = max(1, int(round(n_lat / lat_cells)))
    n_v = max(1, int(round(n_lon / lon_cells)))
    noise = GradientNoise2D(n_u, n_v, rng, periodic_v=periodic_lon)
    u = (np.arange(n_lat)[:, None] + 0.5) * (n_u / n_lat)
    v = (np.arange(n_lon)[None, :] + 0.5) * (n_v / n_lon)
    return noise.sample(u, v)
