"""Cyclone-center extraction from predicted mean-sea-level pressure fields.

The eye is taken as the grid cell with minimum MSL, searched either over the
whole grid or inside a lat/lon window around the previous fix. Ties break by
row-major scan order so tracks are fully deterministic.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .errors import CycloneError
from .fields import FieldTensor

MSL_VAR = "msl"
DEFAULT_SEARCH_RADIUS_DEG = 4.5
STEP = timedelta(hours=6)


@dataclass(frozen=True)
class TrackPoint:
    time: datetime
    lat: float
    lon: float
    msl: float


def detect_min_msl(field: FieldTensor, prev: tuple | None = None,
                   search_radius_deg: float = DEFAULT_SEARCH_RADIUS_DEG,
                   msl_var: str = MSL_VAR) -> TrackPoint:
    """Locate the MSL minimum, optionally within a window around ``prev``.

    The window is |lat - prev_lat| <= r and circular longitude distance <= r.
    """
    if msl_var not in field.variables:
        raise CycloneError("missing-msl", f"field has no {msl_var!r} channel")
    msl = field.channel(msl_var)
    grid = field.grid
    if prev is not None:
        plat, plon = prev
        lat_ok = np.abs(grid.lats - plat) <= search_radius_deg
        dlon = np.abs(grid.lons - plon) % 360.0
        lon_ok = np.minimum(dlon, 360.0 - dlon) <= search_radius_deg
        mask = lat_ok[:, None] & lon_ok[None, :]
        if not mask.any():
            raise CycloneError("empty-window",
                               f"no grid point within {search_radius_deg} deg "
                               f"of ({plat}, {plon})")
        masked = np.where(mask, msl, np.inf)
    else:
        masked = msl
    flat = int(np.argmin(masked))  # first minimum in row-major order
    i, j = divmod(flat, grid.n_lon)
    return TrackPoint(time=field.timestamp, lat=float(grid.lats[i]),
                      lon=float(grid.lons[j]), msl=float(msl[i, j]))


def track(fields, init: tuple,
          search_radius_deg: float = DEFAULT_SEARCH_RADIUS_DEG,
          msl_var: str = MSL_VAR) -> list:
    """Chain detections through a 6-hourly MSL sequence starting near ``init``."""
    fields = list(fields)
    if not fields:
        raise CycloneError("empty-sequence", "no fields to track through")
    points = []
    prev = init
    for f in fields:
        p = detect_min_msl(f, prev=prev, search_radius_deg=search_radius_deg,
                           msl_var=msl_var)
        points.append(p)
        prev = (p.lat, p.lon)
    return points


def save_track_csv(points, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "lat", "lon", "msl"])
        for p in points:
            writer.writerow([p.time.isoformat(), repr(p.lat), repr(p.lon),
                             repr(p.msl)])


def load_track_csv(path) -> list:
    points = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(reader.fieldnames) != {"time", "lat", "lon", "msl"}:
            raise CycloneError("bad-track-csv",
                               f"expected header time,lat,lon,msl in {path}")
        for row in reader:
            points.append(TrackPoint(time=datetime.fromisoformat(row["time"]),
                                     lat=float(row["lat"]), lon=float(row["lon"]),
                                     msl=float(row["msl"])))
    return points
