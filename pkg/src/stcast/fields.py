"""Grid data model: field tensors, latitude geometry, normalization, file I/O.

A field is a [C x n_lat x n_lon] snapshot of C named variables on a
latitude/longitude grid, stamped with an instant in time. All statistics and
model code in the package consume these objects.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import FieldError

STD_FLOOR = 1e-8


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Latitude/longitude geometry of a rectangular grid."""

    lats: np.ndarray  # degrees, strictly monotone, each in [-90, 90]
    lons: np.ndarray  # degrees, strictly monotone, each in [-180, 360)

    def __post_init__(self):
        lats = np.asarray(self.lats, dtype=np.float64)
        lons = np.asarray(self.lons, dtype=np.float64)
        object.__setattr__(self, "lats", lats)
        object.__setattr__(self, "lons", lons)
        if lats.ndim != 1 or lons.ndim != 1 or lats.size == 0 or lons.size == 0:
            raise FieldError("bad-grid", "lats and lons must be nonempty 1-D arrays")
        if np.any(np.abs(lats) > 90.0):
            raise FieldError("bad-grid", "latitudes must lie in [-90, 90]")
        if np.any(lons < -180.0) or np.any(lons >= 360.0):
            raise FieldError("bad-grid", "longitudes must lie in [-180, 360)")
        for name, arr in (("lats", lats), ("lons", lons)):
            if arr.size > 1:
                d = np.diff(arr)
                if not (np.all(d > 0) or np.all(d < 0)):
                    raise FieldError("bad-grid", f"{name} must be strictly monotone")
        lats.setflags(write=False)
        lons.setflags(write=False)

    @property
    def n_lat(self) -> int:
        return int(self.lats.size)

    @property
    def n_lon(self) -> int:
        return int(self.lons.size)

    @classmethod
    def equiangular(cls, n_lat: int, n_lon: int) -> "GridSpec":
        """Cell-centered global grid, north-to-south rows, 0..360 columns."""
        if n_lat < 1 or n_lon < 1:
            raise FieldError("bad-grid", "grid dims must be positive")
        dlat = 180.0 / n_lat
        lats = 90.0 - dlat / 2.0 - dlat * np.arange(n_lat)
        lons = (360.0 / n_lon) * np.arange(n_lon)
        return cls(lats=lats, lons=lons)

    @classmethod
    def box(cls, lat_range: tuple, lon_range: tuple, n_lat: int, n_lon: int) -> "GridSpec":
        """Cell-centered grid covering a geographic box (used for regions)."""
        lat0, lat1 = lat_range
        lon0, lon1 = lon_range
        dlat = (lat1 - lat0) / n_lat
        dlon = (lon1 - lon0) / n_lon
        lats = lat0 + dlat / 2.0 + dlat * np.arange(n_lat)
        lons = lon0 + dlon / 2.0 + dlon * np.arange(n_lon)
        return cls(lats=lats, lons=lons)


@dataclass(frozen=True)
class RegionSpec:
    """A target box inside a global grid, in grid-index units.

    The box is the set of points (i, j) with |i - center_x| <= height/2 and
    |j - center_y| <= width/2; it must lie fully inside the host grid.
    ``center_x`` indexes rows (latitude), ``center_y`` columns (longitude).
    """

    center_x: int
    center_y: int
    height: int
    width: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise FieldError("bad-region", "region extents must be >= 1")

    def validate_inside(self, n_lat: int, n_lon: int) -> None:
        rs, cs = self.row_slice(), self.col_slice()
        if rs.start < 0 or rs.stop > n_lat or cs.start < 0 or cs.stop > n_lon:
            raise FieldError(
                "region-outside-grid",
                f"region {self} does not fit inside a {n_lat}x{n_lon} grid",
            )

    def row_slice(self) -> slice:
        start = self.center_x - self.height // 2
        return slice(start, start + self.height)

    def col_slice(self) -> slice:
        start = self.center_y - self.width // 2
        return slice(start, start + self.width)

    def scaled(self, factor: int) -> "RegionSpec":
        """Region expressed on a grid coarsened by ``factor`` (e.g. patching)."""
        if (self.center_x % factor or self.center_y % factor
                or self.height % factor or self.width % factor):
            raise FieldError(
                "region-not-aligned",
                f"region {self} is not aligned to a factor-{factor} coarsening",
            )
        return RegionSpec(self.center_x // factor, self.center_y // factor,
                          self.height // factor, self.width // factor)


class FieldTensor:
    """One [C x n_lat x n_lon] grid snapshot with a timestamp.

    Values are stored as float64 and frozen after construction; operations
    that change values return new instances.
    """

    __slots__ = ("grid", "values", "variables", "timestamp")

    def __init__(self, grid: GridSpec, values: np.ndarray,
                 variables: Sequence[str], timestamp: datetime):
        values = np.array(values, dtype=np.float64)  # owned copy
        if values.ndim != 3:
            raise FieldError("bad-field", "values must be [C, n_lat, n_lon]")
        if values.shape[1] != grid.n_lat or values.shape[2] != grid.n_lon:
            raise FieldError(
                "bad-field",
                f"values shape {values.shape} does not match grid "
                f"{grid.n_lat}x{grid.n_lon}")
        if len(variables) != values.shape[0]:
            raise FieldError("bad-field", "one variable name per channel required")
        if not np.all(np.isfinite(values)):
            raise FieldError("non-finite", "field contains non-finite values")
        values.setflags(write=False)
        self.grid = grid
        self.values = values
        self.variables = tuple(variables)
        self.timestamp = timestamp

    @property
    def month(self) -> int:
        return self.timestamp.month

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]

    def channel(self, name: str) -> np.ndarray:
        try:
            idx = self.variables.index(name)
        except ValueError:
            raise FieldError("missing-variable", f"no channel named {name!r}") from None
        return self.values[idx]

    def with_values(self, values: np.ndarray) -> "FieldTensor":
        return FieldTensor(self.grid, values, self.variables, self.timestamp)

    def __repr__(self):
        return (f"FieldTensor({self.n_channels}x{self.grid.n_lat}x{self.grid.n_lon}, "
                f"vars={list(self.variables)}, t={self.timestamp.isoformat()})")


@dataclass(frozen=True)
class NormStats:
    """Per-variable mean and standard deviation (std floored at STD_FLOOR)."""

    stats: Mapping[str, tuple]  # variable -> (mean, std)

    def __post_init__(self):
        clean = {}
        for var, (mean, std) in dict(self.stats).items():
            clean[var] = (float(mean), max(float(std), STD_FLOOR))
        object.__setattr__(self, "stats", clean)

    def mean_std(self, var: str) -> tuple:
        if var not in self.stats:
            raise FieldError("missing-variable", f"no statistics for variable {var!r}")
        return self.stats[var]

    def to_json(self, path) -> None:
        doc = {v: {"mean": m, "std": s} for v, (m, s) in self.stats.items()}
        Path(path).write_text(json.dumps(doc, indent=2))

    @classmethod
    def from_json(cls, path) -> "NormStats":
        doc = json.loads(Path(path).read_text())
        return cls({v: (d["mean"], d["std"]) for v, d in doc.items()})


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def compute_latitude_weights(grid: GridSpec) -> np.ndarray:
    """Per-row area weights: n_lat * cos(lat_i) / sum_j cos(lat_j).

    The weights are nonnegative and sum to n_lat by construction.
    """
    if np.any(np.abs(grid.lats) > 90.0):
        raise FieldError("bad-grid", "latitudes must lie in [-90, 90]")
    cos = np.cos(np.deg2rad(grid.lats))
    cos = np.clip(cos, 0.0, None)  # cos(+-90) may round to -2e-17
    total = cos.sum()
    if total <= 0.0:
        raise FieldError("bad-grid", "degenerate grid: all rows at the poles")
    return grid.n_lat * cos / total


def compute_norm_stats(dataset: Iterable[FieldTensor]) -> NormStats:
    """Mean/std per variable over every sample and grid point of ``dataset``."""
    fields = list(dataset)
    if not fields:
        raise FieldError("empty-dataset", "cannot compute statistics of nothing")
    variables = fields[0].variables
    for f in fields[1:]:
        if f.variables != variables:
            raise FieldError("variable-mismatch",
                             f"inconsistent variables: {f.variables} vs {variables}")
    stats = {}
    for c, var in enumerate(variables):
        stacked = np.stack([f.values[c] for f in fields])
        stats[var] = (float(stacked.mean()), float(stacked.std()))
    return NormStats(stats)


def normalize(field: FieldTensor, stats: NormStats) -> FieldTensor:
    """(x - mean) / std per variable."""
    out = np.empty_like(field.values)
    for c, var in enumerate(field.variables):
        mean, std = stats.mean_std(var)
        out[c] = (field.values[c] - mean) / std
    return field.with_values(out)


def denormalize(field: FieldTensor, stats: NormStats) -> FieldTensor:
    """x * std + mean per variable; inverse of :func:`normalize`."""
    out = np.empty_like(field.values)
    for c, var in enumerate(field.variables):
        mean, std = stats.mean_std(var)
        out[c] = field.values[c] * std + mean
    return field.with_values(out)


def crop_region(global_field: FieldTensor, region: RegionSpec) -> FieldTensor:
    """Copy the region box out of a global field (global resolution)."""
    grid = global_field.grid
    region.validate_inside(grid.n_lat, grid.n_lon)
    rs, cs = region.row_slice(), region.col_slice()
    sub_grid = GridSpec(lats=grid.lats[rs].copy(), lons=grid.lons[cs].copy())
    return FieldTensor(sub_grid, global_field.values[:, rs, cs],
                       global_field.variables, global_field.timestamp)


# ---------------------------------------------------------------------------
# grid file format: raw little-endian float32 [C][lat][lon] + JSON sidecar
# ---------------------------------------------------------------------------

def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".json")


def save_field(field: FieldTensor, path) -> None:
    """Write payload (<f4, row-major) to ``path`` and a .json sidecar beside it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = field.values.astype("<f4")
    path.write_bytes(payload.tobytes(order="C"))
    sidecar = {
        "n_lat": field.grid.n_lat,
        "n_lon": field.grid.n_lon,
        "lats": field.grid.lats.tolist(),
        "lons": field.grid.lons.tolist(),
        "variables": list(field.variables),
        "timestamp": field.timestamp.isoformat(),
        "month": field.month,
    }
    _sidecar_path(path).write_text(json.dumps(sidecar, indent=2))


def load_field(path) -> FieldTensor:
    """Read a grid file pair written by :func:`save_field`."""
    path = Path(path)
    side_path = _sidecar_path(path)
    if not path.exists() or not side_path.exists():
        raise FieldError("missing-file", f"grid file or sidecar missing for {path}")
    try:
        side = json.loads(side_path.read_text())
    except json.JSONDecodeError as e:
        raise FieldError("malformed-header", f"sidecar is not valid JSON: {e}") from e
    required = {"n_lat", "n_lon", "lats", "lons", "variables", "timestamp", "month"}
    missing = required - side.keys()
    if missing:
        raise FieldError("malformed-header", f"sidecar missing keys {sorted(missing)}")

    n_lat, n_lon = int(side["n_lat"]), int(side["n_lon"])
    variables = list(side["variables"])
    raw = np.frombuffer(path.read_bytes(), dtype="<f4")
    expected = len(variables) * n_lat * n_lon
    if raw.size != expected:
        raise FieldError(
            "dimension-mismatch",
            f"payload holds {raw.size} floats, header implies {expected}")
    if not np.all(np.isfinite(raw)):
        raise FieldError("non-finite", "payload contains non-finite values")

    timestamp = datetime.fromisoformat(side["timestamp"])
    if int(side["month"]) != timestamp.month:
        raise FieldError(
            "month-mismatch",
            f"sidecar month {side['month']} inconsistent with timestamp "
            f"{side['timestamp']}")
    grid = GridSpec(lats=np.asarray(side["lats"]), lons=np.asarray(side["lons"]))
    if grid.n_lat != n_lat or grid.n_lon != n_lon:
        raise FieldError("malformed-header", "lats/lons lengths disagree with n_lat/n_lon")
    values = raw.reshape(len(variables), n_lat, n_lon)
    return FieldTensor(grid, values, variables, timestamp)
