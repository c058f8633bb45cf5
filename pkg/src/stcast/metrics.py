"""Latitude-weighted forecast skill scores and geodesic track metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MetricsError
from .fields import GridSpec, compute_latitude_weights

EARTH_RADIUS_KM = 6371.0


@dataclass(frozen=True)
class SkillScore:
    variable: str
    lead_hours: int
    rmse: float
    acc: float


def _check_shapes(pred: np.ndarray, truth: np.ndarray, grid: GridSpec):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise MetricsError("shape-mismatch",
                           f"pred {pred.shape} vs truth {truth.shape}")
    if pred.shape != (grid.n_lat, grid.n_lon):
        raise MetricsError("shape-mismatch",
                           f"fields {pred.shape} do not match grid "
                           f"{grid.n_lat}x{grid.n_lon}")
    return pred, truth


def rmse_weighted(pred: np.ndarray, truth: np.ndarray, grid: GridSpec) -> float:
    """sqrt( sum_ij L_i (pred - truth)^2 / (n_lat * n_lon) )."""
    pred, truth = _check_shapes(pred, truth, grid)
    w = compute_latitude_weights(grid)[:, None]
    return float(np.sqrt(np.sum(w * (pred - truth) ** 2)
                         / (grid.n_lat * grid.n_lon)))


def acc_weighted(pred: np.ndarray, truth: np.ndarray, grid: GridSpec,
                 climatology: float | np.ndarray | None = None,
                 literal: bool = False) -> float:
    """Latitude-weighted anomaly correlation coefficient.

    Default mode centers both fields on a climatology (the truth's weighted
    mean when not supplied) and returns the usual pattern correlation in
    [-1, 1]. ``literal`` switches to the uncentered square-root form
    sqrt( sum L*p*t / (sum L*p^2 * sum L*t^2) ); that expression is not a
    correlation (a perfect forecast does not score 1) and yields NaN when the
    numerator is negative, but it is kept selectable for comparability.
    """
    pred, truth = _check_shapes(pred, truth, grid)
    w = compute_latitude_weights(grid)[:, None]
    if literal:
        num = np.sum(w * pred * truth)
        den = np.sum(w * pred ** 2) * np.sum(w * truth ** 2)
        if den <= 0.0:
            raise MetricsError("undefined-acc", "zero denominator in literal ACC")
        ratio = num / den
        return float(np.sqrt(ratio)) if ratio >= 0.0 else float("nan")

    if climatology is None:
        climatology = np.sum(w * truth) / (grid.n_lat * grid.n_lon)
    pa = pred - climatology
    ta = truth - climatology
    den = np.sqrt(np.sum(w * pa ** 2) * np.sum(w * ta ** 2))
    if den == 0.0:
        raise MetricsError("undefined-acc",
                           "zero anomaly variance: ACC is undefined")
    return float(np.sum(w * pa * ta) / den)


def haversine(p1: tuple, p2: tuple) -> float:
    """Great-circle distance in km between (lat, lon) points in degrees."""
    lat1, lon1 = p1
    lat2, lon2 = p2
    for lat in (lat1, lat2):
        if abs(lat) > 90.0:
            raise MetricsError("bad-latitude", f"latitude {lat} out of range")
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = phi2 - phi1
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    a = min(1.0, max(0.0, a))
    return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(a))


def mde(pred_track, obs_track) -> float:
    """Mean of pointwise great-circle distances between time-aligned tracks."""
    pred = list(pred_track)
    obs = list(obs_track)
    if not pred or not obs:
        raise MetricsError("empty-track", "tracks must be nonempty")
    if len(pred) != len(obs):
        raise MetricsError("length-mismatch",
                           f"track lengths differ: {len(pred)} vs {len(obs)}")
    total = 0.0
    for p, o in zip(pred, obs):
        total += haversine(_latlon(p), _latlon(o))
    return total / len(pred)


def _latlon(point) -> tuple:
    # accepts (lat, lon) pairs or objects with .lat/.lon (e.g. TrackPoint)
    if hasattr(point, "lat"):
        return (point.lat, point.lon)
    return (point[0], point[1])
