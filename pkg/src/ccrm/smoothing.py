"""Gaussian smoothing with reflective boundaries, used for landscapes and profiles.

Both filters delegate to :mod:`scipy.ndimage` with ``mode="reflect"``
(the half-sample symmetric extension ``d c b a | a b c d | d c b a``) and a
kernel truncated at four standard deviations.
"""

from __future__ import annotations

import numpy as np
from scipy.interpolate import make_interp_spline
from scipy.ndimage import gaussian_filter, gaussian_filter1d

TRUNCATE = 4.0


def smooth_1d(values, sigma: float) -> np.ndarray:
    """Gaussian-smooth a 1-D sequence; ``sigma`` is in samples.

    ``NaN`` entries (empty bins) are filled by normalized convolution: the
    smoothed values are divided by the smoothed indicator of valid entries.
    """
    v = np.asarray(values, dtype=float)
    if sigma <= 0:
        return v.copy()
    valid = np.isfinite(v)
    if valid.all():
        return gaussian_filter1d(v, sigma, mode="reflect", truncate=TRUNCATE)
    num = gaussian_filter1d(np.where(valid, v, 0.0), sigma, mode="reflect", truncate=TRUNCATE)
    den = gaussian_filter1d(valid.astype(float), sigma, mode="reflect", truncate=TRUNCATE)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / den, np.nan)


def smooth_2d(grid, sigma) -> np.ndarray:
    """Gaussian-smooth a 2-D grid; ``sigma`` is in cells, scalar or per axis."""
    g = np.asarray(grid, dtype=float)
    return gaussian_filter(g, sigma, mode="reflect", truncate=TRUNCATE)


def covariance_to_cells(cov, spacing) -> tuple[float, float]:
    """Per-axis standard deviation in cells for a diagonal covariance in data units."""
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (2, 2) or cov[0, 1] != 0 or cov[1, 0] != 0:
        raise ValueError("only diagonal 2x2 covariances are supported")
    sx, sy = np.sqrt(np.diag(cov))
    dx, dy = spacing
    return float(sx / dx), float(sy / dy)


def linear_spline(x, y):
    """First-order interpolating spline through ``(x, y)``."""
    return make_interp_spline(np.asarray(x, dtype=float), np.asarray(y, dtype=float), k=1)
