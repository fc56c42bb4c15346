"""Contour geometry and the 15 morphological lesion descriptors.

Coordinates follow the image convention: ``x`` is the column index, ``y`` the
row index (pointing down).  Orientation angles are reported counter-clockwise
from the +x axis as seen on screen, in degrees within [0, 180).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage as ndi
from scipy.ndimage import gaussian_filter1d
from scipy.spatial import ConvexHull
from skimage import measure
from skimage.morphology import thin

MORPH_FEATURE_NAMES = (
    "depth_to_width",
    "area",
    "circularity",
    "roundness",
    "nrv",
    "overlap_ratio",
    "convexity",
    "orientation",
    "axis_ratio",
    "ens",
    "enc",
    "nrl_mean",
    "nrl_std",
    "area_ratio",
    "roughness",
)

# Gaussian smoothing (in contour vertices) applied before measuring length;
# removes the staircase overestimate of digital boundaries.
CONTOUR_SMOOTHING = 1.0
# roughness compares radial lengths one 1/RADIAL_SAMPLES-th of the perimeter apart
RADIAL_SAMPLES = 32


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Ellipse:
    cx: float
    cy: float
    major: float   # semi-axis
    minor: float   # semi-axis
    orientation: float  # degrees in [0, 180)

    @property
    def perimeter(self) -> float:
        """Ramanujan's approximation."""
        a, b = self.major, self.minor
        return math.pi * (3 * (a + b) - math.sqrt((3 * a + b) * (a + 3 * b)))

    def raster(self, shape) -> np.ndarray:
        yy, xx = np.mgrid[: shape[0], : shape[1]]
        dx = xx - self.cx
        dy = -(yy - self.cy)  # y up
        t = math.radians(self.orientation)
        u = dx * math.cos(t) + dy * math.sin(t)
        v = -dx * math.sin(t) + dy * math.cos(t)
        return (u / self.major) ** 2 + (v / self.minor) ** 2 <= 1.0


@dataclass(frozen=True, eq=False)
class ContourGeometry:
    mask: np.ndarray          # filled lesion region
    boundary: np.ndarray      # (N, 2) closed contour vertices (x, y), last != first
    area: float
    perimeter: float
    centroid: tuple[float, float]
    mu20: float
    mu02: float
    mu11: float
    hull: np.ndarray          # (M, 2) convex hull of the smoothed outline, counter-clockwise
    hull_area: float
    hull_perimeter: float
    ellipse: Ellipse
    radial: np.ndarray        # centroid-to-vertex distances
    arclength: np.ndarray     # arc position of each smoothed vertex along the closed outline
    bbox: tuple[int, int, int, int]  # row0, col0, row1, col1 (exclusive)


def _polygon_length(pts: np.ndarray) -> float:
    d = np.diff(np.vstack([pts, pts[:1]]), axis=0)
    return float(np.hypot(d[:, 0], d[:, 1]).sum())


def _outer_contour(mask: np.ndarray) -> np.ndarray:
    # Iso-line at 0.5 through edge midpoints; 'high' joins diagonal neighbours,
    # matching 8-connectivity of the lesion region.
    padded = np.pad(mask, 1).astype(float)
    contours = measure.find_contours(padded, 0.5, fully_connected="high")
    c = max(contours, key=len)
    if np.allclose(c[0], c[-1]):
        c = c[:-1]
    xy = np.column_stack([c[:, 1] - 1.0, c[:, 0] - 1.0])
    return xy


def trace_geometry(mask: np.ndarray) -> ContourGeometry:
    """Trace the lesion outline and compute region moments, hull and ellipse."""
    m = ndi.binary_fill_holes(np.asarray(mask, dtype=bool))
    if not m.any():
        raise GeometryError("empty mask")
    rows = np.flatnonzero(m.any(axis=1))
    cols = np.flatnonzero(m.any(axis=0))
    r0, r1, c0, c1 = rows[0], rows[-1] + 1, cols[0], cols[-1] + 1
    if r1 - r0 < 2 or c1 - c0 < 2:
        raise GeometryError("degenerate region (width or height of 1 px)")

    yy, xx = np.nonzero(m)
    area = float(yy.size)
    cx, cy = xx.mean(), yy.mean()
    dx, dy = xx - cx, yy - cy
    mu20 = float((dx * dx).mean())
    mu02 = float((dy * dy).mean())
    mu11 = float((dx * dy).mean())
    # eigen-decomposition of the 2x2 covariance in closed form
    half_tr = 0.5 * (mu20 + mu02)
    disc = math.hypot(0.5 * (mu20 - mu02), mu11)
    lam1, lam2 = half_tr + disc, half_tr - disc
    if lam2 <= 1e-12:
        raise GeometryError("degenerate region (collinear pixels)")
    # y axis flipped so angles read counter-clockwise on screen
    theta = math.degrees(0.5 * math.atan2(-2.0 * mu11, mu20 - mu02)) % 180.0
    ellipse = Ellipse(cx, cy, 2.0 * math.sqrt(lam1), 2.0 * math.sqrt(lam2), theta)

    boundary = _outer_contour(m)
    smooth = gaussian_filter1d(boundary, CONTOUR_SMOOTHING, axis=0, mode="wrap")
    perimeter = _polygon_length(smooth)
    hull = ConvexHull(smooth)

    radial = np.hypot(smooth[:, 0] - cx, smooth[:, 1] - cy)
    steps = np.hypot(*np.diff(np.vstack([smooth, smooth[:1]]), axis=0).T)
    arclength = np.r_[0.0, np.cumsum(steps)[:-1]]
    return ContourGeometry(
        mask=m,
        boundary=boundary,
        area=area,
        perimeter=perimeter,
        centroid=(cx, cy),
        mu20=mu20,
        mu02=mu02,
        mu11=mu11,
        hull=hull.points[hull.vertices],
        hull_area=float(hull.volume),
        hull_perimeter=float(hull.area),
        ellipse=ellipse,
        radial=radial,
        arclength=arclength,
        bbox=(int(r0), int(c0), int(r1), int(c1)),
    )


def lagged_roughness(values: np.ndarray, s: np.ndarray, period: float, lag: float) -> float:
    """Mean of |f(t) - f(t + lag)| over one period of a closed piecewise-linear curve.

    ``f`` interpolates ``values`` at arc positions ``s``.  The integral is
    evaluated exactly between breakpoints, so the result does not depend on
    where the contour starts.
    """
    knots = np.unique(np.r_[s, (s - lag) % period, 0.0, period])
    knots = knots[(knots >= 0.0) & (knots <= period)]
    h = (np.interp(knots, s, values, period=period)
         - np.interp((knots + lag) % period, s, values, period=period))
    ha, hb, w = h[:-1], h[1:], np.diff(knots)
    same = ha * hb >= 0
    denom = np.where(same, 1.0, np.abs(ha) + np.abs(hb))
    seg = np.where(same, 0.5 * (np.abs(ha) + np.abs(hb)), 0.5 * (ha * ha + hb * hb) / denom) * w
    return float(seg.sum() / period)


def skeleton_length(mask: np.ndarray) -> float:
    """Pixel count of the thinned region, averaged over the four 90-degree rotations.

    Thinning is sensitive to scan direction; averaging the four rotated runs
    makes the length exactly invariant to grid rotations.
    """
    m = np.asarray(mask, dtype=bool)
    counts = [int(thin(np.rot90(m, k)).sum()) for k in range(4)]
    return sum(counts) / 4.0


def compute_morph_features(geom: ContourGeometry) -> np.ndarray:
    r0, c0, r1, c1 = geom.bbox
    height, width = r1 - r0, c1 - c0
    A, P = geom.area, geom.perimeter
    ell = geom.ellipse
    p_ell = ell.perimeter

    e_mask = ell.raster(geom.mask.shape)
    inter = np.count_nonzero(e_mask & geom.mask)
    union = np.count_nonzero(e_mask | geom.mask)

    d = geom.radial / geom.radial.max()
    mean = d.mean()
    n = d.size

    values = {
        "depth_to_width": height / width,
        "area": A,
        "circularity": 4.0 * math.pi * A / P**2,
        "roundness": 4.0 * A / (math.pi * max(height, width) ** 2),
        # a convex digital region can have hull area marginally below its pixel count
        "nrv": max(geom.hull_area - A, 0.0) / geom.hull_area,
        "overlap_ratio": inter / union,
        "convexity": geom.hull_perimeter / P,
        "orientation": ell.orientation,
        "axis_ratio": ell.major / ell.minor,
        "ens": skeleton_length(geom.mask) / p_ell,
        "enc": P / p_ell,
        "nrl_mean": mean,
        "nrl_std": d.std(),
        "area_ratio": (d[d > mean] - mean).sum() / (n * mean),
        "roughness": lagged_roughness(d, geom.arclength, P, P / RADIAL_SAMPLES),
    }
    return np.array([float(values[k]) for k in MORPH_FEATURE_NAMES])


def morph_features(mask: np.ndarray) -> np.ndarray:
    return compute_morph_features(trace_geometry(mask))
