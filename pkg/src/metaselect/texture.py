"""GLCM texture statistics over the lesion region."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

LEVELS = (4, 16)
DISTANCES = (1, 5)
ANGLES = (0, 45, 90, 135)
STATISTICS = (
    "contrast",
    "correlation",
    "energy",
    "variance",
    "max_probability",
    "autocorrelation",
    "homogeneity",
)

# (dx, dy) unit offsets with y pointing down; scaled by distance (chessboard
# steps, so 45 degrees at distance 5 is (5, -5)).
ANGLE_OFFSETS = {0: (1, 0), 45: (1, -1), 90: (0, -1), 135: (-1, -1)}

TEXTURE_FEATURE_NAMES = tuple(
    f"{stat}_L{lv}_D{d}_A{a}"
    for stat, lv, d, a in product(STATISTICS, LEVELS, DISTANCES, ANGLES)
)

# statistics of the single-cell GLCM p[0, 0] = 1; also the fallback for
# specs with no valid pixel pairs
CONSTANT_STATS = np.array([0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0])


class GlcmError(ValueError):
    pass


@dataclass(frozen=True)
class GlcmSpec:
    levels: int
    distance: int
    angle: int

    def __post_init__(self):
        if self.angle not in ANGLE_OFFSETS:
            raise ValueError(f"angle must be one of {tuple(ANGLE_OFFSETS)}")
        if self.levels < 2 or self.distance < 1:
            raise ValueError("levels >= 2 and distance >= 1 required")

    @property
    def offset(self) -> tuple[int, int]:
        dx, dy = ANGLE_OFFSETS[self.angle]
        return dx * self.distance, dy * self.distance


ALL_SPECS = tuple(GlcmSpec(lv, d, a) for lv, d, a in product(LEVELS, DISTANCES, ANGLES))


@dataclass(frozen=True, eq=False)
class Glcm:
    matrix: np.ndarray
    valid_pairs: int


def quantize(image: np.ndarray, mask: np.ndarray, levels: int) -> np.ndarray:
    """Uniform min-max binning of the in-mask intensities; -1 outside the mask."""
    img = np.asarray(image, dtype=np.int64)
    m = np.asarray(mask, dtype=bool)
    if not m.any():
        raise ValueError("empty mask")
    vals = img[m]
    lo, hi = int(vals.min()), int(vals.max())
    q = np.full(img.shape, -1, dtype=np.int64)
    if hi == lo:
        q[m] = 0
    else:
        q[m] = np.minimum((vals - lo) * levels // (hi - lo), levels - 1)
    return q


def compute_glcm(qimage: np.ndarray, mask: np.ndarray, spec: GlcmSpec) -> Glcm:
    q = np.asarray(qimage)
    m = np.asarray(mask, dtype=bool)
    h, w = q.shape
    dx, dy = spec.offset
    # pair (r, c) -> (r + dy, c + dx); slice both ends to the overlap
    ra, rb = max(0, -dy), min(h, h - dy)
    ca, cb = max(0, -dx), min(w, w - dx)
    if ra >= rb or ca >= cb:
        raise GlcmError("no co-occurring pairs")
    a = q[ra:rb, ca:cb]
    b = q[ra + dy:rb + dy, ca + dx:cb + dx]
    ok = m[ra:rb, ca:cb] & m[ra + dy:rb + dy, ca + dx:cb + dx]
    n_pairs = int(ok.sum())
    if n_pairs == 0:
        raise GlcmError("no co-occurring pairs")
    L = spec.levels
    counts = np.bincount(a[ok] * L + b[ok], minlength=L * L).reshape(L, L)
    counts = counts + counts.T
    return Glcm(counts / (2.0 * n_pairs), n_pairs)


def glcm_statistics(glcm) -> np.ndarray:
    """The seven statistics, in ``STATISTICS`` order, of a symmetric normalized GLCM."""
    p = glcm.matrix if isinstance(glcm, Glcm) else np.asarray(glcm, dtype=float)
    L = p.shape[0]
    i, j = np.indices((L, L))
    mu = (i * p).sum()
    var = ((i - mu) ** 2 * p).sum()
    corr = ((i - mu) * (j - mu) * p).sum() / var if var > 1e-15 else 0.0
    return np.array([
        ((i - j) ** 2 * p).sum(),
        corr,
        (p * p).sum(),
        var,
        p.max(),
        (i * j * p).sum(),
        (p / (1.0 + np.abs(i - j))).sum(),
    ])


def compute_texture_features(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """112 GLCM features ordered as ``TEXTURE_FEATURE_NAMES``."""
    per_spec = {}
    for levels in LEVELS:
        q = quantize(image, mask, levels)
        for spec in ALL_SPECS:
            if spec.levels != levels:
                continue
            try:
                per_spec[spec] = glcm_statistics(compute_glcm(q, mask, spec))
            except GlcmError:
                per_spec[spec] = CONSTANT_STATS
    table = np.stack([per_spec[s] for s in ALL_SPECS], axis=1)  # (7, 16)
    return table.ravel()
