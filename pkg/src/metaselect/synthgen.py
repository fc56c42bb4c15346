"""Synthetic lesion images with separately controllable shape and texture cues.

Malignant lesions get spiculated outlines and coarse, high-contrast texture;
benign ones smooth ellipses and fine, homogeneous texture.  Two corruptions
remove one cue each:

* shadow -- the lesion outline is smoothed and dilated (in the image and the
  mask) and a dark acoustic-shadow cone is cast below the lesion;
* noise  -- strong multiplicative speckle over the whole image.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage as ndi

from .dataio import ImageSample, ManifestRow, clean_mask, write_manifest, write_pgm


NOISE_LOG_STD = 0.8


@dataclass(frozen=True)
class GenConfig:
    count: int = 400
    size: int = 128
    malignant_fraction: float = 0.4
    shape_cue_strength: float = 1.0
    texture_cue_strength: float = 1.0
    p_shadow: float = 0.3
    p_noise: float = 0.3
    seed: int = 42
    n_sources: int = 1

    def __post_init__(self):
        if self.count < 8:
            raise ValueError("count >= 8 required")
        if self.size < 48:
            raise ValueError("size >= 48 required")
        for name in ("malignant_fraction", "shape_cue_strength", "texture_cue_strength", "p_shadow", "p_noise"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.n_sources < 1:
            raise ValueError("n_sources >= 1 required")


@dataclass(frozen=True, eq=False)
class SyntheticSample:
    sample: ImageSample
    shadowed: bool
    noisy: bool


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *key]))


def _labels(cfg: GenConfig) -> np.ndarray:
    n_mal = int(round(cfg.count * cfg.malignant_fraction))
    lab = np.zeros(cfg.count, dtype=int)
    lab[:n_mal] = 1
    return _rng(cfg.seed, 0xC1A55).permutation(lab)


def _outline(rng, label: int, cfg: GenConfig, shape_of) -> np.ndarray:
    """Polar radius function r(phi) rasterized to a boolean mask."""
    s = cfg.size
    h, w = shape_of
    cx = s / 2 + rng.uniform(-0.06, 0.06) * s
    cy = 0.4 * s + rng.uniform(-0.05, 0.05) * s
    r0 = rng.uniform(0.12, 0.18) * s
    aspect = rng.uniform(1.0, 1.5)
    rot = rng.uniform(0.0, math.pi)
    yy, xx = np.mgrid[:h, :w]
    dx, dy = xx - cx, yy - cy
    phi = np.arctan2(dy, dx)
    psi = phi - rot
    r_ell = r0 / np.sqrt(np.cos(psi) ** 2 + (aspect * np.sin(psi)) ** 2)

    # gentle lobulation for every lesion
    lob = np.zeros_like(phi)
    for _ in range(2):
        k = rng.integers(2, 5)
        lob += rng.uniform(0.0, 0.06) * np.sin(k * phi + rng.uniform(0, 2 * math.pi))

    spikes = np.zeros_like(phi)
    n_spikes = int(rng.integers(7, 13))
    phase = rng.uniform(0, 2 * math.pi)
    amp = rng.uniform(0.15, 0.5) * cfg.shape_cue_strength if label == 1 else 0.0
    if amp > 0:
        jitter = rng.uniform(0.6, 1.0, n_spikes)
        sector = ((phi - phase) % (2 * math.pi)) * n_spikes / (2 * math.pi)
        idx = np.floor(sector).astype(int) % n_spikes
        frac = sector - np.floor(sector)
        spikes = amp * jitter[idx] * np.maximum(0.0, np.cos(math.pi * (frac - 0.5))) ** 6
    radius = r_ell * (1.0 + lob + spikes)
    return np.hypot(dx, dy) <= radius


def _speckle_field(rng, shape, corr: float) -> np.ndarray:
    f = ndi.gaussian_filter(rng.standard_normal(shape), corr, mode="reflect")
    return f / (f.std() + 1e-12)


def generate_sample(index: int, label: int, cfg: GenConfig,
                    shadowed: bool | None = None, noisy: bool | None = None) -> SyntheticSample:
    """One sample; forcing ``shadowed``/``noisy`` yields twins that share every other draw."""
    rng = _rng(cfg.seed, index)
    u_shadow, u_noise = rng.random(), rng.random()
    shadowed = bool(u_shadow < cfg.p_shadow) if shadowed is None else bool(shadowed)
    noisy = bool(u_noise < cfg.p_noise) if noisy is None else bool(noisy)
    shape = (cfg.size, cfg.size)

    lesion = _outline(rng, label, cfg, shape)
    edge_sigma = 1.0
    if shadowed:
        smooth = ndi.gaussian_filter(lesion.astype(float), 0.05 * cfg.size) > 0.35
        lesion = ndi.binary_dilation(smooth, iterations=2)
        edge_sigma = 2.5

    ts = cfg.texture_cue_strength
    corr = 0.6 + 0.2 * rng.uniform(0.0, 1.0)
    amp = 14.0
    if label == 1:
        corr += 0.6 * ts * rng.uniform(0.2, 1.5)
        amp *= 1.0 + 0.25 * ts
    background = 140.0 + 18.0 * _speckle_field(rng, shape, 1.0)
    inside = 70.0 + rng.uniform(-8, 8) + amp * _speckle_field(rng, shape, corr)
    # soft falloff outside the lesion only, so in-mask pixels carry pure lesion texture
    alpha = np.maximum(lesion, ndi.gaussian_filter(lesion.astype(float), edge_sigma))
    img = alpha * inside + (1.0 - alpha) * background

    if shadowed:
        rows = np.flatnonzero(lesion.any(axis=1))
        cols = np.flatnonzero(lesion.any(axis=0))
        bottom = rows[-1] - 0.25 * (rows[-1] - rows[0])
        c_mid, half = 0.5 * (cols[0] + cols[-1]), 0.5 * (cols[-1] - cols[0])
        yy, xx = np.mgrid[: cfg.size, : cfg.size]
        below = np.clip((yy - bottom) / 4.0, 0.0, 1.0)
        width = half * (0.8 + 0.004 * np.maximum(yy - bottom, 0))
        across = np.clip((width - np.abs(xx - c_mid)) / 4.0, 0.0, 1.0)
        img = img * (1.0 - 0.6 * below * across * (1.0 - alpha))

    if noisy:
        z = _speckle_field(rng, shape, 1.0)
        img = img * np.exp(NOISE_LOG_STD * z - 0.5 * NOISE_LOG_STD**2)

    image = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    mask = clean_mask(lesion, f"syn{index}")
    sid = f"syn{index:05d}"
    source = f"synth{index % cfg.n_sources}"
    return SyntheticSample(ImageSample(sid, image, mask, int(label), source), shadowed, noisy)


def iter_samples(cfg: GenConfig):
    for i, lab in enumerate(_labels(cfg)):
        yield generate_sample(i, int(lab), cfg)


def generate(cfg: GenConfig, out_dir) -> Path:
    """Write PGM images/masks, ``manifest.csv`` and ``truth_tags.csv``; return the manifest path."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    rows, tags = [], []
    for syn in iter_samples(cfg):
        s = syn.sample
        img_p = out / "images" / f"{s.id}.pgm"
        msk_p = out / "masks" / f"{s.id}.pgm"
        write_pgm(img_p, s.image)
        write_pgm(msk_p, s.mask.astype(np.uint8) * 255)
        rows.append(ManifestRow(s.id, img_p, msk_p, s.label, s.source))
        tags.append((s.id, int(syn.shadowed), int(syn.noisy)))
    manifest = out / "manifest.csv"
    write_manifest(manifest, rows)
    with open(out / "truth_tags.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("id", "shadowed", "noisy"))
        w.writerows(tags)
    return manifest


def read_truth_tags(path) -> dict[str, tuple[bool, bool]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return {r["id"]: (r["shadowed"] == "1", r["noisy"] == "1") for r in csv.DictReader(fh)}


def config_dict(cfg: GenConfig) -> dict:
    return asdict(cfg)
