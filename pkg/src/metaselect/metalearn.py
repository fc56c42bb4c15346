"""Meta-labels from per-image classification error and the SHAPE/TEXTURE selector."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Mapping, Sequence

import numpy as np
from scipy import ndimage as ndi

from . import convnet
from .dataio import ImageSample
from .linmodel import FitError, LinearModel, class_weights_from, fit_classifier
from .morphology import GeometryError, trace_geometry

log = logging.getLogger(__name__)

DESCRIPTOR_NAMES = (
    "border_gradient",
    "shadow",
    "local_noise",
    "lesion_contrast",
    "solidity",
    "log_area",
)
DESCRIPTOR = "DESCRIPTOR"
CONVNET = "CONVNET"
CONSTANT = "CONSTANT"
CONST_EPS = 1e-6
TIE_TOL = 1e-12
CROP_PAD = 0.2
RING_WIDTH = 10


class Choice(IntEnum):
    SHAPE = 0
    TEXTURE = 1


def classification_error(p: float, c: int) -> float:
    return abs(float(p) - float(c))


@dataclass(frozen=True)
class MetaLabel:
    id: str
    e_shape: float
    e_texture: float
    target: Choice
    tie: bool


def meta_label(sid: str, e_shape: float, e_texture: float) -> MetaLabel:
    tie = abs(e_shape - e_texture) < TIE_TOL
    target = Choice.TEXTURE if (e_texture < e_shape and not tie) else Choice.SHAPE
    return MetaLabel(sid, float(e_shape), float(e_texture), target, tie)


def build_meta_labels(shape_model: LinearModel, texture_model: LinearModel,
                      samples: Sequence[ImageSample], features: Mapping | None = None) -> list[MetaLabel]:
    """Label each META_TRAIN sample with the classifier of smaller error.

    ``features`` maps sample id to an object with ``morph`` and ``texture``
    vectors; missing entries are extracted on the fly.
    """
    from .features import extract_features

    labels = []
    for s in samples:
        # extract_features errors already carry the sample id
        f = features[s.id] if features is not None and s.id in features else extract_features(s)
        p_shape = float(shape_model.predict_proba(f.morph[None, :])[0])
        p_tex = float(texture_model.predict_proba(f.texture[None, :])[0])
        labels.append(meta_label(s.id, classification_error(p_shape, s.label),
                                 classification_error(p_tex, s.label)))
    return labels


# -- meta inputs ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MetaInput:
    patch: np.ndarray         # (S, S) in [0, 1]
    descriptors: np.ndarray   # DESCRIPTOR_NAMES order


def crop_box(mask: np.ndarray, pad: float = CROP_PAD) -> tuple[int, int, int, int]:
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    r0, r1, c0, c1 = rows[0], rows[-1] + 1, cols[0], cols[-1] + 1
    pr, pc = int(math.ceil(pad * (r1 - r0))), int(math.ceil(pad * (c1 - c0)))
    h, w = mask.shape
    return max(0, r0 - pr), max(0, c0 - pc), min(h, r1 + pr), min(w, c1 + pc)


def resize_bilinear(img: np.ndarray, size: int) -> np.ndarray:
    h, w = img.shape
    ys = (np.arange(size) + 0.5) * h / size - 0.5
    xs = (np.arange(size) + 0.5) * w / size - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return ndi.map_coordinates(img.astype(float), [yy, xx], order=1, mode="nearest")


def descriptors(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Appearance cues on an (already cropped) image/mask pair."""
    img = image.astype(float)
    m = mask.astype(bool)
    rim = m & ~ndi.binary_erosion(m, border_value=0)
    gy, gx = np.gradient(img)
    border_gradient = float(np.hypot(gx, gy)[rim].mean())

    rows = np.flatnonzero(m.any(axis=1))
    cols = np.flatnonzero(m.any(axis=0))
    band = img[rows[-1] + 1:]
    shadow = 0.0
    if band.shape[0] > 0:
        under = band[:, cols[0]:cols[-1] + 1]
        flank = np.concatenate([band[:, :cols[0]].ravel(), band[:, cols[-1] + 1:].ravel()])
        if under.size and flank.size:
            # positive when the region under the lesion is darker than its flanks
            shadow = float(flank.mean() - under.mean())

    mu = ndi.uniform_filter(img, 3, mode="reflect")
    mu2 = ndi.uniform_filter(img * img, 3, mode="reflect")
    local_sd = np.sqrt(np.maximum(mu2 - mu * mu, 0.0))
    local_noise = float(np.median(local_sd[m]))

    ring = ndi.binary_dilation(m, iterations=RING_WIDTH) & ~m
    contrast = float(img[m].mean() - img[ring].mean()) if ring.any() else 0.0

    area = float(m.sum())
    try:
        # same hull as the shape features, so solidity = 1 - nrv
        solidity = min(1.0, area / trace_geometry(m).hull_area)
    except GeometryError:
        solidity = 1.0
    return np.array([border_gradient, shadow, local_noise, contrast, solidity, math.log(area)])


def make_meta_input(sample: ImageSample, size: int = 64) -> MetaInput:
    r0, c0, r1, c1 = crop_box(sample.mask)
    img = sample.image[r0:r1, c0:c1]
    msk = sample.mask[r0:r1, c0:c1]
    patch = np.clip(resize_bilinear(img, size) / 255.0, 0.0, 1.0)
    return MetaInput(patch, descriptors(img, msk))


# -- selectors ------------------------------------------------------------------

@dataclass(frozen=True)
class SelectorConfig:
    backend: str = DESCRIPTOR
    lam: float = 0.01          # descriptor backend L1 strength
    lr: float = 1e-4           # conv-net Adam learning rate
    epochs: int = 200
    seed: int = 0
    patch_size: int = 64


@dataclass(eq=False)
class MetaSelector:
    backend: str
    config: SelectorConfig
    model: LinearModel | None = None
    params: dict | None = None
    constant: Choice | None = None
    training_curve: np.ndarray | None = field(default=None, repr=False)

    def confidence(self, inp: MetaInput) -> float:
        """Probability that TEXTURE is the better classifier."""
        if self.backend == CONSTANT:
            return 0.5 + CONST_EPS if self.constant == Choice.TEXTURE else 0.5 - CONST_EPS
        if self.backend == DESCRIPTOR:
            return float(self.model.predict_proba(inp.descriptors[None, :])[0])
        logit = convnet.forward(self.params, inp.patch[None, None, :, :])[0]
        return float(np.clip(0.5 * (1.0 + math.tanh(0.5 * logit)), 1e-9, 1 - 1e-9))

    def to_json(self) -> str:
        d = {"backend": self.backend, "config": self.config.__dict__}
        if self.backend == CONSTANT:
            d["constant"] = self.constant.name
        elif self.backend == DESCRIPTOR:
            d["model"] = self.model.to_dict()
            d["descriptor_names"] = list(DESCRIPTOR_NAMES)
        else:
            raise ValueError("conv-net selectors serialize with to_blob()")
        return json.dumps(d, indent=1)

    def to_blob(self) -> bytes:
        if self.backend != CONVNET:
            raise ValueError("only conv-net selectors have a parameter blob")
        return convnet.save_blob(self.params, {"seed": self.config.seed, "config": self.config.__dict__})

    @classmethod
    def from_json(cls, text: str) -> "MetaSelector":
        d = json.loads(text)
        cfg = SelectorConfig(**d["config"])
        if d["backend"] == CONSTANT:
            return cls(CONSTANT, cfg, constant=Choice[d["constant"]])
        return cls(DESCRIPTOR, cfg, model=LinearModel.from_dict(d["model"]))

    @classmethod
    def from_blob(cls, data: bytes) -> "MetaSelector":
        params, header = convnet.load_blob(data)
        return cls(CONVNET, SelectorConfig(**header["config"]), params=params)


def train_selector(meta_labels: Sequence[MetaLabel], meta_inputs: Sequence[MetaInput],
                   config: SelectorConfig = SelectorConfig()) -> MetaSelector:
    y = np.array([int(m.target) for m in meta_labels])
    if len(y) != len(meta_inputs):
        raise ValueError("meta_labels and meta_inputs differ in length")
    counts = np.bincount(y, minlength=2)
    if counts.min() == 0 or (config.backend == DESCRIPTOR and counts.min() < 2):
        majority = Choice(int(np.argmax(counts)))
        log.warning("meta-labels too one-sided (%s); using constant %s selector", counts.tolist(), majority.name)
        return MetaSelector(CONSTANT, config, constant=majority)

    if config.backend == DESCRIPTOR:
        X = np.stack([m.descriptors for m in meta_inputs])
        try:
            # unweighted: the selector should track the per-sample majority of better choices
            model = fit_classifier(X, y, config.lam, feature_names=DESCRIPTOR_NAMES,
                                   class_weights=(1.0, 1.0))
        except FitError:
            majority = Choice(int(np.argmax(counts)))
            return MetaSelector(CONSTANT, config, constant=majority)
        return MetaSelector(DESCRIPTOR, config, model=model)

    if config.backend == CONVNET:
        x = np.stack([m.patch for m in meta_inputs])[:, None, :, :]
        cw = class_weights_from(y)
        sw = np.where(y == 1, cw[1], cw[0])
        params, curve = convnet.train(x, y, sw, lr=config.lr, epochs=config.epochs, seed=config.seed)
        return MetaSelector(CONVNET, config, params=params, training_curve=curve)

    raise ValueError(f"unknown selector backend {config.backend!r}")


def recommend(selector: MetaSelector, meta_input: MetaInput) -> tuple[Choice, float]:
    conf = selector.confidence(meta_input)
    return (Choice.TEXTURE if conf > 0.5 else Choice.SHAPE), conf


def select_and_predict(selector: MetaSelector, shape_model: LinearModel, texture_model: LinearModel,
                       sample: ImageSample, features=None, meta_input: MetaInput | None = None):
    """Final malignancy probability from the recommended classifier, plus the choice."""
    if features is None:
        from .features import extract_features
        features = extract_features(sample)
    if meta_input is None:
        meta_input = make_meta_input(sample, selector.config.patch_size)
    choice, conf = recommend(selector, meta_input)
    if choice == Choice.TEXTURE:
        p = float(texture_model.predict_proba(features.texture[None, :])[0])
    else:
        p = float(shape_model.predict_proba(features.morph[None, :])[0])
    return p, choice, conf
