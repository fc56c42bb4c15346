"""Per-sample feature extraction shared by the experiment harness and the CLI."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dataio import ImageSample
from .morphology import MORPH_FEATURE_NAMES, morph_features
from .texture import TEXTURE_FEATURE_NAMES, compute_texture_features


class FeatureError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SampleFeatures:
    id: str
    morph: np.ndarray
    texture: np.ndarray


def extract_features(sample: ImageSample) -> SampleFeatures:
    try:
        morph = morph_features(sample.mask)
        tex = compute_texture_features(sample.image, sample.mask)
    except Exception as exc:
        raise FeatureError(f"{sample.id}: feature extraction failed: {exc}") from exc
    if not (np.all(np.isfinite(morph)) and np.all(np.isfinite(tex))):
        raise FeatureError(f"{sample.id}: non-finite feature value")
    return SampleFeatures(sample.id, morph, tex)


def write_feature_csv(path, ids, matrix, names) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("id",) + tuple(names))
        for sid, row in zip(ids, matrix):
            w.writerow([sid] + [repr(float(v)) for v in row])


def read_feature_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        ids, rows = [], []
        for rec in reader:
            ids.append(rec[0])
            rows.append([float(v) for v in rec[1:]])
    return ids, np.asarray(rows, dtype=float).reshape(len(ids), len(header) - 1), tuple(header[1:])


__all__ = [
    "MORPH_FEATURE_NAMES",
    "TEXTURE_FEATURE_NAMES",
    "FeatureError",
    "SampleFeatures",
    "extract_features",
    "write_feature_csv",
    "read_feature_csv",
]
