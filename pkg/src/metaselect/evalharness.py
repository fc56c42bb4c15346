"""Cross-validated evaluation of the two base classifiers, the selector and the oracle."""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .dataio import DEV_TRAIN, META_TRAIN, TEST, ImageSample, Manifest, load_sample, make_split_plan
from .features import MORPH_FEATURE_NAMES, TEXTURE_FEATURE_NAMES, extract_features
from .linmodel import DEFAULT_LAMBDA, fit_classifier
from .metalearn import (
    DESCRIPTOR,
    Choice,
    SelectorConfig,
    build_meta_labels,
    classification_error,
    make_meta_input,
    recommend,
    train_selector,
)

log = logging.getLogger(__name__)

GLCM = "GLCM features"
MORPH = "Morphological features"
META = "Meta-learning"
ORACLE = "Oracle"
METHODS = (GLCM, MORPH, META, ORACLE)

PREDICTION_COLUMNS = ("id", "fold", "label", "p_shape", "p_texture", "choice", "confidence",
                      "p_meta", "oracle_choice", "p_oracle")


class MetricError(ValueError):
    pass


# -- metrics ----------------------------------------------------------------------

def auc(scores, labels) -> float:
    """Mann-Whitney AUC with ties counted as one half, via average ranks."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    n_pos = int(np.count_nonzero(y == 1))
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC needs both classes")
    ranks = rankdata(s)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def accuracy(scores, labels, threshold: float = 0.5) -> float:
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    if s.size == 0:
        raise MetricError("accuracy of an empty set")
    return float(np.mean((s > threshold).astype(int) == y))


def oracle_select(p_shape: float, p_texture: float, label: int) -> float:
    e_s = classification_error(p_shape, label)
    e_t = classification_error(p_texture, label)
    return p_texture if e_t < e_s else p_shape


def output_correlation(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or a.size != b.size:
        raise MetricError("correlation needs two equal-length series of >= 2 values")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise MetricError("correlation undefined for a zero-variance series")
    da, db = a - a.mean(), b - b.mean()
    r = float((da @ db) / np.sqrt((da @ da) * (db @ db)))
    return max(-1.0, min(1.0, r))


def mean_error(scores, labels) -> float:
    return float(np.mean(np.abs(np.asarray(scores, float) - np.asarray(labels, float))))


def method_metrics(records: Sequence["SampleRecord"]) -> dict:
    y = np.array([r.label for r in records])
    cols = {
        GLCM: [r.p_texture for r in records],
        MORPH: [r.p_shape for r in records],
        META: [r.p_meta for r in records],
        ORACLE: [r.p_oracle for r in records],
    }
    out = {}
    for name in METHODS:
        s = np.asarray(cols[name])
        out[name] = {"auc": auc(s, y), "accuracy": accuracy(s, y), "mean_error": mean_error(s, y)}
    return out


# -- experiment ---------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 42
    fold_count: int = 8
    lambda_shape: float = DEFAULT_LAMBDA
    lambda_texture: float = DEFAULT_LAMBDA
    backend: str = DESCRIPTOR
    patch_size: int = 64
    selector_lambda: float = DEFAULT_LAMBDA
    selector_lr: float = 1e-4
    selector_epochs: int = 200
    jobs: int = 1


@dataclass(frozen=True)
class SampleRecord:
    id: str
    fold: int
    label: int
    p_shape: float
    p_texture: float
    choice: str
    confidence: float
    p_meta: float
    oracle_choice: str
    p_oracle: float


@dataclass
class FoldResult:
    fold: int
    valid: bool = True
    error: str | None = None
    records: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    choice_counts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "fold": self.fold,
            "valid": self.valid,
            "error": self.error,
            "n_test": len(self.records),
            "metrics": self.metrics,
            "choices": self.choice_counts,
        }


@dataclass
class EvaluationReport:
    config: dict
    folds: list
    pooled: dict
    correlation: float | None
    choice_distribution: dict
    n_samples: int
    failed_samples: list = field(default_factory=list)

    @property
    def records(self) -> list:
        return [r for f in self.folds if f.valid for r in f.records]

    @property
    def ok(self) -> bool:
        return not self.failed_samples and all(f.valid for f in self.folds)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "n_samples": self.n_samples,
            "failed_samples": self.failed_samples,
            "methods": [{"method": m, **self.pooled.get(m, {})} for m in METHODS],
            "output_correlation": self.correlation,
            "selector_choices": self.choice_distribution,
            "folds": [f.to_dict() for f in self.folds],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def write_predictions(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(PREDICTION_COLUMNS)
            for r in self.records:
                w.writerow([getattr(r, c) if not isinstance(getattr(r, c), float) else repr(getattr(r, c))
                            for c in PREDICTION_COLUMNS])

    def table(self) -> str:
        lines = [f"{'Method':<24}{'AUC':>8}{'Accuracy':>10}"]
        for m in METHODS:
            if m in self.pooled:
                lines.append(f"{m:<24}{self.pooled[m]['auc']:>8.3f}{self.pooled[m]['accuracy']:>10.3f}")
        return "\n".join(lines)


def fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, fold]).generate_state(1)[0])


def _prepare(sample: ImageSample, patch_size: int):
    return extract_features(sample), make_meta_input(sample, patch_size)


def _run_fold(fold, plan, samples, feats, inputs, cfg: ExperimentConfig) -> FoldResult:
    res = FoldResult(fold)
    stage = "split"
    try:
        by_role = {role: [s for s in samples if plan.role(s.id, fold) == role]
                   for role in (DEV_TRAIN, META_TRAIN, TEST)}
        dev = by_role[DEV_TRAIN]
        y_dev = np.array([s.label for s in dev])

        stage = "fit shape classifier"
        shape_model = fit_classifier(np.stack([feats[s.id].morph for s in dev]), y_dev,
                                     cfg.lambda_shape, feature_names=MORPH_FEATURE_NAMES)
        stage = "fit texture classifier"
        tex_model = fit_classifier(np.stack([feats[s.id].texture for s in dev]), y_dev,
                                   cfg.lambda_texture, feature_names=TEXTURE_FEATURE_NAMES)

        stage = "meta-labels"
        meta = by_role[META_TRAIN]
        labels = build_meta_labels(shape_model, tex_model, meta, feats)
        stage = "train selector"
        sel_cfg = SelectorConfig(cfg.backend, cfg.selector_lambda, cfg.selector_lr, cfg.selector_epochs,
                                 fold_seed(cfg.seed, fold), cfg.patch_size)
        selector = train_selector(labels, [inputs[s.id] for s in meta], sel_cfg)

        stage = "evaluate"
        for s in by_role[TEST]:
            f = feats[s.id]
            p_s = float(shape_model.predict_proba(f.morph[None, :])[0])
            p_t = float(tex_model.predict_proba(f.texture[None, :])[0])
            choice, conf = recommend(selector, inputs[s.id])
            p_meta = p_t if choice == Choice.TEXTURE else p_s
            p_or = oracle_select(p_s, p_t, s.label)
            or_choice = Choice.TEXTURE if (p_or == p_t and p_t != p_s) else Choice.SHAPE
            res.records.append(SampleRecord(s.id, fold, s.label, p_s, p_t, choice.name, conf, p_meta,
                                            or_choice.name, p_or))
        res.metrics = method_metrics(res.records)
        res.choice_counts = {c.name: sum(r.choice == c.name for r in res.records) for c in Choice}
    except Exception as exc:
        log.error("fold %d failed at stage '%s': %s", fold, stage, exc)
        res.valid = False
        res.error = f"fold {fold}, stage '{stage}': {exc}"
        res.records = []
    return res


def _load_all(manifest: Manifest):
    samples, failed = [], []
    for row in manifest:
        try:
            samples.append(load_sample(row))
        except Exception as exc:
            failed.append({"id": row.id, "error": str(exc)})
    return samples, failed


def run_experiment(data, config: ExperimentConfig = ExperimentConfig()) -> EvaluationReport:
    """Nested cross-validation over a manifest or a list of ``ImageSample``.

    Each fold fits both classifiers on DEV_TRAIN, derives meta-labels and
    trains the selector on META_TRAIN, and scores all four methods on TEST.
    """
    if isinstance(data, Manifest):
        samples, failed = _load_all(data)
    else:
        samples, failed = list(data), []

    feats, inputs, ok = {}, {}, []
    if config.jobs > 1 and len(samples) > 1:
        with ProcessPoolExecutor(config.jobs) as ex:
            futures = [ex.submit(_prepare, s, config.patch_size) for s in samples]
            results = []
            for s, fut in zip(samples, futures):
                try:
                    results.append((s, fut.result()))
                except Exception as exc:
                    failed.append({"id": s.id, "error": str(exc)})
    else:
        results = []
        for s in samples:
            try:
                results.append((s, _prepare(s, config.patch_size)))
            except Exception as exc:
                failed.append({"id": s.id, "error": str(exc)})
    for s, (f, mi) in results:
        feats[s.id], inputs[s.id] = f, mi
        ok.append(s)

    plan = make_split_plan([(s.id, s.label, s.source) for s in ok], config.fold_count, config.seed)
    if config.jobs > 1:
        with ProcessPoolExecutor(min(config.jobs, config.fold_count)) as ex:
            folds = list(ex.map(_run_fold, range(config.fold_count), [plan] * config.fold_count,
                                [ok] * config.fold_count, [feats] * config.fold_count,
                                [inputs] * config.fold_count, [config] * config.fold_count))
    else:
        folds = [_run_fold(k, plan, ok, feats, inputs, config) for k in range(config.fold_count)]

    pooled_records = [r for f in folds if f.valid for r in f.records]
    pooled, corr, choices = {}, None, {}
    if pooled_records:
        pooled = method_metrics(pooled_records)
        try:
            corr = output_correlation([r.p_shape for r in pooled_records], [r.p_texture for r in pooled_records])
        except MetricError:
            corr = None
        choices = {c.name: sum(r.choice == c.name for r in pooled_records) for c in Choice}

    cfg = asdict(config)
    cfg.pop("jobs")  # execution detail; must not change the report bytes
    return EvaluationReport(cfg, folds, pooled, corr, choices, len(samples), failed)
