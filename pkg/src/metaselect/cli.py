"""Command-line entry point: ``metaselect {generate,features,run,report-plot}``."""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .dataio import load_manifest, load_sample
from .evalharness import GLCM, META, METHODS, MORPH, ORACLE, ExperimentConfig, auc, run_experiment
from .features import MORPH_FEATURE_NAMES, TEXTURE_FEATURE_NAMES, extract_features, write_feature_csv
from .linmodel import DEFAULT_LAMBDA
from .metalearn import CONVNET, DESCRIPTOR
from .synthgen import GenConfig, generate, iter_samples

log = logging.getLogger("metaselect")

REPORT = "report.json"
PREDICTIONS = "predictions.csv"
ROC_PLOT = "roc.svg"
AGREEMENT_PLOT = "agreement.svg"
MORPH_CSV = "morphology.csv"
TEXTURE_CSV = "texture.csv"

_GEN = GenConfig()


def _add_generator_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("synthetic data")
    g.add_argument("--count", type=int, default=_GEN.count, help="number of samples")
    g.add_argument("--size", type=int, default=_GEN.size, help="image side in pixels")
    g.add_argument("--malignant-fraction", type=float, default=_GEN.malignant_fraction,
                   help="share of malignant samples")
    g.add_argument("--shape-cue-strength", type=float, default=_GEN.shape_cue_strength,
                   help="spiculation amplitude scale in [0, 1]")
    g.add_argument("--texture-cue-strength", type=float, default=_GEN.texture_cue_strength,
                   help="texture coarseness contrast in [0, 1]")
    g.add_argument("--p-shadow", type=float, default=_GEN.p_shadow, help="probability of a shadowed outline")
    g.add_argument("--p-noise", type=float, default=_GEN.p_noise, help="probability of strong speckle")
    g.add_argument("--n-sources", type=int, default=_GEN.n_sources, help="number of synthetic sources")


def _gen_config(a) -> GenConfig:
    return GenConfig(count=a.count, size=a.size, malignant_fraction=a.malignant_fraction,
                     shape_cue_strength=a.shape_cue_strength, texture_cue_strength=a.texture_cue_strength,
                     p_shadow=a.p_shadow, p_noise=a.p_noise, seed=a.seed, n_sources=a.n_sources)


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="metaselect", description=__doc__, formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset", formatter_class=fmt)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=42, help="generator seed")
    _add_generator_flags(p)

    p = sub.add_parser("features", help="extract morphology and texture feature CSVs", formatter_class=fmt)
    p.add_argument("--manifest", required=True, help="manifest CSV")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker processes")

    p = sub.add_parser("run", help="nested cross-validated evaluation", formatter_class=fmt)
    p.add_argument("--manifest", default=None, help="manifest CSV; synthetic data is generated when omitted")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=42, help="seed for splits, selector and synthetic data")
    p.add_argument("--folds", type=int, default=8, help="cross-validation folds")
    p.add_argument("--lambda-shape", type=float, default=DEFAULT_LAMBDA, help="L1 strength, shape classifier")
    p.add_argument("--lambda-texture", type=float, default=DEFAULT_LAMBDA, help="L1 strength, texture classifier")
    p.add_argument("--backend", choices=(DESCRIPTOR, CONVNET), default=DESCRIPTOR, help="selector backend")
    p.add_argument("--patch-size", type=int, default=64, help="selector patch side S")
    p.add_argument("--selector-lambda", type=float, default=DEFAULT_LAMBDA, help="L1 strength, descriptor selector")
    p.add_argument("--lr", type=float, default=1e-4, help="conv-net Adam learning rate")
    p.add_argument("--epochs", type=int, default=200, help="conv-net epochs")
    p.add_argument("--plots", action="store_true", help=f"also write {ROC_PLOT} and {AGREEMENT_PLOT}")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker processes")
    _add_generator_flags(p)

    p = sub.add_parser("report-plot", help=f"draw {ROC_PLOT} and {AGREEMENT_PLOT} from {PREDICTIONS}",
                       formatter_class=fmt)
    p.add_argument("--predictions", required=True, help=f"{PREDICTIONS} written by 'run'")
    p.add_argument("--out", required=True, help="output directory")
    return parser


# -- subcommands -------------------------------------------------------------------

def cmd_generate(a) -> int:
    manifest = generate(_gen_config(a), a.out)
    print(f"wrote {a.count} samples to {manifest}")
    return 0


def _features_one(row):
    f = extract_features(load_sample(row))
    return f.morph, f.texture


def cmd_features(a) -> int:
    rows = list(load_manifest(a.manifest))
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    results = []
    if a.jobs > 1 and len(rows) > 1:
        with ProcessPoolExecutor(a.jobs) as ex:
            futures = [ex.submit(_features_one, r) for r in rows]
            for r, fut in zip(rows, futures):
                try:
                    results.append((r.id, fut.result()))
                except Exception as exc:
                    results.append((r.id, exc))
    else:
        for r in rows:
            try:
                results.append((r.id, _features_one(r)))
            except Exception as exc:
                results.append((r.id, exc))

    good = [(sid, v) for sid, v in results if not isinstance(v, Exception)]
    failed = [(sid, v) for sid, v in results if isinstance(v, Exception)]
    ids = [sid for sid, _ in good]
    write_feature_csv(out / MORPH_CSV, ids, [morph for _, (morph, _) in good], MORPH_FEATURE_NAMES)
    write_feature_csv(out / TEXTURE_CSV, ids, [tex for _, (_, tex) in good], TEXTURE_FEATURE_NAMES)
    for sid, exc in failed:
        print(f"error: sample {sid}: {exc}", file=sys.stderr)
    print(f"features for {len(ids)} samples written to {out}; {len(failed)} failed")
    return 1 if failed else 0


def cmd_run(a) -> int:
    cfg = ExperimentConfig(seed=a.seed, fold_count=a.folds, lambda_shape=a.lambda_shape,
                           lambda_texture=a.lambda_texture, backend=a.backend, patch_size=a.patch_size,
                           selector_lambda=a.selector_lambda, selector_lr=a.lr, selector_epochs=a.epochs,
                           jobs=max(1, a.jobs))
    if a.manifest:
        data = load_manifest(a.manifest)
        source = {"manifest": str(a.manifest)}
    else:
        gen = _gen_config(a)
        data = [s.sample for s in iter_samples(gen)]
        source = {"synthetic": vars(gen).copy()}
    report = run_experiment(data, cfg)
    report.config = {**report.config, **source}

    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / REPORT).write_text(report.to_json(), encoding="utf-8")
    report.write_predictions(out / PREDICTIONS)
    if a.plots and report.records:
        write_plots(report.records, out)

    print(report.table())
    for f in report.folds:
        if not f.valid:
            print(f"error: {f.error}", file=sys.stderr)
    for s in report.failed_samples:
        print(f"error: sample {s['id']}: {s['error']}", file=sys.stderr)
    return 0 if report.ok else 1


def _read_predictions(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def cmd_report_plot(a) -> int:
    recs = _read_predictions(a.predictions)
    if not recs:
        print("error: no predictions to plot", file=sys.stderr)
        return 1
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    write_plots(recs, out)
    return 0


# -- plots ---------------------------------------------------------------------------

def roc_points(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    """(fpr, tpr) of the threshold sweep, grouping tied scores."""
    s = np.asarray(scores, float)
    y = np.asarray(labels, int)
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    return np.r_[0.0, fp / max(1, (y == 0).sum())], np.r_[0.0, tp / max(1, (y == 1).sum())]


def _field(rec, name):
    return rec[name] if isinstance(rec, dict) else getattr(rec, name)


def write_plots(records, out: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "metaselect"
    y = np.array([int(_field(r, "label")) for r in records])
    cols = {GLCM: "p_texture", MORPH: "p_shape", META: "p_meta", ORACLE: "p_oracle"}

    fig, ax = plt.subplots(figsize=(5, 5))
    for m in METHODS:
        s = np.array([float(_field(r, cols[m])) for r in records])
        fpr, tpr = roc_points(s, y)
        ax.plot(fpr, tpr, label=f"{m} ({auc(s, y):.3f})")
    ax.plot([0, 1], [0, 1], color="0.7", lw=0.8, ls="--")
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.legend(loc="lower right", fontsize=8)
    fig.savefig(out / ROC_PLOT, metadata={"Date": None})
    plt.close(fig)

    ps = np.array([float(_field(r, "p_shape")) for r in records])
    pt = np.array([float(_field(r, "p_texture")) for r in records])
    fig, ax = plt.subplots(figsize=(5, 5))
    for lab, marker in ((0, "o"), (1, "^")):
        sel = y == lab
        ax.scatter(ps[sel], pt[sel], s=10, marker=marker, alpha=0.6, label="malignant" if lab else "benign")
    ax.set_xlabel("shape classifier output")
    ax.set_ylabel("texture classifier output")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.legend(loc="upper left", fontsize=8)
    fig.savefig(out / AGREEMENT_PLOT, metadata={"Date": None})
    plt.close(fig)


COMMANDS = {"generate": cmd_generate, "features": cmd_features, "run": cmd_run, "report-plot": cmd_report_plot}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
