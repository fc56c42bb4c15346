"""Robust feature scaling and L1-penalized, class-weighted logistic regression."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

DEFAULT_LAMBDA = 0.01
# stop once an accepted step lowers the objective by less than this
DEFAULT_TOL = 1e-10
PROB_CLIP = 1e-9


class FitError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RobustScaler:
    medians: np.ndarray
    iqrs: np.ndarray

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        scale = np.where(self.iqrs == 0, 1.0, self.iqrs)
        return (X - self.medians) / scale

    @classmethod
    def identity(cls, n_features: int) -> "RobustScaler":
        return cls(np.zeros(n_features), np.ones(n_features))


def fit_scaler(X) -> RobustScaler:
    """Median (lower middle value for even n) and interquartile range per column."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise FitError("fit_scaler needs a 2-D array with at least 2 rows")
    n = X.shape[0]
    med = np.sort(X, axis=0)[(n - 1) // 2]
    q1, q3 = np.percentile(X, [25, 75], axis=0)  # linear interpolation
    return RobustScaler(med, q3 - q1)


def class_weights_from(y) -> tuple[float, float]:
    y = np.asarray(y)
    n = y.size
    n1 = int(np.count_nonzero(y == 1))
    n0 = n - n1
    if n0 == 0 or n1 == 0:
        raise FitError("both classes must be present to compute class weights")
    return n / (2.0 * n0), n / (2.0 * n1)


@dataclass(frozen=True, eq=False)
class LinearModel:
    weights: np.ndarray
    bias: float
    lam: float
    class_weights: tuple[float, float]
    scaler: RobustScaler
    feature_names: tuple[str, ...] = ()
    objective_history: np.ndarray = field(default=None, repr=False)

    def decision(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.weights.size:
            raise ValueError(f"expected {self.weights.size} features, got {X.shape[-1]}")
        return self.scaler.transform(X) @ self.weights + self.bias

    def predict_proba(self, X) -> np.ndarray:
        return np.clip(_sigmoid(self.decision(X)), PROB_CLIP, 1.0 - PROB_CLIP)

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "weights": self.weights.tolist(),
            "bias": float(self.bias),
            "lambda": float(self.lam),
            "class_weights": [float(c) for c in self.class_weights],
            "scaler": {"medians": self.scaler.medians.tolist(), "iqrs": self.scaler.iqrs.tolist()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LinearModel":
        sc = RobustScaler(np.asarray(d["scaler"]["medians"], float), np.asarray(d["scaler"]["iqrs"], float))
        return cls(np.asarray(d["weights"], float), float(d["bias"]), float(d["lambda"]),
                   tuple(d["class_weights"]), sc, tuple(d["feature_names"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def predict(model: LinearModel, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("predict expects a single feature vector")
    return float(model.predict_proba(x[None, :])[0])


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def _soft_threshold(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def smooth_loss(w, b, X, y, sw):
    """Weighted mean binary cross-entropy and its gradient w.r.t. (w, b)."""
    z = X @ w + b
    n = y.size
    loss = float(np.sum(sw * (np.logaddexp(0.0, z) - y * z)) / n)
    r = sw * (_sigmoid(z) - y) / n
    return loss, X.T @ r, float(r.sum())


def l1_logistic_objective(w, b, X, y, sw, lam) -> float:
    return smooth_loss(w, b, X, y, sw)[0] + lam * float(np.abs(w).sum())


def solve_l1_logistic(X, y, lam, sample_weight=None, max_iter=10000, tol=DEFAULT_TOL):
    """Proximal gradient (ISTA) with backtracking, started from zero.

    Returns ``(w, b, history)`` where ``history`` holds the full objective at
    the start and after every accepted step.  A step that would raise the
    objective (possible only through rounding) ends the iteration instead.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    sw = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    w, b = np.zeros(d), 0.0
    f, gw, gb = smooth_loss(w, b, X, y, sw)
    obj = f
    history = [obj]
    step = 1.0
    for _ in range(max_iter):
        while True:
            w_new = _soft_threshold(w - step * gw, step * lam)
            b_new = b - step * gb
            dw, db = w_new - w, b_new - b
            f_new, gw_new, gb_new = smooth_loss(w_new, b_new, X, y, sw)
            quad = f + gw @ dw + gb * db + (dw @ dw + db * db) / (2.0 * step)
            if f_new <= quad or step < 1e-20:
                break
            step *= 0.5
        obj_new = f_new + lam * float(np.abs(w_new).sum())
        if obj_new > obj:
            break
        decrease = obj - obj_new
        w, b, f, gw, gb, obj = w_new, b_new, f_new, gw_new, gb_new, obj_new
        history.append(obj)
        if decrease < tol:
            break
        step *= 1.25
    return w, b, np.asarray(history)


def fit_logistic(X, y, lam=DEFAULT_LAMBDA, class_weights=None, max_iter=10000, tol=DEFAULT_TOL,
                 scaler: RobustScaler | None = None, feature_names=()) -> LinearModel:
    """Fit on ``scaler.transform(X)`` (identity scaler when none is given).

    ``class_weights`` defaults to the balanced inverse-frequency weights.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise FitError("X must be (n_samples, n_features) matching y")
    if not np.all(np.isfinite(X)):
        raise FitError("non-finite feature value")
    if np.unique(y).size < 2:
        raise FitError("single-class labels; cannot fit a classifier")
    if not np.isin(y, (0, 1)).all():
        raise FitError("labels must be 0/1")
    if lam < 0:
        raise FitError("lambda must be >= 0")
    scaler = scaler if scaler is not None else RobustScaler.identity(X.shape[1])
    cw = tuple(class_weights) if class_weights is not None else class_weights_from(y)
    sw = np.where(y == 1, cw[1], cw[0])
    w, b, hist = solve_l1_logistic(scaler.transform(X), y, lam, sw, max_iter, tol)
    return LinearModel(w, b, float(lam), (float(cw[0]), float(cw[1])), scaler,
                       tuple(feature_names), hist)


def fit_classifier(X, y, lam=DEFAULT_LAMBDA, feature_names=(), **kw) -> LinearModel:
    """Robust scaler fitted on ``X`` followed by the weighted L1 logistic fit."""
    return fit_logistic(X, y, lam, scaler=fit_scaler(X), feature_names=feature_names, **kw)
