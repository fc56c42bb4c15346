"""Independent reference implementations shared by the module tests and the acceptance suite."""
from collections import Counter

import numpy as np
from scipy.optimize import minimize

from metaselect import convnet
from metaselect.dataio import ROLES

OFFSETS = {0: (1, 0), 45: (1, -1), 90: (0, -1), 135: (-1, -1)}

LAYERS = {
    "conv0": ("conv0.w", "conv0.b"),
    "conv1": ("conv1.w", "conv1.b"),
    "conv2": ("conv2.w", "conv2.b"),
    "dense": ("dense.w", "dense.b"),
}


def brute_glcm(q, mask, levels, distance, angle):
    """Independent oracle: visit every pixel pair and count in-mask co-occurrences."""
    ux, uy = OFFSETS[angle]
    dx, dy = ux * distance, uy * distance
    h, w = q.shape
    counts = np.zeros((levels, levels), dtype=np.int64)
    n = 0
    for r in range(h):
        for c in range(w):
            r2, c2 = r + dy, c + dx
            if 0 <= r2 < h and 0 <= c2 < w and mask[r, c] and mask[r2, c2]:
                counts[q[r, c], q[r2, c2]] += 1
                counts[q[r2, c2], q[r, c]] += 1
                n += 1
    return counts, n


def oracle_l1_logistic(X, y, sw, lam):
    """Independent solver: split w = u - v with u, v >= 0 makes the problem smooth
    and bound-constrained; solved by L-BFGS-B to near machine precision."""
    n, d = X.shape

    def fg(theta):
        u, v, b = theta[:d], theta[d:2 * d], theta[-1]
        z = X @ (u - v) + b
        # numerically stable log(1 + e^z) and sigmoid
        lse = np.where(z > 0, z + np.log1p(np.exp(-np.abs(z))), np.log1p(np.exp(-np.abs(z))))
        sig = np.where(z >= 0, 1 / (1 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1 + np.exp(-np.abs(z))))
        f = np.sum(sw * (lse - y * z)) / n + lam * (u.sum() + v.sum())
        r = sw * (sig - y) / n
        g = X.T @ r
        return f, np.r_[g + lam, -g + lam, r.sum()]

    bounds = [(0, None)] * (2 * d) + [(None, None)]
    res = minimize(fg, np.zeros(2 * d + 1), jac=True, method="L-BFGS-B", bounds=bounds,
                   options={"ftol": 1e-16, "gtol": 1e-12, "maxiter": 50000, "maxfun": 100000})
    return res.fun, res.x[:d] - res.x[d:2 * d], res.x[-1]


def random_instance(seed, n=20, d=3):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    beta = rng.standard_normal(d)
    y = (X @ beta + 0.8 * rng.standard_normal(n) > 0).astype(int)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    return X, y


def numeric_grad(params, key, idx, x, y, sw, h=1e-6):
    orig = params[key][idx]
    params[key][idx] = orig + h
    up = convnet.loss_and_grads(params, x, y, sw)[0]
    params[key][idx] = orig - h
    down = convnet.loss_and_grads(params, x, y, sw)[0]
    params[key][idx] = orig
    return (up - down) / (2 * h)


def gradient_check(seed=0, per_layer=20, size=16, n=4):
    """Worst relative error per layer over ``per_layer`` sampled parameters."""
    rng = np.random.default_rng(seed)
    params = convnet.init_params(seed)
    for k in params:
        if k.endswith(".b"):
            params[k] = rng.normal(0, 0.1, params[k].shape)  # non-zero biases exercise every path
    x = rng.random((n, 1, size, size))
    y = np.array([0, 1, 1, 0][:n], float)
    sw = rng.uniform(0.5, 2.0, n)
    _, grads = convnet.loss_and_grads(params, x, y, sw)
    worst = {}
    for layer, keys in LAYERS.items():
        slots = [(k, np.unravel_index(i, params[k].shape)) for k in keys for i in range(params[k].size)]
        pick = rng.choice(len(slots), size=min(per_layer, len(slots)), replace=False)
        errs = []
        for p in pick:
            k, idx = slots[p]
            a, num = grads[k][idx], numeric_grad(params, k, idx, x, y, sw)
            errs.append(abs(a - num) / max(abs(a), abs(num), 1e-7))
        worst[layer] = (len(errs), max(errs))
    return worst


def pair_auc(scores, labels):
    """O(n^2) oracle: wins plus half ties over every positive-negative pair."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


def protocol_samples(seed=0, n_mal=302, n_ben=444, n_sources=3):
    rng = np.random.default_rng(seed)
    labels = np.array([1] * n_mal + [0] * n_ben)
    rng.shuffle(labels)
    return [(f"s{i:04d}", int(lab), f"src{i % n_sources}") for i, lab in enumerate(labels)]


def assert_stratified(plan, samples):
    n = len(samples)
    strata = Counter((lab, src) for _, lab, src in samples)
    key = {sid: (lab, src) for sid, lab, src in samples}
    for k in range(plan.fold_count):
        seen = set()
        for role in ROLES:
            ids = plan.ids(k, role)
            assert not seen & set(ids)
            seen |= set(ids)
            cell = Counter(key[i] for i in ids)
            for st, g in strata.items():
                assert abs(cell[st] - len(ids) * g / n) <= 1.0 + 1e-9, (k, role, st)
        assert seen == set(key)
