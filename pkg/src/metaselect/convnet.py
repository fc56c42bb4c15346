"""Small numpy conv net: 3 x (conv3x3 + ReLU + maxpool2) -> GAP -> dense -> sigmoid.

Tensors are NCHW float64.  Parameters live in a flat ordered dict so the
optimizer, serializer and gradient checks can treat them uniformly.
"""
from __future__ import annotations

import io
import json
import struct

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

CHANNELS = (8, 16, 32)
BLOB_MAGIC = b"MSCN"


def init_params(seed: int, channels=CHANNELS, in_channels: int = 1) -> dict:
    rng = np.random.default_rng(seed)
    params = {}
    c_in = in_channels
    for i, c_out in enumerate(channels):
        fan_in = 9 * c_in
        params[f"conv{i}.w"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(c_out, c_in, 3, 3))
        params[f"conv{i}.b"] = np.zeros(c_out)
        c_in = c_out
    params["dense.w"] = rng.normal(0.0, np.sqrt(1.0 / c_in), size=(c_in,))
    params["dense.b"] = np.zeros(1)
    return params


def _conv_forward(x, w, b):
    n, c, h, wd = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = sliding_window_view(xp, (3, 3), axis=(2, 3))          # n,c,h,w,3,3
    cols = cols.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * wd, c * 9)
    out = cols @ w.reshape(w.shape[0], -1).T + b                  # (n h w, c_out)
    return out.reshape(n, h, wd, -1).transpose(0, 3, 1, 2), cols


def _conv_backward(dout, cols, x_shape, w):
    n, c, h, wd = x_shape
    c_out = w.shape[0]
    d2 = dout.transpose(0, 2, 3, 1).reshape(-1, c_out)
    dw = (d2.T @ cols).reshape(w.shape)
    db = d2.sum(axis=0)
    dcols = (d2 @ w.reshape(c_out, -1)).reshape(n, h, wd, c, 3, 3)
    dxp = np.zeros((n, c, h + 2, wd + 2))
    for i in range(3):
        for j in range(3):
            dxp[:, :, i:i + h, j:j + wd] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dxp[:, :, 1:-1, 1:-1], dw, db


def _pool_forward(x):
    n, c, h, w = x.shape
    blocks = x[:, :, : h - h % 2, : w - w % 2].reshape(n, c, h // 2, 2, w // 2, 2)
    blocks = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    arg = blocks.argmax(axis=-1)
    return np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0], arg


def _pool_backward(dout, arg, x_shape):
    n, c, h, w = x_shape
    d = np.zeros(dout.shape + (4,))
    np.put_along_axis(d, arg[..., None], dout[..., None], axis=-1)
    d = d.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    dx = np.zeros(x_shape)
    dx[:, :, : h - h % 2, : w - w % 2] = d.reshape(n, c, h - h % 2, w - w % 2)
    return dx


def forward(params: dict, x: np.ndarray, keep: bool = False):
    """Logits of shape (n,); with ``keep`` also the cache for backprop."""
    cache = []
    a = x
    n_blocks = sum(1 for k in params if k.endswith(".w") and k.startswith("conv"))
    for i in range(n_blocks):
        z, cols = _conv_forward(a, params[f"conv{i}.w"], params[f"conv{i}.b"])
        r = np.maximum(z, 0.0)
        p, arg = _pool_forward(r)
        cache.append((a.shape, cols, z, r.shape, arg))
        a = p
    g = a.mean(axis=(2, 3))
    logits = g @ params["dense.w"] + params["dense.b"][0]
    if keep:
        return logits, (cache, a.shape, g)
    return logits


def block_shapes(params: dict, size: int) -> list[tuple]:
    """Per-block output shapes as (H, W, C) for a single size x size input."""
    shapes = []
    a = np.zeros((1, 1, size, size))
    _, (cache, last, _) = forward(params, a, keep=True)
    for k in range(1, len(cache)):
        shapes.append(cache[k][0][2:] + cache[k][0][1:2])
    shapes.append(last[2:] + last[1:2])
    return [tuple(int(v) for v in s) for s in shapes]


def loss_and_grads(params: dict, x: np.ndarray, y: np.ndarray, sample_weight=None):
    """Weighted mean BCE and gradients for every parameter."""
    y = np.asarray(y, dtype=float)
    sw = np.ones_like(y) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    n = y.size
    logits, (cache, last_shape, g) = forward(params, x, keep=True)
    loss = float(np.sum(sw * (np.logaddexp(0.0, logits) - y * logits)) / n)
    dlog = sw * (0.5 * (1.0 + np.tanh(0.5 * logits)) - y) / n
    grads = {
        "dense.w": g.T @ dlog,
        "dense.b": np.array([dlog.sum()]),
    }
    dg = np.outer(dlog, params["dense.w"])
    hw = last_shape[2] * last_shape[3]
    da = np.broadcast_to((dg / hw)[:, :, None, None], last_shape)
    for i in range(len(cache) - 1, -1, -1):
        x_shape, cols, z, r_shape, arg = cache[i]
        dr = _pool_backward(da, arg, r_shape)
        dz = dr * (z > 0)
        da, grads[f"conv{i}.w"], grads[f"conv{i}.b"] = _conv_backward(dz, cols, x_shape, params[f"conv{i}.w"])
    return loss, grads


class Adam:
    def __init__(self, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m, self.v, self.t = {}, {}, 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            m = self.m.get(k, 0.0) * self.beta1 + (1.0 - self.beta1) * g
            v = self.v.get(k, 0.0) * self.beta2 + (1.0 - self.beta2) * g * g
            self.m[k], self.v[k] = m, v
            params[k] = params[k] - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def train(x, y, sample_weight=None, lr=1e-4, epochs=200, seed=0):
    """Full-batch Adam; returns (params, per-epoch loss before each update)."""
    params = init_params(seed)
    opt = Adam(lr)
    curve = []
    for _ in range(epochs):
        loss, grads = loss_and_grads(params, x, y, sample_weight)
        curve.append(loss)
        opt.step(params, grads)
    curve.append(loss_and_grads(params, x, y, sample_weight)[0])
    return params, np.asarray(curve)


def save_blob(params: dict, header: dict) -> bytes:
    """JSON header (with layer shapes) + little-endian float32 parameters."""
    meta = dict(header)
    meta["layers"] = [{"name": k, "shape": list(v.shape)} for k, v in params.items()]
    hb = json.dumps(meta, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(BLOB_MAGIC)
    buf.write(struct.pack("<I", len(hb)))
    buf.write(hb)
    for v in params.values():
        buf.write(np.ascontiguousarray(v, dtype="<f4").tobytes())
    return buf.getvalue()


def load_blob(data: bytes) -> tuple[dict, dict]:
    if data[:4] != BLOB_MAGIC:
        raise ValueError("not a conv-net parameter blob")
    (hlen,) = struct.unpack("<I", data[4:8])
    header = json.loads(data[8:8 + hlen].decode("utf-8"))
    off = 8 + hlen
    params = {}
    for layer in header["layers"]:
        count = int(np.prod(layer["shape"]))
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=off)
        params[layer["name"]] = arr.astype(np.float64).reshape(layer["shape"])
        off += 4 * count
    return params, header
