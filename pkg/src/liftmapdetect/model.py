"""Noise-prediction network and its checkpoint format.

The network is a small stack of stride-1 'same' convolutions with SiLU
activations. A sinusoidal step embedding goes through a learned affine per
block and is broadcast-added to the block's channels, so the same weights
serve every diffusion step. Output shape always equals input shape.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

CHECKPOINT_MAGIC = "lmd-checkpoint"
CHECKPOINT_VERSION = 1


def time_embedding(t, dim):
    """Sinusoidal embedding: interleaved (sin(t*w_i), cos(t*w_i)) pairs with
    w_i = 10000**(-2i/dim). Accepts a scalar step or an array of steps >= 1."""
    if dim % 2 != 0:
        raise ValueError(f"embedding dim must be even, got {dim}")
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 1):
        raise ValueError("diffusion step index starts at 1")
    i = np.arange(dim // 2, dtype=np.float64)
    omega = 10000.0 ** (-2.0 * i / dim)
    angles = t_arr[..., None] * omega
    emb = np.empty(t_arr.shape + (dim,), dtype=np.float32)
    emb[..., 0::2] = np.sin(angles)
    emb[..., 1::2] = np.cos(angles)
    return emb


def _silu_raw(x):
    s = np.exp(-x)
    s += 1.0
    np.divide(x, s, out=s)
    return s


class EpsilonModel:
    """Predicts the noise injected into x_t, conditioned on the step t."""

    def __init__(self, channels=1, widths=(16, 32, 32, 16), temb_dim=32,
                 kernel=3, seed=0):
        if temb_dim % 2 != 0:
            raise ValueError("temb_dim must be even")
        self.channels = int(channels)
        self.widths = tuple(int(w) for w in widths)
        self.temb_dim = int(temb_dim)
        self.kernel = int(kernel)
        self.seed = int(seed)
        self.params = {}
        self._init_params(np.random.default_rng(seed))

    def _init_params(self, rng):
        k = self.kernel
        prev = self.channels
        for i, w in enumerate(self.widths):
            scale = 1.0 / np.sqrt(prev * k * k)
            self.params[f"conv{i}.w"] = Tensor(
                rng.normal(0.0, scale, (w, prev, k, k)).astype(np.float32),
                requires_grad=True)
            self.params[f"conv{i}.b"] = Tensor(np.zeros(w, np.float32), requires_grad=True)
            self.params[f"temb{i}.w"] = Tensor(
                rng.normal(0.0, 1.0 / np.sqrt(self.temb_dim),
                           (w, self.temb_dim)).astype(np.float32),
                requires_grad=True)
            self.params[f"temb{i}.b"] = Tensor(np.zeros(w, np.float32), requires_grad=True)
            prev = w
        scale = 1.0 / np.sqrt(prev * k * k)
        self.params["out.w"] = Tensor(
            rng.normal(0.0, scale, (self.channels, prev, k, k)).astype(np.float32),
            requires_grad=True)
        self.params["out.b"] = Tensor(np.zeros(self.channels, np.float32), requires_grad=True)

    def named_params(self):
        return list(self.params.items())

    def forward(self, x, t):
        """Graph-building forward for training. x is a Tensor (B, C, H, W),
        t an int array of per-sample steps."""
        batch = x.shape[0]
        t_arr = np.broadcast_to(np.asarray(t), (batch,))
        emb = Tensor(time_embedding(t_arr, self.temb_dim))
        h = x
        for i in range(len(self.widths)):
            w = self.params[f"conv{i}.w"]
            h = ad.conv2d(h, w)
            h = ad.add(h, ad.reshape(self.params[f"conv{i}.b"], (1, w.shape[0], 1, 1)))
            cond = ad.affine(emb, self.params[f"temb{i}.w"], self.params[f"temb{i}.b"])
            h = ad.add(h, ad.reshape(cond, (batch, w.shape[0], 1, 1)))
            h = ad.silu(h)
        h = ad.conv2d(h, self.params["out.w"])
        return ad.add(h, ad.reshape(self.params["out.b"], (1, self.channels, 1, 1)))

    def predict(self, x, t):
        """Inference-only forward on plain arrays; no graph, chunked over the
        batch to bound im2col memory."""
        x = np.asarray(x, dtype=np.float32)
        squeeze = x.ndim == 3
        if squeeze:
            x = x[None]
        out = np.empty_like(x)
        # Keep each patch-matrix buffer around 150 MB.
        per_image = x.shape[2] * x.shape[3] * max(self.widths) * self.kernel ** 2 * 4
        chunk = max(1, 150_000_000 // per_image)
        wmats = self._weight_mats()
        for lo in range(0, x.shape[0], chunk):
            sl = slice(lo, lo + chunk)
            out[sl] = self._predict_block(x[sl], np.asarray(t)[sl] if np.ndim(t) else t,
                                          wmats)
        return out[0] if squeeze else out

    def _weight_mats(self):
        """Kernels flattened to (k*k*C_in, C_out) for the channels-last
        inference path."""
        mats = []
        for i in range(len(self.widths)):
            w = self.params[f"conv{i}.w"].data
            mats.append(np.ascontiguousarray(
                w.transpose(2, 3, 1, 0).reshape(-1, w.shape[0])))
        w = self.params["out.w"].data
        mats.append(np.ascontiguousarray(
            w.transpose(2, 3, 1, 0).reshape(-1, w.shape[0])))
        return mats

    def _predict_block(self, x, t, wmats):
        t_arr = np.broadcast_to(np.asarray(t), (x.shape[0],))
        emb = time_embedding(t_arr, self.temb_dim)
        h = np.ascontiguousarray(x.transpose(0, 2, 3, 1))
        for i in range(len(self.widths)):
            h = ad.conv2d_nhwc_raw(h, wmats[i], self.kernel)
            cond = emb @ self.params[f"temb{i}.w"].data.T \
                + self.params[f"temb{i}.b"].data
            h += self.params[f"conv{i}.b"].data
            h += cond[:, None, None, :]
            h = _silu_raw(h)
        out = ad.conv2d_nhwc_raw(h, wmats[-1], self.kernel)
        out += self.params["out.b"].data
        return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def save_checkpoint(path, model, timesteps, beta_start, beta_end):
    """One text header line, then every parameter tensor as raw little-endian
    float32 in declared (insertion) order."""
    widths = ",".join(str(w) for w in model.widths)
    header = (f"{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION} channels={model.channels} "
              f"widths={widths} temb={model.temb_dim} kernel={model.kernel} "
              f"T={timesteps} beta={beta_start!r}:{beta_end!r} seed={model.seed}\n")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        for _, p in model.named_params():
            fh.write(p.data.astype("<f4").tobytes())


def load_checkpoint(path):
    """Returns (model, meta) where meta holds timesteps, beta_start, beta_end."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").strip()
        blob = fh.read()
    fields = header.split()
    if not fields or fields[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"not a checkpoint file: bad magic in {header[:40]!r}")
    kv = dict(f.split("=", 1) for f in fields[2:])
    model = EpsilonModel(
        channels=int(kv["channels"]),
        widths=tuple(int(w) for w in kv["widths"].split(",")),
        temb_dim=int(kv["temb"]),
        kernel=int(kv["kernel"]),
        seed=int(kv["seed"]),
    )
    offset = 0
    for name, p in model.named_params():
        n = p.data.size
        chunk = blob[offset * 4:(offset + n) * 4]
        if len(chunk) != n * 4:
            raise ValueError(f"checkpoint truncated at parameter {name}")
        p.data = np.frombuffer(chunk, dtype="<f4").reshape(p.data.shape).copy()
        offset += n
    if offset * 4 != len(blob):
        raise ValueError("checkpoint has trailing bytes beyond declared parameters")
    b0, b1 = kv["beta"].split(":")
    meta = {"timesteps": int(kv["T"]), "beta_start": float(b0), "beta_end": float(b1)}
    return model, meta
