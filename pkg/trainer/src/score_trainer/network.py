"""Torch implementation of the residual score network.

Mirrors the estimator's .dmsc layer program exactly: a conv stem over
stacked real/imag channels, residual units of (conv, time-bias, relu)
around a skip join, and a zero-initialized output projection, with time
conditioning computed by two dense layers on a sinusoidal embedding of
t.  `export_layers` emits the program in canonical file order so the
saved weights evaluate identically on the estimator side.
"""

import math

import numpy as np
import torch
from torch import nn

from .errors import FormatError
from .formats import (KIND_CONV1D, KIND_DENSE, KIND_RELU, KIND_SKIP_BEGIN,
                      KIND_SKIP_END, KIND_TIME_BIAS, LayerRecord)


def sinusoidal_embedding(t, dim):
    """Sin/cos embedding of t in [0, 1]; batched, computed in float64."""
    t = torch.as_tensor(t, dtype=torch.float64).reshape(-1)
    half = dim // 2
    freqs = torch.exp(torch.arange(half, dtype=torch.float64)
                      * (math.log(10000.0) / max(half - 1, 1)))
    phases = t[:, None] * freqs[None, :]
    return torch.cat([torch.sin(phases), torch.cos(phases)], dim=1)


class ScoreModel(nn.Module):
    """Residual conv score network with per-block time bias."""

    def __init__(self, width=32, blocks=8, kernel=5, emb_dim=64):
        super().__init__()
        if kernel % 2 != 1:
            raise FormatError(f"kernel must be odd to preserve length, got {kernel}")
        if emb_dim < 2 or emb_dim % 2 != 0:
            raise FormatError(f"embedding dim must be even >= 2, got {emb_dim}")
        if width < 1 or blocks < 0:
            raise FormatError(f"bad width/blocks {width}/{blocks}")
        self.width = width
        self.blocks = blocks
        self.kernel = kernel
        self.emb_dim = emb_dim
        pad = (kernel - 1) // 2

        self.time_dense1 = nn.Linear(emb_dim, emb_dim)
        self.time_dense2 = nn.Linear(emb_dim, emb_dim)
        self.stem = nn.Conv1d(2, width, kernel, padding=pad)
        self.block_convs = nn.ModuleList(
            nn.Conv1d(width, width, kernel, padding=pad) for _ in range(blocks))
        self.block_tbias = nn.ModuleList(
            nn.Linear(emb_dim, width) for _ in range(blocks))
        self.head = nn.Conv1d(width, 2, kernel, padding=pad)

    def reset_parameters(self, seed=0):
        """He init with zero biases and a zeroed output projection."""
        gen = torch.Generator().manual_seed(seed)

        def init(mod, fan_in):
            with torch.no_grad():
                mod.weight.normal_(0.0, math.sqrt(2.0 / fan_in), generator=gen)
                mod.bias.zero_()

        init(self.time_dense1, self.emb_dim)
        init(self.time_dense2, self.emb_dim)
        init(self.stem, 2 * self.kernel)
        for conv, tb in zip(self.block_convs, self.block_tbias):
            init(conv, self.width * self.kernel)
            init(tb, self.emb_dim)
        init(self.head, self.width * self.kernel)
        with torch.no_grad():
            self.head.weight.zero_()
        return self

    def time_feature(self, t):
        dtype = self.time_dense1.weight.dtype
        emb = sinusoidal_embedding(t, self.emb_dim).to(dtype)
        return self.time_dense2(torch.relu(self.time_dense1(emb)))

    def forward(self, x, t):
        """x: (batch, 2, M) real/imag channels; t: scalar or (batch,)."""
        feat = self.time_feature(t)
        if feat.shape[0] == 1 and x.shape[0] > 1:
            feat = feat.expand(x.shape[0], -1)
        x = self.stem(x)
        for conv, tb in zip(self.block_convs, self.block_tbias):
            x = x + torch.relu(conv(x) + tb(feat)[:, :, None])
        return self.head(x)

    @torch.no_grad()
    def score(self, x_t, t):
        """Complex convenience wrapper; x_t is (..., M) complex."""
        x_t = np.asarray(x_t, dtype=np.complex128)
        lead, m = x_t.shape[:-1], x_t.shape[-1]
        dtype = self.time_dense1.weight.dtype
        x = torch.from_numpy(
            np.stack([x_t.real, x_t.imag], axis=-2).reshape(-1, 2, m)).to(dtype)
        out = self(x, t).numpy()
        return (out[:, 0] + 1j * out[:, 1]).reshape(*lead, m).astype(np.complex128)


def export_layers(model):
    """Emit the canonical .dmsc layer program for a ScoreModel."""
    def arr(p):
        return p.detach().cpu().numpy().astype(np.float32)

    w, k, pad, emb = model.width, model.kernel, (model.kernel - 1) // 2, model.emb_dim

    def conv_rec(mod, i, o):
        return LayerRecord(KIND_CONV1D, i, o, k, pad, arr(mod.weight), arr(mod.bias))

    def dense_rec(mod, i, o, kind=KIND_DENSE):
        return LayerRecord(kind, i, o, 0, 0, arr(mod.weight), arr(mod.bias))

    layers = [dense_rec(model.time_dense1, emb, emb),
              dense_rec(model.time_dense2, emb, emb),
              conv_rec(model.stem, 2, w)]
    for conv, tb in zip(model.block_convs, model.block_tbias):
        layers.append(LayerRecord(KIND_SKIP_BEGIN, w, w))
        layers.append(conv_rec(conv, w, w))
        layers.append(dense_rec(tb, emb, w, kind=KIND_TIME_BIAS))
        layers.append(LayerRecord(KIND_RELU, w, w))
        layers.append(LayerRecord(KIND_SKIP_END, w, w))
    layers.append(conv_rec(model.head, w, 2))
    return layers


def model_from_layers(layers):
    """Rebuild a ScoreModel from records following the canonical program."""
    layers = list(layers)
    body = len(layers) - 4  # two dense, stem, head
    if body < 0 or body % 5 != 0:
        raise FormatError("layer program is not the standard residual stack")
    blocks = body // 5
    expected = [KIND_DENSE, KIND_DENSE, KIND_CONV1D]
    expected += [KIND_SKIP_BEGIN, KIND_CONV1D, KIND_TIME_BIAS,
                 KIND_RELU, KIND_SKIP_END] * blocks
    expected += [KIND_CONV1D]
    if [r.kind for r in layers] != expected:
        raise FormatError("layer program is not the standard residual stack")
    stem = layers[2]
    emb = layers[0].in_ch
    convs = [r for r in layers if r.kind == KIND_CONV1D]
    if any(r.kernel != stem.kernel for r in convs):
        raise FormatError("mixed kernel sizes; this mirror uses one kernel")
    if layers[0].out_ch != emb or layers[1].out_ch != emb:
        raise FormatError("time path is not the square dense chain")
    model = ScoreModel(width=stem.out_ch, blocks=blocks, kernel=stem.kernel,
                       emb_dim=emb)

    def load(mod, rec):
        with torch.no_grad():
            mod.weight.copy_(torch.from_numpy(np.asarray(rec.weights)))
            mod.bias.copy_(torch.from_numpy(np.asarray(rec.biases)))

    load(model.time_dense1, layers[0])
    load(model.time_dense2, layers[1])
    load(model.stem, stem)
    for b in range(blocks):
        load(model.block_convs[b], layers[3 + 5 * b + 1])
        load(model.block_tbias[b], layers[3 + 5 * b + 2])
    load(model.head, layers[-1])
    return model
