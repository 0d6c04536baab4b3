"""Self-describing binary score-network weights (.dmsc) and inference.

A .dmsc file is a flat layer program (little-endian):

    bytes 0..3  magic "DMSC"
    u32         format version (currently 1)
    u32         n_layers
    per layer:  u8 kind, u32 in_ch, u32 out_ch, u32 kernel, u32 padding,
                f32 weights (row-major), f32 biases

Layer kinds and their parameter payloads:

    0 conv1d     weights out_ch*in_ch*kernel, biases out_ch; symmetric
                 zero padding, length-preserving (2*padding == kernel-1)
    1 relu       no parameters
    2 skip-begin no parameters; pushes the running activation
    3 skip-end   no parameters; pops and adds (residual join)
    4 time-bias  weights out_ch*in_ch, biases out_ch; adds a per-channel
                 bias projected from the time feature (in_ch = its dim)
    5 dense      weights out_ch*in_ch, biases out_ch; time path only

The signal path starts from the real/imag stack (2 x M) of the complex
input and must end back at 2 channels, which are read as the complex
score.  The time path is the two dense layers in file order applied to a
sinusoidal embedding of t (ReLU between them); time-bias layers consume
the result.  With no time-bias layers the dense layers may be absent.
"""

import struct
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import FormatError

MAGIC = b"DMSC"
VERSION = 1

KIND_CONV1D = 0
KIND_RELU = 1
KIND_SKIP_BEGIN = 2
KIND_SKIP_END = 3
KIND_TIME_BIAS = 4
KIND_DENSE = 5

_KIND_NAMES = {0: "conv1d", 1: "relu", 2: "skip-begin", 3: "skip-end",
               4: "time-bias", 5: "dense"}

_HEADER = struct.Struct("<4sII")
_LAYER_HEAD = struct.Struct("<BIIII")


@dataclass
class LayerDesc:
    kind: int
    in_ch: int
    out_ch: int
    kernel: int
    padding: int
    weights: np.ndarray
    biases: np.ndarray


def _weight_count(kind, in_ch, out_ch, kernel):
    if kind == KIND_CONV1D:
        return out_ch * in_ch * kernel, out_ch
    if kind in (KIND_TIME_BIAS, KIND_DENSE):
        return out_ch * in_ch, out_ch
    return 0, 0


def sinusoidal_embedding(t, dim):
    """Standard sin/cos embedding of a scalar t in [0, 1]."""
    half = dim // 2
    freqs = np.exp(np.arange(half) * (np.log(10000.0) / max(half - 1, 1)))
    phases = t * freqs
    return np.concatenate([np.sin(phases), np.cos(phases)])


class ScoreNetwork:
    """Evaluates a .dmsc layer program as a complex score function."""

    def __init__(self, layers, dtype=np.float32):
        self.layers = list(layers)
        self.dtype = np.dtype(dtype)
        self._validate()

    def _validate(self):
        dense = [l for l in self.layers if l.kind == KIND_DENSE]
        tbias = [l for l in self.layers if l.kind == KIND_TIME_BIAS]
        if tbias and len(dense) != 2:
            raise FormatError(
                f"time-bias layers need exactly 2 dense layers, found {len(dense)}"
            )
        if dense:
            if len(dense) != 2:
                raise FormatError(f"expected 0 or 2 dense layers, found {len(dense)}")
            if dense[1].in_ch != dense[0].out_ch:
                raise FormatError(
                    f"dense chain mismatch: {dense[0].out_ch} -> {dense[1].in_ch}"
                )
            if dense[0].in_ch < 2 or dense[0].in_ch % 2 != 0:
                raise FormatError(
                    f"sinusoidal embedding dim must be even >= 2, got {dense[0].in_ch}"
                )
            self._time_dim = dense[1].out_ch
        else:
            self._time_dim = None
        self._dense = dense

        # channel flow through the signal path, with skip-stack balance
        channels = 2
        stack = []
        for i, l in enumerate(self.layers):
            name = _KIND_NAMES.get(l.kind, str(l.kind))
            if l.kind == KIND_DENSE:
                continue
            if l.kind == KIND_CONV1D:
                if l.in_ch != channels:
                    raise FormatError(
                        f"layer {i} ({name}): expects {l.in_ch} channels, "
                        f"signal path carries {channels}"
                    )
                if l.kernel < 1 or 2 * l.padding != l.kernel - 1:
                    raise FormatError(
                        f"layer {i} ({name}): padding {l.padding} does not "
                        f"preserve length for kernel {l.kernel}"
                    )
                channels = l.out_ch
            elif l.kind == KIND_RELU:
                pass
            elif l.kind == KIND_SKIP_BEGIN:
                stack.append(channels)
            elif l.kind == KIND_SKIP_END:
                if not stack:
                    raise FormatError(f"layer {i} ({name}): skip stack is empty")
                pushed = stack.pop()
                if pushed != channels:
                    raise FormatError(
                        f"layer {i} ({name}): joins {pushed} channels onto {channels}"
                    )
            elif l.kind == KIND_TIME_BIAS:
                if l.in_ch != self._time_dim:
                    raise FormatError(
                        f"layer {i} ({name}): time feature dim {l.in_ch} != "
                        f"{self._time_dim}"
                    )
                if l.out_ch != channels:
                    raise FormatError(
                        f"layer {i} ({name}): biases {l.out_ch} channels, "
                        f"signal path carries {channels}"
                    )
            else:
                raise FormatError(f"layer {i}: unknown kind {l.kind}")
        if stack:
            raise FormatError(f"{len(stack)} skip-begin layer(s) never joined")
        if channels != 2:
            raise FormatError(f"signal path ends with {channels} channels, need 2")

    def time_feature(self, t):
        if self._time_dim is None:
            return None
        e = sinusoidal_embedding(float(t), self._dense[0].in_ch).astype(self.dtype)
        w1, w2 = self._dense
        e = np.maximum(w1.weights.astype(self.dtype) @ e
                       + w1.biases.astype(self.dtype), 0.0)
        return w2.weights.astype(self.dtype) @ e + w2.biases.astype(self.dtype)

    def score(self, x_t, t):
        """Score at (x_t, t); x_t is complex with the signal axis last."""
        x_t = np.asarray(x_t, dtype=np.complex128)
        lead = x_t.shape[:-1]
        m = x_t.shape[-1]
        x = np.stack([x_t.real, x_t.imag], axis=-2)  # (..., 2, M)
        x = x.reshape(-1, 2, m).astype(self.dtype)
        feat = self.time_feature(t)

        stack = []
        for l in self.layers:
            if l.kind == KIND_DENSE:
                continue
            if l.kind == KIND_CONV1D:
                w = l.weights.astype(self.dtype)
                pad = np.pad(x, ((0, 0), (0, 0), (l.padding, l.padding)))
                win = sliding_window_view(pad, l.kernel, axis=-1)
                x = np.einsum("bcmk,ock->bom", win, w, optimize=True)
                x += l.biases.astype(self.dtype)[:, None]
            elif l.kind == KIND_RELU:
                x = np.maximum(x, 0.0)
            elif l.kind == KIND_SKIP_BEGIN:
                stack.append(x)
            elif l.kind == KIND_SKIP_END:
                x = x + stack.pop()
            elif l.kind == KIND_TIME_BIAS:
                bias = l.weights.astype(self.dtype) @ feat + l.biases.astype(self.dtype)
                x = x + bias[:, None]
        out = x[:, 0] + 1j * x[:, 1]
        return out.reshape(*lead, m).astype(np.complex128)

    def save(self, path):
        with open(path, "wb") as f:
            f.write(_HEADER.pack(MAGIC, VERSION, len(self.layers)))
            for l in self.layers:
                f.write(_LAYER_HEAD.pack(l.kind, l.in_ch, l.out_ch,
                                         l.kernel, l.padding))
                f.write(np.ascontiguousarray(l.weights, dtype="<f4").tobytes())
                f.write(np.ascontiguousarray(l.biases, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path, dtype=np.float32):
        with open(path, "rb") as f:
            head = f.read(_HEADER.size)
            if len(head) != _HEADER.size:
                raise FormatError(f"{path}: truncated header")
            magic, version, n_layers = _HEADER.unpack(head)
            if magic != MAGIC:
                raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
            if version != VERSION:
                raise FormatError(f"{path}: unsupported version {version}")
            layers = []
            for i in range(n_layers):
                raw = f.read(_LAYER_HEAD.size)
                if len(raw) != _LAYER_HEAD.size:
                    raise FormatError(f"{path}: truncated at layer {i}")
                kind, in_ch, out_ch, kernel, padding = _LAYER_HEAD.unpack(raw)
                n_w, n_b = _weight_count(kind, in_ch, out_ch, kernel)
                payload = f.read(4 * (n_w + n_b))
                if len(payload) != 4 * (n_w + n_b):
                    raise FormatError(f"{path}: truncated weights at layer {i}")
                flat = np.frombuffer(payload, dtype="<f4")
                if kind == KIND_CONV1D:
                    w = flat[:n_w].reshape(out_ch, in_ch, kernel)
                elif kind in (KIND_TIME_BIAS, KIND_DENSE):
                    w = flat[:n_w].reshape(out_ch, in_ch)
                else:
                    w = flat[:0]
                layers.append(LayerDesc(kind, in_ch, out_ch, kernel, padding,
                                        w.copy(), flat[n_w:].copy()))
            if f.read(1):
                raise FormatError(f"{path}: trailing bytes after last layer")
        return cls(layers, dtype=dtype)


def build_residual_network(width=64, blocks=32, kernel=5, emb_dim=64, rng=None):
    """Assemble the standard residual conv stack as a layer list.

    Input projection 2->width, `blocks` residual units of
    (conv, time-bias, relu) around a skip join, output projection
    width->2.  With rng=None all weights are zero (useful as a neutral
    starting point); otherwise He-style random init with a zeroed final
    projection.
    """
    if kernel % 2 != 1:
        raise FormatError(f"kernel must be odd to preserve length, got {kernel}")
    pad = (kernel - 1) // 2

    def conv(i, o):
        if rng is None:
            w = np.zeros((o, i, kernel), dtype=np.float32)
        else:
            w = rng.standard_normal((o, i, kernel)).astype(np.float32)
            w *= np.sqrt(2.0 / (i * kernel))
        return LayerDesc(KIND_CONV1D, i, o, kernel, pad, w,
                         np.zeros(o, dtype=np.float32))

    def dense(i, o, kind=KIND_DENSE):
        if rng is None:
            w = np.zeros((o, i), dtype=np.float32)
        else:
            w = (rng.standard_normal((o, i)) * np.sqrt(2.0 / i)).astype(np.float32)
        return LayerDesc(kind, i, o, 0, 0, w, np.zeros(o, dtype=np.float32))

    layers = [dense(emb_dim, emb_dim), dense(emb_dim, emb_dim), conv(2, width)]
    for _ in range(blocks):
        layers.append(LayerDesc(KIND_SKIP_BEGIN, width, width, 0, 0,
                                np.zeros(0, np.float32), np.zeros(0, np.float32)))
        layers.append(conv(width, width))
        layers.append(dense(emb_dim, width, kind=KIND_TIME_BIAS))
        layers.append(LayerDesc(KIND_RELU, width, width, 0, 0,
                                np.zeros(0, np.float32), np.zeros(0, np.float32)))
        layers.append(LayerDesc(KIND_SKIP_END, width, width, 0, 0,
                                np.zeros(0, np.float32), np.zeros(0, np.float32)))
    out = conv(width, 2)
    out.weights = np.zeros_like(out.weights)  # zero-init final projection
    layers.append(out)
    return layers
