"""Binary interchange formats shared with the dmsbl estimator.

The trainer deliberately has no code dependency on the estimator
package; these readers/writers are the contract.  Two containers:

.cbin — complex signal vector (training segments), little-endian:

    bytes 0..3   magic "CSIG"
    bytes 4..7   u32 format version (currently 1)
    bytes 8..15  u64 number of complex samples
    then         length x (f32 real, f32 imag) interleaved

.dmsc — score-network weights as a flat layer program, little-endian:

    bytes 0..3   magic "DMSC"
    bytes 4..7   u32 format version (currently 1)
    bytes 8..11  u32 layer count
    per layer    u8 kind, u32 in_ch, u32 out_ch, u32 kernel, u32 padding,
                 then f32 weights row-major, then f32 biases

Layer kinds: 0 conv1d, 1 relu, 2 skip-begin (push activation),
3 skip-end (pop and add), 4 time-bias (adds W @ time_feature + b per
channel), 5 dense (time path only; exactly two when present, applied
to a sinusoidal embedding of t with a ReLU between them).  The signal
path starts at 2 channels (stacked real/imag) and must end at 2.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError

CBIN_MAGIC = b"CSIG"
DMSC_MAGIC = b"DMSC"
VERSION = 1

_CBIN_HEADER = struct.Struct("<4sIQ")
_DMSC_HEADER = struct.Struct("<4sII")
_LAYER_HEAD = struct.Struct("<BIIII")

KIND_CONV1D = 0
KIND_RELU = 1
KIND_SKIP_BEGIN = 2
KIND_SKIP_END = 3
KIND_TIME_BIAS = 4
KIND_DENSE = 5

_KIND_NAMES = {
    KIND_CONV1D: "conv1d",
    KIND_RELU: "relu",
    KIND_SKIP_BEGIN: "skip-begin",
    KIND_SKIP_END: "skip-end",
    KIND_TIME_BIAS: "time-bias",
    KIND_DENSE: "dense",
}


def write_cbin(path, x):
    """Write a 1-D complex vector to `path` in .cbin layout."""
    x = np.asarray(x)
    if x.ndim != 1:
        raise FormatError(f"cbin stores 1-D vectors, got shape {x.shape}")
    parts = np.empty(2 * x.size, dtype="<f4")
    parts[0::2] = x.real
    parts[1::2] = x.imag
    with open(path, "wb") as f:
        f.write(_CBIN_HEADER.pack(CBIN_MAGIC, VERSION, x.size))
        f.write(parts.tobytes())


def read_cbin(path):
    """Read a .cbin file, returning a complex128 vector."""
    with open(path, "rb") as f:
        head = f.read(_CBIN_HEADER.size)
        if len(head) != _CBIN_HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, version, length = _CBIN_HEADER.unpack(head)
        if magic != CBIN_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {CBIN_MAGIC!r}")
        if version != VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        raw = f.read(8 * length)
        if len(raw) != 8 * length:
            raise FormatError(f"{path}: expected {length} samples, file is short")
    parts = np.frombuffer(raw, dtype="<f4")
    return parts[0::2].astype(np.float64) + 1j * parts[1::2].astype(np.float64)


@dataclass
class LayerRecord:
    kind: int
    in_ch: int
    out_ch: int
    kernel: int = 0
    padding: int = 0
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0, np.float32))
    biases: np.ndarray = field(default_factory=lambda: np.zeros(0, np.float32))


def _expected_shapes(rec):
    if rec.kind == KIND_CONV1D:
        return (rec.out_ch, rec.in_ch, rec.kernel), (rec.out_ch,)
    if rec.kind in (KIND_TIME_BIAS, KIND_DENSE):
        return (rec.out_ch, rec.in_ch), (rec.out_ch,)
    return (0,), (0,)


def validate_layers(layers):
    """Reject layer lists the estimator-side loader would refuse.

    Mirrors the consumer's checks so a bad export fails here, at the
    producer, rather than at inference time.
    """
    layers = list(layers)
    if not layers:
        raise FormatError("empty layer list")
    for i, rec in enumerate(layers):
        name = _KIND_NAMES.get(rec.kind)
        if name is None:
            raise FormatError(f"layer {i}: unknown kind {rec.kind}")
        w_shape, b_shape = _expected_shapes(rec)
        got_w = tuple(np.shape(rec.weights))
        got_b = tuple(np.shape(rec.biases))
        if got_w != w_shape or got_b != b_shape:
            raise FormatError(
                f"layer {i} ({name}): payload shapes {got_w}/{got_b} do not "
                f"match declared {w_shape}/{b_shape}"
            )

    dense = [r for r in layers if r.kind == KIND_DENSE]
    tbias = [r for r in layers if r.kind == KIND_TIME_BIAS]
    if tbias and len(dense) != 2:
        raise FormatError(
            f"time-bias layers need exactly 2 dense layers, found {len(dense)}"
        )
    time_dim = None
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
        time_dim = dense[1].out_ch

    channels = 2
    stack = []
    for i, rec in enumerate(layers):
        name = _KIND_NAMES[rec.kind]
        if rec.kind == KIND_DENSE:
            continue
        if rec.kind == KIND_CONV1D:
            if rec.in_ch != channels:
                raise FormatError(
                    f"layer {i} ({name}): expects {rec.in_ch} channels, "
                    f"signal path carries {channels}"
                )
            if rec.kernel < 1 or 2 * rec.padding != rec.kernel - 1:
                raise FormatError(
                    f"layer {i} ({name}): padding {rec.padding} does not "
                    f"preserve length for kernel {rec.kernel}"
                )
            channels = rec.out_ch
        elif rec.kind == KIND_SKIP_BEGIN:
            stack.append(channels)
        elif rec.kind == KIND_SKIP_END:
            if not stack:
                raise FormatError(f"layer {i} ({name}): skip stack is empty")
            if stack.pop() != channels:
                raise FormatError(f"layer {i} ({name}): skip join channel mismatch")
        elif rec.kind == KIND_TIME_BIAS:
            if rec.in_ch != time_dim:
                raise FormatError(
                    f"layer {i} ({name}): time feature dim {rec.in_ch} != {time_dim}"
                )
            if rec.out_ch != channels:
                raise FormatError(
                    f"layer {i} ({name}): biases {rec.out_ch} channels, "
                    f"signal path carries {channels}"
                )
    if stack:
        raise FormatError(f"{len(stack)} skip-begin layer(s) never joined")
    if channels != 2:
        raise FormatError(f"signal path ends with {channels} channels, need 2")
    return layers


def write_dmsc(path, layers):
    """Validate and write a layer program; refuses inconsistent exports."""
    layers = validate_layers(layers)
    with open(path, "wb") as f:
        f.write(_DMSC_HEADER.pack(DMSC_MAGIC, VERSION, len(layers)))
        for rec in layers:
            f.write(_LAYER_HEAD.pack(rec.kind, rec.in_ch, rec.out_ch,
                                     rec.kernel, rec.padding))
            f.write(np.ascontiguousarray(rec.weights, dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(rec.biases, dtype="<f4").tobytes())


def read_dmsc(path):
    """Read a .dmsc file back into validated LayerRecords."""
    with open(path, "rb") as f:
        head = f.read(_DMSC_HEADER.size)
        if len(head) != _DMSC_HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, version, n_layers = _DMSC_HEADER.unpack(head)
        if magic != DMSC_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {DMSC_MAGIC!r}")
        if version != VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        layers = []
        for i in range(n_layers):
            raw = f.read(_LAYER_HEAD.size)
            if len(raw) != _LAYER_HEAD.size:
                raise FormatError(f"{path}: truncated at layer {i}")
            kind, in_ch, out_ch, kernel, padding = _LAYER_HEAD.unpack(raw)
            rec = LayerRecord(kind, in_ch, out_ch, kernel, padding)
            w_shape, b_shape = _expected_shapes(rec)
            n_w, n_b = int(np.prod(w_shape)), b_shape[0]
            payload = f.read(4 * (n_w + n_b))
            if len(payload) != 4 * (n_w + n_b):
                raise FormatError(f"{path}: truncated weights at layer {i}")
            flat = np.frombuffer(payload, dtype="<f4")
            rec.weights = flat[:n_w].reshape(w_shape).copy()
            rec.biases = flat[n_w:].copy()
            layers.append(rec)
        if f.read(1):
            raise FormatError(f"{path}: trailing bytes after last layer")
    return validate_layers(layers)
