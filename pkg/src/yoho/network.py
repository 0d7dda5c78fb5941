"""The YOHO network: a MobileNet trunk with an adapted regression head.

Input is a (40 mel, 257 frame) log-mel window, transposed to
(257 time, 40 freq, 1). The trunk halves time and frequency five times to
9 x 2; the head narrows channels to 128, flattens to 9 x 256 and a
kernel-1 Conv1D with sigmoid yields 9 time bins x 9 outputs
(presence, start, end for each of three classes).
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from . import layers as L
from .errors import (BadMagicError, ShapeMismatchError, TruncatedPayloadError,
                     VersionMismatchError, ChecksumError)

N_BINS = 9
N_OUTPUTS = 9
INPUT_SHAPE = (40, 257)

# (pointwise filters, depthwise stride) for each depthwise-separable block
TRUNK_BLOCKS = [(64, 1), (128, 2), (128, 1), (256, 2), (256, 1), (512, 2)] + [(512, 1)] * 5 + [(1024, 2), (1024, 1)]
# The middle head depthwise is nominally stride 2, but the 9 x 2 output shape
# it must produce requires stride 1.
HEAD_BLOCKS = [(512, 1), (256, 1), (128, 1)]

# Architecture rows: (label, output shape as time x freq x channels).
ARCHITECTURE_ROWS = [
    ("Reshape", (257, 40, 1)),
    ("Conv2D", (129, 20, 32)),
    ("Conv2D-dw", (129, 20, 32)),
    ("Conv2D", (129, 20, 64)),
    ("Conv2D-dw", (65, 10, 64)),
    ("Conv2D", (65, 10, 128)),
    ("Conv2D-dw", (65, 10, 128)),
    ("Conv2D", (65, 10, 128)),
    ("Conv2D-dw", (33, 5, 128)),
    ("Conv2D", (33, 5, 256)),
    ("Conv2D-dw", (33, 5, 256)),
    ("Conv2D", (33, 5, 256)),
    ("Conv2D-dw", (17, 3, 256)),
    ("Conv2D", (17, 3, 512)),
    ("5x (Conv2D-dw, Conv2D)", (17, 3, 512)),
    ("Conv2D-dw", (9, 2, 512)),
    ("Conv2D", (9, 2, 1024)),
    ("Conv2D-dw", (9, 2, 1024)),
    ("Conv2D", (9, 2, 1024)),
    ("Conv2D-dw", (9, 2, 1024)),
    ("Conv2D", (9, 2, 512)),
    ("Conv2D-dw", (9, 2, 512)),
    ("Conv2D", (9, 2, 256)),
    ("Conv2D-dw", (9, 2, 256)),
    ("Conv2D", (9, 2, 128)),
    ("Reshape", (9, 256)),
    ("Conv1D", (9, 9)),
]


@dataclass
class _Row:
    label: str
    stop: int  # index one past the row's last layer
    group: int | None = None


class YohoModel:
    """Ordered layer stack plus the bookkeeping that maps layers to table rows."""

    def __init__(self, layers: list[L.Layer], rows: list[_Row], width_divisor: int = 1, seed: int = 0):
        self.layers = layers
        self.rows = rows
        self.width_divisor = width_divisor
        self.training = False
        self._dropout_rng = np.random.default_rng([seed, 1])

    @property
    def dtype(self):
        return self.layers[0].params["kernel"].dtype

    def train(self):
        self.training = True
        return self

    def eval(self):
        self.training = False
        return self

    def named_parameters(self) -> dict[str, np.ndarray]:
        return {f"{layer.name}/{k}": v for layer in self.layers for k, v in layer.params.items()}

    def named_buffers(self) -> dict[str, np.ndarray]:
        return {f"{layer.name}/{k}": v for layer in self.layers for k, v in layer.buffers.items()}

    def named_gradients(self) -> dict[str, np.ndarray]:
        return {f"{layer.name}/{k}": v for layer in self.layers for k, v in layer.grads.items()}

    def state(self) -> list[tuple[str, np.ndarray]]:
        """All tensors in serialization order: per layer, parameters then buffers."""
        out = []
        for layer in self.layers:
            out += [(f"{layer.name}/{k}", v) for k, v in layer.params.items()]
            out += [(f"{layer.name}/{k}", v) for k, v in layer.buffers.items()]
        return out

    def set_tensor(self, name: str, value: np.ndarray):
        layer_name, key = name.rsplit("/", 1)
        for layer in self.layers:
            if layer.name == layer_name:
                store = layer.params if key in layer.params else layer.buffers
                store[key] = value
                return
        raise KeyError(name)

    def astype(self, dtype) -> "YohoModel":
        for layer in self.layers:
            layer.params = {k: v.astype(dtype) for k, v in layer.params.items()}
            layer.buffers = {k: v.astype(dtype) for k, v in layer.buffers.items()}
        return self

    def copy(self) -> "YohoModel":
        import copy
        return copy.deepcopy(self)

    def _prepare(self, x):
        x = np.asarray(x)
        single = x.ndim == 2
        if single:
            x = x[None]
        if x.ndim != 3 or x.shape[1:] != INPUT_SHAPE:
            raise ValueError(f"expected input of shape {INPUT_SHAPE} or (N, *{INPUT_SHAPE}), got {x.shape}")
        return np.ascontiguousarray(x.transpose(0, 2, 1)[..., None], dtype=self.dtype), single

    def forward(self, x, rng=None, trace=False):
        """Run the stack; ``rng`` drives spatial dropout in training mode."""
        h, single = self._prepare(x)
        if self.training and rng is None:
            rng = self._dropout_rng
        outputs = []
        for layer in self.layers:
            h = layer.forward(h, self.training, rng)
            if trace:
                outputs.append(h.shape[1:])
        out = h[0] if single else h
        return (out, outputs) if trace else out

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def backward(self, dout):
        """Backpropagate d(loss)/d(output); returns the gradient dict."""
        dout = np.asarray(dout, dtype=self.dtype)
        if dout.ndim == 2:
            dout = dout[None]
        self.zero_grad()
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return self.named_gradients()

    def calibrate(self, x, batch_size: int | None = None):
        """Replace batch-norm running statistics with the training-mode statistics of ``x``.

        With ``batch_size`` the data is fed in batches and the per-batch mean and
        variance are averaged, weighted by batch size. Dropout is inactive.
        """
        bns = [layer for layer in self.layers if isinstance(layer, L.BatchNorm)]
        was_training = self.training
        x = np.asarray(x)
        if x.ndim == 2:
            x = x[None]
        step = batch_size or len(x)
        seen = 0
        try:
            self.training = True
            for start in range(0, len(x), step):
                h, _ = self._prepare(x[start:start + step])
                for bn in bns:
                    bn._momentum_override = seen / (seen + len(h))
                for layer in self.layers:
                    h = layer.forward(h, True, None)
                seen += len(h)
        finally:
            for bn in bns:
                bn._momentum_override = None
            self.training = was_training

    def table_rows(self, x=None) -> list[tuple[str, tuple]]:
        """Output shape of each printed architecture row for one input window."""
        if x is None:
            x = np.zeros(INPUT_SHAPE)
        was_training, self.training = self.training, False
        try:
            _, shapes = self.forward(x, trace=True)
        finally:
            self.training = was_training
        rows = [("Reshape", self._prepare(x)[0].shape[1:])]
        seen_groups = {}
        for row in self.rows:
            shape = tuple(shapes[row.stop - 1])
            if row.group is not None:
                if row.group in seen_groups:
                    idx = seen_groups[row.group]
                    if rows[idx][1] != shape:
                        rows[idx] = (rows[idx][0], None)
                    continue
                seen_groups[row.group] = len(rows)
                n = sum(1 for r in self.rows if r.group == row.group) // 2
                rows.append((f"{n}x (Conv2D-dw, Conv2D)", shape))
                continue
            rows.append((row.label, shape))
        return rows


def _scaled(filters: int, divisor: int) -> int:
    return max(1, filters // divisor)


def build_yoho(seed: int = 0, width_divisor: int = 1, dropout_rate: float = 0.1,
               dtype=np.float32, n_outputs: int = N_OUTPUTS) -> YohoModel:
    """Construct the full stack with He-initialised kernels drawn from ``seed``.

    ``width_divisor`` shrinks every channel count (used for gradient checks).
    """
    rng = np.random.default_rng(seed)
    layers: list[L.Layer] = []
    rows: list[_Row] = []

    def conv_bn_relu(conv, row_label, group=None, dropout=False):
        layers.extend([conv, L.BatchNorm(f"{conv.name}/bn", conv.out_channels, dtype=dtype), L.ReLU(f"{conv.name}/relu")])
        if dropout:
            layers.append(L.SpatialDropout(f"{conv.name}/dropout", dropout_rate))
        rows.append(_Row(row_label, len(layers), group))

    channels = _scaled(32, width_divisor)
    conv_bn_relu(L.Conv2D("stem", 1, channels, (3, 3), (2, 2), rng, dtype), "Conv2D")
    blocks = [("block", f, s) for f, s in TRUNK_BLOCKS] + [("head", f, s) for f, s in HEAD_BLOCKS]
    for idx, (prefix, filters, stride) in enumerate(blocks):
        group = 0 if prefix == "block" and filters == 512 and stride == 1 else None
        name = f"{prefix}{idx + 1:02d}"
        out = _scaled(filters, width_divisor)
        conv_bn_relu(L.DepthwiseConv2D(f"{name}_dw", channels, (3, 3), (stride, stride), rng, dtype),
                     "Conv2D-dw", group)
        conv_bn_relu(L.Conv2D(f"{name}_pw", channels, out, (1, 1), (1, 1), rng, dtype), "Conv2D", group,
                     dropout=filters == 1024)
        channels = out
    layers.append(L.Flatten("flatten"))
    rows.append(_Row("Reshape", len(layers)))
    layers.append(L.Conv1D("output", 2 * channels, n_outputs, rng, dtype))
    layers.append(L.Sigmoid("output/sigmoid"))
    rows.append(_Row("Conv1D", len(layers)))
    return YohoModel(layers, rows, width_divisor, seed)


def forward(model: YohoModel, x, rng=None) -> np.ndarray:
    return model.forward(x, rng=rng)


def forward_backward(model: YohoModel, x, target, rng=None, loss_scale: float = 1.0,
                     presence_weight: float = 1.0, regression_weight: float = 1.0):
    """Training-mode loss and gradients for one window or a batch.

    The batch loss is the mean over examples of the per-grid loss.
    """
    from .losses import yoho_loss_and_grad

    if not model.training:
        raise ValueError("forward_backward requires a model in training mode")
    pred = model.forward(x, rng=rng)
    target = np.asarray(target)
    if target.shape != pred.shape:
        raise ValueError(f"target shape {target.shape} does not match output shape {pred.shape}")
    loss, dpred = yoho_loss_and_grad(pred, target, presence_weight, regression_weight)
    grads = model.backward(dpred * loss_scale)
    return loss * loss_scale, grads


# Weight file: "YOHO", u32 version, u32 tensor count; per tensor u16 name
# length + UTF-8 name, u8 rank, u32 dims, f32 data; trailing CRC32.
_MAGIC = b"YOHO"
_VERSION = 1


def save_weights(model: YohoModel, path) -> None:
    tensors = model.state()
    chunks = [_MAGIC, struct.pack("<II", _VERSION, len(tensors))]
    for name, value in tensors:
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", value.ndim))
        chunks.append(struct.pack(f"<{value.ndim}I", *value.shape))
        chunks.append(np.ascontiguousarray(value, dtype="<f4").tobytes())
    body = b"".join(chunks)
    with open(path, "wb") as fh:
        fh.write(body + struct.pack("<I", zlib.crc32(body)))


def _read_tensors(data: bytes, path) -> list[tuple[str, np.ndarray]]:
    if data[:4] != _MAGIC:
        raise BadMagicError(f"{path}: bad magic {data[:4]!r}, not a YOHO weight file")
    if len(data) < 16:
        raise TruncatedPayloadError(f"{path}: truncated header")
    version, count = struct.unpack_from("<II", data, 4)
    if version != _VERSION:
        raise VersionMismatchError(f"{path}: weight file version {version}, expected {_VERSION}")
    pos = 12
    out = []
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<H", data, pos)
            name = data[pos + 2:pos + 2 + n].decode("utf-8")
            pos += 2 + n
            (rank,) = struct.unpack_from("<B", data, pos)
            dims = struct.unpack_from(f"<{rank}I", data, pos + 1)
            pos += 1 + 4 * rank
            size = int(np.prod(dims)) if rank else 1
            if pos + 4 * size > len(data) - 4:
                raise TruncatedPayloadError(f"{path}: tensor {name!r} runs past end of file")
            out.append((name, np.frombuffer(data, dtype="<f4", count=size, offset=pos).reshape(dims).astype(np.float32)))
            pos += 4 * size
    except struct.error as exc:
        raise TruncatedPayloadError(f"{path}: truncated payload") from exc
    if pos + 4 != len(data):
        raise TruncatedPayloadError(f"{path}: expected {pos + 4} bytes, found {len(data)}")
    (crc,) = struct.unpack_from("<I", data, pos)
    if crc != zlib.crc32(data[:pos]):
        raise ChecksumError(f"{path}: CRC mismatch")
    return out


def load_weights(path) -> YohoModel:
    with open(path, "rb") as fh:
        data = fh.read()
    tensors = _read_tensors(data, path)
    if not tensors or tensors[0][0] != "stem/kernel" or tensors[0][1].ndim != 4:
        raise ShapeMismatchError(f"{path}: first tensor is not the stem kernel")
    stem_filters = tensors[0][1].shape[-1]
    divisor = 32 // stem_filters if stem_filters and 32 % stem_filters == 0 else 0
    if divisor < 1:
        raise ShapeMismatchError(f"{path}: stem has {stem_filters} filters")
    model = build_yoho(0, width_divisor=divisor)
    expected = model.state()
    if len(expected) != len(tensors):
        raise ShapeMismatchError(f"{path}: {len(tensors)} tensors, architecture needs {len(expected)}")
    for (want_name, want), (name, value) in zip(expected, tensors):
        if want_name != name or want.shape != value.shape:
            raise ShapeMismatchError(f"{path}: tensor {name!r} {value.shape} where {want_name!r} {want.shape} expected")
        model.set_tensor(name, value)
    return model
