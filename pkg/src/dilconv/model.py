"""Layer stacks of dilated (DL), strided (SL) and fully connected (FL) layers."""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import ops
from .errors import ConfigError, FormatError, ShapeError, StateError
from .ops import ConvParams
from .optim import AdamState
from .tensor import Shape4, Tensor

LayerKind = Literal["DL", "SL", "FL"]


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    conv: ConvParams | None = None
    units: int = 0
    activation: Literal["relu", "none"] = "relu"

    def __post_init__(self):
        if self.kind in ("DL", "SL"):
            if self.conv is None:
                raise ConfigError(f"{self.kind} layer needs ConvParams")
            if self.kind == "DL" and not self.conv.is_dilated_layer:
                raise ConfigError(f"DL layer must use stride (1,1), got {self.conv}")
            if self.kind == "SL" and not self.conv.is_strided_layer:
                raise ConfigError(f"SL layer must have one filter row and no dilation, got {self.conv}")
        elif self.kind == "FL":
            if self.units < 1:
                raise ConfigError(f"FL units must be >= 1, got {self.units}")
        else:
            raise ConfigError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ("relu", "none"):
            raise ConfigError(f"unknown activation {self.activation!r}")

    def describe(self) -> str:
        c = self.conv
        if self.kind == "DL":
            return (f"DL (filter size=({c.filter_rows},{c.filter_cols}), filters={c.out_channels}, "
                    f"dilation=({c.dilation_rows},{c.dilation_cols}))")
        if self.kind == "SL":
            return (f"SL (filter size=({c.filter_rows},{c.filter_cols}), filters={c.out_channels}, "
                    f"stride=({c.stride_rows},{c.stride_cols}))")
        return f"FL (units={self.units})"

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "activation": self.activation}
        if self.conv is not None:
            d["conv"] = {k: getattr(self.conv, k) for k in ConvParams.__dataclass_fields__}
        else:
            d["units"] = self.units
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        conv = ConvParams(**d["conv"]) if "conv" in d else None
        return cls(d["kind"], conv, d.get("units", 0), d.get("activation", "relu"))


def DL(fr, fc, filters, dilation=(1, 1), activation="relu") -> LayerSpec:
    return LayerSpec("DL", ConvParams(fr, fc, filters, dilation[0], dilation[1], 1, 1, "same"),
                     activation=activation)


def SL(fr, fc, filters, stride, activation="relu") -> LayerSpec:
    return LayerSpec("SL", ConvParams(fr, fc, filters, 1, 1, stride[0], stride[1], "valid"),
                     activation=activation)


def FL(units, activation="relu") -> LayerSpec:
    return LayerSpec("FL", units=units, activation=activation)


@dataclass(frozen=True)
class NetworkConfig:
    input_shape: Shape4
    layers: tuple[LayerSpec, ...]
    num_classes: int

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ConfigError("network has no layers")
        last = self.layers[-1]
        if last.kind != "FL" or last.units != self.num_classes or last.activation != "none":
            raise ConfigError(f"final layer must be FL({self.num_classes}) without activation, got {last}")
        seen_fl = False
        for i, layer in enumerate(self.layers):
            if layer.kind == "FL":
                seen_fl = True
            elif seen_fl:
                raise ConfigError(f"layer {i}: convolution after a fully connected layer")
        shape_check(self)

    def to_dict(self) -> dict:
        return {
            "input_shape": [self.input_shape.channels, self.input_shape.rows, self.input_shape.cols],
            "num_classes": self.num_classes,
            "layers": [layer.to_dict() for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        c, r, w = d["input_shape"]
        return cls(Shape4(1, c, r, w), tuple(LayerSpec.from_dict(x) for x in d["layers"]), d["num_classes"])

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def _net(rows, cols, *layers, num_classes=6) -> NetworkConfig:
    return NetworkConfig(Shape4(1, 1, rows, cols), layers, num_classes)


PRESETS = {
    "v1_individual": lambda: _net(
        3, 200,
        DL(3, 20, 32, (1, 2)), SL(1, 4, 32, (1, 4)),
        DL(3, 3, 32, (1, 2)), SL(1, 4, 32, (1, 4)),
        FL(1024), FL(6, "none"),
    ),
    "v1_split": lambda: _net(
        3, 100,
        DL(3, 10, 32, (1, 2)), SL(1, 4, 32, (1, 4)),
        DL(3, 3, 32, (1, 2)), SL(1, 2, 32, (1, 2)),
        FL(1024), FL(6, "none"),
    ),
    "v2": lambda: _net(
        3, 200,
        DL(3, 10, 32, (1, 2)), SL(1, 2, 32, (1, 2)),
        DL(3, 3, 32, (1, 2)), SL(1, 2, 32, (1, 2)),
        DL(3, 3, 64, (1, 1)), SL(1, 2, 64, (1, 2)),
        FL(512), FL(6, "none"),
    ),
}


def preset(name: str) -> NetworkConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def shape_check(cfg: NetworkConfig, batch: int = 1) -> list[tuple[int, ...]]:
    """Output shape after every layer; raises ShapeError naming the first infeasible layer."""
    c, r, w = cfg.input_shape.channels, cfg.input_shape.rows, cfg.input_shape.cols
    flat = None
    shapes = []
    for i, layer in enumerate(cfg.layers):
        if layer.kind == "FL":
            flat = layer.units
            shapes.append((batch, flat))
            continue
        try:
            r, w = layer.conv.output_hw(r, w)
        except ShapeError as e:
            raise ShapeError(f"layer {i} ({layer.describe()}): {e}") from None
        c = layer.conv.out_channels
        shapes.append((batch, c, r, w))
    return shapes


def flatten_size(cfg: NetworkConfig) -> int:
    s = cfg.input_shape
    size = s.channels * s.rows * s.cols
    for layer, shape in zip(cfg.layers, shape_check(cfg)):
        if layer.kind == "FL":
            return size
        size = int(np.prod(shape[1:]))
    raise ConfigError("network has no FL layer")


def param_shapes(cfg: NetworkConfig) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """(weight shape, bias shape) per layer."""
    out = []
    c = cfg.input_shape.channels
    n_in = flatten_size(cfg)
    for layer in cfg.layers:
        if layer.kind == "FL":
            out.append(((n_in, layer.units), (layer.units,)))
            n_in = layer.units
        else:
            p = layer.conv
            out.append(((p.out_channels, c, p.filter_rows, p.filter_cols), (p.out_channels,)))
            c = p.out_channels
    return out


@dataclass
class ModelParams:
    weights: list[Tensor]
    biases: list[Tensor]
    adam: list[AdamState] = field(default_factory=list)

    def tensors(self) -> list[Tensor]:
        """Trainable tensors in declaration order: w0, b0, w1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def set_tensors(self, tensors: list[Tensor]):
        self.weights = list(tensors[0::2])
        self.biases = list(tensors[1::2])

    def copy(self) -> "ModelParams":
        return ModelParams([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                           [AdamState(s.m.copy(), s.v.copy(), s.t) for s in self.adam])


def init_params(cfg: NetworkConfig, seed: int) -> ModelParams:
    """He-uniform weights (limit sqrt(6 / fan_in)), zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for w_shape, b_shape in param_shapes(cfg):
        fan_in = int(np.prod(w_shape[1:])) if len(w_shape) == 4 else w_shape[0]
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=w_shape))
        biases.append(np.zeros(b_shape))
    params = ModelParams(weights, biases)
    params.adam = [AdamState.zeros_like(t) for t in params.tensors()]
    return params


@dataclass
class ForwardCache:
    inputs: list  # per-layer input
    outputs: list  # per-layer output after activation
    cols: list  # im2col matrices of conv layers
    conv_shape: tuple | None  # shape before flatten


def forward(params: ModelParams, cfg: NetworkConfig, batch: Tensor) -> tuple[Tensor, ForwardCache]:
    s = cfg.input_shape
    if batch.ndim != 4 or batch.shape[1:] != (s.channels, s.rows, s.cols):
        raise ShapeError(f"batch shape {batch.shape} incompatible with input [B,{s.channels},{s.rows},{s.cols}]")
    x = np.ascontiguousarray(batch, dtype=np.float64)
    cache = ForwardCache([], [], [], None)
    for layer, w, b in zip(cfg.layers, params.weights, params.biases):
        if layer.kind == "FL":
            if x.ndim == 4:
                cache.conv_shape = x.shape
                x = x.reshape(x.shape[0], -1)
            cache.inputs.append(x)
            cache.cols.append(None)
            z = ops.dense_forward(x, w, b)
        else:
            cache.inputs.append(x)
            z, cols = ops.conv2d_forward_cols(x, w, b, layer.conv)
            cache.cols.append(cols)
        x = ops.relu_forward(z) if layer.activation == "relu" else z
        cache.outputs.append(x)
    return x, cache


def backward(params: ModelParams, cfg: NetworkConfig, cache: ForwardCache | None, d_logits: Tensor,
             l2_lambda: float = 0.0) -> list[Tensor]:
    """Gradients of every trainable tensor, declaration order, L2 term included."""
    if cache is None or len(cache.outputs) != len(cfg.layers):
        raise StateError("backward called without a matching forward cache")
    grads: list[Tensor] = [None] * (2 * len(cfg.layers))
    d = d_logits
    for i in range(len(cfg.layers) - 1, -1, -1):
        layer = cfg.layers[i]
        if layer.activation == "relu":
            d = ops.relu_backward(cache.outputs[i], d)
        if layer.kind == "FL":
            g = ops.dense_backward(cache.inputs[i], params.weights[i], d)
            d = g.d_input
            if i > 0 and cfg.layers[i - 1].kind != "FL":
                d = d.reshape(cache.conv_shape)
        else:
            g = ops.conv2d_backward(cache.inputs[i], params.weights[i], layer.conv, d, cols=cache.cols[i])
            d = g.d_input
        grads[2 * i] = g.d_weights
        grads[2 * i + 1] = g.d_bias
    if l2_lambda:
        _, l2 = ops.l2_penalty(params.weights, l2_lambda)
        for i, gw in enumerate(l2):
            grads[2 * i] = grads[2 * i] + gw
    return grads


def loss_and_grads(params, cfg, x, labels, l2_lambda=0.0):
    """Cross-entropy plus L2 loss, its gradients, and the softmax probabilities."""
    logits, cache = forward(params, cfg, x)
    loss, probs = ops.softmax_xent_forward(logits, labels)
    if l2_lambda:
        loss += ops.l2_penalty(params.weights, l2_lambda)[0]
    grads = backward(params, cfg, cache, ops.softmax_xent_backward(probs, labels), l2_lambda)
    return loss, grads, probs


def predict(params: ModelParams, cfg: NetworkConfig, images: Tensor, batch_size: int = 1024) -> Tensor:
    """Logits for ``images`` [N,1,M,K], evaluated in chunks."""
    out = [forward(params, cfg, images[i:i + batch_size])[0] for i in range(0, len(images), batch_size)]
    if not out:
        return np.zeros((0, cfg.num_classes))
    return np.concatenate(out)


CKPT_MAGIC = b"DCONVCKP"
CKPT_VERSION = 1


def dump_checkpoint(cfg: NetworkConfig, params: ModelParams, extra: dict | None = None) -> bytes:
    meta = json.dumps({"config": cfg.to_dict(), "extra": extra or {}}, sort_keys=True).encode()
    parts = [CKPT_MAGIC, struct.pack("<I", CKPT_VERSION), bytes.fromhex(cfg.digest()),
             struct.pack("<I", len(meta)), meta]
    tensors = params.tensors()
    parts.append(struct.pack("<I", len(tensors)))
    for t in tensors:
        parts.append(struct.pack("<I", t.ndim) + struct.pack(f"<{t.ndim}I", *t.shape))
        parts.append(np.ascontiguousarray(t, dtype="<f8").tobytes())
    return b"".join(parts)


def save_checkpoint(path, cfg, params, extra=None):
    with open(path, "wb") as fh:
        fh.write(dump_checkpoint(cfg, params, extra))


def load_checkpoint(source) -> tuple[NetworkConfig, ModelParams, dict]:
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    else:
        with open(source, "rb") as fh:
            data = fh.read()
    if data[:8] != CKPT_MAGIC:
        raise FormatError("not a checkpoint file (bad magic)")
    (version,) = struct.unpack_from("<I", data, 8)
    if version != CKPT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    try:
        digest = data[12:44].hex()
        (n_meta,) = struct.unpack_from("<I", data, 44)
        pos = 48 + n_meta
        meta = json.loads(data[48:pos])
        cfg = NetworkConfig.from_dict(meta["config"])
        if cfg.digest() != digest:
            raise FormatError("checkpoint config digest mismatch")
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        tensors = []
        for _ in range(n):
            (ndim,) = struct.unpack_from("<I", data, pos)
            shape = struct.unpack_from(f"<{ndim}I", data, pos + 4)
            pos += 4 + 4 * ndim
            size = int(np.prod(shape))
            tensors.append(np.frombuffer(data, "<f8", size, pos).astype(np.float64).reshape(shape))
            pos += 8 * size
    except FormatError:
        raise
    except (struct.error, ValueError, KeyError) as e:
        raise FormatError(f"truncated or corrupt checkpoint: {e}") from None
    if pos != len(data):
        raise FormatError(f"checkpoint has {len(data) - pos} trailing bytes")
    expected = [s for pair in param_shapes(cfg) for s in pair]
    if [t.shape for t in tensors] != expected:
        raise FormatError("checkpoint tensor shapes do not match its config")
    params = ModelParams([], [])
    params.set_tensors(tensors)
    params.adam = [AdamState.zeros_like(t) for t in tensors]
    return cfg, params, meta.get("extra", {})
