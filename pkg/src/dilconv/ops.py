"""Forward and reverse-mode kernels for the network's five operations.

Convolutions run as im2col + matrix product. Gather, scatter and the product
come from :mod:`dilconv.backend` (compiled when available). The product is
row-stable, so a sample's outputs do not depend on what else is in its batch.
Every function is pure; nothing is cached between calls.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, NamedTuple, Sequence

import numpy as np

from . import backend
from .errors import ConfigError, LabelError, ShapeError
from .tensor import Tensor

Padding = Literal["same", "valid", "same_rows_valid_cols"]
PADDINGS = ("same", "valid", "same_rows_valid_cols")


@dataclass(frozen=True)
class ConvParams:
    filter_rows: int
    filter_cols: int
    out_channels: int
    dilation_rows: int = 1
    dilation_cols: int = 1
    stride_rows: int = 1
    stride_cols: int = 1
    padding: Padding = "valid"

    def __post_init__(self):
        for name in ("filter_rows", "filter_cols", "out_channels", "dilation_rows",
                     "dilation_cols", "stride_rows", "stride_cols"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"ConvParams.{name} must be >= 1, got {getattr(self, name)}")
        if self.padding not in PADDINGS:
            raise ConfigError(f"unknown padding {self.padding!r}; expected one of {PADDINGS}")

    @property
    def is_dilated_layer(self) -> bool:
        return self.stride_rows == 1 and self.stride_cols == 1

    @property
    def is_strided_layer(self) -> bool:
        return self.filter_rows == 1 and self.dilation_rows == 1 and self.dilation_cols == 1

    def pads(self, rows: int, cols: int) -> tuple[int, int, int, int]:
        """Zero padding ``(top, bottom, left, right)`` for an input of ``rows x cols``."""
        same_r = self.padding in ("same", "same_rows_valid_cols")
        same_c = self.padding == "same"
        top, bottom = _same_pad(rows, self.filter_rows, self.dilation_rows, self.stride_rows) if same_r else (0, 0)
        left, right = _same_pad(cols, self.filter_cols, self.dilation_cols, self.stride_cols) if same_c else (0, 0)
        return top, bottom, left, right

    def output_hw(self, rows: int, cols: int) -> tuple[int, int]:
        top, bottom, left, right = self.pads(rows, cols)
        out_r = _valid_extent(rows + top + bottom, self.filter_rows, self.dilation_rows, self.stride_rows)
        out_c = _valid_extent(cols + left + right, self.filter_cols, self.dilation_cols, self.stride_cols)
        if out_r < 1 or out_c < 1:
            raise ShapeError(
                f"effective kernel ({effective_extent(self.filter_rows, self.dilation_rows)}, "
                f"{effective_extent(self.filter_cols, self.dilation_cols)}) does not fit padded input "
                f"({rows + top + bottom}, {cols + left + right})"
            )
        return out_r, out_c


def effective_extent(f: int, d: int) -> int:
    return (f - 1) * d + 1


def _valid_extent(n: int, f: int, d: int, s: int) -> int:
    k = effective_extent(f, d)
    if k > n:
        return 0
    return (n - k) // s + 1


def _same_pad(n: int, f: int, d: int, s: int) -> tuple[int, int]:
    out = -(-n // s)
    total = max((out - 1) * s + effective_extent(f, d) - n, 0)
    # odd totals put the extra zero on the trailing side
    return total // 2, total - total // 2


class OpGradients(NamedTuple):
    d_input: Tensor
    d_weights: Tensor | None = None
    d_bias: Tensor | None = None


def _check_conv(x: Tensor, w: Tensor, b: Tensor | None, p: ConvParams):
    if x.ndim != 4:
        raise ShapeError(f"conv input must be rank 4 [B,C,R,W], got {x.shape}")
    if w.ndim != 4:
        raise ShapeError(f"conv weights must be rank 4 [F,C,fr,fc], got {w.shape}")
    F, C, fr, fc = w.shape
    if C != x.shape[1]:
        raise ShapeError(f"channel mismatch: input has {x.shape[1]}, weights expect {C}")
    if (F, fr, fc) != (p.out_channels, p.filter_rows, p.filter_cols):
        raise ShapeError(f"weights {w.shape} disagree with params {p}")
    if b is not None and b.shape != (F,):
        raise ShapeError(f"bias must have shape ({F},), got {b.shape}")


def _im2col(x: Tensor, p: ConvParams):
    B, C, R, W = x.shape
    top, bottom, left, right = p.pads(R, W)
    out_r, out_c = p.output_hw(R, W)
    if top or bottom or left or right:
        xp = np.pad(x, ((0, 0), (0, 0), (top, bottom), (left, right)))
    else:
        xp = np.ascontiguousarray(x, dtype=np.float64)
    cols = backend.kernels.im2col(xp, p.filter_rows, p.filter_cols, p.dilation_rows, p.dilation_cols,
                                  p.stride_rows, p.stride_cols, out_r, out_c)
    return cols, (out_r, out_c)


def conv2d_forward(x: Tensor, w: Tensor, b: Tensor, p: ConvParams) -> Tensor:
    _check_conv(x, w, b, p)
    out, _ = conv2d_forward_cols(x, w, b, p)
    return out


def conv2d_forward_cols(x, w, b, p):
    """Forward pass that also returns the im2col matrix for reuse in backward."""
    cols, (out_r, out_c) = _im2col(x, p)
    F = w.shape[0]
    y = backend.matmul(cols, w.reshape(F, -1).T)
    y += b
    y = y.reshape(x.shape[0], out_r, out_c, F).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(y), cols


def conv2d_backward(x: Tensor, w: Tensor, p: ConvParams, d_out: Tensor, cols=None) -> OpGradients:
    _check_conv(x, w, None, p)
    B, C, R, W = x.shape
    F = w.shape[0]
    out_r, out_c = p.output_hw(R, W)
    if d_out.shape != (B, F, out_r, out_c):
        raise ShapeError(f"d_out shape {d_out.shape} != forward output shape {(B, F, out_r, out_c)}")
    if cols is None:
        cols, _ = _im2col(x, p)
    g = np.ascontiguousarray(d_out.transpose(0, 2, 3, 1)).reshape(-1, F)
    d_w = backend.matmul(g.T, cols).reshape(w.shape)
    d_b = d_out.sum(axis=(0, 2, 3))
    d_cols = backend.matmul(g, w.reshape(F, -1))
    top, bottom, left, right = p.pads(R, W)
    dxp = backend.kernels.col2im(d_cols, B, C, R + top + bottom, W + left + right, p.filter_rows,
                                 p.filter_cols, p.dilation_rows, p.dilation_cols, p.stride_rows, p.stride_cols,
                                 out_r, out_c)
    d_x = np.ascontiguousarray(dxp[:, :, top:top + R, left:left + W])
    return OpGradients(d_x, d_w, d_b)


def relu_forward(x: Tensor) -> Tensor:
    return np.maximum(x, 0.0)


def relu_backward(x: Tensor, d_out: Tensor) -> Tensor:
    if x.shape != d_out.shape:
        raise ShapeError(f"shape mismatch: {x.shape} vs {d_out.shape}")
    return np.where(x > 0, d_out, 0.0)


def dense_forward(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"dense shapes disagree: x {x.shape}, W {w.shape}")
    if b.shape != (w.shape[1],):
        raise ShapeError(f"bias must have shape ({w.shape[1]},), got {b.shape}")
    y = backend.matmul(x, w)
    y += b
    return y


def dense_backward(x: Tensor, w: Tensor, d_out: Tensor) -> OpGradients:
    if d_out.shape != (x.shape[0], w.shape[1]):
        raise ShapeError(f"d_out shape {d_out.shape} != {(x.shape[0], w.shape[1])}")
    return OpGradients(backend.matmul(d_out, w.T), backend.matmul(x.T, d_out), d_out.sum(axis=0))


def _check_labels(labels, batch: int, k: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (batch,):
        raise ShapeError(f"expected {batch} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise LabelError(f"labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")
    return labels.astype(np.intp)


def softmax_xent_per_sample(logits: Tensor, labels) -> tuple[Tensor, Tensor]:
    """Per-row cross-entropy and softmax probabilities, max-shifted for stability."""
    if logits.ndim != 2:
        raise ShapeError(f"logits must be [B,K], got {logits.shape}")
    B, K = logits.shape
    labels = _check_labels(labels, B, K)
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    z = e.sum(axis=1, keepdims=True)
    probs = e / z
    losses = np.log(z[:, 0]) - shifted[np.arange(B), labels]
    return losses, probs


def softmax_xent_forward(logits: Tensor, labels) -> tuple[float, Tensor]:
    """Mean cross-entropy of ``labels`` under row-wise softmax of ``logits``."""
    losses, probs = softmax_xent_per_sample(logits, labels)
    return float(losses.mean()), probs


def softmax_xent_backward(probs: Tensor, labels) -> Tensor:
    B, K = probs.shape
    labels = _check_labels(labels, B, K)
    d = probs.copy()
    d[np.arange(B), labels] -= 1.0
    return d / B


def l2_penalty(weights: Sequence[Tensor], lam: float) -> tuple[float, list[Tensor]]:
    if lam < 0:
        raise ConfigError(f"L2 weight must be >= 0, got {lam}")
    loss = lam * sum(float(np.sum(w * w)) for w in weights)
    return loss, [2.0 * lam * w for w in weights]
