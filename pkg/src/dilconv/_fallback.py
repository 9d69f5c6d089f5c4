"""Pure numpy versions of the convolution gather/scatter kernels."""
import numpy as np


def im2col(xp, fr, fc, dr, dc, sr, sc, out_rows, out_cols):
    B, C = xp.shape[:2]
    cols = np.empty((B, out_rows, out_cols, C, fr, fc), dtype=np.float64)
    for i in range(fr):
        r0 = i * dr
        rs = slice(r0, r0 + sr * (out_rows - 1) + 1, sr)
        for j in range(fc):
            w0 = j * dc
            ws = slice(w0, w0 + sc * (out_cols - 1) + 1, sc)
            cols[:, :, :, :, i, j] = xp[:, :, rs, ws].transpose(0, 2, 3, 1)
    return cols.reshape(B * out_rows * out_cols, C * fr * fc)


def col2im(cols, B, C, rows_p, cols_p, fr, fc, dr, dc, sr, sc, out_rows, out_cols):
    dxp = np.zeros((B, C, rows_p, cols_p), dtype=np.float64)
    taps = cols.reshape(B, out_rows, out_cols, C, fr, fc).transpose(0, 3, 4, 5, 1, 2)
    for i in range(fr):
        r0 = i * dr
        rs = slice(r0, r0 + sr * (out_rows - 1) + 1, sr)
        for j in range(fc):
            w0 = j * dc
            ws = slice(w0, w0 + sc * (out_cols - 1) + 1, sc)
            dxp[:, :, rs, ws] += taps[:, :, i, j]
    return dxp


def matmul(a, b):
    """Row-stable product: ascending-k accumulation of unfused multiply-adds."""
    M, K = a.shape
    if b.shape[0] != K:
        raise ValueError(f"inner dimensions disagree: {K} vs {b.shape[0]}")
    c = np.zeros((M, b.shape[1]), dtype=np.float64)
    # overflow surfaces as a non-finite loss, same as in the compiled kernel
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(K):
            c += a[:, k, None] * b[k]
    return c
