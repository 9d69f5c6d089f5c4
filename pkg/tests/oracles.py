"""Reference implementations used only by tests.

Deliberately naive: explicit loops over every index, no im2col, no BLAS.
"""
import math

import numpy as np


def same_pads(n, f, d, s):
    out = math.ceil(n / s)
    total = max((out - 1) * s + (f - 1) * d + 1 - n, 0)
    return total // 2, total - total // 2


def naive_conv2d(x, w, b, fr_d, fc_d, sr, sc, padding):
    """Direct convolution, seven nested loops over (b, f, r, col, c, i, j)."""
    B, C, R, W = x.shape
    F, _, fr, fc = w.shape
    top = bottom = left = right = 0
    if padding in ("same", "same_rows_valid_cols"):
        top, bottom = same_pads(R, fr, fr_d, sr)
    if padding == "same":
        left, right = same_pads(W, fc, fc_d, sc)
    Rp, Wp = R + top + bottom, W + left + right
    xp = [[[[0.0] * Wp for _ in range(Rp)] for _ in range(C)] for _ in range(B)]
    for bb in range(B):
        for c in range(C):
            for r in range(R):
                for col in range(W):
                    xp[bb][c][r + top][col + left] = float(x[bb, c, r, col])
    out_r = (Rp - ((fr - 1) * fr_d + 1)) // sr + 1
    out_c = (Wp - ((fc - 1) * fc_d + 1)) // sc + 1
    out = np.zeros((B, F, out_r, out_c))
    for bb in range(B):
        for f in range(F):
            for r in range(out_r):
                for col in range(out_c):
                    acc = 0.0
                    for c in range(C):
                        for i in range(fr):
                            for j in range(fc):
                                acc += xp[bb][c][r * sr + i * fr_d][col * sc + j * fc_d] * float(w[f, c, i, j])
                    out[bb, f, r, col] = acc + float(b[f])
    return out


def naive_dense(x, w, b):
    B, N = x.shape
    U = w.shape[1]
    out = np.zeros((B, U))
    for i in range(B):
        for u in range(U):
            acc = 0.0
            for k in range(N):
                acc += float(x[i, k]) * float(w[k, u])
            out[i, u] = acc + float(b[u])
    return out


def numeric_grad(f, arrays, h=1e-5):
    """Central differences of scalar ``f()`` w.r.t. every element of each array (perturbed in place)."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + h
            fp = f()
            flat[k] = old - h
            fm = f()
            flat[k] = old
            gflat[k] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


def rel_error(analytic, numeric, floor=1e-10):
    """Norm-wise relative error; differences below ``floor`` count as zero."""
    diff = float(np.linalg.norm(np.asarray(analytic) - np.asarray(numeric)))
    if diff < floor:
        return 0.0
    return diff / max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)))
