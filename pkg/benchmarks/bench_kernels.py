"""Compiled vs numpy kernels on the shapes the preset networks actually run.

    python3 benchmarks/bench_kernels.py [--batch 256] [--repeat 3] [--preset v1_split]

Reports the best of ``--repeat`` wall-clock timings per case. The ``blas``
column is numpy's ``@`` for reference; it is faster but its rounding depends
on the batch size, which is why training does not use it.
"""
import argparse
import time

import numpy as np

from dilconv import backend, model, ops


def best_of(fn, repeat):
    fn()  # warm-up
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def with_backend(name, fn):
    def run():
        saved = backend.kernels
        backend.kernels = backend.BACKENDS[name]
        try:
            fn()
        finally:
            backend.kernels = saved
    return run


def layer_cases(cfg, batch, rng):
    """(label, input, weights, bias, params) for every conv layer of a preset."""
    s = cfg.input_shape
    x = rng.normal(size=(batch, s.channels, s.rows, s.cols))
    params = model.init_params(cfg, 0)
    out = []
    for i, (layer, w, b) in enumerate(zip(cfg.layers, params.weights, params.biases)):
        if layer.kind == "FL":
            break
        out.append((f"L{i} {layer.describe()}", x, w, b, layer.conv))
        x = ops.relu_forward(ops.conv2d_forward(x, w, b, layer.conv))
    return out, params


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=256)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--preset", default="v1_split", choices=sorted(model.PRESETS))
    args = ap.parse_args(argv)

    names = [n for n in ("cython", "python") if n in backend.BACKENDS]
    rng = np.random.default_rng(0)
    cfg = model.preset(args.preset)
    cases, params = layer_cases(cfg, args.batch, rng)
    rows = []

    for label, x, w, b, p in cases:
        out, cols = ops.conv2d_forward_cols(x, w, b, p)
        d_out = rng.normal(size=out.shape)
        top, bottom, left, right = p.pads(x.shape[2], x.shape[3])
        xp = np.pad(x, ((0, 0), (0, 0), (top, bottom), (left, right)))
        ro, wo = out.shape[2:]
        geo = (p.filter_rows, p.filter_cols, p.dilation_rows, p.dilation_cols, p.stride_rows, p.stride_cols, ro, wo)
        wm = w.reshape(w.shape[0], -1).T.copy()
        g = rng.normal(size=(cols.shape[0], w.shape[0]))
        timed = {}
        for n in names:
            k = backend.BACKENDS[n]
            timed[n] = [
                best_of(lambda: k.im2col(xp, *geo), args.repeat),
                best_of(lambda: k.col2im(g @ wm.T, x.shape[0], x.shape[1], *xp.shape[2:], *geo), args.repeat),
                best_of(lambda: k.matmul(cols, wm), args.repeat),
                best_of(with_backend(n, lambda: ops.conv2d_backward(x, w, p, d_out, cols=cols)), args.repeat),
            ]
        blas = best_of(lambda: cols @ wm, args.repeat)
        rows.append((label, f"[{cols.shape[0]}x{cols.shape[1]}]x[{wm.shape[1]}]", timed, blas))

    s = cfg.input_shape
    x = rng.normal(size=(args.batch, s.channels, s.rows, s.cols))
    y = rng.integers(0, cfg.num_classes, args.batch)
    step = {n: best_of(with_backend(n, lambda: model.loss_and_grads(params, cfg, x, y)), args.repeat)
            for n in names}

    print(f"preset {args.preset}, batch {args.batch}, best of {args.repeat}, times in ms")
    lw = max(len(r[0]) for r in rows) + 2
    head = f"{'layer':<{lw}}{'gemm':>22}"
    parts = ["im2col", "col2im", "matmul", "bwd"]
    for n in names:
        head += "".join(f"{n[:2] + ':' + c:>12}" for c in parts)
    print(head + f"{'blas':>10}")
    for label, shape, timed, blas in rows:
        line = f"{label:<{lw}}{shape:>22}"
        for n in names:
            line += "".join(f"{1e3 * t:12.2f}" for t in timed[n])
        print(line + f"{1e3 * blas:10.2f}")
    print()
    for n in names:
        print(f"full forward+backward step, {n}: {1e3 * step[n]:.1f} ms")
    if len(names) == 2:
        print(f"speed-up of the compiled kernels: {step['python'] / step['cython']:.2f}x")


if __name__ == "__main__":
    main()
