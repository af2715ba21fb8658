"""Timing helpers shared by the CLI and the benchmark script."""
from __future__ import annotations

import time

import numpy as np

from . import kernels
from .errors import InputError
from .tensor import DenseSpec, GapSpec, count_params_flops, fully_connected, global_average_pool


def _time_per_call(fn, iterations: int) -> float:
    fn()  # warm-up
    t0 = time.perf_counter()
    for _ in range(iterations):
        fn()
    return (time.perf_counter() - t0) / iterations


def gap_fc_report(height: int = 3, width: int = 3, channels: int = 32, units: int = 128,
                  iterations: int = 10_000, seed: int = 0) -> dict:
    """Compare an FC head on the flattened map with GAP followed by a C->units layer.

    Keys ending in ``_seconds`` are wall-clock measurements; everything else
    is exact and depends only on the shape arguments.
    """
    if min(height, width, channels, units) < 1:
        raise InputError("map sizes and unit count must be positive")
    if iterations < 1:
        raise InputError("iterations must be positive")
    flat = height * width * channels
    fc = count_params_flops(DenseSpec(flat, units))
    pool = count_params_flops(GapSpec(), (height, width, channels))
    head = count_params_flops(DenseSpec(channels, units))
    gap_params = pool.param_count + head.param_count
    gap_flops = pool.flop_count + head.flop_count

    rng = np.random.default_rng(seed)
    x = rng.normal(size=(height, width, channels))
    W_fc, b_fc = rng.normal(size=(units, flat)), rng.normal(size=units)
    W_head, b_head = rng.normal(size=(units, channels)), rng.normal(size=units)
    t_fc = _time_per_call(lambda: fully_connected(x.reshape(-1), W_fc, b_fc), iterations)
    t_pool = _time_per_call(lambda: global_average_pool(x), iterations)
    t_gap = _time_per_call(lambda: fully_connected(global_average_pool(x), W_head, b_head), iterations)
    return {
        "height": height, "width": width, "channels": channels, "units": units, "iterations": iterations,
        "fc_params": fc.param_count, "fc_flops": fc.flop_count,
        "gap_pool_params": pool.param_count, "gap_pool_flops": pool.flop_count,
        "gap_head_params": head.param_count, "gap_head_flops": head.flop_count,
        "gap_path_params": gap_params, "gap_path_flops": gap_flops,
        "param_ratio": gap_params / fc.param_count,
        "flop_ratio": gap_flops / fc.flop_count,
        "pool_vs_fc_flop_ratio": pool.flop_count / fc.flop_count,
        "fc_forward_seconds": t_fc,
        "gap_pool_forward_seconds": t_pool,
        "gap_path_forward_seconds": t_gap,
        "time_ratio_seconds": t_gap / t_fc,
    }


def kernel_report(batch: int = 32, seq_len: int = 60, hidden: int = 32, repeats: int = 20,
                  seed: int = 0) -> list[dict]:
    """Per-call times of each kernel under both backends.

    Returns one row per kernel; the compiled columns are ``None`` when the
    extension is not built.
    """
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(batch, seq_len, 4))
    W = rng.normal(scale=0.3, size=(4 * hidden, 4 + hidden))
    b = rng.normal(scale=0.1, size=4 * hidden)
    dh = rng.normal(size=(batch, hidden))
    xp = rng.normal(size=(10, 10, 16))
    wc = rng.normal(size=(3, 3, 16, 16))
    wd = rng.normal(size=(3, 3, 16))

    def cases(mod):
        gates, cs, hs = mod.lstm_forward(X, W, b)
        return {
            "lstm_forward": lambda: mod.lstm_forward(X, W, b),
            "lstm_backward": lambda: mod.lstm_backward(X, W, gates, cs, hs, dh),
            "conv2d": lambda: mod.conv2d(xp, wc, 1),
            "depthwise2d": lambda: mod.depthwise2d(xp, wd, 1),
        }

    py = cases(kernels.python_backend)
    cy = cases(kernels.compiled_backend) if kernels.compiled_backend is not None else None
    rows = []
    for name, fn in py.items():
        t_py = _time_per_call(fn, repeats)
        t_cy = _time_per_call(cy[name], repeats) if cy else None
        rows.append({"kernel": name, "python_seconds": t_py, "compiled_seconds": t_cy,
                     "speedup": (t_py / t_cy) if t_cy else None})
    return rows
