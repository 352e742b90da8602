"""Compare the compiled and pure-numpy kernel backends.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""
from __future__ import annotations

import argparse
import json
import timeit
from contextlib import contextmanager

import numpy as np

from dyngcn import _kernels_py, kernels
from dyngcn import layers as L

try:
    from dyngcn import _kernels_c
except ImportError:
    _kernels_c = None


@contextmanager
def backend(mod):
    saved = {n: getattr(kernels, n) for n in kernels.__all__ if n != "BACKEND"}
    for n in saved:
        setattr(kernels, n, getattr(mod, n))
    try:
        yield
    finally:
        for n, f in saved.items():
            setattr(kernels, n, f)


def workloads(rng):
    R, N = 500, 300
    a = rng.standard_normal((R, 4 * N))
    c = rng.standard_normal((R, N))
    dh = rng.standard_normal((R, N))
    gates, _, tc, _ = _kernels_py.lstm_cell_forward(a, c, False)
    ranks2 = 2 * np.arange(1, 21, dtype=np.int64)
    p = L.init_lstm(rng, 32, 32)
    z = rng.standard_normal((6, 100, 32))
    out, _ = L.v_lstm_forward(z, p)
    dout = rng.standard_normal(out.shape)

    def vlstm():
        _, node = L.v_lstm_forward(z, p)
        L.layer_backward(node, dout)

    return {
        f"lstm cell forward (R={R}, N={N})": lambda m: m.lstm_cell_forward(a, c, False),
        f"lstm cell backward (R={R}, N={N})": lambda m: m.lstm_cell_backward(gates, c, tc, dh, dh, False),
        "wilcoxon tail count (n=20)": lambda m: m.signed_rank_upper_count(ranks2, 150),
        "v-lstm forward+backward (T=6, V=100, 32->32)": lambda m: vlstm(),
    }


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    mods = {"python": _kernels_py}
    if _kernels_c is not None:
        mods["cython"] = _kernels_c
    for name, fn in workloads(rng).items():
        row = {"workload": name}
        for label, mod in mods.items():
            with backend(mod):
                number = 1 if "wilcoxon" in name else 10
                best = min(timeit.repeat(lambda: fn(mod), number=number, repeat=args.repeat)) / number
            row[f"{label}_ms"] = round(best * 1e3, 4)
        if "cython_ms" in row:
            row["speedup"] = round(row["python_ms"] / row["cython_ms"], 2)
        print(json.dumps(row))


if __name__ == "__main__":
    main()
