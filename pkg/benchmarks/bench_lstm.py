"""Time the LSTM recurrence kernels: compiled backend versus the numpy fallback.

    python3 benchmarks/bench_lstm.py [--repeat 5] [--dtype float32]

Prints one JSON line per (backend, shape) with the best forward and
forward+backward wall time in milliseconds.
"""
import argparse
import json
import timeit

import numpy as np

from mtm.kernels import available_backends

SHAPES = [  # batch, steps, hidden
    (32, 20, 100),
    (32, 60, 100),
    (32, 20, 32),
    (8, 200, 100),
]


def bench(mod, B, T, H, dtype, repeat):
    rng = np.random.default_rng(0)
    xp = rng.uniform(-1, 1, (B, T, 4 * H)).astype(dtype)
    w_h = rng.uniform(-0.1, 0.1, (H, 4 * H)).astype(dtype)
    lengths = rng.integers(T // 2, T + 1, B)
    dh = rng.uniform(-1, 1, (B, T, H)).astype(dtype)

    def fwd():
        return mod.lstm_forward(xp, w_h, lengths, False)

    def both():
        h, c, g = fwd()
        mod.lstm_backward(dh, w_h, lengths, False, h, c, g)

    t_fwd = min(timeit.repeat(fwd, number=1, repeat=repeat))
    t_both = min(timeit.repeat(both, number=1, repeat=repeat))
    return 1e3 * t_fwd, 1e3 * t_both


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--dtype", choices=["float32", "float64"], default="float32")
    args = ap.parse_args()
    backends = available_backends()
    for B, T, H in SHAPES:
        base = None
        for name, mod in backends.items():
            f, fb = bench(mod, B, T, H, np.dtype(args.dtype), args.repeat)
            row = {"backend": name, "batch": B, "steps": T, "hidden": H, "dtype": args.dtype,
                   "forward_ms": round(f, 3), "forward_backward_ms": round(fb, 3)}
            if name == "python":
                base = fb
            elif base is not None:
                row["speedup"] = round(base / fb, 2)
            print(json.dumps(row), flush=True)
    if len(backends) == 1:
        print(json.dumps({"note": "compiled backend unavailable; only the numpy fallback was timed"}))


if __name__ == "__main__":
    main()
