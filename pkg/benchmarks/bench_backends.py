"""Compare the compiled kernels with the pure-Python fallback.

    python3 benchmarks/bench_backends.py [--repeat 5]

Prints the best-of-N time per operation and backend, and the speedup.
"""

import argparse
import timeit

import numpy as np

from a2k import _backend
from a2k.attention import A2KConfig, a2k_forward
from a2k.tensor import Pattern, argmax_last_axis, contract, softmax_last_axis


def cases(rng):
    q = rng.standard_normal((1, 8, 8, 64, 64)).astype(np.float32)
    k = rng.standard_normal((1, 8, 8, 64, 64)).astype(np.float32)
    logits = rng.standard_normal((8, 64, 64, 64)).astype(np.float32)
    content = rng.standard_normal((1, 64, 64, 64)).astype(np.float32)
    style = rng.standard_normal((1, 64, 64, 64)).astype(np.float32)
    cfg = A2KConfig(channels=64, patch_edge=8, heads=8)
    return {
        "contract DA scores": lambda: contract(q, k, Pattern.DA_SCORES),
        "contract PA step1": lambda: contract(q, k, Pattern.PA1_SCORES),
        "softmax rows": lambda: softmax_last_axis(logits),
        "argmax rows": lambda: argmax_last_axis(logits),
        "a2k_forward 64x64x64": lambda: a2k_forward(content, style, cfg),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    backends = _backend.available()
    ops = cases(np.random.default_rng(0))
    print(f"{'operation':<24}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for name, fn in ops.items():
        times = []
        for b in backends:
            with _backend.use(b):
                fn()
                times.append(min(timeit.repeat(fn, number=1, repeat=args.repeat)))
        row = f"{name:<24}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times)
        if len(times) > 1:
            row += f"{times[1] / times[0]:>11.2f}x"
        print(row)


if __name__ == "__main__":
    main()
