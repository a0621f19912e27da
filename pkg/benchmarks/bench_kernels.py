"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from actionrec import kernels
from actionrec.detector import train_multiclass
from actionrec.imaging import ImageBuffer
from actionrec.segmentation import segment
from actionrec.structmodel import ActionModel, infer_greedy, param_length


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def cases():
    rng = np.random.default_rng(0)
    img = ImageBuffer(rng.random((120, 160, 3)))
    yield "segment 120x160", lambda b: segment(img, backend=b)

    K = 23
    model = ActionModel(rng.normal(size=param_length(K)), K)
    xs = [rng.dirichlet(np.ones(K), size=60) for _ in range(20)]
    yield "greedy inference 20 x (T=60, K=23)", lambda b: [infer_greedy(model, x, backend=b) for x in xs]

    X = rng.normal(size=(300, 64))
    y = rng.integers(0, 10, 300)
    yield "Crammer-Singer SGD 300x64, 20 epochs", lambda b: train_multiclass(X, y, epochs=20, backend=b)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = kernels.available_backends()
    print(f"{'kernel':40s}" + "".join(f"{b:>12s}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for name, fn in cases():
        t = [best_of(lambda: fn(b), args.repeat) for b in backends]
        row = f"{name:40s}" + "".join(f"{v * 1e3:10.1f}ms" for v in t)
        if len(t) > 1:
            row += f"{t[1] / t[0]:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
