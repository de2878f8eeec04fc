"""Time the compiled client-training kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--vocab 32] [--samples 200] [--repeat 20]
"""
import argparse
import timeit

import numpy as np

from greenfl import kernels


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--vocab", type=int, default=32)
    ap.add_argument("--samples", type=int, default=200)
    ap.add_argument("--epochs", type=int, default=1)
    ap.add_argument("--batch", type=int, default=8)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    v = args.vocab
    params = rng.normal(0, 0.1, v * v + v)
    prev, nxt = rng.integers(0, v, args.samples), rng.integers(0, v, args.samples)
    order = np.concatenate([rng.permutation(args.samples) for _ in range(args.epochs)])

    backends = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
    print(f"vocab {v}  samples {args.samples}  epochs {args.epochs}  batch {args.batch}")
    timings = {}
    for b in backends:
        sgd = lambda: kernels.local_sgd(params.copy(), prev, nxt, order, v, 0.1, args.batch, args.epochs, backend=b)
        lp = lambda: kernels.token_log_probs(params, prev, nxt, v, backend=b)
        timings[b] = (
            min(timeit.repeat(sgd, number=1, repeat=args.repeat)),
            min(timeit.repeat(lp, number=1, repeat=args.repeat)),
        )
        print(f"{b:>7}  local_sgd {1e3 * timings[b][0]:8.3f} ms   token_log_probs {1e3 * timings[b][1]:8.3f} ms")
    if len(timings) == 2:
        (ps, pl), (cs, cl) = timings["python"], timings["cython"]
        print(f"speedup  local_sgd {ps / cs:6.1f}x   token_log_probs {pl / cl:6.1f}x")
    else:
        print("compiled extension not built; only the fallback was timed")


if __name__ == "__main__":
    main()
