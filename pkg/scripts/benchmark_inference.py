#!/usr/bin/env python3
"""Time full-grid density inference from a checkpoint.

Pin the process to one thread before importing numpy so the number is an
honest single-core figure:

    OMP_NUM_THREADS=1 python scripts/benchmark_inference.py ckpt.ftc
"""
import argparse
import os
import time

for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")

from fieldtopo import io, service  # noqa: E402


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("checkpoint")
    ap.add_argument("--res", default="300x100")
    ap.add_argument("--q", type=float, default=None)
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args()

    ckpt = io.load_checkpoint(args.checkpoint)
    res = tuple(int(t) for t in args.res.lower().split("x"))
    q = args.q
    if q is None and ckpt.space is not None:
        q = 0.5 * (ckpt.space.lo + ckpt.space.hi)

    service.infer_grid(ckpt, q, res)  # warm caches once
    times = []
    for _ in range(args.repeats):
        t0 = time.perf_counter()
        service.infer_grid(ckpt, q, res)
        times.append(time.perf_counter() - t0)
    times.sort()
    print(f"resolution {res}  repeats {args.repeats}")
    print(f"median {1e3 * times[len(times) // 2]:.2f} ms   "
          f"min {1e3 * times[0]:.2f} ms   max {1e3 * times[-1]:.2f} ms")


if __name__ == "__main__":
    main()
