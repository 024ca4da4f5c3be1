"""Timing comparison of the two kernel backends.

Runs the segment softmax / entropy / span-decode kernels over batches of
packed segments at several sizes and reports the median wall time per call
for the compiled backend and the pure-numpy twin, plus the speedup.

Usage:
    python3 benchmarks/bench_kernels.py [--repeats 30] [--cap 30]

The backend is chosen per-process via the QAPLAN_NUMBA environment flag, so
this script re-invokes itself once for each backend and merges the results.
"""
from __future__ import annotations

import argparse
import json
import os
import statistics
import subprocess
import sys
import time

import numpy as np

# (number of segments, tokens per segment)
SIZES = [(64, 32), (256, 64), (1024, 128), (2048, 256)]


def make_problem(n_segments: int, seg_len: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    scores = rng.normal(size=n_segments * seg_len)
    offsets = np.arange(0, (n_segments + 1) * seg_len, seg_len, dtype=np.int64)
    return scores, offsets


def bench_one(fn, repeats: int) -> float:
    fn()  # warm-up: triggers compilation on the compiled backend
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return statistics.median(times)


def run_backend(repeats: int, cap: int) -> dict:
    from qaplan import kernels

    results = {"backend": kernels.backend_name(), "rows": []}
    for n_segments, seg_len in SIZES:
        scores, offsets = make_problem(n_segments, seg_len)
        probs = kernels.segment_softmax(scores, offsets)
        row = {
            "n_segments": n_segments,
            "seg_len": seg_len,
            "softmax_s": bench_one(lambda: kernels.segment_softmax(scores, offsets), repeats),
            "entropy_s": bench_one(lambda: kernels.segment_entropy(probs, offsets), repeats),
            "decode_s": bench_one(lambda: kernels.decode_spans(probs, probs, offsets, cap), repeats),
        }
        results["rows"].append(row)
    return results


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=30)
    parser.add_argument("--cap", type=int, default=30)
    parser.add_argument("--backend-only", action="store_true",
                        help=argparse.SUPPRESS)  # internal: emit one backend's JSON
    args = parser.parse_args()

    if args.backend_only:
        print(json.dumps(run_backend(args.repeats, args.cap)))
        return 0

    runs = {}
    for flag in ("1", "0"):
        env = dict(os.environ, QAPLAN_NUMBA=flag)
        proc = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--backend-only",
             "--repeats", str(args.repeats), "--cap", str(args.cap)],
            capture_output=True, text=True, env=env, check=True,
        )
        data = json.loads(proc.stdout)
        runs[data["backend"]] = data["rows"]

    if set(runs) != {"numba", "numpy"}:
        print(f"note: only the {'/'.join(sorted(runs))} backend is available", file=sys.stderr)

    header = f"{'segments':>9} {'seg_len':>8} {'kernel':>8} " + "".join(
        f"{name + ' (ms)':>14}" for name in sorted(runs)) + f"{'speedup':>9}"
    print(header)
    print("-" * len(header))
    names = sorted(runs)
    for i, (n_segments, seg_len) in enumerate(SIZES):
        for kernel in ("softmax", "entropy", "decode"):
            cells = [runs[name][i][f"{kernel}_s"] for name in names]
            line = f"{n_segments:>9} {seg_len:>8} {kernel:>8}"
            for value in cells:
                line += f"{value * 1000.0:>14.3f}"
            if len(cells) == 2:
                numba_t = runs["numba"][i][f"{kernel}_s"]
                numpy_t = runs["numpy"][i][f"{kernel}_s"]
                line += f"{numpy_t / numba_t:>8.1f}x"
            print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
