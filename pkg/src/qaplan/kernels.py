"""Hot numeric kernels over packed ragged arrays.

Per-sample token vectors are packed back to back into one flat array;
`offsets` (int64, length n_segments + 1, offsets[0] == 0, offsets[-1] ==
len(values)) marks the segment boundaries. Zero-length segments are not
allowed.

Each kernel has a numba-jitted version and a pure numpy twin. The jitted
versions are used when numba imports and the environment variable
QAPLAN_NUMBA is not set to "0"; the numpy twins otherwise. Both stay
importable so the parity tests and benchmarks/bench_kernels.py can compare
them directly.
"""
from __future__ import annotations

import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_WANT_NUMBA = os.environ.get("QAPLAN_NUMBA", "1") != "0"
_HAS_NUMBA = False
if _WANT_NUMBA:
    try:
        from numba import njit

        _HAS_NUMBA = True
    except ImportError:
        _HAS_NUMBA = False


def backend_name() -> str:
    return "numba" if _HAS_NUMBA else "numpy"


def check_offsets(offsets: np.ndarray, total: int) -> None:
    if offsets.ndim != 1 or offsets.size < 2 or offsets[0] != 0 or offsets[-1] != total:
        raise ValueError("offsets must start at 0 and end at the packed length")
    if np.any(np.diff(offsets) <= 0):
        raise ValueError("zero-length segments are not allowed")


# ---------------------------------------------------------------- numpy twins

def segment_softmax_numpy(scores: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Softmax within each segment, max-shifted for stability."""
    lens = np.diff(offsets)
    starts = offsets[:-1]
    seg_max = np.maximum.reduceat(scores, starts)
    z = np.exp(scores - np.repeat(seg_max, lens))
    seg_sum = np.add.reduceat(z, starts)
    return z / np.repeat(seg_sum, lens)


def segment_entropy_numpy(probs: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Shannon entropy (natural log) of each segment; 0*log(0) counts as 0."""
    safe = np.where(probs > 0.0, probs, 1.0)
    plogp = probs * np.log(safe)
    out = -np.add.reduceat(plogp, offsets[:-1])
    return np.maximum(out, 0.0)


def _decode_one_numpy(sp: np.ndarray, ep: np.ndarray, cap: int) -> tuple[int, int]:
    n = sp.size
    w = min(cap, n)
    if w > 1:
        padded = np.concatenate([ep, np.full(w - 1, -np.inf)])
    else:
        padded = ep
    windows = sliding_window_view(padded, w)
    best_e_local = np.argmax(windows, axis=1)
    best_e_val = windows[np.arange(n), best_e_local]
    products = sp * best_e_val
    s = int(np.argmax(products))
    if products[s] <= 0.0:
        # every admissible pair has zero mass; ties resolve to the earliest pair
        return 0, 0
    return s, s + int(best_e_local[s])


def decode_spans_numpy(start_probs: np.ndarray, end_probs: np.ndarray,
                       offsets: np.ndarray, max_span_len: int) -> tuple[np.ndarray, np.ndarray]:
    """Best (start, end) per segment: argmax of start*end with end >= start
    and span length <= max_span_len. Ties go to the smaller start, then the
    smaller end. Indices are local to the segment."""
    n_seg = offsets.size - 1
    starts = np.empty(n_seg, dtype=np.int64)
    ends = np.empty(n_seg, dtype=np.int64)
    for i in range(n_seg):
        a, b = offsets[i], offsets[i + 1]
        s, e = _decode_one_numpy(start_probs[a:b], end_probs[a:b], max_span_len)
        starts[i] = s
        ends[i] = e
    return starts, ends


# ---------------------------------------------------------------- numba twins

if _HAS_NUMBA:

    @njit(cache=True)
    def segment_softmax_numba(scores, offsets):  # pragma: no cover - exercised via dispatch
        out = np.empty_like(scores)
        for i in range(offsets.size - 1):
            a, b = offsets[i], offsets[i + 1]
            m = scores[a]
            for j in range(a + 1, b):
                if scores[j] > m:
                    m = scores[j]
            total = 0.0
            for j in range(a, b):
                v = np.exp(scores[j] - m)
                out[j] = v
                total += v
            for j in range(a, b):
                out[j] /= total
        return out

    @njit(cache=True)
    def segment_entropy_numba(probs, offsets):  # pragma: no cover
        n_seg = offsets.size - 1
        out = np.empty(n_seg, dtype=np.float64)
        for i in range(n_seg):
            acc = 0.0
            for j in range(offsets[i], offsets[i + 1]):
                p = probs[j]
                if p > 0.0:
                    acc -= p * np.log(p)
            out[i] = acc if acc > 0.0 else 0.0
        return out

    @njit(cache=True)
    def decode_spans_numba(start_probs, end_probs, offsets, max_span_len):  # pragma: no cover
        n_seg = offsets.size - 1
        starts = np.empty(n_seg, dtype=np.int64)
        ends = np.empty(n_seg, dtype=np.int64)
        for i in range(n_seg):
            a, b = offsets[i], offsets[i + 1]
            n = b - a
            best_p = -1.0
            best_s = 0
            best_e = 0
            for s in range(n):
                e_stop = s + max_span_len
                if e_stop > n:
                    e_stop = n
                sp = start_probs[a + s]
                for e in range(s, e_stop):
                    p = sp * end_probs[a + e]
                    if p > best_p:
                        best_p = p
                        best_s = s
                        best_e = e
            starts[i] = best_s
            ends[i] = best_e
        return starts, ends

    segment_softmax = segment_softmax_numba
    segment_entropy = segment_entropy_numba
    decode_spans = decode_spans_numba
else:
    segment_softmax = segment_softmax_numpy
    segment_entropy = segment_entropy_numpy
    decode_spans = decode_spans_numpy
