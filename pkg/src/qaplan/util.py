"""Small shared helpers: seeded RNG derivation and atomic file writes."""
from __future__ import annotations

import os
import tempfile

import numpy as np


def derive_rng(*parts: int) -> np.random.Generator:
    """Generator seeded from a tuple of integers, stable across runs."""
    return np.random.default_rng(np.random.SeedSequence([int(p) for p in parts]))


def derive_seed(*parts: int) -> int:
    """Plain integer seed derived from a tuple of integers."""
    seq = np.random.SeedSequence([int(p) for p in parts])
    return int(seq.generate_state(1, np.uint64)[0])


def atomic_write_text(path: str, text: str) -> None:
    """Write text to path via a temp file and rename.

    A failed write must not leave a partial file at the destination.
    """
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
