"""Seed splitting: every random draw comes from a labelled sub-stream of the run seed."""

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def stream(seed: int, label: str) -> np.random.Generator:
    """Independent generator for ``label`` derived from ``seed``.

    Negative and oversized seeds are folded into the unsigned 64-bit range so
    any Python int is accepted.
    """
    words = [int(seed) & _MASK64, zlib.crc32(label.encode("utf-8"))]
    return np.random.default_rng(np.random.SeedSequence(words))
