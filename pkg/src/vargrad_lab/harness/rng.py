"""Deterministic, splittable random streams.

Every stochastic routine in the experiments receives its own substream
derived from (root seed, label, index). The label is hashed with SHA-256 and
folded into a numpy SeedSequence together with the seed and index, which
gives collision-resistant, statistically independent PCG64 streams while
keeping the derivation stable across processes and platforms.
"""

from __future__ import annotations

import hashlib

import numpy as np


def split_stream(root_seed: int, label: str, index: int = 0) -> np.random.Generator:
    """Independent generator for the given (seed, label, index) triple."""
    root_seed = int(root_seed)
    index = int(index)
    if root_seed < 0 or index < 0:
        raise ValueError("root_seed and index must be non-negative")
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    label_words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    seq = np.random.SeedSequence([root_seed, *label_words, index])
    return np.random.Generator(np.random.PCG64(seq))
