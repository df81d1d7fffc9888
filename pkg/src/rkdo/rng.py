"""Seeded PCG64 substreams, one per consumer.

Each purpose gets its own ``SeedSequence`` spawn key, so drawing more numbers
for, say, the embedding init never shifts the dataset or jitter streams.
"""

from __future__ import annotations

import numpy as np

PURPOSES = {
    "dataset": 0,
    "jitter": 1,
    "init": 2,
    "optimizer": 3,
    "theory": 4,
    "metrics": 5,
}


def substream(seed, purpose):
    """A fresh ``Generator`` for ``(seed, purpose)``; always the same sequence."""
    try:
        key = PURPOSES[purpose]
    except KeyError:
        raise ValueError(f"unknown RNG purpose {purpose!r}") from None
    ss = np.random.SeedSequence(int(seed), spawn_key=(key,))
    return np.random.Generator(np.random.PCG64(ss))
