"""Counter-based random streams.

Every stochastic operation in the library draws from a Philox generator
keyed by (seed, stream tag). Streams are independent by construction, so
changing how many values one stream consumes never shifts another stream:
class 2's training noise is identical whether class 1 has 5 or 500 points.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# Stream purposes. Values are arbitrary but frozen: changing them changes
# every sampled dataset.
TRAIN_NOISE = 1
TEST_NOISE = 2
FRAME = 3
MC_ERROR = 4
SUBSAMPLE = 5
FUZZ = 6


def _tag(purpose: int, a: int = 0, b: int = 0) -> int:
    if not (0 <= a < (1 << 24) and 0 <= b < (1 << 24)):
        raise ValueError("stream indices out of range")
    return (purpose << 48) | (a << 24) | b


def substream(seed: int, purpose: int, a: int = 0, b: int = 0) -> np.random.Generator:
    """Generator for the (purpose, a, b) stream of a 64-bit seed."""
    key = np.array([seed & _MASK64, _tag(purpose, a, b)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
