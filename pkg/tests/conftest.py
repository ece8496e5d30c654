import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from imbalance_lab import make_instance


@pytest.fixture
def balanced_instance():
    return make_instance(3, 1000, (50, 50, 50), (0.8, 0.8, 0.8), seed=11)


@pytest.fixture
def skewed_instance():
    return make_instance(4, 10_000, (5, 50, 100, 200), (0.5, 0.5, 0.5, 0.5), seed=0)


def random_instances(count, rng, c_max=6, d_range=(1e3, 1e6)):
    """Shared generator of random problem instances for property tests."""
    out = []
    for _ in range(count):
        c = int(rng.integers(2, c_max + 1))
        N = tuple(int(v) for v in rng.integers(5, 200, size=c))
        s = tuple(float(v) for v in rng.uniform(0.3, 1.5, size=c))
        d = int(10 ** rng.uniform(np.log10(d_range[0]), np.log10(d_range[1])))
        out.append(make_instance(c, max(d, c), N, s, seed=int(rng.integers(2**31))))
    return out
