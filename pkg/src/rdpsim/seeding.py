"""Counter-based seed derivation.

Every random stream in the package is ``default_rng(SeedSequence([master, *counters]))``.
A task identified by the same counters gets the same stream no matter which
worker runs it or in which order tasks complete.
"""

from __future__ import annotations

import numpy as np


def derive_rng(master: int, *counters: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master), *map(int, counters)]))


def derive_seed(master: int, *counters: int) -> int:
    """A 63-bit integer seed for APIs that take plain ints."""
    ss = np.random.SeedSequence([int(master), *map(int, counters)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
