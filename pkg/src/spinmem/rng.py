"""Counter-based random streams keyed by (seed, realization, channel).

Every noise channel of every realization gets its own Philox key, and the
step index is the position in that keyed stream.  Streams for different keys
never overlap, so realizations can be produced in any order on any number of
workers and come out bit-identical.
"""
from __future__ import annotations

import numpy as np

# Noise channels.
STATE = 0      # Langevin forces (and back-action in the exact update)
BACKACTION = 1  # S_z input, Euler update only
SHOT = 2       # S_y input
INITIAL = 3    # initial spin draw

_U64 = (1 << 64) - 1
_MAX_REALIZATION = 1 << 56


def stream(seed: int, realization: int, channel: int) -> np.random.Generator:
    """Independent generator for one (seed, realization, channel) triple."""
    seed = int(seed)
    if not 0 <= seed <= _U64:
        raise ValueError(f"seed must be an unsigned 64-bit integer (got {seed})")
    if not 0 <= realization < _MAX_REALIZATION:
        raise ValueError(f"realization index out of range: {realization}")
    if not 0 <= channel < 256:
        raise ValueError(f"channel out of range: {channel}")
    key = (seed << 64) | (int(realization) << 8) | int(channel)
    return np.random.Generator(np.random.Philox(key=key))
