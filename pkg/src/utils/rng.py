"""
Named random sub-streams.

All randomness flows from one integer seed. Each consumer asks for a stream
by name (``substream(seed, "mc", cube_id)``), so the draws a cube sees do not
depend on how many other cubes were evaluated first or on which thread.
"""

import hashlib
from typing import Optional

import numpy as np


def _name_key(name) -> int:
    digest = hashlib.blake2b(str(name).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def substream(seed: Optional[int], *names) -> np.random.Generator:
    """Return a generator keyed by ``seed`` and a path of stable names."""
    entropy = [0 if seed is None else int(seed)] + [_name_key(n) for n in names]
    return np.random.default_rng(np.random.SeedSequence(entropy))
