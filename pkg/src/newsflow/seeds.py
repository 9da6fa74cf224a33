"""Deterministic RNG substream derivation.

All randomness flows from a single master seed.  Each random task derives its
own generator from (master_seed, *tags), so results are identical regardless
of how work is sharded across workers.
"""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _tag_entropy(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & _MASK64
    digest = hashlib.sha256(str(tag).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(master_seed: int, *tags) -> np.random.Generator:
    """Generator keyed by (master_seed, tags); stable across runs and platforms."""
    entropy = [int(master_seed) & _MASK64] + [_tag_entropy(t) for t in tags]
    return np.random.default_rng(np.random.SeedSequence(entropy))
