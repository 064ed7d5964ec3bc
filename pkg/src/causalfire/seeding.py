"""Named random substreams derived from a single root seed.

Every consumer of randomness asks for a stream by name, so adding a new
consumer never perturbs the draws seen by existing ones. Stream derivation
hashes the name into the seed sequence and is stable across platforms and
Python processes.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream(root_seed: int, name: str) -> np.random.Generator:
    """Return an independent Generator for ``name`` under ``root_seed``."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in (0, 4, 8, 12)]
    seq = np.random.SeedSequence([int(root_seed) & 0xFFFFFFFFFFFFFFFF, *words])
    return np.random.default_rng(seq)
