"""Root-seed splitting: every stage draws from its own labelled stream."""

import zlib

import numpy as np


def derive_seed(root: int, label: str) -> int:
    """64-bit seed for stage ``label`` derived from ``root``."""
    key = zlib.crc32(label.encode("utf-8"))
    sequence = np.random.SeedSequence(entropy=int(root), spawn_key=(key,))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])

