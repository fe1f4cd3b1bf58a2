"""Counter-based random streams.

Every random draw in the package comes from a Philox-4x64 generator whose
128-bit key is ``(seed, stream)``.  A stream id is a pure function of the
work unit (path index, replica index, ...), so results never depend on the
order in which work units are scheduled.

Stream ids are built by :func:`stream_id` from small non-negative integers,
e.g. ``stream_id(replica, component, kind)``; distinct tuples map to
distinct 64-bit ids.
"""
from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def stream_id(*parts: int) -> int:
    """Pack a tuple of non-negative integers into a 64-bit stream id."""
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        if p < 0:
            raise ValueError("stream id components must be non-negative")
        h.update(int(p).to_bytes(8, "little"))
    return int.from_bytes(h.digest(), "little")


def substream(seed: int, *parts: int) -> np.random.Generator:
    """Generator for the substream ``parts`` of master ``seed``."""
    key = [int(seed) & _MASK64, stream_id(*parts)]
    return np.random.Generator(np.random.Philox(key=key))
