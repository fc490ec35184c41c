"""Keyed random substreams.

Every consumer of randomness asks for ``substream(seed, *keys)``; the keys
(ints or strings) are hashed together with the master seed into a Philox
key, so a stream depends only on *what* it is for, never on the order in
which streams were requested.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key(seed: int, keys) -> int:
    h = hashlib.blake2b(digest_size=16)
    h.update(int(seed).to_bytes(16, "little", signed=True))
    for k in keys:
        tag = b"s" + str(k).encode() if isinstance(k, str) else b"i" + int(k).to_bytes(16, "little", signed=True)
        h.update(len(tag).to_bytes(4, "little"))
        h.update(tag)
    return int.from_bytes(h.digest(), "little")


def substream(seed: int, *keys) -> np.random.Generator:
    """A Philox generator keyed by ``(seed, *keys)``."""
    return np.random.Generator(np.random.Philox(key=_key(seed, keys)))
