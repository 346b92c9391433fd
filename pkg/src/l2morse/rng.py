"""Named, splittable random streams.

Every stream is a Philox counter-based generator keyed by ``(seed, name)``:
the name is hashed with CRC-32 into the ``spawn_key`` of a ``SeedSequence``.
Streams with different names are independent and do not depend on the order
in which they are requested.
"""
from __future__ import annotations

import zlib

import numpy as np


def stream(seed: int, name: str, *index: int) -> np.random.Generator:
    key = (zlib.crc32(name.encode("utf-8")), *(int(i) for i in index))
    ss = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))
