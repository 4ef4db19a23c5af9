"""Seeded random-number substreams.

All randomness in a run flows from one 64-bit seed. Each consumer draws
from a named substream so components can be reproduced in isolation:
the same (seed, stream, indices) triple always yields the same generator
regardless of what other components consumed. Streams are counter-based
(Philox), so per-epoch shuffles are independent keyed draws rather than
a shared sequential cursor.
"""

from __future__ import annotations

import numpy as np

# Fixed stream ids; appending is fine, renumbering breaks reproducibility.
_STREAMS = {
    "init": 0,
    "shuffle_pretrain": 1,
    "shuffle_joint": 2,
    "kmeans": 3,
    "splits": 4,
    "synth": 5,
    "gradcheck": 6,
}


def substream(seed: int, name: str, *indices: int) -> np.random.Generator:
    """Generator for the named substream of ``seed``.

    ``indices`` extend the key, e.g. an epoch counter or trial number.
    """
    try:
        stream_id = _STREAMS[name]
    except KeyError:
        raise ValueError(f"unknown RNG stream {name!r}") from None
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1),
                                spawn_key=(stream_id, *map(int, indices)))
    return np.random.Generator(np.random.Philox(key=ss.generate_state(2, np.uint64)))
