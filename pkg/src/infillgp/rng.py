"""Counter-based random streams keyed by (seed, replicate, stream)."""
from __future__ import annotations

import zlib

import numpy as np

_STREAMS = {"design": 0, "latent": 1, "noise": 2, "mcmc": 3, "test_points": 4, "subgrid": 5}


def stream_id(stream: str | int) -> int:
    if isinstance(stream, int):
        return stream
    return _STREAMS.get(stream, zlib.crc32(stream.encode()) + 1000)


def generator(seed: int, replicate: int = 0, stream: str | int = 0) -> np.random.Generator:
    """Independent Philox generator for one (seed, replicate, stream) key.

    Replicates draw from disjoint keys, so results do not depend on the order
    in which replicates are run.
    """
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(replicate), stream_id(stream)])
    return np.random.Generator(np.random.Philox(ss))
