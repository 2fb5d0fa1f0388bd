"""Counter-based random streams keyed by (master seed, purpose, replica).

Every replica owns a Philox generator derived from a SeedSequence whose
spawn key encodes the stream purpose and the replica index, so an ensemble
gives the same numbers whether replicas run serially, in parallel or in a
different order.
"""
from __future__ import annotations

import zlib

import numpy as np

__all__ = ["MAX_SEED", "purpose_key", "stream", "replica_streams", "check_seed"]

MAX_SEED = 2 ** 64 - 1


def check_seed(seed) -> int:
    if isinstance(seed, bool) or int(seed) != seed:
        raise ValueError("seed must be an integer")
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError("seed must be a 64-bit unsigned integer")
    return seed


def purpose_key(purpose: str) -> int:
    """Stable 32-bit tag for a stream purpose (independent of PYTHONHASHSEED)."""
    return zlib.crc32(purpose.encode("utf-8"))


def stream(seed: int, purpose: str, replica: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=(purpose_key(purpose), int(replica)))
    return np.random.Generator(np.random.Philox(ss))


def replica_streams(seed: int, purpose: str, replicas, start: int = 0):
    """Generators for replica indices start, start+1, ...; lazily produced."""
    for r in range(start, start + int(replicas)):
        yield stream(seed, purpose, r)
