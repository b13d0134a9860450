"""Keyed counter-based random streams.

Every draw is a pure function of an ``RngKey``: the Philox key is derived from
``(master_seed, experiment_id, client)`` and the Philox counter from
``(replica // 4, step)``. A block of replicas therefore reads exactly the same
values whether it is simulated in one piece or split across workers.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.special import ndtri

from localsgd_lab.errors import InvalidParameterError

WORDS_PER_BLOCK = 4
_UNIT = 2.0**-53
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngKey:
    """Coordinates of one random draw."""

    master_seed: int
    experiment_id: str = "default"
    replica: int = 0
    client: int = 0
    round: int = 0
    step: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.master_seed <= _MASK64:
            raise InvalidParameterError(f"master_seed must be an unsigned 64-bit integer, got {self.master_seed}")
        if self.replica < 0 or self.client < 0 or self.round < 0 or self.step < 0:
            raise InvalidParameterError(f"key coordinates must be non-negative: {self}")

    def at(self, **coords: int) -> RngKey:
        """Return a copy with some coordinates replaced."""
        return replace(self, **coords)

    def child(self, suffix: str) -> RngKey:
        """Derive the key of a sub-experiment; its streams are independent of the parent's."""
        return replace(self, experiment_id=f"{self.experiment_id}/{suffix}")


def experiment_hash(experiment_id: str) -> int:
    """Stable 64-bit hash of an experiment id."""
    digest = hashlib.blake2b(experiment_id.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@lru_cache(maxsize=4096)
def _philox_key(master_seed: int, experiment_id: str, client: int) -> tuple[int, int]:
    words = np.random.SeedSequence([master_seed, experiment_hash(experiment_id), client]).generate_state(2, np.uint64)
    return int(words[0]), int(words[1])


def raw_words(key: RngKey, size: int) -> np.ndarray:
    """Raw uint64 words for replicas ``key.replica .. key.replica + size - 1`` at ``key.step``."""
    if size < 0:
        raise InvalidParameterError(f"size must be non-negative, got {size}")
    if size == 0:
        return np.empty(0, dtype=np.uint64)
    first_block, offset = divmod(key.replica, WORDS_PER_BLOCK)
    n_blocks = -(-(offset + size) // WORDS_PER_BLOCK)
    bit_gen = np.random.Philox(
        counter=np.array([first_block, key.step, 0, 0], dtype=np.uint64),
        key=np.array(_philox_key(key.master_seed, key.experiment_id, key.client), dtype=np.uint64),
    )
    words = bit_gen.random_raw(n_blocks * WORDS_PER_BLOCK)
    return words[offset : offset + size]


def uniforms(key: RngKey, size: int) -> np.ndarray:
    """Uniform draws on the open interval (0, 1), one per replica."""
    words = raw_words(key, size)
    return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * _UNIT


def normals(key: RngKey, size: int) -> np.ndarray:
    """Standard normal draws by inverse CDF, one per replica."""
    return ndtri(uniforms(key, size))
