"""Splittable seed derivation.

Every random stream in an experiment is named by ``(master_seed, label, index)``.
The label is hashed to 64 bits and placed, together with the index, in the
``spawn_key`` of a :class:`numpy.random.SeedSequence`; the resulting sequence
keys a Philox counter-based generator. Streams are therefore independent of
execution order and worker count.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _label_key(label: str) -> int:
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive(master_seed: int, label: str, index: int) -> np.random.SeedSequence:
    if index < 0:
        raise ValueError(f"stream index must be non-negative, got {index}")
    return np.random.SeedSequence(
        entropy=int(master_seed) & _MASK64,
        spawn_key=(_label_key(label), int(index)),
    )


def derive_int(master_seed: int, label: str, index: int) -> int:
    """A 63-bit integer seed for a named stream (usable as a nested master seed)."""
    words = derive(master_seed, label, index).generate_state(2, dtype=np.uint32)
    return ((int(words[0]) << 32) | int(words[1])) & ((1 << 63) - 1)


def generator(seed: int | np.random.SeedSequence) -> np.random.Generator:
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed) & _MASK64)
    return np.random.Generator(np.random.Philox(seed))
