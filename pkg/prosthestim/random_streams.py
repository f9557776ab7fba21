"""Named random substreams

All randomness in `prosthestim` flows from a single master seed. A substream
is identified by a path of names, e.g. ``('sensors', 'gyro')``, and produces a
numpy :class:`numpy.random.Generator` backed by the PCG64 algorithm. The path
is mixed into the seed through CRC-32 checksums of its components, so the
derivation is identical across processes and Python versions (it does not
depend on ``hash()``)::

    rng = substream(42, 'sensors', 'gyro')
    noise = rng.normal(0.0, 0.02, size=1000)

Two different paths yield statistically independent streams; the same path
always yields the same stream.
"""

from typing import (
    List,
    Union
)
from zlib import (
    crc32
)

import numpy as np


Name = Union[str, int]


def _path_entropy(names: tuple) -> List[int]:
    """Maps a path of names to a list of 32-bit integers
    """
    return [crc32(str(name).encode('utf-8')) for name in names]


def seed_sequence(seed: int, *names: Name) -> np.random.SeedSequence:
    """Returns the :class:`numpy.random.SeedSequence` of a named substream

    Raises:
        ValueError: If the seed is negative
    """
    if seed < 0:
        raise ValueError(f'Seed must be non-negative, got {seed}')
    return np.random.SeedSequence([int(seed)] + _path_entropy(names))


def substream(seed: int, *names: Name) -> np.random.Generator:
    """Returns a PCG64 generator for the substream ``names`` of ``seed``
    """
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *names)))


def derive_seed(seed: int, *names: Name) -> int:
    """Returns a 63-bit integer seed for the substream ``names`` of ``seed``

    Used where a child component takes a plain integer seed, e.g. one
    benchmark cell.
    """
    state = seed_sequence(seed, *names).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1])) & ((1 << 63) - 1)
