"""Deterministic random-number helpers.

All stochastic code in the package draws from ``numpy.random.Generator``
instances created here.  Seeds for sub-tasks are derived from a root seed
plus a tuple of string labels, so independent stages get independent
streams and the same (seed, labels) pair always yields the same stream.
"""

from __future__ import annotations

import zlib

import numpy as np


def _label_key(labels: tuple[str, ...]) -> tuple[int, ...]:
    return tuple(zlib.crc32(lab.encode("utf-8")) for lab in labels)


def sequence(seed: int, *labels: str) -> np.random.SeedSequence:
    """SeedSequence for ``seed`` scoped by ``labels``."""
    return np.random.SeedSequence(int(seed), spawn_key=_label_key(labels))


def generator(seed: int, *labels: str) -> np.random.Generator:
    """PCG64 generator seeded from ``seed`` and scoped by ``labels``."""
    return np.random.Generator(np.random.PCG64(sequence(seed, *labels)))


def derive_seed(seed: int, *labels: str) -> int:
    """Collapse (seed, labels) to a single integer seed for APIs that take one."""
    return int(sequence(seed, *labels).generate_state(1, np.uint64)[0])
