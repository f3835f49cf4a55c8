"""Deterministic named RNG substreams derived from one root seed."""

from __future__ import annotations

import zlib

import numpy as np


def substream(root_seed: int, *names: str) -> np.random.Generator:
    """Return the generator for the substream identified by ``names``.

    Streams for distinct names are statistically independent, so adding a
    new consumer under a new name does not perturb existing ones.
    """
    keys = [zlib.crc32(name.encode("utf-8")) for name in names]
    seq = np.random.SeedSequence([int(root_seed) & 0xFFFFFFFF, *keys])
    return np.random.default_rng(seq)


def derive_seed(root_seed: int, *names: str) -> int:
    """Collapse a named substream into a single integer seed."""
    return int(substream(root_seed, *names).integers(0, 2**63 - 1))
