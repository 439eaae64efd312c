"""
Seed derivation: every stage draws from its own stream of one base seed
"""
import zlib

import numpy as np


def stage_key(stage: str) -> int:
    """Stable 32-bit id for a stage name"""
    return zlib.crc32(stage.encode("utf-8"))


def derive_seed(base: int, stage: str) -> int:
    """Integer seed for `stage`, independent of every other stage name"""
    seq = np.random.SeedSequence(int(base), spawn_key=(stage_key(stage),))
    return int(seq.generate_state(1, dtype=np.uint32)[0])


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(int(seed))


def child_seeds(seed: int, count: int) -> list[int]:
    """`count` independent integer seeds spawned from `seed`"""
    children = np.random.SeedSequence(int(seed)).spawn(count)
    return [int(c.generate_state(1, dtype=np.uint32)[0]) for c in children]
