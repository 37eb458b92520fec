"""
Seed derivation.
Part of Infrastructure layer.

Every random stream of a suite comes from one master seed: a cell is
identified by its labels and seed index, hashed into the spawn key of a
numpy SeedSequence.
"""
import zlib

import numpy as np


def label_key(label: str) -> int:
    """Stable 32-bit key of a label."""
    return zlib.crc32(label.encode("utf-8"))


def cell_seed_sequence(master_seed: int, labels, index: int) -> np.random.SeedSequence:
    """
    Seed sequence of one cell.

    Args:
        master_seed: Suite master seed
        labels: Names identifying the cell (function, manifold, kernel)
        index: Repetition index
    """
    key = tuple(label_key(label) for label in labels) + (int(index),)
    return np.random.SeedSequence(int(master_seed), spawn_key=key)


def cell_rng(master_seed: int, labels, index: int) -> np.random.Generator:
    return np.random.default_rng(cell_seed_sequence(master_seed, labels, index))


def cell_seed(master_seed: int, labels, index: int) -> int:
    """Integer seed recorded with the cell."""
    return int(cell_seed_sequence(master_seed, labels, index).generate_state(1)[0])
