"""Counter-based random streams for experiment cells.

Every cell owns ``stream(base_seed, cell_index)``: a Philox4x64 generator
keyed by ``SeedSequence(base_seed, spawn_key=(cell_index,))``.  Streams do
not depend on scheduling order, so serial and threaded runs see the same
numbers.  Tuning runs use cell indices offset by ``TUNE_OFFSET``.
"""
from __future__ import annotations

import numpy as np

TUNE_OFFSET = 1 << 32


def seed_sequence(base_seed, cell_index):
    return np.random.SeedSequence(int(base_seed), spawn_key=(int(cell_index),))


def stream(base_seed, cell_index):
    return np.random.Generator(np.random.Philox(seed_sequence(base_seed, cell_index)))


def cell_seed(base_seed, cell_index):
    """A 64-bit integer identifying the stream, written to summaries."""
    return int(seed_sequence(base_seed, cell_index).generate_state(1, np.uint64)[0])
