"""Deterministic random-stream derivation.

Every stochastic entry point takes one u64 seed.  Sub-streams are split off
with fixed keys via numpy's SeedSequence spawn mechanism, so adding a pump or
an extra species does not perturb unrelated event sequences.
"""
from __future__ import annotations

import numpy as np

# Fixed registry: never renumber, only append.
STREAMS = {
    "events": 1,       # reaction/degradation event clock and selection
    "bursts": 2,       # environmental energy burst schedule
    "pumps": 3,        # pump intake/exhaust/backpressure draws
    "physical": 4,     # physical stepper internals (routing, burst targets)
    "placement": 5,    # ball placement
    "split": 6,        # random-split assignment
    "perturb": 7,      # stability perturbations in classification
    "fuzz": 8,         # test fuzzing
    "experiment": 9,   # experiment-level draws (bootstrap)
}


def substream(seed: int, name: str, index: int = 0) -> np.random.Generator:
    """Independent generator for (seed, purpose, index)."""
    key = STREAMS[name]
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(key, index))
    return np.random.Generator(np.random.PCG64(ss))


def substream_seed(seed: int, name: str, index: int = 0) -> int:
    """A derived u32 seed for engines that need a raw integer (jitted kernels)."""
    key = STREAMS[name]
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(key, index))
    return int(ss.generate_state(1)[0])
