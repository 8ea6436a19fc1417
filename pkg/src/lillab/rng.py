"""Per-path random streams.

Every simulated path owns a Philox stream keyed by ``(seed, path_index)``, so
results do not depend on how paths are batched or scheduled across threads.
"""

import numpy as np

SEED_MASK = (1 << 64) - 1


def path_stream(seed: int, index: int) -> np.random.Generator:
    """Return the independent generator for path ``index`` of experiment ``seed``."""
    if index < 0:
        raise ValueError("path index must be nonnegative")
    ss = np.random.SeedSequence(entropy=int(seed) & SEED_MASK, spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def aux_stream(seed: int, label: str) -> np.random.Generator:
    """Stream for non-path randomness (invariant samples, test instances).

    ``label`` separates uses so that adding a new consumer never shifts the
    numbers seen by an existing one.
    """
    tag = int.from_bytes(label.encode("utf-8")[:8].ljust(8, b"\0"), "little")
    ss = np.random.SeedSequence(entropy=int(seed) & SEED_MASK, spawn_key=(1 << 40, tag))
    return np.random.Generator(np.random.Philox(ss))
