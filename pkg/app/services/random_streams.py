"""Named, independent random streams derived from one command seed."""
import zlib

import numpy as np

INIT_STREAM = "init"
VARIATION_STREAM = "variation"
CLUSTERING_STREAM = "clustering"


def named_stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """
    Return a generator for sub-stream ``name`` of ``seed``.

    The same (seed, name, extra) always yields the same stream, and distinct
    names yield statistically independent streams.
    """
    spawn_key = (zlib.crc32(name.encode("utf-8")), *extra)
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=spawn_key))
