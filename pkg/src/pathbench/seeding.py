"""Named random substreams derived from a single root seed.

Every stochastic piece of the workbench draws from a stream addressed by
(root_seed, name...). Adding a new consumer never perturbs existing
streams, which keeps ensembles reproducible when the set of policies or
jobs changes.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream_seed(root_seed: int, *names: str) -> int:
    """64-bit seed for the substream addressed by (root_seed, *names)."""
    key = f"{root_seed}/" + "/".join(names)
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(root_seed: int, *names: str) -> np.random.Generator:
    """Independent generator for the named substream."""
    return np.random.default_rng(stream_seed(root_seed, *names))
