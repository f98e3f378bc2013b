"""Counter-based splittable random streams.

All randomness in the package flows through `substream`, which derives an
independent Philox generator from a master seed and an integer path. Streams
are a pure function of (seed, path), so concurrently executed rollouts,
sweep entries, and per-step draws reproduce bit-exactly regardless of
scheduling order.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["substream", "derive_seed", "spawn_key"]


def spawn_key(*path: int) -> tuple[int, ...]:
    """Normalize a stream path to non-negative integers."""
    out = []
    for p in path:
        q = int(p)
        if q < 0:
            raise ValueError(f"stream path entries must be >= 0, got {q}")
        out.append(q)
    return tuple(out)


def substream(seed: int, *path: int) -> np.random.Generator:
    """Return the Philox generator for (seed, path).

    Philox is counter-based: the derived key is a deterministic function of
    the seed and path, never of call order.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=spawn_key(*path))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, label: str) -> int:
    """Hash (seed, label) to a stable 63-bit integer seed.

    Used where a child seed must be order-invariant, e.g. per-lambda seeds
    in a sweep derive from (master seed, lambda) rather than sweep position.
    """
    digest = hashlib.sha256(f"{int(seed)}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1
