"""Counter-based random streams keyed by (seed, frame, subsystem).

Every randomized quantity of a scene is drawn from its own Philox stream so
that frame ``k`` can be regenerated in isolation and toggling one subsystem
(for example light colours) never shifts the draws of another.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def tag_code(tag: str) -> int:
    """Stable 32-bit code for a subsystem tag (independent of PYTHONHASHSEED)."""
    return zlib.crc32(tag.encode("utf-8"))


def stream_key(seed: int, index: int, tag: str, retry: int = 0) -> np.ndarray:
    seed &= _MASK64
    words = [seed & 0xFFFFFFFF, seed >> 32, index & 0xFFFFFFFF, index >> 32 & 0xFFFFFFFF,
             tag_code(tag), retry]
    return np.random.SeedSequence(words).generate_state(2, dtype=np.uint64)


def stream(seed: int, index: int, tag: str, retry: int = 0) -> np.random.Generator:
    """Return a fresh generator for ``(seed, index, tag, retry)``.

    ``index`` is the frame index for per-scene draws or the batch index for
    per-batch draws (HDRI selection).
    """
    return np.random.Generator(np.random.Philox(key=stream_key(seed, index, tag, retry)))
