"""Counter-based random streams.

Every stream is a Philox generator keyed by hashing (seed, *labels), so a
stream's draws depend only on its labels and never on access order or on how
work is split across threads.
"""
import zlib

import numpy as np


def _label(x) -> int:
    if isinstance(x, str):
        return zlib.crc32(x.encode())
    return int(x) & 0xFFFFFFFFFFFF


def stream_key(seed: int, *labels) -> np.ndarray:
    ss = np.random.SeedSequence([_label(seed)] + [_label(x) for x in labels])
    return ss.generate_state(2, dtype=np.uint64)


def stream(seed: int, *labels) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=stream_key(seed, *labels)))


def uniforms(seed: int, *labels, size=None):
    return stream(seed, *labels).random(size)
