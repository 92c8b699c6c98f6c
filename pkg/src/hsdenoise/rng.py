"""Counter-based random streams.

Every random draw in the package (noise realizations, weight initialization,
per-band noise substreams) comes from the Philox-4x64 counter-based generator
keyed explicitly by a pair of 64-bit words, with Gaussian variates produced by
the Box-Muller transform over 53-bit uniforms. Nothing depends on global RNG
state, so any output is reproducible bit-for-bit from the named seeds alone,
and per-band substreams can be generated in any order with identical results.

Key conventions used elsewhere in the package (word0 is always the user seed):

    word1 = band                          pixel noise for one band (stream 0)
    word1 = (stream << 32) | band         pixel noise for augmented variants
    word1 = 2**63                         per-band sigma draws (uniform case)
    word1 = 2**62 + layer_index           weight initialization
"""

from __future__ import annotations

import numpy as np

_INV53 = 2.0 ** -53

PROFILE_STREAM = 1 << 63
INIT_STREAM_BASE = 1 << 62


def raw_words(key0: int, key1: int, n: int) -> np.ndarray:
    """n raw 64-bit words from the Philox stream keyed by (key0, key1)."""
    key = np.array([key0, key1], dtype=np.uint64)
    return np.random.Philox(key=key).random_raw(n)


def uniforms(key0: int, key1: int, n: int) -> np.ndarray:
    """n doubles in [0, 1): the top 53 bits of each raw word, scaled."""
    return (raw_words(key0, key1, n) >> np.uint64(11)).astype(np.float64) * _INV53


def normals(key0: int, key1: int, n: int) -> np.ndarray:
    """n standard normal doubles via Box-Muller over the keyed stream.

    The first half of the raw words becomes u1 in (0, 1] (shifted by one ulp
    so log(u1) is finite), the second half u2 in [0, 1); the output is the
    cosine branch followed by the sine branch, truncated to n.
    """
    if n == 0:
        return np.zeros(0)
    m = (n + 1) // 2
    raw = raw_words(key0, key1, 2 * m)
    u1 = ((raw[:m] >> np.uint64(11)).astype(np.float64) + 1.0) * _INV53
    u2 = (raw[m:] >> np.uint64(11)).astype(np.float64) * _INV53
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    return np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
