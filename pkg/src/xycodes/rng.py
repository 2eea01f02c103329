"""Counter-based random streams.

Every stochastic routine in the package draws from a Philox generator keyed
by a 64-bit seed plus an integer path (for example ``(point_index,
block_index)``).  Streams with distinct paths are statistically independent
and can be consumed in any order by any number of workers, so results never
depend on scheduling.  Gaussian variates are produced by the Box-Muller
transform on the uniform stream.
"""

import hashlib
import struct

import numpy as np

_DOMAIN = b"xycodes.stream.v1"


def stream(seed, *path):
    """Return a ``numpy.random.Generator`` for the given seed and path.

    The Philox key is derived by hashing ``(seed, *path)``, so any change in
    either produces an unrelated stream.
    """
    payload = _DOMAIN + struct.pack(f">{1 + len(path)}q", int(seed), *[int(p) for p in path])
    key = int.from_bytes(hashlib.sha256(payload).digest()[:16], "big")
    return np.random.Generator(np.random.Philox(key=key))


def standard_normal(gen, size):
    """Draw N(0,1) variates via Box-Muller on the uniform stream."""
    size = int(size)
    n_pairs = (size + 1) // 2
    # 1 - U keeps the argument of log strictly positive.
    u1 = 1.0 - gen.random(n_pairs)
    u2 = gen.random(n_pairs)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    out = np.empty(2 * n_pairs)
    out[0::2] = radius * np.cos(angle)
    out[1::2] = radius * np.sin(angle)
    return out[:size]


def complex_normal(gen, size):
    """Circularly-symmetric complex Gaussians, zero mean, unit variance.

    Real and imaginary parts are independent N(0, 1/2), so E|z|^2 = 1.
    """
    size = int(size)
    z = standard_normal(gen, 2 * size)
    return (z[0::2] + 1j * z[1::2]) / np.sqrt(2.0)


def random_bits(gen, size):
    return gen.integers(0, 2, size=int(size), dtype=np.int64)
