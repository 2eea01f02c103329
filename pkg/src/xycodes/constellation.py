"""Signal alphabets: square QAM built from PAM with Gray labels, and the
zig-zag 2-D codebook used by the triangular pairing encoder.

A regular M^2-QAM symbol is an M-PAM level on each quadrature.  With average
complex-symbol energy E_s, the PAM half-spacing is
``tau = sqrt(3 E_s / (2 (M^2 - 1)))`` and the levels are
``tau * (2i - (M - 1))`` for i = 0..M-1.

The 2-D codebook of cardinality M holds the vectors

    Y(v) = [a ((v - 1) - (M - 1)/2),  b (-1)^v],    v = 1..M

which are exactly the images of the integer grid {0,1} x {0..M/2-1} under the
generator [[a, 2a], [2b, 0]] plus the displacement [-(M-1)a/2, -b].  Under a
per-pair power budget P the parameters satisfy ``b^2 + a^2 (M^2-1)/12 = P``.
"""

from dataclasses import dataclass

import numpy as np

from .validation import check_bits, check_positive, check_power_of_two

GENERATOR_IDENTITY_TOL = 1e-12


def _gray_encode(i):
    return i ^ (i >> 1)


def _gray_decode(g):
    i = 0
    while g:
        i ^= g
        g >>= 1
    return i


def _int_to_bits(value, width):
    return np.array([(value >> (width - 1 - k)) & 1 for k in range(width)], dtype=np.int64)


def _bits_to_int(bits):
    value = 0
    for b in bits:
        value = (value << 1) | int(b)
    return value


@dataclass(frozen=True)
class PamAlphabet:
    """M-PAM levels, symmetric about 0 with uniform spacing 2*tau."""

    m: int
    tau: float
    points: np.ndarray

    @property
    def bit_width(self):
        return self.m.bit_length() - 1


def build_pam(m, symbol_energy):
    """Build the M-PAM alphabet whose quadrature use has energy E_s.

    With both quadrature components drawn uniformly from the levels, the
    average complex-symbol energy equals ``symbol_energy`` exactly.
    """
    m = check_power_of_two(m)
    e_s = check_positive(symbol_energy, "symbol_energy")
    tau = np.sqrt(3.0 * e_s / (2.0 * (m * m - 1.0)))
    points = tau * (2.0 * np.arange(m) - (m - 1.0))
    points.setflags(write=False)
    return PamAlphabet(m=m, tau=float(tau), points=points)


@dataclass(frozen=True)
class GrayCodec:
    """Binary-reflected Gray labeling of PAM level indices.

    Adjacent levels differ in exactly one bit; the all-zero label sits on the
    most negative level.
    """

    m: int
    level_to_code: np.ndarray  # level index -> gray codeword (as int)
    code_to_level: np.ndarray  # gray codeword (as int) -> level index

    @property
    def bit_width(self):
        return self.m.bit_length() - 1


def gray_codec(m):
    m = check_power_of_two(m)
    level_to_code = np.array([_gray_encode(i) for i in range(m)], dtype=np.int64)
    code_to_level = np.argsort(level_to_code).astype(np.int64)
    level_to_code.setflags(write=False)
    code_to_level.setflags(write=False)
    return GrayCodec(m=m, level_to_code=level_to_code, code_to_level=code_to_level)


def gray_bits_to_level(codec, bits):
    """Map a Gray bit label (MSB first) to a 0-based PAM level index."""
    bits = check_bits(bits, codec.bit_width)
    return int(codec.code_to_level[_bits_to_int(bits)])


def gray_level_to_bits(codec, level):
    level = int(level)
    if not 0 <= level < codec.m:
        raise ValueError(f"level index must be in [0, {codec.m - 1}], got {level}")
    return _int_to_bits(int(codec.level_to_code[level]), codec.bit_width)


@dataclass(frozen=True)
class YCodebook:
    """The M zig-zag code vectors with their displacement."""

    m: int
    a: float
    b: float
    vectors: np.ndarray  # shape (M, 2); row v-1 holds Y(v)
    displacement: np.ndarray  # shape (2,)

    @property
    def bit_width(self):
        return self.m.bit_length() - 1


def build_y_codebook(m, a, b):
    """Construct the codebook and verify it matches its generator form."""
    m = check_power_of_two(m)
    a = float(a)
    b = float(b)
    if a < 0 or b < 0 or not np.isfinite(a) or not np.isfinite(b):
        raise ValueError(f"a and b must be finite and >= 0, got a={a}, b={b}")
    v = np.arange(1, m + 1)
    vectors = np.stack(
        [a * ((v - 1) - (m - 1) / 2.0), b * np.where(v % 2 == 0, 1.0, -1.0)], axis=1
    )
    displacement = np.array([-(m - 1) * a / 2.0, -b])

    generator = np.array([[a, 2.0 * a], [2.0 * b, 0.0]])
    s1, s2 = np.meshgrid([0, 1], np.arange(m // 2), indexing="ij")
    coords = np.stack([s1.ravel(), s2.ravel()], axis=0).astype(float)
    images = (generator @ coords).T + displacement
    indices = (coords[0] + 2 * coords[1]).astype(int)  # v - 1
    scale = max(abs(a), abs(b), 1.0)
    if not np.allclose(images, vectors[indices], rtol=0.0, atol=GENERATOR_IDENTITY_TOL * scale):
        raise AssertionError("codebook does not match its generator form")

    vectors.setflags(write=False)
    displacement.setflags(write=False)
    return YCodebook(m=m, a=a, b=b, vectors=vectors, displacement=displacement)


def y_codebook_from_budget(m, rho, pair_power):
    """Build a codebook from a power split.

    ``rho`` is the fraction of the per-pair-per-quadrature budget spent on the
    second component: b^2 = rho * pair_power and a^2 carries the rest, so the
    budget identity b^2 + a^2 (M^2-1)/12 = pair_power holds by construction.
    """
    m = check_power_of_two(m)
    pair_power = check_positive(pair_power, "pair_power")
    rho = float(rho)
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must be in [0, 1], got {rho}")
    b = np.sqrt(rho * pair_power)
    a = np.sqrt(12.0 * (1.0 - rho) * pair_power / (m * m - 1.0))
    return build_y_codebook(m, a, b)


def y_bits_to_index(codec, bits):
    """Map bits to a codebook index v in [1, M].

    The label of index v is the binary-reflected Gray codeword of v - 1, so
    any two codewords at adjacent indices, which are also the geometrically
    closest pairs of the zig-zag codebook, differ in exactly one bit.
    """
    bits = check_bits(bits, codec.bit_width)
    return _gray_decode(_bits_to_int(bits)) + 1


def y_index_to_bits(codec, v):
    v = int(v)
    if not 1 <= v <= codec.m:
        raise ValueError(f"index must be in [1, {codec.m}], got {v}")
    return _int_to_bits(_gray_encode(v - 1), codec.bit_width)


def y_index_tables(m):
    """Vectorized lookup tables for the codebook bit map.

    Returns ``(bits_to_v, v_to_bits)`` where ``bits_to_v[packed_bits]`` is the
    1-based index and ``v_to_bits`` has shape (M, log2 M).
    """
    codec = gray_codec(m)
    width = codec.bit_width
    bits_to_v = np.empty(m, dtype=np.int64)
    v_to_bits = np.empty((m, width), dtype=np.int64)
    for packed in range(m):
        bits = _int_to_bits(packed, width)
        v = y_bits_to_index(codec, bits)
        bits_to_v[packed] = v
        v_to_bits[v - 1] = bits
    bits_to_v.setflags(write=False)
    v_to_bits.setflags(write=False)
    return bits_to_v, v_to_bits
