"""Input validation helpers shared across the package.

Kept small and sklearn-flavored: each helper either returns a normalized
value or raises ``ValueError`` with a message naming the offending argument.
"""

import numpy as np


class NumericError(RuntimeError):
    """A numerical routine failed to meet its accuracy contract."""


def check_positive(value, name):
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return value


def check_power_of_two(m, name="m", minimum=2):
    m = int(m)
    if m < minimum or (m & (m - 1)) != 0:
        raise ValueError(f"{name} must be a power of 2 >= {minimum}, got {m}")
    return m


def check_even_count(n, name):
    n = int(n)
    if n < 2 or n % 2 != 0:
        raise ValueError(f"{name} must be an even integer >= 2, got {n}")
    return n


def check_condition_number(beta):
    beta = float(beta)
    if np.isnan(beta) or beta < 1.0:
        raise ValueError(f"condition number beta must be >= 1, got {beta!r}")
    return beta


def check_complex_matrix(h, name="h"):
    """Coerce to a 2-D complex ndarray with finite entries."""
    h = np.asarray(h, dtype=np.complex128)
    if h.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got ndim={h.ndim}")
    if not np.all(np.isfinite(h.real)) or not np.all(np.isfinite(h.imag)):
        raise ValueError(f"{name} contains non-finite entries")
    return h


def check_bits(bits, expected_len, name="bits"):
    bits = np.asarray(bits, dtype=np.int64).ravel()
    if bits.size != expected_len:
        raise ValueError(f"{name} must have length {expected_len}, got {bits.size}")
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError(f"{name} must contain only 0/1 values")
    return bits
