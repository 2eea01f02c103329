"""Channel generation and singular value decomposition.

The link model is an n_r x n_t flat-fading matrix H (n_r <= n_t) with the
decomposition H = U diag(s) V, where U is n_r x n_r unitary, V is n_r x n_t
with orthonormal rows, and the singular values s are sorted descending.
Transmitting through the rows of V and receiving through the columns of U
turns the matrix channel into parallel scalar subchannels with gains s_i.
"""

from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from .validation import (
    NumericError,
    check_complex_matrix,
    check_condition_number,
    check_even_count,
)

# Singular values below this fraction of the largest are treated as exact
# zeros so near-rank-deficient draws do not produce overflowing ratios.
SINGULAR_VALUE_CLIP = 1e-14


@dataclass(frozen=True)
class SvdFactors:
    """Factors of H = u @ diag(singular_values) @ v.

    ``u`` is n_r x n_r with unitary columns, ``v`` is n_r x n_t with
    orthonormal rows, ``singular_values`` is length n_r, descending.
    """

    u: np.ndarray
    singular_values: np.ndarray
    v: np.ndarray

    @property
    def n_r(self):
        return self.u.shape[0]

    @property
    def n_t(self):
        return self.v.shape[1]

    def reconstruct(self):
        return (self.u * self.singular_values[np.newaxis, :]) @ self.v


@dataclass(frozen=True)
class ChannelSample:
    """A channel matrix with cached SVD and per-pair condition numbers.

    ``pair_betas[k]`` is s_{k} / s_{n_r-1-k} for the cross pairing of
    subchannel k with subchannel n_r-1-k (0-based), always >= 1.
    """

    h: np.ndarray
    svd: SvdFactors
    pair_betas: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.pair_betas is None:
            object.__setattr__(self, "pair_betas", pair_condition_numbers(self.svd.singular_values))

    @property
    def n_r(self):
        return self.h.shape[0]

    @property
    def n_t(self):
        return self.h.shape[1]


def pair_condition_numbers(singular_values):
    """Condition number of each cross pair (s_k, s_{n_r-1-k}), 0-based k."""
    s = np.asarray(singular_values, dtype=float)
    n_r = s.size
    half = n_r // 2
    strong = s[:half]
    weak = s[n_r - 1 : n_r - 1 - half : -1]
    with np.errstate(divide="ignore", invalid="ignore"):
        betas = np.where(weak > 0, strong / np.where(weak > 0, weak, 1.0), np.inf)
    betas = np.where((strong == 0) & (weak == 0), 1.0, betas)
    return betas


def svd_decompose(h):
    """Decompose H into U diag(s) V with a deterministic phase convention.

    Each row of V is rotated so its largest-magnitude entry is real and
    non-negative (the matching column of U absorbs the opposite phase), which
    makes the factors reproducible across runs.  Trailing singular values
    smaller than ``SINGULAR_VALUE_CLIP`` times the largest are clamped to 0.
    """
    h = check_complex_matrix(h)
    n_r, n_t = h.shape
    if n_r > n_t:
        raise ValueError(f"need rows <= cols, got {n_r}x{n_t}")
    try:
        u, s, v = np.linalg.svd(h, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"SVD failed to converge for a {n_r}x{n_t} matrix: {exc}") from exc
    if s[0] > 0:
        s = np.where(s < SINGULAR_VALUE_CLIP * s[0], 0.0, s)
    u = np.ascontiguousarray(u)
    v = np.ascontiguousarray(v)
    for i in range(n_r):
        j = int(np.argmax(np.abs(v[i])))
        pivot = v[i, j]
        mag = abs(pivot)
        if mag > 0:
            phase = pivot / mag
            v[i] *= np.conj(phase)
            u[:, i] *= phase
    u.setflags(write=False)
    s.setflags(write=False)
    v.setflags(write=False)
    return SvdFactors(u=u, singular_values=s, v=v)


def sample_rayleigh_channel(n_r, n_t, gen):
    """Draw one i.i.d. unit-variance complex Gaussian channel sample."""
    n_r = check_even_count(n_r, "n_r")
    n_t = int(n_t)
    if n_r > n_t:
        raise ValueError(f"need n_r <= n_t, got n_r={n_r}, n_t={n_t}")
    h = _rng.complex_normal(gen, n_r * n_t).reshape(n_r, n_t)
    h.setflags(write=False)
    return ChannelSample(h=h, svd=svd_decompose(h))


def channel_from_condition(beta):
    """Deterministic 2x2 diagonal channel with unit total gain.

    The singular values satisfy s1/s2 = beta and s1^2 + s2^2 = 1; U = V = I.
    """
    beta = check_condition_number(beta)
    scale = np.sqrt(1.0 + beta * beta)
    s1 = beta / scale
    s2 = 1.0 / scale
    h = np.diag([s1, s2]).astype(np.complex128)
    eye = np.eye(2, dtype=np.complex128)
    factors = SvdFactors(u=eye, singular_values=np.array([s1, s2]), v=eye.copy())
    return ChannelSample(h=h, svd=factors)


def sample_singular_values(n_r, n_t, count, gen):
    """Batched singular values of ``count`` Rayleigh draws, shape (count, n_r).

    The 2x2 case uses the closed form from the eigenvalues of H H^dagger;
    larger systems fall back to LAPACK without computing the factors.  Only
    the values are returned, which is all the diagonalized link model needs.
    """
    count = int(count)
    h = _rng.complex_normal(gen, count * n_r * n_t).reshape(count, n_r, n_t)
    if n_r == 2:
        g00 = np.einsum("bj,bj->b", h[:, 0, :], h[:, 0, :].conj()).real
        g11 = np.einsum("bj,bj->b", h[:, 1, :], h[:, 1, :].conj()).real
        g01 = np.einsum("bj,bj->b", h[:, 0, :], h[:, 1, :].conj())
        trace = g00 + g11
        det = g00 * g11 - (g01.real**2 + g01.imag**2)
        disc = np.sqrt(np.maximum(trace * trace - 4.0 * det, 0.0))
        lam1 = 0.5 * (trace + disc)
        lam2 = np.maximum(0.5 * (trace - disc), 0.0)
        return np.sqrt(np.stack([lam1, lam2], axis=1))
    return np.linalg.svd(h, compute_uv=False)


def sample_eigen_pairs(n_r, n_t, pair_index, count, gen):
    """Draw ``count`` (s_strong, s_weak) pairs for the given cross pair.

    ``pair_index`` is 0-based; the pair couples ordered singular values
    number ``pair_index`` and ``n_r - 1 - pair_index``.
    """
    n_r = check_even_count(n_r, "n_r")
    if not 0 <= pair_index < n_r // 2:
        raise ValueError(f"pair_index must be in [0, {n_r // 2 - 1}], got {pair_index}")
    s = sample_singular_values(n_r, n_t, count, gen)
    return s[:, pair_index], s[:, n_r - 1 - pair_index]
