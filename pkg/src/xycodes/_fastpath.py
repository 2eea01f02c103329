"""Vectorized per-block simulation kernels.

A block is a fixed batch of channel uses driven by its own counter-based
random stream, keyed by (seed, point index, block index), so any worker can
evaluate any block and the counters never depend on scheduling.  The default
path simulates the diagonalized model r = diag(s) G u + w pair by pair; the
full path transmits x = V^dagger z through the sampled matrix and rotates at
the receiver, which is statistically equivalent and serves as a validation
mode.

Per-block draw order: channel entries (random-channel mode only), data bits,
then noise.  Since triangular codewords carry their displacement, U^dagger y
is already in codebook coordinates and both paths decode identically.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import rng as _rng
from .channel import sample_singular_values
from .constellation import build_pam, gray_codec, y_index_tables
from .design import reduced_difference_set

BLOCK_WORDS = 8192

_ROOT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class BlockSpec:
    """Everything a worker needs to simulate one block."""

    scheme: str
    n_r: int
    n_t: int
    m: int
    p_t: float
    n0: float
    seed: int
    point_index: int
    block_index: int
    words: int
    fixed_lam: tuple = None  # per-subchannel gains for deterministic channels
    x_thetas: tuple = None  # per-pair angles, when fixed at the point
    y_params: tuple = None  # per-pair (a, b), when fixed at the point
    full_path: bool = False


@dataclass
class BlockCounters:
    words: int = 0
    bits: int = 0
    word_errors: int = 0
    bit_errors: int = 0
    signal_energy: float = 0.0  # sum over words of ||x||^2
    noise_energy: float = 0.0  # sum over words of ||n||^2

    def add(self, other):
        self.words += other.words
        self.bits += other.bits
        self.word_errors += other.word_errors
        self.bit_errors += other.bit_errors
        self.signal_energy += other.signal_energy
        self.noise_energy += other.noise_energy


def _x_kind(scheme):
    return scheme in ("svd-uncoded", "x-code", "x-precoder")


def bits_per_word(scheme, m, n_r):
    width = m.bit_length() - 1
    per_pair = 4 * width if _x_kind(scheme) else 2 * width
    return per_pair * (n_r // 2)


def _pack(bits):
    width = bits.shape[1]
    powers = 1 << np.arange(width - 1, -1, -1)
    return bits @ powers


def x_precoder_thetas(betas, m):
    """Vectorized per-realization rotation angles.

    M = 2 uses the closed form; larger M enumerates envelope crossings of
    the reduced difference set and refines on a 1e-6 rad grid, mirroring the
    scalar solver.
    """
    betas = np.asarray(betas, dtype=float)
    if m == 2:
        out = np.full(betas.shape, math.pi / 4.0)
        active = betas > _ROOT3
        finite = active & np.isfinite(betas)
        b2 = betas[finite] ** 2
        tan = b2 / ((b2 - 1.0) + np.sqrt((b2 - 1.0) ** 2 - b2))
        out[finite] = np.arctan(tan)
        out[active & ~np.isfinite(betas)] = math.atan(0.5)
        return out

    elements = np.asarray(reduced_difference_set(m), dtype=float)
    p, q = elements[:, 0], elements[:, 1]
    n = p * p + q * q
    half_diff = 0.5 * (p * p - q * q)
    pq = p * q
    k = len(n)

    b = np.where(np.isfinite(betas), betas, 1e12)
    b2 = (b * b)[:, None]  # (B, 1)
    coef_a = 0.5 * (b2 + 1.0) * n[None, :]
    coef_c = (b2 - 1.0) * half_diff[None, :]
    coef_s = (b2 - 1.0) * pq[None, :]

    quarter_pi = math.pi / 4.0
    cands = [np.zeros_like(b), np.full_like(b, quarter_pi)]
    peaks = 0.5 * np.arctan2(pq, half_diff)
    for t in peaks:
        if 0.0 <= t <= quarter_pi:
            cands.append(np.full_like(b, t))
    for i in range(k):
        for j in range(i + 1, k):
            alpha = coef_a[:, i] - coef_a[:, j]
            dc = coef_c[:, i] - coef_c[:, j]
            ds = coef_s[:, i] - coef_s[:, j]
            radius = np.hypot(dc, ds)
            ok = (radius > 0) & (np.abs(alpha) <= radius)
            ratio = np.where(ok, -alpha / np.where(radius > 0, radius, 1.0), 0.0)
            base = np.arctan2(ds, dc)
            offset = np.arccos(np.clip(ratio, -1.0, 1.0))
            for x in (base + offset, base - offset):
                t = 0.5 * np.mod(x, 2.0 * math.pi)
                cands.append(np.where(ok & (t <= quarter_pi), t, quarter_pi))
    cand = np.sort(np.stack(cands, axis=1), axis=1)  # ascending: ties pick smaller angle

    def envelope(thetas):
        two = 2.0 * thetas[:, :, None]
        vals = (
            coef_a[:, None, :]
            + coef_c[:, None, :] * np.cos(two)
            + coef_s[:, None, :] * np.sin(two)
        )
        return vals.min(axis=2)

    best = np.take_along_axis(cand, np.argmax(envelope(cand), axis=1)[:, None], axis=1)
    offsets = np.arange(-20, 21) * 1e-6
    fine = np.clip(best + offsets[None, :], 0.0, quarter_pi)
    theta = np.take_along_axis(fine, np.argmax(envelope(fine), axis=1)[:, None], axis=1)
    return theta[:, 0]


def y_precoder_params_vec(betas, m, p_t, n_r):
    """Vectorized closed-form power split; returns (a, b) arrays."""
    betas = np.asarray(betas, dtype=float)
    m2m1 = m * m - 1.0
    budget = p_t / n_r
    b2 = np.where(np.isfinite(betas), betas * betas, np.inf)
    strong_only = b2 >= m2m1 / 3.0
    a = np.empty_like(betas)
    b = np.empty_like(betas)
    a[strong_only] = math.sqrt(12.0 * budget / m2m1)
    b[strong_only] = 0.0
    rest = ~strong_only
    denom = b2[rest] + m2m1 / 9.0
    a[rest] = np.sqrt(4.0 * budget / (3.0 * denom))
    b[rest] = betas[rest] * np.sqrt(budget / denom)
    return a, b


class _Tables:
    """Per-modulation lookup tables shared by encoder and decoder."""

    _cache = {}

    def __new__(cls, m, e_s):
        key = (m, float(e_s))
        if key not in cls._cache:
            obj = super().__new__(cls)
            pam = build_pam(m, e_s)
            codec = gray_codec(m)
            width = codec.bit_width
            obj.m = m
            obj.width = width
            obj.points = pam.points
            obj.code_to_level = codec.code_to_level
            obj.level_to_bits = np.array(
                [
                    [(int(codec.level_to_code[lvl]) >> (width - 1 - k)) & 1 for k in range(width)]
                    for lvl in range(m)
                ],
                dtype=np.int64,
            )
            obj.bits_to_v, obj.v_to_bits = y_index_tables(m)
            # First-axis integer offsets and second-axis signs of the codebook.
            obj.centers = np.arange(1, m + 1) - 1.0 - (m - 1) / 2.0
            obj.signs = np.where(np.arange(1, m + 1) % 2 == 0, 1.0, -1.0)
            # Region-decoder candidate rows, ascending, padded with repeats.
            rows = [(1, 2, 2)]
            rows += [(2 * z, 2 * z + 1, 2 * z + 2) for z in range(1, m // 2)]
            rows += [(m - 1, m, m)] if m > 2 else []
            if m == 2:
                rows = [(1, 2, 2), (1, 2, 2)]
            obj.region_rows = np.array(rows, dtype=np.int64)
            cls._cache[key] = obj
        return cls._cache[key]


def _as_col(value, size):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    return arr.reshape(size, 1)


# ---------------------------------------------------------------------------
# Shared encode / decode kernels (one pair, both quadratures)
# ---------------------------------------------------------------------------


def _encode_x(tab, bits4, theta):
    """Rotation-pair components: returns z (B, quad, comp) and its energy."""
    width = tab.width
    cos, sin = np.cos(theta), np.sin(theta)
    z = np.empty((bits4.shape[0], 2, 2))
    for quad in range(2):
        sl = slice(2 * quad * width, 2 * (quad + 1) * width)
        chunk = bits4[:, sl]
        u0 = tab.points[tab.code_to_level[_pack(chunk[:, :width])]]
        u1 = tab.points[tab.code_to_level[_pack(chunk[:, width:])]]
        z[:, quad, 0] = cos * u0 + sin * u1
        z[:, quad, 1] = -sin * u0 + cos * u1
    return z, float(np.sum(z * z))


def _encode_y(tab, bits2, a, b_par):
    """Triangular-pair codewords (displacement included) and their energy."""
    width = tab.width
    z = np.empty((bits2.shape[0], 2, 2))
    for quad in range(2):
        v = tab.bits_to_v[_pack(bits2[:, quad * width : (quad + 1) * width])]
        z[:, quad, 0] = a * tab.centers[v - 1]
        z[:, quad, 1] = b_par * tab.signs[v - 1]
    return z, float(np.sum(z * z))


def _decode_x_obs(tab, obs, li, lj, theta):
    """Exact ML bits from rotation-pair observations (B, quad, comp)."""
    n_words = obs.shape[0]
    width = tab.width
    cos_c, sin_c = _as_col(np.cos(theta), n_words), _as_col(np.sin(theta), n_words)
    li_c, lj_c = _as_col(li, n_words), _as_col(lj, n_words)
    grid0 = np.repeat(tab.points, tab.m)  # lexicographic candidate order
    grid1 = np.tile(tab.points, tab.m)
    cand0 = li_c * (cos_c * grid0[None, :] + sin_c * grid1[None, :])
    cand1 = lj_c * (-sin_c * grid0[None, :] + cos_c * grid1[None, :])
    out = np.empty((n_words, 4 * width), dtype=np.int64)
    for quad in range(2):
        e0 = obs[:, quad, 0][:, None] - cand0
        e1 = obs[:, quad, 1][:, None] - cand1
        pick = np.argmin(e0 * e0 + e1 * e1, axis=1)
        lvl_i, lvl_j = np.divmod(pick, tab.m)
        out[:, 2 * quad * width : 2 * (quad + 1) * width] = np.concatenate(
            [tab.level_to_bits[lvl_i], tab.level_to_bits[lvl_j]], axis=1
        )
    return out


def _decode_y_obs(tab, obs, li, lj, a, b_par):
    """Exact ML bits from codebook-coordinate observations (B, quad, comp)."""
    n_words = obs.shape[0]
    width = tab.width
    m = tab.m
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b_par, dtype=float)
    li_arr = np.asarray(li, dtype=float)
    lj_arr = np.asarray(lj, dtype=float)
    scale = 2.0 * li_arr * a_arr
    safe_scale = np.where(scale > 0, scale, 1.0)
    a_col = _as_col(a_arr, n_words)
    b_col = _as_col(b_arr, n_words)
    li_col = _as_col(li_arr, n_words)
    lj_col = _as_col(lj_arr, n_words)
    out = np.empty((n_words, 2 * width), dtype=np.int64)
    for quad in range(2):
        r0 = obs[:, quad, 0]
        r1 = obs[:, quad, 1]
        t = np.floor(r0 / safe_scale + (m + 1) / 4.0).astype(np.int64)
        cand = tab.region_rows[np.clip(t, 0, m // 2)]  # (B, 3), ascending
        d0 = r0[:, None] - li_col * (a_col * tab.centers[cand - 1])
        d1 = r1[:, None] - lj_col * (b_col * tab.signs[cand - 1])
        v_hat = np.take_along_axis(
            cand, np.argmin(d0 * d0 + d1 * d1, axis=1)[:, None], axis=1
        )[:, 0]
        degenerate = np.broadcast_to(scale == 0, v_hat.shape)
        if np.any(degenerate):
            blind = np.broadcast_to(b_arr * lj_arr == 0, v_hat.shape)
            v_hat = np.where(degenerate & blind, 1, v_hat)
            v_hat = np.where(degenerate & ~blind, np.where(r1 <= 0, 1, 2), v_hat)
        out[:, quad * width : (quad + 1) * width] = tab.v_to_bits[v_hat - 1]
    return out


def _pair_params(spec, pair_index, lam_i, lam_j):
    """Per-pair encoder parameters, possibly adapted per word."""
    if spec.x_thetas is not None:
        return spec.x_thetas[pair_index]
    if spec.y_params is not None:
        return spec.y_params[pair_index]
    with np.errstate(divide="ignore", invalid="ignore"):
        betas = np.where(lam_j > 0, lam_i / np.where(lam_j > 0, lam_j, 1.0), np.inf)
    if _x_kind(spec.scheme):
        return x_precoder_thetas(betas, spec.m)
    return y_precoder_params_vec(betas, spec.m, spec.p_t, spec.n_r)


def run_block(spec):
    """Simulate one block and return its counters."""
    gen = _rng.stream(spec.seed, spec.point_index, spec.block_index)
    n_words = spec.words
    n_pairs = spec.n_r // 2
    eta = bits_per_word(spec.scheme, spec.m, spec.n_r)
    e_s = spec.p_t / spec.n_r
    sigma = math.sqrt(spec.n0 / 2.0) if spec.n0 > 0 else 0.0
    tab = _Tables(spec.m, e_s)
    width = tab.width
    x_like = _x_kind(spec.scheme)
    per_pair_bits = 4 * width if x_like else 2 * width

    if spec.full_path:
        if spec.fixed_lam is not None:
            raise ValueError("the full transmit path requires a random channel")
        h = _rng.complex_normal(gen, n_words * spec.n_r * spec.n_t).reshape(
            n_words, spec.n_r, spec.n_t
        )
        u_mat, s_all, v_mat = np.linalg.svd(h, full_matrices=False)
    elif spec.fixed_lam is not None:
        s_all = np.broadcast_to(np.asarray(spec.fixed_lam, dtype=float), (n_words, spec.n_r))
    else:
        s_all = sample_singular_values(spec.n_r, spec.n_t, n_words, gen)

    bits = _rng.random_bits(gen, n_words * eta).reshape(n_words, eta)
    noise = _rng.standard_normal(gen, n_words * 2 * spec.n_r).reshape(n_words, n_pairs, 2, 2)

    pair_params = []
    pair_z = []
    energy = 0.0
    for k in range(n_pairs):
        lam_i = s_all[:, k]
        lam_j = s_all[:, spec.n_r - 1 - k]
        params = _pair_params(spec, k, lam_i, lam_j)
        pair_params.append(params)
        sl = slice(k * per_pair_bits, (k + 1) * per_pair_bits)
        if x_like:
            z, e = _encode_x(tab, bits[:, sl], params)
        else:
            z, e = _encode_y(tab, bits[:, sl], params[0], params[1])
        pair_z.append(z)
        energy += e

    if spec.full_path:
        z_vec = np.zeros((n_words, spec.n_r), dtype=np.complex128)
        for k, z in enumerate(pair_z):
            z_vec[:, k] = z[:, 0, 0] + 1j * z[:, 1, 0]
            z_vec[:, spec.n_r - 1 - k] = z[:, 0, 1] + 1j * z[:, 1, 1]
        x = np.einsum("bji,bj->bi", v_mat.conj(), z_vec)
        w = np.zeros((n_words, spec.n_r), dtype=np.complex128)
        for k in range(n_pairs):
            w[:, k] = noise[:, k, 0, 0] + 1j * noise[:, k, 1, 0]
            w[:, spec.n_r - 1 - k] = noise[:, k, 0, 1] + 1j * noise[:, k, 1, 1]
        y = np.einsum("bij,bj->bi", h, x) + sigma * w
        r = np.einsum("bji,bj->bi", u_mat.conj(), y)
        energy = float(np.sum(x.real**2 + x.imag**2))

        def observation(k):
            r_i = r[:, k]
            r_j = r[:, spec.n_r - 1 - k]
            obs = np.empty((n_words, 2, 2))
            obs[:, 0, 0], obs[:, 0, 1] = r_i.real, r_j.real
            obs[:, 1, 0], obs[:, 1, 1] = r_i.imag, r_j.imag
            return obs

    else:

        def observation(k):
            lam_i = s_all[:, k][:, None, None]
            lam_j = s_all[:, spec.n_r - 1 - k][:, None, None]
            lam = np.concatenate([lam_i, lam_j], axis=2)
            return lam * pair_z[k] + sigma * noise[:, k]

    decoded = np.empty_like(bits)
    for k in range(n_pairs):
        lam_i = s_all[:, k]
        lam_j = s_all[:, spec.n_r - 1 - k]
        sl = slice(k * per_pair_bits, (k + 1) * per_pair_bits)
        if x_like:
            decoded[:, sl] = _decode_x_obs(tab, observation(k), lam_i, lam_j, pair_params[k])
        else:
            a, b = pair_params[k]
            decoded[:, sl] = _decode_y_obs(tab, observation(k), lam_i, lam_j, a, b)

    wrong = decoded != bits
    return BlockCounters(
        words=n_words,
        bits=n_words * eta,
        word_errors=int(np.count_nonzero(wrong.any(axis=1))),
        bit_errors=int(np.count_nonzero(wrong)),
        signal_energy=energy,
        noise_energy=float(sigma * sigma * np.sum(noise * noise)),
    )
