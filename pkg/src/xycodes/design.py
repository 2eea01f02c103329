"""Pairing plans, per-pair encoders, and the four design procedures.

Subchannel k is paired with subchannel n_r - k + 1 (1-based) and the two are
jointly encoded by a real 2x2 matrix:

* rotation pairing: ``A = [[cos t, sin t], [-sin t, cos t]]`` applied to a
  square-QAM pair; the single angle is either fixed ahead of time (chosen to
  maximize the worst-case first-component separation over the QAM difference
  set) or re-optimized for every channel realization;
* triangular pairing: ``A = [[a, 2a], [2b, 0]]`` applied to an integer grid,
  which together with a fixed displacement produces the zig-zag codebook of
  cardinality M; ``(a, b)`` is either fixed ahead of time (found offline by
  minimizing the Monte-Carlo average of the exact pair error) or adapted per
  channel realization through a closed form.

All design operations are pure functions of their arguments.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import analysis as _analysis
from .constellation import (
    build_pam,
    build_y_codebook,
    gray_codec,
    y_codebook_from_budget,
    y_index_tables,
)
from .validation import (
    check_bits,
    check_condition_number,
    check_even_count,
    check_positive,
    check_power_of_two,
)

X_ORTHOGONALITY_TOL = 1e-12
Y_POWER_TOL = 1e-12
REFINE_STEP = 1e-6
REFINE_SPAN = 2e-5
RHO_GRID = np.round(np.arange(0, 40) * 0.025, 6)


@dataclass(frozen=True)
class PairingPlan:
    """Cross pairing of strong and weak subchannels, 1-based indices."""

    n_r: int
    pairs: tuple

    def diversity_lower_bound(self, n_t):
        """Worst-pair diversity order achieved by the cross pairing."""
        half = self.n_r // 2
        return (half + 1) * (n_t - half + 1)

    def pair_diversity(self, k, n_t):
        """Diversity order of pair k (0-based), (n_t-i_k+1)(n_r-i_k+1)."""
        i_k = self.pairs[k][0]
        return (n_t - i_k + 1) * (self.n_r - i_k + 1)


def optimal_pairing(n_r):
    n_r = check_even_count(n_r, "n_r")
    pairs = tuple((k, n_r - k + 1) for k in range(1, n_r // 2 + 1))
    return PairingPlan(n_r=n_r, pairs=pairs)


@dataclass(frozen=True)
class PairEncoder:
    """One 2x2 real pairing matrix.

    ``kind`` is "x" (rotation by ``theta``) or "y" (triangular with
    parameters ``a``, ``b`` and codebook cardinality ``m``).
    """

    kind: str
    theta: float = 0.0
    a: float = 0.0
    b: float = 0.0
    m: int = 0

    def __post_init__(self):
        if self.kind not in ("x", "y"):
            raise ValueError(f"encoder kind must be 'x' or 'y', got {self.kind!r}")
        if self.kind == "y":
            if self.a < 0 or self.b < 0:
                raise ValueError("triangular encoder needs a >= 0 and b >= 0")
            check_power_of_two(self.m, "m")

    @property
    def matrix(self):
        if self.kind == "x":
            c, s = math.cos(self.theta), math.sin(self.theta)
            return np.array([[c, s], [-s, c]])
        return np.array([[self.a, 2.0 * self.a], [2.0 * self.b, 0.0]])

    @property
    def displacement(self):
        """Real-part displacement (the imaginary part uses the same vector)."""
        if self.kind == "x":
            return np.zeros(2)
        return np.array([-(self.m - 1) * self.a / 2.0, -self.b])


@dataclass(frozen=True)
class CodeDesign:
    """A complete transmit design: pairing, per-pair encoders, budget.

    ``mode`` records whether the encoders were fixed ahead of time ("code")
    or adapted to a channel realization ("precoder"); the encoding and
    decoding paths treat both identically.
    """

    plan: PairingPlan
    encoders: tuple
    mode: str
    m: tuple
    p_t: float

    def __post_init__(self):
        if self.mode not in ("code", "precoder"):
            raise ValueError(f"mode must be 'code' or 'precoder', got {self.mode!r}")
        half = self.plan.n_r // 2
        if len(self.encoders) != half or len(self.m) != half:
            raise ValueError("need one encoder and one constellation size per pair")
        budget = self.p_t / self.plan.n_r
        for enc, m_k in zip(self.encoders, self.m):
            check_power_of_two(m_k, "m")
            if enc.kind == "y":
                if enc.m != m_k:
                    raise ValueError("codebook cardinality disagrees with the design")
                residual = enc.b**2 + enc.a**2 * (m_k * m_k - 1) / 12.0 - budget
                if abs(residual) > Y_POWER_TOL * max(budget, 1.0):
                    raise ValueError("triangular encoder violates the per-pair power budget")

    @property
    def n_r(self):
        return self.plan.n_r

    @property
    def eta(self):
        """Spectral efficiency in bits per channel use (both quadratures)."""
        total = 0
        for enc, m_k in zip(self.encoders, self.m):
            width = m_k.bit_length() - 1
            total += 4 * width if enc.kind == "x" else 2 * width
        return total

    def bits_per_word(self):
        return self.eta


def assemble_generator(design):
    """Place the 2x2 pair matrices into the n_r x n_r generator."""
    n_r = design.n_r
    g = np.zeros((n_r, n_r))
    for (i_k, j_k), enc in zip(design.plan.pairs, design.encoders):
        a = enc.matrix
        i, j = i_k - 1, j_k - 1
        g[i, i] = a[0, 0]
        g[i, j] = a[0, 1]
        g[j, i] = a[1, 0]
        g[j, j] = a[1, 1]
    return g


# ---------------------------------------------------------------------------
# QAM difference set and the max-min angle machinery
# ---------------------------------------------------------------------------


def full_difference_set(m):
    """All scaled level differences (p, q) of an M-PAM pair, excluding 0."""
    m = check_power_of_two(m)
    rng = range(-(m - 1), m)
    return [(p, q) for p in rng for q in rng if (p, q) != (0, 0)]


def reduced_difference_set(m):
    """A provably sufficient subset of the difference set.

    An element (p', q') is dropped when another element (p, q) satisfies,
    for every angle in [0, pi/4] and every gain pair with s_i >= s_j >= 0,
    both a pointwise smaller first-component projection and a smaller norm;
    such an element can never be the unique minimizer.  The test is done in
    exact integer arithmetic on the trigonometric polynomial coefficients.
    """
    m = check_power_of_two(m)
    reps = [(p, q) for p in range(1, m) for q in range(-(m - 1), m)]
    reps += [(0, q) for q in range(1, m)]

    def coeffs(e):
        p, q = e
        # 2*(p cos t + q sin t)^2 = n + c cos 2t + s sin 2t
        return (p * p + q * q, p * p - q * q, 2 * p * q)

    def dominates(e, f):
        n_e, c_e, s_e = coeffs(e)
        n_f, c_f, s_f = coeffs(f)
        if n_e > n_f:
            return False
        alpha, dc, ds = n_e - n_f, c_e - c_f, s_e - s_f
        if ds >= 0 and dc >= 0:
            return alpha <= 0 and dc * dc + ds * ds <= alpha * alpha
        if ds >= 0:
            return alpha + ds <= 0
        if dc >= 0:
            return alpha + dc <= 0
        return alpha + max(dc, ds) <= 0

    kept = [f for f in reps if not any(e != f and dominates(e, f) for e in reps)]
    kept.sort(key=lambda e: (e[0] * e[0] + e[1] * e[1], e[0], e[1]))
    return kept


def _distance_components(elements, li2, lj2):
    """Coefficients of d^2(t) = A + C cos 2t + S sin 2t per element."""
    e = np.asarray(elements, dtype=float)
    p, q = e[:, 0], e[:, 1]
    n = p * p + q * q
    a = 0.5 * (li2 + lj2) * n
    c = 0.5 * (li2 - lj2) * (p * p - q * q)
    s = (li2 - lj2) * p * q
    return a, c, s


def weighted_min_distance(theta, elements, li2, lj2):
    """min over the elements of s_i^2 (p cos t + q sin t)^2 + s_j^2 (p sin t - q cos t)^2."""
    e = np.asarray(elements, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    first = e[:, 0] * c + e[:, 1] * s
    second = e[:, 0] * s - e[:, 1] * c
    return float(np.min(li2 * first * first + lj2 * second * second))


def _minmax_angle(elements, li2, lj2):
    """Maximize the minimum weighted pair distance over angles in [0, pi/4].

    Candidate angles are the envelope crossings of the finitely many
    sinusoids plus their interior peaks and the interval endpoints; a final
    1e-6 rad grid around the best candidate absorbs any residual error.
    Ties resolve to the smaller angle.
    """
    a, c, s = _distance_components(elements, li2, lj2)
    k = len(a)
    quarter_pi = math.pi / 4.0

    candidates = [0.0, quarter_pi]
    peak = 0.5 * np.arctan2(s, c)
    candidates.extend(t for t in peak if 0.0 <= t <= quarter_pi)
    for i in range(k):
        for j in range(i + 1, k):
            alpha = a[i] - a[j]
            dc = c[i] - c[j]
            ds = s[i] - s[j]
            radius = math.hypot(dc, ds)
            if radius <= 0.0 or abs(alpha) > radius:
                continue
            base = math.atan2(ds, dc)
            offset = math.acos(max(-1.0, min(1.0, -alpha / radius)))
            for x in (base + offset, base - offset):
                x %= 2.0 * math.pi
                t = 0.5 * x
                if 0.0 <= t <= quarter_pi:
                    candidates.append(t)
    candidates.extend(np.linspace(0.0, quarter_pi, 257))

    def envelope(thetas):
        thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
        two = 2.0 * thetas[:, None]
        vals = a[None, :] + c[None, :] * np.cos(two) + s[None, :] * np.sin(two)
        return vals.min(axis=1)

    cand = np.array(sorted(set(candidates)))
    values = envelope(cand)
    best = int(np.argmax(values))  # argmax keeps the first (smallest) angle on ties
    center = cand[best]

    fine = center + np.arange(-REFINE_SPAN, REFINE_SPAN + REFINE_STEP / 2, REFINE_STEP)
    fine = np.clip(fine, 0.0, quarter_pi)
    fine = np.unique(fine)
    fine_values = envelope(fine)
    best = int(np.argmax(fine_values))
    return float(fine[best]), float(fine_values[best])


def design_x_angle(m):
    """Best a-priori rotation angle for M-PAM pairs.

    Returns ``(theta, achieved)`` where ``achieved`` is the worst-case value
    of (p^2+q^2) cos^2(t - phi_pq) over the full difference set at the
    returned angle.  The search runs on the reduced set, which attains the
    same minimum.
    """
    m = check_power_of_two(m)
    reduced = reduced_difference_set(m)
    theta, _ = _minmax_angle(reduced, 1.0, 0.0)
    achieved = weighted_min_distance(theta, full_difference_set(m), 1.0, 0.0)
    return theta, achieved


def x_precoder_angle(beta, m):
    """Best rotation angle for a pair with condition number ``beta``.

    For M = 2 the closed form applies: pi/4 for beta <= sqrt(3), otherwise
    arctan of (beta^2-1) - sqrt((beta^2-1)^2 - beta^2), evaluated in the
    cancellation-free conjugate form.  Larger M runs the numeric max-min on
    the reduced difference set.
    """
    beta = check_condition_number(beta)
    m = check_power_of_two(m)
    if m == 2:
        if beta * beta <= 3.0:
            return math.pi / 4.0
        if math.isinf(beta):
            return math.atan(0.5)
        b2m1 = beta * beta - 1.0
        tan = beta * beta / (b2m1 + math.sqrt(b2m1 * b2m1 - beta * beta))
        return math.atan(tan)
    if math.isinf(beta):
        theta, _ = _minmax_angle(reduced_difference_set(m), 1.0, 0.0)
        return theta
    theta, _ = _minmax_angle(reduced_difference_set(m), beta * beta, 1.0)
    return theta


def minmax_pair_distance(beta, m):
    """The angle of :func:`x_precoder_angle` plus the distance it achieves.

    The distance is normalized to s_j = 1 (multiply by s_j^2 for a channel
    with gains (beta * s_j, s_j)).
    """
    theta = x_precoder_angle(beta, m)
    achieved = weighted_min_distance(theta, full_difference_set(m), beta * beta, 1.0)
    return theta, achieved


def y_precoder_params(beta, m, p_t, n_r, lambda_i):
    """Closed-form power split for a triangular pair at fixed gains.

    Returns ``(a, b, dmin2)``.  Above the threshold beta^2 >= (M^2-1)/3 all
    power rides the strong subchannel (b = 0); below it the two distance
    terms are equalized.  The output satisfies the per-pair power budget
    identity exactly.
    """
    beta = check_condition_number(beta)
    m = check_power_of_two(m)
    p_t = check_positive(p_t, "p_t")
    n_r = check_even_count(n_r, "n_r")
    lambda_i = float(lambda_i)
    if lambda_i < 0:
        raise ValueError(f"lambda_i must be >= 0, got {lambda_i}")
    m2m1 = m * m - 1.0
    li2 = lambda_i * lambda_i
    if beta * beta >= m2m1 / 3.0:
        a = math.sqrt(12.0 * p_t / (n_r * m2m1))
        b = 0.0
        dmin2 = 12.0 * p_t * li2 / (n_r * m2m1)
    else:
        m_prime = m2m1 / 9.0
        denom = beta * beta + m_prime
        a = math.sqrt(4.0 * p_t / (3.0 * n_r * denom))
        b = beta * math.sqrt(p_t / (n_r * denom))
        dmin2 = 16.0 * p_t * li2 / (n_r * (3.0 * beta * beta + m2m1 / 3.0))
    return a, b, dmin2


def y_code_params_offline(m, design_snr_db, eigen_sampler, gen, *, p_t, n_r, n_samples=10_000):
    """A-priori (a, b) minimizing the Monte-Carlo average exact pair error.

    ``eigen_sampler(gen, count)`` must return arrays of paired gains
    (strong, weak) from the fading ensemble of interest.  The power split
    fraction rho = b^2 / (P_T / n_r) is scanned over a fixed grid and the
    argmin is returned; ties resolve to the smaller rho.
    """
    m = check_power_of_two(m)
    p_t = check_positive(p_t, "p_t")
    n_r = check_even_count(n_r, "n_r")
    lam_i, lam_j = eigen_sampler(gen, n_samples)
    lam_i = np.asarray(lam_i, dtype=float)
    lam_j = np.asarray(lam_j, dtype=float)
    if lam_i.size == 0 or lam_i.size != lam_j.size:
        raise ValueError("eigen_sampler must yield a nonempty matched pair of gain arrays")
    n0 = p_t / (10.0 ** (float(design_snr_db) / 10.0))
    budget = p_t / n_r

    best = None
    for rho in RHO_GRID:
        book = y_codebook_from_budget(m, rho, budget)
        errors = _analysis.y_exact_pair_error_batch(book.a, book.b, lam_i, lam_j, n0, m)
        mean_error = float(np.mean(errors))
        if best is None or mean_error < best[0]:
            best = (mean_error, book.a, book.b)
    return best[1], best[2]


# ---------------------------------------------------------------------------
# Scheme-level design builders
# ---------------------------------------------------------------------------


def design_uncoded(n_r, m, p_t):
    """Independent per-subchannel QAM, expressed as zero-angle rotations."""
    plan = optimal_pairing(n_r)
    enc = PairEncoder(kind="x", theta=0.0)
    half = n_r // 2
    return CodeDesign(plan=plan, encoders=(enc,) * half, mode="code", m=(m,) * half, p_t=p_t)


def design_x_code(n_r, m, p_t):
    plan = optimal_pairing(n_r)
    theta, _ = design_x_angle(m)
    enc = PairEncoder(kind="x", theta=theta)
    half = n_r // 2
    return CodeDesign(plan=plan, encoders=(enc,) * half, mode="code", m=(m,) * half, p_t=p_t)


def design_y_code(n_r, m, p_t, a, b):
    plan = optimal_pairing(n_r)
    enc = PairEncoder(kind="y", a=a, b=b, m=m)
    half = n_r // 2
    return CodeDesign(plan=plan, encoders=(enc,) * half, mode="code", m=(m,) * half, p_t=p_t)


def design_x_precoder(pair_betas, n_r, m, p_t):
    """Per-realization rotation angles from the pair condition numbers."""
    plan = optimal_pairing(n_r)
    encoders = tuple(PairEncoder(kind="x", theta=x_precoder_angle(b, m)) for b in pair_betas)
    half = n_r // 2
    return CodeDesign(plan=plan, encoders=encoders, mode="precoder", m=(m,) * half, p_t=p_t)


def design_y_precoder(pair_betas, n_r, m, p_t):
    """Per-realization triangular parameters from the closed form."""
    plan = optimal_pairing(n_r)
    encoders = []
    for beta in pair_betas:
        a, b, _ = y_precoder_params(beta, m, p_t, n_r, 1.0)
        encoders.append(PairEncoder(kind="y", a=a, b=b, m=m))
    half = n_r // 2
    return CodeDesign(plan=plan, encoders=tuple(encoders), mode="precoder", m=(m,) * half, p_t=p_t)


# ---------------------------------------------------------------------------
# Block encoding
# ---------------------------------------------------------------------------


def effective_pair_matrix(lambda_i, lambda_j, enc):
    """diag(s_i, s_j) times the pair matrix: the per-pair channel seen by ML."""
    if lambda_i < lambda_j or lambda_j < 0:
        raise ValueError("need lambda_i >= lambda_j >= 0")
    return np.array([[lambda_i], [lambda_j]]) * enc.matrix


def _pair_bit_layout(design):
    """Per-pair bit widths in encode order.

    Rotation pairs consume four level labels per channel use (real i, real j,
    imag i, imag j); triangular pairs consume two codebook labels (real,
    imag).
    """
    layout = []
    for enc, m_k in zip(design.encoders, design.m):
        width = m_k.bit_length() - 1
        layout.append(4 * width if enc.kind == "x" else 2 * width)
    return layout


def encode_block(bits, design, channel):
    """Encode one channel use: bits -> transmit vector of length n_t.

    The data vector z holds, per pair, A_k u_k plus the displacement; the
    transmit vector is V^dagger z, so its mean energy equals the total power
    budget under uniform bits.
    """
    bits = check_bits(bits, design.bits_per_word())
    if channel.n_r != design.n_r:
        raise ValueError("channel and design disagree on n_r")
    z = np.zeros(design.n_r, dtype=np.complex128)
    e_s = design.p_t / design.n_r
    pos = 0
    for (i_k, j_k), enc, m_k in zip(design.plan.pairs, design.encoders, design.m):
        width = m_k.bit_length() - 1
        if enc.kind == "x":
            pam = build_pam(m_k, e_s)
            codec = gray_codec(m_k)
            levels = []
            for _ in range(4):
                chunk = bits[pos : pos + width]
                pos += width
                levels.append(pam.points[_gray_lookup(codec, chunk)])
            u_k = np.array(
                [levels[0] + 1j * levels[2], levels[1] + 1j * levels[3]], dtype=np.complex128
            )
            z_k = enc.matrix @ u_k
        else:
            book = build_y_codebook(m_k, enc.a, enc.b)
            bits_to_v, _ = y_index_tables(m_k)
            re_v = int(bits_to_v[_pack_bits(bits[pos : pos + width])])
            pos += width
            im_v = int(bits_to_v[_pack_bits(bits[pos : pos + width])])
            pos += width
            z_k = book.vectors[re_v - 1] + 1j * book.vectors[im_v - 1]
        z[i_k - 1] = z_k[0]
        z[j_k - 1] = z_k[1]
    return channel.svd.v.conj().T @ z


def _pack_bits(bits):
    value = 0
    for b in bits:
        value = (value << 1) | int(b)
    return value


def _gray_lookup(codec, bits):
    return int(codec.code_to_level[_pack_bits(bits)])
