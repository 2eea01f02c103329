"""Closed-form distances, error bounds, and the exact pair-error integrals.

Error probabilities are for the real component of one pair (P'); the word
error of a pair is 1 - (1 - P')^2 across the two quadratures and the block
word error multiplies across pairs.  Q is the standard normal tail, computed
through the complementary error function.
"""

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.integrate import quad
from scipy.special import erfc

from .validation import NumericError, check_positive, check_power_of_two

QUAD_ABS_TOL = 1e-10
QUAD_ACCEPT_TOL = 1e-8
TAIL_SIGMAS = 10.0
# Divergence threshold for the fourth-power bound: a difference vector whose
# first-component projection is this small (relative to its norm) kills the
# fourth-order decay, so the bound is reported as infinite.
DIVERGENCE_TOL = 1e-9


def q_function(x):
    """Tail probability of the standard normal distribution."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / np.sqrt(2.0))


def pair_diversity_order(pair_index, n_r, n_t):
    """(n_t - i + 1)(n_r - i + 1) for 1-based pair index i."""
    i = int(pair_index)
    if not 1 <= i <= n_r // 2:
        raise ValueError(f"pair_index must be in [1, {n_r // 2}], got {i}")
    return (n_t - i + 1) * (n_r - i + 1)


def _difference_set(m):
    rng = range(-(m - 1), m)
    return [(p, q) for p in rng for q in rng if (p, q) != (0, 0)]


def x_pairwise_distance(p, q, theta, lambda_i, lambda_j):
    """(p^2+q^2)(s_i^2 cos^2(t - phi) + s_j^2 sin^2(t - phi)), phi = atan2(q, p)."""
    if lambda_i < lambda_j or lambda_j < 0:
        raise ValueError("need lambda_i >= lambda_j >= 0")
    phi = math.atan2(q, p)
    n = p * p + q * q
    c = math.cos(theta - phi)
    s = math.sin(theta - phi)
    return n * (lambda_i * lambda_i * c * c + lambda_j * lambda_j * s * s)


def generalized_min_distance(theta, m, p_t, n_r):
    """Worst-case scaled first-component separation of a rotated QAM pair.

    Evaluates 6 P_T / (n_r (M^2-1)) times the minimum of
    (p cos t + q sin t)^2 over the full difference set; this is the quantity
    whose fading statistics set the dominant error term.
    """
    m = check_power_of_two(m)
    c, s = math.cos(theta), math.sin(theta)
    smallest = min((p * c + q * s) ** 2 for p, q in _difference_set(m))
    return 6.0 * p_t * smallest / (n_r * (m * m - 1.0))


class UnionBound2x2(NamedTuple):
    value: float
    diverging: tuple | None  # the (p, q) that kills the decay, if any


def x_union_bound_2x2(theta, m, gamma):
    """Leading-order union bound on P' for a single rotated pair, 2x2 link.

    The bound decays as the fourth power of the linear SNR ``gamma``.  If any
    difference vector is orthogonal to the rotated first axis the decay
    collapses; that term is reported as an infinite sentinel together with
    the offending (p, q).  Finite values are clamped to [0, 1].
    """
    m = check_power_of_two(m)
    gamma = check_positive(gamma, "gamma")
    c, s = math.cos(theta), math.sin(theta)
    prefactor = (70.0 / 81.0) * (m * m - 1.0) ** 4 / (m * m * gamma**4)
    total = 0.0
    for p, q in _difference_set(m):
        inner = p * c + q * s
        norm2 = p * p + q * q
        if inner * inner <= DIVERGENCE_TOL**2 * norm2:
            return UnionBound2x2(value=math.inf, diverging=(p, q))
        total += prefactor / (inner**6 * norm2)
    return UnionBound2x2(value=min(total, 1.0), diverging=None)


def generic_asymptotic_bound(
    pair_index, n_r, n_t, g_value, gamma, cardinality, p_t, constant_c=None
):
    """Asymptotic bound term c (|S|-1) (gamma g / (2 P_T))^(-delta).

    With ``constant_c`` omitted the constant defaults to 1 and the result is
    shape-only: correct slope and relative behaviour, unknown level.
    """
    delta = pair_diversity_order(pair_index, n_r, n_t)
    gamma = check_positive(gamma, "gamma")
    p_t = check_positive(p_t, "p_t")
    if g_value <= 0:
        return math.inf
    c = 1.0 if constant_c is None else float(constant_c)
    return c * (cardinality - 1) * (gamma * g_value / (2.0 * p_t)) ** (-delta)


def y_dmin(a, b, lambda_i, lambda_j):
    """Minimum squared codeword distance of the scaled zig-zag codebook.

    Same-parity neighbours sit 2 s_i a apart on the first axis; opposite
    parity adds the 2 s_j b second-axis offset to a single first-axis step.
    """
    if min(a, b, lambda_i, lambda_j) < 0:
        raise ValueError("all arguments must be >= 0")
    same = 4.0 * lambda_i**2 * a**2
    cross = lambda_i**2 * a**2 + 4.0 * lambda_j**2 * b**2
    return min(same, cross)


# ---------------------------------------------------------------------------
# Exact pair error of the zig-zag codebook
# ---------------------------------------------------------------------------
#
# For one quadrature the noise has variance N0/2 per component.  Conditioned
# on the first-axis noise x, the correct-decision probability against an
# opposite-parity neighbour is Q(Psi(x)) with
#
#     Psi(x) = sqrt(2) (2 a s_i x - a^2 s_i^2 - 4 b^2 s_j^2) / (4 b s_j sqrt(N0))
#
# which yields, writing L = s_i a and w(x) = exp(-x^2/N0)/sqrt(pi N0):
#
#     g1 = 1 - int_0^L 2 w(x) Q(Psi(x)) dx          (codeword with both-side
#                                                    first-axis neighbours)
#     g2 = 1 - int_{-inf}^L w(x) Q(Psi(x)) dx       (outermost codeword)
#     g3 = int_{-inf}^{-L} w(x) Q(Phi(x)) dx        (one-sided correction)
#
# P'(v) is g1 for interior v, g2 for v in {1, M}, g1 - g3 for v in {2, M-1};
# with M = 2 both codewords use the outermost case.


def _g_integrals(a, b, lam_i, lam_j, n0):
    length = lam_i * a
    w = b * lam_j
    sigma = math.sqrt(n0 / 2.0)
    if w == 0.0:
        # All information rides the first axis: plain PAM level decisions.
        edge = q_function(length / (2.0 * sigma)) if sigma > 0 else 0.0
        return 2.0 * edge, edge, 0.0

    def psi(x):
        return math.sqrt(2.0) * (2.0 * a * lam_i * x - length * length - 4.0 * w * w) / (
            4.0 * w * math.sqrt(n0)
        )

    def phi(x):
        return -math.sqrt(2.0) * (2.0 * a * lam_i * x + length * length + 4.0 * w * w) / (
            4.0 * w * math.sqrt(n0)
        )

    norm = 1.0 / math.sqrt(math.pi * n0)

    def weight(x):
        return math.exp(-x * x / n0) * norm

    def integrate(f, lo, hi):
        if lo >= hi:
            return 0.0
        value, abserr = quad(f, lo, hi, epsabs=QUAD_ABS_TOL, epsrel=QUAD_ABS_TOL, limit=200)
        if abserr > QUAD_ACCEPT_TOL:
            raise NumericError(f"pair-error quadrature achieved only {abserr:.3e} absolute error")
        return value

    tail = TAIL_SIGMAS * sigma
    g1 = 1.0 - integrate(lambda x: 2.0 * weight(x) * float(q_function(psi(x))), 0.0, length)
    g2 = 1.0 - integrate(lambda x: weight(x) * float(q_function(psi(x))), -tail, length)
    g3 = integrate(lambda x: weight(x) * float(q_function(phi(x))), -tail, -length)
    return g1, g2, g3


def _combine_cases(g1, g2, g3, m):
    if m == 2:
        return g2
    return (2.0 * g2 + 2.0 * (g1 - g3) + (m - 4) * g1) / m


def y_exact_pair_error(a, b, lambda_i, lambda_j, n0, m):
    """Exact real-component error probability of a zig-zag pair, fixed gains.

    Adaptive quadrature at 1e-10 absolute tolerance with Gaussian tails cut
    at ten standard deviations.  Requires a > 0 (with b = 0 the codebook
    degenerates to a PAM line and the error is evaluated in closed form).
    """
    m = check_power_of_two(m)
    n0 = check_positive(n0, "n0")
    if a <= 0:
        raise ValueError(f"need a > 0, got {a}")
    if b < 0 or lambda_j < 0 or lambda_i < 0:
        raise ValueError("need b >= 0 and nonnegative gains")
    g1, g2, g3 = _g_integrals(float(a), float(b), float(lambda_i), float(lambda_j), float(n0))
    return _combine_cases(g1, g2, g3, m)


def _gauss_legendre_nodes(n_panels, n_nodes):
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    offsets = (np.arange(n_panels) + 0.5) / n_panels
    nodes = (offsets[:, None] + x[None, :] / (2.0 * n_panels)).ravel()
    weights = np.tile(w / (2.0 * n_panels), n_panels)
    return nodes, weights


_BATCH_NODES, _BATCH_WEIGHTS = _gauss_legendre_nodes(n_panels=16, n_nodes=16)


def y_exact_pair_error_batch(a, b, lam_i, lam_j, n0, m):
    """Vectorized :func:`y_exact_pair_error` over arrays of gain pairs.

    Uses composite Gauss-Legendre panels on the 10-sigma-truncated intervals;
    agreement with the adaptive scalar path is tested to well below 1e-9.
    In Q(Psi) and Q(Phi) the sqrt(2) factors cancel, leaving
    Q(Psi(x)) = erfc((2 L x - L^2 - 4 w^2) / (4 w sqrt(N0))) / 2 with
    L = s_i a and w = s_j b.
    """
    m = check_power_of_two(m)
    n0 = check_positive(n0, "n0")
    if a <= 0:
        raise ValueError(f"need a > 0, got {a}")
    lam_i = np.asarray(lam_i, dtype=float)
    lam_j = np.asarray(lam_j, dtype=float)
    sigma = math.sqrt(n0 / 2.0)
    tail = TAIL_SIGMAS * sigma
    length = lam_i * a
    w = b * lam_j
    norm = 1.0 / math.sqrt(math.pi * n0)
    root_n0 = math.sqrt(n0)

    out = np.empty(lam_i.shape, dtype=float)
    regular = w > 0

    if np.any(~regular):
        edge = 0.5 * erfc(length[~regular] / (2.0 * root_n0))
        out[~regular] = _combine_cases(2.0 * edge, edge, 0.0, m)

    if np.any(regular):
        lv = length[regular]
        wv = w[regular]

        def weight(x):
            return np.exp(-x * x / n0) * norm

        def q_psi(x):
            return 0.5 * erfc((2.0 * lv * x - lv * lv - 4.0 * wv * wv) / (4.0 * wv * root_n0))

        def q_phi(x):
            return 0.5 * erfc(-(2.0 * lv * x + lv * lv + 4.0 * wv * wv) / (4.0 * wv * root_n0))

        def integral(fn, lo, hi):
            span = np.maximum(hi - lo, 0.0)
            x = lo + span[None, :] * _BATCH_NODES[:, None]
            return span * np.einsum("n,ns->s", _BATCH_WEIGHTS, fn(x))

        g1 = 1.0 - integral(
            lambda x: 2.0 * weight(x) * q_psi(x), np.zeros_like(lv), np.minimum(lv, tail)
        )
        g2 = 1.0 - integral(
            lambda x: weight(x) * q_psi(x), np.full_like(lv, -tail), np.minimum(lv, tail)
        )
        g3 = integral(lambda x: weight(x) * q_phi(x), np.full_like(lv, -tail), -lv)
        out[regular] = _combine_cases(g1, g2, g3, m)
    return out


def union_bound_expectation(dmin_fn, lam_i, lam_j, n0, multiplicity):
    """multiplicity times the sample mean of Q(sqrt(dmin^2 / (2 N0))).

    ``dmin_fn(lam_i, lam_j)`` must return squared minimum distances for the
    given gain arrays.  The mean uses numpy's pairwise summation, so the
    reduction order is fixed by the sample order.
    """
    lam_i = np.asarray(lam_i, dtype=float)
    lam_j = np.asarray(lam_j, dtype=float)
    if lam_i.size == 0 or lam_i.size != lam_j.size:
        raise ValueError("need a nonempty matched pair of gain arrays")
    n0 = check_positive(n0, "n0")
    d2 = np.asarray(dmin_fn(lam_i, lam_j), dtype=float)
    return multiplicity * float(np.mean(q_function(np.sqrt(d2 / (2.0 * n0)))))


def diversity_slope(curve, rate_window=(0.0, 0.1)):
    """Negated log-log slope of an error-rate curve.

    ``curve`` is a sequence of (snr_db, rate) points; only rates strictly
    inside ``rate_window`` participate.  At least two usable points are
    required.
    """
    lo, hi = rate_window
    xs, ys = [], []
    for snr_db, rate in curve:
        if lo < rate < hi:
            xs.append(float(snr_db) / 10.0)  # log10 of the linear SNR
            ys.append(math.log10(rate))
    if len(xs) < 2:
        raise ValueError("need at least two points with rates inside the window")
    slope = np.polyfit(xs, ys, 1)[0]
    return -float(slope)


@dataclass(frozen=True)
class BoundCurve:
    """A bound evaluated over an SNR grid, clamped to [0, 1] for reporting.

    Divergent entries are clamped to 1 and recorded in ``sentinels`` with
    the offending difference vector.  Values must be non-increasing in SNR
    after clamping.
    """

    scheme: str
    points: tuple  # ((snr_db, value), ...)
    metadata: dict = field(default_factory=dict)
    sentinels: tuple = ()

    def __post_init__(self):
        clamped = tuple(
            (float(snr), float(min(max(v, 0.0), 1.0)) if math.isfinite(v) else 1.0)
            for snr, v in self.points
        )
        object.__setattr__(self, "points", clamped)
        ordered = sorted(clamped, key=lambda p: p[0])
        values = [v for _, v in ordered]
        if any(b > a + 1e-15 for a, b in zip(values, values[1:])):
            raise ValueError("bound values must be non-increasing in SNR after clamping")
