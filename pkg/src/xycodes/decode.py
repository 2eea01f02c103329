"""Exact per-pair ML detection.

After rotating the received vector by U^dagger, the link decouples into
independent real 2x2 problems, one per pair and quadrature.  Rotation pairs
are decoded by a depth-2 sphere search over the PAM grid; triangular pairs
use the region decoder, which locates the received point among M/2 + 1
vertical slabs and then compares at most three codeword distances.  Both
decoders return the exact maximum-likelihood decision (ties resolve to the
lowest candidate), and a plain exhaustive search is provided as the oracle.
"""

from dataclasses import dataclass

import numpy as np

from .constellation import (
    PamAlphabet,
    YCodebook,
    build_pam,
    build_y_codebook,
    gray_codec,
    gray_level_to_bits,
    y_index_tables,
)

# Relative slack applied before pruning, so branch bounds computed through
# the QR transform can never discard the true minimizer by a rounding ulp.
_PRUNE_SLACK = 1e-12


@dataclass(frozen=True)
class PairObservation:
    """One quadrature of one pair at the receiver.

    For rotation pairs ``r`` equals M_k u_k + noise with u_k a PAM level
    pair.  For triangular pairs ``r`` is kept in codebook coordinates,
    diag(s) Y(v) + noise, which is what the region decoder consumes.
    """

    r: np.ndarray
    m_k: np.ndarray
    kind: str
    lambda_i: float
    lambda_j: float
    pam: PamAlphabet = None
    codebook: YCodebook = None


def rotate_received(y, channel, design):
    """U^dagger y minus the scaled displacement: the decoupled observation."""
    y = np.asarray(y, dtype=np.complex128)
    if y.shape != (channel.n_r,):
        raise ValueError(f"received vector must have shape ({channel.n_r},), got {y.shape}")
    if channel.n_r != design.n_r:
        raise ValueError("channel and design disagree on n_r")
    s = channel.svd.singular_values
    u0 = np.zeros(design.n_r, dtype=np.complex128)
    for (i_k, j_k), enc in zip(design.plan.pairs, design.encoders):
        d = enc.displacement
        u0[i_k - 1] = d[0] * (1.0 + 1.0j)
        u0[j_k - 1] = d[1] * (1.0 + 1.0j)
    return channel.svd.u.conj().T @ y - s * u0


def receive_rotate(y, channel, design):
    """Split the rotated observation into per-pair, per-quadrature problems.

    Returns a list with one ``(real, imag)`` observation pair per subchannel
    pair.  Triangular-pair observations are re-centered onto the codebook
    (the scaled displacement is added back), so every candidate codeword is
    simply diag(s) Y(v).
    """
    r_full = rotate_received(y, channel, design)
    s = channel.svd.singular_values
    e_s = design.p_t / design.n_r
    out = []
    for (i_k, j_k), enc, m_k in zip(design.plan.pairs, design.encoders, design.m):
        li, lj = float(s[i_k - 1]), float(s[j_k - 1])
        r_k = np.array([r_full[i_k - 1], r_full[j_k - 1]])
        m_eff = np.array([[li], [lj]]) * enc.matrix
        if enc.kind == "x":
            pam = build_pam(m_k, e_s)
            obs = tuple(
                PairObservation(
                    r=comp, m_k=m_eff, kind="x", lambda_i=li, lambda_j=lj, pam=pam
                )
                for comp in (r_k.real.copy(), r_k.imag.copy())
            )
        else:
            book = build_y_codebook(m_k, enc.a, enc.b)
            recenter = np.array([li, lj]) * book.displacement
            obs = tuple(
                PairObservation(
                    r=comp + recenter,
                    m_k=m_eff,
                    kind="y",
                    lambda_i=li,
                    lambda_j=lj,
                    codebook=book,
                )
                for comp in (r_k.real.copy(), r_k.imag.copy())
            )
        out.append(obs)
    return out


def _direct_metric(r, m_k, p1, p2):
    d0 = r[0] - m_k[0, 0] * p1 - m_k[0, 1] * p2
    d1 = r[1] - m_k[1, 0] * p1 - m_k[1, 1] * p2
    return d0 * d0 + d1 * d1


def _se_order(points, center):
    """Indices of ``points`` sorted by distance to ``center`` (stable)."""
    if not np.isfinite(center):
        return np.arange(points.size)
    return np.argsort(np.abs(points - center), kind="stable")


def sphere_decode_pair(obs):
    """Exact ML over the PAM grid via pruned depth-2 enumeration.

    Candidates are visited in Schnorr-Euchner order; branches are pruned with
    the column-orthogonal lower bound and the search starts from the metric
    of the rounded zero-forcing point.  Returns the two decided PAM levels.
    """
    if obs.kind != "x":
        raise ValueError("sphere decoding applies to rotation pairs only")
    i1, i2 = _sphere_decode_indices(obs.r, obs.m_k, obs.pam.points)
    return np.array([obs.pam.points[i1], obs.pam.points[i2]])


def _sphere_decode_indices(r, m_k, points):
    m = points.size
    q, rr = np.linalg.qr(m_k)
    y_t = q.T @ r
    r00, r01, r11 = rr[0, 0], rr[0, 1], rr[1, 1]

    best_metric = np.inf
    best = (0, 0)
    try:
        zf = np.linalg.solve(m_k, r)
        i1 = int(np.clip(np.searchsorted(points, zf[0]), 1, m - 1))
        i1 = i1 if abs(points[i1] - zf[0]) < abs(points[i1 - 1] - zf[0]) else i1 - 1
        i2 = int(np.clip(np.searchsorted(points, zf[1]), 1, m - 1))
        i2 = i2 if abs(points[i2] - zf[1]) < abs(points[i2 - 1] - zf[1]) else i2 - 1
        best_metric = _direct_metric(r, m_k, points[i1], points[i2])
        best = (i1, i2)
    except np.linalg.LinAlgError:
        pass

    center2 = y_t[1] / r11 if r11 != 0 else np.inf
    for idx2 in _se_order(points, center2):
        p2 = points[idx2]
        if r11 != 0:
            resid = y_t[1] - r11 * p2
            bound = resid * resid
            if bound > best_metric * (1.0 + _PRUNE_SLACK):
                break  # SE order makes the bound nondecreasing
        center1 = (y_t[0] - r01 * p2) / r00 if r00 != 0 else np.inf
        for idx1 in _se_order(points, center1):
            metric = _direct_metric(r, m_k, points[idx1], p2)
            if metric > best_metric * (1.0 + _PRUNE_SLACK) and r00 != 0:
                break
            cand = (int(idx1), int(idx2))
            if metric < best_metric or (metric == best_metric and cand < best):
                best_metric = metric
                best = cand
    return best


def brute_force_ml(r, m_k, candidates):
    """Index of the exhaustive-search ML candidate.

    ``candidates`` is a (K, 2) array; ties go to the earliest row, so listing
    candidates in lexicographic order implements the lowest-candidate rule.
    """
    candidates = np.asarray(candidates, dtype=float)
    if candidates.ndim != 2 or candidates.shape[0] == 0 or candidates.shape[1] != 2:
        raise ValueError("candidates must be a nonempty (K, 2) array")
    diff = np.asarray(r, dtype=float)[None, :] - candidates @ np.asarray(m_k, dtype=float).T
    metrics = np.einsum("kj,kj->k", diff, diff)
    return int(np.argmin(metrics))


def x_candidate_grid(points):
    """PAM level pairs in lexicographic order, shape (M^2, 2)."""
    p1, p2 = np.meshgrid(points, points, indexing="ij")
    return np.stack([p1.ravel(), p2.ravel()], axis=1)


def region_candidates(zeta, m):
    """Codeword indices to test for a point in vertical slab ``zeta``.

    The edge slabs see the two outermost codewords; interior slab i sees
    {2i, 2i+1, 2i+2}.
    """
    if zeta <= 0:
        return (1, 2)
    if zeta >= m // 2:
        return (m - 1, m)
    return (2 * zeta, 2 * zeta + 1, 2 * zeta + 2)


def y_region_decode(obs, codebook, lambda_i, lambda_j, counter=None):
    """Exact ML codebook index from at most three distance computations.

    The slab index is ``floor(r_0 / (2 s_i a) + (M+1)/4)`` clamped to
    [0, M/2]; the ML codeword lies among the slab's candidates.  With a = 0
    (or a dead strong subchannel) the first coordinate is uninformative and
    the decision reduces to slicing the second coordinate.  ``counter``, if
    given, is a one-element list incremented per distance evaluated.
    """
    r = np.asarray(obs.r if isinstance(obs, PairObservation) else obs, dtype=float)
    m = codebook.m
    scale = 2.0 * lambda_i * codebook.a
    if scale == 0.0:
        # Degenerate codebook: only the second coordinate separates anything.
        if counter is not None:
            counter[0] += 2
        return 1 if r[1] <= 0.0 else 2
    t = int(np.floor(r[0] / scale + (m + 1) / 4.0))
    zeta = min(max(t, 0), m // 2)
    best_v = 0
    best_metric = np.inf
    for v in region_candidates(zeta, m):
        cand = codebook.vectors[v - 1]
        d0 = r[0] - lambda_i * cand[0]
        d1 = r[1] - lambda_j * cand[1]
        metric = d0 * d0 + d1 * d1
        if counter is not None:
            counter[0] += 1
        if metric < best_metric:
            best_metric = metric
            best_v = v
    return best_v


def decode_block(y, channel, design):
    """Invert :func:`xycodes.design.encode_block` under noise: exact ML bits."""
    observations = receive_rotate(y, channel, design)
    s = channel.svd.singular_values
    bits = []
    for (i_k, j_k), enc, m_k, obs_pair in zip(
        design.plan.pairs, design.encoders, design.m, observations
    ):
        li, lj = float(s[i_k - 1]), float(s[j_k - 1])
        if enc.kind == "x":
            codec = gray_codec(m_k)
            pam = obs_pair[0].pam
            decided = []
            for obs in obs_pair:
                i1, i2 = _sphere_decode_indices(obs.r, obs.m_k, pam.points)
                decided.append((i1, i2))
            (re_i, re_j), (im_i, im_j) = decided
            for level in (re_i, re_j):
                bits.extend(gray_level_to_bits(codec, level))
            for level in (im_i, im_j):
                bits.extend(gray_level_to_bits(codec, level))
        else:
            _, v_to_bits = y_index_tables(m_k)
            for obs in obs_pair:
                v = y_region_decode(obs, obs.codebook, li, lj)
                bits.extend(v_to_bits[v - 1])
    return np.array(bits, dtype=np.int64)
