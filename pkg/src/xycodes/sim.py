"""Seeded Monte-Carlo link simulation: SNR sweeps, condition-number sweeps,
angle scans, and bound curves, all emitted as CSV.

Determinism contract: the counters of every operating point are a pure
function of (config, seed).  Words are processed in fixed blocks, each with
its own counter-based stream, and a point always consumes the shortest
prefix of blocks that satisfies the stop rule, so the worker count only
affects wall time, never results.
"""

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from . import analysis as _analysis
from . import rng as _rng
from ._fastpath import BLOCK_WORDS, BlockCounters, BlockSpec, bits_per_word, run_block
from .channel import channel_from_condition, sample_eigen_pairs
from .design import design_x_angle, x_precoder_angle, y_code_params_offline, y_precoder_params

SCHEMES = ("svd-uncoded", "x-code", "x-precoder", "y-code", "y-precoder")

CSV_HEADER = (
    "scheme,n_r,n_t,M,eta_bpsHz,snr_db,beta,theta,bits,bit_errors,"
    "words,word_errors,ber,wep,ci95,seed"
)

# Stream path namespace for the offline code design, clear of point indices.
_DESIGN_STREAM_BASE = 1 << 40


@dataclass(frozen=True)
class SimConfig:
    """One experiment description; JSON files mirror these fields."""

    scheme: str = "x-code"
    n_r: int = 2
    n_t: int = 2
    m: int = 2
    p_t: float = 1.0
    snr_db: tuple = ()
    min_word_errors: int = 200
    max_words: int = 10_000_000
    seed: int = 1234
    workers: int = 1
    beta: tuple = None  # condition-number sweep points
    beta_unit_gain: bool = True
    theta: tuple = None  # angle-scan points, radians
    use_bound: bool = False  # angle scan: evaluate the bound instead of simulating
    full_path: bool = False  # validation mode: full matrix transmit path
    y_design_snr_db: float = 20.0
    y_design_samples: int = 10_000

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.n_r < 2 or self.n_r % 2:
            raise ValueError("n_r must be even and >= 2")
        if self.n_r > self.n_t:
            raise ValueError("need n_r <= n_t")
        if self.m < 2 or self.m & (self.m - 1):
            raise ValueError("m must be a power of 2 >= 2")
        if self.p_t <= 0:
            raise ValueError("p_t must be positive")
        if self.min_word_errors < 1 or self.max_words < 1:
            raise ValueError("stop rule thresholds must be positive")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))
        if self.beta is not None:
            object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        if self.theta is not None:
            object.__setattr__(self, "theta", tuple(float(t) for t in self.theta))

    @property
    def eta(self):
        return bits_per_word(self.scheme, self.m, self.n_r)

    def to_dict(self):
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class PointResult:
    snr_db: float
    beta: float = None
    theta: float = None
    bits: int = 0
    bit_errors: int = 0
    words: int = 0
    word_errors: int = 0
    capped: bool = False
    wall_time: float = 0.0
    n0: float = 0.0
    mean_signal_energy: float = 0.0  # E ||x||^2 per word
    mean_noise_energy: float = 0.0  # E ||n||^2 per word

    @property
    def ber(self):
        return self.bit_errors / self.bits if self.bits else None

    @property
    def wep(self):
        return self.word_errors / self.words if self.words else None

    @property
    def ci95(self):
        if not self.words:
            return None
        p = self.wep
        return 1.96 * math.sqrt(p * (1.0 - p) / self.words)


@dataclass(frozen=True)
class SimResult:
    config: SimConfig
    points: tuple
    x_theta: float = None  # the fixed rotation angle, when one exists
    y_ab: tuple = None  # per-pair (a, b) of the a-priori triangular code


def _fixed_design_params(cfg):
    """Per-pair parameters decided before any channel is seen."""
    half = cfg.n_r // 2
    if cfg.scheme == "svd-uncoded":
        return {"x_thetas": (0.0,) * half}
    if cfg.scheme == "x-code":
        theta, _ = design_x_angle(cfg.m)
        return {"x_thetas": (theta,) * half}
    if cfg.scheme == "y-code":
        params = []
        for k in range(half):
            gen = _rng.stream(cfg.seed, _DESIGN_STREAM_BASE + k)

            def sampler(g, count, _k=k):
                return sample_eigen_pairs(cfg.n_r, cfg.n_t, _k, count, g)

            params.append(
                y_code_params_offline(
                    cfg.m,
                    cfg.y_design_snr_db,
                    sampler,
                    gen,
                    p_t=cfg.p_t,
                    n_r=cfg.n_r,
                    n_samples=cfg.y_design_samples,
                )
            )
        return {"y_params": tuple(params)}
    return {}


def _point_design_params(cfg, betas):
    """Precoder adaptation for a deterministic channel, once per point."""
    if cfg.scheme == "x-precoder":
        return {"x_thetas": tuple(x_precoder_angle(b, cfg.m) for b in betas)}
    if cfg.scheme == "y-precoder":
        out = []
        for beta in betas:
            a, b, _ = y_precoder_params(beta, cfg.m, cfg.p_t, cfg.n_r, 1.0)
            out.append((a, b))
        return {"y_params": tuple(out)}
    return {}


def _noise_density(cfg, snr_db):
    if math.isinf(snr_db):
        return 0.0
    return cfg.p_t / (10.0 ** (snr_db / 10.0))


def _map_blocks(specs, pool):
    if pool is None:
        return [run_block(s) for s in specs]
    return list(pool.map(run_block, specs))


def run_point(cfg, snr_db, point_index=0, beta=None, theta=None, fixed_params=None, pool=None):
    """Simulate one operating point until the stop rule fires.

    Blocks are merged in index order and the point stops after the first
    block that reaches ``min_word_errors`` or ``max_words``; later blocks are
    discarded, so the included set never depends on scheduling.
    """
    start = time.perf_counter()
    n0 = _noise_density(cfg, snr_db)
    params = dict(fixed_params if fixed_params is not None else _fixed_design_params(cfg))

    fixed_lam = None
    if beta is not None:
        if cfg.n_r != 2:
            raise ValueError("condition-number sweeps are defined for 2x2 systems")
        if cfg.beta_unit_gain:
            lam = channel_from_condition(beta).svd.singular_values
        else:
            lam = np.array([float(beta), 1.0])
        fixed_lam = tuple(lam)
        params.update(_point_design_params(cfg, [float(beta)] * (cfg.n_r // 2)))
    if theta is not None:
        params["x_thetas"] = (float(theta),) * (cfg.n_r // 2)

    def spec_for(block_index):
        return BlockSpec(
            scheme=cfg.scheme,
            n_r=cfg.n_r,
            n_t=cfg.n_t,
            m=cfg.m,
            p_t=cfg.p_t,
            n0=n0,
            seed=cfg.seed,
            point_index=point_index,
            block_index=block_index,
            words=BLOCK_WORDS,
            fixed_lam=fixed_lam,
            full_path=cfg.full_path,
            **params,
        )

    total = BlockCounters()
    next_block = 0
    wave = 1
    stopped = False
    while not stopped:
        specs = [spec_for(b) for b in range(next_block, next_block + wave)]
        next_block += wave
        wave = min(max(2 * wave, cfg.workers), 64)
        for counters in _map_blocks(specs, pool):
            total.add(counters)
            if total.word_errors >= cfg.min_word_errors or total.words >= cfg.max_words:
                stopped = True
                break

    return PointResult(
        snr_db=float(snr_db),
        beta=None if beta is None else float(beta),
        theta=None if theta is None else float(theta),
        bits=total.bits,
        bit_errors=total.bit_errors,
        words=total.words,
        word_errors=total.word_errors,
        capped=total.word_errors < cfg.min_word_errors,
        wall_time=time.perf_counter() - start,
        n0=n0,
        mean_signal_energy=total.signal_energy / total.words,
        mean_noise_energy=total.noise_energy / total.words,
    )


def _design_summary(cfg, params):
    x_theta = None
    y_ab = None
    if "x_thetas" in params and cfg.scheme in ("x-code", "svd-uncoded"):
        x_theta = params["x_thetas"][0]
    if "y_params" in params:
        y_ab = params["y_params"]
    return x_theta, y_ab


def _with_pool(cfg):
    if cfg.workers > 1:
        return ProcessPoolExecutor(max_workers=cfg.workers)
    return None


def sweep_snr(cfg):
    """One point per configured SNR value."""
    params = _fixed_design_params(cfg)
    pool = _with_pool(cfg)
    try:
        points = tuple(
            run_point(cfg, snr, point_index=i, fixed_params=params, pool=pool)
            for i, snr in enumerate(cfg.snr_db)
        )
    finally:
        if pool is not None:
            pool.shutdown()
    x_theta, y_ab = _design_summary(cfg, params)
    return SimResult(config=cfg, points=points, x_theta=x_theta, y_ab=y_ab)


def sweep_beta(cfg):
    """Fixed-condition-number channels at one SNR, one point per beta."""
    if cfg.n_r != 2 or cfg.n_t != 2:
        raise ValueError("condition-number sweeps are defined for 2x2 systems")
    if not cfg.beta:
        raise ValueError("config has no beta list")
    if len(cfg.snr_db) != 1:
        raise ValueError("condition-number sweeps need exactly one SNR point")
    params = _fixed_design_params(cfg)
    pool = _with_pool(cfg)
    try:
        points = tuple(
            run_point(cfg, cfg.snr_db[0], point_index=i, beta=b, fixed_params=params, pool=pool)
            for i, b in enumerate(cfg.beta)
        )
    finally:
        if pool is not None:
            pool.shutdown()
    x_theta, y_ab = _design_summary(cfg, params)
    return SimResult(config=cfg, points=points, x_theta=x_theta, y_ab=y_ab)


def angle_scan(cfg):
    """Word error versus rotation angle for a single 2x2 rotation pair.

    With ``use_bound`` the fourth-order bound replaces simulation: the
    returned points carry zero counters and the bound value in place of the
    simulated word error probability.
    """
    if cfg.scheme != "x-code" or cfg.n_r != 2:
        raise ValueError("angle scans are defined for the 2x2 rotation code")
    thetas = cfg.theta if cfg.theta else tuple(np.linspace(0.0, math.pi / 4.0, 46))
    if len(cfg.snr_db) != 1:
        raise ValueError("angle scans need exactly one SNR point")
    snr = cfg.snr_db[0]
    if cfg.use_bound:
        gamma = 10.0 ** (snr / 10.0)
        points = []
        for t in thetas:
            bound = _analysis.x_union_bound_2x2(t, cfg.m, gamma)
            pair_wep = bound.value if math.isfinite(bound.value) else 1.0
            wep = 1.0 - (1.0 - min(pair_wep, 1.0)) ** 2
            points.append(
                _BoundPoint(snr_db=snr, theta=float(t), value=wep, n0=_noise_density(cfg, snr))
            )
        return SimResult(config=cfg, points=tuple(points))
    pool = _with_pool(cfg)
    try:
        points = tuple(
            run_point(cfg, snr, point_index=i, theta=t, fixed_params={}, pool=pool)
            for i, t in enumerate(thetas)
        )
    finally:
        if pool is not None:
            pool.shutdown()
    return SimResult(config=cfg, points=points)


@dataclass(frozen=True)
class _BoundPoint:
    """Stands in for a PointResult when a bound replaces simulation."""

    snr_db: float
    theta: float
    value: float
    n0: float
    beta: float = None
    bits: int = 0
    bit_errors: int = 0
    words: int = 0
    word_errors: int = 0
    capped: bool = False
    wall_time: float = 0.0
    mean_signal_energy: float = 0.0
    mean_noise_energy: float = 0.0

    @property
    def ber(self):
        return None

    @property
    def wep(self):
        return self.value

    @property
    def ci95(self):
        return None


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_csv(result, path):
    """Write one CSV row per operating point, deterministically."""
    cfg = result.config
    rows = []
    for p in result.points:
        rows.append(
            [
                cfg.scheme,
                cfg.n_r,
                cfg.n_t,
                cfg.m,
                cfg.eta,
                _fmt(p.snr_db),
                _fmt(p.beta),
                _fmt(p.theta),
                p.bits,
                p.bit_errors,
                p.words,
                p.word_errors,
                _fmt(p.ber),
                _fmt(p.wep),
                _fmt(p.ci95),
                cfg.seed,
            ]
        )
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER.split(","))
            writer.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc}") from exc


def emit_bound_csv(curve, path):
    """Write a bound curve: snr_db, value, scheme, params."""
    params = ";".join(f"{k}={v}" for k, v in sorted(curve.metadata.items()))
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["snr_db", "value", "scheme", "params"])
            for snr_db, value in curve.points:
                writer.writerow([_fmt(snr_db), _fmt(value), curve.scheme, params])
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc}") from exc
