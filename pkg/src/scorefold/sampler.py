"""Annealed Langevin structure optimisation and handedness resolution."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, HandednessUndecidableError, InvalidInputError, SamplingError
from .geometry import Structure, center, chain_dihedrals, mirror
from .io import read_tensor, write_tensor
from .noise import NoiseSchedule, geometric_schedule

log = logging.getLogger(__name__)

HIST_BINS = 36
HIST_EPS = 1e-4


# ---------------------------------------------------------------- dihedral statistics


@dataclass(frozen=True)
class DihedralHistogram:
    """Smoothed frequencies of Calpha dihedrals over ``bins`` equal bins of (-pi, pi]."""

    counts: np.ndarray
    freqs: np.ndarray
    eps: float = HIST_EPS

    @property
    def bins(self):
        return len(self.freqs)

    @property
    def centers(self):
        w = 2 * np.pi / self.bins
        return -np.pi + w * (np.arange(self.bins) + 0.5)


def bin_index(angles, bins):
    w = 2 * np.pi / bins
    idx = np.ceil((np.asarray(angles) + np.pi) / w).astype(int) - 1
    return np.clip(idx, 0, bins - 1)


def histogram_from_angles(angles, bins=HIST_BINS, eps=HIST_EPS) -> DihedralHistogram:
    angles = np.asarray(angles, dtype=float)
    if angles.size == 0:
        raise InvalidInputError("no dihedral angles to histogram")
    counts = np.bincount(bin_index(angles, bins), minlength=bins).astype(float)
    freqs = counts / counts.sum() + eps
    return DihedralHistogram(counts, freqs / freqs.sum(), eps)


def structure_dihedrals(X):
    angles, valid = chain_dihedrals(X)
    return angles[valid]


def build_reference_histogram(structures, bins=HIST_BINS, eps=HIST_EPS) -> DihedralHistogram:
    """Pool consecutive-Calpha dihedrals over ``structures`` (Structures or arrays)."""
    pool = []
    for s in structures:
        X = s.coords if isinstance(s, Structure) else np.asarray(s)
        if len(X) < 4:
            raise InvalidInputError("every structure needs at least 4 residues")
        pool.append(structure_dihedrals(X))
    pooled = np.concatenate(pool) if pool else np.zeros(0)
    if pooled.size == 0:
        raise InvalidInputError("empty dihedral pool")
    return histogram_from_angles(pooled, bins, eps)


def kl_divergence(P: DihedralHistogram, Q: DihedralHistogram) -> float:
    p = P.freqs if isinstance(P, DihedralHistogram) else np.asarray(P, dtype=float)
    q = Q.freqs if isinstance(Q, DihedralHistogram) else np.asarray(Q, dtype=float)
    if p.shape != q.shape:
        raise InvalidInputError(f"bin count mismatch: {p.size} vs {q.size}")
    if (q <= 0).any():
        raise InvalidInputError("reference histogram must be strictly positive")
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] / q[nz])))


def resolve_handedness(X, reference: DihedralHistogram):
    """Return X or mirror(X), whichever has the lower KL divergence to ``reference``."""
    X = np.asarray(X, dtype=float)
    if len(X) < 4:
        raise InvalidInputError("handedness needs at least 4 residues")
    angles = structure_dihedrals(X)
    if angles.size == 0:
        raise HandednessUndecidableError("all dihedral quadruples are degenerate")
    kl_orig = kl_divergence(histogram_from_angles(angles, reference.bins, reference.eps), reference)
    # mirroring negates every dihedral
    flipped = np.where(angles >= np.pi, np.pi, -angles)
    kl_mirr = kl_divergence(histogram_from_angles(flipped, reference.bins, reference.eps), reference)
    if kl_mirr < kl_orig - 1e-12:
        return mirror(X)
    return X


def save_histogram(hist: DihedralHistogram, path, extra=None):
    meta = {"kind": "dihedral-histogram", "bins": hist.bins, "eps": repr(hist.eps),
            "samples": int(hist.counts.sum()), "counts": ",".join(str(int(c)) for c in hist.counts)}
    meta.update(extra or {})
    write_tensor(path, hist.freqs.astype(np.float64), meta)


def load_histogram(path) -> DihedralHistogram:
    freqs, meta = read_tensor(path)
    if meta.get("kind") != "dihedral-histogram" or freqs.ndim != 1:
        raise InvalidInputError(f"{path}: not a dihedral histogram file")
    counts = np.array([float(c) for c in meta["counts"].split(",")])
    return DihedralHistogram(counts, freqs.astype(np.float64), float(meta["eps"]))


# ---------------------------------------------------------------- sampling


@dataclass
class SamplerConfig:
    schedule: NoiseSchedule = field(default_factory=geometric_schedule)
    iterations: int = 64
    lambda0: float = 0.1
    decoys: int = 128
    seed: int = 0
    hirm_enabled: bool = False
    hirm_reference: DihedralHistogram | None = None
    snapshot_stride: int = 0
    recenter: bool = True

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigError("iterations per stage must be >= 0")
        if not self.lambda0 > 0:
            raise ConfigError("reference step size must be positive")
        if self.decoys < 1:
            raise ConfigError("need at least one decoy")
        if self.hirm_enabled and self.hirm_reference is None:
            raise ConfigError("handedness resolution needs a reference histogram")


@dataclass
class Trajectory:
    initial: np.ndarray
    stage_coords: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)  # (stage, iteration, coords)
    stage_seconds: list = field(default_factory=list)  # cumulative wall clock at stage end
    mirrored: list = field(default_factory=list)
    records: list = field(default_factory=list)


def init_structure(L, rng) -> np.ndarray:
    if L < 4:
        raise InvalidInputError("need at least 4 residues")
    return rng.standard_normal((L, 3))


def step_size(schedule: NoiseSchedule, k: int, lambda0: float) -> float:
    """lambda_k = lambda0 * sigma_k^2 for 0-based level ``k``."""
    if not 0 <= k < len(schedule):
        raise InvalidInputError(f"level {k} outside 0..{len(schedule) - 1}")
    return lambda0 * schedule[k] ** 2


def langevin_step(X, model, bundle, k, lam, rng, iteration=None, noise=None):
    """X + (lam/2) G + sqrt(lam) V with V standard normal (or the given ``noise``)."""
    # overflow is reported below as a sampling failure with its location
    with np.errstate(over="ignore", invalid="ignore"):
        G = model.evaluate(X, bundle, k)
    if not np.isfinite(G).all():
        raise SamplingError("score is not finite", k, iteration)
    V = rng.standard_normal(X.shape) if noise is None else noise
    return X + 0.5 * lam * G + np.sqrt(lam) * V


def anneal_sample(model, bundle, config: SamplerConfig, seed=None, init=None):
    """Run annealed Langevin dynamics for one decoy.

    Returns ``(Structure, Trajectory)``. ``seed`` defaults to ``config.seed``.
    """
    L = bundle.length
    schedule = config.schedule
    rng = np.random.default_rng(config.seed if seed is None else seed)
    X = init_structure(L, rng) if init is None else np.array(init, dtype=float)
    if X.shape != (L, 3):
        raise InvalidInputError(f"initial coordinates {X.shape} do not match {L} residues")
    traj = Trajectory(initial=X.copy())
    t0 = time.perf_counter()
    stride = config.snapshot_stride
    for k in range(len(schedule)):
        lam = step_size(schedule, k, config.lambda0)
        for t in range(config.iterations):
            X = langevin_step(X, model, bundle, k, lam, rng, iteration=t)
            if stride and (t + 1) % stride == 0 and t + 1 < config.iterations:
                traj.snapshots.append((k, t + 1, X.copy()))
        flipped = False
        # an empty stage has nothing to correct
        if config.iterations:
            if config.hirm_enabled:
                Y = resolve_handedness(X, config.hirm_reference)
                flipped = Y is not X
                X = Y
            if config.recenter:
                X = center(X)
        traj.mirrored.append(flipped)
        traj.stage_coords.append(X.copy())
        traj.stage_seconds.append(time.perf_counter() - t0)
    return Structure(bundle.sequence, X), traj


def decoy_seeds(seed, n):
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def _run_one(args):
    model, bundle, config, seed = args
    return anneal_sample(model, bundle, config, seed=seed)


def sample_decoys(model, bundle, config: SamplerConfig, jobs=1):
    """Independent decoys with seeds derived from ``config.seed``; output order is stable."""
    seeds = decoy_seeds(config.seed, config.decoys)
    tasks = [(model, bundle, config, s) for s in seeds]
    if jobs <= 1:
        return [_run_one(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_one, tasks))
