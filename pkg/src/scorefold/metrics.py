"""Structure quality scores: lDDT-Ca, GDT-TS and superposed RMSD."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InvalidInputError
from .geometry import as_coords, kabsch_superpose


@dataclass(frozen=True)
class MetricParams:
    inclusion_radius: float = 15.0
    lddt_thresholds: tuple = (0.5, 1.0, 2.0, 4.0)
    min_separation: int = 1
    gdt_thresholds: tuple = (1.0, 2.0, 4.0, 8.0)

    def __post_init__(self):
        for name in ("lddt_thresholds", "gdt_thresholds"):
            t = getattr(self, name)
            if not t or t[0] <= 0 or any(a >= b for a, b in zip(t, t[1:])):
                raise ConfigError(f"{name} must be positive and strictly increasing")
        if self.inclusion_radius <= self.lddt_thresholds[-1]:
            raise ConfigError("inclusion radius must exceed the largest lDDT threshold")


DEFAULT_PARAMS = MetricParams()


def _coords(s):
    return as_coords(s.coords if hasattr(s, "coords") else s)


def _pair(pred, native, min_len):
    P, N = _coords(pred), _coords(native)
    if P.shape != N.shape:
        raise InvalidInputError(f"length mismatch: {len(P)} vs {len(N)}")
    if len(P) < min_len:
        raise InvalidInputError(f"need at least {min_len} residues, got {len(P)}")
    return P, N


def _dist(X):
    return np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(-1))


def lddt_ca(pred, native, params: MetricParams = DEFAULT_PARAMS) -> float:
    """Superposition-free local distance difference test on Calpha atoms.

    Considers residue pairs at sequence separation >= ``min_separation`` whose
    native distance is below the inclusion radius, and averages over the
    thresholds the fraction of those pairs whose distance is preserved to
    within the threshold.
    """
    P, N = _pair(pred, native, 2)
    dp, dn = _dist(P), _dist(N)
    i, j = np.triu_indices(len(N), k=max(params.min_separation, 1))
    keep = dn[i, j] < params.inclusion_radius
    if not keep.any():
        raise InvalidInputError("no native residue pairs inside the inclusion radius")
    err = np.abs(dp[i, j] - dn[i, j])[keep]
    return float(np.mean([(err < t).mean() for t in params.lddt_thresholds]))


def rmsd(pred, native) -> float:
    P, N = _pair(pred, native, 2)
    return kabsch_superpose(P, N)[2]


def _seed_windows(L):
    sizes = sorted({L, L // 2, L // 4} - {0, 1, 2}, reverse=True)
    for w in sizes:
        for start in range(L - w + 1):
            yield np.arange(start, start + w)


def _best_fraction(P, N, cutoff, max_iter=20):
    L = len(P)
    best = 0
    for idx in _seed_windows(L):
        sel = np.zeros(L, dtype=bool)
        sel[idx] = True
        for _ in range(max_iter):
            R, t, _ = kabsch_superpose(P[sel], N[sel])
            dev = np.sqrt(((P @ R.T + t - N) ** 2).sum(axis=1))
            within = dev < cutoff
            best = max(best, int(within.sum()))
            if best == L or within.sum() < 3 or np.array_equal(within, sel):
                break
            sel = within
        if best == L:
            break
    return best / L


def gdt_ts(pred, native, params: MetricParams = DEFAULT_PARAMS) -> float:
    """Global distance test (total score) under proper rotations only.

    For each cutoff the largest residue fraction within the cutoff is searched
    by iterative superposition seeded from every contiguous window of length
    L, L/2 and L/4. This approximates the exhaustive search from below.
    """
    P, N = _pair(pred, native, 3)
    return float(np.mean([_best_fraction(P, N, c) for c in params.gdt_thresholds]))
