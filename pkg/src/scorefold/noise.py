"""Noise schedules, Gaussian coordinate perturbation and denoising targets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InvalidInputError


@dataclass(frozen=True)
class NoiseSchedule:
    """Strictly descending noise standard deviations (Angstrom)."""

    sigmas: tuple

    def __post_init__(self):
        sig = tuple(float(s) for s in self.sigmas)
        if not sig:
            raise ConfigError("noise schedule needs at least one level")
        if not all(np.isfinite(s) and s > 0 for s in sig):
            raise ConfigError("noise levels must be positive and finite")
        if any(a <= b for a, b in zip(sig, sig[1:])):
            raise ConfigError("noise levels must be strictly descending")
        object.__setattr__(self, "sigmas", sig)

    def __len__(self):
        return len(self.sigmas)

    def __getitem__(self, k):
        return self.sigmas[k]

    def as_array(self) -> np.ndarray:
        return np.array(self.sigmas)


def geometric_schedule(sigma_max=10.0, sigma_min=0.01, levels=32) -> NoiseSchedule:
    """Log-uniformly spaced levels from ``sigma_max`` down to ``sigma_min``."""
    if not (sigma_min > 0 and sigma_max > sigma_min):
        raise ConfigError(f"need sigma_max > sigma_min > 0, got {sigma_max}, {sigma_min}")
    if int(levels) != levels or levels < 2:
        raise ConfigError(f"need at least 2 levels, got {levels}")
    levels = int(levels)
    ratio = (sigma_min / sigma_max) ** (1.0 / (levels - 1))
    sigmas = [sigma_max * ratio ** k for k in range(levels)]
    sigmas[0], sigmas[-1] = float(sigma_max), float(sigma_min)
    return NoiseSchedule(tuple(sigmas))


def perturb(X, sigma, rng) -> np.ndarray:
    """Add i.i.d. N(0, sigma^2) noise to every coordinate."""
    if not sigma > 0:
        raise InvalidInputError(f"sigma must be positive, got {sigma}")
    X = np.asarray(X, dtype=np.float64)
    return X + sigma * rng.standard_normal(X.shape)


def true_score(X, X_tilde, sigma) -> np.ndarray:
    """Gradient of log N(X_tilde; X, sigma^2 I) with respect to X_tilde."""
    X = np.asarray(X, dtype=np.float64)
    X_tilde = np.asarray(X_tilde, dtype=np.float64)
    if X.shape != X_tilde.shape:
        raise InvalidInputError(f"shape mismatch: {X.shape} vs {X_tilde.shape}")
    if not sigma > 0:
        raise InvalidInputError(f"sigma must be positive, got {sigma}")
    return (X - X_tilde) / sigma ** 2
