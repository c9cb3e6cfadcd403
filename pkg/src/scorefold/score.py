"""Coordinate scores: the distance-to-coordinate chain rule, the analytic oracle
and the network-backed score, plus the denoising score matching objective."""

from __future__ import annotations

from typing import Protocol

import numpy as np

from .errors import InvalidInputError
from .geometry import Structure, as_coords, distance_matrix
from .noise import NoiseSchedule, true_score


def chain_rule_gradients(H, X) -> np.ndarray:
    """Pull an (L, L) score field over squared distances back to coordinates.

    g_i = sum_j 2 (h_ij + h_ji) (x_i - x_j), i.e. the gradient of
    sum_ij h_ij d_ij(X) with H held fixed.
    """
    H = np.asarray(H, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != 3 or H.shape != (len(X), len(X)):
        raise InvalidInputError(f"score field {H.shape} does not match coordinates {X.shape}")
    S = H + H.T
    return 2.0 * (S.sum(axis=1)[:, None] * X - S @ X)


def chain_rule_backward(dG, X) -> np.ndarray:
    """Adjoint of :func:`chain_rule_gradients` in H: dL/dh_ij given dL/dG."""
    P = np.asarray(X) @ np.asarray(dG).T  # P_ij = x_i . u_j
    diag = np.diag(P)
    return 2.0 * (diag[:, None] + diag[None, :] - P - P.T)


class CoordinateScore(Protocol):
    schedule: NoiseSchedule

    def evaluate(self, X, bundle, level: int) -> np.ndarray:
        """Score estimate over coordinates, shape (L, 3)."""


class OracleScore:
    """Exact denoising score toward a known native structure; ignores the bundle."""

    def __init__(self, native: Structure, schedule: NoiseSchedule):
        self.native = native
        self.schedule = schedule

    def evaluate(self, X, bundle, level):
        X = np.asarray(X, dtype=np.float64)
        if X.shape != self.native.coords.shape:
            raise InvalidInputError(
                f"oracle native has {len(self.native)} residues, got coordinates {X.shape}"
            )
        return true_score(self.native.coords, X, self.schedule[level])


def oracle_score(native: Structure, schedule: NoiseSchedule) -> OracleScore:
    return OracleScore(native, schedule)


class NetScore:
    """Score from a pairwise network over the distance matrix of the input."""

    def __init__(self, net, schedule: NoiseSchedule):
        self.net = net
        self.schedule = schedule
        self._memo = (None, None)

    def _conditioning(self, bundle):
        # memoised projection of the conditioning channels; pure function of (net, bundle)
        key, proj = self._memo
        if key is not bundle:
            proj = self.net.project_conditioning(bundle.features())
            self._memo = (bundle, proj)
        return proj

    def field(self, X, bundle, level) -> np.ndarray:
        X = as_coords(X)
        if bundle.length != len(X):
            raise InvalidInputError(f"bundle covers {bundle.length} residues, coordinates have {len(X)}")
        H, _ = self.net.forward(distance_matrix(X), self._conditioning(bundle), self.schedule[level])
        return H

    def evaluate(self, X, bundle, level):
        X = as_coords(X)
        return chain_rule_gradients(self.field(X, bundle, level), X)


def net_score(net, schedule: NoiseSchedule) -> NetScore:
    return NetScore(net, schedule)


def dsm_loss(model: CoordinateScore, batch, schedule: NoiseSchedule, rng) -> float:
    """Monte-Carlo denoising score matching loss over a batch.

    ``batch`` holds ``(Structure, bundle)`` pairs. Each sample draws a level
    uniformly, perturbs the native and scores the perturbed coordinates;
    the per-sample term is sigma^2 * ||G - (X - X~)/sigma^2||^2 and the batch
    value is half the mean.
    """
    if not batch:
        raise InvalidInputError("empty batch")
    total = 0.0
    for structure, bundle in batch:
        k = int(rng.integers(len(schedule)))
        sigma = schedule[k]
        X = structure.coords
        X_tilde = X + sigma * rng.standard_normal(X.shape)
        resid = model.evaluate(X_tilde, bundle, k) - true_score(X, X_tilde, sigma)
        total += sigma ** 2 * float((resid ** 2).sum())
    return 0.5 * total / len(batch)
