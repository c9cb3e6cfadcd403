"""Pairwise score network with hand-written reverse-mode gradients.

Every residue pair (i, j) carries a hidden vector. The input projection sees
the scaled squared distance, the conditioning channels and an embedding of the
noise level. Each trunk block updates the pair vectors residually from their own
value plus the mean over their row and over their column, which gives every
pair a global view at O(L^2) cost.
"""

from __future__ import annotations

import numpy as np

from .errors import FormatError, InvalidInputError
from .io import read_tensor, write_tensor

DISTANCE_SCALE = 100.0
LEVEL_EMBED_WIDTH = 16
# parameters feeding the distance target are stored in these units, which keeps
# optimiser steps small relative to the precision the target needs
TARGET_UNIT = 1e-2
# noise level (Angstrom) above which restraint stiffness decays like 1/sigma^2
STIFFNESS_CROSSOVER = 1.0
CHECKPOINT_FORMAT = "scorefold-checkpoint"
CHECKPOINT_VERSION = 1


def level_embedding(sigma, width=LEVEL_EMBED_WIDTH) -> np.ndarray:
    """Fixed sinusoidal code of log(sigma)."""
    freqs = 2.0 ** (np.arange(width // 2) / 2.0 - 2.0)
    arg = np.log(sigma) * freqs
    out = np.empty(width)
    out[0::2] = np.sin(arg)
    out[1::2] = np.cos(arg)
    return out


# |i - j| buckets: 0..8 individually, then (8, 12], (12, 16], (16, 24], (24, 32], beyond
SEPARATION_EDGES = (0, 1, 2, 3, 4, 5, 6, 7, 8, 12, 16, 24, 32)


def separation_codes(L) -> np.ndarray:
    """One-hot bucket of the sequence separation |i - j|, shape (L, L, buckets)."""
    sep = np.abs(np.arange(L)[:, None] - np.arange(L)[None, :])
    idx = np.searchsorted(SEPARATION_EDGES, sep, side="left")
    return np.eye(len(SEPARATION_EDGES) + 1)[idx]


def field_scale(sigma):
    return sigma ** 2 * (1.0 + (sigma / STIFFNESS_CROSSOVER) ** 2)


def _elu(z):
    return np.where(z > 0, z, np.expm1(np.minimum(z, 0.0)))


def _elu_grad(z):
    return np.where(z > 0, 1.0, np.exp(np.minimum(z, 0.0)))


class PairwiseScoreNet:
    """Axial-aggregation pair network producing a score field over squared distances.

    The head reads a stiffness ``kappa`` (plus an offset per separation bucket
    and noise level) and a correction to a target ``t`` for
    the scaled squared distance from the final pair features. Two linear skips
    from the conditioning channels give a distance estimate ``r`` (so that
    ``t = r^2/100 + correction``) and a gate ``q``. The field is
    ``kappa * q * (t - d/100) / s(sigma)``, a learned restraint toward ``t``,
    with ``s(sigma) = sigma^2 (1 + sigma^2 / c^2)`` so that the useful range of
    ``kappa`` is similar at every noise level.

    ``distance_prior`` and ``gate_prior`` (length ``channels``) initialise the
    skips, e.g. to the bin centres of a distance histogram and to minus the
    probability of its "far" bin; the gate bias starts at 1.
    """

    def __init__(self, channels, width=32, blocks=2, seed=0, zero_head=True,
                 distance_prior=None, gate_prior=None):
        self.channels = int(channels)
        self.width = int(width)
        self.blocks = int(blocks)
        rng = np.random.default_rng(seed)
        W, C, E = self.width, self.channels, LEVEL_EMBED_WIDTH
        fan_in = 1 + C + E
        skip = np.zeros((C, 2))
        for col, prior in enumerate((distance_prior, gate_prior)):
            if prior is not None:
                prior = np.asarray(prior, dtype=np.float64)
                if prior.shape != (C,):
                    raise InvalidInputError(f"prior needs {C} entries, got {prior.shape}")
                skip[:, col] = prior
        p = {
            "in_dist": rng.normal(0, 1 / np.sqrt(fan_in), W) * 4.0,
            # the last two columns skip into the distance estimate and the gate
            "in_cond": np.hstack([rng.normal(0, 1 / np.sqrt(fan_in), (C, W)), skip]),
            "in_level": rng.normal(0, 1 / np.sqrt(fan_in), (E, W)),
            "in_sep": rng.normal(0, 1.0, (len(SEPARATION_EDGES) + 1, W)),
            "in_bias": np.zeros(W),
        }
        for b in range(self.blocks):
            s = 0.5 / np.sqrt(3 * W)
            p[f"b{b}_self"] = rng.normal(0, s, (W, W))
            p[f"b{b}_row"] = rng.normal(0, s, (W, W))
            p[f"b{b}_col"] = rng.normal(0, s, (W, W))
            p[f"b{b}_bias"] = np.zeros(W)
        p["stiff_w"] = np.zeros(W) if zero_head else rng.normal(0, 1 / np.sqrt(W), W)
        p["stiff_b"] = np.zeros(1)
        p["stiff_sep"] = np.zeros((len(SEPARATION_EDGES) + 1, E + 1))
        p["target_w"] = np.zeros(W) if zero_head else rng.normal(0, 1 / np.sqrt(W), W)
        p["target_b"] = np.zeros(1)
        p["gate_b"] = np.ones(1)
        self.params = p

    # -- parameter bookkeeping

    @property
    def names(self):
        return list(self.params)

    @property
    def n_params(self):
        return sum(v.size for v in self.params.values())

    @staticmethod
    def count_params(channels, width, blocks):
        W = width
        return (channels * (W + 2) + W * (LEVEL_EMBED_WIDTH + len(SEPARATION_EDGES) + 3)
                + blocks * (3 * W * W + W) + 2 * (W + 1) + 1
                + (len(SEPARATION_EDGES) + 1) * (LEVEL_EMBED_WIDTH + 1))

    def to_vector(self):
        return np.concatenate([v.ravel() for v in self.params.values()])

    def set_vector(self, vec):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != self.n_params:
            raise InvalidInputError(f"expected {self.n_params} parameters, got {vec.size}")
        off = 0
        for k, v in self.params.items():
            self.params[k] = vec[off:off + v.size].reshape(v.shape).copy()
            off += v.size

    def copy(self):
        other = PairwiseScoreNet.__new__(PairwiseScoreNet)
        other.channels, other.width, other.blocks = self.channels, self.width, self.blocks
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other

    # -- forward / backward

    def project_conditioning(self, features):
        F = np.asarray(features, dtype=np.float64)
        if F.shape[-1] != self.channels:
            raise InvalidInputError(f"net expects {self.channels} channels, got {F.shape[-1]}")
        return F @ self.params["in_cond"]

    def forward(self, D, cond, sigma, features=None):
        """Score field H (L, L) and a cache for :meth:`backward`.

        ``cond`` is the output of :meth:`project_conditioning`. Pass the raw
        ``features`` as well when gradients are needed.
        """
        p = self.params
        D = np.asarray(D, dtype=np.float64)
        W = self.width
        emb = level_embedding(sigma)
        Ds = D / DISTANCE_SCALE
        seps = separation_codes(len(D))
        z = (Ds[..., None] * p["in_dist"] + cond[..., :W] + seps @ p["in_sep"]
             + (emb @ p["in_level"] + p["in_bias"]))
        a = _elu(z)
        cache = {"Ds": Ds, "seps": seps, "features": features, "emb": emb, "sigma": sigma, "z0": z, "blocks": []}
        for b in range(self.blocks):
            row = a.mean(axis=1)
            col = a.mean(axis=0)
            zb = (
                a @ p[f"b{b}_self"]
                + (row @ p[f"b{b}_row"])[:, None, :]
                + (col @ p[f"b{b}_col"])[None, :, :]
                + p[f"b{b}_bias"]
            )
            cache["blocks"].append((a, row, col, zb))
            a = a + _elu(zb)
        emb1 = np.append(emb, 1.0)
        kappa = a @ p["stiff_w"] + seps @ (p["stiff_sep"] @ emb1) + p["stiff_b"][0]
        r_hat = cond[..., W]
        target = r_hat ** 2 / DISTANCE_SCALE + TARGET_UNIT * (a @ p["target_w"] + p["target_b"][0])
        gate = cond[..., W + 1] + p["gate_b"][0]
        gap = target - Ds
        cache.update(a_out=a, kappa=kappa, gate=gate, gap=gap, r_hat=r_hat)
        return kappa * gate * gap / field_scale(sigma), cache

    def backward(self, cache, dH):
        """Parameter gradients given dLoss/dH."""
        p = self.params
        g = {}
        dH = np.asarray(dH) / field_scale(cache["sigma"])
        a = cache["a_out"]
        W = self.width
        kappa, gate, gap = cache["kappa"], cache["gate"], cache["gap"]
        d_kappa = dH * gate * gap
        d_target = dH * kappa * gate
        d_r_hat = d_target * 2.0 * cache["r_hat"] / DISTANCE_SCALE
        d_target = d_target * TARGET_UNIT
        d_gate = dH * kappa * gap
        g["gate_b"] = np.array([d_gate.sum()])
        g["stiff_w"] = np.einsum("ijw,ij->w", a, d_kappa)
        g["stiff_b"] = np.array([d_kappa.sum()])
        g["stiff_sep"] = np.outer(np.einsum("ijs,ij->s", cache["seps"], d_kappa), np.append(cache["emb"], 1.0))
        g["target_w"] = np.einsum("ijw,ij->w", a, d_target)
        g["target_b"] = np.array([d_target.sum()])
        da = d_kappa[..., None] * p["stiff_w"] + d_target[..., None] * p["target_w"]
        for b in reversed(range(self.blocks)):
            a_in, row, col, zb = cache["blocks"][b]
            L = a_in.shape[0]
            dz = da * _elu_grad(zb)
            g[f"b{b}_self"] = a_in.reshape(-1, W).T @ dz.reshape(-1, W)
            s_row = dz.sum(axis=1)
            s_col = dz.sum(axis=0)
            g[f"b{b}_row"] = row.T @ s_row
            g[f"b{b}_col"] = col.T @ s_col
            g[f"b{b}_bias"] = dz.sum(axis=(0, 1))
            d_row = s_row @ p[f"b{b}_row"].T
            d_col = s_col @ p[f"b{b}_col"].T
            da = da + dz @ p[f"b{b}_self"].T + d_row[:, None, :] / L + d_col[None, :, :] / L
        dz0 = da * _elu_grad(cache["z0"])
        g["in_dist"] = np.einsum("ij,ijw->w", cache["Ds"], dz0)
        s = dz0.sum(axis=(0, 1))
        g["in_sep"] = np.einsum("ijs,ijw->sw", cache["seps"], dz0)
        g["in_level"] = np.outer(cache["emb"], s)
        g["in_bias"] = s
        F = cache["features"]
        if F is None:
            raise InvalidInputError("forward was run without raw features; cannot backpropagate")
        dcond = np.concatenate([dz0, d_r_hat[..., None], d_gate[..., None]], axis=-1)
        g["in_cond"] = F.reshape(-1, F.shape[-1]).T @ dcond.reshape(-1, W + 2)
        return {k: g[k] for k in p}

    def field(self, D, features, sigma):
        return self.forward(D, self.project_conditioning(features), sigma)[0]


class Adam:
    def __init__(self, params, lr=1e-4, betas=(0.9, 0.999), eps=1e-8):
        self.lr, self.betas, self.eps = lr, betas, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.betas
        c1, c2 = 1 - b1 ** self.t, 1 - b2 ** self.t
        for k in params:
            self.m[k] = b1 * self.m[k] + (1 - b1) * grads[k]
            self.v[k] = b2 * self.v[k] + (1 - b2) * grads[k] ** 2
            if self.lr:
                params[k] = params[k] - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def save_checkpoint(net, path, extra=None):
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "channels": net.channels,
        "width": net.width,
        "blocks": net.blocks,
        "level_embed_width": LEVEL_EMBED_WIDTH,
        "distance_scale": DISTANCE_SCALE,
        "target_unit": TARGET_UNIT,
        "stiffness_crossover": STIFFNESS_CROSSOVER,
        "layout": ";".join(f"{k}:{'x'.join(map(str, v.shape))}" for k, v in net.params.items()),
    }
    meta.update(extra or {})
    write_tensor(path, net.to_vector(), meta)


def load_checkpoint(path):
    """Returns ``(net, metadata)``."""
    vec, meta = read_tensor(path)
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise FormatError(f"{path}: not a score-network checkpoint")
    if int(meta.get("version", -1)) != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {meta.get('version')}")
    net = PairwiseScoreNet(int(meta["channels"]), int(meta["width"]), int(meta["blocks"]))
    net.set_vector(vec.astype(np.float64))
    return net, meta
