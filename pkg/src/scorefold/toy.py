"""Idealised Calpha structures and synthetic prediction maps for toy experiments."""

from __future__ import annotations

import numpy as np

from pathlib import Path

from .conditioning import DISTANCE_BIN_CENTERS, PREDICTION_CHANNELS, group_slices, save_predictions
from .geometry import Structure
from .io import ManifestEntry, write_ca_pdb, write_manifest

CA_BOND = 3.8



def nerf_chain(angles, dihedrals, bond=CA_BOND):
    """Cartesian trace from virtual bond angles and dihedrals (radians).

    ``angles`` has length L - 2 and ``dihedrals`` length L - 3.
    """
    angles = np.asarray(angles, dtype=float)
    dihedrals = np.asarray(dihedrals, dtype=float)
    L = len(angles) + 2
    X = np.zeros((L, 3))
    X[1] = [bond, 0.0, 0.0]
    t = angles[0]
    X[2] = X[1] + bond * np.array([-np.cos(t), np.sin(t), 0.0])
    for i in range(3, L):
        a, b, c = X[i - 3], X[i - 2], X[i - 1]
        bc = c - b
        bc /= np.linalg.norm(bc)
        n = np.cross(b - a, bc)
        n /= np.linalg.norm(n)
        m = np.cross(n, bc)
        theta, tau = angles[i - 2], dihedrals[i - 3]
        d2 = np.array([-bond * np.cos(theta), bond * np.sin(theta) * np.cos(tau), bond * np.sin(theta) * np.sin(tau)])
        X[i] = c + d2[0] * bc + d2[1] * m + d2[2] * n
    return X


def ideal_helix_coords(L, radius=2.3, rise=1.5, turn_deg=100.0):
    """Right-handed alpha helix from helical parameters."""
    i = np.arange(L)
    phi = np.deg2rad(turn_deg) * i
    return np.stack([radius * np.cos(phi), radius * np.sin(phi), rise * i], axis=1)


HELIX = (np.deg2rad(91.0), np.deg2rad(50.0))


def _segments(layout, rng=None, jitter_deg=0.0):
    """Internal coordinates from ``[(n_residues, (angle, dihedral)), ...]``."""
    ang, dih = [], []
    for n, (a, d) in layout:
        ang += [a] * n
        dih += [d] * n
    ang, dih = np.array(ang), np.array(dih)
    if rng is not None and jitter_deg:
        ang = ang + rng.normal(0, np.deg2rad(jitter_deg), ang.shape)
        dih = dih + rng.normal(0, np.deg2rad(jitter_deg), dih.shape)
    return ang, dih


def helix(L, rng=None, jitter_deg=0.0) -> Structure:
    ang, dih = _segments([(L, HELIX)], rng, jitter_deg)
    seq = ("AEELLKK" * (L // 7 + 1))[:L]
    return Structure(seq, nerf_chain(ang[: L - 2], dih[: L - 3]))


def hairpin(L, rng=None, jitter_deg=0.0) -> Structure:
    """Two helices joined by a short loop, folded back on each other."""
    h = (L - 4) // 2
    loop = [(np.deg2rad(95.0), np.deg2rad(d)) for d in (150.0, 30.0, 90.0, -180.0)]
    layout = [(h, HELIX)] + [(1, x) for x in loop] + [(L, HELIX)]
    ang, dih = _segments(layout, rng, jitter_deg)
    seq = ("AEELLKK" * (h // 7 + 1))[:h] + "GNPD" + ("KKLLEEA" * L)[: L - h - 4]
    return Structure(seq, nerf_chain(ang[: L - 2], dih[: L - 3]))


def toy_set(lengths=(32, 34, 36, 38, 40), seed=0, jitter_deg=3.0):
    """Alternating helices and helical hairpins with jittered internal coordinates."""
    rng = np.random.default_rng(seed)
    out = []
    for n, L in enumerate(lengths):
        make = helix if n % 2 == 0 else hairpin
        out.append(make(L, rng, jitter_deg))
    return out


def ideal_predictions(X, width=1.0, seed=None):
    """Prediction map whose distance block is a soft histogram of the true Calpha
    distances; orientation blocks are uniform."""
    X = np.asarray(X, dtype=float)
    L = len(X)
    r = np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(-1))
    out = np.zeros((L, L, PREDICTION_CHANNELS))
    sl = group_slices()
    logits = -0.5 * ((r[..., None] - DISTANCE_BIN_CENTERS) / width) ** 2
    far = -0.5 * (np.maximum(20.0 - r, 0.0) / width) ** 2
    full = np.concatenate([far[..., None], logits], axis=-1)
    full = np.exp(full - full.max(axis=-1, keepdims=True))
    out[..., sl["distance"]] = full / full.sum(axis=-1, keepdims=True)
    for name in ("omega", "gamma", "phi"):
        w = sl[name].stop - sl[name].start
        out[..., sl[name]] = 1.0 / w
    return out


def write_dataset(root, structures, splits=None, prefix="toy", width=1.0):
    """Write PDB traces, synthetic prediction files and ``manifest.json`` under ``root``.

    ``splits`` gives one split name per structure (default all "train").
    Returns the manifest path.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    splits = splits or ["train"] * len(structures)
    entries = []
    for n, (s, split) in enumerate(zip(structures, splits)):
        name = f"{prefix}{n:02d}"
        write_ca_pdb(s, root / f"{name}.pdb")
        save_predictions(root / f"{name}.sft", ideal_predictions(s.coords, width))
        entries.append(ManifestEntry(name, f"{name}.pdb", "A", f"{name}.sft", split))
    write_manifest(entries, root / "manifest.json")
    return root / "manifest.json"
