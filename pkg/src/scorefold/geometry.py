"""Coordinate-level primitives for Calpha traces.

Distance matrices hold *squared* Euclidean distances throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError, InvalidDistanceMatrixError, InvalidInputError

ALPHABET = "ACDEFGHIKLMNPQRSTVWY"
UNKNOWN = "X"

DEGENERATE_CROSS_NORM = 1e-9


def as_coords(X, name="coordinates") -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != 3:
        raise InvalidInputError(f"{name} must have shape (L, 3), got {X.shape}")
    bad = ~np.isfinite(X).all(axis=1)
    if bad.any():
        raise InvalidInputError(f"{name} row {int(np.argmax(bad))} is not finite")
    return X


@dataclass(frozen=True)
class Structure:
    """A Calpha trace: residue codes plus an (L, 3) coordinate array in Angstrom."""

    sequence: str
    coords: np.ndarray

    def __post_init__(self):
        coords = as_coords(self.coords)
        seq = "".join(c if c in ALPHABET else UNKNOWN for c in self.sequence.upper())
        if len(seq) != coords.shape[0]:
            raise InvalidInputError(
                f"sequence length {len(seq)} != coordinate rows {coords.shape[0]}"
            )
        if len(seq) < 4:
            raise InvalidInputError(f"structure needs at least 4 residues, got {len(seq)}")
        coords = coords.copy()
        coords.setflags(write=False)
        object.__setattr__(self, "sequence", seq)
        object.__setattr__(self, "coords", coords)

    def __len__(self):
        return len(self.sequence)

    def with_coords(self, coords) -> "Structure":
        return Structure(self.sequence, coords)

    def crop(self, start: int, size: int) -> "Structure":
        return Structure(self.sequence[start:start + size], self.coords[start:start + size])


def distance_matrix(X) -> np.ndarray:
    """Squared pairwise distances, exactly symmetric with a zero diagonal."""
    X = as_coords(X)
    diff = X[:, None, :] - X[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def center(X) -> np.ndarray:
    X = as_coords(X)
    return X - X.mean(axis=0)


def mirror(X) -> np.ndarray:
    """Reflect through the xy-plane (negate z)."""
    out = np.array(X, dtype=np.float64, copy=True)
    out[:, 2] = -out[:, 2]
    return out


def radius_of_gyration(X) -> float:
    Xc = center(X)
    return float(np.sqrt((Xc ** 2).sum(axis=1).mean()))


def dihedral(p1, p2, p3, p4) -> float:
    """Signed torsion angle in (-pi, pi]; 0 for planar cis, pi for planar trans."""
    p1, p2, p3, p4 = (np.asarray(p, dtype=np.float64) for p in (p1, p2, p3, p4))
    b1, b2, b3 = p2 - p1, p3 - p2, p4 - p3
    n1, n2 = np.cross(b1, b2), np.cross(b2, b3)
    if np.linalg.norm(n1) < DEGENERATE_CROSS_NORM or np.linalg.norm(n2) < DEGENERATE_CROSS_NORM:
        raise DegenerateGeometryError("collinear points: dihedral undefined")
    angle = float(np.arctan2(np.linalg.norm(b2) * np.dot(b1, n2), np.dot(n1, n2)))
    return np.pi if angle <= -np.pi else angle


def chain_dihedrals(X):
    """Dihedrals of every run of four consecutive points.

    Returns ``(angles, valid)``, both of length L - 3. Degenerate quadruples get
    angle 0 and ``valid`` False.
    """
    X = as_coords(X)
    if len(X) < 4:
        return np.zeros(0), np.zeros(0, dtype=bool)
    b = np.diff(X, axis=0)
    b1, b2, b3 = b[:-2], b[1:-1], b[2:]
    n1, n2 = np.cross(b1, b2), np.cross(b2, b3)
    valid = (np.linalg.norm(n1, axis=1) >= DEGENERATE_CROSS_NORM) & (
        np.linalg.norm(n2, axis=1) >= DEGENERATE_CROSS_NORM
    )
    y = np.linalg.norm(b2, axis=1) * np.einsum("ij,ij->i", b1, n2)
    x = np.einsum("ij,ij->i", n1, n2)
    angles = np.arctan2(y, x)
    angles[angles <= -np.pi] = np.pi
    angles[~valid] = 0.0
    return angles, valid


def kabsch_superpose(mobile, ref):
    """Optimal proper rigid motion taking ``mobile`` onto ``ref``.

    Returns ``(rotation, translation, rmsd)`` with
    ``mobile @ rotation.T + translation`` the superposed coordinates.
    Reflections are never used.
    """
    P = as_coords(mobile, "mobile")
    Q = as_coords(ref, "ref")
    if P.shape != Q.shape:
        raise InvalidInputError(f"length mismatch: {len(P)} vs {len(Q)}")
    if len(P) < 2:
        raise InvalidInputError("superposition needs at least 2 points")
    pc, qc = P.mean(axis=0), Q.mean(axis=0)
    A, B = P - pc, Q - qc
    U, _, Vt = np.linalg.svd(A.T @ B)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    if d == 0:
        d = 1.0
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    t = qc - pc @ R.T
    moved = P @ R.T + t
    rmsd = float(np.sqrt(((moved - Q) ** 2).sum(axis=1).mean()))
    return R, t, rmsd


def reconstruct_from_distances(D, rel_tol=1e-6) -> np.ndarray:
    """Classical multidimensional scaling into three dimensions.

    Raises InvalidDistanceMatrixError when the centred Gram matrix has an
    eigenvalue below ``-rel_tol`` times its largest one.
    """
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise InvalidDistanceMatrixError(f"distance matrix must be square, got {D.shape}")
    if not np.isfinite(D).all():
        raise InvalidDistanceMatrixError("distance matrix has non-finite entries")
    if (D < 0).any():
        i, j = np.argwhere(D < 0)[0]
        raise InvalidDistanceMatrixError(f"negative squared distance at ({i}, {j})")
    scale = max(float(np.abs(D).max()), 1.0)
    if np.abs(D - D.T).max() > 1e-9 * scale or np.abs(np.diag(D)).max() > 1e-9 * scale:
        raise InvalidDistanceMatrixError("distance matrix must be symmetric with zero diagonal")
    L = len(D)
    J = np.eye(L) - np.full((L, L), 1.0 / L)
    gram = -0.5 * J @ D @ J
    evals, evecs = np.linalg.eigh(gram)
    top = evals[-1] if L else 0.0
    if L and evals[0] < -rel_tol * max(top, 0.0) and evals[0] < -1e-12:
        raise InvalidDistanceMatrixError(
            f"Gram eigenvalue {evals[0]:.3g} is negative beyond tolerance (largest {top:.3g})"
        )
    order = np.argsort(evals)[::-1][:3]
    lam = np.clip(evals[order], 0.0, None)
    X = evecs[:, order] * np.sqrt(lam)
    if X.shape[1] < 3:
        X = np.hstack([X, np.zeros((L, 3 - X.shape[1]))])
    return X
