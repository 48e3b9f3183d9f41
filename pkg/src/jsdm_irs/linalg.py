"""Small Hermitian-matrix helpers used throughout the simulator."""
from __future__ import annotations

from typing import Tuple

import numpy as np

# Eigenvalues below RANK_TOL * lambda_max are treated as numerical zeros.
RANK_TOL = 1e-9


def hermitize(A: np.ndarray) -> np.ndarray:
    """Symmetrize away round-off: (A + A^H)/2."""
    return 0.5 * (A + A.conj().T)


def is_hermitian(A: np.ndarray, tol: float = 1e-12) -> bool:
    scale = max(1.0, float(np.abs(A).max()) if A.size else 1.0)
    return bool(np.abs(A - A.conj().T).max() <= tol * scale)


def min_eigenvalue(A: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(hermitize(A)).min())


def eigh_descending(A: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a Hermitian matrix, eigenvalues descending.

    Eigenvectors are phase-normalized so the first entry of largest modulus
    is real-positive, giving a deterministic basis across runs.
    """
    w, V = np.linalg.eigh(hermitize(A))
    w = w[::-1]
    V = V[:, ::-1]
    anchor = np.argmax(np.abs(V), axis=0)
    phases = V[anchor, np.arange(V.shape[1])]
    with np.errstate(invalid="ignore", divide="ignore"):
        rot = np.where(np.abs(phases) > 0, phases / np.abs(phases), 1.0)
    return w, V / rot


def herm_sqrt(A: np.ndarray) -> np.ndarray:
    """Hermitian PSD square root; negative round-off eigenvalues clipped to 0."""
    w, V = eigh_descending(A)
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.conj().T


def herm_sqrt_pinv(A: np.ndarray, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Pseudo-inverse of the Hermitian square root (whitening on the support)."""
    w, V = eigh_descending(A)
    w = np.clip(w, 0.0, None)
    cutoff = rank_tol * (w[0] if w.size and w[0] > 0 else 1.0)
    inv = np.where(w > cutoff, 1.0 / np.sqrt(np.where(w > cutoff, w, 1.0)), 0.0)
    return (V * inv) @ V.conj().T


def assert_hermitian_psd(A: np.ndarray, herm_tol: float = 1e-12,
                         psd_tol: float = -1e-10, label: str = "matrix") -> None:
    """Raise if A is not Hermitian within herm_tol or has eigenvalues < psd_tol.

    The PSD tolerance is relative to the largest eigenvalue magnitude (or 1
    for near-zero matrices).
    """
    if not is_hermitian(A, herm_tol):
        raise ValueError(f"{label} is not Hermitian within {herm_tol}")
    w = np.linalg.eigvalsh(hermitize(A))
    scale = max(1.0, float(np.abs(w).max()) if w.size else 1.0)
    if w.min() < psd_tol * scale:
        raise ValueError(f"{label} is not PSD: min eigenvalue {w.min():.3e}")
