"""Approximate block-diagonalization pre-beamformers for per-group processing.

Karhunen-Loeve decomposition of each group covariance, selection of the
dominant eigenmodes, and construction of pre-beamforming matrices B_g that
are orthogonal to the dominant eigenspaces of all other groups.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .exceptions import (DegenerateCovarianceError, InfeasibleDimensionError,
                         InfeasibleRankError)
from .linalg import RANK_TOL, eigh_descending, hermitize

# Relative gap below which the b_bar-th / (b_bar+1)-th eigenvalue split of the
# projected covariance is flagged as numerically ambiguous.
_GAP_WARN = 1e-10


@dataclass
class EigenStructure:
    """Karhunen-Loeve factors of one group covariance."""

    U: np.ndarray          # (M, r_g) eigenvectors of the nonzero eigenvalues
    Lambda: np.ndarray     # (r_g,) positive eigenvalues, descending
    r_g: int               # numerical rank
    U_star: np.ndarray | None = None   # (M, r_star) dominant eigenvectors


def karhunen_loeve(R_g: np.ndarray, rank_tol: float = RANK_TOL) -> EigenStructure:
    """Eigen-factorize a Hermitian PSD covariance, dropping numerical zeros.

    Eigenvalues below rank_tol * lambda_max count as zero; raises
    DegenerateCovarianceError when nothing survives.
    """
    w, V = eigh_descending(R_g)
    if w.size == 0 or w[0] <= 0:
        raise DegenerateCovarianceError("covariance has no positive eigenvalues")
    keep = w > rank_tol * w[0]
    r_g = int(np.sum(keep))
    return EigenStructure(U=V[:, :r_g], Lambda=w[:r_g], r_g=r_g)


def select_dominant(es: EigenStructure, r_star: int) -> np.ndarray:
    """First r_star eigenvectors (largest eigenvalues) of the KL basis."""
    if r_star > es.r_g:
        raise InfeasibleRankError(r_star, es.r_g)
    es.U_star = es.U[:, :r_star]
    return es.U_star


@dataclass
class GroupPrebeamformer:
    B: np.ndarray          # (M, b_bar), orthonormal columns
    E0: np.ndarray         # (M, M - k) basis of the complement of the others' span
    G1: np.ndarray         # dominant eigenvectors of the projected covariance
    small_gap: bool        # eigenvalue split at b_bar numerically ambiguous


def build_prebeamformer(all_U_star: Sequence[np.ndarray], g: int,
                        R_g: np.ndarray, b_bar: int) -> GroupPrebeamformer:
    """Approximate-BD pre-beamformer for group g.

    E0 spans the orthogonal complement of U_minus = [U_star of all i != g]
    (left singular vectors of the non-dominant singular values, counted by
    the values above the rank tolerance). The projected covariance
    E0^H R_g E0 is then eigen-decomposed and its b_bar dominant eigenvectors
    G1 give B_g = E0 G1.
    """
    M = R_g.shape[0]
    others = [all_U_star[i] for i in range(len(all_U_star)) if i != g]
    if others:
        U_minus = np.hstack(others)
        U_svd, s, _ = np.linalg.svd(U_minus, full_matrices=True)
        k = int(np.sum(s > 1e-9))
        E0 = U_svd[:, k:]
    else:
        E0 = np.eye(M, dtype=complex)
    if E0.shape[1] < b_bar:
        raise InfeasibleDimensionError(
            f"complement dimension {E0.shape[1]} < b_bar={b_bar} for group {g}: "
            f"require b_bar <= M - sum(r_star of other groups)")
    R_tilde = hermitize(E0.conj().T @ R_g @ E0)
    w, V = eigh_descending(R_tilde)
    rank = int(np.sum(w > RANK_TOL * max(w[0], 1e-300)))
    if rank < b_bar:
        raise InfeasibleDimensionError(
            f"projected covariance of group {g} has rank {rank} < b_bar={b_bar}; "
            f"refusing to pad with arbitrary directions")
    small_gap = len(w) > b_bar and bool(w[b_bar - 1] - w[b_bar] < _GAP_WARN * w[0])
    G1 = V[:, :b_bar]
    B = E0 @ G1
    return GroupPrebeamformer(B=B, E0=E0, G1=G1, small_gap=small_gap)


def effective_covariance(B_g: np.ndarray, R_g: np.ndarray) -> np.ndarray:
    """Effective covariance B^H R B of the reduced-dimension channel."""
    return hermitize(B_g.conj().T @ R_g @ B_g)


@dataclass
class PrebeamformerSet:
    """All per-group pre-beamformers plus the eigen-structures behind them."""

    eigen: List[EigenStructure]
    B: List[np.ndarray]
    E0: List[np.ndarray]
    G1: List[np.ndarray]
    R_eff: List[np.ndarray]
    small_gap: List[bool]

    @property
    def G(self) -> int:
        return len(self.B)

    def leakage(self) -> np.ndarray:
        """Spectral norms of U_star[i]^H B[g] for i != g (BD leakage)."""
        G = self.G
        out = np.zeros((G, G))
        for g in range(G):
            for i in range(G):
                if i != g:
                    out[i, g] = np.linalg.norm(
                        self.eigen[i].U_star.conj().T @ self.B[g], 2)
        return out


def build_prebeamformer_set(R_list: Sequence[np.ndarray], r_star: int,
                            b_bar: int) -> PrebeamformerSet:
    """KL-decompose every aggregate covariance and build all B_g."""
    eigen = [karhunen_loeve(R) for R in R_list]
    all_U_star = [select_dominant(es, r_star) for es in eigen]
    B, E0, G1, R_eff, gaps = [], [], [], [], []
    for g, R_g in enumerate(R_list):
        pb = build_prebeamformer(all_U_star, g, R_g, b_bar)
        B.append(pb.B)
        E0.append(pb.E0)
        G1.append(pb.G1)
        R_eff.append(effective_covariance(pb.B, R_g))
        gaps.append(pb.small_gap)
    return PrebeamformerSet(eigen=eigen, B=B, E0=E0, G1=G1, R_eff=R_eff,
                            small_gap=gaps)
