"""Deterministic equivalents of the per-group RZF SINR and sum spectral efficiency.

Fixed-point system and auxiliary traces for the large-system approximation of
per-group processing with imperfect CSI. All quantities here operate on
noise-normalized covariances (R / sigma2), so the regularizer is the
dimension-only constant alpha = M / (b_bar * P_max) and the effective noise
power is 1. The wrapper `DEContext` performs the normalization.

The SINR admits an exact reparameterization in the group powers,
    gamma_g(p) = P_g * q_g / (sum_i c_{g,i} P_i + t_g^2),
whose coefficients are stored on the solution for the power-allocation stage.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .channel import CovarianceSet, aggregate_covariance
from .config import SystemConfig
from .exceptions import DEInstabilityError, NonConvergenceError
from .linalg import eigh_descending, hermitize

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000


def rzf_alpha(M: int, b_bar: int, P_max: float) -> float:
    """RZF regularizer alpha = M / (b_bar * P_max) for noise-normalized channels."""
    return M / (b_bar * P_max)


def solve_delta_fixed_point(R_eff: np.ndarray, K_bar: int, b_bar: int,
                            alpha_reg: float, tol: float = DEFAULT_TOL,
                            max_iter: int = DEFAULT_MAX_ITER):
    """Solve delta = (1/b) tr(R_eff T(delta)), T = ((K/b) R_eff/(1+delta) + alpha I)^-1.

    Plain Picard iteration from delta_0 = 1 with 0.5 damping engaged when the
    residual oscillates. Returns (delta, T, residual, iterations).
    """
    if alpha_reg <= 0:
        raise ValueError(f"alpha_reg must be > 0, got {alpha_reg}")
    lam, V = eigh_descending(R_eff)
    lam = np.clip(lam.real, 0.0, None)
    ratio = K_bar / b_bar

    def g(delta: float) -> float:
        return float(np.mean(lam / (ratio * lam / (1.0 + delta) + alpha_reg)))

    delta = 1.0
    damping = 1.0
    prev_step = 0.0
    residual = math.inf
    # Below ~64 ulps of delta the Picard residual is pure round-off; accept it
    # so huge-delta (very high SNR) operating points terminate cleanly.
    float_floor = 64.0 * np.finfo(float).eps
    for it in range(1, max_iter + 1):
        target = g(delta)
        residual = abs(delta - target)
        if residual < tol or residual < float_floor * (1.0 + abs(delta)):
            break
        step = target - delta
        if step * prev_step < 0:      # oscillation: damp
            damping = 0.5
        delta = delta + damping * step
        prev_step = step
    else:
        raise NonConvergenceError(residual, max_iter)
    t_eigs = 1.0 / (ratio * lam / (1.0 + delta) + alpha_reg)
    T = (V * t_eigs) @ V.conj().T
    return delta, T, residual, it


@dataclass
class DESolution:
    """All deterministic-equivalent scalars for one operating point."""

    delta: np.ndarray            # (G,)
    T: List[np.ndarray]          # (b_bar, b_bar) per group
    m_g: np.ndarray              # (G,)
    m_gg: np.ndarray             # (G,)
    m_gl: np.ndarray             # (G, G): victim g, interfering source l; diag 0
    D: np.ndarray                # (G,) shared trace denominators (stability margin)
    Psi: np.ndarray              # (G,) power-normalization DEs
    lambda_bar: np.ndarray       # (G,) rho_g / Psi_g
    Y_gg: np.ndarray             # (G,)
    Y_gl: np.ndarray             # (G, G)
    gamma: np.ndarray            # (G,) DE SINR per UE of each group
    rate_per_ue: np.ndarray      # (G,) log2(1 + gamma)
    sum_se: float                # K_bar * sum rate (bits/s/Hz)
    alpha_reg: float             # M / (b_bar * P_max)
    residual: np.ndarray         # (G,) fixed-point residuals
    iterations: np.ndarray       # (G,) fixed-point iteration counts
    q_coef: np.ndarray           # (G,) SINR numerator coefficients
    t2_coef: np.ndarray          # (G,) effective noise terms
    c_coef: np.ndarray           # (G, G) interference coefficients c[g, i]
    P: np.ndarray                # (G,) group powers at the operating point
    tau: float
    K_bar: int
    b_bar: int

    def to_record(self) -> dict:
        """Serializable diagnostics for the CLI result file."""
        return {
            "delta": self.delta.tolist(),
            "m_g": self.m_g.tolist(),
            "m_gg": self.m_gg.tolist(),
            "m_gl": self.m_gl.tolist(),
            "Psi": self.Psi.tolist(),
            "lambda_bar": self.lambda_bar.tolist(),
            "Y_gg": self.Y_gg.tolist(),
            "Y_gl": self.Y_gl.tolist(),
            "gamma": self.gamma.tolist(),
            "rate_per_ue": self.rate_per_ue.tolist(),
            "sum_se": self.sum_se,
            "alpha_reg": self.alpha_reg,
            "residual": self.residual.tolist(),
            "iterations": self.iterations.tolist(),
            "P": self.P.tolist(),
            "tau": self.tau,
        }


def _trace(A: np.ndarray) -> float:
    return float(np.real(np.trace(A)))


def compute_auxiliaries(R_eff: Sequence[np.ndarray], B: Sequence[np.ndarray],
                        R_raw: Sequence[np.ndarray], delta: np.ndarray,
                        T: Sequence[np.ndarray], P: np.ndarray,
                        K_bar: int, b_bar: int) -> dict:
    """Evaluate all auxiliary trace formulas at converged fixed points.

    Inputs are noise-normalized. Returns m_g, m_gg, m_gl, the shared
    denominators D, Psi, lambda_bar, Y_gg, Y_gl. A non-positive denominator
    raises DEInstabilityError (operating point outside the DE regime).
    """
    G = len(R_eff)
    P = np.asarray(P, dtype=float)
    m_g = np.zeros(G)
    m_gg = np.zeros(G)
    D = np.zeros(G)
    RT = [R_eff[g] @ T[g] for g in range(G)]
    for g in range(G):
        tr_RT2 = _trace(RT[g] @ T[g])
        tr_RTRT = _trace(RT[g] @ RT[g])
        D[g] = 1.0 - (K_bar / b_bar) * tr_RTRT / (b_bar * (1.0 + delta[g]) ** 2)
        if D[g] <= 0:
            raise DEInstabilityError(
                f"group {g}: trace denominator {D[g]:.3e} <= 0")
        m_g[g] = tr_RT2 / (b_bar * D[g])
        m_gg[g] = tr_RTRT / (b_bar * D[g])
    m_gl = np.zeros((G, G))
    for g in range(G):
        for l in range(G):
            if l == g:
                continue
            C_gl = B[l].conj().T @ R_raw[g] @ B[l]
            m_gl[g, l] = _trace(R_eff[l] @ T[l] @ C_gl @ T[l]) / (b_bar * D[l])
    one_plus = (1.0 + delta) ** 2
    Psi = (P / b_bar) * m_g / one_plus
    # lambda_bar = rho_g / Psi_g with rho_g = P_g (noise power 1); the P_g
    # cancellation keeps the zero-power groups finite.
    lambda_bar = b_bar * one_plus / m_g
    Y_gg = (P / b_bar) * (1.0 - 1.0 / K_bar) * m_gg / one_plus
    Y_gl = (P[None, :] / (b_bar * K_bar)) * m_gl / one_plus[None, :]
    return {"m_g": m_g, "m_gg": m_gg, "m_gl": m_gl, "D": D, "Psi": Psi,
            "lambda_bar": lambda_bar, "Y_gg": Y_gg, "Y_gl": Y_gl}


def sinr_coefficients_from_parts(delta: np.ndarray, m_g: np.ndarray,
                                 m_gg: np.ndarray, m_gl: np.ndarray,
                                 tau: float, K_bar: int, b_bar: int):
    """Exact power reparameterization gamma_g = P_g q_g / (c_g^T p + t_g^2).

    c[g, g] carries the self-group interference (including the imperfect-CSI
    inflation), c[g, l] the inter-group coupling m_g m_gl / m_l, and t_g^2
    the effective noise m_g / b_bar.
    """
    G = delta.shape[0]
    one_plus = (1.0 + delta) ** 2
    c_tau = 1.0 - tau ** 2 * (1.0 - one_plus)
    q = (1.0 - tau ** 2) * delta ** 2 / K_bar
    t2 = m_g / b_bar
    c = np.zeros((G, G))
    for g in range(G):
        c[g, g] = (1.0 - 1.0 / K_bar) * m_gg[g] * c_tau[g] / (b_bar * one_plus[g])
        for l in range(G):
            if l != g:
                c[g, l] = m_g[g] * m_gl[g, l] / (b_bar * K_bar * m_g[l])
    return q, t2, c


def de_sinr(delta: np.ndarray, lambda_bar: np.ndarray, Y_gg: np.ndarray,
            Y_gl: np.ndarray, tau: float, P: np.ndarray, K_bar: int) -> np.ndarray:
    """DE SINR per UE: S_g / I_g with the imperfect-CSI inflation factor.

    S_g = (P_g / K_bar)(1 - tau^2) delta_g^2 and
    I_g = Y_gg (1 - tau^2 (1 - (1+delta_g)^2))
          + (1 + sum_{l != g} lambda_l Y_gl) (1+delta_g)^2 / lambda_g.
    """
    P = np.asarray(P, dtype=float)
    G = delta.shape[0]
    one_plus = (1.0 + delta) ** 2
    c_tau = 1.0 - tau ** 2 * (1.0 - one_plus)
    S = (P / K_bar) * (1.0 - tau ** 2) * delta ** 2
    gamma = np.zeros(G)
    for g in range(G):
        cross = sum(lambda_bar[l] * Y_gl[g, l] for l in range(G) if l != g)
        I_g = Y_gg[g] * c_tau[g] + (1.0 + cross) * one_plus[g] / lambda_bar[g]
        if I_g <= 0:
            raise DEInstabilityError(f"group {g}: interference DE {I_g:.3e} <= 0")
        gamma[g] = S[g] / I_g
    return gamma


def de_sum_se(gammas: np.ndarray, K_bar: int) -> float:
    """Sum spectral efficiency K_bar * sum_g log2(1 + gamma_g) (bits/s/Hz)."""
    gammas = np.asarray(gammas, dtype=float)
    if np.any(gammas < 0):
        raise ValueError("SINRs must be non-negative")
    return float(K_bar * np.sum(np.log2(1.0 + gammas)))


def solve_de(R_eff: Sequence[np.ndarray], B: Sequence[np.ndarray],
             R_raw: Sequence[np.ndarray], P: Sequence[float], tau: float,
             K_bar: int, b_bar: int, alpha_reg: float,
             tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> DESolution:
    """Full DE solve on noise-normalized covariances."""
    G = len(R_eff)
    P = np.asarray(P, dtype=float)
    delta = np.zeros(G)
    residual = np.zeros(G)
    iterations = np.zeros(G, dtype=int)
    T: List[np.ndarray] = []
    for g in range(G):
        d, T_g, res, its = solve_delta_fixed_point(R_eff[g], K_bar, b_bar,
                                                   alpha_reg, tol, max_iter)
        delta[g] = d
        T.append(T_g)
        residual[g] = res
        iterations[g] = its
    aux = compute_auxiliaries(R_eff, B, R_raw, delta, T, P, K_bar, b_bar)
    gamma = de_sinr(delta, aux["lambda_bar"], aux["Y_gg"], aux["Y_gl"],
                    tau, P, K_bar)
    q, t2, c = sinr_coefficients_from_parts(delta, aux["m_g"], aux["m_gg"],
                                            aux["m_gl"], tau, K_bar, b_bar)
    rates = np.log2(1.0 + gamma)
    return DESolution(delta=delta, T=T, m_g=aux["m_g"], m_gg=aux["m_gg"],
                      m_gl=aux["m_gl"], D=aux["D"], Psi=aux["Psi"],
                      lambda_bar=aux["lambda_bar"], Y_gg=aux["Y_gg"],
                      Y_gl=aux["Y_gl"], gamma=gamma, rate_per_ue=rates,
                      sum_se=de_sum_se(gamma, K_bar), alpha_reg=alpha_reg,
                      residual=residual, iterations=iterations,
                      q_coef=q, t2_coef=t2, c_coef=c, P=P.copy(), tau=tau,
                      K_bar=K_bar, b_bar=b_bar)


@dataclass
class DEContext:
    """Phase-dependent DE evaluation with fixed pre-beamformers.

    Holds the noise-normalized statistics so the objective and its gradient
    can be evaluated at arbitrary phase vectors (including off the
    unit-modulus manifold, as finite-difference probes require).
    """

    H1: np.ndarray                  # (M, N) LoS matrix (not noise-scaled)
    R_BS_n: List[np.ndarray]        # (M, M) BS-side covariances / sigma2
    R_IRS_n: List[np.ndarray]       # (N, N) IRS-side covariances / sigma2
    B: List[np.ndarray]             # (M, b_bar) fixed pre-beamformers
    P: np.ndarray                   # (G,) group powers
    tau: float
    K_bar: int
    b_bar: int
    alpha_reg: float
    P_max: float
    sigma2: float                   # physical noise power (for records only)
    P_B: List[np.ndarray] = field(default_factory=list)   # H1^H B_g caches

    def __post_init__(self):
        if not self.P_B:
            self.P_B = [self.H1.conj().T @ B_g for B_g in self.B]

    @classmethod
    def from_covariances(cls, covs: CovarianceSet, B: Sequence[np.ndarray],
                         P: Sequence[float], config: SystemConfig) -> "DEContext":
        s2 = config.sigma2
        return cls(H1=covs.H1,
                   R_BS_n=[R / s2 for R in covs.R_BS],
                   R_IRS_n=[R / s2 for R in covs.R_IRS],
                   B=list(B), P=np.asarray(P, dtype=float), tau=config.tau,
                   K_bar=config.K_bar, b_bar=config.b_bar,
                   alpha_reg=rzf_alpha(config.M, config.b_bar, config.P_max),
                   P_max=config.P_max, sigma2=s2)

    @property
    def G(self) -> int:
        return len(self.B)

    def with_powers(self, P: Sequence[float]) -> "DEContext":
        return DEContext(H1=self.H1, R_BS_n=self.R_BS_n, R_IRS_n=self.R_IRS_n,
                         B=self.B, P=np.asarray(P, dtype=float), tau=self.tau,
                         K_bar=self.K_bar, b_bar=self.b_bar,
                         alpha_reg=self.alpha_reg, P_max=self.P_max,
                         sigma2=self.sigma2, P_B=self.P_B)

    def raw_covariances(self, s: np.ndarray) -> List[np.ndarray]:
        return [aggregate_covariance(self.R_BS_n[g], self.H1, s, self.R_IRS_n[g])
                for g in range(self.G)]

    def effective_covariances(self, R_raw: Sequence[np.ndarray]) -> List[np.ndarray]:
        return [hermitize(B_g.conj().T @ R @ B_g)
                for B_g, R in zip(self.B, R_raw)]

    def solve(self, s: np.ndarray) -> DESolution:
        R_raw = self.raw_covariances(s)
        R_eff = self.effective_covariances(R_raw)
        return solve_de(R_eff, self.B, R_raw, self.P, self.tau,
                        self.K_bar, self.b_bar, self.alpha_reg)

    def objective(self, s: np.ndarray) -> float:
        """DE sum SE at phase vector s (fixed B and powers)."""
        return self.solve(s).sum_se
