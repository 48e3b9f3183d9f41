"""Monte-Carlo validation of the deterministic equivalents.

Samples channel realizations, builds the per-group RZF second-stage
precoders from the imperfect effective CSI, evaluates instantaneous SINRs
against the true channels, and averages rates for comparison with the DE.

SINR-level computations run on noise-normalized channels (divided by
sigma), so the regularizer is the dimension-only alpha = M/(b_bar P_max)
and the noise power in the SINR denominator is 1; the ratio is identical to
the physical one.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .channel import ChannelSampler, CovarianceSet, substream
from .config import SystemConfig
from .detequiv import DESolution, rzf_alpha


def rzf_precoder(H_hat_eff: np.ndarray, alpha_reg: float,
                 p_powers: np.ndarray):
    """Regularized zero-forcing inner precoder for one group.

    F = sqrt(lambda) Sigma H_hat with Sigma = ((1/b) H_hat H_hat^H + alpha I)^-1
    and lambda = P_g / Psi, Psi = tr(P Ĥ^H Sigma^2 Ĥ), so the group radiates
    exactly its power budget P_g = sum(p_powers). Returns (F, lambda).
    """
    b_bar = H_hat_eff.shape[0]
    p_powers = np.asarray(p_powers, dtype=float)
    gram = H_hat_eff @ H_hat_eff.conj().T / b_bar
    Sigma = np.linalg.inv(gram + alpha_reg * np.eye(b_bar))
    SH = Sigma @ H_hat_eff
    Psi = float(np.sum(p_powers * np.sum(np.abs(SH) ** 2, axis=0)))
    P_g = float(p_powers.sum())
    if P_g == 0.0 or Psi == 0.0:
        return np.zeros_like(SH), 0.0
    lam = P_g / Psi
    return math.sqrt(lam) * SH, lam


def instantaneous_sinr(H_true: Sequence[np.ndarray], V: Sequence[np.ndarray],
                       p_ue: np.ndarray, sigma2: float) -> np.ndarray:
    """Per-UE SINR DS/(SGI + IGI + sigma2) for one realization.

    `H_true[g]` is the (M, K_bar) true channel of group g and `V[l]` the
    (M, K_bar) precoder B_l F_l (power-normalized columns already include
    sqrt(lambda_l)); `p_ue` is the (G, K_bar) per-UE power table.
    """
    G = len(H_true)
    K_bar = H_true[0].shape[1]
    sinr = np.zeros((G, K_bar))
    # cross[g][l] (K_bar, K_bar): received amplitude of group l's streams at group g's UEs
    power = [[np.abs(H_true[g].conj().T @ V[l]) ** 2 for l in range(G)]
             for g in range(G)]
    for g in range(G):
        own = power[g][g] * p_ue[g][None, :]      # row k: UE k, col j: stream j
        ds = np.diag(own)
        sgi = own.sum(axis=1) - ds
        igi = np.zeros(K_bar)
        for l in range(G):
            if l != g:
                igi += (power[g][l] * p_ue[l][None, :]).sum(axis=1)
        sinr[g] = ds / (sgi + igi + sigma2)
    return sinr


@dataclass
class McResult:
    """Empirical rates and the DE comparison for one operating point."""

    group_rate: np.ndarray           # (G,) mean per-UE rate (bits/s/Hz)
    sum_se: float                    # K_bar * sum of group rates
    sinr_samples: Optional[np.ndarray]   # (n, G, K_bar) or None
    de_rel_err: Optional[np.ndarray]     # (G,) |DE - MC|/MC per group
    n_realizations: int
    seed: int
    tx_power_max_dev: float          # worst |tr(P V^H V) - sum(P_g)| / sum(P_g)
    error: Optional[str] = None

    def digest(self) -> str:
        """SHA-256 over the result arrays (byte-level reproducibility checks)."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.group_rate).tobytes())
        h.update(np.float64(self.sum_se).tobytes())
        if self.sinr_samples is not None:
            h.update(np.ascontiguousarray(self.sinr_samples).tobytes())
        h.update(np.int64(self.n_realizations).tobytes())
        h.update(np.int64(self.seed).tobytes())
        return h.hexdigest()


def run_monte_carlo(config: SystemConfig, covs: CovarianceSet,
                    B: Sequence[np.ndarray], phi: np.ndarray,
                    powers: Sequence[float], n_realizations: int,
                    seed: Optional[int] = None, de: Optional[DESolution] = None,
                    collect_samples: bool = True) -> McResult:
    """Average log2(1 + SINR) over independent channel realizations.

    Per-UE powers follow the equal within-group split P_g/K_bar. Each
    realization draws its own RNG substream by counter, so results are
    reproducible and independent of any outer parallelism. The per-group
    empirical mean rate is compared against `de` when given.
    """
    seed = config.seed if seed is None else seed
    if n_realizations <= 0:
        return McResult(group_rate=np.zeros(config.G), sum_se=0.0,
                        sinr_samples=None, de_rel_err=None, n_realizations=0,
                        seed=seed, tx_power_max_dev=0.0,
                        error="no realizations requested")
    G, K_bar = config.G, config.K_bar
    P = np.asarray(powers, dtype=float)
    p_ue = np.repeat(P[:, None] / K_bar, K_bar, axis=1)
    alpha = rzf_alpha(config.M, config.b_bar, config.P_max)
    inv_sig = 1.0 / math.sqrt(config.sigma2)
    sampler = ChannelSampler(covs, phi, config)
    samples = np.zeros((n_realizations, G, K_bar))
    budget = float(P.sum())
    power_dev = 0.0
    for i in range(n_realizations):
        rng = substream(seed, i)
        real = sampler.sample(rng)
        V = []
        tx_power = 0.0
        for g in range(G):
            H_hat_eff = B[g].conj().T @ (inv_sig * real.H_hat[g])
            F, lam = rzf_precoder(H_hat_eff, alpha, p_ue[g])
            V.append(B[g] @ F)
            tx_power += float(np.sum(p_ue[g] * np.sum(np.abs(F) ** 2, axis=0)))
        if budget > 0:
            power_dev = max(power_dev, abs(tx_power - budget) / budget)
        H_n = [inv_sig * h for h in real.H]
        samples[i] = instantaneous_sinr(H_n, V, p_ue, sigma2=1.0)
    rates = np.log2(1.0 + samples)
    group_rate = rates.mean(axis=(0, 2))
    sum_se = float(K_bar * group_rate.sum())
    rel = None
    if de is not None:
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.abs(de.rate_per_ue - group_rate) / np.abs(group_rate)
    return McResult(group_rate=group_rate, sum_se=sum_se,
                    sinr_samples=samples if collect_samples else None,
                    de_rel_err=rel, n_realizations=n_realizations, seed=seed,
                    tx_power_max_dev=power_dev, error=None)
