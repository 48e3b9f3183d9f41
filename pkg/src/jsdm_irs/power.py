"""Group power allocation: within-group water-filling, WMMSE block descent
across groups, and the outer alternating optimization over phases and powers.

The DE SINR is an exact linear-fractional function of the group powers,
gamma_g(p) = P_g q_g / (c_g^T p + t_g^2), so the weighted-MMSE block
coordinate descent operates on exact coefficients rather than a frozen
approximation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .channel import CovarianceSet, aggregate_covariances
from .config import SystemConfig
from .detequiv import DEContext, DESolution
from .gradient import (LineSearchParams, PgaResult, initial_phases,
                       projected_gradient_ascent)
from .prebeam import PrebeamformerSet, build_prebeamformer_set

POWER_SLACK = 1e-9   # feasibility tolerance on sum(P_g) <= P_max


def validate_powers(P: np.ndarray, P_max: float, slack: float = POWER_SLACK) -> None:
    P = np.asarray(P, dtype=float)
    if np.any(P < -slack):
        raise ValueError(f"negative group power: {P.min():.3e}")
    if P.sum() > P_max + slack:
        raise ValueError(f"power budget violated: sum={P.sum():.6e} > P_max={P_max}")


def waterfill_group(nu, P_g: float, K_bar: int) -> np.ndarray:
    """Within-group power split maximizing sum log2(1 + p_k nu_k), sum p = P_g.

    With the group's common covariance all nu_k coincide and the optimum is
    the equal split P_g / K_bar. The general unequal-nu water-filling
    p_k = [mu - 1/nu_k]^+ is kept as a utility, solved by bisection on the
    water level.
    """
    nu = np.broadcast_to(np.asarray(nu, dtype=float), (K_bar,))
    if P_g < 0:
        raise ValueError(f"group power must be >= 0, got {P_g}")
    if P_g == 0.0:
        return np.zeros(K_bar)
    if np.all(nu <= 0):
        raise ValueError("water-filling needs at least one positive nu")
    if np.ptp(nu) <= 1e-12 * max(nu.max(), 1.0):
        return np.full(K_bar, P_g / K_bar)
    inv = np.where(nu > 0, 1.0 / np.where(nu > 0, nu, 1.0), np.inf)

    def allocated(mu: float) -> float:
        return float(np.sum(np.clip(mu - inv, 0.0, None)))

    lo = float(inv.min())
    hi = float(inv[np.isfinite(inv)].max() + P_g)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if allocated(mid) < P_g:
            lo = mid
        else:
            hi = mid
    return np.clip(0.5 * (lo + hi) - inv, 0.0, None)


@dataclass
class PowerCoefficients:
    """Exact SINR reparameterization gamma_g = P_g q[g] / (c[g] . p + t2[g])."""

    q: np.ndarray     # (G,)
    t2: np.ndarray    # (G,)
    c: np.ndarray     # (G, G), c[g, i]

    @property
    def G(self) -> int:
        return self.q.shape[0]

    def gamma(self, P: np.ndarray) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        return P * self.q / (self.c @ P + self.t2)

    def sum_se(self, P: np.ndarray, K_bar: int) -> float:
        return float(K_bar * np.sum(np.log2(1.0 + self.gamma(P))))


def sinr_coefficients(de: DESolution, config: Optional[SystemConfig] = None) -> PowerCoefficients:
    """Extract the power-parameterization coefficients from a DE solution."""
    del config
    return PowerCoefficients(q=de.q_coef.copy(), t2=de.t2_coef.copy(),
                             c=de.c_coef.copy())


@dataclass
class WmmseResult:
    P: np.ndarray                 # (G,) allocated group powers
    v: np.ndarray                 # (G,) final combining scalars
    d: np.ndarray                 # (G,) final MSE weights (= 1 + gamma at opt)
    objective_trace: List[float]  # WMMSE objective after every block update
    iteration_objective: List[float]   # objective after each full iteration
    sum_se_trace: List[float]     # DE sum SE after each iteration
    iterations: int


def _wmmse_objective(coeffs: PowerCoefficients, P: np.ndarray, v: np.ndarray,
                     d: np.ndarray, K_bar: int) -> float:
    e = _mse(coeffs, P, v)
    return float(K_bar * np.sum(d * e - np.log(d)))


def _mse(coeffs: PowerCoefficients, P: np.ndarray, v: np.ndarray) -> np.ndarray:
    quad = P * coeffs.q + coeffs.c @ P + coeffs.t2
    return v ** 2 * quad - 2.0 * v * np.sqrt(P * coeffs.q) + 1.0


def _power_block(coeffs: PowerCoefficients, v: np.ndarray, d: np.ndarray,
                 P_max: float) -> np.ndarray:
    """Exact minimizer of the weighted-MSE power block under the sum budget.

    Unconstrained per-group optimum in x = sqrt(P) is x_g = B_g / A_g with
    A_g = q_g d_g v_g^2 + sum_i d_i v_i^2 c_{i,g} and B_g = d_g v_g sqrt(q_g)
    (the closed-form update, capped by the budget). When the sum exceeds
    P_max the KKT water level mu > 0 with x_g = B_g / (A_g + mu) is found by
    bisection, which keeps the block update an exact constrained minimizer
    and the WMMSE objective monotone.
    """
    A = coeffs.q * d * v ** 2 + coeffs.c.T @ (d * v ** 2)
    B = d * v * np.sqrt(coeffs.q)
    x = np.where(B > 0, B / np.where(A > 0, A, 1.0), 0.0)
    if float(np.sum(x ** 2)) <= P_max:
        return x ** 2
    hi = math.sqrt(float(np.sum(B ** 2)) / P_max)
    lo = 0.0
    for _ in range(200):
        mu = 0.5 * (lo + hi)
        total = float(np.sum((B / (A + mu)) ** 2))
        if total > P_max:
            lo = mu
        else:
            hi = mu
    x = B / (A + hi)
    return x ** 2


def wmmse_power_allocation(coeffs: PowerCoefficients, P_max: float, K_bar: int,
                           eps: float = 1e-8, max_iter: int = 500,
                           P0: Optional[np.ndarray] = None) -> WmmseResult:
    """Block coordinate descent over combiners v, weights d, and powers p.

    Starts from the uniform split P_max/G unless a warm start is given.
    Every block update is an exact minimizer, so the WMMSE objective is
    non-increasing; iteration stops when it improves by less than eps.
    """
    G = coeffs.G
    P = np.full(G, P_max / G) if P0 is None else np.asarray(P0, dtype=float).copy()
    validate_powers(P, P_max)
    v = np.zeros(G)
    d = np.ones(G)
    obj_trace: List[float] = []
    iter_obj: List[float] = []
    se_trace: List[float] = []
    prev = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        denom = P * coeffs.q + coeffs.c @ P + coeffs.t2
        v = np.sqrt(P * coeffs.q) / denom
        obj_trace.append(_wmmse_objective(coeffs, P, v, d, K_bar))
        e = _mse(coeffs, P, v)
        d = 1.0 / e
        obj_trace.append(_wmmse_objective(coeffs, P, v, d, K_bar))
        P = _power_block(coeffs, v, d, P_max)
        current = _wmmse_objective(coeffs, P, v, d, K_bar)
        obj_trace.append(current)
        if not math.isfinite(current):
            raise RuntimeError(f"WMMSE update became non-finite at iteration {it}")
        validate_powers(P, P_max)
        iter_obj.append(current)
        se_trace.append(coeffs.sum_se(P, K_bar))
        if prev - current < eps:
            break
        prev = current
    return WmmseResult(P=P, v=v, d=d, objective_trace=obj_trace,
                       iteration_objective=iter_obj, sum_se_trace=se_trace,
                       iterations=it)


@dataclass
class AoResult:
    s: np.ndarray                  # optimized phase vector
    P: np.ndarray                  # optimized group powers
    B: List[np.ndarray]            # pre-beamformers in force at termination
    prebeam: PrebeamformerSet
    de: DESolution                 # DE solution at the final operating point
    outer_trace: List[float]       # DE sum SE after each outer round
    pga_results: List[PgaResult] = field(default_factory=list)
    wmmse_results: List[WmmseResult] = field(default_factory=list)
    rounds: int = 0
    converged: bool = False


def alternating_optimization(covs: CovarianceSet, config: SystemConfig,
                             s0: Optional[np.ndarray] = None,
                             P0: Optional[np.ndarray] = None,
                             eps_outer: float = 1e-3, max_outer: int = 20,
                             pga_eps: float = 1e-3, pga_max_iter: int = 100,
                             optimize_phases: bool = True,
                             rebuild_prebeamformers: bool = True) -> AoResult:
    """Alternate Algorithm-1 phase ascent and WMMSE power allocation.

    Phases first at fixed powers, then powers at fixed phases. Inside a
    round the pre-beamformers stay fixed (the gradient treats B as constant);
    they are rebuilt from the updated covariances between rounds and the
    rebuild is adopted only when it does not decrease the objective, keeping
    the outer trace monotone.
    """
    G, N = config.G, config.N
    s = initial_phases(N) if s0 is None else np.asarray(s0, dtype=complex).copy()
    P = np.full(G, config.P_max / G) if P0 is None else np.asarray(P0, dtype=float).copy()
    validate_powers(P, config.P_max)

    def fresh_prebeam(phases: np.ndarray) -> PrebeamformerSet:
        R_phys = aggregate_covariances(covs, phases)
        return build_prebeamformer_set(R_phys, config.r_star, config.b_bar)

    prebeam = fresh_prebeam(s)
    outer: List[float] = []
    pga_results: List[PgaResult] = []
    wmmse_results: List[WmmseResult] = []
    converged = False
    f_prev = -math.inf
    rounds = 0
    for rounds in range(1, max_outer + 1):
        ctx = DEContext.from_covariances(covs, prebeam.B, P, config)
        if optimize_phases:
            pga = projected_gradient_ascent(ctx, s0=s, eps=pga_eps,
                                            max_iter=pga_max_iter)
            pga_results.append(pga)
            s = pga.s
        de = ctx.solve(s)
        coeffs = sinr_coefficients(de)
        wm = wmmse_power_allocation(coeffs, config.P_max, config.K_bar, P0=P)
        wmmse_results.append(wm)
        P = wm.P
        f = coeffs.sum_se(P, config.K_bar)
        outer.append(f)
        if rounds > 1 and abs(f - f_prev) < eps_outer:
            converged = True
            break
        f_prev = f
        if rebuild_prebeamformers and rounds < max_outer:
            candidate = fresh_prebeam(s)
            ctx_new = DEContext.from_covariances(covs, candidate.B, P, config)
            if ctx_new.solve(s).sum_se >= f:
                prebeam = candidate
    ctx = DEContext.from_covariances(covs, prebeam.B, P, config)
    de = ctx.solve(s)
    return AoResult(s=s, P=P, B=prebeam.B, prebeam=prebeam, de=de,
                    outer_trace=outer, pga_results=pga_results,
                    wmmse_results=wmmse_results, rounds=rounds,
                    converged=converged)
