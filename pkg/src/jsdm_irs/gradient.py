"""Closed-form phase gradient of the DE sum SE and projected gradient ascent.

The objective depends on the IRS phases only through the aggregate
covariances R_g(s) = R_BS + H1 diag(s) R_IRS diag(s)^* H1^H. The Wirtinger
derivative of any trace tr(A R_g) with A fixed is diag(H1^H A H1 Phi R_IRS),
and every DE derivative reduces to such diagonal extractions because the
fixed-point matrices T_g are rational functions of the effective covariance
(so they commute with it).

The ascent direction used by the optimizer is the tangential (Riemannian)
component of the Wirtinger gradient: the radial component only changes the
element amplitudes, which the unit-modulus projection discards, and removing
it makes the phase-independence certificate (R_IRS proportional to identity)
an exact zero vector.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .detequiv import DEContext, DESolution
from .exceptions import GradientFailureError

LN2 = math.log(2.0)

UNIT_MODULUS_TOL = 1e-12


def initial_phases(N: int) -> np.ndarray:
    """Algorithm start: all elements at phase pi/2."""
    return np.full(N, np.exp(1j * np.pi / 2.0), dtype=complex)


def random_phases(N: int, rng: np.random.Generator) -> np.ndarray:
    return np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, N))


def validate_unit_modulus(s: np.ndarray, tol: float = UNIT_MODULUS_TOL) -> None:
    err = float(np.abs(np.abs(s) - 1.0).max())
    if err > tol:
        raise ValueError(f"phase vector leaves the unit-modulus manifold by {err:.3e}")


def project_unit_modulus(s_tilde: np.ndarray, previous: Optional[np.ndarray] = None) -> np.ndarray:
    """Entrywise projection exp(j arg(.)).

    Exactly-zero entries have no phase: they keep the previous phase when
    given, else default to 1. Idempotent on unit-modulus inputs.
    """
    s_tilde = np.asarray(s_tilde, dtype=complex)
    mag = np.abs(s_tilde)
    fallback = previous if previous is not None else np.ones_like(s_tilde)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(mag > 0, s_tilde / np.where(mag > 0, mag, 1.0), fallback)
    return out


def trace_derivative(A: np.ndarray, H1: np.ndarray, phi: np.ndarray,
                     R_IRS_g: np.ndarray, beta_2g: float = 1.0) -> np.ndarray:
    """Wirtinger derivative of tr(A * H1 Phi (beta R_IRS) Phi^H H1^H) wrt s*.

    Returns the length-N vector diag(beta H1^H A H1 Phi R_IRS).
    """
    W = H1.conj().T @ A @ H1
    return beta_2g * np.einsum("nm,m,mn->n", W, phi, R_IRS_g)


def _lemma1(P_B: np.ndarray, X: np.ndarray, s: np.ndarray,
            R_irs: np.ndarray) -> np.ndarray:
    """diag(H1^H (B X B^H) H1 Phi R_irs) via the cached P_B = H1^H B."""
    W = P_B @ X @ P_B.conj().T
    return np.einsum("nm,m,mn->n", W, s, R_irs)


@dataclass
class GradientReport:
    """Ascent direction plus the per-group derivative pieces behind it."""

    q: np.ndarray                 # (N,) tangential ascent direction
    q_wirtinger: np.ndarray       # (N,) raw conjugate-coordinate gradient
    gamma_prime: np.ndarray       # (G, N) per-group SINR derivatives
    delta_prime: np.ndarray       # (G, N)
    m_g_prime: np.ndarray         # (G, N)
    m_gg_prime: np.ndarray        # (G, N)
    m_gl_prime: np.ndarray        # (G, G, N)
    lambda_bar_prime: np.ndarray  # (G, N)
    Y_gg_prime: np.ndarray        # (G, N)
    Y_gl_prime: np.ndarray        # (G, G, N)
    fd_check: Optional[float] = None   # max relative FD error when audited


def _check_finite(name: str, value: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(value)):
        raise GradientFailureError(name)
    return value


def sinr_gradient(de: DESolution, ctx: DEContext, s: np.ndarray) -> GradientReport:
    """Assemble d(sum SE)/ds* from the converged DE solution at phases s.

    Derivatives propagate through delta_g, the shared trace denominators and
    the auxiliary traces; every trace derivative collapses to a Lemma-style
    diagonal extraction with a fixed inner matrix.
    """
    G, N = ctx.G, s.shape[0]
    K_bar, b_bar, tau = ctx.K_bar, ctx.b_bar, ctx.tau
    P = ctx.P
    ratio = K_bar / b_bar

    R_raw = ctx.raw_covariances(s)
    R_eff = ctx.effective_covariances(R_raw)

    delta = de.delta
    T = de.T
    D = de.D
    one_plus = 1.0 + delta

    # Per-group cached products (T and R_eff commute: T is a rational
    # function of R_eff, so orders collapse).
    T2 = [T[g] @ T[g] for g in range(G)]
    RT = [R_eff[g] @ T[g] for g in range(G)]
    RT2 = [R_eff[g] @ T2[g] for g in range(G)]
    RT3 = [RT2[g] @ T[g] for g in range(G)]
    R2T3 = [R_eff[g] @ RT3[g] for g in range(G)]

    def ell(g: int, X: np.ndarray) -> np.ndarray:
        return _lemma1(ctx.P_B[g], X, s, ctx.R_IRS_n[g])

    tr = lambda A: complex(np.trace(A))

    q_R = np.array([np.real(tr(RT[g] @ RT[g])) for g in range(G)])
    q_I = np.array([np.real(tr(RT2[g])) for g in range(G)])

    delta_p = np.zeros((G, N), dtype=complex)
    Dp = np.zeros((G, N), dtype=complex)
    m_g_p = np.zeros((G, N), dtype=complex)
    m_gg_p = np.zeros((G, N), dtype=complex)
    v2_cache: List[np.ndarray] = []

    for g in range(G):
        v1 = ell(g, T[g])
        v2 = ell(g, RT2[g])          # tr(R'_n T R T) via TR T = R T^2
        v2_cache.append(v2)
        delta_p[g] = (v1 / b_bar - (ratio / b_bar) * v2 / one_plus[g]) / D[g]

        # q'(C) = tr(R' TCT) + tr(R T' CT) + tr(R T C' T) + tr(R TCT')
        #       = l(TCT) - (K/b)/(1+d)^2 [ (1+d)(l(TCTRT)+l(TRTCT)) - 2 d' s1(C) ]
        #         + C'-term
        s1_I = np.real(tr(R_eff[g] @ RT3[g]))          # tr(R T R T^2) = tr(R^2 T^3)
        s1_R = np.real(tr(R_eff[g] @ R2T3[g]))         # tr(R^3 T^3)
        qp_I = (ell(g, T2[g])
                - (ratio / one_plus[g] ** 2)
                * (one_plus[g] * 2.0 * ell(g, RT3[g]) - 2.0 * delta_p[g] * s1_I))
        qp_R = (2.0 * v2
                - (ratio / one_plus[g] ** 2)
                * (one_plus[g] * 2.0 * ell(g, R2T3[g]) - 2.0 * delta_p[g] * s1_R))
        Dp[g] = (-(ratio / b_bar)
                 * (qp_R * one_plus[g] - 2.0 * delta_p[g] * q_R[g])
                 / one_plus[g] ** 3)
        m_g_p[g] = (qp_I * D[g] - q_I[g] * Dp[g]) / (b_bar * D[g] ** 2)
        m_gg_p[g] = (qp_R * D[g] - q_R[g] * Dp[g]) / (b_bar * D[g] ** 2)

    m_gl_p = np.zeros((G, G, N), dtype=complex)
    for g in range(G):
        for l in range(G):
            if l == g:
                continue
            C = ctx.B[l].conj().T @ R_raw[g] @ ctx.B[l]
            TCT = T[l] @ C @ T[l]
            q_C = np.real(tr(R_eff[l] @ TCT))
            s1_C = np.real(tr(RT[l] @ RT[l] @ C @ T[l]))
            # C'-term: tr(R_l T_l C'_n T_l) with C' = B_l^H dR_g B_l uses
            # group g's IRS covariance around group l's sandwich.
            c_term = _lemma1(ctx.P_B[l], RT2[l], s, ctx.R_IRS_n[g])
            qp_C = (ell(l, TCT)
                    - (ratio / one_plus[l] ** 2)
                    * (one_plus[l] * (ell(l, TCT @ RT[l]) + ell(l, RT[l] @ TCT))
                       - 2.0 * delta_p[l] * s1_C)
                    + c_term)
            m_gl_p[g, l] = (qp_C * D[l] - q_C * Dp[l]) / (b_bar * D[l] ** 2)

    # Scalar chains of the exact power parameterization.
    c_tau = 1.0 - tau ** 2 * (1.0 - one_plus ** 2)
    c_tau_p = 2.0 * tau ** 2 * one_plus[:, None] * delta_p
    q_coef = (1.0 - tau ** 2) * delta ** 2 / K_bar
    q_coef_p = (1.0 - tau ** 2) * 2.0 * delta[:, None] * delta_p / K_bar
    m_g, m_gg, m_gl = de.m_g, de.m_gg, de.m_gl

    gamma_prime = np.zeros((G, N), dtype=complex)
    for g in range(G):
        den = float(np.dot(de.c_coef[g], P) + de.t2_coef[g])
        den_p = m_g_p[g] / b_bar  # t2' term
        den_p = den_p + P[g] * (1.0 - 1.0 / K_bar) / (b_bar * one_plus[g] ** 2) * (
            m_gg_p[g] * c_tau[g] + m_gg[g] * c_tau_p[g]
            - 2.0 * m_gg[g] * c_tau[g] * delta_p[g] / one_plus[g])
        for l in range(G):
            if l == g:
                continue
            den_p = den_p + P[l] / (b_bar * K_bar * m_g[l]) * (
                m_g_p[g] * m_gl[g, l] + m_g[g] * m_gl_p[g, l]
                - m_g[g] * m_gl[g, l] * m_g_p[l] / m_g[l])
        num = P[g] * q_coef[g]
        num_p = P[g] * q_coef_p[g]
        gamma_prime[g] = (num_p * den - num * den_p) / den ** 2

    q_w = (K_bar / LN2) * gamma_prime.sum(axis=0)
    _check_finite("gamma_prime", gamma_prime)
    _check_finite("q_wirtinger", q_w)
    # Tangential component: kill the radial (amplitude) part per element.
    q_tan = 1j * np.imag(q_w * np.conj(s)) * s

    lambda_p = (b_bar * (2.0 * one_plus[:, None] * delta_p * m_g[:, None]
                         - one_plus[:, None] ** 2 * m_g_p)
                / m_g[:, None] ** 2)
    Y_gg_p = ((P / b_bar) * (1.0 - 1.0 / K_bar))[:, None] * (
        m_gg_p * one_plus[:, None] - 2.0 * m_gg[:, None] * delta_p
    ) / one_plus[:, None] ** 3
    Y_gl_p = np.zeros((G, G, N), dtype=complex)
    for g in range(G):
        for l in range(G):
            if l != g:
                Y_gl_p[g, l] = (P[l] / (b_bar * K_bar)) * (
                    m_gl_p[g, l] * one_plus[l] - 2.0 * m_gl[g, l] * delta_p[l]
                ) / one_plus[l] ** 3

    return GradientReport(q=q_tan, q_wirtinger=q_w, gamma_prime=gamma_prime,
                          delta_prime=_check_finite("delta_prime", delta_p),
                          m_g_prime=_check_finite("m_g_prime", m_g_p),
                          m_gg_prime=_check_finite("m_gg_prime", m_gg_p),
                          m_gl_prime=_check_finite("m_gl_prime", m_gl_p),
                          lambda_bar_prime=lambda_p, Y_gg_prime=Y_gg_p,
                          Y_gl_prime=Y_gl_p)


def directional_derivative(q_wirtinger: np.ndarray, direction: np.ndarray) -> float:
    """d f(s + t*direction)/dt at t=0 for real f: 2 Re(q^H direction)."""
    return float(2.0 * np.real(np.vdot(q_wirtinger, direction)))


def finite_difference_check(ctx: DEContext, s: np.ndarray, n_directions: int = 10,
                            step: float = 1e-6, rng: Optional[np.random.Generator] = None) -> float:
    """Max relative error of 2 Re(q^H d) against central differences of the
    unconstrained DE sum SE, over random complex directions."""
    rng = rng or np.random.default_rng(0)
    report = sinr_gradient(ctx.solve(s), ctx, s)
    worst = 0.0
    for _ in range(n_directions):
        d = rng.standard_normal(s.shape[0]) + 1j * rng.standard_normal(s.shape[0])
        d /= np.linalg.norm(d)
        fd = (ctx.objective(s + step * d) - ctx.objective(s - step * d)) / (2.0 * step)
        cl = directional_derivative(report.q_wirtinger, d)
        worst = max(worst, abs(cl - fd) / max(abs(fd), 1e-300))
    return worst


@dataclass
class LineSearchParams:
    mu0: float = 1.0          # initial step
    shrink: float = 0.5       # backtracking factor
    c_armijo: float = 1e-4    # sufficient-increase constant
    mu_min: float = 1e-8      # stall threshold


def backtracking_line_search(objective: Callable[[np.ndarray], float],
                             s: np.ndarray, q: np.ndarray,
                             f0: Optional[float] = None,
                             params: LineSearchParams = LineSearchParams(),
                             project: Callable[..., np.ndarray] = project_unit_modulus):
    """Armijo backtracking on the projected update s <- project(s + mu q).

    Accepts mu once the projected objective gains at least
    c_armijo * mu * ||q||^2; returns (mu, s_new, f_new, stalled). A zero
    direction or an exhausted mu budget returns the incoming point with the
    stall flag set.
    """
    if f0 is None:
        f0 = objective(s)
    qq = float(np.real(np.vdot(q, q)))
    if qq == 0.0:
        return 0.0, s, f0, True
    mu = params.mu0
    while mu >= params.mu_min:
        s_trial = project(s + mu * q, previous=s)
        f_trial = objective(s_trial)
        if f_trial >= f0 + params.c_armijo * mu * qq:
            return mu, s_trial, f_trial, False
        mu *= params.shrink
    return params.mu_min, s, f0, True


@dataclass
class PgaResult:
    s: np.ndarray                # final phase vector
    trace: np.ndarray            # objective after every accepted step (incl. start)
    iterations: int
    converged: bool
    stalled: bool
    steps: List[Tuple[int, float, float, float]] = field(default_factory=list)
    # rows (iteration, objective, step size, gradient norm) for the CLI


def projected_gradient_ascent(ctx: DEContext, s0: Optional[np.ndarray] = None,
                              eps: float = 1e-3, max_iter: int = 100,
                              params: LineSearchParams = LineSearchParams()) -> PgaResult:
    """Maximize the DE sum SE over unit-modulus phases (fixed B, fixed powers).

    Ascent steps use the tangential gradient with Armijo backtracking; the
    objective trace is therefore non-decreasing. Terminates when the squared
    objective change drops below eps, the gradient vanishes, or the line
    search stalls.
    """
    N = ctx.H1.shape[1]
    s = initial_phases(N) if s0 is None else project_unit_modulus(np.asarray(s0, complex))
    f = ctx.objective(s)
    trace = [f]
    steps: List[Tuple[int, float, float, float]] = []
    converged = False
    stalled = False
    for it in range(1, max_iter + 1):
        report = sinr_gradient(ctx.solve(s), ctx, s)
        gnorm = float(np.linalg.norm(report.q))
        if gnorm < 1e-12:
            converged = True
            steps.append((it, f, 0.0, gnorm))
            break
        mu, s_new, f_new, stalled = backtracking_line_search(
            ctx.objective, s, report.q, f0=f, params=params)
        steps.append((it, f_new, mu, gnorm))
        if stalled:
            break
        s, f_prev, f = s_new, f, f_new
        trace.append(f)
        if (f - f_prev) ** 2 < eps:
            converged = True
            break
    return PgaResult(s=s, trace=np.asarray(trace), iterations=len(trace) - 1,
                     converged=converged, stalled=stalled, steps=steps)
