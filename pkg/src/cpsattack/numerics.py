"""Shared numerical kernels: Riccati/Lyapunov solvers, pseudoinverse,
chi-square quantiles, and symmetry/definiteness certificates.

Everything here is deterministic and side-effect free.  The Riccati equations
are solved by fixed-point iteration of the corresponding filtering/control
recursions (rather than a spectral method) so that the fixed point is, by
construction, the limit of the finite-horizon recursions used elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats


class DareDivergedError(RuntimeError):
    """Riccati fixed-point iteration failed to converge within the cap."""


class InstabilityError(ValueError):
    """Lyapunov equation requested for a matrix with spectral radius >= 1."""


def symmetrize(M, rtol=1e-12, name="matrix"):
    """Return (M + M^T)/2 after checking M is symmetric to relative tolerance.

    Raises ValueError when the asymmetry exceeds rtol * max(1, ||M||_F).
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    gap = np.linalg.norm(M - M.T)
    if gap > rtol * max(1.0, np.linalg.norm(M)):
        raise ValueError(f"{name} is not symmetric (asymmetry {gap:.3e})")
    return 0.5 * (M + M.T)


def spectral_radius(M):
    return float(np.max(np.abs(np.linalg.eigvals(np.asarray(M, dtype=float)))))


@dataclass
class DefinitenessReport:
    """Eigenvalue-based (semi)definiteness certificate for a symmetric matrix."""

    min_eigenvalue: float
    max_abs_eigenvalue: float
    tolerance: float
    is_psd: bool
    is_pd: bool


def definiteness(M, tol=1e-9):
    """Classify a symmetric matrix as PSD/PD with a scale-aware tolerance.

    The tolerance used is tol * (1 + max |eigenvalue|); is_psd holds when the
    smallest eigenvalue clears -tolerance, is_pd when it clears +tolerance
    (so is_pd always implies is_psd).
    """
    M = symmetrize(M, rtol=1e-8, name="definiteness argument")
    eigs = np.linalg.eigvalsh(M)
    lo = float(eigs[0])
    hi = float(np.max(np.abs(eigs))) if eigs.size else 0.0
    tol_used = tol * (1.0 + hi)
    return DefinitenessReport(
        min_eigenvalue=lo,
        max_abs_eigenvalue=hi,
        tolerance=tol_used,
        is_psd=lo >= -tol_used,
        is_pd=lo > tol_used,
    )


def pseudo_inverse(M, cutoff=1e-11):
    """Moore-Penrose pseudoinverse with singular values below
    cutoff * sigma_max treated as zero."""
    return np.linalg.pinv(np.asarray(M, dtype=float), rcond=cutoff)


def numeric_rank(M, cutoff=1e-8):
    """Rank of M counting singular values above cutoff * sigma_max."""
    s = np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > cutoff * s[0]))


def chi_square_quantile(prob, dof):
    """Quantile of the chi-square distribution with `dof` degrees of freedom.

    prob must lie strictly inside (0, 1); dof must be a positive integer.
    """
    if not 0.0 < prob < 1.0:
        raise ValueError(f"probability must be in (0, 1), got {prob}")
    if dof < 1 or int(dof) != dof:
        raise ValueError(f"degrees of freedom must be a positive integer, got {dof}")
    return float(stats.chi2.ppf(prob, int(dof)))


def _rel_change(new, old):
    return np.linalg.norm(new - old) / max(1.0, np.linalg.norm(new))


def solve_filter_dare(A, C, Sigma_w, Sigma_v, tol=1e-13, max_iter=100_000,
                      return_info=False):
    """Steady-state one-step-ahead error covariance of the Kalman filter.

    Iterates P <- A P A^T + Sigma_w - A P C^T (C P C^T + Sigma_v)^{-1} C P A^T
    from P = Sigma_w until the relative Frobenius change drops below tol.
    Returns P (and an info dict with the iteration/residual history when
    return_info is set).  Raises DareDivergedError if the cap is hit or the
    iterates stop being finite.
    """
    A = np.asarray(A, dtype=float)
    C = np.asarray(C, dtype=float)
    Sigma_w = symmetrize(Sigma_w, name="Sigma_w")
    Sigma_v = symmetrize(Sigma_v, name="Sigma_v")
    P = Sigma_w.copy()
    changes = []
    for it in range(max_iter):
        S = C @ P @ C.T + Sigma_v
        G = np.linalg.solve(S, C @ P @ A.T)
        P_next = A @ P @ A.T + Sigma_w - A @ P @ C.T @ G
        P_next = 0.5 * (P_next + P_next.T)
        if not np.all(np.isfinite(P_next)):
            raise DareDivergedError(f"filter Riccati iterate not finite at iteration {it}")
        delta = _rel_change(P_next, P)
        changes.append(delta)
        P = P_next
        if delta <= tol:
            if return_info:
                return P, {"iterations": it + 1, "changes": np.array(changes)}
            return P
    raise DareDivergedError(
        f"filter Riccati iteration did not converge in {max_iter} steps "
        f"(last relative change {changes[-1]:.3e})")


def solve_control_dare(A, B, Q, R, tol=1e-13, max_iter=100_000, return_info=False):
    """Steady-state cost-to-go matrix of the discrete-time LQR problem.

    Iterates S <- A^T S A + Q - A^T S B (B^T S B + R)^{-1} B^T S A from S = Q.
    Same convergence/error conventions as solve_filter_dare.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    Q = symmetrize(Q, name="Q")
    R = symmetrize(R, name="R")
    S = Q.copy()
    changes = []
    for it in range(max_iter):
        H = B.T @ S @ B + R
        G = np.linalg.solve(H, B.T @ S @ A)
        S_next = A.T @ S @ A + Q - A.T @ S @ B @ G
        S_next = 0.5 * (S_next + S_next.T)
        if not np.all(np.isfinite(S_next)):
            raise DareDivergedError(f"control Riccati iterate not finite at iteration {it}")
        delta = _rel_change(S_next, S)
        changes.append(delta)
        S = S_next
        if delta <= tol:
            if return_info:
                return S, {"iterations": it + 1, "changes": np.array(changes)}
            return S
    raise DareDivergedError(
        f"control Riccati iteration did not converge in {max_iter} steps "
        f"(last relative change {changes[-1]:.3e})")


def filter_dare_residual(P, A, C, Sigma_w, Sigma_v):
    """Relative residual of P as a fixed point of the filter Riccati map."""
    S = C @ P @ C.T + Sigma_v
    rhs = A @ P @ A.T + Sigma_w - A @ P @ C.T @ np.linalg.solve(S, C @ P @ A.T)
    return np.linalg.norm(P - rhs) / max(1.0, np.linalg.norm(P))


def control_dare_residual(S, A, B, Q, R):
    """Relative residual of S as a fixed point of the control Riccati map."""
    H = B.T @ S @ B + R
    rhs = A.T @ S @ A + Q - A.T @ S @ B @ np.linalg.solve(H, B.T @ S @ A)
    return np.linalg.norm(S - rhs) / max(1.0, np.linalg.norm(S))


def solve_discrete_lyapunov(F, W, kron_limit=50, tol=1e-14, max_iter=200_000):
    """Solve Sigma = F Sigma F^T + W for stable F.

    For state dimension up to kron_limit the vectorised linear system
    (I - F (x) F) vec(Sigma) = vec(W) is solved directly; beyond that the
    fixed-point iteration is used.  Raises InstabilityError when the spectral
    radius of F is not strictly below one.
    """
    F = np.asarray(F, dtype=float)
    W = symmetrize(W, rtol=1e-9, name="W")
    rho = spectral_radius(F)
    if rho >= 1.0:
        raise InstabilityError(f"spectral radius {rho:.6f} >= 1; no stationary solution")
    n = F.shape[0]
    if n <= kron_limit:
        lhs = np.eye(n * n) - np.kron(F, F)
        Sigma = np.linalg.solve(lhs, W.reshape(-1)).reshape(n, n)
        return 0.5 * (Sigma + Sigma.T)
    Sigma = W.copy()
    for _ in range(max_iter):
        Sigma_next = F @ Sigma @ F.T + W
        if _rel_change(Sigma_next, Sigma) <= tol:
            return 0.5 * (Sigma_next + Sigma_next.T)
        Sigma = Sigma_next
    raise DareDivergedError("Lyapunov fixed-point iteration did not converge")
