"""Nominal control pipeline: steady-state Kalman filter, LQG state feedback,
and the chi-square innovation detector that watches the loop.

All gains are the infinite-horizon ones; the filter runs with the converged
gain K from the start and the few steps of transient are handled by the
simulation harness's burn-in.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .numerics import (
    InstabilityError,
    chi_square_quantile,
    solve_control_dare,
    solve_filter_dare,
    spectral_radius,
    symmetrize,
)


@dataclass(frozen=True)
class FilterGains:
    """Steady-state Kalman quantities.

    K          filter gain
    P          one-step prediction error covariance (Riccati fixed point)
    Sigma_nu   innovation covariance C P C^T + Sigma_v
    P_hat      posterior error covariance P - P C^T Sigma_nu^{-1} C P
    """

    K: np.ndarray
    P: np.ndarray
    Sigma_nu: np.ndarray
    P_hat: np.ndarray
    _chol_nu: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_chol_nu", cho_factor(self.Sigma_nu))

    def whiten_solve(self, nu):
        """Sigma_nu^{-1} nu (vector or stacked rows)."""
        return cho_solve(self._chol_nu, np.asarray(nu, dtype=float).T).T


@dataclass(frozen=True)
class ControllerGains:
    """Infinite-horizon LQG feedback u = L x_hat and its Riccati matrix S."""

    L: np.ndarray
    S: np.ndarray


def kalman_design(model, tol=1e-13):
    P = solve_filter_dare(model.A, model.C, model.Sigma_w, model.Sigma_v, tol=tol)
    Sigma_nu = model.C @ P @ model.C.T + model.Sigma_v
    K = np.linalg.solve(Sigma_nu.T, (P @ model.C.T).T).T
    P_hat = P - K @ model.C @ P
    return FilterGains(K=K, P=P, Sigma_nu=symmetrize(Sigma_nu, rtol=1e-9),
                       P_hat=symmetrize(P_hat, rtol=1e-6))


def lqg_design(model, Q=None, R=None, tol=1e-13):
    """LQG feedback gain for stage weights Q (states) and R (inputs);
    both default to identity.  Raises InstabilityError if the resulting
    closed loop A + B L is not Schur stable."""
    Q = np.eye(model.n) if Q is None else symmetrize(Q, name="Q")
    R = np.eye(model.m) if R is None else symmetrize(R, name="R")
    S = solve_control_dare(model.A, model.B, Q, R, tol=tol)
    L = -np.linalg.solve(model.B.T @ S @ model.B + R, model.B.T @ S @ model.A)
    rho = spectral_radius(model.A + model.B @ L)
    if rho >= 1.0:
        raise InstabilityError(f"closed loop A + BL has spectral radius {rho:.6f}")
    return ControllerGains(L=L, S=S)


def filter_step(model, gains, x_pred, y):
    """Measurement update: returns (posterior estimate, innovation)."""
    nu = y - x_pred @ model.C.T if x_pred.ndim > 1 else y - model.C @ x_pred
    x_post = x_pred + nu @ gains.K.T if x_pred.ndim > 1 else x_pred + gains.K @ nu
    return x_post, nu


def predict(model, x_post, u):
    """Time update: next one-step-ahead prediction A x_post + B u."""
    if x_post.ndim > 1:
        return x_post @ model.A.T + u @ model.B.T
    return model.A @ x_post + model.B @ u


@dataclass(frozen=True)
class DetectorConfig:
    false_alarm_prob: float
    dof: int
    threshold: float


def make_detector(p, false_alarm_prob=0.05):
    """Chi-square detector threshold sized for a p-dimensional innovation."""
    if not 0.0 < false_alarm_prob < 1.0:
        raise ValueError("false_alarm_prob must be inside (0, 1)")
    tau = chi_square_quantile(1.0 - false_alarm_prob, p)
    return DetectorConfig(false_alarm_prob=false_alarm_prob, dof=p, threshold=tau)


def detector_statistic(gains, nu):
    """g = nu^T Sigma_nu^{-1} nu; accepts one innovation or stacked rows."""
    nu = np.asarray(nu, dtype=float)
    solved = gains.whiten_solve(nu)
    if nu.ndim == 1:
        return float(nu @ solved)
    return np.einsum("ij,ij->i", nu, solved)


def save_gains(filter_gains, controller_gains, path):
    doc = {
        "K": filter_gains.K.tolist(),
        "P": filter_gains.P.tolist(),
        "Sigma_nu": filter_gains.Sigma_nu.tolist(),
        "P_hat": filter_gains.P_hat.tolist(),
        "L": controller_gains.L.tolist(),
        "S": controller_gains.S.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_gains(path):
    with open(path) as fh:
        doc = json.load(fh)
    fg = FilterGains(K=np.asarray(doc["K"]), P=np.asarray(doc["P"]),
                     Sigma_nu=np.asarray(doc["Sigma_nu"]), P_hat=np.asarray(doc["P_hat"]))
    cg = ControllerGains(L=np.asarray(doc["L"]), S=np.asarray(doc["S"]))
    return fg, cg
