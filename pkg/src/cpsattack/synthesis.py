"""Attack synthesis: backward dynamic programming over the planning system.

The attacker's finite-horizon objective weighs two quadratic terms per step:
alpha times the distance of the (estimated) state from a target x_star, plus
the size of the residual the operator's detector watches.  Minimising the
expected sum over attack inputs e_0..e_N yields time-varying linear gains

    e_t = L_t xi_t + O_t nu_t

computed by a Riccati-style recursion on the planning matrices.  The final
step uses a pseudoinverse (the terminal normal matrix is typically singular);
all interior steps have a positive definite normal matrix and use a Cholesky
solve.  Alongside the policy the recursion's certificates (cost-to-go and
cross-term matrices) are returned so downstream code can audit optimality and
evaluate the achieved cost in closed form.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .numerics import definiteness, pseudo_inverse, solve_discrete_lyapunov, symmetrize


class CertificateError(RuntimeError):
    """A definiteness condition required by the recursion failed."""


@dataclass
class AttackObjective:
    """Per-step weights Q_t (state-to-target) and R_t (residual), the target
    x_star, the attack horizon N (attack runs t = 0..N), and the trade-off
    weight alpha multiplying the state term."""

    Q: list
    R: list
    x_star: np.ndarray
    N: int
    alpha: float

    def __post_init__(self):
        if self.N < 0:
            raise ValueError("horizon N must be >= 0")
        if len(self.Q) != self.N + 1 or len(self.R) != self.N + 1:
            raise ValueError("need exactly N + 1 weight matrices for Q and R")
        self.Q = [symmetrize(Qt, name=f"Q[{t}]") for t, Qt in enumerate(self.Q)]
        self.R = [symmetrize(Rt, name=f"R[{t}]") for t, Rt in enumerate(self.R)]
        for t, Qt in enumerate(self.Q):
            if not definiteness(Qt).is_pd:
                raise ValueError(f"Q[{t}] must be positive definite")
        for t, Rt in enumerate(self.R):
            if not definiteness(Rt).is_pd:
                raise ValueError(f"R[{t}] must be positive definite")
        self.x_star = np.asarray(self.x_star, dtype=float).reshape(-1)


def constant_objective(Q, R, x_star, N, alpha=1.0):
    """Objective with the same Q and R at every step."""
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    return AttackObjective(Q=[Q] * (N + 1), R=[R] * (N + 1),
                           x_star=x_star, N=N, alpha=alpha)


@dataclass
class AttackPolicy:
    """Time-varying linear attack e_t = L[t] xi_t + O[t] nu_t for t = 0..N."""

    L: list
    O: list
    N: int
    alpha: float
    mode: str = "optimal"
    model_hash: str = ""

    @classmethod
    def zero(cls, N, s, xi_dim, p):
        Z_L = np.zeros((s, xi_dim))
        Z_O = np.zeros((s, p))
        return cls(L=[Z_L] * (N + 1), O=[Z_O] * (N + 1), N=N, alpha=float("nan"),
                   mode="zero")


@dataclass
class RecursionCertificates:
    """Backward-recursion byproducts, indexed t = 0..N.

    Qcal[t], Rcal[t], Scal[t] parameterise the optimal cost-to-go quadratic
    in (xi_t, nu_t); Pi[t] is its constant term; F[t] is the stage weight
    diag(alpha Q_t, R_t) on the priced outputs.
    """

    Qcal: list
    Rcal: list
    Scal: list
    Pi: list
    F: list


def _stage_weight(aug, obj, t):
    F = np.zeros((aug.n + aug.p, aug.n + aug.p))
    F[:aug.n, :aug.n] = obj.alpha * obj.Q[t]
    F[aug.n:, aug.n:] = obj.R[t]
    return F


def synthesize(aug, obj, pinv_cutoff=1e-11, psd_tol=1e-9, model_hash=""):
    """Optimal attack policy for the given objective; returns (policy, certs).

    Raises CertificateError if an interior normal matrix fails positive
    definiteness (does not happen for valid models with PD weights, but the
    condition is checked rather than assumed).
    """
    if not (math.isfinite(obj.alpha) and obj.alpha > 0):
        raise ValueError("synthesis needs a finite positive alpha; "
                         "use asymptotic_policy for the limiting objectives")
    N = obj.N
    A, B = aug.Acal, aug.Bcal
    C, D, M = aug.Ccal, aug.Dcal, aug.Mcal

    F_N = _stage_weight(aug, obj, N)
    DtF = D.T @ F_N
    H_N = symmetrize(DtF @ D, rtol=1e-8)
    H_N_pinv = pseudo_inverse(H_N, cutoff=pinv_cutoff)
    L_N = -H_N_pinv @ (DtF @ C)
    O_N = -H_N_pinv @ (DtF @ M)
    Q_N = symmetrize(C.T @ F_N @ C + (DtF @ C).T @ L_N, rtol=1e-6)
    R_N = C.T @ F_N @ M + (DtF @ C).T @ O_N
    S_N = symmetrize(M.T @ F_N @ M + (DtF @ M).T @ O_N, rtol=1e-6)

    L_gains = [None] * (N + 1)
    O_gains = [None] * (N + 1)
    Qcal = [None] * (N + 1)
    Rcal = [None] * (N + 1)
    Scal = [None] * (N + 1)
    Pi = [0.0] * (N + 1)
    F_list = [None] * (N + 1)
    L_gains[N], O_gains[N] = L_N, O_N
    Qcal[N], Rcal[N], Scal[N], F_list[N] = Q_N, R_N, S_N, F_N

    for t in range(N - 1, -1, -1):
        F_t = _stage_weight(aug, obj, t)
        Q_next = Qcal[t + 1]
        H = symmetrize(D.T @ F_t @ D + B.T @ Q_next @ B, rtol=1e-6)
        report = definiteness(H, tol=psd_tol)
        if not report.is_pd:
            raise CertificateError(
                f"normal matrix at t={t} is not positive definite "
                f"(min eigenvalue {report.min_eigenvalue:.3e})")
        G = D.T @ F_t @ C + B.T @ Q_next @ A
        W = D.T @ F_t @ M
        chol = cho_factor(H)
        L_gains[t] = -cho_solve(chol, G)
        O_gains[t] = -cho_solve(chol, W)
        Qcal[t] = symmetrize(C.T @ F_t @ C + A.T @ Q_next @ A + G.T @ L_gains[t],
                             rtol=1e-6)
        Rcal[t] = C.T @ F_t @ M + G.T @ O_gains[t]
        Scal[t] = symmetrize(M.T @ F_t @ M + W.T @ O_gains[t], rtol=1e-6)
        F_list[t] = F_t
        Pi[t] = Pi[t + 1] + _innovation_trace(aug, Qcal[t + 1], Rcal[t + 1], Scal[t + 1])

    policy = AttackPolicy(L=L_gains, O=O_gains, N=N, alpha=obj.alpha,
                          mode="optimal", model_hash=model_hash)
    certs = RecursionCertificates(Qcal=Qcal, Rcal=Rcal, Scal=Scal, Pi=Pi, F=F_list)
    return policy, certs


def _innovation_trace(aug, Qc, Rc, Sc):
    K = aug.Kcal
    inner = K.T @ Qc @ K + 2.0 * (K.T @ Rc) + Sc
    return float(np.trace(aug.Sigma_nu @ inner))


@dataclass(frozen=True)
class SteadyPrior:
    """Stationary second moments of the loop at the attack start.

    Sigma0 is the covariance of the operator's one-step prediction under the
    stationary no-attack closed loop; Sigma_xi0 embeds it into the planning
    state; Sigma_star adds the rank-one contribution of the constant target.
    """

    Sigma0: np.ndarray
    Sigma_xi0: np.ndarray
    Sigma_star: np.ndarray
    x_star: np.ndarray


def steady_prior(model, fgains, cgains, aug, x_star):
    F = model.A + model.B @ cgains.L
    KSK = fgains.K @ fgains.Sigma_nu @ fgains.K.T
    Sigma0 = solve_discrete_lyapunov(F, F @ KSK @ F.T)
    Sel = aug.selector
    Sigma_xi0 = Sel @ Sigma0 @ Sel.T
    xi_star = np.zeros(aug.xi_dim)
    xi_star[5 * aug.n:] = np.asarray(x_star, dtype=float)
    Sigma_star = Sigma_xi0 + np.outer(xi_star, xi_star)
    return SteadyPrior(Sigma0=Sigma0, Sigma_xi0=Sigma_xi0, Sigma_star=Sigma_star,
                       x_star=np.asarray(x_star, dtype=float).reshape(-1))


def optimal_cost(aug, obj, certs, prior):
    """Closed-form expected objective achieved by the synthesized policy."""
    total = float(np.trace(prior.Sigma_star @ certs.Qcal[0]))
    phat_q = sum(float(np.trace(aug.P_hat @ obj.Q[t])) for t in range(obj.N + 1))
    total += obj.alpha * phat_q
    for t in range(obj.N + 1):
        total += _innovation_trace(aug, certs.Qcal[t], certs.Rcal[t], certs.Scal[t])
    return total


def save_policy(policy, path):
    doc = {
        "mode": policy.mode,
        "alpha": policy.alpha,
        "horizon": policy.N,
        "model_hash": policy.model_hash,
        "L": [g.tolist() for g in policy.L],
        "O": [g.tolist() for g in policy.O],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_policy(path, expect_model_hash=None):
    with open(path) as fh:
        doc = json.load(fh)
    if expect_model_hash is not None and doc.get("model_hash") != expect_model_hash:
        raise ValueError(f"{path}: policy was synthesized for a different model "
                         f"(hash {doc.get('model_hash')!r})")
    return AttackPolicy(
        L=[np.asarray(g, dtype=float) for g in doc["L"]],
        O=[np.asarray(g, dtype=float) for g in doc["O"]],
        N=int(doc["horizon"]),
        alpha=float(doc["alpha"]),
        mode=doc.get("mode", "optimal"),
        model_hash=doc.get("model_hash", ""),
    )
