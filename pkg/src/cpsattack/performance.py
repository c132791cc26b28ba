"""Closed-form performance analysis of linear attack policies.

Given any time-varying linear policy e_t = L_t xi_t + O_t nu_t (not just the
synthesized optimum), forward-substituting it into the planning system leaves
a linear system driven only by the white innovation, so the two components of
the objective -- the disruption cost J_c (state-to-target) and the detection
cost J_d (residual energy) -- have exact expressions via a pair of backward
recursions.  The same machinery evaluates the limiting policies: the
stealthiest attack (state term weight -> 0) and the most disruptive one
(residual term weight -> infinity), which bound every trade-off point of the
alpha sweep from below.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .numerics import pseudo_inverse, symmetrize
from .synthesis import (
    AttackPolicy,
    CertificateError,
    _innovation_trace,
    optimal_cost,
    synthesize,
)


@dataclass
class CostReport:
    """Expected costs of one policy: J_d (detection/residual energy over the
    attack window), J_c (squared distance of the state from the target), and,
    for synthesized policies, the scalarized optimum J_star = alpha J_c + J_d.
    alpha is 0.0 / math.inf for the limiting policies.  converged records
    whether synthesis/evaluation completed."""

    alpha: float
    J_d: float
    J_c: float
    J_star: float
    converged: bool = True


@dataclass
class PerformanceCertificates:
    """Policy-evaluation recursions, indexed t = 0..N+1 (terminal entries are
    zero).  Qd/Rd/Sd parameterise the detection cost-to-go, Qc/Rc/Sc the
    disruption cost-to-go."""

    Qd: list
    Rd: list
    Sd: list
    Qc: list
    Rc: list
    Sc: list


def evaluate_costs(aug, obj, policy, prior):
    """Exact (J_d, J_c) of a linear policy; returns (CostReport, certificates).

    The report's J_star is alpha * J_c + J_d when the policy's alpha is a
    positive finite number, else NaN.
    """
    N = policy.N
    A, B = aug.Acal, aug.Bcal
    Psi = aug.Dcal[aug.n:, :]
    Ctil, Hcal = aug.Ctil, aug.Hcal
    I_p = np.eye(aug.p)
    dim = aug.xi_dim

    Z = np.zeros((dim, dim))
    Qd = [Z] * (N + 2)
    Rd = [np.zeros((dim, aug.p))] * (N + 2)
    Sd = [np.zeros((aug.p, aug.p))] * (N + 2)
    Qc = list(Qd)
    Rc = list(Rd)
    Sc = list(Sd)

    for t in range(N, -1, -1):
        Lt, Ot = policy.L[t], policy.O[t]
        Acl = A + B @ Lt
        Ccl = Ctil + Psi @ Lt
        Dn = I_p + Psi @ Ot
        BO = B @ Ot
        R_t = obj.R[t]
        Q_t = obj.Q[t]
        Qd[t] = symmetrize(Acl.T @ Qd[t + 1] @ Acl + Ccl.T @ R_t @ Ccl, rtol=1e-6)
        Rd[t] = Acl.T @ Qd[t + 1] @ BO + Ccl.T @ R_t @ Dn
        Sd[t] = symmetrize(BO.T @ Qd[t + 1] @ BO + Dn.T @ R_t @ Dn, rtol=1e-6)
        Qc[t] = symmetrize(Acl.T @ Qc[t + 1] @ Acl + Hcal.T @ Q_t @ Hcal, rtol=1e-6)
        Rc[t] = Acl.T @ Qc[t + 1] @ BO
        Sc[t] = symmetrize(BO.T @ Qc[t + 1] @ BO, rtol=1e-6)

    J_d = float(np.trace(prior.Sigma_star @ Qd[0]))
    J_c = float(np.trace(prior.Sigma_star @ Qc[0]))
    for t in range(N + 1):
        J_d += _innovation_trace(aug, Qd[t], Rd[t], Sd[t])
        J_c += _innovation_trace(aug, Qc[t], Rc[t], Sc[t])
        J_c += float(np.trace(aug.P_hat @ obj.Q[t]))

    alpha = policy.alpha
    if isinstance(alpha, float) and math.isfinite(alpha) and alpha > 0:
        J_star = alpha * J_c + J_d
    else:
        J_star = float("nan")
    report = CostReport(alpha=float(alpha), J_d=J_d, J_c=J_c, J_star=J_star)
    certs = PerformanceCertificates(Qd=Qd, Rd=Rd, Sd=Sd, Qc=Qc, Rc=Rc, Sc=Sc)
    return report, certs


@dataclass
class AsymptoticCertificates:
    """Cost-to-go matrices of the limiting recursions: V for the stealth
    limit (detection term only), W for the disruption limit."""

    mode: str
    V: list | None = None
    W: list | None = None


def asymptotic_policy(aug, obj, mode, pinv_cutoff=1e-11):
    """Limiting policy for mode 'detection_only' (the stealthiest attack,
    trade-off weight -> 0) or 'disruption_only' (weight -> infinity, where
    the policy ignores the detector and O_t = 0)."""
    N = obj.N
    A, B = aug.Acal, aug.Bcal
    Psi = aug.Dcal[aug.n:, :]
    dim = aug.xi_dim
    L_gains = [None] * (N + 1)
    O_gains = [None] * (N + 1)

    if mode == "detection_only":
        V = [None] * (N + 2)
        V[N + 1] = np.zeros((dim, dim))
        Ctil = aug.Ctil
        for t in range(N, -1, -1):
            R_t = obj.R[t]
            H = symmetrize(Psi.T @ R_t @ Psi + B.T @ V[t + 1] @ B, rtol=1e-6)
            Hp = pseudo_inverse(H, cutoff=pinv_cutoff)
            G = Psi.T @ R_t @ Ctil + B.T @ V[t + 1] @ A
            L_gains[t] = -Hp @ G
            O_gains[t] = -Hp @ (Psi.T @ R_t)
            V[t] = symmetrize(Ctil.T @ R_t @ Ctil + A.T @ V[t + 1] @ A + G.T @ L_gains[t],
                              rtol=1e-6)
        policy = AttackPolicy(L=L_gains, O=O_gains, N=N, alpha=0.0, mode=mode)
        return policy, AsymptoticCertificates(mode=mode, V=V)

    if mode == "disruption_only":
        W = [None] * (N + 2)
        W[N + 1] = np.zeros((dim, dim))
        Hcal = aug.Hcal
        O_zero = np.zeros((aug.s, aug.p))
        for t in range(N, -1, -1):
            Q_t = obj.Q[t]
            H = symmetrize(B.T @ W[t + 1] @ B, rtol=1e-6)
            Hp = pseudo_inverse(H, cutoff=pinv_cutoff)
            G = B.T @ W[t + 1] @ A
            L_gains[t] = -Hp @ G
            O_gains[t] = O_zero
            W[t] = symmetrize(Hcal.T @ Q_t @ Hcal + A.T @ W[t + 1] @ A + G.T @ L_gains[t],
                              rtol=1e-6)
        policy = AttackPolicy(L=L_gains, O=O_gains, N=N, alpha=math.inf, mode=mode)
        return policy, AsymptoticCertificates(mode=mode, W=W)

    raise ValueError(f"unknown asymptotic mode {mode!r}")


def default_alphas(count=25, lo=1e-6, hi=1e6):
    return list(np.logspace(math.log10(lo), math.log10(hi), count))


def alpha_sweep(aug, obj_for, alphas, prior):
    """Trade-off curve: one CostReport per finite alpha (sorted ascending)
    plus the two limiting policies as sentinel rows alpha = 0 and alpha = inf.

    obj_for(alpha) must return the AttackObjective at that trade-off weight.
    A synthesis failure marks that row converged = False and the sweep
    continues.
    """
    reports = []

    obj0 = obj_for(1.0)
    pol0, _ = asymptotic_policy(aug, obj0, "detection_only")
    rep0, _ = evaluate_costs(aug, obj0, pol0, prior)
    reports.append(CostReport(alpha=0.0, J_d=rep0.J_d, J_c=rep0.J_c,
                              J_star=float("nan")))

    for alpha in sorted(alphas):
        obj = obj_for(alpha)
        try:
            policy, certs = synthesize(aug, obj)
            rep, _ = evaluate_costs(aug, obj, policy, prior)
            rep.J_star = optimal_cost(aug, obj, certs, prior)
            reports.append(rep)
        except CertificateError:
            reports.append(CostReport(alpha=alpha, J_d=float("nan"),
                                      J_c=float("nan"), J_star=float("nan"),
                                      converged=False))

    pol_inf, _ = asymptotic_policy(aug, obj0, "disruption_only")
    rep_inf, _ = evaluate_costs(aug, obj0, pol_inf, prior)
    reports.append(CostReport(alpha=math.inf, J_d=rep_inf.J_d, J_c=rep_inf.J_c,
                              J_star=float("nan")))
    return reports


def check_sweep(reports, slack=1e-9):
    """Sanity conditions on a sweep: J_d nondecreasing and J_c nonincreasing
    in alpha, and the limiting rows bound every finite-alpha row from below.
    Returns a list of human-readable violations (empty when all hold)."""
    problems = []
    finite = [r for r in reports if math.isfinite(r.alpha) and r.alpha > 0 and r.converged]
    finite.sort(key=lambda r: r.alpha)
    lo = next((r for r in reports if r.alpha == 0.0), None)
    hi = next((r for r in reports if math.isinf(r.alpha)), None)
    for prev, cur in zip(finite, finite[1:]):
        if cur.J_d < prev.J_d - slack * max(1.0, abs(prev.J_d)):
            problems.append(f"J_d decreased from alpha={prev.alpha:g} to {cur.alpha:g}")
        if cur.J_c > prev.J_c + slack * max(1.0, abs(prev.J_c)):
            problems.append(f"J_c increased from alpha={prev.alpha:g} to {cur.alpha:g}")
    for r in finite:
        if lo is not None and r.J_d < lo.J_d - slack * max(1.0, abs(lo.J_d)):
            problems.append(f"J_d at alpha={r.alpha:g} beats the stealth limit")
        if hi is not None and r.J_c < hi.J_c - slack * max(1.0, abs(hi.J_c)):
            problems.append(f"J_c at alpha={r.alpha:g} beats the disruption limit")
    return problems


def _fmt(x):
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return f"{x:.17g}"


def write_sweep_csv(reports, path):
    """Sweep CSV: columns alpha, J_d, J_c, J_star, converged; the limiting
    rows carry alpha values 0 and inf."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["alpha", "J_d", "J_c", "J_star", "converged"])
        for r in reports:
            writer.writerow([_fmt(r.alpha), _fmt(r.J_d), _fmt(r.J_c),
                             _fmt(r.J_star), "true" if r.converged else "false"])


def read_sweep_csv(path):
    reports = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            reports.append(CostReport(
                alpha=float(row["alpha"]),
                J_d=float(row["J_d"]),
                J_c=float(row["J_c"]),
                J_star=float(row["J_star"]),
                converged=row["converged"] == "true",
            ))
    return reports
