"""Dynamics of the attack's effect on the control loop.

Two linear systems are assembled from a plant plus its designed gains:

* the offset system ("hat" system): a 3n-state model whose state
  theta_t = (omega_t, pi_t, rho_t) carries the gap the attack has opened
  between the attacked loop and a virtual never-attacked twin.  omega is the
  (one step delayed) gap between the operator's estimate under attack and the
  twin's estimate; pi tracks the feedback consequences of past estimate gaps;
  rho tracks the open-loop state response to injected inputs.  Its output
  eps_t is the shift the attack induces in the operator's innovation.

* the planning system: the 6n-state stack xi_t = [x_hat_t; theta_t;
  x_hat0_t; x_target] combining the attacker's own state estimate, the offset
  state, the twin's estimate, and the (constant) target.  Driven by the
  attacker's innovation, it reproduces exactly the two signals the attack
  objective prices: the estimate-to-target error and the operator's residual.

Both systems are exact path-wise reconstructions, not approximations; the
simulation harness asserts this step by step.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class HatSystem:
    """Offset dynamics theta_{t+1} = A_hat theta_t + B_hat e_t,
    eps_t = C_hat theta_t + D_hat e_t, with theta in R^{3n}."""

    A_hat: np.ndarray
    B_hat: np.ndarray
    C_hat: np.ndarray
    D_hat: np.ndarray
    n: int


def build_hat_system(model, fgains, cgains):
    n = model.n
    A, B, C = model.A, model.B, model.C
    K, L = fgains.K, cgains.L
    I = np.eye(n)
    KC = K @ C
    BL = B @ L
    Z = np.zeros((n, n))
    A_hat = np.block([
        [(I - KC) @ A + BL, KC, KC],
        [A @ BL, A, Z],
        [Z, Z, A],
    ])
    B_hat = np.vstack([K @ model.Psi, np.zeros((n, model.s)), model.Gamma])
    C_hat = np.hstack([-C @ A, C, C])
    return HatSystem(A_hat=A_hat, B_hat=B_hat, C_hat=C_hat, D_hat=model.Psi.copy(), n=n)


def hat_step(hat, theta, e):
    """Advance the offset state; accepts a vector or stacked rows."""
    return theta @ hat.A_hat.T + e @ hat.B_hat.T


def residual_offset(hat, theta, e):
    """eps_t: the shift the attack adds to the operator's innovation."""
    return theta @ hat.C_hat.T + e @ hat.D_hat.T


@dataclass(frozen=True)
class AugmentedDynamics:
    """Planning-form matrices.

    State equation   xi_{t+1} = Acal xi_t + Bcal e_t + Kcal nu_{t+1}
    Priced outputs   zeta_t   = Ccal xi_t + Dcal e_t + Mcal nu_t
    where zeta stacks (estimate - target, attacked innovation), nu is the
    attacker's own (white) innovation, Hcal/Ctil are the two row blocks of
    Ccal, Omega maps theta_t to the next estimate-gap omega_{t+1} (up to the
    K Psi e_t feedthrough), and selector embeds an estimate prediction into
    the xi blocks it occupies at the attack start.
    """

    Acal: np.ndarray
    Bcal: np.ndarray
    Kcal: np.ndarray
    Ccal: np.ndarray
    Dcal: np.ndarray
    Mcal: np.ndarray
    Hcal: np.ndarray
    Ctil: np.ndarray
    Omega: np.ndarray
    selector: np.ndarray
    hat: HatSystem
    Sigma_nu: np.ndarray
    P_hat: np.ndarray
    n: int
    p: int
    s: int

    @property
    def xi_dim(self):
        return 6 * self.n


def build_augmented(model, fgains, cgains):
    """Assemble the planning system from a plant and its designed gains."""
    n, p, s = model.n, model.p, model.s
    A, B, C = model.A, model.B, model.C
    K, L = fgains.K, cgains.L
    hat = build_hat_system(model, fgains, cgains)
    BL = B @ L
    I = np.eye(n)
    Omega = hat.A_hat[:n, :]

    Acal = np.zeros((6 * n, 6 * n))
    Acal[:n, :n] = A
    Acal[:n, n:4 * n] = BL @ Omega
    Acal[:n, 4 * n:5 * n] = BL
    Acal[n:4 * n, n:4 * n] = hat.A_hat
    Acal[4 * n:5 * n, 4 * n:5 * n] = A + BL
    Acal[5 * n:, 5 * n:] = I

    Bcal = np.vstack([
        model.Gamma + BL @ K @ model.Psi,
        hat.B_hat,
        np.zeros((2 * n, s)),
    ])
    Kcal = np.vstack([K, np.zeros((3 * n, p)), K, np.zeros((n, p))])

    Hcal = np.hstack([I, np.zeros((n, 4 * n)), -I])
    Ctil = np.hstack([np.zeros((p, n)), hat.C_hat, np.zeros((p, 2 * n))])
    Ccal = np.vstack([Hcal, Ctil])
    Dcal = np.vstack([np.zeros((n, s)), model.Psi])
    Mcal = np.vstack([np.zeros((n, p)), np.eye(p)])

    selector = np.zeros((6 * n, n))
    selector[:n, :] = I
    selector[4 * n:5 * n, :] = I

    return AugmentedDynamics(Acal=Acal, Bcal=Bcal, Kcal=Kcal, Ccal=Ccal, Dcal=Dcal,
                             Mcal=Mcal, Hcal=Hcal, Ctil=Ctil, Omega=Omega,
                             selector=selector, hat=hat, Sigma_nu=fgains.Sigma_nu,
                             P_hat=fgains.P_hat, n=n, p=p, s=s)


def augmented_step(aug, xi, e, nu_next):
    return xi @ aug.Acal.T + e @ aug.Bcal.T + nu_next @ aug.Kcal.T


def augmented_output(aug, xi, e, nu):
    return xi @ aug.Ccal.T + e @ aug.Dcal.T + nu @ aug.Mcal.T


def initial_xi(aug, x_hat0, x_star):
    """xi at the attack start: the attacker's and the twin's estimates
    coincide and the offset state is zero."""
    xi = np.zeros(aug.xi_dim)
    xi[:aug.n] = x_hat0
    xi[4 * aug.n:5 * aug.n] = x_hat0
    xi[5 * aug.n:] = x_star
    return xi


def reconstruct_nominal_estimate(model, fgains, cgains, aug, x_sys_prev, theta, y_clean):
    """Recover the never-attacked twin's current estimate from quantities the
    attacker can compute: the operator's previous estimate under attack, the
    offset state, and the attack-free measurement.

    Works on single vectors or stacked rows.
    """
    F = model.A + model.B @ cgains.L
    pred = x_sys_prev @ F.T
    resid = y_clean - pred @ model.C.T
    return pred - theta @ aug.Omega.T + resid @ fgains.K.T


def dump_matrices(aug, path):
    """Write every block matrix to a JSON document for inspection."""
    doc = {name: getattr(aug, name).tolist()
           for name in ("Acal", "Bcal", "Kcal", "Ccal", "Dcal", "Mcal",
                        "Hcal", "Ctil", "Omega", "selector")}
    doc.update({"A_hat": aug.hat.A_hat.tolist(), "B_hat": aug.hat.B_hat.tolist(),
                "C_hat": aug.hat.C_hat.tolist(), "D_hat": aug.hat.D_hat.tolist()})
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
