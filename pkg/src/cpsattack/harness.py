"""Paired closed-loop simulation of an attacked loop and its virtual twin.

One run integrates, on a shared noise path, (a) the true plant under attack
with its Kalman filter, LQG feedback and chi-square detector, (b) a virtual
never-attacked twin fed the same process and measurement noise, and (c) the
attacker's own machinery: an eavesdropping Kalman filter on the attack-free
measurements, the offset state, and the reconstruction of the twin's estimate
that the policy's planning state requires.

The per-step order within step t is fixed:

  1. measure: attack-free outputs of both plants with the shared v_t;
  2. attacker: innovation + estimate update, twin-estimate reconstruction,
     planning state assembly, attack input e_t from the policy;
  3. deliver: operator's measurement gets Psi e_t added;
  4. operate: filter updates, detector statistics and inputs on both loops;
  5. advance: plants (shared w_t, Gamma e_t on the attacked one), all three
     filters' predictions, and the offset state.

The start at the infinite past is approximated by drawing x_{-T} from the
model prior and discarding T burn-in steps; all attack-window guarantees are
asserted for t >= 0 only.  Everything is vectorised across runs: run k draws
its noise from a dedicated counter-based child stream of (master_seed, k), so
a run's noise path never depends on which other runs share its batch.
Repeating an invocation reproduces results bit for bit; regrouping runs into
different batch sizes keeps the noise identical but may move the last bits of
the arithmetic, since batched matrix products round differently by shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import build_augmented
from .pipeline import detector_statistic, make_detector


def child_stream(master_seed, run_index):
    """Counter-based generator for one Monte Carlo run, derived from the
    master seed so that runs are reproducible individually and in parallel."""
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(run_index),))
    return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True)
class SimulationConfig:
    burn_in: int = 200
    horizon: int = 200
    master_seed: int = 0
    runs: int = 1

    def __post_init__(self):
        if self.burn_in < 0 or self.horizon < 0 or self.runs < 1:
            raise ValueError("burn_in/horizon must be >= 0 and runs >= 1")


@dataclass
class PairedTrajectory:
    """Step-indexed records of one paired run; index 0 is t = -burn_in and
    the attack window occupies t = 0..horizon."""

    t: np.ndarray
    x: np.ndarray
    x_nom: np.ndarray
    y: np.ndarray
    y_clean: np.ndarray
    u: np.ndarray
    e: np.ndarray
    x_hat_sys: np.ndarray
    x_hat_nom: np.ndarray
    x_hat_att: np.ndarray
    theta: np.ndarray
    nu_sys: np.ndarray
    nu_nom: np.ndarray
    nu_att: np.ndarray
    eps_offset: np.ndarray
    x_hat_nom_rec: np.ndarray
    g_sys: np.ndarray
    g_nom: np.ndarray
    alarm_sys: np.ndarray
    alarm_nom: np.ndarray
    nu_err: np.ndarray
    run_index: int
    threshold: float

    @property
    def attack_slice(self):
        return slice(int(np.searchsorted(self.t, 0)), len(self.t))


@dataclass
class EmpiricalCosts:
    """Monte Carlo cost estimates over the attack window."""

    mean_control: float
    stderr_control: float
    mean_detection: float
    stderr_detection: float
    runs: int
    control_samples: np.ndarray
    detection_samples: np.ndarray


def _policy_arrays(policy):
    if policy is None:
        return None, None
    return [np.asarray(g, dtype=float) for g in policy.L], \
           [np.asarray(g, dtype=float) for g in policy.O]


def _simulate_batch(model, fgains, cgains, policy, cfg, run_indices,
                    record=False, obj=None, detector=None):
    """Core vectorised paired simulation.  Returns (records, J_c, J_d) where
    records is a dict of stacked arrays (or None) and the J's are per-run
    cost sums over the attack window (or None when obj is None)."""
    n, m, p, s = model.n, model.m, model.p, model.s
    T = cfg.burn_in + cfg.horizon + 1
    R = len(run_indices)
    aug = build_augmented(model, fgains, cgains)
    L_pol, O_pol = _policy_arrays(policy)
    if policy is not None and policy.N < cfg.horizon:
        raise ValueError(f"policy horizon {policy.N} shorter than simulation "
                         f"horizon {cfg.horizon}")

    # Per-run noise, one child stream per run: first the initial state block,
    # then one row of n + p standard normals per step (w first, then v).
    x_init = np.empty((R, n))
    W_all = np.empty((R, T, n))
    V_all = np.empty((R, T, p))
    for i, k in enumerate(run_indices):
        stream = child_stream(cfg.master_seed, k)
        x_init[i] = model.x_bar + model._chol_x @ stream.standard_normal(n)
        Z = stream.standard_normal((T, n + p))
        W_all[i] = Z[:, :n] @ model._chol_w.T
        V_all[i] = Z[:, n:] @ model._chol_v.T

    A, B, C = model.A, model.B, model.C
    Gamma, Psi = model.Gamma, model.Psi
    K, L_fb = fgains.K, cgains.L
    hat = aug.hat
    if policy is not None and obj is None:
        raise ValueError("an active policy requires the objective (it carries x_star)")
    x_star = np.asarray(obj.x_star, dtype=float) if obj is not None else None

    x = x_init.copy()
    x0 = x_init.copy()
    pred_att = np.tile(model.x_bar, (R, 1))
    pred_sys = pred_att.copy()
    pred_nom = pred_att.copy()
    theta = np.zeros((R, 3 * n))
    e_zero = np.zeros((R, s))

    J_c = np.zeros(R) if obj is not None else None
    J_d = np.zeros(R) if obj is not None else None

    rec = None
    if record:
        det = detector or make_detector(p)
        rec = {key: np.empty((R, T, dim)) for key, dim in (
            ("x", n), ("x_nom", n), ("y", p), ("y_clean", p), ("u", m), ("e", s),
            ("x_hat_sys", n), ("x_hat_nom", n), ("x_hat_att", n),
            ("theta", 3 * n), ("nu_sys", p), ("nu_nom", p), ("nu_att", p),
            ("eps_offset", p), ("x_hat_nom_rec", n))}
        for key in ("g_sys", "g_nom", "nu_err"):
            rec[key] = np.empty((R, T))
        rec["t"] = np.arange(-cfg.burn_in, cfg.horizon + 1)
        rec["threshold"] = det.threshold

    for i in range(T):
        t = i - cfg.burn_in
        v = V_all[:, i]
        y_clean = x @ C.T + v
        y_clean_nom = x0 @ C.T + v

        # Attacker's eavesdropping filter sees the attack-free measurement.
        nu_att = y_clean - pred_att @ C.T
        post_att = pred_att + nu_att @ K.T

        xhat_nom_rec = None
        if record or (L_pol is not None and 0 <= t <= cfg.horizon):
            # The operator's prediction equals (A + BL) x_hat_sys_{t-1},
            # which the attacker can reproduce exactly.
            resid = y_clean - pred_sys @ C.T
            xhat_nom_rec = pred_sys - theta @ aug.Omega.T + resid @ K.T
        if L_pol is not None and 0 <= t <= cfg.horizon:
            xi = np.concatenate(
                [post_att, theta, xhat_nom_rec, np.tile(x_star, (R, 1))], axis=1)
            e = xi @ L_pol[t].T + nu_att @ O_pol[t].T
        else:
            e = e_zero

        y = y_clean + e @ Psi.T
        nu_sys = y - pred_sys @ C.T
        post_sys = pred_sys + nu_sys @ K.T
        u = post_sys @ L_fb.T

        nu_nom = y_clean_nom - pred_nom @ C.T
        post_nom = pred_nom + nu_nom @ K.T
        u_nom = post_nom @ L_fb.T

        if obj is not None and 0 <= t <= cfg.horizon:
            dx = x - x_star
            J_c += np.einsum("ij,jk,ik->i", dx, obj.Q[t], dx)
            J_d += np.einsum("ij,jk,ik->i", nu_sys, obj.R[t], nu_sys)

        if record:
            rec["x"][:, i] = x
            rec["x_nom"][:, i] = x0
            rec["y"][:, i] = y
            rec["y_clean"][:, i] = y_clean
            rec["u"][:, i] = u
            rec["e"][:, i] = e
            rec["x_hat_sys"][:, i] = post_sys
            rec["x_hat_nom"][:, i] = post_nom
            rec["x_hat_att"][:, i] = post_att
            rec["theta"][:, i] = theta
            rec["nu_sys"][:, i] = nu_sys
            rec["nu_nom"][:, i] = nu_nom
            rec["nu_att"][:, i] = nu_att
            rec["eps_offset"][:, i] = theta @ hat.C_hat.T + e @ hat.D_hat.T
            rec["x_hat_nom_rec"][:, i] = xhat_nom_rec
            rec["g_sys"][:, i] = detector_statistic(fgains, nu_sys)
            rec["g_nom"][:, i] = detector_statistic(fgains, nu_nom)
            rec["nu_err"][:, i] = np.max(np.abs(nu_att - nu_nom), axis=1)

        w = W_all[:, i]
        x = x @ A.T + u @ B.T + e @ Gamma.T + w
        x0 = x0 @ A.T + u_nom @ B.T + w
        pred_att = post_att @ A.T + u @ B.T + e @ Gamma.T
        pred_sys = post_sys @ A.T + u @ B.T
        pred_nom = post_nom @ A.T + u_nom @ B.T
        theta = theta @ hat.A_hat.T + e @ hat.B_hat.T

    return rec, J_c, J_d


def run_paired(model, fgains, cgains, policy, cfg, run_index=0, detector=None,
               obj=None):
    """Single paired run with full per-step records.

    policy may be None for a no-attack run.  The objective is only needed to
    place the target into the planning state when a policy is active.
    """
    det = detector or make_detector(model.p)
    rec, _, _ = _simulate_batch(model, fgains, cgains, policy, cfg, [run_index],
                                record=True, obj=obj, detector=det)
    fields = {}
    for key, value in rec.items():
        if key in ("t", "threshold"):
            fields[key] = value
        else:
            fields[key] = value[0]
    fields["alarm_sys"] = fields["g_sys"] > det.threshold
    fields["alarm_nom"] = fields["g_nom"] > det.threshold
    return PairedTrajectory(run_index=run_index, **fields)


def monte_carlo_costs(model, fgains, cgains, policy, obj, cfg, chunk=2048):
    """Monte Carlo estimate of the attack-window costs across cfg.runs runs.

    Runs are simulated in batches of `chunk`; every run consumes only its own
    child stream, so the drawn noise is independent of the chunk size and a
    repeated call reproduces its results exactly.
    """
    J_c = np.empty(cfg.runs)
    J_d = np.empty(cfg.runs)
    for start in range(0, cfg.runs, chunk):
        idx = list(range(start, min(start + chunk, cfg.runs)))
        _, jc, jd = _simulate_batch(model, fgains, cgains, policy, cfg, idx,
                                    record=False, obj=obj)
        J_c[start:start + len(idx)] = jc
        J_d[start:start + len(idx)] = jd
    def _stderr(a):
        if len(a) < 2:
            return float("nan")
        return float(np.std(a, ddof=1) / math.sqrt(len(a)))
    return EmpiricalCosts(
        mean_control=float(np.mean(J_c)),
        stderr_control=_stderr(J_c),
        mean_detection=float(np.mean(J_d)),
        stderr_detection=_stderr(J_d),
        runs=cfg.runs,
        control_samples=J_c,
        detection_samples=J_d,
    )


@dataclass
class AlarmReport:
    attacked_rate: float
    nominal_rate: float
    threshold: float
    window: int


def alarm_report(traj, detector):
    """Alarm rates of both twins over the attack window t >= 0."""
    sl = traj.attack_slice
    g_sys = traj.g_sys[sl]
    g_nom = traj.g_nom[sl]
    return AlarmReport(
        attacked_rate=float(np.mean(g_sys > detector.threshold)),
        nominal_rate=float(np.mean(g_nom > detector.threshold)),
        threshold=detector.threshold,
        window=len(g_sys),
    )
