"""Command-line front end.

Subcommands (all driven by a JSON config file):

  validate   load a model and report which standing assumptions hold
  attack     design the loop, synthesize the optimal attack, simulate it,
             and write policy/trajectory/summary artifacts
  sweep      trace the detection-vs-disruption trade-off over alpha
  baseline   long no-attack run summarising detector calibration

Exit codes: 0 success, 1 failed validation or failed --check, 2 unusable
input (missing/malformed config or model file).  Outputs are deterministic:
same config + seed produces byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import performance
from .dynamics import build_augmented
from .harness import SimulationConfig, alarm_report, monte_carlo_costs, run_paired
from .numerics import DareDivergedError, InstabilityError
from .pipeline import kalman_design, lqg_design, make_detector
from .plant import ModelFormatError, bundled_model_path, load_model, model_hash, validate
from .synthesis import (
    AttackObjective,
    CertificateError,
    constant_objective,
    optimal_cost,
    save_policy,
    steady_prior,
    synthesize,
)


class ConfigError(ValueError):
    pass


def _fmt(x):
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return f"{x:.17g}"


def load_config(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict) or "model" not in doc:
        raise ConfigError(f"{path}: config must be an object with a 'model' entry")
    return doc


def resolve_model(cfg, config_dir="."):
    ref = cfg["model"]
    candidates = [ref, os.path.join(config_dir, ref)]
    for cand in candidates:
        if os.path.isfile(cand):
            return load_model(cand)
    bundled = bundled_model_path(ref)
    if os.path.isfile(bundled):
        return load_model(bundled)
    raise ConfigError(f"model {ref!r}: no such file and no bundled model of that name")


def _weight_matrix(spec, dim, Sigma_nu=None, what="weight"):
    if isinstance(spec, str):
        if spec == "sigma_nu_inverse":
            if Sigma_nu is None:
                raise ConfigError(f"{what}: 'sigma_nu_inverse' is only valid for R")
            return np.linalg.inv(Sigma_nu)
        raise ConfigError(f"{what}: unknown keyword {spec!r}")
    arr = np.asarray(spec, dtype=float)
    if arr.ndim == 0:
        return float(arr) * np.eye(dim)
    if arr.ndim == 1:
        if arr.shape[0] != dim:
            raise ConfigError(f"{what}: diagonal has length {arr.shape[0]}, expected {dim}")
        return np.diag(arr)
    if arr.shape != (dim, dim):
        raise ConfigError(f"{what}: matrix has shape {arr.shape}, expected ({dim}, {dim})")
    return arr


def build_objective(cfg, model, Sigma_nu, alpha=None):
    try:
        spec = cfg["objective"]
        Q = _weight_matrix(spec["Q"], model.n, what="objective.Q")
        R = _weight_matrix(spec["R"], model.p, Sigma_nu=Sigma_nu, what="objective.R")
        x_star = np.asarray(spec["x_star"], dtype=float)
        N = int(spec["horizon"])
        alpha = float(spec["alpha"]) if alpha is None else float(alpha)
    except KeyError as exc:
        raise ConfigError(f"config objective section is missing {exc}") from exc
    if x_star.shape != (model.n,):
        raise ConfigError(f"objective.x_star must have length {model.n}")
    try:
        return constant_objective(Q, R, x_star=x_star, N=N, alpha=alpha)
    except ValueError as exc:
        raise ConfigError(f"objective: {exc}") from exc


def sim_config(cfg, seed_override=None):
    sim = cfg.get("simulation", {})
    seed = sim.get("master_seed", 0) if seed_override is None else seed_override
    return SimulationConfig(
        burn_in=int(sim.get("burn_in", 200)),
        horizon=int(cfg.get("objective", {}).get("horizon", 200)),
        master_seed=int(seed),
        runs=int(sim.get("runs", 200)),
    )


def design_loop(cfg, model):
    lqg = cfg.get("lqg", {})
    Qc = _weight_matrix(lqg["Q"], model.n, what="lqg.Q") if "Q" in lqg else None
    Rc = _weight_matrix(lqg["R"], model.m, what="lqg.R") if "R" in lqg else None
    fg = kalman_design(model)
    cg = lqg_design(model, Q=Qc, R=Rc)
    return fg, cg


def write_trajectory_csv(traj, model, path):
    n, m, s = model.n, model.m, model.s
    header = (["t"] + [f"x{i}" for i in range(n)] + [f"x_nom{i}" for i in range(n)]
              + [f"u{i}" for i in range(m)] + [f"e{i}" for i in range(s)]
              + ["g_sys", "g_nom", "alarm_sys", "alarm_nom", "nu_err"])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, t in enumerate(traj.t):
            row = [str(int(t))]
            row += [_fmt(v) for v in traj.x[i]]
            row += [_fmt(v) for v in traj.x_nom[i]]
            row += [_fmt(v) for v in traj.u[i]]
            row += [_fmt(v) for v in traj.e[i]]
            row += [_fmt(traj.g_sys[i]), _fmt(traj.g_nom[i]),
                    str(int(traj.alarm_sys[i])), str(int(traj.alarm_nom[i])),
                    _fmt(traj.nu_err[i])]
            writer.writerow(row)


def _dump_json(doc, path):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def cmd_validate(args):
    cfg = load_config(args.config)
    model = resolve_model(cfg, os.path.dirname(args.config) or ".")
    report = validate(model)
    print(f"model {model.name}: n={model.n} m={model.m} p={model.p} s={model.s}")
    for flag in ("observable", "controllable", "attack_injective", "noise_pd"):
        print(f"  {flag}: {'ok' if getattr(report, flag) else 'FAIL'}")
    for msg in report.messages:
        print(f"  ! {msg}")
    return 0 if report.ok else 1


def _prepare(args):
    cfg = load_config(args.config)
    model = resolve_model(cfg, os.path.dirname(args.config) or ".")
    report = validate(model)
    if not report.ok:
        print("model fails validation: " + "; ".join(report.messages), file=sys.stderr)
        raise SystemExit(1)
    fg, cg = design_loop(cfg, model)
    out_dir = args.out or cfg.get("output_dir", "out")
    os.makedirs(out_dir, exist_ok=True)
    return cfg, model, fg, cg, out_dir


def cmd_attack(args):
    cfg, model, fg, cg, out_dir = _prepare(args)
    obj = build_objective(cfg, model, fg.Sigma_nu)
    aug = build_augmented(model, fg, cg)
    mhash = model_hash(model)
    policy, certs = synthesize(aug, obj, model_hash=mhash)
    prior = steady_prior(model, fg, cg, aug, obj.x_star)
    J_star = optimal_cost(aug, obj, certs, prior)
    rep, _ = performance.evaluate_costs(aug, obj, policy, prior)

    scfg = sim_config(cfg, args.seed)
    det = make_detector(model.p, cfg.get("detector", {}).get("false_alarm_prob", 0.05))
    traj = run_paired(model, fg, cg, policy, scfg, run_index=0, detector=det, obj=obj)
    emp = monte_carlo_costs(model, fg, cg, policy, obj, scfg)
    alarms = alarm_report(traj, det)

    policy_path = os.path.join(out_dir, "policy.json")
    traj_path = os.path.join(out_dir, "trajectory.csv")
    summary_path = os.path.join(out_dir, "summary.json")
    save_policy(policy, policy_path)
    write_trajectory_csv(traj, model, traj_path)

    sl = traj.attack_slice
    summary = {
        "model": model.name,
        "model_hash": mhash,
        "alpha": obj.alpha,
        "horizon": obj.N,
        "master_seed": scfg.master_seed,
        "runs": scfg.runs,
        "analytic": {"J_star": J_star, "J_d": rep.J_d, "J_c": rep.J_c},
        "empirical": {
            "J_c_mean": emp.mean_control, "J_c_stderr": emp.stderr_control,
            "J_d_mean": emp.mean_detection, "J_d_stderr": emp.stderr_detection,
        },
        "alarms": {"attacked_rate": alarms.attacked_rate,
                   "nominal_rate": alarms.nominal_rate,
                   "threshold": alarms.threshold},
        "max_nu_err": float(traj.nu_err[sl].max()),
    }
    _dump_json(summary, summary_path)
    for path in (policy_path, traj_path, summary_path):
        print(f"wrote {path}")
    print(f"J* = {J_star:.6g}  (J_d = {rep.J_d:.6g}, J_c = {rep.J_c:.6g})")
    print(f"empirical J_d = {emp.mean_detection:.6g} ± {emp.stderr_detection:.3g}, "
          f"J_c = {emp.mean_control:.6g} ± {emp.stderr_control:.3g} over {scfg.runs} runs")

    if args.check:
        problems = []
        if traj.nu_err[sl].max() > 1e-8:
            problems.append(f"attacker/nominal innovation gap {traj.nu_err[sl].max():.3e}")
        eps_gap = np.abs(traj.eps_offset[sl] - (traj.nu_sys[sl] - traj.nu_nom[sl])).max()
        if eps_gap > 1e-8:
            problems.append(f"offset-system residual mismatch {eps_gap:.3e}")
        scal = abs(J_star - (obj.alpha * rep.J_c + rep.J_d)) / abs(J_star)
        if scal > 1e-8:
            problems.append(f"scalarization identity off by {scal:.3e}")
        for name, ana, mean, se in (("J_c", rep.J_c, emp.mean_control, emp.stderr_control),
                                    ("J_d", rep.J_d, emp.mean_detection, emp.stderr_detection)):
            if se > 0 and abs(ana - mean) > 5 * se:
                problems.append(f"analytic {name} {ana:.6g} vs empirical "
                                f"{mean:.6g} ± {se:.3g} (>5 stderr)")
        if problems:
            for msg in problems:
                print(f"check FAILED: {msg}", file=sys.stderr)
            return 1
        print("all checks passed")
    return 0


def cmd_sweep(args):
    cfg, model, fg, cg, out_dir = _prepare(args)
    aug = build_augmented(model, fg, cg)
    sweep_cfg = cfg.get("sweep", {})
    if "alphas" in sweep_cfg:
        alphas = [float(a) for a in sweep_cfg["alphas"]]
    else:
        alphas = performance.default_alphas(
            count=int(sweep_cfg.get("count", 25)),
            lo=float(sweep_cfg.get("lo", 1e-6)),
            hi=float(sweep_cfg.get("hi", 1e6)))
    base = build_objective(cfg, model, fg.Sigma_nu, alpha=1.0)
    prior = steady_prior(model, fg, cg, aug, base.x_star)

    def obj_for(alpha):
        return AttackObjective(Q=base.Q, R=base.R, x_star=base.x_star,
                               N=base.N, alpha=alpha)

    reports = performance.alpha_sweep(aug, obj_for, alphas, prior)
    sweep_path = os.path.join(out_dir, "sweep.csv")
    performance.write_sweep_csv(reports, sweep_path)
    print(f"wrote {sweep_path} ({len(reports)} rows)")
    if args.check:
        problems = performance.check_sweep(reports)
        if problems:
            for msg in problems:
                print(f"check FAILED: {msg}", file=sys.stderr)
            return 1
        print("all checks passed")
    return 0


def cmd_baseline(args):
    cfg, model, fg, cg, out_dir = _prepare(args)
    steps = int(cfg.get("baseline", {}).get("steps", 100_000))
    det = make_detector(model.p, cfg.get("detector", {}).get("false_alarm_prob", 0.05))
    sim = cfg.get("simulation", {})
    seed = sim.get("master_seed", 0) if args.seed is None else args.seed
    scfg = SimulationConfig(burn_in=int(sim.get("burn_in", 200)), horizon=steps,
                            master_seed=int(seed), runs=1)
    traj = run_paired(model, fg, cg, None, scfg, run_index=0, detector=det)
    sl = traj.attack_slice
    g = traj.g_sys[sl]
    alarm_rate = float(np.mean(g > det.threshold))
    summary = {
        "model": model.name,
        "steps": len(g),
        "master_seed": scfg.master_seed,
        "mean_statistic": float(g.mean()),
        "expected_mean": float(model.p),
        "alarm_rate": alarm_rate,
        "false_alarm_prob": det.false_alarm_prob,
        "threshold": det.threshold,
    }
    path = os.path.join(out_dir, "baseline.json")
    _dump_json(summary, path)
    print(f"wrote {path}")
    print(f"mean g = {g.mean():.4f} (expected {model.p}), "
          f"alarm rate = {alarm_rate:.4f} (target {det.false_alarm_prob})")
    if args.check:
        se = math.sqrt(2.0 * model.p / len(g))
        band = 4.0 * math.sqrt(det.false_alarm_prob * (1 - det.false_alarm_prob) / len(g))
        problems = []
        if abs(g.mean() - model.p) > 4 * se:
            problems.append(f"mean statistic {g.mean():.4f} outside 4 stderr of {model.p}")
        if abs(alarm_rate - det.false_alarm_prob) > band:
            problems.append(f"alarm rate {alarm_rate:.4f} outside 4-sigma band")
        if problems:
            for msg in problems:
                print(f"check FAILED: {msg}", file=sys.stderr)
            return 1
        print("all checks passed")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="cpsattack",
        description="Optimal stealthy integrity attacks on LQG control loops")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("validate", cmd_validate), ("attack", cmd_attack),
                     ("sweep", cmd_sweep), ("baseline", cmd_baseline)):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON experiment config")
        if name != "validate":
            sp.add_argument("--seed", type=int, default=None,
                            help="override simulation.master_seed")
            sp.add_argument("--out", default=None, help="override output directory")
            sp.add_argument("--check", action="store_true",
                            help="run built-in consistency checks; exit 1 on failure")
        sp.set_defaults(func=fn)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ModelFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CertificateError, DareDivergedError, InstabilityError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
