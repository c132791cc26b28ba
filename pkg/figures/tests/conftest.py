import csv

import numpy as np
import pytest

# Matches the simulator's default false-alarm rate (chi-square, q=0.05, p=2);
# the builders below flag alarms against it so threshold inference has both
# quiet and fired rows to work with.
THRESHOLD = 5.991464547107979


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _trajectory(path, n=2, burn=4, horizon=10, coincide=False):
    """Handcrafted trajectory CSV in the simulator's schema.

    The nominal statistic stays well under the threshold; the attacked one
    climbs through it after onset, so several alarm flags fire.  With
    ``coincide=True`` the attacked columns copy the nominal ones exactly
    (the zero-policy case) and nothing fires.
    """
    header = (["t"]
              + [f"x{i}" for i in range(n)]
              + [f"x_nom{i}" for i in range(n)]
              + ["u0"]
              + [f"e{j}" for j in range(n)]
              + ["g_sys", "g_nom", "alarm_sys", "alarm_nom", "nu_err"])
    rows = []
    for t in range(-burn, horizon + 1):
        x = [np.sin(0.3 * t + i) + (0.2 * t if t >= 0 else 0.0) for i in range(n)]
        if coincide or t < 0:
            x_nom = list(x)
        else:
            x_nom = [v - 0.1 * t for v in x]
        g_nom = 1.5 + np.cos(0.5 * t)
        g_sys = g_nom if (coincide or t < 0) else g_nom + 1.2 * t
        e = [0.0] * n if (coincide or t < 0) else [0.05 * (t + 1)] * n
        vals = x + x_nom + [0.1] + e
        rows.append([str(t)] + [f"{v:.17g}" for v in vals]
                    + [f"{g_sys:.17g}", f"{g_nom:.17g}",
                       str(int(g_sys > THRESHOLD)),
                       str(int(g_nom > THRESHOLD)), "0"])
    _write(path, header, rows)
    return str(path)


def _sweep(path, alphas=(0.1, 1.0, 10.0), floor_d=5.0, floor_c=7.0,
           unconverged=(), sentinels=True):
    """Handcrafted sweep CSV: sentinel rows bracket a small finite grid."""
    header = ["alpha", "J_d", "J_c", "J_star", "converged"]
    rows = []
    if sentinels:
        rows.append(["0", f"{floor_d:.17g}", "123", "nan", "true"])
    for k, a in enumerate(alphas):
        jd = floor_d + 1.0 + 2.0 * k
        jc = floor_c + 5.0 - 1.5 * k
        flag = "false" if a in unconverged else "true"
        rows.append([f"{a:.17g}", f"{jd:.17g}", f"{jc:.17g}",
                     f"{a * jc + jd:.17g}", flag])
    if sentinels:
        rows.append(["inf", "456", f"{floor_c:.17g}", "nan", "true"])
    _write(path, header, rows)
    return str(path)


@pytest.fixture
def make_trajectory(tmp_path):
    def build(name="trajectory.csv", **kw):
        return _trajectory(tmp_path / name, **kw)
    return build


@pytest.fixture
def make_sweep(tmp_path):
    def build(name="sweep.csv", **kw):
        return _sweep(tmp_path / name, **kw)
    return build
